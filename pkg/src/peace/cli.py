"""Command-line entry point.

Subcommands: prompt, segment, fly, matrix, eval, gen-world.
Exit codes: 0 ok, 2 input/config error, 3 backend error. Landing success is
data in the output files, never an exit status.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import metrics
from .backends import create_backend
from .config import RunConfig, config_to_dict, load_run_config
from .errors import BackendError, PeaceError, ValidationError
from .fusion import dump_heatmap, fuse_pipeline
from .imaging import load_image
from .prompts import generate_prompt_set
from .sim import UavPose, camera_view, run_episode, run_matrix
from .vocab import default_vocab_path, load_targets, load_vocabulary
from .worlds import PRESETS, domain_shift_suite, load_world, save_world

MODEL_DIR_ENV = "PEACE_MODEL_DIR"


def _write_text_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _load_stack(cfg: RunConfig):
    backend = create_backend(cfg.backend.descriptor())
    vocab_path = cfg.vocab_path or default_vocab_path()
    vocab = load_vocabulary(vocab_path, backend)
    targets = load_targets(vocab_path)
    return backend, vocab, targets


def _input_frame(path: str, cfg: RunConfig):
    """An input is either a world manifest (rendered at the start altitude
    over the world center) or a plain raster image."""
    if path.endswith(".json"):
        world = load_world(path)
        pose = UavPose(world.width_m / 2, world.height_m / 2,
                       cfg.policy.safe_altitude_m, 0.0)
        return camera_view(world, pose, cfg.sim.fov_deg, cfg.sim.camera_resolution), world
    try:
        rgb = load_image(path)
    except Exception as exc:
        raise ValidationError(f"unreadable image {path}: {exc}") from exc
    from .imaging import Frame
    return Frame(rgb=rgb, key=os.path.basename(path)), None


def _config_from_args(args) -> RunConfig:
    overrides: dict = {}
    if getattr(args, "seed", None) is not None:
        overrides["backend.seed"] = args.seed
    if getattr(args, "mode", None) is not None:
        overrides["prompt.mode"] = args.mode
    if getattr(args, "vocab", None) is not None:
        overrides["vocab_path"] = args.vocab
    if getattr(args, "model_dir", None) is not None:
        overrides["backend.model_dir"] = args.model_dir
    elif os.environ.get(MODEL_DIR_ENV):
        overrides.setdefault("backend.model_dir", os.environ[MODEL_DIR_ENV])
    cfg = load_run_config(getattr(args, "config", None), overrides)
    return cfg


# -- subcommands ---------------------------------------------------------------

def cmd_prompt(args) -> int:
    cfg = _config_from_args(args)
    backend, vocab, targets = _load_stack(cfg)
    frame, _ = _input_frame(args.input, cfg)
    prompt_set = generate_prompt_set(
        frame, targets, vocab, backend, frame_index=0,
        mode=cfg.prompt.mode, env_top_k=cfg.prompt.env_top_k,
        caption_fusion=cfg.prompt.caption_fusion)
    print(f"# mode={prompt_set.mode} X={prompt_set.x_count} Y={prompt_set.y_count} "
          f"seed={cfg.backend.seed}")
    if prompt_set.selection is not None:
        for role, pairs in prompt_set.selection.entries.items():
            chosen = ", ".join(f"{w} ({s:+.4f})" for w, s in pairs)
            print(f"# {role}: {chosen}")
    for i, p in enumerate(prompt_set.prompts):
        print(f"[{i:2d}] {p.polarity[:3]} {p.text}")
    return 0


def cmd_segment(args) -> int:
    cfg = _config_from_args(args)
    backend, vocab, targets = _load_stack(cfg)
    frame, _ = _input_frame(args.input, cfg)
    prompt_set = generate_prompt_set(
        frame, targets, vocab, backend, frame_index=0,
        mode=cfg.prompt.mode, env_top_k=cfg.prompt.env_top_k,
        caption_fusion=cfg.prompt.caption_fusion)
    heatmap = fuse_pipeline(frame, prompt_set, backend, cfg.sim.collapse_mode)
    os.makedirs(args.out, exist_ok=True)
    dump_heatmap(
        heatmap,
        os.path.join(args.out, "heatmap.pgm"),
        os.path.join(args.out, "heatmap.json"),
        extra={"seed": cfg.backend.seed, "input": os.path.basename(args.input)})
    print(os.path.join(args.out, "heatmap.pgm"))
    return 0


def _episode_outputs(out_dir, name, world, result, cfg):
    plots = {result.mode: [[(p.x, p.y) for p in result.path]]}
    svg = metrics.svg_path_plot(world, plots,
                                png_bytes=metrics.ortho_png_bytes(world),
                                desc=f"world={world.name} seed={result.seed}")
    _write_text_atomic(os.path.join(out_dir, f"{name}_path.svg"), svg)
    doc = {
        "seed": result.seed,
        "world": result.world,
        "mode": result.mode,
        "success": result.success,
        "reason": result.reason,
        "elapsed_s": result.elapsed_s,
        "horizontal_distance_m": result.horizontal_distance_m,
        "final_state": result.final_state,
        "prompts_used": [list(p) for p in result.prompts_used],
        "config": config_to_dict(cfg),
    }
    _write_text_atomic(os.path.join(out_dir, f"{name}_result.json"),
                       json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_fly(args) -> int:
    cfg = _config_from_args(args)
    backend, vocab, targets = _load_stack(cfg)
    world = load_world(args.world)
    os.makedirs(args.out_dir, exist_ok=True)
    seed = args.seed if args.seed is not None else cfg.backend.seed

    if args.start:
        sx, sy = args.start.split(",")
        runs = [(seed, (float(sx), float(sy)))]
    elif args.starts > 1:
        from .sim import sample_starts
        runs = [(seed + i, s) for i, s in
                enumerate(sample_starts(world, args.starts, seed))]
    else:
        runs = [(seed, None)]

    for i, (ep_seed, start) in enumerate(runs):
        name = "fly" if len(runs) == 1 else f"fly_{i:03d}"
        with open(os.path.join(args.out_dir, f"{name}_trace.csv" if len(runs) > 1
                               else "trace.csv"), "w", encoding="utf-8") as trace, \
                open(os.path.join(args.out_dir, f"{name}_events.jsonl" if len(runs) > 1
                     else "events.jsonl"), "w", encoding="utf-8") as events:
            result = run_episode(
                world, backend, vocab, targets,
                cfg.prompt, cfg.policy, cfg.sim,
                seed=ep_seed, start_xy=start,
                event_sink=events, trace_sink=trace)
        _episode_outputs(args.out_dir, name, world, result, cfg)
        print(f"{result.reason} success={result.success} elapsed={result.elapsed_s:.1f}s "
              f"distance={result.horizontal_distance_m:.1f}m")
    return 0


def cmd_matrix(args) -> int:
    cfg = _config_from_args(args)
    backend, vocab, targets = _load_stack(cfg)
    worlds = [load_world(p) for p in args.world]
    modes = args.modes.split(",")
    seed = args.seed if args.seed is not None else cfg.backend.seed
    os.makedirs(args.out_dir, exist_ok=True)
    result = run_matrix(
        worlds, modes, args.starts, seed, backend, vocab, targets,
        cfg.prompt, cfg.policy, cfg.sim,
        trace_dir=os.path.join(args.out_dir, "episodes"))
    episodes_doc = [
        {
            "world": e.world, "mode": e.mode, "seed": e.seed,
            "success": e.success, "reason": e.reason,
            "elapsed_s": e.elapsed_s, "horizontal_distance_m": e.horizontal_distance_m,
            "path": [[p.x, p.y] for p in e.path],
        }
        for e in result.episodes
    ]
    matrix_doc = {
        "seed": seed,
        "n_starts": args.starts,
        "modes": modes,
        "worlds": {w.name: os.path.abspath(p) for w, p in zip(worlds, args.world)},
        "aggregates": {
            m: {
                "episodes": a.episodes, "successes": a.successes,
                "mean_distance_m": a.mean_distance_m, "mean_time_s": a.mean_time_s,
            } for m, a in result.aggregates.items()
        },
        "episodes": episodes_doc,
        "config": config_to_dict(cfg),
    }
    _write_text_atomic(os.path.join(args.out_dir, "matrix.json"),
                       json.dumps(matrix_doc, indent=2, sort_keys=True) + "\n")

    report = metrics.build_report(result.aggregates, None, seed=seed)
    _write_text_atomic(os.path.join(args.out_dir, "report.json"), metrics.report_json(report))
    _write_text_atomic(os.path.join(args.out_dir, "table.txt"), metrics.render_table(report))
    for world in worlds:
        plots = {
            mode: [[(p.x, p.y) for p in e.path] for e in result.episodes
                   if e.world == world.name and e.mode == mode]
            for mode in modes
        }
        svg = metrics.svg_path_plot(world, plots,
                                    png_bytes=metrics.ortho_png_bytes(world),
                                    desc=f"world={world.name} seed={seed}")
        _write_text_atomic(os.path.join(args.out_dir, f"paths_{world.name}.svg"), svg)
    print(metrics.render_table(report), end="")
    return 0


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    try:
        matrix_doc = json.load(open(os.path.join(args.matrix_dir, "matrix.json"),
                                    encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read matrix results: {exc}") from exc

    miou_sections: dict[str, dict[str, float]] = {}
    if args.miou_world:
        backend, vocab, targets = _load_stack(cfg)
        modes = matrix_doc["modes"]
        for manifest in args.miou_world:
            world = load_world(manifest)
            pose = UavPose(world.width_m / 2, world.height_m / 2,
                           cfg.policy.safe_altitude_m, 0.0)
            frame = camera_view(world, pose, cfg.sim.fov_deg, cfg.sim.camera_resolution)
            from .imaging import Frame, nearest_resize
            blurred = Frame(
                rgb=metrics.blur_augment(frame.rgb, seed=matrix_doc["seed"]),
                labels=frame.labels, tags=frame.tags,
                class_words=frame.class_words, key=frame.key + "|miou",
                oob_fraction=frame.oob_fraction)
            res = cfg.backend.seg_resolution
            # ground truth is what the camera saw, at heatmap resolution
            safe_ids = [c.id for c in world.classes.values() if c.safe]
            gt = nearest_resize(
                np.isin(blurred.labels, safe_ids), res[1], res[0]).astype(bool)
            section = {}
            for mode in modes:
                prompt_set = generate_prompt_set(
                    blurred, targets, vocab, backend, 0, mode,
                    cfg.prompt.env_top_k, cfg.prompt.caption_fusion)
                heatmap = fuse_pipeline(blurred, prompt_set, backend, cfg.sim.collapse_mode)
                section[mode] = metrics.miou([(heatmap, gt)], cfg.policy.tau_safe)
            miou_sections[world.name] = section

    report = metrics.build_report(matrix_doc["aggregates"], miou_sections,
                                  seed=matrix_doc["seed"])
    os.makedirs(args.out_dir, exist_ok=True)
    _write_text_atomic(os.path.join(args.out_dir, "report.json"), metrics.report_json(report))
    _write_text_atomic(os.path.join(args.out_dir, "table.txt"), metrics.render_table(report))
    print(metrics.render_table(report), end="")
    return 0


def cmd_gen_world(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    if args.preset == "shift_suite":
        manifests = []
        for world in domain_shift_suite(args.size, args.mpp):
            manifests.append(save_world(world, os.path.join(args.out, world.name)))
        _write_text_atomic(os.path.join(args.out, "suite.json"),
                           json.dumps({"worlds": manifests}, indent=2) + "\n")
        print(os.path.join(args.out, "suite.json"))
        return 0
    if args.preset not in PRESETS:
        raise ValidationError(
            f"unknown preset {args.preset!r}; choose from {sorted(PRESETS) + ['shift_suite']}")
    world = PRESETS[args.preset](args.size, args.mpp)
    if args.tag:
        tags = dict(t.split("=", 1) for t in args.tag)
        from dataclasses import replace
        world = replace(world, tags=tags)
    manifest = save_world(world, args.out)
    print(manifest)
    return 0


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peace",
        description="Prompt-engineered open-vocabulary safe-landing toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_mode=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="deterministic seed")
        p.add_argument("--vocab", help="vocabulary/targets JSON file")
        p.add_argument("--model-dir", help=f"portable-graph assets (or ${MODEL_DIR_ENV})")
        if with_mode:
            p.add_argument("--mode", choices=["default", "dovesei", "peace"],
                           help="prompt mode")

    p = sub.add_parser("prompt", help="print engineered prompts for an image")
    p.add_argument("input", help="image file or world manifest JSON")
    common(p)
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("segment", help="write the fused safety heatmap")
    p.add_argument("input", help="image file or world manifest JSON")
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("fly", help="run landing episode(s) in one mode")
    p.add_argument("--world", required=True, help="world manifest JSON")
    p.add_argument("--start", help="explicit start position 'x,y' in meters")
    p.add_argument("--starts", type=int, default=1,
                   help="number of sampled start positions")
    p.add_argument("--out-dir", required=True)
    common(p)
    p.set_defaults(func=cmd_fly)

    p = sub.add_parser("matrix", help="paired multi-mode experiment")
    p.add_argument("--world", action="append", required=True,
                   help="world manifest (repeatable)")
    p.add_argument("--modes", default="default,dovesei,peace")
    p.add_argument("--starts", type=int, default=5)
    p.add_argument("--out-dir", required=True)
    common(p, with_mode=False)
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("eval", help="aggregate matrix results into a report")
    p.add_argument("--matrix-dir", required=True)
    p.add_argument("--miou-world", action="append",
                   help="world manifest for an mIoU section (repeatable)")
    p.add_argument("--out-dir", required=True)
    common(p, with_mode=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen-world", help="generate a synthetic world")
    p.add_argument("--preset", required=True,
                   help=f"{sorted(PRESETS)} or shift_suite")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=float, default=240.0, help="side length in meters")
    p.add_argument("--mpp", type=float, default=1.0, help="meters per pixel")
    p.add_argument("--tag", action="append", help="planted tag role=word (repeatable)")
    p.set_defaults(func=cmd_gen_world)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 3
    except (PeaceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
