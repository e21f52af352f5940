"""Evaluation: mIoU over heatmaps, aggregate report, and path plots."""
from __future__ import annotations

import base64
import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ValidationError
from .fusion import SafetyHeatmap
from .worlds import World

REPORT_SCHEMA_VERSION = 1

# Canonical column order in every rendered table.
MODE_ORDER = ("default", "dovesei", "peace")

ROW_SUCCESS = "Total Successful SLZ selections"
ROW_DISTANCE = "Average Horizontal Distance (m)"
ROW_TIME = "Average Time Spent (s)"


def binarize(heatmap, tau: float) -> np.ndarray:
    """Threshold a heatmap (or float grid) at tau; >= tau counts as safe."""
    if not 0.0 < tau < 1.0:
        raise ValidationError(f"tau must be in (0, 1), got {tau}")
    values = heatmap.values if isinstance(heatmap, SafetyHeatmap) else np.asarray(heatmap)
    return values >= tau


def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union; defined as 1.0 when both masks are empty."""
    if pred.shape != gt.shape:
        raise ValidationError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    p = pred.astype(bool)
    g = gt.astype(bool)
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def miou(pairs, tau: float = 0.5) -> float:
    """Unweighted mean IoU over (heatmap, ground-truth mask) pairs.

    Uses exact summation, so the result is independent of pair order."""
    pairs = list(pairs)
    if not pairs:
        raise ValidationError("miou needs at least one pair")
    return math.fsum(iou(binarize(hm, tau), gt) for hm, gt in pairs) / len(pairs)


def blur_augment(rgb: np.ndarray, seed: int, sigma_px: float = 1.5,
                 noise_std: float = 2.0) -> np.ndarray:
    """Slight blur + seeded pixel noise, approximating high-altitude capture.

    Parameters are project defaults, declared here rather than recovered
    from any reference imagery.
    """
    blurred = np.stack([
        ndimage.gaussian_filter(rgb[..., c].astype(np.float64), sigma_px)
        for c in range(rgb.shape[-1])
    ], axis=-1)
    noise = np.random.default_rng(seed).normal(0.0, noise_std, rgb.shape)
    return np.clip(blurred + noise, 0, 255).astype(np.uint8)


# -- aggregate report ----------------------------------------------------------

@dataclass(frozen=True)
class AggregateReport:
    modes: dict[str, dict]                    # mode -> {successes, episodes, ...}
    miou_sections: dict[str, dict[str, float]]   # dataset -> mode -> mIoU
    seed: int | None = None

    def validate(self) -> None:
        for mode, row in self.modes.items():
            if row["successes"] > row["episodes"]:
                raise ValidationError(f"{mode}: successes exceed episode count")


def ordered_modes(modes) -> list[str]:
    known = [m for m in MODE_ORDER if m in modes]
    extra = [m for m in modes if m not in MODE_ORDER]
    return known + sorted(extra)


def build_report(matrix_aggregates: dict, miou_sections: dict[str, dict[str, float]] | None,
                 seed: int | None = None) -> AggregateReport:
    modes = {}
    for mode, agg in matrix_aggregates.items():
        if hasattr(agg, "successes"):
            modes[mode] = {
                "episodes": agg.episodes,
                "successes": agg.successes,
                "mean_distance_m": agg.mean_distance_m,
                "mean_time_s": agg.mean_time_s,
            }
        else:
            modes[mode] = dict(agg)
    report = AggregateReport(modes=modes, miou_sections=dict(miou_sections or {}), seed=seed)
    report.validate()
    return report


def render_table(report: AggregateReport) -> str:
    """Fixed-layout text table; columns ordered default, dovesei, peace."""
    cols = ordered_modes(report.modes)
    label_w = max(len(ROW_SUCCESS), len(ROW_DISTANCE), len(ROW_TIME),
                  *(len(f"mIoU ({name})") for name in report.miou_sections or [""]))
    col_w = max(10, *(len(c) for c in cols)) if cols else 10

    def fmt_row(label: str, values: list[str]) -> str:
        cells = "".join(v.rjust(col_w + 2) for v in values)
        return f"{label.ljust(label_w)}{cells}"

    lines = [fmt_row("", list(cols))]
    lines.append(fmt_row(ROW_SUCCESS, [str(report.modes[c]["successes"]) for c in cols]))
    lines.append(fmt_row(ROW_DISTANCE,
                         [f"{report.modes[c]['mean_distance_m']:.2f}" for c in cols]))
    lines.append(fmt_row(ROW_TIME,
                         [f"{report.modes[c]['mean_time_s']:.2f}" for c in cols]))
    for dataset in sorted(report.miou_sections):
        section = report.miou_sections[dataset]
        lines.append(fmt_row(
            f"mIoU ({dataset})",
            [f"{section[c]:.4f}" if c in section else "-" for c in cols]))
    return "\n".join(lines) + "\n"


def report_json(report: AggregateReport) -> str:
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "seed": report.seed,
        "modes": {m: report.modes[m] for m in ordered_modes(report.modes)},
        "miou": report.miou_sections,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# -- path plotting ----------------------------------------------------------------

PATH_COLORS = {"default": "#d95f02", "dovesei": "#7570b3", "peace": "#1b9e77"}


def _star_points(cx: float, cy: float, r: float) -> str:
    pts = []
    for i in range(10):
        radius = r if i % 2 == 0 else 0.4 * r
        angle = -np.pi / 2 + i * np.pi / 5
        pts.append(f"{cx + radius * np.cos(angle):.2f},{cy + radius * np.sin(angle):.2f}")
    return " ".join(pts)


def ortho_png_bytes(world: World) -> bytes:
    """The world's ortho image as PNG bytes, for embedding into plots."""
    import io

    from PIL import Image
    buf = io.BytesIO()
    Image.fromarray(world.ortho, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def svg_path_plot(world: World, mode_paths: dict[str, list[list[tuple[float, float]]]],
                  png_bytes: bytes | None = None, desc: str | None = None) -> str:
    """Trajectories over the world image; a dot marks the start of each path
    and a star marks where it ended. ``mode_paths`` maps a mode name to a
    list of paths, each a list of (x, y) in meters."""
    h, w = world.labels.shape
    mpp = world.meters_per_pixel
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">'
    ]
    if desc:
        parts.append(f"<desc>{desc}</desc>")
    if png_bytes is not None:
        b64 = base64.b64encode(png_bytes).decode("ascii")
        parts.append(
            f'<image href="data:image/png;base64,{b64}" width="{w}" height="{h}"/>')
    star_r = max(4.0, 0.02 * min(w, h))
    for mode in ordered_modes(mode_paths):
        color = PATH_COLORS.get(mode, "#e7298a")
        for path in mode_paths[mode]:
            if not path:
                continue
            pts = " ".join(f"{x / mpp:.2f},{y / mpp:.2f}" for x, y in path)
            x0, y0 = path[0]
            x1, y1 = path[-1]
            parts.append(
                f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            parts.append(
                f'<circle cx="{x0 / mpp:.2f}" cy="{y0 / mpp:.2f}" r="{star_r * 0.45:.2f}" '
                f'fill="{color}"/>')
            parts.append(
                f'<polygon points="{_star_points(x1 / mpp, y1 / mpp, star_r)}" '
                f'fill="{color}" stroke="white" stroke-width="0.5"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def read_trace(path) -> list[dict]:
    """Ingest a flight trace CSV (t,x,y,altitude,state,heatmap_center)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return [
            {
                "t": float(row["t"]),
                "x": float(row["x"]),
                "y": float(row["y"]),
                "altitude": float(row["altitude"]),
                "state": row["state"],
                "heatmap_center": float(row["heatmap_center"]),
            }
            for row in csv.DictReader(fh)
        ]


def read_events(path) -> list[dict]:
    """Ingest a per-step event log (one JSON record per line)."""
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
