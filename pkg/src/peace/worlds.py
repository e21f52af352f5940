"""Satellite-tile worlds: ortho image + per-pixel class labels + manifest.

World files on disk are a directory with ``manifest.json``, an RGB ortho PNG
and a palette-indexed label PNG whose pixel values are class ids. A small
synthetic generator builds test worlds out of disks and rectangles of
classes; ortho colors are flat per class, which is all the deterministic
mock backend needs.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .imaging import load_image, load_label_png, save_label_png, save_png

CLASS_COLORS = {
    "grass": (106, 168, 79),
    "open-field": (147, 196, 125),
    "sidewalk": (204, 204, 204),
    "dirt": (160, 126, 84),
    "garden": (56, 118, 29),
    "vegetation": (39, 78, 19),
    "building": (102, 102, 102),
    "house": (133, 94, 66),
    "road": (67, 67, 67),
    "car": (204, 65, 37),
    "water": (61, 133, 198),
    "tree": (56, 90, 38),
    "person": (224, 102, 102),
}


def _color_for(word: str) -> tuple[int, int, int]:
    if word in CLASS_COLORS:
        return CLASS_COLORS[word]
    digest = hashlib.blake2b(word.encode(), digest_size=3).digest()
    return digest[0], digest[1], digest[2]


@dataclass(frozen=True)
class ClassDef:
    id: int
    word: str
    safe: bool


@dataclass(frozen=True)
class World:
    name: str
    ortho: np.ndarray                       # (H, W, 3) uint8
    labels: np.ndarray                      # (H, W) uint8 class ids
    meters_per_pixel: float
    classes: dict[int, ClassDef]
    tags: dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        if self.meters_per_pixel <= 0:
            raise ValidationError("meters_per_pixel must be positive")
        if self.ortho.shape[:2] != self.labels.shape:
            raise ValidationError(
                f"ortho {self.ortho.shape[:2]} and labels {self.labels.shape} differ")
        present = set(np.unique(self.labels).tolist())
        missing = present - set(self.classes)
        if missing:
            raise ValidationError(f"label ids without class entries: {sorted(missing)}")

    @property
    def width_m(self) -> float:
        return self.labels.shape[1] * self.meters_per_pixel

    @property
    def height_m(self) -> float:
        return self.labels.shape[0] * self.meters_per_pixel

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return 0.0, 0.0, self.width_m, self.height_m

    def class_at(self, x_m: float, y_m: float) -> ClassDef | None:
        col = int(x_m / self.meters_per_pixel)
        row = int(y_m / self.meters_per_pixel)
        if not (0 <= row < self.labels.shape[0] and 0 <= col < self.labels.shape[1]):
            return None
        return self.classes.get(int(self.labels[row, col]))

    def safe_at(self, x_m: float, y_m: float) -> bool:
        cls = self.class_at(x_m, y_m)
        return bool(cls and cls.safe)

    def safe_mask(self) -> np.ndarray:
        safe_ids = [cid for cid, c in self.classes.items() if c.safe]
        return np.isin(self.labels, safe_ids)

    def class_words(self) -> dict[int, str]:
        return {cid: c.word for cid, c in self.classes.items()}


# -- disk I/O ----------------------------------------------------------------

def save_world(world: World, out_dir) -> str:
    os.makedirs(out_dir, exist_ok=True)
    save_png(os.path.join(out_dir, "ortho.png"), world.ortho)
    palette = {cid: _color_for(c.word) for cid, c in world.classes.items()}
    save_label_png(os.path.join(out_dir, "labels.png"), world.labels, palette)
    manifest = {
        "name": world.name,
        "meters_per_pixel": world.meters_per_pixel,
        "ortho": "ortho.png",
        "labels": "labels.png",
        "classes": [
            {"id": c.id, "word": c.word, "safe": c.safe}
            for c in sorted(world.classes.values(), key=lambda c: c.id)
        ],
        "tags": dict(sorted(world.tags.items())),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_world(manifest_path) -> World:
    base = os.path.dirname(os.path.abspath(manifest_path))
    try:
        doc = json.load(open(manifest_path, "r", encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot parse world manifest {manifest_path}: {exc}") from exc
    try:
        classes = {
            int(c["id"]): ClassDef(id=int(c["id"]), word=str(c["word"]), safe=bool(c["safe"]))
            for c in doc["classes"]
        }
        world = World(
            name=str(doc.get("name", os.path.basename(base))),
            ortho=load_image(os.path.join(base, doc["ortho"])),
            labels=load_label_png(os.path.join(base, doc["labels"])),
            meters_per_pixel=float(doc["meters_per_pixel"]),
            classes=classes,
            tags={str(k): str(v) for k, v in doc.get("tags", {}).items()},
        )
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise ValidationError(f"world manifest {manifest_path}: {exc}") from exc
    world.validate()
    return world


# -- synthetic generator -------------------------------------------------------

@dataclass(frozen=True)
class Patch:
    """A disk or axis-aligned rectangle of one class, in meters."""

    word: str
    safe: bool
    shape: str                       # "disk" | "rect"
    params: tuple[float, ...]        # disk: (cx, cy, r); rect: (x0, y0, x1, y1)


def make_world(
    name: str,
    size_m: float,
    meters_per_pixel: float,
    base_word: str,
    base_safe: bool,
    patches: tuple[Patch, ...] = (),
    tags: dict[str, str] | None = None,
) -> World:
    side = int(round(size_m / meters_per_pixel))
    words: list[tuple[str, bool]] = [(base_word, base_safe)]
    for p in patches:
        if p.word not in [w for w, _ in words]:
            words.append((p.word, p.safe))
    classes = {i: ClassDef(id=i, word=w, safe=s) for i, (w, s) in enumerate(words)}
    word_to_id = {c.word: c.id for c in classes.values()}

    labels = np.zeros((side, side), dtype=np.uint8)
    # pixel centers in meters
    coords = (np.arange(side) + 0.5) * meters_per_pixel
    xx, yy = np.meshgrid(coords, coords)
    for p in patches:
        if p.shape == "disk":
            cx, cy, r = p.params
            sel = (xx - cx) ** 2 + (yy - cy) ** 2 <= r ** 2
        elif p.shape == "rect":
            x0, y0, x1, y1 = p.params
            sel = (xx >= x0) & (xx < x1) & (yy >= y0) & (yy < y1)
        else:
            raise ValidationError(f"unknown patch shape {p.shape!r}")
        labels[sel] = word_to_id[p.word]

    ortho = np.zeros((side, side, 3), dtype=np.uint8)
    for cid, cls in classes.items():
        ortho[labels == cid] = _color_for(cls.word)

    world = World(
        name=name, ortho=ortho, labels=labels,
        meters_per_pixel=meters_per_pixel, classes=classes,
        tags=dict(tags or {}),
    )
    world.validate()
    return world


def pure_grass_world(size_m: float = 300.0, mpp: float = 1.0) -> World:
    return make_world("pure_grass", size_m, mpp, "grass", True)


def water_only_world(size_m: float = 240.0, mpp: float = 1.0) -> World:
    return make_world("water_only", size_m, mpp, "water", False)


def mixed_world(size_m: float = 240.0, mpp: float = 1.0) -> World:
    """Grass with a few unsafe obstacles; easy but not trivial."""
    s = size_m
    return make_world(
        "mixed", s, mpp, "grass", True,
        patches=(
            Patch("water", False, "disk", (0.3 * s, 0.3 * s, 0.15 * s)),
            Patch("building", False, "rect", (0.55 * s, 0.55 * s, 0.8 * s, 0.7 * s)),
            Patch("road", False, "rect", (0.0, 0.85 * s, s, 0.92 * s)),
        ),
    )


def safe_island_world(name: str, tags: dict[str, str],
                      size_m: float = 200.0, mpp: float = 1.0) -> World:
    """Mostly-unsafe tile with four grass disks; landing needs working
    segmentation, so prompt quality decides the outcome."""
    s = size_m
    r = 0.125 * s
    return make_world(
        name, s, mpp, "water", False,
        patches=tuple(
            Patch("grass", True, "disk", (fx * s, fy * s, r))
            for fx, fy in ((0.25, 0.25), (0.75, 0.75), (0.25, 0.75), (0.75, 0.25))
        ),
        tags=tags,
    )


# Tag sets for the domain-shift suite. The first group's rendering words all
# occur in the static aerial prompt; the second group's never do.
STATIC_FRIENDLY_TAGS = (
    {"resolution": "low resolution", "frame": "photo", "environment": "sunny"},
    {"resolution": "low resolution", "frame": "photo", "environment": "rainy"},
    {"resolution": "low resolution", "frame": "view", "environment": "foggy"},
)
STATIC_HOSTILE_TAGS = (
    {"resolution": "rendered", "frame": "screen", "environment": "snow"},
    {"resolution": "blurred", "frame": "image", "environment": "dark"},
    {"resolution": "grainy", "frame": "artwork", "environment": "bright"},
)


def domain_shift_suite(size_m: float = 200.0, mpp: float = 1.0) -> list[World]:
    """Tiles whose planted rendering words differ per tile; half of them are
    adversarial to any fixed prompt wording."""
    worlds = []
    for i, tags in enumerate(STATIC_FRIENDLY_TAGS):
        worlds.append(safe_island_world(f"shift_friendly_{i}", tags, size_m, mpp))
    for i, tags in enumerate(STATIC_HOSTILE_TAGS):
        worlds.append(safe_island_world(f"shift_hostile_{i}", tags, size_m, mpp))
    return worlds


PRESETS = {
    "pure_grass": pure_grass_world,
    "water_only": water_only_world,
    "mixed": mixed_world,
}
