"""Synthetic user interactions: click sampling, cortex tracing, Voronoi encoding.

A "Voronoi map" here is a per-pixel field of Euclidean distance to the nearest
click of one polarity, computed with an exact two-pass distance transform
(lower envelope of parabolas per row, then per column).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .imagecore import (
    BinaryMask,
    EmptyMaskError,
    ImageRGB,
    dilate,
    erode,
    load_image,
    load_mask,
    save_image,
    save_mask,
    subtract,
)

# Distance value used when a polarity has no clicks at all; also the truncation
# point when maps are normalized for network input.
SATURATION = 255.0

POSITIVE = "positive"
NEGATIVE = "negative"

DEFAULT_D1 = 10.0
DEFAULT_D2 = 3.0
DEFAULT_LEVELS = (1, 4, 8)
DEFAULT_N_SEEDS = 5


class InfeasibleSamplingError(RuntimeError):
    """The mask cannot host the requested seeds under the given constraints."""


class EmptyRingError(RuntimeError):
    """No cortex ring exists at the requested dilation level."""


@dataclass(frozen=True)
class Seed:
    """One user click."""

    x: int
    y: int
    polarity: str

    def __post_init__(self):
        if self.polarity not in (POSITIVE, NEGATIVE):
            raise ValueError(f"bad polarity {self.polarity!r}")


@dataclass(frozen=True)
class SeedConstraints:
    """Minimum pairwise seed distance (d1) and seed-to-boundary distance (d2)."""

    d1: float = DEFAULT_D1
    d2: float = DEFAULT_D2

    def __post_init__(self):
        if self.d1 <= 0 or self.d2 <= 0:
            raise ValueError("d1 and d2 must be positive")


@dataclass(frozen=True)
class VoronoiMap:
    """Distance-to-nearest-seed field, values shaped (height, width)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"expected (H, W) value array, got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def normalized(self) -> np.ndarray:
        """Truncate at the saturation constant and scale into [0, 1]."""
        return np.minimum(self.values, SATURATION) / SATURATION


@dataclass(frozen=True)
class CortexPath:
    """Ordered ring traversal at one dilation level.

    `points` are (x, y) tuples; `segment_starts` marks where traversal jumped
    to a new connected component (consecutive points within a segment are
    8-neighbors).
    """

    points: tuple
    level: int
    segment_starts: tuple = (0,)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class TrainingPair:
    image: ImageRGB
    pos_map: VoronoiMap
    neg_map: VoronoiMap
    label: BinaryMask
    seeds: tuple = ()

    def __post_init__(self):
        dims = {(self.image.height, self.image.width),
                (self.pos_map.height, self.pos_map.width),
                (self.neg_map.height, self.neg_map.width),
                (self.label.height, self.label.width)}
        if len(dims) != 1:
            raise ValueError(f"raster dimensions disagree: {dims}")


def _dt1d(f: np.ndarray) -> np.ndarray:
    """Exact 1-D squared-distance transform (lower envelope of parabolas)."""
    n = f.shape[0]
    d = np.empty(n)
    v = np.zeros(n, dtype=np.intp)
    z = np.empty(n + 1)
    z[0], z[1] = -np.inf, np.inf
    k = 0
    for q in range(1, n):
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2 * q - 2 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2 * q - 2 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) ** 2 + f[v[k]]
    return d


_FAR = 1e12  # stands in for infinity; keeps the envelope arithmetic finite


def distance_transform(sources: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance to the nearest True pixel of `sources`.

    Two passes of the 1-D parabola transform: columns, then rows. Pixels with
    no source anywhere come out >= sqrt(_FAR).
    """
    h, w = sources.shape
    g = np.where(sources, 0.0, _FAR)
    for x in range(w):
        g[:, x] = _dt1d(g[:, x])
    for y in range(h):
        g[y, :] = _dt1d(g[y, :])
    return np.sqrt(g)


def compute_voronoi(seeds: Sequence[Seed], width: int, height: int) -> VoronoiMap:
    """Distance field to the nearest seed; one polarity per call.

    An empty seed list yields the saturation constant everywhere, which is what
    the network sees for "no clicks of this polarity yet".
    """
    for s in seeds:
        if not (0 <= s.x < width and 0 <= s.y < height):
            raise ValueError(f"seed ({s.x}, {s.y}) outside {width}x{height} image")
    if not seeds:
        return VoronoiMap(np.full((height, width), SATURATION))
    sources = np.zeros((height, width), dtype=bool)
    for s in seeds:
        sources[s.y, s.x] = True
    return VoronoiMap(distance_transform(sources))


def boundary_pixels(mask: BinaryMask) -> np.ndarray:
    """Foreground pixels with a background 8-neighbor (image edge counts)."""
    return mask.bits & ~erode(mask, 1).bits


def boundary_distance(mask: BinaryMask) -> np.ndarray:
    """Per-pixel Euclidean distance to the nearest mask boundary pixel."""
    b = boundary_pixels(mask)
    if not b.any():
        raise EmptyMaskError("mask has no boundary (empty mask)")
    return distance_transform(b)


def sample_positive_seeds(mask: BinaryMask, n: int, c: SeedConstraints,
                          rng_seed: int) -> list[Seed]:
    """Rejection-sample n clicks strictly inside the mask.

    Every accepted pair is more than d1 apart and every click is more than d2
    from the mask boundary. Deterministic for a fixed rng_seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if mask.is_empty():
        raise EmptyMaskError("cannot sample positive seeds on an empty mask")
    dist = boundary_distance(mask)
    ys, xs = np.nonzero(mask.bits & (dist > c.d2))
    if len(ys) == 0:
        raise InfeasibleSamplingError(
            f"no interior pixel is more than d2={c.d2} from the boundary")
    rng = np.random.default_rng(rng_seed)
    # Greedy passes over freshly shuffled candidates; restarting avoids dead
    # ends where an early pick blocks every later one. Every candidate
    # considered counts against the attempt budget.
    max_attempts = 1000 * n
    attempts = 0
    while attempts < max_attempts:
        chosen: list[tuple[int, int]] = []
        for i in rng.permutation(len(ys)):
            attempts += 1
            x, y = int(xs[i]), int(ys[i])
            if all(math.hypot(x - px, y - py) > c.d1 for px, py in chosen):
                chosen.append((x, y))
                if len(chosen) == n:
                    return [Seed(px, py, POSITIVE) for px, py in chosen]
    raise InfeasibleSamplingError(
        f"could not place {n} seeds with d1={c.d1}, d2={c.d2} "
        f"after {max_attempts} placement attempts")


_NBRS = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]


def extract_cortex(mask: BinaryMask, level: int) -> CortexPath:
    """Trace the 1-pixel ring at chessboard distance `level` from the mask.

    The ring is dilate(mask, level) minus dilate(mask, level-1); it is walked
    with a 3x3 window so that consecutive path entries are 8-neighbors. Each
    connected component is walked separately and the walks are concatenated in
    discovery order.
    """
    if level < 1:
        raise ValueError("level must be >= 1")
    if mask.is_empty():
        raise EmptyMaskError("cannot extract the cortex of an empty mask")
    outer = dilate(mask, level)
    inner = dilate(mask, level - 1) if level > 1 else mask
    ring = subtract(outer, inner)
    if ring.is_empty():
        raise EmptyRingError(f"no ring exists at level {level} "
                             "(mask reaches every border)")
    h, w = ring.bits.shape
    remaining = {(int(x), int(y)) for y, x in zip(*np.nonzero(ring.bits))}

    def unvisited_neighbors(p):
        x, y = p
        return [(x + dx, y + dy) for dx, dy in _NBRS if (x + dx, y + dy) in remaining]

    points: list[tuple[int, int]] = []
    segment_starts: list[int] = []
    while remaining:
        segment_starts.append(len(points))
        cur = min(remaining, key=lambda p: (p[1], p[0]))
        remaining.discard(cur)
        points.append(cur)
        while True:
            nbrs = unvisited_neighbors(cur)
            if not nbrs:
                break
            # Warnsdorff-style: go where the fewest onward options remain,
            # preferring 4-adjacency, so corner pixels are not stranded.
            cur = min(nbrs, key=lambda p: (len(unvisited_neighbors(p)),
                                           abs(p[0] - cur[0]) + abs(p[1] - cur[1]),
                                           p[1], p[0]))
            remaining.discard(cur)
            points.append(cur)
    return CortexPath(tuple(points), level, tuple(segment_starts))


def mcd_negative_seeds(mask: BinaryMask, n: int, levels: Sequence[int],
                       rng_seed: int) -> list[Seed]:
    """Uniform negative clicks along the cortex ring at each dilation level.

    For a ring of length L, clicks sit at path indices (floor(i*L/n) + r) mod L
    with a per-level random rotation r, so consecutive picks are never more
    than ceil(L/n) apart along the path.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(rng_seed)
    seeds: list[Seed] = []
    for level in levels:
        path = extract_cortex(mask, level)
        L = len(path)
        r = int(rng.integers(L))
        for i in range(n):
            x, y = path.points[(i * L // n + r) % L]
            seeds.append(Seed(x, y, NEGATIVE))
    return seeds


def build_training_pair(image: ImageRGB, mask: BinaryMask, n_pos: int, n_neg: int,
                        levels: Sequence[int], constraints: SeedConstraints,
                        rng_seed: int) -> TrainingPair:
    """Sample clicks for one (image, mask) and encode them as Voronoi maps."""
    if (image.height, image.width) != (mask.height, mask.width):
        raise ValueError("image and mask dimensions differ")
    pos = sample_positive_seeds(mask, n_pos, constraints, rng_seed)
    neg = mcd_negative_seeds(mask, n_neg, levels, rng_seed + 1)
    pos_map = compute_voronoi(pos, image.width, image.height)
    neg_map = compute_voronoi(neg, image.width, image.height)
    return TrainingPair(image, pos_map, neg_map, mask, tuple(pos + neg))


def _fill_ellipse(h, w, cx, cy, a, b, theta) -> np.ndarray:
    ys, xs = np.mgrid[0:h, 0:w]
    dx, dy = xs - cx, ys - cy
    u = dx * math.cos(theta) + dy * math.sin(theta)
    v = -dx * math.sin(theta) + dy * math.cos(theta)
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def _fill_polygon(h, w, verts) -> np.ndarray:
    from PIL import Image as PILImage
    from PIL import ImageDraw

    im = PILImage.new("1", (w, h), 0)
    ImageDraw.Draw(im).polygon([(float(x), float(y)) for x, y in verts], fill=1)
    return np.array(im, dtype=bool)


def gen_shapes_dataset(count: int, width: int, height: int,
                       rng_seed: int) -> list[tuple[ImageRGB, BinaryMask]]:
    """Random filled ellipses/convex polygons on noisy distinct-color canvases.

    Every mask keeps a border margin and survives two erosions, so click
    sampling with the default constraints never fails.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    margin = max(3, min(width, height) // 8)
    out = []
    while len(out) < count:
        if rng.random() < 0.5:
            a = rng.uniform(min(width, height) * 0.18, (width - 2 * margin) * 0.45)
            b = rng.uniform(min(width, height) * 0.18, (height - 2 * margin) * 0.45)
            cx = rng.uniform(margin + a, width - margin - a) if margin + a < width - margin - a else width / 2
            cy = rng.uniform(margin + b, height - margin - b) if margin + b < height - margin - b else height / 2
            bits = _fill_ellipse(height, width, cx, cy, a, b, rng.uniform(0, math.pi))
        else:
            k = int(rng.integers(4, 8))
            cx = rng.uniform(width * 0.38, width * 0.62)
            cy = rng.uniform(height * 0.38, height * 0.62)
            rmax = min(cx - margin, width - margin - cx, cy - margin, height - margin - cy)
            if rmax < min(width, height) * 0.22:
                continue
            angles = np.sort(rng.uniform(0, 2 * math.pi, k))
            radii = rng.uniform(0.6 * rmax, rmax, k)
            verts = [(cx + r * math.cos(t), cy + r * math.sin(t))
                     for t, r in zip(angles, radii)]
            bits = _fill_polygon(height, width, verts)
        # clip to the margin band and re-check usability
        bits[:margin, :] = bits[-margin:, :] = False
        bits[:, :margin] = bits[:, -margin:] = False
        mask = BinaryMask(bits)
        # demand a chunky interior so default click constraints are feasible
        if mask.is_empty() or erode(mask, 4).is_empty():
            continue
        fg = rng.integers(0, 256, 3)
        bg = rng.integers(0, 256, 3)
        if np.abs(fg.astype(int) - bg.astype(int)).sum() < 200:
            continue
        canvas = np.where(bits[:, :, None], fg, bg).astype(np.float64)
        canvas += rng.normal(0, 10, canvas.shape)
        out.append((ImageRGB(np.clip(canvas, 0, 255).astype(np.uint8)), mask))
    return out


# ---------------------------------------------------------------------------
# Training-pair archive: pairs.json manifest; Voronoi maps are derived data
# and recomputed on load, never stored.

def save_pairs_manifest(records: list[dict], out_dir) -> str:
    path = os.path.join(out_dir, "pairs.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(records, fh, indent=2)
    return path


def pair_record(image_path: str, label_path: str, pair: TrainingPair,
                levels: Sequence[int], rng_seed: int) -> dict:
    return {
        "image": image_path,
        "label": label_path,
        "pos_seeds": [[s.x, s.y] for s in pair.seeds if s.polarity == POSITIVE],
        "neg_seeds": [[s.x, s.y] for s in pair.seeds if s.polarity == NEGATIVE],
        "levels": list(levels),
        "rng_seed": rng_seed,
    }


def load_pairs(manifest_path) -> list[TrainingPair]:
    """Rebuild training pairs from a pairs.json manifest."""
    base = os.path.dirname(os.path.abspath(manifest_path))
    with open(manifest_path, encoding="utf-8") as fh:
        records = json.load(fh)
    pairs = []
    for rec in records:
        image = load_image(os.path.join(base, rec["image"]))
        label = load_mask(os.path.join(base, rec["label"]))
        pos = [Seed(x, y, POSITIVE) for x, y in rec["pos_seeds"]]
        neg = [Seed(x, y, NEGATIVE) for x, y in rec["neg_seeds"]]
        pairs.append(TrainingPair(
            image,
            compute_voronoi(pos, image.width, image.height),
            compute_voronoi(neg, image.width, image.height),
            label,
            tuple(pos + neg),
        ))
    return pairs
