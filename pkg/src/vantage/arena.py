"""Arena geometry: obstacle map, strategic-area partition, line of sight.

The map file is JSON: `width`/`height` in meters, `obstacles` as axis-aligned
rectangles, exactly 30 convex `areas` (polygon + centroid), and a 4-slot
`adjacency` table per area ordered [up, down, left, right].  A slot equal to
the area's own id means "stay" (boundary, or neighbor centroid buried in an
obstacle).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

AREA_COUNT = 30
LOS_EPS = 1e-9  # meters of tolerance on segment/obstacle intersection

UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3


class MapError(ValueError):
    """Raised when a map file fails to parse or violates an invariant."""


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    w: float
    h: float

    def contains(self, px: float, py: float, margin: float = 0.0) -> bool:
        """Strict-interior test, shrunk by `margin` on every side."""
        return (
            self.x + margin < px < self.x + self.w - margin
            and self.y + margin < py < self.y + self.h - margin
        )

    def as_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}


@dataclass(frozen=True)
class Area:
    ident: int
    polygon: tuple[tuple[float, float], ...]
    centroid: tuple[float, float]


@dataclass(frozen=True)
class ArenaMap:
    width: float
    height: float
    obstacles: tuple[Rect, ...]
    areas: tuple[Area, ...]
    adjacency: np.ndarray  # (n_areas, 4) int, slots [up, down, left, right]

    @property
    def n_areas(self) -> int:
        return len(self.areas)

    @property
    def centroids(self) -> np.ndarray:
        return np.array([a.centroid for a in self.areas], dtype=np.float64)


# ---------------------------------------------------------------------------
# Line of sight
# ---------------------------------------------------------------------------


def segment_hits_rect(
    px: float, py: float, qx: float, qy: float, rect: Rect, eps: float = LOS_EPS
) -> bool:
    """Liang-Barsky clip of segment p->q against `rect` shrunk by `eps`."""
    t0, t1 = 0.0, 1.0
    for p0, d, lo, hi in (
        (px, qx - px, rect.x + eps, rect.x + rect.w - eps),
        (py, qy - py, rect.y + eps, rect.y + rect.h - eps),
    ):
        if lo >= hi:
            return False
        if d == 0.0:
            if p0 <= lo or p0 >= hi:
                return False
        else:
            ta, tb = (lo - p0) / d, (hi - p0) / d
            if ta > tb:
                ta, tb = tb, ta
            t0, t1 = max(t0, ta), min(t1, tb)
            if t0 >= t1:
                return False
    return True


def visible(arena: ArenaMap, a: int, b: int) -> bool:
    """True iff the open centroid-to-centroid segment misses every obstacle."""
    if a == b:
        return True
    ax, ay = arena.areas[a].centroid
    bx, by = arena.areas[b].centroid
    return not any(segment_hits_rect(ax, ay, bx, by, rect) for rect in arena.obstacles)


# ---------------------------------------------------------------------------
# Loading and validation
# ---------------------------------------------------------------------------


def load_map(path) -> ArenaMap:
    """Read and validate a map file; `<path>.json` is tried if `path` is absent."""
    p = Path(path)
    if not p.exists() and p.suffix != ".json":
        candidate = p.with_name(p.name + ".json")
        if candidate.exists():
            p = candidate
    try:
        with open(p, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MapError(f"parse: {exc}") from exc
    return parse_map(obj)


def parse_map(obj: dict) -> ArenaMap:
    """Validate a JSON-shaped map dict against every ArenaMap invariant."""
    try:
        width = float(obj["width"])
        height = float(obj["height"])
        raw_obstacles = obj.get("obstacles", [])
        raw_areas = obj["areas"]
        raw_adj = obj["adjacency"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MapError(f"parse: missing or malformed field ({exc})") from exc

    if not (np.isfinite(width) and np.isfinite(height) and width > 0 and height > 0):
        raise MapError("bounds: width and height must be positive and finite")

    obstacles = []
    for i, o in enumerate(raw_obstacles):
        try:
            rect = Rect(float(o["x"]), float(o["y"]), float(o["w"]), float(o["h"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise MapError(f"parse: obstacle {i} malformed ({exc})") from exc
        if rect.w <= 0 or rect.h <= 0:
            raise MapError(f"obstacle geometry: obstacle {i} has non-positive size")
        obstacles.append(rect)

    if len(raw_areas) != AREA_COUNT:
        raise MapError(f"area count: expected {AREA_COUNT}, got {len(raw_areas)}")

    areas: list[Area | None] = [None] * AREA_COUNT
    for entry in raw_areas:
        try:
            ident = int(entry["id"])
            polygon = tuple((float(x), float(y)) for x, y in entry["polygon"])
            centroid = (float(entry["centroid"][0]), float(entry["centroid"][1]))
        except (KeyError, TypeError, ValueError) as exc:
            raise MapError(f"parse: area entry malformed ({exc})") from exc
        if not 0 <= ident < AREA_COUNT or areas[ident] is not None:
            raise MapError(f"area ids: id {ident} out of range or duplicated")
        if len(polygon) < 3:
            raise MapError(f"area polygon: area {ident} has fewer than 3 vertices")
        if not all(np.isfinite(v) for xy in polygon for v in xy) or not all(
            np.isfinite(c) for c in centroid
        ):
            raise MapError(f"area geometry: area {ident} has non-finite coordinates")
        areas[ident] = Area(ident, polygon, centroid)

    for area in areas:
        cx, cy = area.centroid
        for j, rect in enumerate(obstacles):
            if rect.contains(cx, cy):
                raise MapError(
                    f"centroid in obstacle: area {area.ident} centroid lies inside obstacle {j}"
                )

    adjacency = np.full((AREA_COUNT, 4), -1, dtype=np.int64)
    for key, slots in raw_adj.items():
        try:
            ident = int(key)
        except ValueError as exc:
            raise MapError(f"parse: adjacency key {key!r} is not an id") from exc
        if not 0 <= ident < AREA_COUNT:
            raise MapError(f"adjacency ids: key {ident} out of range")
        if len(slots) != 4:
            raise MapError(f"adjacency slots: area {ident} must list exactly 4 neighbors")
        for s, v in enumerate(slots):
            v = int(v)
            if not 0 <= v < AREA_COUNT:
                raise MapError(f"adjacency ids: area {ident} slot {s} -> {v} out of range")
            adjacency[ident, s] = v
    if np.any(adjacency < 0):
        missing = int(np.where(adjacency[:, 0] < 0)[0][0])
        raise MapError(f"adjacency coverage: area {missing} has no adjacency entry")

    for a in range(AREA_COUNT):
        for b in adjacency[a]:
            if b != a and a not in adjacency[b]:
                raise MapError(f"adjacency symmetry: {b} in adj({a}) but {a} not in adj({b})")

    arena = ArenaMap(width, height, tuple(obstacles), tuple(areas), adjacency)
    _check_tiling(arena)
    return arena


def _poly_contains(polygon: np.ndarray, pts: np.ndarray, eps: float) -> np.ndarray:
    """Vectorized convex-polygon test: +1 inside, 0 on boundary, -1 outside."""
    n = len(polygon)
    sign = np.zeros(len(pts))
    boundary = np.zeros(len(pts), dtype=bool)
    outside = np.zeros(len(pts), dtype=bool)
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        cross = (x2 - x1) * (pts[:, 1] - y1) - (y2 - y1) * (pts[:, 0] - x1)
        boundary |= np.abs(cross) <= eps
        s = np.sign(cross)
        flip = (sign != 0) & (s != 0) & (s != sign)
        outside |= flip
        sign = np.where(sign == 0, s, sign)
    result = np.ones(len(pts))
    result[outside] = -1
    result[boundary & ~outside] = 0
    return result


def _check_tiling(arena: ArenaMap, nx: int = 97, ny: int = 61) -> None:
    """Sampled invariant check: each free-space point sits in exactly one area."""
    xs = (np.arange(nx) + 0.5) * arena.width / nx
    ys = (np.arange(ny) + 0.5) * arena.height / ny
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])

    free = np.ones(len(pts), dtype=bool)
    for rect in arena.obstacles:
        inside = (
            (pts[:, 0] > rect.x)
            & (pts[:, 0] < rect.x + rect.w)
            & (pts[:, 1] > rect.y)
            & (pts[:, 1] < rect.y + rect.h)
        )
        free &= ~inside

    counts = np.zeros(len(pts), dtype=np.int64)
    on_boundary = np.zeros(len(pts), dtype=bool)
    for area in arena.areas:
        verdict = _poly_contains(np.asarray(area.polygon), pts, eps=1e-9)
        counts += verdict > 0
        on_boundary |= verdict == 0
    bad = free & ~on_boundary & (counts != 1)
    if np.any(bad):
        i = int(np.where(bad)[0][0])
        raise MapError(
            f"tiling: free point ({pts[i, 0]:.3f}, {pts[i, 1]:.3f}) "
            f"lies in {int(counts[i])} areas"
        )


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def grid_map_dict(
    width: float,
    height: float,
    cols: int,
    rows: int,
    obstacles: list[Rect] | None = None,
) -> dict:
    """Uniform cols x rows partition as a JSON-shaped map dict.

    Area ids run row-major from the bottom-left cell; `up` is +y.  Slots fall
    back to SELF at the boundary or when the neighbor centroid is buried in an
    obstacle.
    """
    obstacles = obstacles or []
    cw, ch = width / cols, height / rows
    areas = []
    centroids = []
    for r in range(rows):
        for c in range(cols):
            ident = r * cols + c
            x0, y0 = c * cw, r * ch
            cx, cy = x0 + cw / 2.0, y0 + ch / 2.0
            centroids.append((cx, cy))
            areas.append(
                {
                    "id": ident,
                    "polygon": [[x0, y0], [x0 + cw, y0], [x0 + cw, y0 + ch], [x0, y0 + ch]],
                    "centroid": [cx, cy],
                }
            )

    def buried(ident: int) -> bool:
        cx, cy = centroids[ident]
        return any(rect.contains(cx, cy) for rect in obstacles)

    adjacency = {}
    for r in range(rows):
        for c in range(cols):
            ident = r * cols + c
            up = ident + cols if r + 1 < rows else ident
            down = ident - cols if r > 0 else ident
            left = ident - 1 if c > 0 else ident
            right = ident + 1 if c + 1 < cols else ident
            slots = [n if n == ident or not buried(n) else ident for n in (up, down, left, right)]
            adjacency[str(ident)] = slots

    return {
        "width": width,
        "height": height,
        "obstacles": [o.as_dict() for o in obstacles],
        "areas": areas,
        "adjacency": adjacency,
    }


def default_map_path() -> Path:
    """Location of the map file shipped with the repository."""
    return Path(__file__).resolve().parents[2] / "maps" / "icra2019_default.json"
