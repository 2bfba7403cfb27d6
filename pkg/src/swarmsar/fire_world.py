"""Fire region model: raster masks, synthetic spread, boundaries and survey grids.

Cells are addressed as ``(col, row)`` with row 0 the southernmost raster row.
A mask's ``origin`` is the planar position, in meters, of the lower-left
corner of cell ``(0, 0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "MaskFormatError",
    "FireMask",
    "FireSpreadParams",
    "SurveyPoint",
    "SurveySet",
    "load_mask",
    "dump_mask",
    "save_mask",
    "step_fire",
    "extract_boundary",
    "generate_survey_points",
    "blob_mask",
    "blob_sequence",
    "spread_sequence",
]


class MaskFormatError(ValueError):
    """Raised when a mask file cannot be decoded; ``field`` names the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True, eq=False)
class FireMask:
    burning: np.ndarray  # bool, shape (height, width), indexed [row, col]
    resolution: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        burning = np.asarray(self.burning, dtype=bool)
        if burning.ndim != 2 or burning.shape[0] < 1 or burning.shape[1] < 1:
            raise ValueError("burning must be a non-empty 2-D array")
        if not self.resolution > 0:
            raise ValueError("resolution must be > 0")
        burning = burning.copy()
        burning.flags.writeable = False
        object.__setattr__(self, "burning", burning)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "resolution", float(self.resolution))

    @property
    def width(self) -> int:
        return self.burning.shape[1]

    @property
    def height(self) -> int:
        return self.burning.shape[0]

    @property
    def burning_count(self) -> int:
        return int(self.burning.sum())

    def burning_cells(self) -> set[tuple[int, int]]:
        rows, cols = np.nonzero(self.burning)
        return {(int(c), int(r)) for r, c in zip(rows, cols)}

    def cell_center(self, col: int, row: int) -> tuple[float, float]:
        return (
            self.origin[0] + (col + 0.5) * self.resolution,
            self.origin[1] + (row + 0.5) * self.resolution,
        )

    def __eq__(self, other):
        if not isinstance(other, FireMask):
            return NotImplemented
        return (
            self.resolution == other.resolution
            and self.origin == other.origin
            and np.array_equal(self.burning, other.burning)
        )

    __hash__ = None


@dataclass(frozen=True)
class FireSpreadParams:
    ignition_probability: float = 0.3
    neighborhood: int = 4
    steps_per_update: int = 1

    def __post_init__(self):
        if not 0.0 <= self.ignition_probability <= 1.0:
            raise ValueError("ignition_probability must lie in [0, 1]")
        if self.neighborhood not in (4, 8):
            raise ValueError("neighborhood must be 4 or 8")
        if self.steps_per_update < 1:
            raise ValueError("steps_per_update must be >= 1")


@dataclass(frozen=True)
class SurveyPoint:
    id: int
    x: float
    y: float

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class SurveySet:
    update_index: int
    points: tuple[SurveyPoint, ...]
    cell_size: float = 450.0
    # grid cell (gx, gy) of every point, parallel to ``points``
    cells: tuple[tuple[int, int], ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        ids = [p.id for p in self.points]
        if len(set(ids)) != len(ids):
            raise ValueError("survey point ids must be unique")

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def ids(self) -> list[int]:
        return [p.id for p in self.points]

    @property
    def positions(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.points], dtype=float).reshape(-1, 2)

    def by_id(self) -> dict[int, SurveyPoint]:
        return {p.id: p for p in self.points}

    def subset(self, ids) -> "SurveySet":
        """Points whose id is in ``ids``, keeping this set's order."""
        keep = set(ids)
        pairs = [
            (p, c)
            for p, c in zip(self.points, self.cells or [None] * len(self.points))
            if p.id in keep
        ]
        return SurveySet(
            self.update_index,
            tuple(p for p, _ in pairs),
            self.cell_size,
            tuple(c for _, c in pairs) if self.cells else (),
        )


# --------------------------------------------------------------------------
# mask file format


_HEADER_KEYS = ("width", "height", "resolution_m", "origin_x_m", "origin_y_m")


def load_mask(raster_file) -> FireMask:
    """Read a plain-text mask file.

    The header holds ``key=value`` lines for width, height, resolution_m,
    origin_x_m and origin_y_m (origins default to 0). The first raster row
    after the header is row 0, the southernmost one.
    """
    text = Path(raster_file).read_text()
    return parse_mask(text)


def parse_mask(text: str) -> FireMask:
    header: dict[str, str] = {}
    rows: list[str] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" in line:
            if rows:
                raise MaskFormatError("header", f"header line after raster rows: {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in _HEADER_KEYS:
                raise MaskFormatError(key, "unknown header key")
            header[key] = value.strip()
        else:
            rows.append(line)

    def number(key, cast, default=None):
        if key not in header:
            if default is None:
                raise MaskFormatError(key, "missing")
            return default
        try:
            return cast(header[key])
        except ValueError:
            raise MaskFormatError(key, f"not a valid number: {header[key]!r}") from None

    width = number("width", int)
    height = number("height", int)
    resolution = number("resolution_m", float)
    origin = (number("origin_x_m", float, 0.0), number("origin_y_m", float, 0.0))
    if width < 1:
        raise MaskFormatError("width", "must be >= 1")
    if height < 1:
        raise MaskFormatError("height", "must be >= 1")
    if not resolution > 0:
        raise MaskFormatError("resolution_m", "must be > 0")
    if len(rows) != height:
        raise MaskFormatError("height", f"expected {height} rows, found {len(rows)}")

    burning = np.zeros((height, width), dtype=bool)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise MaskFormatError("width", f"row {r} has {len(row)} cells, expected {width}")
        if set(row) - {"0", "1"}:
            raise MaskFormatError(f"row {r}", "cells must be 0 or 1")
        burning[r] = [ch == "1" for ch in row]
    return FireMask(burning, resolution, origin)


def dump_mask(mask: FireMask) -> str:
    lines = [
        f"width={mask.width}",
        f"height={mask.height}",
        f"resolution_m={mask.resolution!r}",
        f"origin_x_m={mask.origin[0]!r}",
        f"origin_y_m={mask.origin[1]!r}",
    ]
    for row in mask.burning:
        lines.append("".join("1" if b else "0" for b in row))
    return "\n".join(lines) + "\n"


def save_mask(mask: FireMask, path) -> None:
    Path(path).write_text(dump_mask(mask))


# --------------------------------------------------------------------------
# dynamics and topology

_OFFSETS_4 = ((1, 0), (-1, 0), (0, 1), (0, -1))
_OFFSETS_8 = _OFFSETS_4 + ((1, 1), (1, -1), (-1, 1), (-1, -1))


def _shifted(burning: np.ndarray, dc: int, dr: int) -> np.ndarray:
    """out[r, c] = burning[r + dr, c + dc], False off-grid."""
    h, w = burning.shape
    out = np.zeros_like(burning)
    src_r = slice(max(dr, 0), h + min(dr, 0))
    dst_r = slice(max(-dr, 0), h + min(-dr, 0))
    src_c = slice(max(dc, 0), w + min(dc, 0))
    dst_c = slice(max(-dc, 0), w + min(-dc, 0))
    out[dst_r, dst_c] = burning[src_r, src_c]
    return out


def step_fire(mask: FireMask, params: FireSpreadParams, rng_seed: int) -> FireMask:
    """Advance the fire by ``params.steps_per_update`` cellular steps.

    Every burning neighbour independently ignites an unburnt cell with
    ``ignition_probability``. Burning cells never extinguish.
    """
    rng = np.random.default_rng(rng_seed)
    offsets = _OFFSETS_4 if params.neighborhood == 4 else _OFFSETS_8
    burning = np.array(mask.burning)
    p = params.ignition_probability
    for _ in range(params.steps_per_update):
        draws = rng.random((len(offsets),) + burning.shape)
        ignite = np.zeros_like(burning)
        for k, (dc, dr) in enumerate(offsets):
            ignite |= _shifted(burning, dc, dr) & (draws[k] < p)
        burning = burning | ignite
    return FireMask(burning, mask.resolution, mask.origin)


def extract_boundary(mask: FireMask) -> set[tuple[int, int]]:
    """Burning cells with at least one non-burning or off-grid 4-neighbour."""
    b = mask.burning
    interior = b.copy()
    for dc, dr in _OFFSETS_4:
        interior &= _shifted(b, dc, dr)
    rows, cols = np.nonzero(b & ~interior)
    return {(int(c), int(r)) for r, c in zip(rows, cols)}


def _grid_shape(mask: FireMask, cell_size: float) -> tuple[int, int]:
    cols = math.ceil(mask.width * mask.resolution / cell_size - 1e-9)
    rows = math.ceil(mask.height * mask.resolution / cell_size - 1e-9)
    return max(cols, 1), max(rows, 1)


def generate_survey_points(mask: FireMask, cell_size: float = 450.0, update_index: int = 0) -> SurveySet:
    """One survey point per grid cell that holds burning raster cells.

    The grid is anchored at the mask origin. A raster cell belongs to the grid
    cell containing its centre, so each burning raster cell is covered by
    exactly one point. Point ids encode the grid cell (``gy * grid_cols + gx``),
    which keeps them stable while the fire grows on the same raster and makes
    id order equal to row-major cell order.
    """
    if not cell_size > 0:
        raise ValueError("cell_size must be > 0")
    grid_cols, _ = _grid_shape(mask, cell_size)
    rows, cols = np.nonzero(mask.burning)
    gx = np.floor((cols + 0.5) * mask.resolution / cell_size).astype(int)
    gy = np.floor((rows + 0.5) * mask.resolution / cell_size).astype(int)
    cells = sorted(set(zip(gy.tolist(), gx.tolist())))
    points = []
    for cy, cx in cells:
        points.append(
            SurveyPoint(
                id=cy * grid_cols + cx,
                x=mask.origin[0] + (cx + 0.5) * cell_size,
                y=mask.origin[1] + (cy + 0.5) * cell_size,
            )
        )
    return SurveySet(update_index, tuple(points), float(cell_size), tuple((cx, cy) for cy, cx in cells))


# --------------------------------------------------------------------------
# synthetic fire regions


def _blob_radius_fn(seed: int, aspect: float):
    rng = np.random.default_rng(seed)
    harmonics = np.arange(2, 6)
    amps = rng.uniform(0.03, 0.09, size=harmonics.size)
    phases = rng.uniform(0, 2 * np.pi, size=harmonics.size)
    tilt = rng.uniform(0, np.pi)

    def radius(theta):
        wobble = 1.0 + (amps[:, None] * np.cos(harmonics[:, None] * theta + phases[:, None])).sum(axis=0)
        # ellipse with semi-axes (aspect, 1), rotated by ``tilt``
        t = theta - tilt
        ellipse = aspect / np.sqrt((np.cos(t)) ** 2 + (aspect * np.sin(t)) ** 2)
        return wobble * ellipse

    return radius


def blob_mask(
    scale_m: float,
    seed: int = 0,
    *,
    resolution: float = 150.0,
    extent_m: float = 18000.0,
    aspect: float = 1.4,
) -> FireMask:
    """Irregular star-shaped burn scar centred in a square canvas.

    For a fixed seed the burnt region grows monotonically with ``scale_m``.
    """
    n = int(round(extent_m / resolution))
    centers = (np.arange(n) + 0.5) * resolution - extent_m / 2
    xx, yy = np.meshgrid(centers, centers)
    theta = np.arctan2(yy, xx)
    radius = _blob_radius_fn(seed, aspect)
    r_limit = scale_m * radius(theta.ravel()).reshape(theta.shape)
    burning = np.hypot(xx, yy) <= r_limit
    return FireMask(burning, resolution, (0.0, 0.0))


def _scale_for_points(target: int, cell_size: float, seed: int, **kw) -> float:
    lo, hi = 0.0, kw.get("extent_m", 18000.0) / 2
    for _ in range(40):
        mid = (lo + hi) / 2
        n = len(generate_survey_points(blob_mask(mid, seed, **kw), cell_size))
        if n < target:
            lo = mid
        else:
            hi = mid
    return hi


def blob_sequence(
    n_updates: int,
    target_points: int = 300,
    *,
    initial_fraction: float = 0.7,
    cell_size: float = 450.0,
    seed: int = 0,
    resolution: float = 150.0,
    extent_m: float = 18000.0,
) -> list[FireMask]:
    """Growing burn scars whose survey-point count reaches ``target_points`` at the last update.

    The first update holds roughly ``initial_fraction`` of the final count;
    scale grows linearly in between, so every mask contains the previous one.
    """
    kw = dict(resolution=resolution, extent_m=extent_m)
    final = _scale_for_points(target_points, cell_size, seed, **kw)
    first = _scale_for_points(max(1, round(target_points * initial_fraction)), cell_size, seed, **kw)
    if n_updates == 1:
        scales = [final]
    else:
        scales = [first + (final - first) * k / (n_updates - 1) for k in range(n_updates)]
    return [blob_mask(s, seed, **kw) for s in scales]


def spread_sequence(initial: FireMask, n_updates: int, params: FireSpreadParams, seed: int = 0) -> list[FireMask]:
    """``initial`` followed by ``n_updates - 1`` applications of :func:`step_fire`."""
    masks = [initial]
    for t in range(1, n_updates):
        masks.append(step_fire(masks[-1], params, rng_seed=seed * 1_000_003 + t))
    return masks
