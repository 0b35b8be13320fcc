"""Finite perimeter sets on a conformal grid.

A set is a boolean cell mask.  Its perimeter is a weighted cut: every pair of
cells ``(c, c + e)`` for a stencil direction ``e`` with exactly one member
contributes ``weight_e * phi_mid * h``, where ``phi_mid`` is phi interpolated
at the midpoint of the two cell centres.  Cells outside an open grid count as
non-members, so the wall is part of the boundary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .manifold import ConformalGrid

PAD = 2  # longest stencil reach, in cells


# ---------------------------------------------------------------------------
# stencils
# ---------------------------------------------------------------------------

def _crofton_weights(vectors):
    """Cauchy-Crofton weights ``dtheta / (2 |e|)`` and the centring scale.

    The scale makes the measured length of a straight line oscillate
    symmetrically around the true value over all orientations.
    """
    theta = np.array([math.atan2(dj, di) % math.pi for di, dj in vectors])
    order = np.argsort(theta)
    t = theta[order]
    n = len(t)
    dtheta = np.empty(n)
    for k in range(n):
        prev = t[k - 1] - (math.pi if k == 0 else 0.0)
        nxt = t[(k + 1) % n] + (math.pi if k == n - 1 else 0.0)
        dtheta[k] = (nxt - prev) / 2.0
    dth = np.empty(n)
    dth[order] = dtheta
    lengths = np.array([math.hypot(*v) for v in vectors])

    def response(alpha):
        return 0.5 * float(np.sum(dth * np.abs(np.sin(alpha - theta))))

    # piecewise A sin + B cos between kinks: minima at kinks, maxima stationary
    cands = list(t)
    kinks = list(t) + [t[0] + math.pi]
    for a, b in zip(kinks[:-1], kinks[1:]):
        mid = 0.5 * (a + b)
        s = np.sign(np.sin(mid - theta))
        A = 0.5 * float(np.sum(dth * s * np.cos(theta)))
        B = -0.5 * float(np.sum(dth * s * np.sin(theta)))
        alpha = math.atan2(A, B)
        while alpha < a:
            alpha += math.pi
        while alpha > b:
            alpha -= math.pi
        if a <= alpha <= b:
            cands.append(alpha)
    vals = [response(a) for a in cands]
    fmin, fmax = min(vals), max(vals)
    scale = 2.0 / (fmin + fmax)
    weights = scale * dth / (2.0 * lengths)
    return tuple(float(w) for w in weights), scale, (fmax - fmin) / (fmax + fmin)


@dataclass(frozen=True)
class PerimeterStencil:
    """Cut directions (half of the symmetric neighbourhood) and their weights."""

    kind: str
    vectors: tuple[tuple[int, int], ...]
    weights: tuple[float, ...]
    scale: float = 1.0
    anisotropy: float = 0.0

    def __post_init__(self):
        if len(self.vectors) != len(self.weights):
            raise ValueError("one weight per direction")
        if any(w <= 0 for w in self.weights):
            raise ValueError("stencil weights must be positive")


_CUT8_VECTORS = ((0, 1), (1, 0), (1, 1), (1, -1))
_CROFTON16_VECTORS = ((0, 1), (1, 0), (1, 1), (1, -1), (1, 2), (2, 1), (1, -2), (2, -1))

CUT4 = PerimeterStencil("cut4", ((0, 1), (1, 0)), (1.0, 1.0), 1.0, math.sqrt(2.0) - 1.0)
CUT8 = PerimeterStencil("cut8", _CUT8_VECTORS, *_crofton_weights(_CUT8_VECTORS))
CROFTON16 = PerimeterStencil("crofton16", _CROFTON16_VECTORS, *_crofton_weights(_CROFTON16_VECTORS))
STENCILS = {s.kind: s for s in (CUT4, CUT8, CROFTON16)}
DEFAULT_STENCIL = CROFTON16


def get_stencil(kind: str | PerimeterStencil) -> PerimeterStencil:
    if isinstance(kind, PerimeterStencil):
        return kind
    try:
        return STENCILS[kind]
    except KeyError:
        raise ValueError(f"unknown stencil {kind!r}; choose from {sorted(STENCILS)}") from None


# ---------------------------------------------------------------------------
# edge geometry (cached per grid and stencil)
# ---------------------------------------------------------------------------

def _bilinear(phi, y, x):
    H, W = phi.shape[0] - 1, phi.shape[1] - 1
    y = np.clip(y, 0.0, H)
    x = np.clip(x, 0.0, W)
    i0 = np.minimum(np.floor(y).astype(int), H - 1)
    j0 = np.minimum(np.floor(x).astype(int), W - 1)
    fy = y - i0
    fx = x - j0
    return ((1 - fy) * (1 - fx) * phi[i0, j0] + (1 - fy) * fx * phi[i0, j0 + 1]
            + fy * (1 - fx) * phi[i0 + 1, j0] + fy * fx * phi[i0 + 1, j0 + 1])


@dataclass
class _Direction:
    di: int
    dj: int
    a: tuple  # slices of the (padded) cell array for the first endpoint
    b: tuple  # ... and for the second
    weight: np.ndarray  # metric weight of each pair, shape of the slices


def _slices(n, d):
    if d >= 0:
        return slice(0, n - d), slice(d, n)
    return slice(-d, n), slice(0, n + d)


def _edge_geometry(grid: ConformalGrid, stencil: PerimeterStencil) -> list[_Direction]:
    key = ("edges", stencil.kind)
    cached = grid._cache.get(key)
    if cached is not None:
        return cached
    H, W = grid.shape
    out = []
    for (di, dj), w in zip(stencil.vectors, stencil.weights):
        step = w * grid.h
        if grid.periodic:
            ii, jj = np.mgrid[0:H, 0:W]
            y = (ii + 0.5 + di / 2.0) % H
            x = (jj + 0.5 + dj / 2.0) % W
            weight = step * _bilinear(grid.phi, y, x)
            a = (slice(None), slice(None))
            out.append(_Direction(di, dj, a, a, weight))
        else:
            Hp, Wp = H + 2 * PAD, W + 2 * PAD
            ra, rb = _slices(Hp, di)
            ca, cb = _slices(Wp, dj)
            ii, jj = np.mgrid[ra, ca]
            y = ii - PAD + 0.5 + di / 2.0
            x = jj - PAD + 0.5 + dj / 2.0
            weight = step * _bilinear(grid.phi, y, x)
            out.append(_Direction(di, dj, (ra, ca), (rb, cb), weight))
    grid._cache[key] = out
    return out


def _layout(grid: ConformalGrid, mask: np.ndarray) -> np.ndarray:
    if grid.periodic:
        return mask
    return np.pad(mask, PAD)


def _pair(grid, d: _Direction, m: np.ndarray):
    """Endpoint arrays (first, second) of every pair in direction ``d``."""
    if grid.periodic:
        return m, np.roll(m, (-d.di, -d.dj), axis=(0, 1))
    return m[d.a], m[d.b]


def edge_list(grid: ConformalGrid, stencil: PerimeterStencil | str = DEFAULT_STENCIL,
              touching: np.ndarray | None = None):
    """All stencil edges as flat cell indices ``(u, v)`` and metric weights.

    ``v == -1`` marks a partner outside an open grid.  With ``touching`` (a
    cell mask) only edges with at least one endpoint in the mask are kept.
    """
    stencil = get_stencil(stencil)
    H, W = grid.shape
    idx = np.arange(H * W).reshape(H, W)
    lay = _layout(grid, idx) if grid.periodic else np.pad(idx, PAD, constant_values=-1)
    tmask = None if touching is None else _layout(grid, np.asarray(touching, bool))
    us, vs, ws = [], [], []
    for d in _edge_geometry(grid, stencil):
        a, b = _pair(grid, d, lay)
        keep = (a >= 0) | (b >= 0)
        if tmask is not None:
            ta, tb = _pair(grid, d, tmask)
            keep &= ta | tb
        u, v, w = a[keep], b[keep], d.weight[keep]
        # orient so that u is always on the grid
        swap = u < 0
        u, v = np.where(swap, v, u), np.where(swap, u, v)
        us.append(u)
        vs.append(v)
        ws.append(w)
    return np.concatenate(us), np.concatenate(vs), np.concatenate(ws)


# ---------------------------------------------------------------------------
# indicator sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IndicatorSet:
    """A cell subset of one grid, with its volume computed at construction."""

    grid: ConformalGrid
    cells: np.ndarray
    volume: float = field(init=False)

    def __post_init__(self):
        cells = np.array(self.cells, dtype=bool)
        if cells.shape != self.grid.shape:
            raise ValueError(f"mask shape {cells.shape} does not match grid {self.grid.shape}")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "volume", math.fsum(self.grid.cell_volumes[cells]))

    @classmethod
    def empty(cls, grid: ConformalGrid) -> "IndicatorSet":
        return cls(grid, np.zeros(grid.shape, bool))

    @classmethod
    def full(cls, grid: ConformalGrid) -> "IndicatorSet":
        return cls(grid, np.ones(grid.shape, bool))

    @classmethod
    def from_cells(cls, grid: ConformalGrid, cells: Iterable[Sequence[int]]) -> "IndicatorSet":
        m = np.zeros(grid.shape, bool)
        for c in cells:
            m[grid.check_cell(c)] = True
        return cls(grid, m)

    @classmethod
    def block(cls, grid: ConformalGrid, top: int, left: int, rows: int, cols: int | None = None) -> "IndicatorSet":
        """Axis-aligned rectangle of cells (wrapping on a torus)."""
        cols = rows if cols is None else cols
        m = np.zeros(grid.shape, bool)
        ii = np.arange(top, top + rows)
        jj = np.arange(left, left + cols)
        if grid.periodic:
            ii, jj = ii % grid.height, jj % grid.width
        elif ii.min() < 0 or jj.min() < 0 or ii.max() >= grid.height or jj.max() >= grid.width:
            raise IndexError("block leaves the grid")
        m[np.ix_(ii, jj)] = True
        return cls(grid, m)

    @property
    def grid_id(self) -> str:
        return self.grid.id

    @property
    def count(self) -> int:
        return int(self.cells.sum())

    def is_empty(self) -> bool:
        return not self.cells.any()

    def members(self) -> np.ndarray:
        return np.argwhere(self.cells)

    def check_volume(self) -> bool:
        return self.volume == math.fsum(self.grid.cell_volumes[self.cells])

    def _same(self, other: "IndicatorSet"):
        if self.grid is not other.grid and self.grid.id != other.grid.id:
            raise ValueError("indicator sets live on different grids")

    def __or__(self, other):
        self._same(other)
        return IndicatorSet(self.grid, self.cells | other.cells)

    def __and__(self, other):
        self._same(other)
        return IndicatorSet(self.grid, self.cells & other.cells)

    def __sub__(self, other):
        self._same(other)
        return IndicatorSet(self.grid, self.cells & ~other.cells)

    def __xor__(self, other):
        self._same(other)
        return IndicatorSet(self.grid, self.cells ^ other.cells)

    def __invert__(self):
        return IndicatorSet(self.grid, ~self.cells)

    def __eq__(self, other):
        if not isinstance(other, IndicatorSet):
            return NotImplemented
        return self.grid_id == other.grid_id and np.array_equal(self.cells, other.cells)

    def __hash__(self):
        return hash((self.grid_id, self.cells.tobytes()))

    def __repr__(self):
        return f"IndicatorSet(grid={self.grid_id}, cells={self.count}, volume={self.volume!r})"


def volume(s: IndicatorSet) -> float:
    return s.volume


def perimeter(s: IndicatorSet, stencil: PerimeterStencil | str = DEFAULT_STENCIL) -> float:
    """Weighted cut length of the set's boundary."""
    grid = s.grid
    m = _layout(grid, s.cells)
    total = 0.0
    for d in _edge_geometry(grid, get_stencil(stencil)):
        a, b = _pair(grid, d, m)
        total += float(d.weight[a != b].sum())
    return total


def perimeter_in(s: IndicatorSet, region: IndicatorSet | np.ndarray,
                 stencil: PerimeterStencil | str = DEFAULT_STENCIL) -> float:
    """Cut length restricted to edges with at least one endpoint cell in ``region``."""
    grid = s.grid
    if isinstance(region, IndicatorSet):
        s._same(region)
        region = region.cells
    region = np.asarray(region, bool)
    if region.shape != grid.shape:
        raise ValueError("region mask does not match the grid")
    m = _layout(grid, s.cells)
    r = _layout(grid, region)
    total = 0.0
    for d in _edge_geometry(grid, get_stencil(stencil)):
        a, b = _pair(grid, d, m)
        ra, rb = _pair(grid, d, r)
        total += float(d.weight[(a != b) & (ra | rb)].sum())
    return total


def interface_length(a: IndicatorSet, b: IndicatorSet,
                     stencil: PerimeterStencil | str = DEFAULT_STENCIL) -> float:
    """Total weight of edges joining a cell of ``a`` to a cell of ``b``."""
    a._same(b)
    grid = a.grid
    ma, mb = _layout(grid, a.cells), _layout(grid, b.cells)
    total = 0.0
    for d in _edge_geometry(grid, get_stencil(stencil)):
        a1, a2 = _pair(grid, d, ma)
        b1, b2 = _pair(grid, d, mb)
        total += float(d.weight[(a1 & b2) | (b1 & a2)].sum())
    return total


def l1_distance(a: IndicatorSet, b: IndicatorSet) -> float:
    """Volume of the symmetric difference."""
    return (a ^ b).volume


# ---------------------------------------------------------------------------
# lower semicontinuity
# ---------------------------------------------------------------------------

class NotL1Convergent(ValueError):
    """The sequence does not approach the proposed limit in L1."""

    def __init__(self, distances):
        self.distances = list(distances)
        super().__init__(
            f"sequence is not L1-convergent to the limit (tail distances {self.distances[-3:]}); "
            "lower semicontinuity check is vacuous"
        )


@dataclass(frozen=True)
class SemicontinuityReport:
    l1_distances: list[float]
    perimeters: list[float]
    liminf: float
    limit_perimeter: float
    holds: bool
    tol: float

    def to_dict(self) -> dict:
        return {
            "l1_distances": self.l1_distances,
            "perimeters": self.perimeters,
            "liminf": self.liminf,
            "limit_perimeter": self.limit_perimeter,
            "holds": self.holds,
            "tol": self.tol,
        }


def check_lower_semicontinuity(
    sequence: Sequence[IndicatorSet],
    limit: IndicatorSet,
    stencil: PerimeterStencil | str = DEFAULT_STENCIL,
    *,
    tail: int = 5,
    l1_tol: float = 1e-12,
    tol: float = 1e-12,
) -> SemicontinuityReport:
    """Compare ``P(limit)`` with the liminf of ``P(seq_j)``.

    A finite sequence counts as L1-convergent when the distances over the
    last ``tail`` terms never increase and the final one is at most
    ``l1_tol``.  The liminf is the minimum perimeter over that tail.
    """
    if not sequence:
        raise ValueError("empty sequence")
    dists = [l1_distance(s, limit) for s in sequence]
    t = max(1, min(tail, len(sequence)))
    tail_d = dists[-t:]
    if tail_d[-1] > l1_tol or any(b > a for a, b in zip(tail_d, tail_d[1:])):
        raise NotL1Convergent(dists)
    pers = [perimeter(s, stencil) for s in sequence]
    liminf = min(pers[-t:])
    lp = perimeter(limit, stencil)
    return SemicontinuityReport(dists, pers, liminf, lp, lp <= liminf + tol, tol)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _rle_row(row: np.ndarray) -> list[list[int]]:
    runs = []
    padded = np.concatenate(([False], row, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    for start, stop in zip(edges[::2], edges[1::2]):
        runs.append([int(start), int(stop - start)])
    return runs


def set_to_dict(s: IndicatorSet) -> dict:
    return {
        "grid_id": s.grid_id,
        "width": s.grid.width,
        "height": s.grid.height,
        "rows": [_rle_row(r) for r in s.cells],
    }


def dumps_set(s: IndicatorSet) -> str:
    return json.dumps(set_to_dict(s), sort_keys=True, separators=(",", ":"))


def set_from_dict(d: dict, grid: ConformalGrid) -> IndicatorSet:
    if d["grid_id"] != grid.id:
        raise ValueError(f"set belongs to grid {d['grid_id']}, not {grid.id}")
    m = np.zeros(grid.shape, bool)
    for i, runs in enumerate(d["rows"]):
        for start, length in runs:
            m[i, start:start + length] = True
    return IndicatorSet(grid, m)


def loads_set(text: str, grid: ConformalGrid) -> IndicatorSet:
    return set_from_dict(json.loads(text), grid)


def to_pgm(s: IndicatorSet) -> str:
    """Plain PGM (P2, maxval 1); row 0 of the grid is the first image row."""
    lines = ["P2", f"{s.grid.width} {s.grid.height}", "1"]
    lines += [" ".join("1" if x else "0" for x in row) for row in s.cells]
    return "\n".join(lines) + "\n"


def write_pgm(s: IndicatorSet, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(to_pgm(s))
