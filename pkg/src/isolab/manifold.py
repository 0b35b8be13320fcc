"""Discrete 2-D Riemannian manifolds given by a conformal factor on a lattice.

The metric is ``g = phi(x)**2 * (dx**2 + dy**2)`` sampled at lattice vertices.
A grid of ``height x width`` cells has a ``(height + 1) x (width + 1)`` vertex
array.  Cell ``(i, j)`` occupies ``[i, i+1) x [j, j+1)`` in lattice units and is
anchored at vertex ``(i, j)``; ball membership of a cell is decided at its
anchor.

Geodesic distance is the shortest path on the 8-neighbour vertex graph with
edge length ``h * step * (phi_u + phi_v) / 2`` (``step`` is 1 or sqrt 2).
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

OPEN = "open"
PERIODIC = "periodic"
BOUNDARY_MODES = (OPEN, PERIODIC)

SQRT2 = math.sqrt(2.0)
# relative slack for "distance <= R" so that equal distances reached along
# different summation orders land on the same side of the ball boundary
BALL_EPS = 1e-9


def ball_limit(R: float) -> float:
    return R + BALL_EPS * max(1.0, abs(R))


@dataclass(frozen=True, eq=False)
class ConformalGrid:
    """Rectangular cell lattice carrying a per-vertex conformal factor.

    Attributes:
        width: number of cell columns.
        height: number of cell rows.
        h: lattice spacing (length units).
        phi: vertex array of shape ``(height + 1, width + 1)``, positive.
        boundary_mode: ``"open"`` (hard wall) or ``"periodic"`` (torus).

    Instances are immutable; ``phi`` is stored as a read-only copy.
    """

    width: int
    height: int
    h: float
    phi: np.ndarray
    boundary_mode: str = OPEN
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if int(self.width) != self.width or int(self.height) != self.height:
            raise ValueError("width and height must be integers")
        if self.width < 2 or self.height < 2:
            raise ValueError(f"width and height must be >= 2, got {self.width}x{self.height}")
        try:
            h = float(self.h)
        except (TypeError, ValueError):
            raise ValueError(f"h must be a number, got {self.h!r}") from None
        if not (math.isfinite(h) and h > 0):
            raise ValueError(f"h must be a positive finite number, got {self.h!r}")
        if self.boundary_mode not in BOUNDARY_MODES:
            raise ValueError(f"boundary_mode must be one of {BOUNDARY_MODES}, got {self.boundary_mode!r}")
        phi = np.array(self.phi, dtype=float)
        if phi.shape != (self.height + 1, self.width + 1):
            raise ValueError(
                f"phi must have shape {(self.height + 1, self.width + 1)}, got {phi.shape}"
            )
        if not np.all(np.isfinite(phi)) or np.any(phi <= 0):
            raise ValueError("phi must be finite and strictly positive at every vertex")
        if self.boundary_mode == PERIODIC:
            if not (np.array_equal(phi[0], phi[-1]) and np.array_equal(phi[:, 0], phi[:, -1])):
                raise ValueError("periodic grids need phi to wrap (first row/column equal last)")
        phi.setflags(write=False)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "phi", phi)

    # -- identity -------------------------------------------------------
    @property
    def id(self) -> str:
        key = self._cache.get("id")
        if key is None:
            key = hashlib.sha256(dumps_grid(self).encode()).hexdigest()[:16]
            self._cache["id"] = key
        return key

    def __eq__(self, other):
        if not isinstance(other, ConformalGrid):
            return NotImplemented
        return self is other or self.id == other.id

    def __hash__(self):
        return hash(self.id)

    # -- shape helpers --------------------------------------------------
    @property
    def periodic(self) -> bool:
        return self.boundary_mode == PERIODIC

    @property
    def shape(self) -> tuple[int, int]:
        """Cell array shape ``(height, width)``."""
        return (self.height, self.width)

    @property
    def vertex_shape(self) -> tuple[int, int]:
        """Shape of the distinct-vertex lattice (wrapped in periodic mode)."""
        if self.periodic:
            return (self.height, self.width)
        return (self.height + 1, self.width + 1)

    @property
    def vertex_phi(self) -> np.ndarray:
        if self.periodic:
            return self.phi[:-1, :-1]
        return self.phi

    @property
    def is_flat(self) -> bool:
        """True when phi is constant, so distances have a closed form."""
        flat = self._cache.get("flat")
        if flat is None:
            flat = bool(np.all(self.phi == self.phi.flat[0]))
            self._cache["flat"] = flat
        return flat

    @property
    def cell_volumes(self) -> np.ndarray:
        vols = self._cache.get("cell_volumes")
        if vols is None:
            p = self.phi
            mean = (p[:-1, :-1] + p[1:, :-1] + p[:-1, 1:] + p[1:, 1:]) / 4.0
            vols = mean * mean * (self.h * self.h)
            vols.setflags(write=False)
            self._cache["cell_volumes"] = vols
        return vols

    @property
    def total_volume(self) -> float:
        return math.fsum(self.cell_volumes.ravel())

    def check_cell(self, cell: Sequence[int]) -> tuple[int, int]:
        i, j = int(cell[0]), int(cell[1])
        if not (0 <= i < self.height and 0 <= j < self.width):
            raise IndexError(f"cell {cell!r} outside {self.height}x{self.width} grid")
        return i, j

    def check_vertex(self, p: Sequence[int]) -> tuple[int, int]:
        i, j = int(p[0]), int(p[1])
        if self.periodic:
            return i % self.height, j % self.width
        if not (0 <= i <= self.height and 0 <= j <= self.width):
            raise IndexError(f"vertex {p!r} outside {self.height}x{self.width} grid")
        return i, j


def flat_grid(width: int, height: int, h: float = 1.0, boundary_mode: str = OPEN) -> ConformalGrid:
    return ConformalGrid(width, height, h, np.ones((height + 1, width + 1)), boundary_mode)


# ---------------------------------------------------------------------------
# caps
# ---------------------------------------------------------------------------

def bump(t):
    """C2 polynomial bump ``(1 - t**2)**3`` on ``[0, 1]``, zero outside."""
    t = np.asarray(t, dtype=float)
    out = np.where(t < 1.0, (1.0 - t * t) ** 3, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class CapSpec:
    """Curvature bumps added to a flat plane.

    ``centers`` are lattice vertices ``(row, col)``; each cap contributes
    ``amplitude * bump(|x - center| / radius)`` to phi.
    """

    centers: tuple[tuple[int, int], ...] = ()
    amplitudes: tuple[float, ...] = ()
    radii: tuple[float, ...] = ()

    def __post_init__(self):
        centers = tuple((int(c[0]), int(c[1])) for c in self.centers)
        amps = tuple(float(a) for a in self.amplitudes)
        radii = tuple(float(r) for r in self.radii)
        if not (len(centers) == len(amps) == len(radii)):
            raise ValueError("centers, amplitudes and radii must have equal length")
        for a in amps:
            if not math.isfinite(a) or a < 0:
                raise ValueError(f"cap amplitude must be >= 0, got {a}")
        for r in radii:
            if not math.isfinite(r) or r <= 0:
                raise ValueError(f"cap radius must be > 0, got {r}")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "radii", radii)

    @classmethod
    def uniform(cls, centers: Iterable[Sequence[int]], amplitude: float, radius: float) -> "CapSpec":
        centers = tuple(tuple(c) for c in centers)
        return cls(centers, (amplitude,) * len(centers), (radius,) * len(centers))

    def __len__(self):
        return len(self.centers)


def _lattice_offsets(n_rows, n_cols, center, periodic, period):
    di = np.arange(n_rows)[:, None] - center[0]
    dj = np.arange(n_cols)[None, :] - center[1]
    if periodic:
        # minimum image on the torus
        di = (di + period[0] // 2) % period[0] - period[0] // 2
        dj = (dj + period[1] // 2) % period[1] - period[1] // 2
    return di, dj


def build_plane_with_caps(
    width: int,
    height: int,
    h: float = 1.0,
    boundary_mode: str = OPEN,
    caps: CapSpec | None = None,
) -> ConformalGrid:
    """Flat plane with compactly supported bumps of the conformal factor.

    Cap supports must be pairwise disjoint and, in open mode, contained in
    the grid.  With no caps the result is the flat grid.
    """
    caps = caps or CapSpec()
    periodic = boundary_mode == PERIODIC
    if not h > 0:
        raise ValueError(f"h must be positive, got {h!r}")
    for (ci, cj), rho in zip(caps.centers, caps.radii):
        if periodic:
            if 2 * rho >= min(width, height) * h:
                raise ValueError("cap support wraps onto itself on the torus")
        elif (ci * h - rho < 0 or cj * h - rho < 0
              or ci * h + rho > height * h or cj * h + rho > width * h):
            raise ValueError(f"cap at {(ci, cj)} with radius {rho} leaves the grid")
    if len(caps) > 1:
        c = np.array(caps.centers)
        rho = np.array(caps.radii)
        di = c[:, None, 0] - c[None, :, 0]
        dj = c[:, None, 1] - c[None, :, 1]
        if periodic:
            di = (di + height // 2) % height - height // 2
            dj = (dj + width // 2) % width - width // 2
        clash = h * np.hypot(di, dj) < rho[:, None] + rho[None, :]
        np.fill_diagonal(clash, False)
        if clash.any():
            a, b = np.argwhere(clash)[0]
            raise ValueError(f"caps {a} and {b} have overlapping supports")

    phi = np.ones((height + 1, width + 1))
    for center, amp, rho in zip(caps.centers, caps.amplitudes, caps.radii):
        if amp == 0:
            continue
        if periodic:
            di, dj = _lattice_offsets(height + 1, width + 1, center, periodic, (height, width))
            # integer offsets first: recentred windows then agree bit for bit
            phi = phi + amp * bump(h * np.hypot(di, dj) / rho)
            continue
        # open mode: only the support box changes
        r = int(math.ceil(rho / h))
        i0, i1 = max(0, center[0] - r), min(height + 1, center[0] + r + 1)
        j0, j1 = max(0, center[1] - r), min(width + 1, center[1] + r + 1)
        di = np.arange(i0, i1)[:, None] - center[0]
        dj = np.arange(j0, j1)[None, :] - center[1]
        phi[i0:i1, j0:j1] = phi[i0:i1, j0:j1] + amp * bump(h * np.hypot(di, dj) / rho)
    return ConformalGrid(width, height, h, phi, boundary_mode)


def cell_volume(grid: ConformalGrid, cell: Sequence[int]) -> float:
    """Riemannian area ``phi_c**2 * h**2`` of a cell (``phi_c`` = corner mean)."""
    i, j = grid.check_cell(cell)
    return float(grid.cell_volumes[i, j])


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DistanceWindow:
    """Distances from several sources to a rectangular block of vertices.

    ``dist[s, a, b]`` is the distance from source ``s`` to vertex
    ``(origin[0] + a, origin[1] + b)``; ``inf`` beyond the search limit.
    """

    dist: np.ndarray
    origin: tuple[int, int]

    def at(self, s: int, vertices: np.ndarray) -> np.ndarray:
        """Distances from source ``s`` to an ``(n, 2)`` array of vertices."""
        a = vertices[:, 0] - self.origin[0]
        b = vertices[:, 1] - self.origin[1]
        hh, ww = self.dist.shape[1:]
        inside = (a >= 0) & (a < hh) & (b >= 0) & (b < ww)
        out = np.full(len(vertices), np.inf)
        out[inside] = self.dist[s, a[inside], b[inside]]
        return out


def _octile(di, dj, h, c):
    di = np.abs(di)
    dj = np.abs(dj)
    lo = np.minimum(di, dj)
    hi = np.maximum(di, dj)
    return (h * c) * ((hi - lo) + SQRT2 * lo)


def _crop_bounds(grid, sources, limit):
    nr, nc = grid.vertex_shape
    if grid.periodic or not math.isfinite(limit):
        return 0, nr, 0, nc
    steps = int(math.floor(limit / (grid.h * float(grid.phi.min())))) + 1
    src = np.asarray(sources)
    r0 = max(0, int(src[:, 0].min()) - steps)
    r1 = min(nr, int(src[:, 0].max()) + steps + 1)
    c0 = max(0, int(src[:, 1].min()) - steps)
    c1 = min(nc, int(src[:, 1].max()) + steps + 1)
    return r0, r1, c0, c1


def _lattice_graph(phi_block, h, periodic):
    """Sparse 8-neighbour graph over a vertex block (wrapping if periodic)."""
    nr, nc = phi_block.shape
    idx = np.arange(nr * nc).reshape(nr, nc)
    rows, cols, vals = [], [], []
    for di, dj, step in ((0, 1, 1.0), (1, 0, 1.0), (1, 1, SQRT2), (1, -1, SQRT2)):
        if periodic:
            a = idx
            b = np.roll(np.roll(idx, -di, axis=0), -dj, axis=1)
            pa = phi_block
            pb = np.roll(np.roll(phi_block, -di, axis=0), -dj, axis=1)
        else:
            r_a = slice(0, nr - di)
            r_b = slice(di, nr)
            if dj >= 0:
                c_a, c_b = slice(0, nc - dj), slice(dj, nc)
            else:
                c_a, c_b = slice(-dj, nc), slice(0, nc + dj)
            a, b = idx[r_a, c_a], idx[r_b, c_b]
            pa, pb = phi_block[r_a, c_a], phi_block[r_b, c_b]
        w = (h * step) * (pa + pb) / 2.0
        rows.append(a.ravel())
        cols.append(b.ravel())
        vals.append(w.ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    n = nr * nc
    # duplicates can appear on tiny tori; keep the shortest parallel edge
    order = np.lexsort((vals, cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    keep = np.ones(len(rows), bool)
    keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    keep &= rows != cols
    return coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()


def distance_window(grid: ConformalGrid, sources: Sequence[Sequence[int]], limit: float = math.inf) -> DistanceWindow:
    """Geodesic distances from ``sources`` (vertices) to every vertex within ``limit``.

    Flat grids use the closed-form octile distance (what the 8-neighbour
    shortest path evaluates to); other grids run Dijkstra on a crop that
    provably contains every path shorter than ``limit``.
    """
    src = np.array([grid.check_vertex(p) for p in sources], dtype=int).reshape(-1, 2)
    r0, r1, c0, c1 = _crop_bounds(grid, src, limit)
    if grid.is_flat:
        ii = np.arange(r0, r1)[None, :, None] - src[:, 0][:, None, None]
        jj = np.arange(c0, c1)[None, None, :] - src[:, 1][:, None, None]
        if grid.periodic:
            H, W = grid.vertex_shape
            ii = np.minimum(np.abs(ii) % H, H - np.abs(ii) % H)
            jj = np.minimum(np.abs(jj) % W, W - np.abs(jj) % W)
        d = _octile(ii, jj, grid.h, float(grid.phi.flat[0]))
        if math.isfinite(limit):
            d = np.where(d <= limit, d, np.inf)
        return DistanceWindow(d, (r0, c0))
    block = grid.vertex_phi[r0:r1, c0:c1]
    key = ("graph", r0, r1, c0, c1)
    graph = grid._cache.get(key)
    if graph is None:
        graph = _lattice_graph(block, grid.h, grid.periodic)
        if (r0, r1, c0, c1) == (0, grid.vertex_shape[0], 0, grid.vertex_shape[1]):
            grid._cache[key] = graph
    ww = c1 - c0
    local = (src[:, 0] - r0) * ww + (src[:, 1] - c0)
    d = dijkstra(graph, directed=False, indices=local, limit=limit)
    return DistanceWindow(d.reshape(len(src), r1 - r0, ww), (r0, c0))


def distances_from(grid: ConformalGrid, p: Sequence[int], limit: float = math.inf) -> np.ndarray:
    """Full vertex-lattice distance array from one vertex (``inf`` beyond ``limit``)."""
    win = distance_window(grid, [p], limit)
    out = np.full(grid.vertex_shape, np.inf)
    r0, c0 = win.origin
    hh, ww = win.dist.shape[1:]
    out[r0:r0 + hh, c0:c0 + ww] = win.dist[0]
    return out


def geodesic_distance(grid: ConformalGrid, p: Sequence[int], q: Sequence[int]) -> float:
    q = grid.check_vertex(q)
    return float(distances_from(grid, p)[q])


def anchor_distances(grid: ConformalGrid, dist: np.ndarray) -> np.ndarray:
    """Restrict a vertex distance array to cell anchors, shape ``(height, width)``."""
    return dist[: grid.height, : grid.width]


def metric_ball(grid: ConformalGrid, p: Sequence[int], R: float) -> np.ndarray:
    """Boolean cell mask of the closed metric ball ``B(p, R)``."""
    if R < 0:
        raise ValueError("radius must be nonnegative")
    d = anchor_distances(grid, distances_from(grid, p, ball_limit(R)))
    return d <= ball_limit(R)


def ball_kernel(h: float, c: float, R: float) -> np.ndarray:
    """Lattice stencil of the flat metric ball of radius ``R`` (phi == c)."""
    r = int(math.floor(ball_limit(R) / (h * c)))
    di, dj = np.mgrid[-r:r + 1, -r:r + 1]
    return (_octile(di, dj, h, c) <= ball_limit(R)).astype(float)


def ball_volumes(grid: ConformalGrid, weights: np.ndarray, R: float) -> np.ndarray:
    """``sum_c weights[c] * [d(p, anchor_c) <= R]`` for every vertex ``p``.

    ``weights`` is a cell array.  The result has the vertex-lattice shape.
    """
    nr, nc = grid.vertex_shape
    field_ = np.zeros((nr, nc))
    field_[: grid.height, : grid.width] = weights
    if grid.is_flat:
        k = ball_kernel(grid.h, float(grid.phi.flat[0]), R)
        mode = "wrap" if grid.periodic else "constant"
        return ndimage.correlate(field_, k, mode=mode, cval=0.0)
    cells = np.argwhere(weights != 0)
    out = np.zeros((nr, nc))
    if len(cells) == 0:
        return out
    win = distance_window(grid, cells, ball_limit(R))
    inside = win.dist <= ball_limit(R)
    w = weights[cells[:, 0], cells[:, 1]]
    r0, c0 = win.origin
    hh, ww = inside.shape[1:]
    out[r0:r0 + hh, c0:c0 + ww] = np.tensordot(w, inside, axes=1)
    return out


# ---------------------------------------------------------------------------
# curvature and bounded geometry
# ---------------------------------------------------------------------------

def _second_difference(L, axis, periodic):
    if periodic:
        return np.roll(L, 1, axis) + np.roll(L, -1, axis) - 2.0 * L
    L = np.moveaxis(L, axis, 0)
    d2 = np.empty_like(L)
    d2[1:-1] = L[2:] + L[:-2] - 2.0 * L[1:-1]
    # one-sided: reuse the neighbouring interior second difference
    d2[0] = L[0] - 2.0 * L[1] + L[2]
    d2[-1] = L[-1] - 2.0 * L[-2] + L[-3]
    return np.moveaxis(d2, 0, axis)


def curvature_field(grid: ConformalGrid) -> np.ndarray:
    """Gauss curvature ``K = -lap(log phi) / phi**2`` at every vertex.

    Five-point Laplacian; open-mode boundary vertices use one-sided second
    differences (first order).
    """
    K = grid._cache.get("curvature")
    if K is None:
        L = np.log(grid.vertex_phi)
        lap = (_second_difference(L, 0, grid.periodic) + _second_difference(L, 1, grid.periodic)) / grid.h**2
        K = -lap / grid.vertex_phi**2
        K.setflags(write=False)
        grid._cache["curvature"] = K
    return K


def gauss_curvature(grid: ConformalGrid, vertex: Sequence[int]) -> float:
    i, j = grid.check_vertex(vertex)
    if not grid.periodic and (i in (0, grid.height) or j in (0, grid.width)):
        warnings.warn(
            f"vertex {(i, j)} lies on the open boundary; using a one-sided stencil",
            RuntimeWarning,
            stacklevel=2,
        )
    return float(curvature_field(grid)[i, j])


@dataclass(frozen=True)
class GeometryReport:
    min_curvature: float
    min_unit_ball_volume: float
    curvature_ok: bool
    ball_ok: bool
    k: float
    v0: float
    dimension: int = 2

    @property
    def passes(self) -> tuple[bool, bool]:
        return (self.curvature_ok, self.ball_ok)

    def to_dict(self) -> dict:
        return {
            "min_curvature": self.min_curvature,
            "min_unit_ball_volume": self.min_unit_ball_volume,
            "passes": {"curvature": self.curvature_ok, "ball": self.ball_ok},
            "k": self.k,
            "v0": self.v0,
            "dimension": self.dimension,
        }


def _ball_centers(grid: ConformalGrid, R: float) -> np.ndarray:
    """Cell anchors whose ball of radius ``R`` cannot reach an open wall."""
    H, W = grid.shape
    if grid.periodic:
        return np.ones((H, W), bool)
    m = int(math.ceil(R / (grid.h * float(grid.phi.min()))))
    mask = np.zeros((H, W), bool)
    mask[m:H - m, m:W - m] = True
    if not mask.any():
        mask[:] = True
    return mask


def unit_ball_volumes(grid: ConformalGrid, R: float = 1.0) -> np.ndarray:
    """Volume of ``B(p, R)`` at every admissible cell anchor (NaN elsewhere)."""
    vols = ball_volumes(grid, grid.cell_volumes, R)[: grid.height, : grid.width]
    return np.where(_ball_centers(grid, R), vols, np.nan)


def verify_bounded_geometry(grid: ConformalGrid, k: float, v0: float, n: int = 2) -> GeometryReport:
    """Test ``K >= k (n - 1)`` everywhere and ``V(B(p, 1)) >= v0`` at every anchor.

    In two dimensions ``Ric = K g``.  Ball centres whose unit ball would be
    clipped by an open wall are skipped: the wall is not part of the manifold.
    """
    kmin = float(curvature_field(grid).min())
    bmin = float(np.nanmin(unit_ball_volumes(grid, 1.0)))
    return GeometryReport(kmin, bmin, kmin >= k * (n - 1), bmin >= v0, float(k), float(v0), n)


# ---------------------------------------------------------------------------
# recentring
# ---------------------------------------------------------------------------

def window_radius(h: float, R: float) -> int:
    return int(math.floor(R / h + 1e-9))


def phi_window(grid: ConformalGrid, p: Sequence[int], R: float) -> np.ndarray:
    """Vertex values of phi on the square lattice window of radius ``R`` around ``p``."""
    r = window_radius(grid.h, R)
    i, j = int(p[0]), int(p[1])
    if grid.periodic:
        H, W = grid.vertex_shape
        rows = np.arange(i - r, i + r + 1) % H
        cols = np.arange(j - r, j + r + 1) % W
        return grid.vertex_phi[np.ix_(rows, cols)]
    if i - r < 0 or j - r < 0 or i + r > grid.height or j + r > grid.width:
        raise ValueError(f"window of radius {R} around {(i, j)} exceeds the open grid")
    return grid.phi[i - r:i + r + 1, j - r:j + r + 1]


def recentered_metric_difference(
    grid_a: ConformalGrid, p_a: Sequence[int], grid_b: ConformalGrid, p_b: Sequence[int], R: float
) -> float:
    """Sup over the lattice window of radius ``R`` of ``|phi_a(p_a + u) - phi_b(p_b + u)|``."""
    if grid_a.h != grid_b.h:
        raise ValueError("recentred comparison needs equal lattice spacing")
    wa = phi_window(grid_a, p_a, R)
    wb = phi_window(grid_b, p_b, R)
    return float(np.max(np.abs(wa - wb)))


def chart_from_window(grid: ConformalGrid, p: Sequence[int], R: float) -> ConformalGrid:
    """Open grid whose phi is the recentred window; ``p`` maps to vertex ``(r, r)``."""
    w = np.array(phi_window(grid, p, R))
    n = w.shape[0] - 1
    return ConformalGrid(n, n, grid.h, w, OPEN)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def grid_to_dict(grid: ConformalGrid) -> dict:
    return {
        "width": grid.width,
        "height": grid.height,
        "h": grid.h,
        "boundary_mode": grid.boundary_mode,
        "phi": [float(x) for x in grid.phi.ravel()],
    }


def dumps_grid(grid: ConformalGrid) -> str:
    # json writes floats with repr(), the shortest round-trip form
    return json.dumps(grid_to_dict(grid), sort_keys=True)


def grid_from_dict(d: dict) -> ConformalGrid:
    W, H = int(d["width"]), int(d["height"])
    phi = np.array(d["phi"], dtype=float).reshape(H + 1, W + 1)
    return ConformalGrid(W, H, float(d["h"]), phi, d.get("boundary_mode", OPEN))


def loads_grid(text: str) -> ConformalGrid:
    return grid_from_dict(json.loads(text))
