"""Limit manifolds along diverging tracks, generalized regions, and the checks built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .concentration import Decomposition, SetSequence
from .manifold import (
    OPEN,
    ConformalGrid,
    distances_from,
    phi_window,
    window_radius,
)
from .perimeter import DEFAULT_STENCIL, IndicatorSet, PerimeterStencil, get_stencil, perimeter
from .profile import AnnealSchedule, annealed_profile_point

EXACT_TOL = 1e-9
DECAYING_TOL = 1e-3


class LimitDetectionError(RuntimeError):
    def __init__(self, message, residuals):
        self.residuals = list(residuals)
        super().__init__(message)


class AssemblyError(ValueError):
    def __init__(self, orphans):
        self.orphans = list(orphans)
        super().__init__(f"pieces without a limit manifold: {self.orphans}")


# ---------------------------------------------------------------------------
# tracks
# ---------------------------------------------------------------------------

def _track_distance(a, b, h: float) -> float:
    return h * math.hypot(a[0] - b[0], a[1] - b[1])


def cluster_diverging_tracks(tracks: Sequence[Sequence[Sequence[int]]], K: float, h: float = 1.0,
                             tail: int | None = None) -> list[list[int]]:
    """Partition tracks: two share a block when their distance stays within ``K``.

    The distance is checked at every index of the tail (the whole track by
    default); blocks are the transitive closure of that relation.
    """
    n = len(tracks)
    if n and len({len(t) for t in tracks}) != 1:
        raise ValueError("tracks must have the same length")
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a in range(n):
        for b in range(a + 1, n):
            ta, tb = tracks[a], tracks[b]
            if tail:
                ta, tb = ta[-tail:], tb[-tail:]
            if all(_track_distance(p, q, h) <= K for p, q in zip(ta, tb)):
                parent[find(b)] = find(a)
    blocks: dict[int, list[int]] = {}
    for i in range(n):
        blocks.setdefault(find(i), []).append(i)
    return sorted(blocks.values())


def track_is_bounded(track: Sequence[Sequence[int]], K: float, h: float = 1.0) -> bool:
    """True when the track never moves farther than ``K`` from its first point."""
    return all(_track_distance(p, track[0], h) <= K for p in track)


# ---------------------------------------------------------------------------
# limit detection
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LimitManifold:
    chart: ConformalGrid
    center: tuple[int, int]  # chart vertex matching the track points
    radius: float
    source_piece: int | None
    track: list[tuple[int, int]]
    indices: list[int]
    c0_residuals: list[float]
    cauchy_residuals: list[float]
    tol: float
    label: str

    def to_dict(self) -> dict:
        return {
            "chart_id": self.chart.id,
            "label": self.label,
            "center": list(self.center),
            "radius": self.radius,
            "source_piece": self.source_piece,
            "track": [list(p) for p in self.track],
            "indices": self.indices,
            "c0_residuals": self.c0_residuals,
            "cauchy_residuals": self.cauchy_residuals,
            "tol": self.tol,
        }


def _grids(sequence) -> list[ConformalGrid]:
    if isinstance(sequence, SetSequence):
        return [s.grid for s in sequence.terms]
    return [s.grid if isinstance(s, IndicatorSet) else s for s in sequence]


def _tail_ok(res: Sequence[float], tol: float, tail: int) -> bool:
    t = list(res)[-tail:]
    return bool(t) and t[-1] <= tol and all(b <= a for a, b in zip(t, t[1:]))


def detect_limit_manifold(sequence, track: Sequence[Sequence[int]], R: float, tol: float = EXACT_TOL,
                          templates: Mapping[str, ConformalGrid] | None = None, indices: Sequence[int] | None = None,
                          tail: int = 5, source_piece: int | None = None) -> LimitManifold:
    """Recentre each grid at its track point and find the C0 limit of the phi windows.

    The chart is the last window, replaced by the flat window or by a
    supplied template window (keyed by label, centred at its middle vertex)
    when that is within ``tol``.  The residual tail must be nonincreasing
    and end at or below ``tol``; otherwise detection is retried on the
    indices whose residual is already within ``tol``, provided there are at
    least ``tail`` of them.
    """
    grids = _grids(sequence)
    idx = list(range(len(grids))) if indices is None else list(indices)
    if len(idx) != len(track):
        raise ValueError("track length must match the number of indices")
    wins = [phi_window(grids[k], p, R) for k, p in zip(idx, track)]
    cauchy = [float(np.max(np.abs(b - a))) for a, b in zip(wins, wins[1:])]
    last = wins[-1]
    r = window_radius(grids[idx[0]].h, R)
    chart_phi, label = np.array(last), "tail"
    flat = np.full_like(last, float(np.median(last)))
    if float(np.max(np.abs(last - flat))) <= tol:
        chart_phi, label = flat, "flat"
    for name, tpl in sorted((templates or {}).items()):
        c = (tpl.height // 2, tpl.width // 2)
        try:
            tw = phi_window(tpl, c, R)
        except ValueError:
            continue
        if tw.shape == last.shape and float(np.max(np.abs(last - tw))) <= tol:
            chart_phi, label = np.array(tw), name
            break
    c0 = [float(np.max(np.abs(w - chart_phi))) for w in wins]
    chart = ConformalGrid(2 * r, 2 * r, grids[idx[0]].h, chart_phi, OPEN)
    track = [tuple(int(x) for x in p) for p in track]
    if _tail_ok(c0, tol, tail):
        return LimitManifold(chart, (r, r), R, source_piece, track, idx, c0, cauchy, tol, label)
    good = [n for n, x in enumerate(c0) if x <= tol]
    if len(good) >= tail and len(good) < len(c0):
        return detect_limit_manifold(
            sequence, [track[n] for n in good], R, tol, templates, [idx[n] for n in good], tail, source_piece,
        )
    worst = int(np.argmax(c0))
    raise LimitDetectionError(
        f"no C0 limit within tol={tol!r}: worst residual {c0[worst]!r} at index {idx[worst]}", c0
    )


# ---------------------------------------------------------------------------
# generalized regions
# ---------------------------------------------------------------------------

BASE = "base"


@dataclass(frozen=True, eq=False)
class Component:
    piece: int
    manifold: str  # "base" or the limit label
    grid: ConformalGrid
    cells: IndicatorSet
    limit: LimitManifold | None
    perimeter: float

    @property
    def volume(self) -> float:
        return self.cells.volume


@dataclass(frozen=True, eq=False)
class GeneralizedRegion:
    components: tuple[Component, ...]
    total_volume: float
    total_perimeter: float
    stencil: str

    def to_dict(self) -> dict:
        return {
            "components": [
                {"piece": c.piece, "manifold": c.manifold, "grid_id": c.grid.id,
                 "volume": c.volume, "perimeter": c.perimeter}
                for c in self.components
            ],
            "total_volume": self.total_volume,
            "total_perimeter": self.total_perimeter,
            "stencil": self.stencil,
        }


def recenter_cells(s: IndicatorSet, p: Sequence[int], chart: ConformalGrid, center: Sequence[int]) -> tuple[np.ndarray, float]:
    """Move cells from ``p`` to ``center`` on the chart; returns (mask, volume of cells that fall off)."""
    cells = np.argwhere(s.cells)
    shifted = cells - np.asarray(p) + np.asarray(center)
    H, W = chart.shape
    ok = (shifted[:, 0] >= 0) & (shifted[:, 0] < H) & (shifted[:, 1] >= 0) & (shifted[:, 1] < W)
    mask = np.zeros((H, W), bool)
    mask[shifted[ok, 0], shifted[ok, 1]] = True
    lost = math.fsum(s.grid.cell_volumes[cells[~ok, 0], cells[~ok, 1]])
    return mask, lost


def assemble_generalized_region(decomposition: Decomposition, limits: Mapping[int, LimitManifold | None],
                                stencil: PerimeterStencil | str = DEFAULT_STENCIL, margin: int = 2) -> GeneralizedRegion:
    """Place each piece's last trace on the base grid (``None``) or on its limit chart."""
    st = get_stencil(stencil)
    orphans = [i for i in range(decomposition.N) if i not in limits]
    if orphans:
        raise AssemblyError(orphans)
    comps = []
    for i, piece in enumerate(decomposition.pieces):
        lim = limits[i]
        trace = piece.traces[-1]
        if lim is None:
            comps.append(Component(i, BASE, trace.grid, trace, None, perimeter(trace, st)))
            continue
        mask, lost = recenter_cells(trace, piece.centers[-1], lim.chart, lim.center)
        H, W = lim.chart.shape
        inner = np.zeros((H, W), bool)
        inner[margin:H - margin, margin:W - margin] = True
        if lost > 0 or (mask & ~inner).any():
            raise ValueError(f"piece {i} does not fit inside its chart with a {margin}-cell margin; enlarge the window")
        s = IndicatorSet(lim.chart, mask)
        comps.append(Component(i, lim.label, lim.chart, s, lim, perimeter(s, st)))
    return GeneralizedRegion(
        tuple(comps),
        math.fsum(c.volume for c in comps),
        math.fsum(c.perimeter for c in comps),
        st.kind,
    )


# ---------------------------------------------------------------------------
# convergence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceReport:
    l1_residuals: list[list[float]]
    c0_residuals: list[list[float]]
    l1_tol: float
    c0_tol: float
    tail: int
    track_pass: list[bool]
    liminf_perimeter: float
    lsc_holds: bool
    volume_limit: float
    volume_gap: float
    volume_continuity: bool
    perimeter_gap: float
    passes: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _trace_residual(trace: IndicatorSet, p, comp: Component) -> float:
    if comp.limit is None:
        if trace.grid.shape == comp.grid.shape:
            return math.fsum(trace.grid.cell_volumes[trace.cells ^ comp.cells.cells])
        return math.inf
    mask, lost = recenter_cells(trace, p, comp.grid, comp.limit.center)
    return lost + math.fsum(comp.grid.cell_volumes[mask ^ comp.cells.cells])


def check_multipointed_convergence(sequence: SetSequence, decomposition: Decomposition, region: GeneralizedRegion,
                                   l1_tol: float = 1e-9, c0_tol: float | None = None, tail: int | None = None,
                                   lsc_tol: float = 1e-9) -> ConvergenceReport:
    """Per track, L1 distance of the recentred trace to its component and the C0 chart residual.

    Also reports lower semicontinuity of the total perimeter and continuity
    of the total volume along the retained subsequence.
    """
    if len(region.components) != decomposition.N:
        raise ValueError(f"region has {len(region.components)} components for {decomposition.N} pieces")
    T = tail or decomposition.params.tail
    l1s, c0s, ok = [], [], []
    for comp in region.components:
        piece = decomposition.pieces[comp.piece]
        l1 = [_trace_residual(t, p, comp) for t, p in zip(piece.traces, piece.centers)]
        if comp.limit is None:
            base = comp.grid
            c0 = [0.0 if t.grid is base or t.grid.id == base.id else math.inf for t in piece.traces]
            tol = EXACT_TOL if c0_tol is None else c0_tol
        else:
            pos = {k: n for n, k in enumerate(comp.limit.indices)}
            c0 = [comp.limit.c0_residuals[pos[k]] if k in pos else math.inf for k in piece.indices]
            tol = comp.limit.tol if c0_tol is None else c0_tol
        l1s.append(l1)
        c0s.append(c0)
        ok.append(all(x <= l1_tol for x in l1[-T:]) and all(x <= tol for x in c0[-T:]))
    S = decomposition.subsequence
    pers = [perimeter(sequence[k], region.stencil) for k in S]
    vols = [sequence[k].volume for k in S]
    liminf = min(pers[-T:])
    lsc = region.total_perimeter <= liminf + lsc_tol
    vlim = float(np.mean(vols[-T:]))
    vgap = abs(region.total_volume - vlim)
    vtol = decomposition.residual_tail + sum(p.tail_std_v for p in decomposition.pieces) + 1e-9
    pgap = abs(region.total_perimeter - decomposition.A_bar)
    passes = all(ok)
    return ConvergenceReport(l1s, c0s, l1_tol, EXACT_TOL if c0_tol is None else c0_tol, T, ok, liminf, lsc,
                             vlim, vgap, vgap <= vtol, pgap, passes)


# ---------------------------------------------------------------------------
# piece-count bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PieceCountReport:
    N: int
    v: float
    v_star: float
    bound: int
    passes: bool
    chain: dict | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def check_piece_count_bound(decomposition: Decomposition | int, v: float, v_star: float,
                            almost_minimizing: bool = False) -> PieceCountReport:
    """``N <= floor(v / v*) + 1``; with ``almost_minimizing`` also audit ``v*(N-1) <= sum_{i<N} v_i <= v``."""
    if not v_star > 0:
        raise ValueError("v_star must be positive")
    N = decomposition if isinstance(decomposition, int) else decomposition.N
    bound = int(math.floor(v / v_star + 1e-12)) + 1
    chain = None
    if almost_minimizing and not isinstance(decomposition, int):
        vs = sorted((p.v_i for p in decomposition.pieces), reverse=True)
        head = math.fsum(vs[:-1]) if N > 1 else 0.0
        lhs = v_star * (N - 1)
        chain = {"v_star_times_N_minus_1": lhs, "sum_first_N_minus_1": head,
                 "holds": lhs <= head + 1e-9 and head <= v + 1e-9}
    return PieceCountReport(N, float(v), float(v_star), bound, N <= bound, chain)


# ---------------------------------------------------------------------------
# profile on the disjoint union
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UnionProfileReport:
    volumes: list[float]
    base: list[float]
    union: list[float]
    splits: list[list[float]]
    rel_gap: list[float]
    tol: float
    passes: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def profile_union_equality(base: ConformalGrid, charts: Sequence[ConformalGrid], volumes: Sequence[float],
                           stencil: PerimeterStencil | str = DEFAULT_STENCIL, schedule: AnnealSchedule | None = None,
                           seed: int = 0, tol: float = 0.06, mesh: float | None = None) -> UnionProfileReport:
    """Compare the base profile with the disjoint-union profile over ``{base} ∪ charts``.

    Each manifold's profile is annealed on a volume mesh (the smallest base
    cell volume by default); the union value minimises the sum over all
    splits of ``v`` across manifolds.  The base itself is one of the
    options, so the union never exceeds the base and the check is one-sided:
    ``base <= (1 + tol) * union``.
    """
    st = get_stencil(stencil)
    mesh = float(base.cell_volumes.min()) if mesh is None else mesh
    manifolds = [base, *charts]
    vmax = max(volumes) if volumes else 0.0
    n_mesh = int(math.floor(vmax / mesh + 1e-9))
    tables = []
    for mi, g in enumerate(manifolds):
        tab = [0.0]
        for j in range(1, n_mesh + 1):
            u = j * mesh
            if u >= g.total_volume:
                tab.append(math.inf if not g.periodic else 0.0)
                continue
            tab.append(annealed_profile_point(g, u, st, schedule, seed + 7919 * mi + j).I_v)
        tables.append(tab)
    base_vals, union_vals, splits, gaps = [], [], [], []
    for v in volumes:
        j = int(round(v / mesh))
        if j == 0:
            base_vals.append(0.0)
            union_vals.append(0.0)
            splits.append([0.0] * len(manifolds))
            gaps.append(0.0)
            continue
        b = tables[0][j]
        # best[t] = min total perimeter using t mesh units over the manifolds so far
        best = [0.0] + [math.inf] * j
        choice: list[list[int]] = [[] for _ in range(j + 1)]
        for tab in tables:
            nb = [math.inf] * (j + 1)
            nc: list[list[int]] = [[] for _ in range(j + 1)]
            for t in range(j + 1):
                if not math.isfinite(best[t]):
                    continue
                for u in range(j - t + 1):
                    val = best[t] + tab[u]
                    if val < nb[t + u]:
                        nb[t + u] = val
                        nc[t + u] = choice[t] + [u]
            best, choice = nb, nc
        u_val = best[j]
        base_vals.append(b)
        union_vals.append(u_val)
        splits.append([u * mesh for u in choice[j]])
        gaps.append((b - u_val) / u_val if u_val > 0 else 0.0)
    passes = all(u <= b + 1e-12 and b <= (1 + tol) * u + 1e-12 for b, u in zip(base_vals, union_vals))
    return UnionProfileReport(list(map(float, volumes)), base_vals, union_vals, splits, gaps, tol, passes)


# ---------------------------------------------------------------------------
# near-isometries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IsometryReport:
    eps: float
    max_distortion: float
    holds: bool
    pairs: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def check_eps_isometry(mapping: Mapping | Callable, grid_a: ConformalGrid, grid_b: ConformalGrid, eps: float,
                       pairs: Sequence[tuple[Sequence[int], Sequence[int]]]) -> IsometryReport:
    """``(1 - eps) d_a(x, y) <= d_b(f x, f y) <= (1 + eps) d_a(x, y)`` on every sampled pair.

    The reported distortion is the largest ``|d_b / d_a - 1|``.
    """
    f = mapping if callable(mapping) else (lambda x: mapping[tuple(x)])
    worst = 0.0
    holds = True
    cache_a: dict = {}
    cache_b: dict = {}
    for x, y in pairs:
        x, y = tuple(x), tuple(y)
        fx, fy = tuple(f(x)), tuple(f(y))
        if x not in cache_a:
            cache_a[x] = distances_from(grid_a, x)
        if fx not in cache_b:
            cache_b[fx] = distances_from(grid_b, fx)
        da = float(cache_a[x][y])
        db = float(cache_b[fx][fy])
        if da == 0:
            ok = db == 0
            dist = 0.0 if ok else math.inf
        else:
            dist = abs(db / da - 1.0)
            ok = (1 - eps) * da <= db <= (1 + eps) * da
        worst = max(worst, dist)
        holds = holds and ok
    return IsometryReport(float(eps), worst, holds, len(pairs))


def translation(offset: Sequence[int]) -> Callable:
    di, dj = int(offset[0]), int(offset[1])
    return lambda x: (x[0] + di, x[1] + dj)
