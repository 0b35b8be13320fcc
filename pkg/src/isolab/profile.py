"""Isoperimetric profile points: exhaustive oracle, Lagrangian min-cut sweep, annealing."""

from __future__ import annotations

import io
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import networkx as nx
from networkx.algorithms.flow import boykov_kolmogorov
import numpy as np

from .manifold import ConformalGrid
from .perimeter import (
    DEFAULT_STENCIL,
    IndicatorSet,
    PerimeterStencil,
    edge_list,
    get_stencil,
    perimeter,
)

ORACLE = "oracle"
LAGRANGIAN = "lagrangian"
ANNEAL = "anneal"
MAX_ORACLE_CELLS = 20


@dataclass(frozen=True, eq=False)
class ProfilePoint:
    v: float
    I_v: float
    method: str
    achieved: bool
    volume_error: float
    achiever: IndicatorSet | None = None

    @property
    def achieved_volume(self) -> float | None:
        return None if self.achiever is None else self.achiever.volume


@dataclass(frozen=True, eq=False)
class ProfileCurve:
    points: tuple[ProfilePoint, ...]
    grid_id: str
    stencil: str

    def __post_init__(self):
        pts = tuple(sorted(self.points, key=lambda p: p.v))
        for a, b in zip(pts, pts[1:]):
            if not b.v > a.v:
                raise ValueError(f"profile volumes must be strictly increasing (repeat at v={b.v!r})")
        for p in pts:
            if p.I_v < 0:
                raise ValueError("negative profile value")
            if p.v == 0 and p.I_v != 0:
                raise ValueError("I(0) must be 0")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def volumes(self) -> list[float]:
        return [p.v for p in self.points]

    @property
    def values(self) -> list[float]:
        return [p.I_v for p in self.points]

    def to_csv(self) -> str:
        out = io.StringIO(newline="")
        out.write("v,I_v,method,achieved,volume_error\n")
        for p in self.points:
            out.write(f"{p.v!r},{p.I_v!r},{p.method},{str(p.achieved).lower()},{p.volume_error!r}\n")
        return out.getvalue()


def _point(grid, v, s: IndicatorSet | None, method, stencil, achieved=True) -> ProfilePoint:
    if s is None:
        return ProfilePoint(float(v), math.inf, method, False, math.inf, None)
    return ProfilePoint(float(v), perimeter(s, stencil), method, achieved, abs(s.volume - v), s)


# ---------------------------------------------------------------------------
# exhaustive oracle
# ---------------------------------------------------------------------------

def _enumerate(grid: ConformalGrid, stencil: PerimeterStencil):
    n = grid.width * grid.height
    if n > MAX_ORACLE_CELLS:
        raise ValueError(
            f"exhaustive enumeration is capped at {MAX_ORACLE_CELLS} cells (grid has {n}); "
            "use lagrangian_cut_profile or annealed_profile_point"
        )
    key = ("enumeration", stencil.kind)
    cached = grid._cache.get(key)
    if cached is not None:
        return cached
    masks = np.arange(1 << n, dtype=np.uint32)
    u, v, w = edge_list(grid, stencil)
    per = np.zeros(masks.shape)
    for a, b, wt in zip(u, v, w):
        bit_a = (masks >> np.uint32(a)) & 1
        cut = bit_a if b < 0 else bit_a ^ ((masks >> np.uint32(b)) & 1)
        per += wt * cut
    vol = np.zeros(masks.shape)
    for c, cv in enumerate(grid.cell_volumes.ravel()):
        vol += cv * ((masks >> np.uint32(c)) & 1)
    grid._cache[key] = (masks, vol, per)
    return masks, vol, per


def _mask_set(grid, m: int) -> IndicatorSet:
    n = grid.width * grid.height
    bits = np.array([(m >> c) & 1 for c in range(n)], bool).reshape(grid.shape)
    return IndicatorSet(grid, bits)


def achievable_volumes(grid: ConformalGrid) -> list[float]:
    """Distinct subset volumes of a grid small enough to enumerate."""
    _, vol, _ = _enumerate(grid, get_stencil("cut4"))
    return np.unique(vol).tolist()


def brute_force_profile(grid: ConformalGrid, volumes: Iterable[float] | None = None,
                        stencil: PerimeterStencil | str = DEFAULT_STENCIL) -> ProfileCurve:
    """Exact minimum perimeter over all subsets within half a cell-volume of each target.

    Ties go to the subset with the smallest bit pattern (cell 0 is bit 0).
    With ``volumes=None`` every achievable volume is sampled exactly.
    """
    stencil = get_stencil(stencil)
    masks, vol, per = _enumerate(grid, stencil)
    half = 0.5 * float(grid.cell_volumes.min())
    if volumes is None:
        volumes = np.unique(vol).tolist()
        half = 0.0
    points = {}
    for v in volumes:
        ok = np.flatnonzero(np.abs(vol - v) <= half * (1 + 1e-12)) if half else np.flatnonzero(vol == v)
        if ok.size == 0:
            points[v] = _point(grid, v, None, ORACLE, stencil)
            continue
        best = ok[per[ok] == per[ok].min()][0]
        s = _mask_set(grid, int(masks[best]))
        if half:
            points[v] = _point(grid, v, s, ORACLE, stencil)
        else:
            # exact sampling: report the compensated-sum volume of the achiever
            pt = _point(grid, s.volume, s, ORACLE, stencil)
            if s.volume not in points or pt.I_v < points[s.volume].I_v:
                points[s.volume] = pt
    return ProfileCurve(tuple(points.values()), grid.id, stencil.kind)


def lower_convex_envelope(points: Iterable[tuple[float, float]], rel_tol: float = 1e-9) -> list[tuple[float, float]]:
    """Vertices of the lower convex hull.

    Points within ``rel_tol`` (relative to the bounding box) of a hull edge
    count as collinear and are dropped.
    """
    pts = sorted(set((float(v), float(p)) for v, p in points if math.isfinite(p)))
    # keep the lowest value per volume
    best = {}
    for v, p in pts:
        if v not in best or p < best[v]:
            best[v] = p
    pts = sorted(best.items())
    if not pts:
        return []
    span_v = max(abs(v) for v, _ in pts) or 1.0
    span_p = max(abs(p) for _, p in pts) or 1.0
    tol = rel_tol * span_v * span_p
    hull: list[tuple[float, float]] = []
    for q in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            cross = (x2 - x1) * (q[1] - y1) - (y2 - y1) * (q[0] - x1)
            if cross <= tol:
                hull.pop()
            else:
                break
        hull.append(q)
    return hull


# ---------------------------------------------------------------------------
# Lagrangian relaxation: min over E of P(E) - lam * V(E) as a minimum cut
# ---------------------------------------------------------------------------

class _CutProblem:
    def __init__(self, grid: ConformalGrid, stencil: PerimeterStencil):
        self.grid = grid
        self.stencil = stencil
        u, v, w = edge_list(grid, stencil)
        n = grid.width * grid.height
        self.vol = grid.cell_volumes.ravel()
        self.pair = {}
        self.out = np.zeros(n)
        for a, b, wt in zip(u.tolist(), v.tolist(), w.tolist()):
            if b < 0:
                self.out[a] += wt
            elif a != b:
                key = (a, b) if a < b else (b, a)
                self.pair[key] = self.pair.get(key, 0.0) + wt
        degree = self.out.copy()
        for (a, b), wt in self.pair.items():
            degree[a] += wt
            degree[b] += wt
        self.lam_full = 2.0 * float(np.max(degree / self.vol)) + 1.0

    def solve(self, lam: float) -> IndicatorSet:
        if lam < 0:
            raise ValueError("lambda must be nonnegative")
        G = nx.DiGraph()
        n = len(self.vol)
        G.add_nodes_from(range(n))
        G.add_node("s")
        G.add_node("t")
        for c in range(n):
            if lam > 0:
                G.add_edge("s", c, capacity=lam * float(self.vol[c]))
            if self.out[c] > 0:
                G.add_edge(c, "t", capacity=float(self.out[c]))
        for (a, b), wt in self.pair.items():
            G.add_edge(a, b, capacity=wt)
            G.add_edge(b, a, capacity=wt)
        # smallest minimiser: cells reachable from s in the residual network
        R = boykov_kolmogorov(G, "s", "t")
        seen = {"s"}
        todo = ["s"]
        while todo:
            a = todo.pop()
            for b, attr in R.succ[a].items():
                if b not in seen and attr["capacity"] - attr["flow"] > 0:
                    seen.add(b)
                    todo.append(b)
        mask = np.zeros(n, bool)
        mask[[c for c in seen if c != "s"]] = True
        return IndicatorSet(self.grid, mask.reshape(self.grid.shape))


def lagrangian_cut_profile(grid: ConformalGrid, lambda_schedule: Sequence[float] | str = "auto",
                           stencil: PerimeterStencil | str = DEFAULT_STENCIL) -> ProfileCurve:
    """Profile points from ``min P(E) - lam V(E)``; they are the convex-envelope vertices.

    ``"auto"`` finds every envelope vertex by breakpoint bisection between the
    empty set and the full grid.  A list of lambdas solves each one; repeated
    volumes are merged.
    """
    stencil = get_stencil(stencil)
    prob = _CutProblem(grid, stencil)
    found: dict[float, IndicatorSet] = {}

    def add(s: IndicatorSet):
        found.setdefault(s.volume, s)

    if isinstance(lambda_schedule, str):
        if lambda_schedule != "auto":
            raise ValueError(f"unknown lambda schedule {lambda_schedule!r}")
        lo = prob.solve(0.0)
        hi = prob.solve(prob.lam_full)
        add(lo)
        add(hi)
        stack = [(lo, perimeter(lo, stencil), hi, perimeter(hi, stencil))]
        while stack:
            a, pa, b, pb = stack.pop()
            if b.volume <= a.volume:
                continue
            lam = (pb - pa) / (b.volume - a.volume)
            if lam < 0:
                continue
            e = prob.solve(lam)
            pe = perimeter(e, stencil)
            base = pa - lam * a.volume
            if pe - lam * e.volume < base - 1e-9 * max(1.0, abs(pa) + lam * a.volume):
                add(e)
                stack.append((a, pa, e, pe))
                stack.append((e, pe, b, pb))
    else:
        for lam in lambda_schedule:
            add(prob.solve(float(lam)))
    points = [_point(grid, v, s, LAGRANGIAN, stencil) for v, s in sorted(found.items())]
    return ProfileCurve(tuple(points), grid.id, stencil.kind)


# ---------------------------------------------------------------------------
# annealing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnnealSchedule:
    """Cooling schedule; ``T0=None`` means the mean stencil edge weight."""

    T0: float | None = None
    cooling: float = 0.995
    max_sweeps: int = 100_000
    min_temp_ratio: float = 1e-3
    patience: int = 400
    guard: int = 1

    def __post_init__(self):
        if not 0 < self.cooling < 1:
            raise ValueError("cooling must lie in (0, 1)")
        if self.T0 is not None and not self.T0 > 0:
            raise ValueError("T0 must be positive")
        if self.max_sweeps < 1 or self.patience < 1 or self.guard < 0:
            raise ValueError("sweep limits must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


class _IndexedSet:
    """Set with O(1) insert, delete and uniform random choice."""

    def __init__(self):
        self.items: list[int] = []
        self.pos: dict[int, int] = {}

    def __len__(self):
        return len(self.items)

    def __contains__(self, x):
        return x in self.pos

    def add(self, x):
        if x not in self.pos:
            self.pos[x] = len(self.items)
            self.items.append(x)

    def discard(self, x):
        i = self.pos.pop(x, None)
        if i is None:
            return
        last = self.items.pop()
        if i < len(self.items):
            self.items[i] = last
            self.pos[last] = i

    def choice(self, rng):
        return self.items[int(rng.integers(len(self.items)))]


class _Annealer:
    def __init__(self, grid: ConformalGrid, stencil: PerimeterStencil):
        self.grid = grid
        H, W = grid.shape
        self.n = H * W
        u, v, w = edge_list(grid, stencil)
        nbrs: list[list[tuple[int, float]]] = [[] for _ in range(self.n)]
        for a, b, wt in zip(u.tolist(), v.tolist(), w.tolist()):
            if a == b:
                continue
            nbrs[a].append((b, wt))
            if b >= 0:
                nbrs[b].append((a, wt))
        self.nbrs = nbrs
        self.mean_weight = float(np.mean(w))
        self.vol = grid.cell_volumes.ravel().tolist()
        four = []
        for c in range(self.n):
            i, j = divmod(c, W)
            lst = []
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ii, jj = i + di, j + dj
                if grid.periodic:
                    lst.append((ii % H) * W + (jj % W))
                elif 0 <= ii < H and 0 <= jj < W:
                    lst.append(ii * W + jj)
                else:
                    lst.append(-1)
            four.append(lst)
        self.four = four

    def delta(self, x, c) -> float:
        xc = x[c]
        d = 0.0
        for b, wt in self.nbrs[c]:
            xb = x[b] if b >= 0 else 0
            d += wt if xb == xc else -wt
        return d


def annealed_profile_point(grid: ConformalGrid, v: float,
                           stencil: PerimeterStencil | str = DEFAULT_STENCIL,
                           schedule: AnnealSchedule | None = None, seed: int = 0) -> ProfilePoint:
    """Upper bound on the profile at ``v`` by seeded simulated annealing.

    A greedy fill-in grows a set from the heaviest cell nearest the grid
    centre, adding the frontier cell with the least perimeter increase per
    unit volume, until the volume error stops shrinking; Metropolis pair swaps
    (remove an inner frontier cell, add an outer one) then lower the
    perimeter while keeping the volume within one cell-volume of ``v``.
    """
    stencil = get_stencil(stencil)
    schedule = schedule or AnnealSchedule()
    total = grid.total_volume
    if not 0 < v < total:
        raise ValueError(f"target volume {v!r} must lie strictly between 0 and the total volume {total!r}")
    rng = np.random.default_rng(seed)
    ann = grid._cache.get(("annealer", stencil.kind))
    if ann is None:
        ann = grid._cache[("annealer", stencil.kind)] = _Annealer(grid, stencil)
    H, W = grid.shape
    n = ann.n
    vol = ann.vol
    tol = float(grid.cell_volumes.max())
    x = bytearray(n)

    inner, outer = _IndexedSet(), _IndexedSet()

    def refresh(c):
        if c < 0:
            return
        inner.discard(c)
        outer.discard(c)
        if x[c]:
            if any(b < 0 or not x[b] for b in ann.four[c]):
                inner.add(c)
        elif any(b >= 0 and x[b] for b in ann.four[c]):
            outer.add(c)

    def flip(c):
        x[c] ^= 1
        refresh(c)
        for b in ann.four[c]:
            refresh(b)

    # fill-in
    cv = grid.cell_volumes
    ii, jj = np.mgrid[0:H, 0:W]
    centre_d = (ii + 0.5 - H / 2.0) ** 2 + (jj + 0.5 - W / 2.0) ** 2
    order = np.lexsort((centre_d.ravel(), -cv.ravel()))
    start = int(order[0])
    P = ann.delta(x, start)
    flip(start)
    V = vol[start]
    while True:
        cands = sorted(outer.items)
        if not cands:
            break
        ds = [ann.delta(x, c) for c in cands]
        # perimeter cost per unit volume, so heavy cells are not starved
        rs = [d / vol[c] for c, d in zip(cands, ds)]
        m = min(rs)
        ties = [k for k, r in enumerate(rs) if r <= m + 1e-12]
        k = ties[int(rng.integers(len(ties)))] if len(ties) > 1 else ties[0]
        best_c, best_d = cands[k], ds[k]
        if abs(V + vol[best_c] - v) >= abs(V - v):
            break
        P += best_d
        flip(best_c)
        V += vol[best_c]

    best_x, best_P, best_V = bytes(x), P, V
    T0 = schedule.T0 if schedule.T0 is not None else ann.mean_weight
    T = T0
    stale = 0
    for _sweep in range(schedule.max_sweeps):
        if T < schedule.min_temp_ratio * T0 or stale >= schedule.patience:
            break
        improved = False
        for _ in range(max(1, len(inner))):
            if not inner or not outer:
                break
            a = inner.choice(rng)
            b = outer.choice(rng)
            nv = V - vol[a] + vol[b]
            if abs(nv - v) > tol:
                continue
            d1 = ann.delta(x, a)
            x[a] = 0
            d2 = ann.delta(x, b)
            x[a] = 1
            dP = d1 + d2
            if dP <= 0 or rng.random() < math.exp(-dP / T):
                flip(a)
                flip(b)
                P += dP
                V = nv
                if P < best_P - 1e-12:
                    best_x, best_P, best_V = bytes(x), P, V
                    improved = True
        stale = 0 if improved else stale + 1
        T *= schedule.cooling

    mask = np.frombuffer(best_x, dtype=np.uint8).astype(bool).reshape(H, W)
    s = IndicatorSet(grid, mask)
    achieved = True
    if not grid.periodic:
        g = schedule.guard
        interior = np.zeros((H, W), bool)
        interior[g:H - g, g:W - g] = True
        achieved = not (mask & ~interior).any()
    return _point(grid, v, s, ANNEAL, stencil, achieved)


def annealed_profile(grid: ConformalGrid, volumes: Iterable[float],
                     stencil: PerimeterStencil | str = DEFAULT_STENCIL,
                     schedule: AnnealSchedule | None = None, seed: int = 0) -> ProfileCurve:
    stencil = get_stencil(stencil)
    pts = [annealed_profile_point(grid, v, stencil, schedule, seed + k) for k, v in enumerate(volumes)]
    return ProfileCurve(tuple(pts), grid.id, stencil.kind)


# ---------------------------------------------------------------------------
# continuity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContinuityReport:
    jumps: list[float]
    ratios: list[float]
    max_jump: float
    max_ratio: float
    tol: float | None
    step: float | None
    flagged: list[int] = field(default_factory=list)

    @property
    def passes(self) -> bool:
        return not self.flagged

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passes"] = self.passes
        return d


def continuity_tolerance(grid: ConformalGrid) -> float:
    """Largest single-cell perimeter change, ``4 h max(phi)``."""
    return 4.0 * grid.h * float(grid.phi.max())


def profile_continuity_report(curve: ProfileCurve | Sequence[tuple[float, float]],
                              tol: float | None = None, step: float | None = None) -> ContinuityReport:
    """Adjacent jumps of a sampled profile and their ``sqrt(dv)`` ratios.

    With ``tol`` set, the jump between samples ``dv`` apart may not exceed
    ``tol * max(1, dv / step)``; ``step`` defaults to the smallest gap.
    """
    if isinstance(curve, ProfileCurve):
        pts = [(p.v, p.I_v) for p in curve.points if math.isfinite(p.I_v)]
    else:
        pts = [(float(v), float(i)) for v, i in curve]
        if any(b[0] <= a[0] for a, b in zip(pts, pts[1:])):
            raise ValueError("profile samples must be sorted by strictly increasing volume")
    if len(pts) < 3:
        raise ValueError("continuity needs at least 3 samples")
    dv = [b[0] - a[0] for a, b in zip(pts, pts[1:])]
    jumps = [abs(b[1] - a[1]) for a, b in zip(pts, pts[1:])]
    ratios = [j / math.sqrt(d) for j, d in zip(jumps, dv)]
    flagged = []
    if tol is not None:
        step = min(dv) if step is None else step
        flagged = [k for k, (j, d) in enumerate(zip(jumps, dv)) if j > tol * max(1.0, d / step) + 1e-12]
    return ContinuityReport(jumps, ratios, max(jumps), max(ratios), tol, step, flagged)
