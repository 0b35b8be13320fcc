"""Concentration-compactness decomposition of bounded sequences of finite perimeter sets.

A sequence of sets with bounded volume and perimeter is split greedily into
pieces.  Each piece follows, index by index, the ball of working radius that
captures the most residual volume, grows its radius along the sequence and
cuts at a radius where the sphere crosses little of the set.  Indices whose
growth window is obstructed are dropped, so the pieces share one retained
subsequence.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .manifold import ConformalGrid, anchor_distances, ball_limit, ball_volumes, distances_from
from .perimeter import (
    DEFAULT_STENCIL,
    IndicatorSet,
    PerimeterStencil,
    dumps_set,
    get_stencil,
    interface_length,
    perimeter,
    perimeter_in,
)

TIE_REL = 1e-12


class EvanescenceError(RuntimeError):
    """Residual volume persists but no ball captures any of it."""


class WallProximityError(ValueError):
    """An active set comes closer to an open wall than the guard allows."""


class CoareaFailure(RuntimeError):
    """No radius in the window meets the crossing budget."""

    def __init__(self, best: "CoareaCut"):
        self.best = best
        super().__init__(
            f"no radius in [{best.r_lo}, {best.r_hi}] meets budget {best.budget!r}; "
            f"smallest crossing {best.crossing!r} at R={best.radius!r}"
        )


# ---------------------------------------------------------------------------
# sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SetSequence:
    """Indexed sets, each on its own grid, with volume and perimeter bounds.

    Missing bounds default to the observed maxima.
    """

    terms: tuple[IndicatorSet, ...]
    volume_bound: float | None = None
    perimeter_bound: float | None = None
    stencil: str = DEFAULT_STENCIL.kind
    volumes: tuple[float, ...] = field(init=False)
    perimeters: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        terms = tuple(t[1] if isinstance(t, tuple) else t for t in self.terms)
        if not terms:
            raise ValueError("empty sequence")
        st = get_stencil(self.stencil)
        vols = tuple(t.volume for t in terms)
        pers = tuple(perimeter(t, st) for t in terms)
        v = max(vols) if self.volume_bound is None else float(self.volume_bound)
        A = max(pers) if self.perimeter_bound is None else float(self.perimeter_bound)
        for k, (vk, pk) in enumerate(zip(vols, pers)):
            if vk > v * (1 + 1e-12):
                raise ValueError(f"term {k} has volume {vk!r} above the bound {v!r}")
            if pk > A * (1 + 1e-12):
                raise ValueError(f"term {k} has perimeter {pk!r} above the bound {A!r}")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "stencil", st.kind)
        object.__setattr__(self, "volume_bound", v)
        object.__setattr__(self, "perimeter_bound", A)
        object.__setattr__(self, "volumes", vols)
        object.__setattr__(self, "perimeters", pers)

    def __len__(self):
        return len(self.terms)

    def __getitem__(self, k) -> IndicatorSet:
        return self.terms[k]

    @property
    def h(self) -> float:
        return self.terms[0].grid.h


# ---------------------------------------------------------------------------
# concentration function
# ---------------------------------------------------------------------------

def _weights(s: IndicatorSet) -> np.ndarray:
    return np.where(s.cells, s.grid.cell_volumes, 0.0)


def _distinct_vertices(grid: ConformalGrid, field_: np.ndarray) -> np.ndarray:
    return field_[: grid.height, : grid.width] if grid.periodic else field_


def concentration_center(s: IndicatorSet, R: float) -> tuple[tuple[int, int], float]:
    """Vertex maximising the captured volume ``V(s ∩ B(p, R))`` and that volume.

    Ties (within a relative 1e-12) go to the lexicographically smallest vertex.
    """
    q = _distinct_vertices(s.grid, ball_volumes(s.grid, _weights(s), R))
    qmax = float(q.max())
    if qmax <= 0:
        return (0, 0), 0.0
    i, j = np.argwhere(q >= qmax * (1 - TIE_REL))[0]
    return (int(i), int(j)), float(q[i, j])


def concentration_function(term: IndicatorSet | tuple, radii: Sequence[float]) -> list[tuple[float, float]]:
    """``Q(R) = max_p V(s ∩ B(p, R))`` over all grid vertices, for each radius."""
    s = term[1] if isinstance(term, tuple) else term
    radii = [float(r) for r in radii]
    if any(b < a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be sorted ascending")
    w = _weights(s)
    out = []
    for R in radii:
        q = _distinct_vertices(s.grid, ball_volumes(s.grid, w, R))
        out.append((R, min(float(q.max()), s.volume)))
    return out


# ---------------------------------------------------------------------------
# coarea radius selection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoareaCut:
    radius: float
    crossing: float  # weight of edges joining the inside and outside parts of the set
    added: float  # P(s ∩ B) - P(s; B)
    budget: float
    r_lo: float
    r_hi: float
    feasible: bool


def _member_distances(s: IndicatorSet, p) -> np.ndarray:
    return anchor_distances(s.grid, distances_from(s.grid, p))


def _cut_at(s: IndicatorSet, dist: np.ndarray, R: float, stencil) -> tuple[IndicatorSet, IndicatorSet, float]:
    ball = dist <= ball_limit(R)
    inside = IndicatorSet(s.grid, s.cells & ball)
    outside = IndicatorSet(s.grid, s.cells & ~ball)
    return inside, outside, interface_length(inside, outside, stencil)


def _coarea(s, dist, r_lo, r_hi, budget, stencil) -> CoareaCut:
    member_d = dist[s.cells]
    window = np.unique(member_d[(member_d > ball_limit(r_lo)) & (member_d <= ball_limit(r_hi))])
    best = None
    for R in [r_lo, *window.tolist()]:
        inside, outside, crossing = _cut_at(s, dist, R, stencil)
        if best is None or crossing < best[1]:
            best = (R, crossing, inside)
        if crossing <= budget:
            added = perimeter(inside, stencil) - perimeter_in(s, dist <= ball_limit(R), stencil)
            return CoareaCut(float(R), crossing, added, budget, r_lo, r_hi, True)
    R, crossing, inside = best
    added = perimeter(inside, stencil) - perimeter_in(s, dist <= ball_limit(R), stencil)
    return CoareaCut(float(R), crossing, added, budget, r_lo, r_hi, False)


def select_radius_coarea(term: IndicatorSet | tuple, p, R_lo: float, R_hi: float, budget: float,
                         stencil: PerimeterStencil | str = DEFAULT_STENCIL) -> CoareaCut:
    """Smallest radius in ``[R_lo, R_hi]`` whose sphere crosses at most ``budget`` of the set.

    Only radii where the captured set changes are tried: ``R_lo`` and each
    member distance in the window.  Cutting there satisfies
    ``P(s ∩ B) <= P(s; B) + crossing``.
    """
    s = term[1] if isinstance(term, tuple) else term
    if not budget > 0:
        raise ValueError("budget must be positive")
    if R_hi < R_lo:
        raise ValueError("R_hi must be at least R_lo")
    st = get_stencil(stencil)
    cut = _coarea(s, _member_distances(s, p), float(R_lo), float(R_hi), float(budget), st)
    if not cut.feasible:
        raise CoareaFailure(cut)
    return cut


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------

def _default_budget(v: float) -> Callable[[int], float]:
    return lambda m: v / (m + 1)


@dataclass(frozen=True)
class DecompositionParams:
    """Engine settings; ``None`` entries resolve against the sequence.

    ``working_radius`` defaults to 4h, ``stop_threshold`` to
    ``max(1e-6, 1e-3 v)`` and ``budget`` to ``m -> v / (m + 1)`` for the
    ``m``-th retained index of a piece.
    """

    working_radius: float | None = None
    epsilon: float = 0.0
    budget: Callable[[int], float] | None = None
    escalation: int = 3
    tail: int = 5
    stop_threshold: float | None = None
    piece_cap: int = 64
    wall_guard: bool = True
    calibration_radius: float = 1.0

    def resolve(self, seq: SetSequence) -> "DecompositionParams":
        v = seq.volume_bound
        rw = 4.0 * seq.h if self.working_radius is None else float(self.working_radius)
        if rw < self.calibration_radius:
            raise ValueError("working radius must be at least the calibration radius")
        return DecompositionParams(
            working_radius=rw,
            epsilon=self.epsilon,
            budget=self.budget or _default_budget(v),
            escalation=self.escalation,
            tail=self.tail,
            stop_threshold=max(1e-6, 1e-3 * v) if self.stop_threshold is None else self.stop_threshold,
            piece_cap=self.piece_cap,
            wall_guard=self.wall_guard,
            calibration_radius=self.calibration_radius,
        )

    def to_dict(self) -> dict:
        return {
            "working_radius": self.working_radius,
            "epsilon": self.epsilon,
            "escalation": self.escalation,
            "tail": self.tail,
            "stop_threshold": self.stop_threshold,
            "piece_cap": self.piece_cap,
            "wall_guard": self.wall_guard,
            "calibration_radius": self.calibration_radius,
        }


@dataclass
class Piece:
    """One concentration piece over its retained indices."""

    indices: list[int]
    centers: list[tuple[int, int]]
    radii: list[float]
    traces: list[IndicatorSet]
    volumes: list[float]
    perimeters: list[float]
    cuts: list[CoareaCut]
    residual_stats: list[tuple[float, float, float]]  # (V', P', Q'(calibration radius)) before the cut
    escalations: int = 0
    tail: int = 5
    v_i: float = 0.0
    A_i: float = 0.0
    tail_std_v: float = 0.0
    tail_std_A: float = 0.0

    def restrict(self, keep: Sequence[int]) -> "Piece":
        keep = set(keep)
        sel = [n for n, k in enumerate(self.indices) if k in keep]
        p = Piece(
            [self.indices[n] for n in sel],
            [self.centers[n] for n in sel],
            [self.radii[n] for n in sel],
            [self.traces[n] for n in sel],
            [self.volumes[n] for n in sel],
            [self.perimeters[n] for n in sel],
            [self.cuts[n] for n in sel],
            [self.residual_stats[n] for n in sel],
            self.escalations,
            self.tail,
        )
        p.summarize()
        return p

    def summarize(self) -> None:
        t = self.volumes[-self.tail:]
        a = self.perimeters[-self.tail:]
        self.v_i = float(np.mean(t)) if t else 0.0
        self.A_i = float(np.mean(a)) if a else 0.0
        self.tail_std_v = float(np.std(t)) if t else 0.0
        self.tail_std_A = float(np.std(a)) if a else 0.0

    def at(self, k: int) -> IndicatorSet:
        return self.traces[self.indices.index(k)]

    @property
    def infeasible_cuts(self) -> int:
        return sum(not c.feasible for c in self.cuts)

    def to_dict(self) -> dict:
        return {
            "v_i": self.v_i,
            "A_i": self.A_i,
            "tail_std": {"v": self.tail_std_v, "A": self.tail_std_A},
            "indices": self.indices,
            "centers": [list(c) for c in self.centers],
            "radii": self.radii,
            "volumes": self.volumes,
            "perimeters": self.perimeters,
            "crossings": [c.crossing for c in self.cuts],
            "budgets": [c.budget for c in self.cuts],
            "infeasible_cuts": self.infeasible_cuts,
            "escalations": self.escalations,
        }


def _check_wall(s: IndicatorSet, margin_len: float):
    g = s.grid
    if g.periodic or not s.cells.any():
        return
    m = int(math.ceil(margin_len / (g.h * float(g.phi.min())) - 1e-9))
    H, W = g.shape
    inner = np.zeros((H, W), bool)
    inner[m:H - m, m:W - m] = True
    if (s.cells & ~inner).any():
        raise WallProximityError(
            f"active cells lie within {margin_len!r} of the open wall of grid {g.id}; "
            "enlarge the grid or disable the wall guard"
        )


def extract_piece(sequence: SetSequence, residuals: dict[int, IndicatorSet] | None = None,
                  subsequence: Sequence[int] | None = None,
                  params: DecompositionParams | None = None):
    """Extract one piece; returns ``(piece, residuals, retained subsequence)``.

    For retained index number ``m`` the radius is cut in
    ``(F_m, F_m + (m + 1) h]`` where ``F_0`` is the working radius and
    ``F_{m+1} = F_m + (m + 1) h``.  An index whose window holds residual mass
    above ``epsilon`` is skipped, unless the obstruction has stopped receding
    over ``escalation`` consecutive indices: the floor then jumps past it and
    the obstruction joins this piece.
    """
    params = (params or DecompositionParams()).resolve(sequence)
    st = get_stencil(sequence.stencil)
    S = list(range(len(sequence))) if subsequence is None else list(subsequence)
    if residuals is None:
        residuals = {k: sequence[k] for k in S}
    rw = params.working_radius
    h = sequence.h
    L = max(1, params.escalation)

    piece = Piece([], [], [], [], [], [], [], [], tail=params.tail)
    new_res = {}
    floor = rw
    m = 0
    obstructions: list[float] = []
    for k in S:
        res = residuals[k]
        p, q = concentration_center(res, rw)
        if q <= 0:
            obstructions = []
            continue
        dist = _member_distances(res, p)
        member_d = dist[res.cells]
        width = (m + 1) * h
        in_window = (member_d > ball_limit(floor)) & (member_d <= ball_limit(floor + width))
        window_mass = math.fsum(res.grid.cell_volumes[res.cells][in_window])
        if window_mass > params.epsilon:
            beyond = member_d[member_d > ball_limit(floor)]
            obstructions.append(float(beyond.min()))
            if len(obstructions) >= L and obstructions[-1] <= obstructions[-L]:
                ds = np.unique(member_d[member_d >= floor])
                for r_star in ds:
                    ahead = (member_d > ball_limit(r_star)) & (member_d <= ball_limit(r_star + width))
                    if math.fsum(res.grid.cell_volumes[res.cells][ahead]) <= params.epsilon:
                        break
                floor = max(floor, float(r_star))
                piece.escalations += 1
            else:
                continue
        obstructions = []
        _, q1 = concentration_center(res, params.calibration_radius)
        cut = _coarea(res, dist, floor, floor + width, params.budget(m), st)
        inside, outside, _ = _cut_at(res, dist, cut.radius, st)
        piece.indices.append(k)
        piece.centers.append(p)
        piece.radii.append(cut.radius)
        piece.traces.append(inside)
        piece.volumes.append(inside.volume)
        piece.perimeters.append(perimeter(inside, st))
        piece.cuts.append(cut)
        piece.residual_stats.append((res.volume, perimeter(res, st), q1))
        new_res[k] = outside
        floor = floor + width
        m += 1
    if not piece.indices:
        # every index obstructed by a receding neighbour: keep the last one whole
        k = S[-1]
        res = residuals[k]
        p, q = concentration_center(res, rw)
        if q <= 0:
            raise EvanescenceError("no residual mass is captured by any ball; bounded geometry is violated")
        dist = _member_distances(res, p)
        R = float(dist[res.cells].max())
        _, q1 = concentration_center(res, params.calibration_radius)
        cut = _coarea(res, dist, R, R, params.budget(0), st)
        inside, outside, _ = _cut_at(res, dist, R, st)
        piece.indices.append(k)
        piece.centers.append(p)
        piece.radii.append(R)
        piece.traces.append(inside)
        piece.volumes.append(inside.volume)
        piece.perimeters.append(perimeter(inside, st))
        piece.cuts.append(cut)
        piece.residual_stats.append((res.volume, perimeter(res, st), q1))
        piece.escalations += 1
        new_res[k] = outside
    piece.summarize()
    if piece.v_i <= 0:
        raise EvanescenceError("extracted piece has zero limit volume; bounded geometry is violated")
    return piece, new_res, list(piece.indices)


@dataclass
class Decomposition:
    pieces: list[Piece]
    leftover: dict[int, IndicatorSet]
    subsequence: list[int]
    v_bar: float
    A_bar: float
    slack: float
    residual_tail: float
    incomplete: bool
    stop_threshold: float
    volume_bound: float
    perimeter_bound: float
    params: DecompositionParams

    @property
    def N(self) -> int:
        return len(self.pieces)

    def partition_defects(self, sequence: SetSequence) -> list[tuple[int, bool, float]]:
        """Per retained index: (index, exact cell partition, volume defect)."""
        out = []
        for k in self.subsequence:
            omega = sequence[k]
            parts = [p.at(k) for p in self.pieces] + [self.leftover[k]]
            cover = np.zeros(omega.grid.shape, int)
            for s in parts:
                cover += s.cells
            exact = bool(np.array_equal(cover, omega.cells.astype(int)))
            cv = omega.grid.cell_volumes
            total = math.fsum(np.concatenate([cv[s.cells] for s in parts]))
            out.append((k, exact, abs(total - omega.volume)))
        return out

    def to_dict(self) -> dict:
        return {
            "pieces": [p.to_dict() for p in self.pieces],
            "N": self.N,
            "v_bar": self.v_bar,
            "A_bar": self.A_bar,
            "slack": self.slack,
            "subsequence": self.subsequence,
            "residual_tail": self.residual_tail,
            "incomplete_flag": self.incomplete,
            "stop_threshold": self.stop_threshold,
            "volume_bound": self.volume_bound,
            "perimeter_bound": self.perimeter_bound,
            "params": self.params.to_dict(),
        }


def _tail_mean(values: Sequence[float], T: int) -> float:
    t = list(values)[-T:]
    return float(np.mean(t)) if t else 0.0


def decompose(sequence: SetSequence, params: DecompositionParams | None = None) -> Decomposition:
    """Extract pieces until the residual tail volume drops below the stop threshold.

    Pieces are reported in decreasing order of limit volume.  ``slack`` is the
    largest per-index total of twice the crossing weights, which bounds
    ``sum A_i - A``.
    """
    params = (params or DecompositionParams()).resolve(sequence)
    if params.wall_guard:
        for s in sequence.terms:
            _check_wall(s, 2.0 * params.working_radius)
    S = list(range(len(sequence)))
    residuals = {k: sequence[k] for k in S}
    pieces: list[Piece] = []
    incomplete = False
    while True:
        tail_res = _tail_mean([residuals[k].volume for k in S], params.tail)
        if tail_res < params.stop_threshold:
            break
        if len(pieces) >= params.piece_cap:
            incomplete = True
            break
        piece, new_res, S_new = extract_piece(sequence, residuals, S, params)
        pieces.append(piece)
        S = S_new
        residuals = new_res
    pieces = [p.restrict(S) for p in pieces]
    pieces.sort(key=lambda p: -p.v_i)
    leftover = {k: residuals[k] for k in S}
    T = params.tail
    tail_idx = S[-T:]
    slack = max((2.0 * sum(p.cuts[p.indices.index(k)].crossing for p in pieces) for k in tail_idx), default=0.0)
    return Decomposition(
        pieces=pieces,
        leftover=leftover,
        subsequence=S,
        v_bar=math.fsum(p.v_i for p in pieces),
        A_bar=math.fsum(p.A_i for p in pieces),
        slack=slack,
        residual_tail=_tail_mean([leftover[k].volume for k in S], T),
        incomplete=incomplete,
        stop_threshold=params.stop_threshold,
        volume_bound=sequence.volume_bound,
        perimeter_bound=sequence.perimeter_bound,
        params=params,
    )


# ---------------------------------------------------------------------------
# non-evanescence
# ---------------------------------------------------------------------------

def nonevanescence_lower_bound(vol: float, per: float, c_cal: float, n: int = 2) -> float:
    """``c_cal vol^n / (per^n + 1)``."""
    if vol < 0 or per < 0:
        raise ValueError("volume and perimeter must be nonnegative")
    return c_cal * vol ** n / (per ** n + 1.0)


def calibration_ratio(vol: float, per: float, q: float, n: int = 2) -> float:
    return q * (per ** n + 1.0) / vol ** n


def calibrate_nonevanescence(sets: Sequence[IndicatorSet] = (), stats: Sequence[tuple[float, float, float]] = (),
                             radius: float = 1.0, stencil: PerimeterStencil | str = DEFAULT_STENCIL,
                             n: int = 2) -> float:
    """Largest ``c`` with ``Q(radius) >= c V^n / (P^n + 1)`` on every nonempty sample.

    Samples are sets (Q evaluated here) or precomputed ``(V, P, Q)`` triples.
    """
    st = get_stencil(stencil)
    ratios = [calibration_ratio(V, P, Q, n) for V, P, Q in stats if V > 0]
    for s in sets:
        if s.volume > 0:
            ratios.append(calibration_ratio(s.volume, perimeter(s, st), concentration_center(s, radius)[1], n))
    if not ratios:
        raise ValueError("calibration needs at least one nonempty sample")
    return min(ratios)


@dataclass(frozen=True)
class NonevanescenceAudit:
    c_cal: float
    entries: list[tuple[int, int, float, float]]  # (piece, index, captured volume, bound)
    provenance: str = "calibrated surrogate; the analytic constant is not available"

    @property
    def passes(self) -> bool:
        return all(v >= b for _, _, v, b in self.entries)

    @property
    def worst_margin(self) -> float:
        return min((v - b for _, _, v, b in self.entries), default=math.inf)

    def to_dict(self) -> dict:
        return {"c_cal": self.c_cal, "passes": self.passes, "worst_margin": self.worst_margin,
                "entries": [list(e) for e in self.entries], "provenance": self.provenance}


def nonevanescence_audit(decomposition: Decomposition, c_cal: float) -> NonevanescenceAudit:
    """Check every retained trace against the bound on the residual it was cut from."""
    entries = []
    for i, p in enumerate(decomposition.pieces):
        for k, vol, (V, P, _) in zip(p.indices, p.volumes, p.residual_stats):
            entries.append((i, k, vol, nonevanescence_lower_bound(V, P, c_cal)))
    return NonevanescenceAudit(c_cal, entries)


# ---------------------------------------------------------------------------
# constant subsequences
# ---------------------------------------------------------------------------

def extract_constant_subsequence(sets: Sequence[IndicatorSet]) -> tuple[IndicatorSet, list[int]]:
    """Most frequent set in the list and the indices where it occurs.

    Ties go to the set with the smallest serialized form.
    """
    if not sets:
        raise ValueError("empty input")
    shape = sets[0].grid.shape
    if any(s.grid.shape != shape for s in sets):
        raise ValueError("sets must share one cell region")
    keys = [dumps_set(s) for s in sets]
    counts = Counter(keys)
    top = max(counts.values())
    key = min(k for k, c in counts.items() if c == top)
    idx = [i for i, k in enumerate(keys) if k == key]
    return sets[idx[0]], idx
