"""Generators for set sequences and cap families used by scenarios and tests."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .concentration import SetSequence
from .manifold import OPEN, CapSpec, ConformalGrid, build_plane_with_caps, distances_from, flat_grid
from .perimeter import DEFAULT_STENCIL, IndicatorSet


def _stamp(mask: np.ndarray, top: int, left: int, shape: np.ndarray):
    h, w = shape.shape
    mask[top:top + h, left:left + w] |= shape


def static_block_sequence(n_terms: int = 12, size: int = 3, grid_size: int = 32) -> SetSequence:
    g = flat_grid(grid_size, grid_size)
    top = (grid_size - size) // 2
    s = IndicatorSet.block(g, top, top, size)
    return SetSequence(tuple(s for _ in range(n_terms)))


@dataclass(frozen=True)
class Cluster:
    shape: np.ndarray  # boolean cell pattern
    start: tuple[float, float]  # top-left corner at index 0 (cells)
    velocity: tuple[float, float]  # cells per index

    def corner(self, k: int) -> tuple[int, int]:
        return (int(round(self.start[0] + self.velocity[0] * k)),
                int(round(self.start[1] + self.velocity[1] * k)))


def cluster_sequence(clusters: list[Cluster], n_terms: int, margin: int, dust: int = 0,
                     seed: int = 0, h: float = 1.0) -> SetSequence:
    """Clusters translated along straight lines on one flat open grid.

    ``dust`` single cells are scattered per index on cells at least two cells
    away from everything else; the grid keeps ``margin`` free cells to every
    wall.
    """
    corners = [[c.corner(k) for k in range(n_terms)] for c in clusters]
    lo_i = min(ci for cs in corners for ci, _ in cs)
    lo_j = min(cj for cs in corners for _, cj in cs)
    hi_i = max(ci + cl.shape.shape[0] for cl, cs in zip(clusters, corners) for ci, _ in cs)
    hi_j = max(cj + cl.shape.shape[1] for cl, cs in zip(clusters, corners) for _, cj in cs)
    dust_room = 6 if dust else 0
    H = hi_i - lo_i + 2 * margin + dust_room
    W = hi_j - lo_j + 2 * margin + dust_room
    g = flat_grid(W, H, h)
    rng = np.random.default_rng(seed)
    terms = []
    for k in range(n_terms):
        m = np.zeros((H, W), bool)
        for cl, cs in zip(clusters, corners):
            ci, cj = cs[k]
            region = m[ci - lo_i + margin:ci - lo_i + margin + cl.shape.shape[0],
                       cj - lo_j + margin:cj - lo_j + margin + cl.shape.shape[1]]
            if (region & cl.shape).any():
                raise ValueError(f"clusters overlap at index {k}")
            region |= cl.shape
        if dust:
            from scipy import ndimage

            blocked = ndimage.binary_dilation(m, iterations=2)
            free = np.zeros((H, W), bool)
            free[margin:H - margin, margin:W - margin] = True
            free &= ~blocked
            placed = 0
            while placed < dust:
                cand = np.argwhere(free)
                if len(cand) == 0:
                    raise ValueError("no room for dust")
                i, j = cand[int(rng.integers(len(cand)))]
                m[i, j] = True
                free[max(0, i - 2):i + 3, max(0, j - 2):j + 3] = False
                placed += 1
        terms.append(IndicatorSet(g, m))
    return SetSequence(tuple(terms))


def two_diverging_blocks(n_terms: int = 16, size: int = 3, gap: int = 12, rate: float = 1.0,
                         margin: int = 10) -> SetSequence:
    """Two equal blocks moving apart horizontally, each at ``rate`` cells per index."""
    shape = np.ones((size, size), bool)
    a = Cluster(shape, (0.0, 0.0), (0.0, -rate))
    b = Cluster(shape, (0.0, float(size + gap)), (0.0, rate))
    return cluster_sequence([a, b], n_terms, margin)


def random_cluster_sequence(seed: int, n_terms: int = 16, working_radius: float = 4.0) -> tuple[SetSequence, dict]:
    """Randomized corpus member: 1-5 clusters, drift 0-2 cells per index, optional dust.

    Clusters start on a ring and move radially outward, so pairwise
    separations never shrink.  Per-index volume is constant.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    angles = (rng.permutation(8)[:n] * (2 * math.pi / 8)).tolist()
    ring = 14.0
    clusters = []
    for ang in angles:
        hi, wi = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        shape = np.ones((hi, wi), bool)
        if hi * wi > 4 and rng.random() < 0.5:
            shape[int(rng.integers(hi)), int(rng.integers(wi))] = False
        rate = float(rng.choice([0.0, 0.5, 1.0, 1.5, 2.0]))
        ci = ring * math.sin(ang) - hi / 2.0
        cj = ring * math.cos(ang) - wi / 2.0
        clusters.append(Cluster(shape, (ci, cj), (rate * math.sin(ang), rate * math.cos(ang))))
    dust = int(rng.integers(0, 3)) if rng.random() < 0.5 else 0
    margin = int(math.ceil(2 * working_radius)) + 2
    seq = cluster_sequence(clusters, n_terms, margin, dust=dust, seed=seed)
    info = {"clusters": n, "rates": [math.hypot(*c.velocity) for c in clusters], "dust": dust,
            "cluster_volumes": [float(c.shape.sum()) for c in clusters]}
    return seq, info


# ---------------------------------------------------------------------------
# caps
# ---------------------------------------------------------------------------

def identical_caps_grid(n_caps: int, spacing: int = 16, amplitude: float = 1.0, radius: float = 4.0,
                        height: int = 32, lead: int = 40, h: float = 1.0) -> tuple[ConformalGrid, list[tuple[int, int]]]:
    """Plane with a row of identical caps; the first ``lead`` columns stay flat."""
    row = height // 2
    centers = [(row, lead + m * spacing) for m in range(n_caps)]
    width = lead + (n_caps - 1) * spacing + lead
    g = build_plane_with_caps(width, height, h, OPEN, CapSpec.uniform(centers, amplitude, radius))
    return g, centers


def canonical_cap_grid(size: int, amplitude: float = 1.0, radius: float = 4.0, h: float = 1.0):
    """Single cap at the centre vertex of a ``size`` x ``size`` open grid."""
    c = size // 2
    return build_plane_with_caps(size, size, h, OPEN, CapSpec.uniform([(c, c)], amplitude, radius)), (c, c)


def caps_family_sequence(n_terms: int = 10, spacing: int = 16, amplitude: float = 1.0, radius: float = 4.0,
                         size: int = 3) -> tuple[SetSequence, dict]:
    """A static block on the flat lead plus a block riding cap ``k`` at index ``k``."""
    g, centers = identical_caps_grid(n_terms, spacing, amplitude, radius)
    row = centers[0][0]
    static = IndicatorSet.block(g, row - 1, 12, size)
    terms = []
    for k in range(n_terms):
        ci, cj = centers[k]
        rider = IndicatorSet.block(g, ci - 1, cj - 1, size)
        terms.append(static | rider)
    info = {"grid": g, "centers": centers, "amplitude": amplitude, "radius": radius, "spacing": spacing}
    return SetSequence(tuple(terms)), info


def decaying_caps_grid(n_caps: int = 1200, spacing: int = 6, radius: float = 2.0, height: int = 12,
                       h: float = 1.0) -> tuple[ConformalGrid, list[tuple[int, int]]]:
    """Row of caps with amplitudes ``1/m`` for ``m = 1..n_caps``."""
    row = height // 2
    lead = int(math.ceil(radius)) + 4
    centers = [(row, lead + m * spacing) for m in range(n_caps)]
    amps = [1.0 / (m + 1) for m in range(n_caps)]
    width = lead + (n_caps - 1) * spacing + lead
    caps = CapSpec(tuple(centers), tuple(amps), tuple([radius] * n_caps))
    return build_plane_with_caps(width, height, h, OPEN, caps), centers


def cap_cells(grid: ConformalGrid, center, radius: float) -> np.ndarray:
    """Cells whose anchor lies in the metric ball of ``radius`` around a cap centre, nearest first."""
    d = distances_from(grid, center)[: grid.height, : grid.width]
    cells = np.argwhere(d <= radius + 1e-9)
    order = np.lexsort((cells[:, 1], cells[:, 0], d[cells[:, 0], cells[:, 1]]))
    return cells[order]


@dataclass(frozen=True)
class CapFillFamily:
    grid: ConformalGrid
    rays: list[list[tuple[int, int]]]  # cap centres per ray, by index
    fill_radius: float
    capacity: float  # volume of one full cap fill


def cap_fill_family(n_terms: int = 8, n_rays: int = 4, step: int = 12, first: int = 16,
                    amplitude: float = 1.0, radius: float = 3.0, fill_radius: float = 3.0,
                    margin: int = 12) -> CapFillFamily:
    """Caps along up to four axis rays; ray ``r`` holds one cap per index at growing distance."""
    reach = first + (n_terms - 1) * step
    size = 2 * (reach + margin)
    c = size // 2
    dirs = [(0, 1), (0, -1), (1, 0), (-1, 0)][:n_rays]
    rays = [[(c + di * (first + k * step), c + dj * (first + k * step)) for k in range(n_terms)] for di, dj in dirs]
    centers = [p for ray in rays for p in ray]
    g = build_plane_with_caps(size, size, 1.0, OPEN, CapSpec.uniform(centers, amplitude, radius))
    cells = cap_cells(g, rays[0][0], fill_radius)
    cap = math.fsum(g.cell_volumes[cells[:, 0], cells[:, 1]])
    return CapFillFamily(g, rays, fill_radius, cap)


def cap_fill_sequence(fam: CapFillFamily, volume: float) -> SetSequence:
    """Fill whole caps (one per ray) and put the remainder, nearest cells first, on the next ray."""
    g = fam.grid
    full = int(volume // fam.capacity)
    rest = volume - full * fam.capacity
    n_used = full + (1 if rest > 1e-12 else 0)
    if n_used > len(fam.rays):
        raise ValueError(f"volume {volume!r} needs {n_used} caps but only {len(fam.rays)} rays exist")
    terms = []
    for k in range(len(fam.rays[0])):
        m = np.zeros(g.shape, bool)
        for r in range(full):
            cells = cap_cells(g, fam.rays[r][k], fam.fill_radius)
            m[cells[:, 0], cells[:, 1]] = True
        if rest > 1e-12:
            cells = cap_cells(g, fam.rays[full][k], fam.fill_radius)
            acc = 0.0
            for i, j in cells:
                if acc >= rest - 1e-12:
                    break
                m[i, j] = True
                acc += g.cell_volumes[i, j]
        terms.append(IndicatorSet(g, m))
    return SetSequence(tuple(terms))


def funnel_dust_sequence(n_terms: int = 8, size: int = 3, lead: int = 12) -> SetSequence:
    """A static block plus a thin strip whose volume halves with each index.

    Column ``lead + j`` has conformal factor ``2^-j`` and the strip at index
    ``j`` fills ``2^j`` cells of it, so its volume is about ``0.5625 * 2^-j``
    while its perimeter stays above 1 (about 1.5 under cut4, 1.3 under crofton16).
    """
    tall = 2 ** n_terms + 2 * lead
    width = lead + n_terms + lead
    cols = np.arange(width + 1)
    phi_col = np.where(cols < lead, 1.0, 2.0 ** -(np.clip(cols - lead, 0, n_terms)).astype(float))
    phi = np.tile(phi_col, (tall + 1, 1))
    g = ConformalGrid(width, tall, 1.0, phi, OPEN)
    block_top = tall // 2 - size // 2
    block = IndicatorSet.block(g, block_top, 2, size)
    terms = []
    for j in range(n_terms):
        m = block.cells.copy()
        top = tall // 2 - 2 ** j // 2
        m[top:top + 2 ** j, lead + j] = True
        terms.append(IndicatorSet(g, m))
    return SetSequence(tuple(terms), stencil=DEFAULT_STENCIL.kind)
