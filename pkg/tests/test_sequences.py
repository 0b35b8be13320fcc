import numpy as np
import pytest

from isolab.sequences import (
    Cluster,
    cap_fill_family,
    cap_fill_sequence,
    caps_family_sequence,
    cluster_sequence,
    funnel_dust_sequence,
    random_cluster_sequence,
    static_block_sequence,
    two_diverging_blocks,
)


def test_static_block():
    seq = static_block_sequence(5)
    assert len(seq) == 5 and set(seq.volumes) == {9.0}


def test_two_blocks_move_apart():
    seq = two_diverging_blocks(n_terms=4, gap=12)
    first = np.argwhere(seq[0].cells)[:, 1]
    last = np.argwhere(seq[3].cells)[:, 1]
    assert np.ptp(last) == np.ptp(first) + 6


def test_clusters_overlap_rejected():
    sq = np.ones((2, 2), bool)
    with pytest.raises(ValueError, match="overlap"):
        cluster_sequence([Cluster(sq, (0, 0), (0, 0)), Cluster(sq, (0, 1), (0, 0))], 2, 4)


@pytest.mark.parametrize("seed", range(5))
def test_random_sequence_constant_volume(seed):
    seq, info = random_cluster_sequence(seed)
    assert len(set(seq.volumes)) == 1
    assert seq.volumes[0] == sum(info["cluster_volumes"]) + info["dust"]
    assert 1 <= info["clusters"] <= 5 and all(0 <= r <= 2 for r in info["rates"])


def test_random_sequence_seeded():
    a, _ = random_cluster_sequence(3)
    b, _ = random_cluster_sequence(3)
    assert all(x == y for x, y in zip(a.terms, b.terms))


def test_caps_family_rider_sits_on_cap():
    seq, info = caps_family_sequence(n_terms=4)
    for k, (ci, cj) in enumerate(info["centers"]):
        assert seq[k].cells[ci, cj]
    assert len(set(seq.volumes)) == 1


def test_cap_fill_volumes():
    fam = cap_fill_family(n_terms=3, n_rays=3, step=10, first=12)
    seq = cap_fill_sequence(fam, 1.5 * fam.capacity)
    for v in seq.volumes:
        assert fam.capacity * 1.5 - 1e-9 <= v <= fam.capacity * 1.5 + float(fam.grid.cell_volumes.max())


def test_cap_fill_too_many_caps():
    fam = cap_fill_family(n_terms=2, n_rays=2, step=10, first=12)
    with pytest.raises(ValueError, match="rays"):
        cap_fill_sequence(fam, 2.5 * fam.capacity)


def test_funnel_dust_halves():
    seq = funnel_dust_sequence(n_terms=6)
    extra = [v - 9.0 for v in seq.volumes]
    assert all(b == pytest.approx(a / 2) for a, b in zip(extra, extra[1:]))
    assert extra[0] == pytest.approx(0.5625)
