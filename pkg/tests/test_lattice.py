import numpy as np
import pytest

from swarmkmc import rng
from swarmkmc.errors import ConfigError
from swarmkmc.lattice import (
    CU,
    FE,
    FIRST_SHELL_OFFSETS,
    Lattice,
    NotANeighborError,
    NotAVacancyError,
    SECOND_SHELL_OFFSETS,
    TargetIsVacancyError,
    VACANCY,
)


def brute_force_bonds(lat):
    """O(sites^2 * images) bond table. Oracle only.

    Every periodic image counts separately; at extent 2 one pair can be
    second-shell adjacent through both boundaries at once.
    """
    counts = np.zeros((2, 3, 3), dtype=np.int64)
    shifts = np.array(
        [(lx, ly, lz) for lx in (-1, 0, 1) for ly in (-1, 0, 1) for lz in (-1, 0, 1)],
        dtype=np.float64,
    ) * lat.box
    for a in range(lat.n_sites):
        for b in range(a + 1, lat.n_sites):
            r2 = ((lat.positions[b] - lat.positions[a] + shifts) ** 2).sum(axis=1)
            m1 = int(np.count_nonzero(np.abs(r2 - 0.75) < 1e-9))
            m2 = int(np.count_nonzero(np.abs(r2 - 1.0) < 1e-9))
            if m1 or m2:
                lo, hi = sorted((lat.occupancy[a], lat.occupancy[b]))
                counts[0, lo, hi] += m1
                counts[1, lo, hi] += m2
    return counts


def test_site_count_4x4x4():
    assert Lattice(4, 4, 4).n_sites == 128


def test_shell_sizes():
    lat = Lattice(3, 4, 5)
    for s in (0, 17, lat.n_sites - 1):
        first, second = lat.neighborhood(s)
        assert len(first) == 8
        assert len(second) == 6


def test_degenerate_extent_rejected():
    with pytest.raises(ConfigError):
        Lattice(1, 4, 4)


def test_site_id_roundtrip():
    lat = Lattice(3, 5, 4)
    for site in range(lat.n_sites):
        assert lat.site_id(*lat.site_coords(site)) == site


def test_canonical_first_shell_order_is_offset_arithmetic():
    # first_shell[d] must sit at exactly FIRST_SHELL_OFFSETS[d]/2 from the
    # site, modulo the box, for every site.
    lat = Lattice(4, 5, 3)
    for site in range(lat.n_sites):
        for d in range(8):
            disp = lat.min_image(lat.positions[lat.nbr1[site, d]] - lat.positions[site])
            assert np.allclose(disp, FIRST_SHELL_OFFSETS[d] / 2.0)
        for d in range(6):
            disp = lat.min_image(lat.positions[lat.nbr2[site, d]] - lat.positions[site])
            assert np.allclose(disp, SECOND_SHELL_OFFSETS[d])


def test_neighbor_symmetry_exhaustive_4x4x4():
    lat = Lattice(4, 4, 4)
    for i in range(lat.n_sites):
        for j in lat.nbr1[i]:
            assert i in lat.nbr1[j]
        for j in lat.nbr2[i]:
            assert i in lat.nbr2[j]


def test_neighbors_wrap_and_stay_valid():
    lat = Lattice(2, 2, 2)
    assert lat.nbr1.min() >= 0 and lat.nbr1.max() < lat.n_sites
    assert lat.nbr2.min() >= 0 and lat.nbr2.max() < lat.n_sites


def test_first_shell_crosses_sublattices():
    lat = Lattice(3, 3, 3)
    half = lat.n_cells
    for site in range(lat.n_sites):
        same = (lat.nbr2[site] < half) == (site < half)
        other = (lat.nbr1[site] < half) != (site < half)
        assert same.all() and other.all()


def test_cu_count_rounding():
    lat = Lattice.build(10, 10, 10, cu_fraction=0.0134, vacancy_count=1, seed=0)
    assert len(lat.cu_index) == 27
    assert int(np.sum(lat.occupancy == CU)) == 27


def test_build_determinism():
    a = Lattice.build(6, 6, 6, 0.05, 2, seed=123)
    b = Lattice.build(6, 6, 6, 0.05, 2, seed=123)
    assert np.array_equal(a.occupancy, b.occupancy)
    assert a.vacancy_index == b.vacancy_index


def test_build_overfull_rejected():
    with pytest.raises(ConfigError):
        Lattice.build(2, 2, 2, cu_fraction=0.99, vacancy_count=5, seed=0)


def test_indices_consistent_with_occupancy():
    lat = Lattice.build(5, 5, 5, 0.1, 3, seed=9)
    assert sorted(lat.vacancy_index) == sorted(np.flatnonzero(lat.occupancy == VACANCY).tolist())
    assert sorted(lat.cu_index) == sorted(np.flatnonzero(lat.occupancy == CU).tolist())


def test_hop_involution():
    lat = Lattice.build(4, 4, 4, 0.05, 1, seed=3)
    before = lat.occupancy.copy()
    vac = lat.vacancy_index[0]
    target = next(int(t) for t in lat.nbr1[vac] if lat.occupancy[t] != VACANCY)
    lat.apply_hop(vac, target)
    lat.apply_hop(target, vac)
    assert np.array_equal(lat.occupancy, before)
    assert lat.vacancy_index[0] == vac


def test_hop_moves_cu_and_conserves_count():
    lat = Lattice(4, 4, 4)
    vac, cu = 0, int(lat.nbr1[0, 7])
    lat.occupancy[vac] = VACANCY
    lat.occupancy[cu] = CU
    lat.vacancy_index, lat.cu_index = [vac], [cu]
    lat.apply_hop(vac, cu)
    assert lat.occupancy[vac] == CU
    assert lat.occupancy[cu] == VACANCY
    assert lat.cu_index == [vac]
    assert int(np.sum(lat.occupancy == CU)) == 1


def test_hop_error_kinds_distinct():
    lat = Lattice.build(4, 4, 4, 0.0, 2, seed=1)
    v1, v2 = lat.vacancy_index
    with pytest.raises(NotAVacancyError):
        fe = int(np.flatnonzero(lat.occupancy == FE)[0])
        lat.apply_hop(fe, int(lat.nbr1[fe, 0]))
    with pytest.raises(NotANeighborError):
        far = next(s for s in range(lat.n_sites) if s not in lat.nbr1[v1] and s != v1)
        lat.apply_hop(v1, far)
    # Force adjacency to exercise the vacancy-target error.
    lat2 = Lattice(4, 4, 4)
    lat2.occupancy[0] = VACANCY
    lat2.occupancy[lat2.nbr1[0, 0]] = VACANCY
    lat2.vacancy_index = [0, int(lat2.nbr1[0, 0])]
    with pytest.raises(TargetIsVacancyError):
        lat2.apply_hop(0, int(lat2.nbr1[0, 0]))


def test_species_conserved_over_random_hops():
    lat = Lattice.build(6, 6, 6, 0.08, 2, seed=17)
    gen = rng.substream(17, "test-hops")
    start = lat.species_counts().copy()
    for _ in range(10_000):
        vac = lat.vacancy_index[int(gen.integers(len(lat.vacancy_index)))]
        nbrs = [int(t) for t in lat.nbr1[vac] if lat.occupancy[t] != VACANCY]
        lat.apply_hop(vac, nbrs[int(gen.integers(len(nbrs)))])
    assert np.array_equal(lat.species_counts(), start)
    assert sorted(lat.vacancy_index) == sorted(np.flatnonzero(lat.occupancy == VACANCY).tolist())
    assert sorted(lat.cu_index) == sorted(np.flatnonzero(lat.occupancy == CU).tolist())


def test_bond_counts_all_fe():
    lat = Lattice(4, 4, 4)
    counts = lat.count_bonds()
    assert counts[0, FE, FE] == 128 * 8 // 2
    assert counts[1, FE, FE] == 128 * 6 // 2
    assert counts.sum() == 512 + 384


def test_bond_counts_single_cu():
    lat = Lattice(4, 4, 4)
    lat.occupancy[13] = CU
    lat.cu_index = [13]
    counts = lat.count_bonds()
    assert counts[0, FE, CU] == 8
    assert counts[1, FE, CU] == 6
    assert counts[0, CU, CU] == 0


def test_bond_counts_match_brute_force():
    lat = Lattice.build(6, 6, 6, 0.1, 3, seed=21)
    assert np.array_equal(lat.count_bonds(), brute_force_bonds(lat))


def test_bond_counts_match_brute_force_extent_two():
    # doubled-image second-shell bonds through opposite boundaries
    lat = Lattice.build(2, 3, 4, 0.15, 2, seed=5)
    counts = lat.count_bonds()
    assert counts[1].sum() == lat.n_sites * 6 // 2
    assert np.array_equal(counts, brute_force_bonds(lat))


def test_cu_cu_bond_helper_matches_table():
    lat = Lattice.build(6, 6, 6, 0.15, 2, seed=5)
    assert lat.cu_cu_first_shell_bonds() == lat.count_bonds()[0, CU, CU]


def test_copy_is_independent():
    lat = Lattice.build(4, 4, 4, 0.05, 1, seed=9)
    dup = lat.copy()
    v = lat.vacancy_index[0]
    t = next(int(x) for x in lat.nbr1[v] if lat.occupancy[x] == FE)
    lat.apply_hop(v, t)
    assert dup.occupancy[t] == FE
    assert dup.vacancy_index == [v]
    assert lat.vacancy_index == [t]
    assert dup.nbr1 is lat.nbr1  # geometry tables are shared read-only


def test_xyz_snapshot_lists_non_fe(tmp_path):
    lat = Lattice.build(4, 4, 4, 0.05, 2, seed=2)
    path = tmp_path / "snap.xyz"
    with open(path, "w") as fh:
        lat.write_xyz(fh, step=10, time_s=1.5e-3)
    lines = path.read_text().splitlines()
    n_listed = int(lines[0])
    assert n_listed == int(np.sum(lat.occupancy != FE))
    assert "step=10" in lines[1] and "total_sites=128" in lines[1]
    assert len(lines) == 2 + n_listed
    species = {ln.split()[0] for ln in lines[2:]}
    assert species <= {"Cu", "X"}


def test_xyz_all_sites_flag(tmp_path):
    lat = Lattice.build(3, 3, 3, 0.05, 1, seed=2)
    path = tmp_path / "snap.xyz"
    with open(path, "w") as fh:
        lat.write_xyz(fh, step=0, time_s=0.0, all_sites=True)
    lines = path.read_text().splitlines()
    assert int(lines[0]) == lat.n_sites
