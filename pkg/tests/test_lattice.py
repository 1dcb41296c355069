import itertools

import numpy as np
import pytest

from zenochiral.lattice import (
    LatticeSpec,
    build_lattice,
    build_schedule,
    default_cut,
    dump_listing,
    flow_cut,
    half_height,
    naive_square_schedule,
    validate_schedule,
)


def lat_and_sched(kind="lieb", lx=4, ly=4, boundary="torus"):
    lat = build_lattice(LatticeSpec(kind, lx, ly, boundary))
    return lat, build_schedule(lat)


def test_spec_rejects_bad_input():
    with pytest.raises(ValueError):
        LatticeSpec("honeycomb", 2, 2)
    with pytest.raises(ValueError):
        LatticeSpec("lieb", 0, 2)
    with pytest.raises(ValueError):
        LatticeSpec("lieb", 2, 2, "mobius")


@pytest.mark.parametrize("kind,size", [("lieb", 6), ("square", 8), ("kagome_mod", 9)])
def test_site_count(kind, size):
    lat = build_lattice(LatticeSpec(kind, 3, 2, "open"))
    assert lat.n_sites == 6 * size


def test_lieb_degrees_on_torus():
    lat, _ = lat_and_sched()
    corner = np.isin(lat.internal, [0, 3])
    assert np.all(lat.degree[corner] == 4)
    assert np.all(lat.degree[~corner] == 2)


def test_square_torus_is_four_regular():
    lat, _ = lat_and_sched("square")
    assert np.all(lat.degree == 4)


def test_bonds_have_unit_half_length_and_symmetric_hamiltonian():
    lat, _ = lat_and_sched("lieb", 3, 3, "open")
    h = lat.hamiltonian
    assert np.array_equal(h, h.T)
    for i, j in lat.bonds:
        assert np.isclose(np.linalg.norm(lat.displacement(i, j)), 0.5)


def test_site_lookup_roundtrip():
    lat, _ = lat_and_sched("lieb", 3, 2, "cylinder_x")
    for i in range(lat.n_sites):
        cx, cy = lat.cells[i]
        assert lat.site(int(cx), int(cy), int(lat.internal[i])) == i
        assert lat.find(lat.positions[i]) == i


@pytest.mark.parametrize("kind", ["lieb", "square"])
def test_every_bond_activated_once_per_cycle(kind):
    lat, sched = lat_and_sched(kind)
    count = {}
    for fs in sched.steps:
        for a, b in fs.pairs:
            key = frozenset((a, b))
            count[key] = count.get(key, 0) + 1
    lieb_bonds = {frozenset(b) for b in lat.bonds if all(lat.internal[s] < 6 for s in b)}
    assert set(count) == lieb_bonds
    assert set(count.values()) == {1}


def test_lieb_schedule_is_admissible_with_distance_three():
    lat, sched = lat_and_sched()
    report = validate_schedule(lat, sched)
    assert report.ok
    assert min(d for d in report.min_distance.values() if d is not None) == 3


def test_kagome_schedule_is_admissible():
    lat, sched = lat_and_sched("kagome_mod")
    report = validate_schedule(lat, sched)
    assert report.ok
    assert sched.period == 6


def test_naive_square_schedule_is_rejected():
    lat = build_lattice(LatticeSpec("square", 4, 4, "torus"))
    report = validate_schedule(lat, naive_square_schedule(lat))
    assert not report.ok
    assert {v.kind for v in report.violations} == {"distance"}
    assert min(v.distance for v in report.violations) == 1
    assert "rejected" in report.summary(limit=3)


def test_validation_flags_overlap_and_non_adjacent():
    from zenochiral.lattice import FreeSet, MeasurementSchedule

    lat, sched = lat_and_sched()
    a, b = sched[1].pairs[0]
    c = lat.neighbors[b][0] if lat.neighbors[b][0] != a else lat.neighbors[b][1]
    far = next(s for s in range(lat.n_sites) if s not in lat.neighbors[a] and s != a)
    bad = MeasurementSchedule((FreeSet(((a, b), (b, c), (a, far)), frozenset()),), lat.n_sites)
    kinds = {v.kind for v in validate_schedule(lat, bad).violations}
    assert {"overlap", "not_adjacent"} <= kinds


def test_schedule_indexing_is_periodic_and_one_based():
    _, sched = lat_and_sched()
    assert sched[0] is sched[8]
    assert sched[1] is sched.steps[0]
    assert sched.reversed()[1] is sched[8]


def test_free_sets_are_disjoint_pairs():
    lat, sched = lat_and_sched("lieb", 3, 3, "open")
    for i in range(1, 9):
        fs = sched[i]
        flat = list(itertools.chain.from_iterable(fs.pairs))
        assert len(flat) == len(set(flat))
        assert not (set(flat) & fs.isolated)
        assert sched.free_mask(i).sum() == len(fs.members)


def test_open_boundary_leaves_isolated_members():
    lat, sched = lat_and_sched("lieb", 2, 2, "open")
    assert any(sched[i].isolated for i in range(1, 9))
    _, tor = lat_and_sched("lieb", 2, 2, "torus")
    assert not any(tor[i].isolated for i in range(1, 9))


def test_cut_links_and_steps():
    lat, sched = lat_and_sched("lieb", 4, 4, "cylinder_x")
    cut = flow_cut(lat, 4.25, sched)
    assert cut.steps == (1, 6)
    # one horizontal bond per cell row, rows alternate between the two steps
    assert len(cut.links) == 4
    assert sorted(cut.link_steps) == [(1,), (1,), (6,), (6,)]
    cut2 = flow_cut(lat, 4.75, sched)
    assert cut2.steps == (2, 5)
    assert default_cut(lat, 2.0) == 4.25
    assert default_cut(lat, 1.0) == 5.25
    assert default_cut(lat) == default_cut(lat, half_height(lat))


def test_cut_through_site_raises():
    lat, sched = lat_and_sched("lieb", 4, 4, "cylinder_x")
    with pytest.raises(ValueError):
        flow_cut(lat, 4.0, sched)


def test_dump_listing_has_one_line_per_site():
    lat, sched = lat_and_sched("lieb", 2, 2, "open")
    text = dump_listing(lat, sched)
    assert len(text.strip().splitlines()) == lat.n_sites + 2
