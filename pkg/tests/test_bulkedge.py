import numpy as np
import pytest

import oracles
from zenochiral import bulkedge
from zenochiral.lattice import LatticeSpec, build_lattice, build_schedule

# bulk flow from the real-space window sums of a 2 x 60 cylinder, frozen
BULK_ORACLE = {0.25: (0.02607685818637808, 1e-9), 0.5: (0.3625, 1e-11), 0.75: (1.46845108, 1e-5)}


@pytest.mark.parametrize("p", np.linspace(0.05, 1.0, 20))
def test_edge_flow_polynomial(p):
    assert bulkedge.f_edge(p) == pytest.approx(p**2 + p**3 + p**4, abs=1e-12)


def test_edge_flow_independent_of_strip_height():
    for ly in (4, 5, 7):
        assert bulkedge.f_edge(0.63, ly=ly) == pytest.approx(bulkedge.f_edge(0.63), abs=1e-13)
    with pytest.raises(ValueError):
        bulkedge.f_edge(0.5, ly=3)


@pytest.mark.parametrize("p", sorted(BULK_ORACLE))
def test_bulk_flow_matches_frozen_oracle(p):
    ref, tol = BULK_ORACLE[p]
    assert bulkedge.f_bulk(p) == pytest.approx(ref, abs=tol)


@pytest.mark.slow
def test_bulk_flow_matches_live_oracle():
    lat = build_lattice(LatticeSpec("lieb", 2, 60, "cylinder_x"))
    sched = build_schedule(lat)
    t = np.arcsin(np.sqrt(0.5))
    r = oracles.zeno_cycle(lat, sched, t)
    j = oracles.finite_difference_current(lambda th: oracles.counted_zeno_cycle(lat, sched, t, th), h=1e-5)
    seq = oracles.bulk_flow_sequence(r, j, lat.cells[:, 1], 2, 30, 28)
    assert abs(seq[-1] - seq[-4]) < 1e-10
    assert bulkedge.f_bulk(0.5) == pytest.approx(seq[-1], abs=1e-9)


@pytest.mark.parametrize("p,total", [(0.5, 0.8), (0.6, 1.44), (0.8, 3.2), (0.9, 324 / 85), (1.0, 4.0)])
def test_total_flow_values(p, total):
    dec = bulkedge.f_total(p)
    assert dec.f_total == pytest.approx(total, abs=1e-9)
    assert dec.f_sim == pytest.approx(total / 4, abs=1e-9)


def test_limits():
    assert bulkedge.f_total(0.0).f_total == 0.0
    dec = bulkedge.f_total(1.0)
    assert dec.f_edge == pytest.approx(3.0) and dec.f_bulk == pytest.approx(1.0)
    with pytest.raises(ValueError):
        bulkedge.f_bulk(-0.1)
    with pytest.raises(ValueError):
        bulkedge.f_edge(1.5)


def test_total_flow_increases_with_p():
    vals = [bulkedge.f_total(p).f_total for p in np.linspace(0.05, 1.0, 30)]
    assert np.all(np.diff(vals) > 0)


def test_group_inverse_properties():
    rng = np.random.default_rng(3)
    m = rng.uniform(size=(5, 5))
    r = m / m.sum(axis=0)
    a = np.eye(5) - r
    x = bulkedge.group_inverse(r)
    assert np.allclose(a @ x @ a, a)
    assert np.allclose(x @ a @ x, x)
    assert np.allclose(a @ x, x @ a)
    # no unit eigenvalue: the ordinary inverse
    assert np.allclose(bulkedge.group_inverse(0.5 * r), np.linalg.inv(np.eye(5) - 0.5 * r))


def test_group_inverse_rejects_jordan_block():
    r = np.array([[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(np.linalg.LinAlgError):
        bulkedge.group_inverse(r)
