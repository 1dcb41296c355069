"""First-order corrections to the Zeno limit.

For large but finite ``n`` one step of the exact protocol acts on diagonal
states as ``R_i - n tau^2 Rt_i + O((n tau^2)^2)``.  The correction ``Rt_i`` has
range one and only depends on the local geometry of ``A_i``:

* sites outside every pair (measured sites and lone members of ``A_i``) leak
  to each neighbour at rate 1 (diagonal ``deg(a)``, ``-1`` per neighbour),
* a neighbour of an adjacent pair couples to both pair members with ``-1/2``,
* a pair member ``a`` with partner ``b`` has zero diagonal and intra-pair
  entry ``(deg(a) + deg(b))/2 - 1``, which makes every line sum vanish.

The pair entries hold at perfect switching (``n tau = pi/2``) only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .lattice import Lattice, MeasurementSchedule
from .quantum import ProtocolParams
from .zeno import apply_step, step_blocks

__all__ = [
    "CASE1",
    "CASE2",
    "INERT",
    "SiteClass",
    "CorrectionMatrix",
    "NearZenoCycle",
    "classify_sites",
    "build_correction",
    "build_nz_cycle",
    "nz_flow",
    "nz_per_step_flow",
    "nz_current",
    "is_perfect_switching",
]

CASE1, CASE2, INERT = "case1", "case2", "inert"


@dataclass(frozen=True)
class SiteClass:
    step_index: int
    labels: tuple  # one of CASE1, CASE2, INERT per site

    def sites(self, label: str) -> np.ndarray:
        return np.array([i for i, lab in enumerate(self.labels) if lab == label], dtype=int)


@dataclass(frozen=True)
class CorrectionMatrix:
    rt: np.ndarray
    step_index: int


@dataclass(frozen=True)
class NearZenoCycle:
    """``R_nz`` together with the Zeno cycle and the first-order term."""

    r_nz: np.ndarray
    r_cyc: np.ndarray
    correction: np.ndarray  # sum_i R_s..R_{i+1} Rt_i R_{i-1}..R_1
    eps: float  # n tau^2
    p: float
    theta: float = 0.0


def is_perfect_switching(params: ProtocolParams, tol: float = 1e-9) -> bool:
    return abs(np.sin(params.period_T / params.steps) ** 2 - 1.0) < tol


def classify_sites(lattice: Lattice, schedule: MeasurementSchedule, i: int) -> SiteClass:
    """Members of adjacent pairs of ``A_i`` and their neighbours are ``case2``.

    All other sites that have at least one neighbour are ``case1``; leakage
    between two measured neighbours is of the same order as leakage out of a
    lone member of ``A_i``.  Only sites without neighbours are ``inert``.
    """
    labels = [CASE1 if lattice.neighbors[s] else INERT for s in range(lattice.n_sites)]
    for a, b in schedule[i].pairs:
        for s in (a, b):
            labels[s] = CASE2
            for nb in lattice.neighbors[s]:
                labels[nb] = CASE2
    return SiteClass(i, tuple(labels))


def build_correction(
    lattice: Lattice,
    schedule: MeasurementSchedule,
    i: int,
    params: Optional[ProtocolParams] = None,
) -> CorrectionMatrix:
    """Correction ``Rt_i`` of step ``i``.

    :raises ValueError: if ``A_i`` has adjacent pairs and ``params`` is not at
        perfect switching.
    """
    fs = schedule[i]
    if fs.pairs and params is not None and not is_perfect_switching(params):
        raise ValueError("pair corrections are only available at perfect switching (T/steps = pi/2)")
    n = lattice.n_sites
    deg = lattice.degree
    partner: Dict[int, int] = {}
    pair_of: Dict[int, tuple] = {}
    for a, b in fs.pairs:
        partner[a], partner[b] = b, a
        pair_of[a] = pair_of[b] = (a, b)
    rt = np.zeros((n, n))
    for a in range(n):
        if a in partner:
            b = partner[a]
            rt[a, b] = (deg[a] + deg[b]) / 2.0 - 1.0
            for c in _pair_neighbors(lattice, pair_of[a]):
                rt[a, c] = -0.5
            continue
        rt[a, a] = deg[a]
        for c in lattice.neighbors[a]:
            if c in partner:
                for m in pair_of[c]:
                    rt[a, m] = -0.5
            else:
                rt[a, c] = -1.0
    if np.any(rt.sum(axis=0) != 0) or np.any(rt.sum(axis=1) != 0):
        raise AssertionError(f"correction of step {i} is not zero line-sum")
    return CorrectionMatrix(rt, i)


def _pair_neighbors(lattice: Lattice, pair) -> list:
    out = set()
    for s in pair:
        out.update(lattice.neighbors[s])
    return sorted(out - set(pair))


def build_nz_cycle(
    lattice: Lattice,
    schedule: MeasurementSchedule,
    params: ProtocolParams,
    expansion: str = "first_order",
) -> NearZenoCycle:
    """``R_nz = R_cyc - n tau^2 sum_i R_s..R_{i+1} Rt_i R_{i-1}..R_1``.

    With ``expansion="product"`` the cycle is instead the full product of the
    corrected steps ``R_i - n tau^2 Rt_i``, which keeps the second-order cross
    terms and is usually closer to the exact cycle at moderate ``n``.
    """
    if not is_perfect_switching(params):
        raise ValueError("near-Zeno cycle needs perfect switching, T = 4 pi for 8 steps")
    if expansion not in ("first_order", "product"):
        raise ValueError(f"unknown expansion {expansion!r}")
    p = params.p
    eps = params.n_meas * params.tau**2
    n = lattice.n_sites
    blocks = [step_blocks(lattice, schedule, i) for i in range(1, schedule.period + 1)]
    steps = [apply_step(np.eye(n), blk, p) for blk in blocks]
    corr = [build_correction(lattice, schedule, i, params).rt for i in range(1, schedule.period + 1)]
    r_cyc = np.eye(n)
    for mat in steps:
        r_cyc = mat @ r_cyc
    first = np.zeros((n, n))
    for k in range(len(steps)):
        term = np.eye(n)
        for j, mat in enumerate(steps):
            term = (corr[j] if j == k else mat) @ term
        first += term
    if expansion == "product":
        r_nz = np.eye(n)
        for mat, rt in zip(steps, corr):
            r_nz = (mat - eps * rt) @ r_nz
    else:
        r_nz = r_cyc - eps * first
    return NearZenoCycle(r_nz, r_cyc, first, float(eps), float(p))


def _dress(lattice: Lattice, mat: np.ndarray, theta: float) -> np.ndarray:
    """Attach ``exp(i theta q)`` to every transfer, ``q`` = leftward half-bonds moved."""
    if theta == 0:
        return mat
    rows, cols = np.nonzero(mat)
    out = np.array(mat, dtype=complex)
    for a, b in zip(rows, cols):
        if a != b:
            q = 2.0 * lattice.displacement(int(a), int(b))[0]
            out[a, b] *= np.exp(1j * theta * q)
    return out


def _nz_step_matrices(lattice, schedule, params, theta: float = 0.0):
    p = params.p
    eps = params.n_meas * params.tau**2
    n = lattice.n_sites
    out = []
    for i in range(1, schedule.period + 1):
        r = apply_step(np.eye(n), step_blocks(lattice, schedule, i), p)
        out.append(_dress(lattice, r - eps * build_correction(lattice, schedule, i, params).rt, theta))
    return out


def nz_current(lattice: Lattice, schedule: MeasurementSchedule, params: ProtocolParams) -> np.ndarray:
    """``J_nz = i dR_nz/dtheta`` at ``theta = 0``.

    Every transfer ``b -> a`` is dressed with ``exp(i theta q)``, ``q`` the
    number of half-bonds it moves to the left.
    """
    if not is_perfect_switching(params):
        raise ValueError("near-Zeno cycle needs perfect switching, T = 4 pi for 8 steps")
    return _current_of(lattice, schedule, params)


def _current_of(lattice, schedule, params):
    eps = params.n_meas * params.tau**2
    n = lattice.n_sites
    p = params.p
    steps = [apply_step(np.eye(n), step_blocks(lattice, schedule, i), p) for i in range(1, schedule.period + 1)]
    corr = [build_correction(lattice, schedule, i, params).rt for i in range(1, schedule.period + 1)]
    charge = _charge_matrix(lattice)

    def cur(mat):
        return -charge * mat

    total = np.zeros((n, n))
    s = len(steps)
    # d/dtheta of the first-order product: derivative hits one factor of
    # the Zeno product, or one factor of a correction term
    for k in range(s):
        term = np.eye(n)
        for j in range(s):
            term = (cur(steps[j]) if j == k else steps[j]) @ term
        total += term
    for k in range(s):
        for l in range(s):
            term = np.eye(n)
            for j in range(s):
                if j == k:
                    mat = cur(corr[j]) if j == l else corr[j]
                else:
                    mat = cur(steps[j]) if j == l else steps[j]
                term = mat @ term
            total -= eps * term
    return total


def _charge_matrix(lattice: Lattice) -> np.ndarray:
    """``q[a, b]``: leftward half-bonds covered by a transfer from ``b`` to ``a``."""
    pos = lattice.positions
    dx = pos[None, :, 0] - pos[:, None, 0]
    if lattice.x_period is not None:
        w = lattice.x_period
        dx = dx - w * np.round(dx / w)
    return 2.0 * dx


def nz_per_step_flow(
    lattice: Lattice,
    schedule: MeasurementSchedule,
    params: ProtocolParams,
    n_cycles: int,
    g0: np.ndarray,
    left: np.ndarray,
) -> np.ndarray:
    """Per-step density flow out of the region ``left`` with the corrected step maps.

    Each step uses ``R_i - n tau^2 Rt_i``; the cycle built from these agrees
    with ``R_nz`` up to the dropped second-order cross terms.  Returns an
    array of shape ``(n_cycles, s)``.
    """
    mats = _nz_step_matrices(lattice, schedule, params)
    g = np.asarray(g0, dtype=float).copy()
    out = np.zeros((n_cycles, len(mats)))
    for m in range(n_cycles):
        for k, mat in enumerate(mats):
            new = mat @ g
            out[m, k] = -(new[left].sum() - g[left].sum())
            g = new
    return out


def nz_flow(
    lattice: Lattice,
    schedule: MeasurementSchedule,
    params: ProtocolParams,
    n_cycles: int,
    g0: np.ndarray,
    left: Optional[np.ndarray] = None,
) -> float:
    """Average flow per cycle predicted by ``R_nz``.

    With ``left`` (a boolean mask of sites left of a cut) this is the charge
    leaving that region per cycle, the analogue of the exact engine's cut
    flow.  Without it, the counting-field flow per dynamical cell,
    ``(1/(L_x N)) sum_m <I| J_nz R_nz^m |g0>``.
    """
    if n_cycles < 1:
        raise ValueError("need at least one cycle")
    cyc = build_nz_cycle(lattice, schedule, params)
    g = np.asarray(g0, dtype=float).copy()
    if left is not None:
        g_final = g.copy()
        for _ in range(n_cycles):
            g_final = cyc.r_nz @ g_final
        return float(-(g_final[left].sum() - g[left].sum()) / n_cycles)
    cur = nz_current(lattice, schedule, params)
    total = 0.0
    for _ in range(n_cycles):
        total += (cur @ g).sum()
        g = cyc.r_nz @ g
    return float(total / (lattice.spec.lx * n_cycles))
