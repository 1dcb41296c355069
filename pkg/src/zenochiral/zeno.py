"""Zeno-limit stochastic model.

In the limit of infinitely frequent measurements the site densities
``g_r = G_rr`` evolve by a periodically driven random walk.  During step
``i`` every adjacent pair ``(alpha, beta)`` of the free set ``A_i`` swaps its
occupation with probability ``p = sin^2(T/8)``, everything else is frozen.

A counting field ``theta`` dresses horizontal hops: a hop from the right site
of a pair to the left one picks up ``exp(i theta)``, a hop to the right picks
up ``exp(-i theta)``.  With this convention ``i d/dtheta`` of the moment
generating function counts net *rightward* hops, and the current operator is
``J = i dR/dtheta`` at ``theta = 0``.

Two representations are provided: dense matrices (``build_step_matrix``,
``build_cycle_matrix``) that double as oracles, and vectorised 2x2 block
updates (``StepBlocks``) used for long evolutions on large lattices.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .lattice import (
    CutSpec,
    Lattice,
    LatticeSpec,
    MeasurementSchedule,
    build_lattice,
    build_schedule,
)

__all__ = [
    "hop_probability",
    "StepBlocks",
    "StepMatrix",
    "CycleMatrix",
    "step_blocks",
    "build_step_matrix",
    "build_cycle_matrix",
    "apply_step",
    "apply_cycle",
    "evolve_density",
    "moment_generating",
    "current_matrix",
    "per_step_flow",
    "flow",
    "cut_flow",
    "BlochModel",
    "bloch_model",
    "bloch_cycle",
    "GapReport",
    "spectral_gap_check",
]


def hop_probability(T: float) -> float:
    """Swap probability ``sin^2(T/8)`` of an unmeasured pair during one step."""
    if T <= 0:
        raise ValueError("period T must be positive")
    return float(np.sin(T / 8.0) ** 2)


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"hop probability must lie in [0, 1], got {p}")


# --- block representation ---------------------------------------------------


@dataclass(frozen=True)
class StepBlocks:
    """Pairs of one step and the counting weight of each pair.

    ``weight[k]`` is 1 if a hop across pair ``(left[k], right[k])`` is
    counted, 0 otherwise.  Only horizontal pairs can carry weight.
    """

    index: int
    left: np.ndarray
    right: np.ndarray
    weight: np.ndarray


def _link_set(links: Optional[Iterable[Tuple[int, int]]]):
    if links is None:
        return None
    out = set()
    for a, b in links:
        out.add((a, b))
        out.add((b, a))
    return out


def step_blocks(
    lattice: Lattice,
    schedule: MeasurementSchedule,
    i: int,
    links: Optional[Iterable[Tuple[int, int]]] = None,
) -> StepBlocks:
    """Block data of step ``i`` (1-based).

    :param links: restrict the counting field to these links (e.g. the links
        crossing a cut); by default every horizontal pair is counted.
    """
    if not 1 <= i <= schedule.period:
        raise IndexError(f"step index {i} out of range 1..{schedule.period}")
    chosen = _link_set(links)
    fs = schedule[i]
    left = np.array([a for a, _ in fs.pairs], dtype=int)
    right = np.array([b for _, b in fs.pairs], dtype=int)
    weight = np.zeros(len(fs.pairs), dtype=int)
    for k, (a, b) in enumerate(fs.pairs):
        horizontal = abs(lattice.displacement(a, b)[1]) < 1e-9
        if horizontal and (chosen is None or (a, b) in chosen):
            weight[k] = 1
    return StepBlocks(i, left, right, weight)


def _all_blocks(lattice, schedule, links=None) -> List[StepBlocks]:
    return [step_blocks(lattice, schedule, i, links) for i in range(1, schedule.period + 1)]


def apply_step(g: np.ndarray, blocks: StepBlocks, p: float, theta: float = 0.0) -> np.ndarray:
    """Return ``R_i(theta) g`` for a vector, or a matrix acting column-wise."""
    out = np.array(g, dtype=complex if theta else np.result_type(g, float), copy=True)
    a, b = blocks.left, blocks.right
    ga, gb = g[a], g[b]
    if theta:
        phase = np.exp(1j * theta * blocks.weight)
        if out.ndim > 1:
            phase = phase[:, None]
        out[a] = (1 - p) * ga + p * phase * gb
        out[b] = (1 - p) * gb + p * np.conj(phase) * ga
    else:
        out[a] = (1 - p) * ga + p * gb
        out[b] = (1 - p) * gb + p * ga
    return out


def apply_cycle(g: np.ndarray, blocks: Sequence[StepBlocks], p: float, theta: float = 0.0) -> np.ndarray:
    for blk in blocks:
        g = apply_step(g, blk, p, theta)
    return g


# --- dense representation ---------------------------------------------------


@dataclass(frozen=True)
class StepMatrix:
    r: np.ndarray
    step_index: int
    theta: float
    p: float


@dataclass(frozen=True)
class CycleMatrix:
    r_cyc: np.ndarray
    theta: float
    p: float

    def __matmul__(self, other):
        return self.r_cyc @ other


def build_step_matrix(
    lattice: Lattice,
    schedule: MeasurementSchedule,
    i: int,
    p: float,
    theta: float = 0.0,
    links: Optional[Iterable[Tuple[int, int]]] = None,
) -> StepMatrix:
    """Dense transition matrix ``R_i(theta)`` of step ``i``.

    Each pair ``(alpha, beta)`` of ``A_i`` contributes the block
    ``[[1-p, p e^{i theta}], [p e^{-i theta}, 1-p]]`` with ``alpha`` (the
    left site) as first row; vertical and uncounted pairs carry no phase.
    All other sites, including isolated members of ``A_i``, are frozen.
    """
    _check_p(p)
    blk = step_blocks(lattice, schedule, i, links)
    n = lattice.n_sites
    r = np.eye(n, dtype=complex if theta else float)
    a, b = blk.left, blk.right
    phase = np.exp(1j * theta * blk.weight) if theta else np.ones(len(a))
    r[a, a] = 1 - p
    r[b, b] = 1 - p
    r[a, b] = p * phase
    r[b, a] = p * np.conj(phase)
    return StepMatrix(r, i, float(theta), float(p))


def build_cycle_matrix(
    lattice: Lattice,
    schedule: MeasurementSchedule,
    p: float,
    theta: float = 0.0,
    links: Optional[Iterable[Tuple[int, int]]] = None,
) -> CycleMatrix:
    """``R_cyc = R_s ... R_2 R_1`` as a dense matrix."""
    _check_p(p)
    blocks = _all_blocks(lattice, schedule, links)
    eye = np.eye(lattice.n_sites)
    r = apply_cycle(eye, blocks, p, theta)
    return CycleMatrix(r, float(theta), float(p))


def current_matrix(
    lattice: Lattice,
    schedule: MeasurementSchedule,
    p: float,
    links: Optional[Iterable[Tuple[int, int]]] = None,
) -> np.ndarray:
    """Exact ``J = i dR_cyc/dtheta`` at ``theta = 0`` by the product rule."""
    _check_p(p)
    blocks = _all_blocks(lattice, schedule, links)
    n = lattice.n_sites
    steps = [apply_step(np.eye(n), blk, p) for blk in blocks]
    derivs = []
    for blk in blocks:
        d = np.zeros((n, n))
        w = blk.weight.astype(bool)
        # i d/dtheta of p e^{i theta} is -p (leftward hop), of p e^{-i theta} is +p
        d[blk.left[w], blk.right[w]] = -p
        d[blk.right[w], blk.left[w]] = p
        derivs.append(d)
    total = np.zeros((n, n))
    for k in range(len(steps)):
        term = np.eye(n)
        for j, mat in enumerate(steps):
            term = (derivs[j] if j == k else mat) @ term
        total += term
    return total


# --- evolution and counting statistics --------------------------------------


def evolve_density(g: np.ndarray, cycle: CycleMatrix, n_cycles: int) -> np.ndarray:
    """``R_cyc^N g`` for a density vector ``g``."""
    if cycle.theta != 0:
        raise ValueError("density evolution needs theta = 0")
    if n_cycles < 0:
        raise ValueError("number of cycles must be nonnegative")
    g = np.asarray(g, dtype=float)
    total = g.sum()
    r = np.real(cycle.r_cyc)
    for _ in range(n_cycles):
        g = r @ g
    if abs(g.sum() - total) > 1e-10 * max(1.0, abs(total)):
        raise FloatingPointError("particle number drifted during density evolution")
    return g


def moment_generating(
    lattice: Lattice,
    schedule: MeasurementSchedule,
    p: float,
    theta: float,
    n_cycles: int,
    g0: np.ndarray,
    links: Optional[Iterable[Tuple[int, int]]] = None,
) -> complex:
    """``chi_N(theta) = <I| R_cyc(theta)^N |g0>``."""
    _check_p(p)
    blocks = _all_blocks(lattice, schedule, links)
    g = np.asarray(g0, dtype=complex)
    for _ in range(n_cycles):
        g = apply_cycle(g, blocks, p, theta)
    return complex(g.sum())


def per_step_flow(
    lattice: Lattice,
    schedule: MeasurementSchedule,
    p: float,
    n_cycles: int,
    g0: np.ndarray,
    links: Optional[Iterable[Tuple[int, int]]] = None,
    blocks: Optional[Sequence[StepBlocks]] = None,
) -> np.ndarray:
    """Net rightward charge moved by each step, shape ``(n_cycles, s)``.

    Entry ``[m, i-1]`` is ``<I| J_i R_{i-1} ... R_1 R_cyc^m |g0>``, the
    contribution of step ``i`` in cycle ``m``; the sum over all entries is
    ``i d chi_N / d theta`` at ``theta = 0``.
    """
    _check_p(p)
    if blocks is None:
        blocks = _all_blocks(lattice, schedule, links)
    g = np.asarray(g0, dtype=float).copy()
    out = np.zeros((n_cycles, len(blocks)))
    for m in range(n_cycles):
        for k, blk in enumerate(blocks):
            w = blk.weight.astype(bool)
            out[m, k] = p * (g[blk.left[w]].sum() - g[blk.right[w]].sum())
            g = apply_step(g, blk, p)
    return out


def flow(lattice: Lattice, schedule: MeasurementSchedule, p: float, n_cycles: int, g0: np.ndarray) -> float:
    """Average flow ``F_N`` per cycle and per dynamical cell along x.

    Every horizontal pair carries the counting field, so ``F_N`` counts all
    horizontal hops; divided by the number of link columns per cell it is the
    charge crossing a single cut.
    """
    if n_cycles < 1:
        raise ValueError("need at least one cycle")
    steps = per_step_flow(lattice, schedule, p, n_cycles, g0)
    return float(steps.sum() / (lattice.spec.lx * n_cycles))


def cut_flow(
    lattice: Lattice,
    schedule: MeasurementSchedule,
    cut: CutSpec,
    p: float,
    n_cycles: int,
    g0: np.ndarray,
) -> np.ndarray:
    """Per-step charge crossing ``cut`` rightwards, shape ``(n_cycles, s)``."""
    return per_step_flow(lattice, schedule, p, n_cycles, g0, links=cut.links)


# --- Bloch representation ---------------------------------------------------


@dataclass(frozen=True)
class _BlochEntry:
    row: int
    col: int
    hop: bool  # True for the p-weighted off-diagonal term, else 1-p (or 1)
    frozen: bool  # diagonal entry of a site outside all pairs of the step
    charge: int  # +1: e^{i theta}, -1: e^{-i theta}, 0: none
    shift: Tuple[float, float]  # anchor(target cell) - anchor(source cell)


@dataclass(frozen=True)
class BlochModel:
    """Translation-invariant step matrices of a lattice kind in k-space.

    ``R_i(k)_{mu nu} = sum_d C_{mu nu}(d) exp(-i k.d)`` with ``d`` the
    displacement from the source cell to the target cell.
    """

    kind: str
    cell_size: int
    steps: Tuple[Tuple[_BlochEntry, ...], ...]

    @property
    def period(self) -> int:
        return len(self.steps)

    def step(self, i: int, k, theta: float, p: float, dk: Optional[int] = None) -> np.ndarray:
        """``R_i(k, theta)``; with ``dk`` in {0, 1}, its derivative in ``k[dk]``."""
        k = np.asarray(k, dtype=float)
        out = np.zeros((self.cell_size, self.cell_size), dtype=complex)
        for e in self.steps[i - 1]:
            if e.frozen:
                val = 1.0
            else:
                val = p if e.hop else 1.0 - p
            d = np.asarray(e.shift)
            val = val * np.exp(1j * e.charge * theta - 1j * (k @ d))
            if dk is not None:
                val = val * (-1j * d[dk])
            out[e.row, e.col] += val
        return out

    def step_current(self, i: int, k, p: float) -> np.ndarray:
        """``i dR_i/dtheta`` at ``theta = 0``."""
        k = np.asarray(k, dtype=float)
        out = np.zeros((self.cell_size, self.cell_size), dtype=complex)
        for e in self.steps[i - 1]:
            if e.hop and e.charge:
                out[e.row, e.col] += -e.charge * p * np.exp(-1j * (k @ np.asarray(e.shift)))
        return out

    def cycle(self, k, theta: float, p: float) -> np.ndarray:
        r = np.eye(self.cell_size, dtype=complex)
        for i in range(1, self.period + 1):
            r = self.step(i, k, theta, p) @ r
        return r

    def _product_rule(self, k, p, factor) -> np.ndarray:
        mats = [self.step(i, k, 0.0, p) for i in range(1, self.period + 1)]
        total = np.zeros((self.cell_size, self.cell_size), dtype=complex)
        for j in range(self.period):
            term = np.eye(self.cell_size, dtype=complex)
            for i, mat in enumerate(mats):
                term = (factor(i + 1) if i == j else mat) @ term
            total += term
        return total

    def cycle_dk(self, k, p: float, axis: int = 1) -> np.ndarray:
        """Analytic ``dR_cyc/dk_axis`` at ``theta = 0``."""
        return self._product_rule(k, p, lambda i: self.step(i, k, 0.0, p, dk=axis))

    def cycle_current(self, k, p: float) -> np.ndarray:
        """Analytic ``J(k) = i dR_cyc/dtheta`` at ``theta = 0``."""
        return self._product_rule(k, p, lambda i: self.step_current(i, k, p))


@lru_cache(maxsize=None)
def bloch_model(kind: str = "lieb") -> BlochModel:
    """Extract the k-space step matrices from a torus large enough to avoid self-images."""
    lat = build_lattice(LatticeSpec(kind, 4, 4, "torus"))
    sched = build_schedule(lat)
    c = lat.spec.cell_size
    offsets = lat.positions[:c] - lat.positions[0]
    steps = []
    for i in range(1, sched.period + 1):
        blk = step_blocks(lat, sched, i)
        partner = {}
        for a, b, w in zip(blk.left, blk.right, blk.weight):
            partner[int(a)] = (int(b), int(w))
            partner[int(b)] = (int(a), -int(w))
        entries = []
        for s in range(c):
            if s not in partner:
                entries.append(_BlochEntry(s, s, False, True, 0, (0.0, 0.0)))
                continue
            t, charge = partner[s]
            mu, nu = s, int(lat.internal[t])
            # anchor(s) - anchor(t) from the minimal-image displacement t -> s
            shift = lat.displacement(t, s) - (offsets[mu] - offsets[nu])
            shift = tuple(float(np.round(x, 12)) + 0.0 for x in shift)
            entries.append(_BlochEntry(s, s, False, False, 0, (0.0, 0.0)))
            entries.append(_BlochEntry(mu, nu, True, False, charge, shift))
        steps.append(tuple(entries))
    return BlochModel(kind, c, tuple(steps))


def bloch_cycle(k, theta: float, p: float, kind: str = "lieb") -> np.ndarray:
    """Bulk cycle matrix ``R_cyc(k, theta)`` (6x6 for the Lieb lattice).

    ``k`` is a real 2-vector; phases are ``exp(-i k.d)`` with ``d`` the
    real-space shift between cell anchors.
    """
    _check_p(p)
    return bloch_model(kind).cycle(k, theta, p)


@dataclass(frozen=True)
class GapReport:
    max_radius: float
    argmax: Tuple[float, float]
    radii: np.ndarray  # (m, m) spectral radii on the grid, nan at k = 0
    grid: np.ndarray

    @property
    def ok(self) -> bool:
        return bool(self.max_radius < 1.0)


def reciprocal_grid(m: int, kind: str = "lieb") -> np.ndarray:
    """``m x m`` grid of k-points ``(i/m) b1 + (j/m) b2`` over the Brillouin zone."""
    model = bloch_model(kind)
    shifts = {e.shift for step in model.steps for e in step if e.hop}
    basis = _bravais_basis(shifts)
    recip = 2 * np.pi * np.linalg.inv(basis).T  # rows b1, b2 with a_i . b_j = 2 pi delta
    frac = np.arange(m) / m
    return np.array([[fi * recip[0] + fj * recip[1] for fj in frac] for fi in frac])


def _bravais_basis(shifts) -> np.ndarray:
    vecs = sorted({v for v in shifts if v != (0.0, 0.0)}, key=lambda v: (v[0] ** 2 + v[1] ** 2, v))
    for a in vecs:
        for b in vecs:
            m = np.array([a, b])
            if abs(np.linalg.det(m)) > 1e-9:
                return m
    raise ValueError("cannot infer Bravais basis")


def spectral_gap_check(p: float, m: int = 16, kind: str = "lieb") -> GapReport:
    """Largest spectral radius of ``R_cyc(k, 0)`` over the nonzero points of an ``m x m`` k-grid."""
    if not 0.0 < p < 1.0:
        raise ValueError("spectral gap check needs 0 < p < 1")
    grid = reciprocal_grid(m, kind)
    model = bloch_model(kind)
    radii = np.full((m, m), np.nan)
    for i in range(m):
        for j in range(m):
            if i == 0 and j == 0:
                continue
            radii[i, j] = np.max(np.abs(np.linalg.eigvals(model.cycle(grid[i, j], 0.0, p))))
    idx = np.unravel_index(np.nanargmax(radii), radii.shape)
    return GapReport(float(radii[idx]), tuple(grid[idx]), radii, grid)
