"""Bulk-edge decomposition of the Zeno-limit flow.

For a half-filled strip the long-time flow per cycle and per dynamical cell
splits into

``F_bulk = i sum_{ab} [J_B (I - R_B)^# dR_B/dk_y]_{ab}`` at ``k = 0``,
    evaluated from the 6x6 Bloch matrices, and
``F_edge = (1/L_x) <I| P_{y<=3} J P_{y<=2} |I>``,
    evaluated on a narrow strip with the physical lower edge.

``(I - R_B)^#`` is the group inverse: ``I - R_B(0)`` is singular because the
uniform density is stationary, and the divergent direction drops out since
``<I| J_B`` annihilates it.  Rows ``y`` are counted in dynamical cells from
the lower edge, starting at 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .lattice import LatticeSpec, build_lattice, build_schedule
from .zeno import BlochModel, bloch_model, current_matrix

__all__ = [
    "DecomposedFlow",
    "group_inverse",
    "f_edge",
    "f_bulk",
    "f_total",
    "edge_strip",
]

_EDGE_LX = 2
_EDGE_LY = 4


@dataclass(frozen=True)
class DecomposedFlow:
    f_bulk: float
    f_edge: float

    @property
    def f_total(self) -> float:
        return self.f_bulk + self.f_edge

    @property
    def f_sim(self) -> float:
        """Charge crossing a single vertical cut per cycle."""
        return self.f_total / 4.0


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"hop probability must lie in [0, 1], got {p}")


def group_inverse(r: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Group inverse of ``I - r`` for a matrix ``r`` with semisimple eigenvalue 1.

    Uses ``(I - r + Pi)^{-1} - Pi`` with ``Pi`` the spectral projector on the
    eigenvalue-1 eigenspace.
    """
    n = r.shape[0]
    w, v = np.linalg.eig(r)
    ones = np.abs(w - 1.0) < tol
    if not np.any(ones):
        return np.linalg.inv(np.eye(n) - r)
    vi = np.linalg.inv(v)
    proj = v[:, ones] @ vi[ones, :]
    a = np.eye(n) - r
    if np.abs(a @ proj).max() > 1e-8:
        raise np.linalg.LinAlgError("eigenvalue 1 is not semisimple")
    return np.linalg.inv(a + proj) - proj


def f_bulk(p: float, model: Optional[BlochModel] = None) -> float:
    """Bulk contribution, from the Bloch matrices at ``k = 0``."""
    _check_p(p)
    if p == 0.0:
        return 0.0
    model = model or bloch_model("lieb")
    k = np.zeros(2)
    r = model.cycle(k, 0.0, p)
    j = model.cycle_current(k, p)
    dr = model.cycle_dk(k, p, axis=1)
    val = 1j * np.sum(j @ group_inverse(r) @ dr)
    if abs(val.imag) > 1e-8 * max(1.0, abs(val.real)):
        raise FloatingPointError(f"bulk flow has an imaginary part {val.imag:.2e}")
    return float(val.real)


@lru_cache(maxsize=4)
def edge_strip(kind: str = "lieb", lx: int = _EDGE_LX, ly: int = _EDGE_LY):
    """Narrow x-periodic strip with a lower edge: ``(lattice, schedule)``."""
    lat = build_lattice(LatticeSpec(kind, lx, ly, "cylinder_x"))
    return lat, build_schedule(lat)


def f_edge(p: float, kind: str = "lieb", ly: int = _EDGE_LY) -> float:
    """Edge contribution ``(1/L_x) <I| P_{y<=3} J P_{y<=2} |I>``."""
    _check_p(p)
    if ly < 4:
        raise ValueError("edge strip needs at least 4 rows")
    lat, sched = edge_strip(kind, _EDGE_LX, ly)
    j = current_matrix(lat, sched, p)
    row = lat.cells[:, 1] + 1
    return float(j[np.ix_(row <= 3, row <= 2)].sum() / lat.spec.lx)


def f_total(p: float) -> DecomposedFlow:
    """``F = F_bulk + F_edge`` per cycle and per dynamical cell."""
    return DecomposedFlow(f_bulk(p), f_edge(p))
