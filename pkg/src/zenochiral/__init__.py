"""Measurement-induced chiral transport of free fermions.

Repeated projective measurements of site occupations freeze a fermion gas
everywhere except on a small moving set of unmeasured pairs.  Cycling this set
around plaquettes of a Lieb lattice pumps charge along the edges of a filled
region while the bulk stays still.

Modules
-------
``lattice``   geometry, measurement schedules, flow cuts
``zeno``      classical Zeno-limit transfer matrices, currents, Bloch matrices
``quantum``   exact correlation-matrix evolution under measurements
``nearzeno``  first-order corrections away from the Zeno limit
``bulkedge``  bulk and edge parts of the Zeno-limit flow
``cli``       command-line entry point
"""

from .bulkedge import DecomposedFlow, f_bulk, f_edge, f_total
from .lattice import (
    LatticeSpec,
    build_lattice,
    build_schedule,
    default_cut,
    flow_cut,
    validate_schedule,
)
from .quantum import ExactEngine, NumericalHealthError, ProtocolParams
from .zeno import build_cycle_matrix, current_matrix, flow, hop_probability

__version__ = "0.1.0"

__all__ = [
    "DecomposedFlow",
    "ExactEngine",
    "LatticeSpec",
    "NumericalHealthError",
    "ProtocolParams",
    "build_cycle_matrix",
    "build_lattice",
    "build_schedule",
    "current_matrix",
    "default_cut",
    "f_bulk",
    "f_edge",
    "f_total",
    "flow",
    "flow_cut",
    "hop_probability",
    "validate_schedule",
]
