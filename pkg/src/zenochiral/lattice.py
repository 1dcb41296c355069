"""Lattices, dynamical unit cells and measurement schedules.

Three lattice kinds are supported:

``lieb``
    Lieb lattice (unit spacing between corner sites, edge-midpoint sites in
    between).  The dynamical unit cell holds two Lieb cells, i.e. six sites
    labelled 1..6 (internal indices 0..5).  Every other plaquette, in a
    checkerboard pattern, is traced clockwise by an 8-step schedule so that
    each bond of the lattice is activated exactly once per cycle.
``square``
    The Lieb lattice with the plaquette centres added back (a plain square
    lattice of spacing 1/2).  Same 8-step schedule; the centres are never
    activated.
``kagome_mod``
    Kagome lattice with an extra site on the midpoint of every bond.  Both up
    and down triangles are traced clockwise by a 6-step schedule.

Positions are real-space coordinates with nearest-neighbour bonds of length
1/2.  Sites are ordered by ``(cell_y, cell_x, internal index)``.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "KINDS",
    "BOUNDARIES",
    "LatticeSpec",
    "Lattice",
    "FreeSet",
    "MeasurementSchedule",
    "ValidationReport",
    "Violation",
    "CutSpec",
    "build_lattice",
    "build_schedule",
    "naive_square_schedule",
    "validate_schedule",
    "flow_cut",
    "default_cut",
    "half_height",
    "dump_listing",
]

KINDS = ("lieb", "square", "kagome_mod")
BOUNDARIES = ("open", "cylinder_x", "torus")

_BOND = 0.5
_ROUND = 6
_H = np.sqrt(3.0) / 2.0


# --- unit cell geometry -----------------------------------------------------
#
# Each kind provides: the internal site offsets relative to the cell anchor,
# the anchor position of cell (cx, cy), the wrap vectors for periodic
# directions, and for every schedule step the list of pair templates
# (offset_a, offset_b) relative to the anchor.

_LIEB_OFFSETS = [
    (0.0, 0.0),  # 1: corner, top-left of the traced plaquette below
    (0.0, 0.5),  # 2: vertical mid
    (0.5, 0.0),  # 3: horizontal mid
    (1.0, 0.0),  # 4: corner, top-right of the traced plaquette below
    (1.0, 0.5),  # 5: vertical mid
    (-0.5, 0.0),  # 6: horizontal mid
]

# clockwise walk around the traced plaquette whose top-left corner is the anchor
_PLAQUETTE_WALK = [
    (0.0, 0.0),
    (0.5, 0.0),
    (1.0, 0.0),
    (1.0, -0.5),
    (1.0, -1.0),
    (0.5, -1.0),
    (0.0, -1.0),
    (0.0, -0.5),
    (0.0, 0.0),
]
_LIEB_STEPS = [[(_PLAQUETTE_WALK[k], _PLAQUETTE_WALK[k + 1])] for k in range(8)]

_SQUARE_OFFSETS = _LIEB_OFFSETS + [
    (1.5, 0.5),  # 7: centre of a traced plaquette
    (0.5, 0.5),  # 8: centre of an untraced plaquette
]

_K_A, _K_B, _K_C = (0.0, 0.0), (1.0, 0.0), (0.5, _H)
_K_A2, _K_C2 = (2.0, 0.0), (1.5, -_H)


def _mid(p, q):
    return ((p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0)


_KAGOME_OFFSETS = [
    _K_A,
    _K_B,
    _K_C,
    _mid(_K_A, _K_C),
    _mid(_K_C, _K_B),
    _mid(_K_B, _K_A),
    _mid(_K_B, _K_A2),
    _mid(_K_A2, _K_C2),
    _mid(_K_C2, _K_B),
]


def _walk_pairs(corners):
    walk = []
    for p, q in zip(corners, corners[1:] + corners[:1]):
        walk += [p, _mid(p, q)]
    walk.append(walk[0])
    return [(walk[k], walk[k + 1]) for k in range(len(walk) - 1)]


# up triangle A -> C -> B and down triangle B -> A' -> C'' (both clockwise);
# the down walk is rotated so that no corner is active in both triangles at
# the same step
_UP = _walk_pairs([_K_A, _K_C, _K_B])
_DOWN = _walk_pairs([_K_B, _K_A2, _K_C2])
_DOWN = _DOWN[-1:] + _DOWN[:-1]
_KAGOME_STEPS = [[_UP[k], _DOWN[k]] for k in range(6)]


def _lieb_anchor(cx, cy):
    return (2.0 * cx + ((cy + 1) % 2), float(cy))


def _kagome_anchor(cx, cy):
    return (2.0 * cx + (cy % 2), 2.0 * _H * cy)


@dataclass(frozen=True)
class _Geometry:
    offsets: Sequence[Tuple[float, float]]
    anchor: object
    row_height: float
    steps: Sequence[Sequence[Tuple[Tuple[float, float], Tuple[float, float]]]]
    # internal indices of decoration sites that must not bond to each other;
    # midpoints of two sides of a kagome triangle sit exactly one bond apart
    decorations: frozenset = frozenset()


_GEOMETRY = {
    "lieb": _Geometry(_LIEB_OFFSETS, _lieb_anchor, 1.0, _LIEB_STEPS),
    "square": _Geometry(_SQUARE_OFFSETS, _lieb_anchor, 1.0, _LIEB_STEPS),
    "kagome_mod": _Geometry(_KAGOME_OFFSETS, _kagome_anchor, 2.0 * _H, _KAGOME_STEPS, frozenset(range(3, 9))),
}


# --- data types -------------------------------------------------------------


@dataclass(frozen=True)
class LatticeSpec:
    """Lattice kind, size in dynamical unit cells, and boundary conditions."""

    kind: str = "lieb"
    lx: int = 1
    ly: int = 1
    boundary: str = "cylinder_x"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown lattice kind {self.kind!r}; expected one of {KINDS}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"unknown boundary {self.boundary!r}; expected one of {BOUNDARIES}")
        for name in ("lx", "ly"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    @property
    def steps_per_cycle(self) -> int:
        return len(_GEOMETRY[self.kind].steps)

    @property
    def cell_size(self) -> int:
        return len(_GEOMETRY[self.kind].offsets)


@dataclass(frozen=True, eq=False)
class Lattice:
    """A finite lattice with hopping Hamiltonian ``H`` (unit hopping)."""

    spec: LatticeSpec
    positions: np.ndarray  # (N, 2) real-space coordinates
    cells: np.ndarray  # (N, 2) integer cell coordinates (cx, cy)
    internal: np.ndarray  # (N,) internal index 0..cell_size-1
    hamiltonian: np.ndarray  # (N, N) symmetric 0/1
    neighbors: Tuple[Tuple[int, ...], ...]
    periods: Tuple[Tuple[float, float], ...]  # wrap vectors of periodic directions
    _lookup: Dict[Tuple[float, float], int] = field(repr=False)

    @property
    def n_sites(self) -> int:
        return len(self.positions)

    def __len__(self) -> int:
        return self.n_sites

    @property
    def degree(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.neighbors])

    @property
    def bonds(self) -> List[Tuple[int, int]]:
        return [(i, j) for i, nb in enumerate(self.neighbors) for j in nb if i < j]

    @property
    def x_period(self) -> Optional[float]:
        if self.spec.boundary == "open":
            return None
        return 2.0 * self.spec.lx

    def site(self, cx: int, cy: int, internal: int) -> int:
        """Site index of internal site ``internal`` in cell ``(cx, cy)``."""
        if not (0 <= cx < self.spec.lx and 0 <= cy < self.spec.ly):
            raise IndexError(f"cell {(cx, cy)} outside lattice")
        if not 0 <= internal < self.spec.cell_size:
            raise IndexError(f"internal index {internal} out of range")
        return (cy * self.spec.lx + cx) * self.spec.cell_size + internal

    def find(self, position) -> Optional[int]:
        """Index of the site at ``position`` (after periodic wrapping), or None."""
        return self._lookup.get(self._key(position))

    def row(self) -> np.ndarray:
        """Cell row index of every site."""
        return self.cells[:, 1]

    def _wrap(self, position):
        x, y = float(position[0]), float(position[1])
        spec = self.spec
        if spec.boundary == "torus":
            height = _GEOMETRY[spec.kind].row_height * spec.ly
            shift_x = self.periods[1][0]
            k = np.floor((y + 1e-9) / height)
            x -= k * shift_x
            y -= k * height
        if spec.boundary in ("cylinder_x", "torus"):
            width = 2.0 * spec.lx
            x -= np.floor((x + 0.25 + 1e-9) / width) * width
        return x, y

    def _key(self, position):
        x, y = self._wrap(position)
        return (round(x + 0.0, _ROUND) + 0.0, round(y + 0.0, _ROUND) + 0.0)

    def displacement(self, i: int, j: int) -> np.ndarray:
        """Minimal-image vector from site ``i`` to site ``j``."""
        d = self.positions[j] - self.positions[i]
        if not self.periods:
            return d
        best = d
        for coeffs in itertools.product((-1, 0, 1), repeat=len(self.periods)):
            cand = d + sum(c * np.asarray(v) for c, v in zip(coeffs, self.periods))
            if np.dot(cand, cand) < np.dot(best, best) - 1e-12:
                best = cand
        return best


def build_lattice(spec: LatticeSpec) -> Lattice:
    """Build the lattice described by ``spec``."""
    geo = _GEOMETRY[spec.kind]
    positions, cells, internal = [], [], []
    for cy in range(spec.ly):
        for cx in range(spec.lx):
            ax, ay = geo.anchor(cx, cy)
            for mu, (ox, oy) in enumerate(geo.offsets):
                positions.append((ax + ox, ay + oy))
                cells.append((cx, cy))
                internal.append(mu)
    positions = np.array(positions, dtype=float)

    periods: List[Tuple[float, float]] = []
    if spec.boundary in ("cylinder_x", "torus"):
        periods.append((2.0 * spec.lx, 0.0))
    if spec.boundary == "torus":
        # ly steps along the second Bravais vector, reduced modulo the x period
        periods.append((float(spec.ly % 2), geo.row_height * spec.ly))

    n = len(positions)
    # canonicalise x into [-1/4, width - 1/4) for periodic directions
    lat = Lattice(
        spec=spec,
        positions=positions,
        cells=np.array(cells, dtype=int),
        internal=np.array(internal, dtype=int),
        hamiltonian=np.zeros((0, 0)),
        neighbors=(),
        periods=tuple(periods),
        _lookup={},
    )
    wrapped = np.array([lat._wrap(p) for p in positions])
    positions[:] = wrapped
    lookup = {}
    for i, p in enumerate(positions):
        key = lat._key(p)
        if key in lookup:
            raise ValueError(f"lattice {spec} is too small: sites {lookup[key]} and {i} coincide")
        lookup[key] = i

    # nearest neighbours: every site at bond distance, over periodic images
    images = [np.zeros(2)]
    for coeffs in itertools.product((-1, 0, 1), repeat=len(periods)):
        if any(coeffs):
            images.append(sum(c * np.asarray(v) for c, v in zip(coeffs, periods)))
    ham = np.zeros((n, n))
    for shift in images:
        diff = positions[None, :, :] + shift[None, None, :] - positions[:, None, :]
        dist = np.sqrt((diff**2).sum(axis=-1))
        ham[np.abs(dist - _BOND) < 1e-6] = 1.0
    np.fill_diagonal(ham, 0.0)
    if geo.decorations:
        deco = np.isin(lat.internal, list(geo.decorations))
        ham[np.ix_(deco, deco)] = 0.0
    neighbors = tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in ham)

    ham.setflags(write=False)
    positions.setflags(write=False)
    return Lattice(
        spec=spec,
        positions=positions,
        cells=lat.cells,
        internal=lat.internal,
        hamiltonian=ham,
        neighbors=neighbors,
        periods=tuple(periods),
        _lookup=lookup,
    )


# --- schedules --------------------------------------------------------------


@dataclass(frozen=True)
class FreeSet:
    """Unmeasured sites of one step: adjacent pairs plus isolated members."""

    pairs: Tuple[Tuple[int, int], ...]
    isolated: frozenset

    @property
    def members(self) -> frozenset:
        return frozenset(itertools.chain.from_iterable(self.pairs)) | self.isolated


@dataclass(frozen=True)
class MeasurementSchedule:
    """Ordered periodic family of free sets ``A_1 .. A_s``."""

    steps: Tuple[FreeSet, ...]
    n_sites: int

    @property
    def period(self) -> int:
        return len(self.steps)

    def __len__(self) -> int:
        return len(self.steps)

    def __getitem__(self, i: int) -> FreeSet:
        """Step ``i`` with 1-based, periodic indexing (``A_0 == A_s``)."""
        return self.steps[(i - 1) % len(self.steps)]

    def reversed(self) -> "MeasurementSchedule":
        """The counter-rotating protocol: same free sets, reversed order."""
        return MeasurementSchedule(self.steps[::-1], self.n_sites)

    def free_mask(self, i: int) -> np.ndarray:
        mask = np.zeros(self.n_sites, dtype=bool)
        mask[list(self[i].members)] = True
        return mask

    def pair_arrays(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        pairs = np.array(self[i].pairs, dtype=int).reshape(-1, 2)
        return pairs[:, 0], pairs[:, 1]


def _ordered(lat: Lattice, a: int, b: int) -> Tuple[int, int]:
    # (left, right) for horizontal pairs, (lower, upper) otherwise
    d = lat.displacement(a, b)
    if abs(d[1]) < 1e-9:
        return (a, b) if d[0] > 0 else (b, a)
    return (a, b) if d[1] > 0 else (b, a)


def build_schedule(lattice: Lattice) -> MeasurementSchedule:
    """Clockwise measurement schedule of ``lattice`` (8 steps, or 6 for kagome)."""
    spec = lattice.spec
    geo = _GEOMETRY[spec.kind]
    pad_x = 0 if spec.boundary in ("cylinder_x", "torus") else 2
    pad_y = 0 if spec.boundary == "torus" else 2
    steps = []
    for templates in geo.steps:
        pairs, members = set(), set()
        for cy in range(-pad_y, spec.ly + pad_y):
            for cx in range(-pad_x, spec.lx + pad_x):
                ax, ay = geo.anchor(cx, cy)
                for (pa, pb) in templates:
                    a = lattice.find((ax + pa[0], ay + pa[1]))
                    b = lattice.find((ax + pb[0], ay + pb[1]))
                    if a is not None and b is not None:
                        pairs.add(_ordered(lattice, a, b))
                    for s in (a, b):
                        if s is not None:
                            members.add(s)
        paired = set(itertools.chain.from_iterable(pairs))
        steps.append(FreeSet(tuple(sorted(pairs)), frozenset(members - paired)))
    return MeasurementSchedule(tuple(steps), lattice.n_sites)


def naive_square_schedule(lattice: Lattice) -> MeasurementSchedule:
    """4-step cycle around single squares of a square lattice, checkerboard.

    This is the direct transcription of the driven-hopping square-lattice
    cycle; it violates the pair-separation rule and is only used as a
    negative example for :func:`validate_schedule`.
    """
    if lattice.spec.kind != "square":
        raise ValueError("naive square schedule needs a square lattice")
    steps = []
    moves = [(0.5, 0.0), (0.0, -0.5), (-0.5, 0.0), (0.0, 0.5)]
    corners = [(0.0, 0.5), (0.5, 0.5), (0.5, 0.0), (0.0, 0.0)]
    for k in range(4):
        pairs = set()
        for i, p in enumerate(lattice.positions):
            # squares of side 1/2 with lower-left corner on a checkerboard
            llx, lly = p[0] - corners[k][0], p[1] - corners[k][1]
            if round(2 * llx + 2 * lly) % 2:
                continue
            j = lattice.find((p[0] + moves[k][0], p[1] + moves[k][1]))
            if j is not None and j in lattice.neighbors[i]:
                pairs.add(_ordered(lattice, i, j))
        steps.append(FreeSet(tuple(sorted(pairs)), frozenset()))
    return MeasurementSchedule(tuple(steps), lattice.n_sites)


@dataclass(frozen=True)
class Violation:
    step: int  # 1-based
    kind: str  # "distance", "overlap" or "not_adjacent"
    pairs: Tuple[Tuple[int, int], ...]
    distance: int

    def __str__(self):
        return f"step {self.step}: {self.kind} between {list(self.pairs)} (edge distance {self.distance})"


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[Violation, ...]
    min_distance: Dict[int, Optional[int]]  # per step; None if fewer than two pairs

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self):
        if self.ok:
            dists = [d for d in self.min_distance.values() if d is not None]
            lo = min(dists) if dists else None
            return f"schedule admissible (minimum inter-pair edge distance {lo})"
        return self.summary()

    def summary(self, limit: Optional[int] = None) -> str:
        if self.ok:
            return str(self)
        shown = self.violations if limit is None else self.violations[:limit]
        lines = [f"schedule rejected: {len(self.violations)} violations"]
        lines += [str(v) for v in shown]
        if len(shown) < len(self.violations):
            lines.append(f"... {len(self.violations) - len(shown)} more")
        return "\n".join(lines)


def _bfs(neighbors, sources, limit):
    dist = {s: 0 for s in sources}
    queue = deque(sources)
    while queue:
        u = queue.popleft()
        if dist[u] >= limit:
            continue
        for v in neighbors[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def validate_schedule(lattice: Lattice, schedule: MeasurementSchedule, min_separation: int = 2) -> ValidationReport:
    """Check that the pairs of every free set are mutually isolated.

    Two pairs of the same step must be at edge distance of at least
    ``min_separation`` so that a measured site always sits between them.
    """
    violations = []
    min_distance: Dict[int, Optional[int]] = {}
    for k, fs in enumerate(schedule.steps, start=1):
        seen: Dict[int, Tuple[int, int]] = {}
        for pair in fs.pairs:
            if pair[1] not in lattice.neighbors[pair[0]]:
                violations.append(Violation(k, "not_adjacent", (pair,), -1))
            for s in pair:
                if s in seen and seen[s] != pair:
                    violations.append(Violation(k, "overlap", (seen[s], pair), 0))
                seen[s] = pair
        owner = {s: idx for idx, pair in enumerate(fs.pairs) for s in pair}
        best = None
        limit = max(min_separation, 3) + 1
        for idx, pair in enumerate(fs.pairs):
            dist = _bfs(lattice.neighbors, list(pair), limit)
            for s, d in dist.items():
                other = owner.get(s)
                if other is None or other <= idx:
                    continue
                if best is None or d < best:
                    best = d
                if d < min_separation and d > 0:
                    violations.append(Violation(k, "distance", (pair, fs.pairs[other]), d))
        # pairs further apart than the search radius are fine
        min_distance[k] = best if best is not None else (None if len(fs.pairs) < 2 else limit + 1)
    # keep one entry per offending pair-of-pairs
    unique = {}
    for v in violations:
        unique.setdefault((v.step, v.kind, frozenset(v.pairs)), v)
    return ValidationReport(tuple(unique.values()), min_distance)


# --- flow cut ---------------------------------------------------------------


@dataclass(frozen=True)
class CutSpec:
    """A vertical slice through the lattice."""

    x_cut: float
    left: np.ndarray  # boolean mask of sites left of the cut
    links: Tuple[Tuple[int, int], ...]  # (left site, right site)
    link_steps: Tuple[Tuple[int, ...], ...]  # 1-based steps activating each link

    @property
    def steps(self) -> Tuple[int, ...]:
        return tuple(sorted(set(itertools.chain.from_iterable(self.link_steps))))


def flow_cut(lattice: Lattice, x_cut: float, schedule: Optional[MeasurementSchedule] = None) -> CutSpec:
    """Sites left of the vertical line ``x = x_cut`` and the links crossing it.

    On an x-periodic lattice the cut is taken in the canonical window
    ``[-1/4, 2 lx - 1/4)``; only links crossing ``x_cut`` itself are listed,
    not those across the periodic seam.
    """
    x = lattice.positions[:, 0]
    if np.any(np.abs(x - x_cut) < 1e-9):
        raise ValueError(f"cut x={x_cut} passes through a site")
    if schedule is None:
        schedule = build_schedule(lattice)
    left = x < x_cut
    links, link_steps = [], []
    for i, j in lattice.bonds:
        a, b = (i, j) if x[i] < x[j] else (j, i)
        d = lattice.displacement(a, b)
        if abs(d[1]) > 1e-9 or not (x[a] < x_cut < x[b]) or abs(x[b] - x[a] - abs(d[0])) > 1e-9:
            continue
        steps = tuple(
            k for k, fs in enumerate(schedule.steps, start=1) if (a, b) in fs.pairs or (b, a) in fs.pairs
        )
        links.append((a, b))
        link_steps.append(steps)
    return CutSpec(float(x_cut), left, tuple(links), tuple(link_steps))


def half_height(lattice: Lattice) -> float:
    """Row of corner sites closest to half height, the default filling level."""
    y = lattice.positions[:, 1]
    return float(np.floor((y.max() - y.min()) / 2.0) + y.min())


def default_cut(lattice: Lattice, fill_level: Optional[float] = None) -> float:
    """Cut near the middle of the lattice, between a corner column and the mid column right of it.

    At perfect switching the bulk loops that straddle a filling interface at
    height ``ell`` cross columns with ``floor(x) + ell`` odd back and forth,
    so the per-cycle flow through such a cut oscillates with period 5.  The
    cut is placed on a column of the other parity, where every cycle carries
    the same charge.  ``fill_level`` defaults to :func:`half_height`.
    """
    if lattice.spec.kind == "kagome_mod":
        return float(np.round(lattice.spec.lx)) + 0.125
    x = 2.0 * (lattice.spec.lx // 2) + 0.25
    level = half_height(lattice) if fill_level is None else fill_level
    if (int(np.floor(x)) + int(np.floor(level))) % 2:
        x += 1.0
    return x


# --- debug listing ----------------------------------------------------------


def dump_listing(lattice: Lattice, schedule: Optional[MeasurementSchedule] = None) -> str:
    """Plain-text listing: site id, cell, type, position and step membership."""
    if schedule is None:
        schedule = build_schedule(lattice)
    lines = [f"# {lattice.spec}", "# site cx cy type x y degree steps"]
    member_steps = [[] for _ in range(lattice.n_sites)]
    for k, fs in enumerate(schedule.steps, start=1):
        for s in fs.members:
            member_steps[s].append(str(k) if s not in fs.isolated else f"{k}*")
    for i in range(lattice.n_sites):
        cx, cy = lattice.cells[i]
        x, y = lattice.positions[i]
        lines.append(
            f"{i} {cx} {cy} {lattice.internal[i] + 1} {x:g} {y:g} "
            f"{len(lattice.neighbors[i])} {','.join(member_steps[i]) or '-'}"
        )
    return "\n".join(lines) + "\n"
