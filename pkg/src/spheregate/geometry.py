"""Spheroidal atom layouts and the Rydberg interactions they produce.

Controls sit on a sphere of radius R_ct around the target at the origin, in
two rings at z = +h and z = -h. The second ring is rotated by ``twist``
(pi/3 by default, which puts antipodal pairs in the layout).

All energies are angular frequencies in rad/us; lengths are in um.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .exceptions import GeometryError, SamplingError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

# C3/2pi = 4.73 GHz um^3 and C6/2pi = 14.9 GHz um^6, stored as rad/us
C3_DEFAULT = TWO_PI * 4730.0
C6_DEFAULT = TWO_PI * 14900.0

# angle at which 1 - 3cos^2(theta) vanishes
MAGIC_ANGLE = math.acos(1.0 / math.sqrt(3.0))

_REL_TOL = 1e-9
# |U_ct| below this fraction of C3/R^3 is rounding noise at the magic angle
_UCT_ZERO_TOL = 1e-12


class UnitType(str, Enum):
    LINEAR = "linear"
    ACUTE = "acute"
    OBTUSE = "obtuse"


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SphericalLayout:
    radius_ct: float
    height: float
    twist: float
    ring_size: int
    control_positions: np.ndarray
    target_position: np.ndarray = field(default_factory=lambda: _frozen(np.zeros(3)))

    def __post_init__(self) -> None:
        object.__setattr__(self, "control_positions", _frozen(self.control_positions))
        object.__setattr__(self, "target_position", _frozen(self.target_position))
        if not 0.0 <= self.height < self.radius_ct:
            raise GeometryError(
                f"height must satisfy 0 <= h < R_ct, got h={self.height}, R_ct={self.radius_ct}"
            )
        if np.any(self.target_position != 0.0):
            raise GeometryError("target must sit at the origin")
        norms = np.linalg.norm(self.control_positions, axis=1)
        if not np.allclose(norms, self.radius_ct, rtol=_REL_TOL, atol=0.0):
            raise GeometryError("every control must lie on the sphere of radius R_ct")
        rings = self.control_positions[: self.ring_count, 2]
        if not np.allclose(np.abs(rings), self.height, rtol=_REL_TOL, atol=_REL_TOL * self.radius_ct):
            raise GeometryError("ring controls must sit at |z| = h")

    @property
    def ring_count(self) -> int:
        """Number of controls belonging to the two rings."""
        return 2 * self.ring_size

    @property
    def n_controls(self) -> int:
        return len(self.control_positions)

    @property
    def target_index(self) -> int:
        return self.n_controls

    @property
    def ring_radius(self) -> float:
        return math.sqrt(self.radius_ct**2 - self.height**2)

    def position(self, index: int) -> np.ndarray:
        if index == self.target_index:
            return self.target_position
        if not 0 <= index < self.n_controls:
            raise GeometryError(f"atom index {index} out of range 0..{self.target_index}")
        return self.control_positions[index]

    def with_extra_control(self, position: Sequence[float]) -> "SphericalLayout":
        pos = np.asarray(position, dtype=float).reshape(1, 3)
        return SphericalLayout(
            radius_ct=self.radius_ct,
            height=self.height,
            twist=self.twist,
            ring_size=self.ring_size,
            control_positions=np.vstack([self.control_positions, pos]),
        )


@dataclass(frozen=True)
class PairGeometry:
    distance: float
    polar_angle: float
    unit_type: Optional[UnitType] = None


def build_layout(radius_ct: float, height: float, twist: float = math.pi / 3, ring_size: int = 3) -> SphericalLayout:
    """Place 2*ring_size controls on two rings at z = +h and z = -h."""
    if ring_size < 1:
        raise GeometryError(f"ring_size must be >= 1, got {ring_size}")
    if radius_ct <= 0:
        raise GeometryError(f"radius must be positive, got {radius_ct}")
    if not 0.0 <= height < radius_ct:
        raise GeometryError(f"degenerate ring: need 0 <= h < R_ct, got h={height}, R_ct={radius_ct}")
    rho = math.sqrt(radius_ct**2 - height**2)
    az = TWO_PI * np.arange(ring_size) / ring_size
    ring_a = np.column_stack([rho * np.cos(az), rho * np.sin(az), np.full(ring_size, height)])
    ring_b = np.column_stack([rho * np.cos(az + twist), rho * np.sin(az + twist), np.full(ring_size, -height)])
    return SphericalLayout(
        radius_ct=radius_ct,
        height=height,
        twist=twist,
        ring_size=ring_size,
        control_positions=np.vstack([ring_a, ring_b]),
    )


def pair_geometry(layout: SphericalLayout, i: int, j: int) -> PairGeometry:
    """Distance, polar angle and (for two controls) unit type of an atom pair.

    The polar angle is measured from z to the separation vector r_j - r_i.
    """
    if i == j:
        raise GeometryError("pair indices must differ")
    sep = layout.position(j) - layout.position(i)
    dist = float(np.linalg.norm(sep))
    if dist <= 0:
        raise GeometryError(f"atoms {i} and {j} coincide")
    theta = math.acos(max(-1.0, min(1.0, sep[2] / dist)))
    unit = None
    if layout.target_index not in (i, j):
        unit = classify_pair(dist, layout.radius_ct)
    return PairGeometry(distance=dist, polar_angle=theta, unit_type=unit)


def classify_pair(distance: float, radius_ct: float) -> UnitType:
    # ties at sqrt(2) R_ct go to acute
    if abs(distance - 2.0 * radius_ct) <= _REL_TOL * 2.0 * radius_ct:
        return UnitType.LINEAR
    if distance <= math.sqrt(2.0) * radius_ct * (1.0 + _REL_TOL):
        return UnitType.ACUTE
    return UnitType.OBTUSE


def u_ct(theta: float, r: float, c3: float = C3_DEFAULT) -> float:
    """Dipole-dipole control-target energy C3 (1 - 3 cos^2 theta) / r^3."""
    if r <= 0:
        raise GeometryError(f"distance must be positive, got {r}")
    return c3 * (1.0 - 3.0 * math.cos(theta) ** 2) / r**3


def u_cc(r: float, c6: float = C6_DEFAULT) -> float:
    """Isotropic van der Waals control-control energy C6 / r^6."""
    if r <= 0:
        raise GeometryError(f"distance must be positive, got {r}")
    return c6 / r**6


@dataclass(frozen=True, eq=False)
class InteractionSet:
    u_ct: np.ndarray
    u_cc: np.ndarray
    c3: float = C3_DEFAULT
    c6: float = C6_DEFAULT

    def __post_init__(self) -> None:
        uct = _frozen(np.atleast_1d(self.u_ct))
        ucc = _frozen(np.atleast_2d(self.u_cc))
        k = len(uct)
        if ucc.shape != (k, k):
            raise GeometryError(f"u_cc must be {k}x{k}, got {ucc.shape}")
        if not np.allclose(ucc, ucc.T, rtol=1e-12, atol=0.0):
            raise GeometryError("u_cc must be symmetric")
        if np.any(np.diag(ucc) != 0.0):
            raise GeometryError("u_cc must have a zero diagonal")
        if np.any(ucc < 0.0):
            raise GeometryError("van der Waals energies must be nonnegative")
        object.__setattr__(self, "u_ct", uct)
        object.__setattr__(self, "u_cc", ucc)

    @property
    def n_controls(self) -> int:
        return len(self.u_ct)

    def subset(self, indices: Sequence[int]) -> "InteractionSet":
        idx = np.asarray(indices, dtype=int)
        return InteractionSet(
            u_ct=self.u_ct[idx],
            u_cc=self.u_cc[np.ix_(idx, idx)],
            c3=self.c3,
            c6=self.c6,
        )

    def with_overrides(self, uct_scale: float = 1.0, zero_ucc: bool = False) -> "InteractionSet":
        return InteractionSet(
            u_ct=self.u_ct * uct_scale,
            u_cc=np.zeros_like(self.u_cc) if zero_ucc else self.u_cc,
            c3=self.c3,
            c6=self.c6,
        )

    def max_ucc(self) -> Tuple[float, Optional[Tuple[int, int]]]:
        """Largest control-control energy and the pair that carries it."""
        if self.n_controls < 2:
            return 0.0, None
        iu = np.triu_indices(self.n_controls, k=1)
        vals = self.u_cc[iu]
        best = int(np.argmax(vals))
        return float(vals[best]), (int(iu[0][best]), int(iu[1][best]))

    @classmethod
    def uniform(cls, n_controls: int, uct: float, ucc: float = 0.0) -> "InteractionSet":
        """Identical energies for every control and every control pair."""
        mat = np.full((n_controls, n_controls), float(ucc))
        np.fill_diagonal(mat, 0.0)
        return cls(u_ct=np.full(n_controls, float(uct)), u_cc=mat)


def interaction_table(layout: SphericalLayout, c3: float = C3_DEFAULT, c6: float = C6_DEFAULT) -> InteractionSet:
    k = layout.n_controls
    t = layout.target_index
    uct = np.array([u_ct(pair_geometry(layout, t, i).polar_angle, layout.radius_ct, c3) for i in range(k)])
    uct[np.abs(uct) <= _UCT_ZERO_TOL * abs(c3) / layout.radius_ct**3] = 0.0
    ucc = np.zeros((k, k))
    for i, j in combinations(range(k), 2):
        ucc[i, j] = ucc[j, i] = u_cc(pair_geometry(layout, i, j).distance, c6)
    return InteractionSet(u_ct=uct, u_cc=ucc, c3=c3, c6=c6)


def representative_pairs(layout: SphericalLayout) -> Dict[UnitType, Tuple[int, int]]:
    """First ring-control pair of each unit type, in lexicographic order."""
    found: Dict[UnitType, Tuple[int, int]] = {}
    for i, j in combinations(range(layout.ring_count), 2):
        unit = pair_geometry(layout, i, j).unit_type
        if unit is not None and unit not in found:
            found[unit] = (i, j)
    missing = [u.value for u in UnitType if u not in found]
    if missing:
        logger.warning("layout h/R=%.4f has no %s pair(s)", layout.height / layout.radius_ct, ", ".join(missing))
    return {u: found[u] for u in UnitType if u in found}


def sample_extra_control(
    layout: SphericalLayout,
    max_ucc: float,
    rng_seed,
    c6: float = C6_DEFAULT,
    max_attempts: int = 1_000_000,
    batch: int = 1024,
) -> np.ndarray:
    """Draw a uniform point on the sphere whose vdW energy with every control is below max_ucc.

    Candidates are drawn in fixed-size batches and scanned in order, so the
    result depends only on the seed.
    """
    if max_ucc <= 0:
        raise GeometryError(f"max_ucc must be positive, got {max_ucc}")
    if max_attempts < 1:
        raise GeometryError("max_attempts must be >= 1")
    rng = np.random.default_rng(rng_seed)
    controls = layout.control_positions
    tried = 0
    while tried < max_attempts:
        n = min(batch, max_attempts - tried)
        v = rng.standard_normal((n, 3))
        v *= layout.radius_ct / np.linalg.norm(v, axis=1, keepdims=True)
        d = np.linalg.norm(v[:, None, :] - controls[None, :, :], axis=2)
        with np.errstate(divide="ignore"):
            energy = c6 / d**6
        ok = np.all(energy < max_ucc, axis=1)
        if ok.any():
            first = int(np.argmax(ok))
            logger.debug("extra control accepted after %d candidates", tried + first + 1)
            return v[first]
        tried += n
    raise SamplingError(
        f"no position with U_cc < {max_ucc / TWO_PI:.4g} MHz (x2pi) after {max_attempts} attempts; "
        f"nearest-neighbour distance must exceed {(c6 / max_ucc) ** (1 / 6):.4g} um"
    )
