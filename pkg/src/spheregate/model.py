"""Composite-basis register: level schemes, pulse schedule, Hamiltonians, jump operators.

Every atom carries three levels encoded as digits 0, 1 and 2 (its Rydberg
level: |c> for controls, |t> for the target). Basis states are base-3
numbers with the first control as the most significant digit and the target
as the least significant one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .exceptions import ModelError
from .geometry import InteractionSet
from .utils import parse_digits

logger = logging.getLogger(__name__)

RYDBERG = 2
JUMP_MODELS = ("split", "paper-literal")


class Role(str, Enum):
    CONTROL = "control"
    TARGET = "target"


@dataclass(frozen=True)
class LevelScheme:
    role: Role
    levels: Tuple[str, str, str]

    @property
    def rydberg(self) -> int:
        return RYDBERG


CONTROL_LEVELS = LevelScheme(Role.CONTROL, ("0", "1", "c"))
TARGET_LEVELS = LevelScheme(Role.TARGET, ("0", "1", "t"))


def scheme_for(role: Role) -> LevelScheme:
    return CONTROL_LEVELS if role is Role.CONTROL else TARGET_LEVELS


@dataclass(frozen=True)
class Pulse:
    """Square pi pulse on one transition; CONTROL pulses address every control."""

    role: Role
    lower: int
    upper: int
    amplitude: float
    phase: float
    duration: float

    @property
    def transition(self) -> str:
        lv = scheme_for(self.role).levels
        return f"|{lv[self.lower]}⟩↔|{lv[self.upper]}⟩"


def pi_pulse(role: Role, lower: int, upper: int, amplitude: float, phase: float = 0.0) -> Pulse:
    if amplitude <= 0:
        raise ModelError(f"Rabi amplitude must be positive, got {amplitude}")
    return Pulse(role, lower, upper, amplitude, phase, math.pi / amplitude)


@dataclass(frozen=True)
class PulseSchedule:
    pulses: Tuple[Pulse, ...]

    def __post_init__(self) -> None:
        if not self.pulses:
            raise ModelError("a schedule needs at least one pulse")
        for n, p in enumerate(self.pulses, start=1):
            if p.amplitude <= 0:
                raise ModelError(f"pulse {n}: amplitude must be positive")
            if not math.isclose(p.duration * p.amplitude, math.pi, rel_tol=1e-12):
                raise ModelError(f"pulse {n}: duration must be pi/|Omega|")
            if p.lower == p.upper or {p.lower, p.upper} - {0, 1, 2}:
                raise ModelError(f"pulse {n}: bad transition {p.lower}<->{p.upper}")
        object.__setattr__(self, "pulses", tuple(self.pulses))

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([p.duration for p in self.pulses])[:-1]])

    @property
    def total_duration(self) -> float:
        return float(sum(p.duration for p in self.pulses))

    def windows(self) -> List[Tuple[float, float]]:
        starts = self.starts
        return [(float(s), float(s + p.duration)) for s, p in zip(starts, self.pulses)]

    def pulse_index_at(self, t: float) -> int:
        """Index of the pulse active at t; a shared boundary belongs to the later pulse."""
        total = self.total_duration
        if t < 0 or t > total * (1 + 1e-12):
            raise ModelError(f"t={t} outside the schedule [0, {total}]")
        idx = int(np.searchsorted(self.starts, t, side="right")) - 1
        return min(max(idx, 0), len(self.pulses) - 1)


def standard_sequence(omega_c: float, omega_t: float) -> PulseSchedule:
    """Five pi pulses: excite controls, swap target 1-t, 0-t, 1-t, de-excite controls."""
    if omega_c <= 0 or omega_t <= 0:
        raise ModelError(f"amplitudes must be positive, got omega_c={omega_c}, omega_t={omega_t}")
    return PulseSchedule(
        (
            pi_pulse(Role.CONTROL, 0, RYDBERG, omega_c),
            pi_pulse(Role.TARGET, 1, RYDBERG, omega_t),
            pi_pulse(Role.TARGET, 0, RYDBERG, omega_t),
            pi_pulse(Role.TARGET, 1, RYDBERG, omega_t),
            pi_pulse(Role.CONTROL, 0, RYDBERG, omega_c, phase=math.pi),
        )
    )


def basis_index(config: Union[str, Sequence[int]], n_atoms: Optional[int] = None) -> int:
    digits = parse_digits(config)
    if n_atoms is not None and len(digits) != n_atoms:
        raise ModelError(f"expected {n_atoms} digits, got {len(digits)}")
    index = 0
    for d in digits:
        index = 3 * index + d
    return index


def basis_digits(n_atoms: int) -> np.ndarray:
    """(3**n, n) table of per-atom digits for every basis index."""
    powers = 3 ** np.arange(n_atoms - 1, -1, -1)
    return (np.arange(3**n_atoms)[:, None] // powers[None, :]) % 3


def _embed(op: sp.spmatrix, atom: int, n_atoms: int) -> sp.csr_matrix:
    left = sp.identity(3**atom, format="csr", dtype=complex)
    right = sp.identity(3 ** (n_atoms - 1 - atom), format="csr", dtype=complex)
    return sp.kron(sp.kron(left, op, format="csr"), right, format="csr")


def _transition_op(lower: int, upper: int) -> sp.csr_matrix:
    """|upper><lower| on one atom."""
    return sp.csr_matrix(([1.0 + 0j], ([upper], [lower])), shape=(3, 3))


def _drive(pulse: Pulse, n_atoms: int) -> sp.csr_matrix:
    raise_op = np.exp(1j * pulse.phase) * _transition_op(pulse.lower, pulse.upper)
    single = 0.5 * pulse.amplitude * (raise_op + raise_op.conj().T)
    atoms = range(n_atoms - 1) if pulse.role is Role.CONTROL else [n_atoms - 1]
    total = sp.csr_matrix((3**n_atoms, 3**n_atoms), dtype=complex)
    for j in atoms:
        total = total + _embed(single, j, n_atoms)
    return total.tocsr()


@dataclass(frozen=True, eq=False)
class JumpOperator:
    atom: int
    channel: str
    rate: float
    matrix: sp.csr_matrix


@dataclass(frozen=True, eq=False)
class GateSystem:
    n_controls: int
    schedule: PulseSchedule
    interactions: InteractionSet
    drives: Tuple[sp.csr_matrix, ...]
    interaction_diagonal: np.ndarray
    jumps: Tuple[JumpOperator, ...]
    decay_diagonal: np.ndarray
    gamma_c: float
    gamma_t: float
    jump_model: str

    @property
    def n_atoms(self) -> int:
        return self.n_controls + 1

    @property
    def dim(self) -> int:
        return 3**self.n_atoms

    def generator(self, pulse_index: int) -> sp.csr_matrix:
        """A = -i H_eff for one pulse window, H_eff = H - (i/2) sum L^dag L."""
        diag = -1j * self.interaction_diagonal - 0.5 * self.decay_diagonal
        return (-1j * self.drives[pulse_index] + sp.diags(diag, format="csr")).tocsr()

    def max_interaction(self) -> float:
        return float(np.max(np.abs(self.interaction_diagonal)))


def _interaction_diagonal(interactions: InteractionSet, n_atoms: int) -> np.ndarray:
    k = n_atoms - 1
    ryd = (basis_digits(n_atoms) == RYDBERG).astype(float)
    rc, rt = ryd[:, :k], ryd[:, k]
    pair = 0.5 * np.einsum("sp,pq,sq->s", rc, interactions.u_cc, rc)
    return pair + (rc @ interactions.u_ct) * rt


def _jump_operators(n_atoms: int, gamma_c: float, gamma_t: float, jump_model: str) -> List[JumpOperator]:
    ops: List[JumpOperator] = []
    for atom in range(n_atoms):
        gamma = gamma_t if atom == n_atoms - 1 else gamma_c
        if gamma == 0:
            continue
        if jump_model == "split":
            for ground in (0, 1):
                m = math.sqrt(gamma / 2) * _transition_op(RYDBERG, ground)
                ops.append(JumpOperator(atom, str(ground), gamma / 2, _embed(m, atom, n_atoms)))
        else:
            m = math.sqrt(gamma) * (_transition_op(RYDBERG, 0) + _transition_op(RYDBERG, 1))
            ops.append(JumpOperator(atom, "01", gamma, _embed(m, atom, n_atoms)))
    return ops


def build_system(
    interactions: InteractionSet,
    schedule: PulseSchedule,
    gamma_c: float,
    gamma_t: float,
    jump_model: str = "split",
    n_controls: Optional[int] = None,
) -> GateSystem:
    if n_controls is not None and n_controls != interactions.n_controls:
        raise ModelError(f"interaction table has {interactions.n_controls} controls, expected {n_controls}")
    if interactions.n_controls < 1:
        raise ModelError("need at least one control atom")
    if gamma_c < 0 or gamma_t < 0:
        raise ModelError("decay rates must be nonnegative")
    if jump_model not in JUMP_MODELS:
        raise ModelError(f"jump_model must be one of {JUMP_MODELS}, got {jump_model!r}")

    n_atoms = interactions.n_controls + 1
    jumps = _jump_operators(n_atoms, gamma_c, gamma_t, jump_model)
    # sum of L^dag L per atom is (rate multiplier) * Gamma * |r><r|
    per_atom = np.full(n_atoms, gamma_c)
    per_atom[-1] = gamma_t
    if jump_model == "paper-literal":
        per_atom = 2.0 * per_atom
    ryd = (basis_digits(n_atoms) == RYDBERG).astype(float)
    system = GateSystem(
        n_controls=interactions.n_controls,
        schedule=schedule,
        interactions=interactions,
        drives=tuple(_drive(p, n_atoms) for p in schedule.pulses),
        interaction_diagonal=_interaction_diagonal(interactions, n_atoms),
        jumps=tuple(jumps),
        decay_diagonal=ryd @ per_atom,
        gamma_c=gamma_c,
        gamma_t=gamma_t,
        jump_model=jump_model,
    )
    logger.debug("built %d-atom system, dim %d, %d jump channels", n_atoms, system.dim, len(jumps))
    return system


def hamiltonian_at(system: GateSystem, t: float) -> sp.csr_matrix:
    """Hermitian part: interaction diagonal plus the drive of the pulse active at t."""
    idx = system.schedule.pulse_index_at(t)
    return (system.drives[idx] + sp.diags(system.interaction_diagonal.astype(complex), format="csr")).tocsr()


@dataclass(frozen=True)
class GateParameters:
    """Everything needed to rebuild a GateSystem with selected error channels switched off."""

    interactions: InteractionSet
    schedule: PulseSchedule
    gamma_c: float
    gamma_t: float
    jump_model: str = "split"

    def build(self) -> GateSystem:
        return build_system(self.interactions, self.schedule, self.gamma_c, self.gamma_t, self.jump_model)

    def without_decay(self) -> "GateParameters":
        return replace(self, gamma_c=0.0, gamma_t=0.0)

    def with_interactions(self, uct_scale: float = 1.0, zero_ucc: bool = False) -> "GateParameters":
        return replace(self, interactions=self.interactions.with_overrides(uct_scale, zero_ucc))
