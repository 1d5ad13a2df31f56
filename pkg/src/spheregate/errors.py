"""Analytic error models and numeric error decomposition.

All functions take angular frequencies (rad/us) and return dimensionless
probabilities.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from .exceptions import ModelError
from .fidelity import gate_fidelity
from .geometry import InteractionSet
from .model import GateParameters
from .solver import DEFAULT_SUBSTEPS

logger = logging.getLogger(__name__)

ENVELOPE_PREFACTOR = 0.7
IDEAL_BLOCKADE_SCALE = 1e3


@dataclass(frozen=True)
class ErrorBudget:
    e_sp: float
    e_bl: float
    e_abl: float
    e_tot: float
    source: str
    stderr: Dict[str, float] = field(default_factory=dict)
    parameters: Dict[str, Any] = field(default_factory=dict)


def _positive(**freqs: float) -> None:
    for name, value in freqs.items():
        if value <= 0:
            raise ModelError(f"{name} must be positive, got {value}")


def _nonnegative(**rates: float) -> None:
    for name, value in rates.items():
        if value < 0:
            raise ModelError(f"{name} must be nonnegative, got {value}")


def e_sp(omega_t: float, omega_c: float, gamma_t: float, gamma_c: float) -> float:
    """Rydberg decay error of a (2+1) unit."""
    _positive(omega_t=omega_t, omega_c=omega_c)
    _nonnegative(gamma_t=gamma_t, gamma_c=gamma_c)
    return (
        math.pi * gamma_t / (4 * omega_t)
        + 3 * math.pi * gamma_c / omega_t
        + math.pi * gamma_c / omega_c
    )


def e_k_sp(k: int, omega_t: float, omega_c: float, gamma_t: float, gamma_c: float) -> float:
    """Decay error with k controls; reduces to e_sp at k = 2."""
    if k < 1:
        raise ModelError(f"k must be >= 1, got {k}")
    _positive(omega_t=omega_t, omega_c=omega_c)
    _nonnegative(gamma_t=gamma_t, gamma_c=gamma_c)
    return (
        (math.pi * gamma_t / omega_t) / 2**k
        + k * (3 * math.pi * gamma_c / (2 * omega_t))
        + k * (math.pi * gamma_c / (2 * omega_c))
    )


def e_bl_envelope(omega_t: float, u_ct: float) -> float:
    """Quadratic upper envelope 0.7 (Omega_t/U_ct)^2 of the oscillating blockade error."""
    if u_ct == 0:
        raise ModelError("U_ct = 0: control-target blockade vanishes (h/R_ct = 1/sqrt(3))")
    return ENVELOPE_PREFACTOR * (omega_t / u_ct) ** 2


def e_abl(u_cc: float, omega_c: float) -> float:
    """Antiblockade error (U_cc/Omega_c)^2."""
    _positive(omega_c=omega_c)
    value = (u_cc / omega_c) ** 2
    if u_cc >= omega_c:
        logger.warning("antiblockade estimate out of regime: U_cc/Omega_c = %.3g", u_cc / omega_c)
    return value


def e_abl_max(interactions: InteractionSet, omega_c: float) -> float:
    """Antiblockade error of the closest (strongest) control pair."""
    ucc, _ = interactions.max_ucc()
    return e_abl(ucc, omega_c)


@dataclass(frozen=True)
class ArbMargins:
    """Ratios that must all be >> 1 for asymmetric blockade: |U_ct|/Omega_t, Omega_c/Omega_t, Omega_t/U_cc."""

    blockade: float
    drive: float
    antiblockade: float

    @property
    def satisfied(self) -> bool:
        return min(self.blockade, self.drive, self.antiblockade) > 1.0


def arb_margins(interactions: InteractionSet, omega_c: float, omega_t: float) -> ArbMargins:
    _positive(omega_c=omega_c, omega_t=omega_t)
    ucc, _ = interactions.max_ucc()
    margins = ArbMargins(
        blockade=float(min(abs(interactions.u_ct))) / omega_t,
        drive=omega_c / omega_t,
        antiblockade=math.inf if ucc == 0 else omega_t / ucc,
    )
    if not margins.satisfied:
        logger.warning(
            "asymmetric blockade condition violated: |U_ct|/Omega_t=%.3g Omega_c/Omega_t=%.3g Omega_t/U_cc=%.3g",
            margins.blockade, margins.drive, margins.antiblockade,
        )
    return margins


def analytic_budget(
    omega_t: float,
    omega_c: float,
    gamma_t: float,
    gamma_c: float,
    interactions: InteractionSet,
    include_abl: bool = False,
) -> ErrorBudget:
    k = interactions.n_controls
    sp_err = e_sp(omega_t, omega_c, gamma_t, gamma_c) if k == 2 else e_k_sp(k, omega_t, omega_c, gamma_t, gamma_c)
    # the envelope is evaluated at the weakest control-target blockade
    weakest = float(min(interactions.u_ct, key=abs))
    bl = e_bl_envelope(omega_t, weakest)
    abl = e_abl_max(interactions, omega_c)
    total = sp_err + bl + (abl if include_abl else 0.0)
    return ErrorBudget(
        e_sp=sp_err, e_bl=bl, e_abl=abl, e_tot=total, source="analytic",
        parameters={"k": k, "omega_t": omega_t, "omega_c": omega_c, "gamma_t": gamma_t, "gamma_c": gamma_c},
    )


def numeric_decomposition(
    params: GateParameters,
    mode: str = "nojump",
    trajectories: int = 500,
    master_seed: int = 1234,
    substeps: int = DEFAULT_SUBSTEPS,
    blockade_scale: float = IDEAL_BLOCKADE_SCALE,
    workers: int = 1,
    measure: str = "uhlmann",
) -> ErrorBudget:
    """Isolate each error channel by switching the others off.

    decay only:        full decay, U_cc = 0, U_ct scaled by blockade_scale
    blockade only:     no decay, U_cc = 0, actual U_ct
    antiblockade only: no decay, actual U_cc, U_ct scaled
    total:             everything actual
    """
    variants = {
        "e_sp": params.with_interactions(uct_scale=blockade_scale, zero_ucc=True),
        "e_bl": params.without_decay().with_interactions(zero_ucc=True),
        "e_abl": params.without_decay().with_interactions(uct_scale=blockade_scale),
        "e_tot": params,
    }
    values: Dict[str, float] = {}
    errs: Dict[str, float] = {}
    for name, variant in variants.items():
        report = gate_fidelity(variant.build(), mode, trajectories, master_seed, substeps, workers, measure=measure)
        values[name] = 1.0 - report.average
        errs[name] = report.average_stderr
    return ErrorBudget(
        e_sp=values["e_sp"], e_bl=values["e_bl"], e_abl=values["e_abl"], e_tot=values["e_tot"],
        source="numeric", stderr=errs,
        parameters={"mode": mode, "trajectories": trajectories, "blockade_scale": blockade_scale, "measure": measure},
    )


def optional_envelope(omega_t: float, u_ct: float) -> Optional[float]:
    """Envelope value, or None at the blockade-zero geometry."""
    try:
        return e_bl_envelope(omega_t, u_ct)
    except ModelError:
        return None
