"""Time evolution under the piecewise-constant non-Hermitian Hamiltonian.

Three modes share one fixed-step RK4 grid: deterministic no-jump evolution,
quantum-jump (waiting-time) trajectories, and a dense Lindblad oracle for
small registers.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .exceptions import ModelError, SolverError
from .model import GateSystem

logger = logging.getLogger(__name__)

DEFAULT_SUBSTEPS = 50
JUMP_TIME_TOL = 1e-6  # us
MAX_MASTER_DIM = 81
_NORM_TOL = 1e-9

Jump = Tuple[float, int, str]


@dataclass(frozen=True, eq=False)
class Window:
    """One pulse window split into equal RK4 steps."""

    pulse_index: int
    start: float
    steps: int
    h: float
    generator: sp.csr_matrix
    propagator: Optional[sp.csr_matrix] = None

    def step(self, psi: np.ndarray) -> np.ndarray:
        if self.propagator is not None:
            return self.propagator @ psi
        return _rk4(self.generator, psi, self.h)

    def partial(self, psi: np.ndarray, tau: float) -> np.ndarray:
        return _rk4(self.generator, psi, tau)


def _rk4(a: sp.csr_matrix, psi: np.ndarray, h: float) -> np.ndarray:
    k1 = a @ psi
    k2 = a @ (psi + 0.5 * h * k1)
    k3 = a @ (psi + 0.5 * h * k2)
    k4 = a @ (psi + h * k3)
    return psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_polynomial(a: sp.csr_matrix, h: float) -> sp.csr_matrix:
    """I + hA + (hA)^2/2 + (hA)^3/6 + (hA)^4/24, the exact one-step RK4 map for linear A."""
    ha = (h * a).tocsr()
    term = sp.identity(a.shape[0], dtype=complex, format="csr")
    total = term.copy()
    for n in range(1, 5):
        term = (term @ ha) / n
        total = total + term
    return total.tocsr()


def step_plan(system: GateSystem, substeps: int = DEFAULT_SUBSTEPS) -> List[Window]:
    """Per-window step counts with h <= min(pi/|Omega|, 1/|U|max) / substeps."""
    if substeps < 1:
        raise ModelError(f"substeps must be >= 1, got {substeps}")
    u_max = system.max_interaction()
    plan: List[Window] = []
    for idx, (pulse, (start, _)) in enumerate(zip(system.schedule.pulses, system.schedule.windows())):
        limit = math.pi / abs(pulse.amplitude)
        if u_max > 0:
            limit = min(limit, 1.0 / u_max)
        steps = max(1, math.ceil(substeps * pulse.duration / limit - 1e-9))
        h = pulse.duration / steps
        a = system.generator(idx)
        poly = None
        # one sparse product beats four stage matvecs only while fill-in stays small
        if a.nnz <= 3 * system.dim:
            poly = _rk4_polynomial(a, h)
            if poly.nnz > 4 * a.nnz:
                poly = None
        plan.append(Window(idx, start, steps, h, a, poly))
        logger.debug("window %d: %d steps of %.3e us (%s)", idx + 1, steps, h, "poly" if poly is not None else "stages")
    return plan


def _norm2(psi: np.ndarray) -> float:
    return float(np.real(np.vdot(psi, psi)))


def _check_state(system: GateSystem, psi0: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi0, dtype=complex)
    if psi.shape[0] != system.dim:
        raise ModelError(f"state dimension {psi.shape[0]} does not match system dimension {system.dim}")
    norms = np.sqrt(np.sum(np.abs(psi) ** 2, axis=0))
    if np.any(np.abs(norms - 1.0) > _NORM_TOL):
        raise ModelError(f"initial state must be normalized, got norm(s) {np.atleast_1d(norms)[:4]}")
    return psi.copy()


def _check_finite(arr: np.ndarray, window: int) -> None:
    if not np.all(np.isfinite(arr)):
        raise SolverError(f"non-finite amplitudes after pulse window {window + 1}; reduce the step size")


def evolve_nojump(
    system: GateSystem,
    psi0: np.ndarray,
    substeps: int = DEFAULT_SUBSTEPS,
    plan: Optional[Sequence[Window]] = None,
) -> np.ndarray:
    """Integrate dpsi/dt = -i H_eff psi over the full schedule.

    psi0 may be a single vector or a (dim, m) block of column states. The
    result is not renormalized: its squared norm is the no-jump probability.
    """
    psi = _check_state(system, psi0)
    plan = plan if plan is not None else step_plan(system, substeps)
    for w in plan:
        for _ in range(w.steps):
            psi = w.step(psi)
        _check_finite(psi, w.pulse_index)
    return psi


@dataclass(frozen=True, eq=False)
class NoJumpPath:
    final: np.ndarray
    min_norm2: float

    @property
    def final_norm2(self) -> float:
        return _norm2(self.final)


def nojump_path(system: GateSystem, psi0: np.ndarray, plan: Sequence[Window]) -> NoJumpPath:
    """Single-vector no-jump run, stepped exactly as a trajectory steps."""
    psi = _check_state(system, psi0)
    lowest = _norm2(psi)
    for w in plan:
        for _ in range(w.steps):
            psi = w.step(psi)
            lowest = min(lowest, _norm2(psi))
        _check_finite(psi, w.pulse_index)
    return NoJumpPath(psi, lowest)


@dataclass(frozen=True, eq=False)
class TrajectoryResult:
    state: np.ndarray
    jumps: Tuple[Jump, ...]
    survival_weight: float


def _apply_jump(system: GateSystem, psi: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, int, str]:
    candidates = [op.matrix @ psi for op in system.jumps]
    weights = np.array([_norm2(c) for c in candidates])
    total = weights.sum()
    if total <= 0:
        raise SolverError("norm decayed without Rydberg population to jump from")
    pick = int(np.searchsorted(np.cumsum(weights), rng.random() * total, side="right"))
    pick = min(pick, len(candidates) - 1)
    op = system.jumps[pick]
    return candidates[pick] / math.sqrt(weights[pick]), op.atom, op.channel


def _resolve_jumps(
    system: GateSystem,
    w: Window,
    psi: np.ndarray,
    t0: float,
    r: float,
    rng: np.random.Generator,
    jumps: List[Jump],
    tol: float,
) -> Tuple[np.ndarray, float]:
    """Handle every jump inside the step starting at t0; returns the state at the step end."""
    elapsed, remaining = 0.0, w.h
    while True:
        lo, hi = 0.0, remaining
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if _norm2(w.partial(psi, mid)) > r:
                lo = mid
            else:
                hi = mid
        psi, atom, channel = _apply_jump(system, w.partial(psi, hi), rng)
        jumps.append((t0 + elapsed + hi, atom, channel))
        r = rng.random()
        elapsed += hi
        remaining -= hi
        if remaining <= 1e-15:
            return psi, r
        nxt = w.partial(psi, remaining)
        if _norm2(nxt) > r:
            return nxt, r
        # another jump before the step ends


def evolve_trajectory(
    system: GateSystem,
    psi0: np.ndarray,
    seed,
    substeps: int = DEFAULT_SUBSTEPS,
    plan: Optional[Sequence[Window]] = None,
    path: Optional[NoJumpPath] = None,
    jump_tol: float = JUMP_TIME_TOL,
) -> TrajectoryResult:
    """One quantum-jump trajectory by the waiting-time method.

    A uniform r is drawn; the state evolves without jumps until its squared
    norm falls to r, the crossing is bisected to within jump_tol, a channel
    is chosen with probability proportional to ||L psi||^2, and r is redrawn.
    Passing the input's NoJumpPath skips integration when no jump can occur.
    """
    rng = np.random.default_rng(seed)
    r = rng.random()
    if path is not None and r < path.min_norm2:
        n2 = path.final_norm2
        return TrajectoryResult(path.final / math.sqrt(n2), (), n2)

    psi = _check_state(system, psi0)
    plan = plan if plan is not None else step_plan(system, substeps)
    jumps: List[Jump] = []
    for w in plan:
        for s in range(w.steps):
            nxt = w.step(psi)
            if _norm2(nxt) > r:
                psi = nxt
                continue
            psi, r = _resolve_jumps(system, w, psi, w.start + s * w.h, r, rng, jumps, jump_tol)
        _check_finite(psi, w.pulse_index)
    n2 = _norm2(psi)
    return TrajectoryResult(psi / math.sqrt(n2), tuple(jumps), n2)


def trajectory_seed(master_seed: int, input_index: int, trajectory: int) -> np.random.SeedSequence:
    """Seed of one trajectory, independent of how the ensemble is scheduled."""
    return np.random.SeedSequence([int(master_seed), int(input_index), int(trajectory)])


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    count: int
    mean: float
    stderr: float
    overlaps: np.ndarray
    populations: np.ndarray
    jump_count: int


def _trajectory_chunk(args) -> List[Tuple[float, np.ndarray, int]]:
    system, psi0, etalon, seeds, substeps, path = args
    plan = step_plan(system, substeps)
    out = []
    for seed in seeds:
        res = evolve_trajectory(system, psi0, seed, substeps=substeps, plan=plan, path=path)
        overlap = abs(np.vdot(etalon, res.state)) ** 2
        out.append((float(overlap), np.abs(res.state) ** 2, len(res.jumps)))
    return out


def run_ensemble(
    system: GateSystem,
    psi0: np.ndarray,
    trajectories: int,
    master_seed: int,
    etalon: np.ndarray,
    input_index: int = 0,
    substeps: int = DEFAULT_SUBSTEPS,
    workers: int = 1,
) -> EnsembleStats:
    """Average |<etalon|psi_m>|^2 over independent trajectories.

    Results are identical for any worker count: seeds depend only on
    (master_seed, input_index, m) and the reduction runs in trajectory order.
    """
    if trajectories < 1:
        raise ModelError(f"need at least one trajectory, got {trajectories}")
    plan = step_plan(system, substeps)
    path = nojump_path(system, psi0, plan)
    seeds = [trajectory_seed(master_seed, input_index, m) for m in range(trajectories)]

    if workers <= 1:
        rows = _trajectory_chunk((system, psi0, etalon, seeds, substeps, path))
    else:
        size = math.ceil(trajectories / workers)
        chunks = [seeds[i : i + size] for i in range(0, trajectories, size)]
        rows = []
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for part in ex.map(_trajectory_chunk, [(system, psi0, etalon, c, substeps, path) for c in chunks]):
                rows.extend(part)

    overlaps = np.array([row[0] for row in rows])
    populations = np.mean(np.stack([row[1] for row in rows]), axis=0)
    n_jumps = sum(row[2] for row in rows)
    stderr = float(np.std(overlaps, ddof=1) / math.sqrt(trajectories)) if trajectories > 1 else 0.0
    logger.debug("input %d: %d trajectories, %d jumps", input_index, trajectories, n_jumps)
    return EnsembleStats(trajectories, float(np.mean(overlaps)), stderr, overlaps, populations, n_jumps)


def _check_density(system: GateSystem, rho0: np.ndarray) -> np.ndarray:
    if system.dim > MAX_MASTER_DIM:
        raise ModelError(f"master equation limited to dimension {MAX_MASTER_DIM}, system has {system.dim}")
    rho = np.asarray(rho0, dtype=complex)
    if rho.shape != (system.dim, system.dim):
        raise ModelError(f"density matrix must be {system.dim}x{system.dim}, got {rho.shape}")
    if not np.allclose(rho, rho.conj().T, atol=1e-10):
        raise ModelError("density matrix must be Hermitian")
    if abs(np.trace(rho).real - 1.0) > _NORM_TOL:
        raise ModelError("density matrix must have unit trace")
    if np.linalg.eigvalsh(rho).min() < -1e-10:
        raise ModelError("density matrix must be positive semidefinite")
    return rho.copy()


def evolve_master(system: GateSystem, rho0: np.ndarray, substeps: int = DEFAULT_SUBSTEPS) -> np.ndarray:
    """Dense Lindblad integration on the same RK4 grid, for dimensions up to 81."""
    rho = _check_density(system, rho0)
    jumps = [op.matrix.toarray() for op in system.jumps]
    jumps_h = [m.conj().T for m in jumps]

    for w in step_plan(system, substeps):
        a = w.generator.toarray()
        a_h = a.conj().T

        def rhs(x: np.ndarray) -> np.ndarray:
            out = a @ x + x @ a_h
            for m, m_h in zip(jumps, jumps_h):
                out += m @ x @ m_h
            return out

        h = w.h
        for _ in range(w.steps):
            k1 = rhs(rho)
            k2 = rhs(rho + 0.5 * h * k1)
            k3 = rhs(rho + 0.5 * h * k2)
            k4 = rhs(rho + h * k3)
            rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_finite(rho, w.pulse_index)
    return rho
