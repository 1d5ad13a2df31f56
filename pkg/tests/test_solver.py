import math

import numpy as np
import pytest
from scipy.linalg import expm

from spheregate.exceptions import ModelError
from spheregate.fidelity import etalon_state, input_states, input_vector
from spheregate.geometry import TWO_PI, InteractionSet, build_layout, interaction_table
from spheregate.model import RYDBERG, PulseSchedule, Role, basis_index, build_system, pi_pulse, standard_sequence
from spheregate.solver import (
    evolve_master,
    evolve_nojump,
    evolve_trajectory,
    nojump_path,
    run_ensemble,
    step_plan,
    trajectory_seed,
)

OMEGA_T = TWO_PI * 3.784


def control_pulse_system(omega=1.0, gamma_c=0.0, gamma_t=0.0):
    """(1+1) register driven by a single control pi pulse; the target is never addressed."""
    sched = PulseSchedule((pi_pulse(Role.CONTROL, 0, RYDBERG, omega),))
    return build_system(InteractionSet.uniform(1, 0.0), sched, gamma_c, gamma_t)


def parked_pair_system(gamma_c):
    """Two controls parked in |c> while the target pulse only touches |0>-|t>."""
    sched = PulseSchedule((pi_pulse(Role.TARGET, 0, RYDBERG, 1.0),))
    return build_system(InteractionSet.uniform(2, 0.0, 0.5), sched, gamma_c, 0.0)


def weak_blockade_system(gamma=0.0):
    """(2+1) register whose energies stay below Omega/pi, so steps follow the substep count exactly."""
    return build_system(InteractionSet.uniform(2, 3.0, 0.5), standard_sequence(OMEGA_T, OMEGA_T), gamma, gamma)


def operating_pair_system(gamma_c=0.0, gamma_t=0.0):
    inter = interaction_table(build_layout(5.0, 1.85)).subset([0, 3])
    return build_system(inter, standard_sequence(OMEGA_T, OMEGA_T), gamma_c, gamma_t)


def computational_block(system):
    return np.column_stack([input_vector(b) for b in input_states(system.n_controls)])


def test_pi_pulse_excites_control():
    system = control_pulse_system(omega=TWO_PI)
    out = evolve_nojump(system, input_vector((0, 0)), substeps=100)
    expected = np.zeros(9, dtype=complex)
    expected[basis_index("20")] = -1j
    assert np.max(np.abs(out - expected)) < 1e-8


def test_nojump_matches_matrix_exponential_with_decay():
    omega, gamma = TWO_PI, 0.5
    system = control_pulse_system(omega=omega, gamma_c=gamma)
    out = evolve_nojump(system, input_vector((0, 0)))
    h_eff = np.array([[0.0, omega / 2], [omega / 2, -0.5j * gamma]])
    exact = expm(-1j * h_eff * (math.pi / omega)) @ np.array([1.0, 0.0])
    assert abs(out[basis_index("00")] - exact[0]) < 1e-6
    assert abs(out[basis_index("20")] - exact[1]) < 1e-6
    assert np.vdot(out, out).real == pytest.approx(np.vdot(exact, exact).real, abs=1e-6)


def test_norm_is_conserved_without_decay():
    system = operating_pair_system()
    out = evolve_nojump(system, computational_block(system), substeps=200)
    assert np.allclose(np.sum(np.abs(out) ** 2, axis=0), 1.0, atol=1e-9)


def test_halving_the_step_barely_moves_the_state():
    system = operating_pair_system()
    psi0 = computational_block(system)
    coarse = evolve_nojump(system, psi0, substeps=200)
    fine = evolve_nojump(system, psi0, substeps=400)
    assert np.max(np.abs(coarse - fine)) < 1e-8


def test_rk4_converges_at_fourth_order():
    system = weak_blockade_system()
    psi0 = computational_block(system)
    states = [evolve_nojump(system, psi0, substeps=s) for s in (40, 80, 160)]
    for w_coarse, w_fine in zip(step_plan(system, 40), step_plan(system, 80)):
        assert w_fine.steps == 2 * w_coarse.steps
    d1 = np.linalg.norm(states[0] - states[1])
    d2 = np.linalg.norm(states[1] - states[2])
    assert math.log2(d1 / d2) >= 3.9


def test_step_plan_resolves_the_strongest_energy():
    system = operating_pair_system()
    u_max = system.max_interaction()
    for w, pulse in zip(step_plan(system, 50), system.schedule.pulses):
        assert w.h <= min(math.pi / pulse.amplitude, 1.0 / u_max) / 50 * (1 + 1e-12)
        assert w.steps * w.h == pytest.approx(pulse.duration)
    with pytest.raises(ModelError):
        step_plan(system, 0)


def test_input_state_is_validated():
    system = control_pulse_system()
    with pytest.raises(ModelError):
        evolve_nojump(system, np.ones(9))
    with pytest.raises(ModelError):
        evolve_nojump(system, input_vector((0, 0, 0)))


def test_trajectory_without_decay_follows_the_nojump_path():
    system = weak_blockade_system()
    psi0 = input_vector((0, 1, 1))
    plan = step_plan(system)
    expected = evolve_nojump(system, psi0, plan=plan)
    expected = expected / np.linalg.norm(expected)
    res = evolve_trajectory(system, psi0, trajectory_seed(1, 0, 0), plan=plan)
    assert res.jumps == ()
    assert np.allclose(res.state, expected, atol=1e-12)
    cached = evolve_trajectory(system, psi0, trajectory_seed(1, 0, 0), plan=plan, path=nojump_path(system, psi0, plan))
    assert np.allclose(cached.state, res.state, atol=1e-12)


def test_cached_path_gives_identical_trajectories():
    system = weak_blockade_system(gamma=0.5)
    psi0 = input_vector((0, 0, 1))
    plan = step_plan(system)
    path = nojump_path(system, psi0, plan)
    for m in range(20):
        seed = trajectory_seed(5, 3, m)
        plain = evolve_trajectory(system, psi0, seed, plan=plan)
        fast = evolve_trajectory(system, psi0, seed, plan=plan, path=path)
        assert np.array_equal(plain.state, fast.state)
        assert plain.jumps == fast.jumps


def test_jump_probability_of_a_parked_rydberg_target():
    gamma_t, m = 0.3, 5000
    system = control_pulse_system(omega=1.0, gamma_t=gamma_t)
    psi0 = input_vector((1, 2))
    plan = step_plan(system)
    path = nojump_path(system, psi0, plan)
    jumped = 0
    for i in range(m):
        res = evolve_trajectory(system, psi0, trajectory_seed(11, 0, i), plan=plan, path=path)
        jumped += bool(res.jumps)
        for t, atom, channel in res.jumps:
            assert 0.0 <= t <= system.schedule.total_duration
            assert atom == 1
            assert channel in ("0", "1")
    p = 1.0 - math.exp(-gamma_t * math.pi)
    sigma = math.sqrt(p * (1 - p) / m)
    assert abs(jumped / m - p) < 3 * sigma


def test_trajectories_are_deterministic_and_jumps_ordered():
    system = parked_pair_system(gamma_c=1.0)
    psi0 = input_vector((2, 2, 1))
    plan = step_plan(system)
    saw_two = False
    for m in range(200):
        seed = trajectory_seed(9, 0, m)
        a = evolve_trajectory(system, psi0, seed, plan=plan)
        b = evolve_trajectory(system, psi0, seed, plan=plan)
        assert np.array_equal(a.state, b.state)
        assert a.jumps == b.jumps
        times = [t for t, _, _ in a.jumps]
        assert times == sorted(times)
        assert len(set(times)) == len(times)
        assert len(a.jumps) <= 2
        saw_two = saw_two or len(a.jumps) == 2
    assert saw_two


def test_single_trajectory_ensemble_without_decay():
    system = weak_blockade_system()
    bits = (1, 1, 0)
    psi0, etalon = input_vector(bits), etalon_state(bits)
    stats = run_ensemble(system, psi0, 1, 1234, etalon)
    out = evolve_nojump(system, psi0)
    assert stats.mean == pytest.approx(abs(np.vdot(etalon, out)) ** 2 / np.vdot(out, out).real, abs=1e-12)
    assert stats.stderr == 0.0
    assert stats.jump_count == 0


def test_ensemble_does_not_depend_on_worker_count():
    system = parked_pair_system(gamma_c=1.0)
    bits = (0, 0, 1)
    psi0 = input_vector((2, 2, 1))
    etalon = etalon_state(bits)
    serial = run_ensemble(system, psi0, 16, 77, etalon, input_index=2)
    pooled = run_ensemble(system, psi0, 16, 77, etalon, input_index=2, workers=2)
    assert np.array_equal(serial.overlaps, pooled.overlaps)
    assert serial.mean == pooled.mean


def test_different_seeds_agree_statistically():
    system = control_pulse_system(omega=1.0, gamma_t=0.3)
    psi0 = input_vector((1, 2))
    etalon = input_vector((1, 2))
    a = run_ensemble(system, psi0, 2000, 1, etalon)
    b = run_ensemble(system, psi0, 2000, 2, etalon)
    assert abs(a.mean - b.mean) < 4 * math.hypot(a.stderr, b.stderr)
    assert a.mean == pytest.approx(math.exp(-0.3 * math.pi), abs=5 * a.stderr)


def test_master_equation_keeps_pure_states_pure():
    system = weak_blockade_system()
    psi = input_vector((0, 1, 1))
    rho = evolve_master(system, np.outer(psi, psi.conj()), substeps=400)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-8)
    assert np.trace(rho @ rho).real == pytest.approx(1.0, abs=1e-8)


def test_master_equation_preserves_trace_and_hermiticity():
    system = weak_blockade_system(gamma=0.5)
    rng = np.random.default_rng(3)
    a = rng.standard_normal((27, 27)) + 1j * rng.standard_normal((27, 27))
    rho0 = a @ a.conj().T
    rho0 /= np.trace(rho0).real
    rho = evolve_master(system, rho0)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-8)
    assert np.allclose(rho, rho.conj().T, atol=1e-12)


def test_master_equation_reproduces_exponential_decay():
    gamma_t = 0.3
    system = control_pulse_system(omega=1.0, gamma_t=gamma_t)
    psi = input_vector((1, 2))
    rho = evolve_master(system, np.outer(psi, psi.conj()))
    parked = basis_index("12")
    assert rho[parked, parked].real == pytest.approx(math.exp(-gamma_t * math.pi), abs=1e-8)
    # decay feeds both target ground levels equally
    assert rho[basis_index("10"), basis_index("10")].real == pytest.approx(
        rho[basis_index("11"), basis_index("11")].real, abs=1e-10
    )


def test_master_equation_refuses_large_registers():
    system = build_system(InteractionSet.uniform(4, 1.0), standard_sequence(1.0, 1.0), 0.0, 0.0)
    psi = np.zeros(system.dim)
    psi[0] = 1.0
    with pytest.raises(ModelError):
        evolve_master(system, np.outer(psi, psi))


def test_master_equation_rejects_bad_density():
    system = control_pulse_system()
    with pytest.raises(ModelError):
        evolve_master(system, np.eye(9))
    with pytest.raises(ModelError):
        evolve_master(system, np.diag([2.0, -1.0] + [0.0] * 7))


def test_trajectory_average_matches_master_equation():
    system = weak_blockade_system(gamma=1.0)
    for i, bits in enumerate(input_states(2)):
        psi0, etalon = input_vector(bits), etalon_state(bits)
        stats = run_ensemble(system, psi0, 300, 2024, etalon, input_index=i)
        rho = evolve_master(system, np.outer(psi0, psi0.conj()))
        exact = float(np.real(etalon.conj() @ rho @ etalon))
        assert abs(stats.mean - exact) < 4 * stats.stderr + 1e-6
