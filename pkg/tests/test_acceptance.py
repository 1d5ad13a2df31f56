"""Long-running checks at the operating point (run with ``pytest -m slow``)."""

import math

import numpy as np
import pytest

from spheregate import experiments
from spheregate.config import RunConfig, config_from_dict, khz, mhz
from spheregate.errors import e_sp
from spheregate.fidelity import etalon_state, gate_fidelity, input_states, input_vector, unit_fidelities
from spheregate.geometry import InteractionSet, build_layout, interaction_table, representative_pairs
from spheregate.model import GateParameters, build_system, standard_sequence
from spheregate.solver import evolve_master, run_ensemble

OMEGA_T = mhz(3.784)
GAMMA_C = khz(2.0)
GAMMA_T = khz(4.0)

pytestmark = pytest.mark.slow


def test_thousandfold_blockade_reaches_unit_fidelity():
    inter = InteractionSet.uniform(2, 1e3 * OMEGA_T, 0.0)
    report = gate_fidelity(build_system(inter, standard_sequence(OMEGA_T, OMEGA_T), 0.0, 0.0), mode="nojump")
    assert report.average == pytest.approx(1.0, abs=1e-3)


def test_decay_error_matches_analytic_estimate_at_the_operating_point():
    layout = build_layout(5.0, 1.85)
    omega_c = 10 * OMEGA_T
    inter = interaction_table(layout).subset([0, 3])
    params = GateParameters(inter, standard_sequence(omega_c, OMEGA_T), GAMMA_C, GAMMA_T)
    ideal = params.with_interactions(uct_scale=50.0, zero_ucc=True)
    report = gate_fidelity(ideal.build(), mode="nojump", measure="population")
    assert 1.0 - report.average == pytest.approx(e_sp(OMEGA_T, omega_c, GAMMA_T, GAMMA_C), rel=0.2)


def test_trajectories_match_the_master_equation_for_every_unit():
    layout = build_layout(5.0, 1.85)
    inter = interaction_table(layout)
    sched = standard_sequence(OMEGA_T, OMEGA_T)
    for pair in representative_pairs(layout).values():
        system = build_system(inter.subset(pair), sched, GAMMA_C, GAMMA_T)
        for i, bits in enumerate(input_states(2)):
            psi0, etalon = input_vector(bits), etalon_state(bits)
            stats = run_ensemble(system, psi0, 2000, 99, etalon, input_index=i)
            rho = evolve_master(system, np.outer(psi0, psi0.conj()))
            exact = float(np.real(etalon.conj() @ rho @ etalon))
            assert abs(stats.mean - exact) < 4 * stats.stderr + 1e-4


@pytest.mark.parametrize("ratio", [0.37, 0.68])
def test_unit_average_peaks_at_both_working_heights(ratio):
    cfg = RunConfig()
    layout = experiments.layout_for(cfg, ratio)
    params = experiments.gate_parameters(cfg, layout, cfg.drive.omega_t, cfg.drive.omega_c)
    units = unit_fidelities(layout, params, mode="nojump")
    assert units.average == pytest.approx(0.9925, abs=0.004)


def test_unit_average_dips_where_the_blockade_vanishes():
    cfg = RunConfig()
    layout = experiments.layout_for(cfg, 1 / math.sqrt(3))
    params = experiments.gate_parameters(cfg, layout, cfg.drive.omega_t, cfg.drive.omega_c)
    assert unit_fidelities(layout, params, mode="nojump").average < 0.4


def test_operating_point_error_sources():
    cfg = config_from_dict({"drive": {"chi": 10}, "solver": {"fidelity_measure": "population"}})
    main, inset = experiments._omega_point((cfg, "nojump", 3.784))
    omega_t = cfg.drive.omega_t
    assert main[2] == pytest.approx(e_sp(omega_t, 10 * omega_t, GAMMA_T, GAMMA_C), rel=0.2)
    assert all(inset[i] < 1e-3 for i in (1, 3, 5))


def test_seven_qubit_gate_at_the_operating_point(tmp_path):
    outcome = experiments.gate(RunConfig(), tmp_path, "nojump", 6)
    assert outcome.summary["F_7"] == pytest.approx(0.9841, abs=0.005)
    # the decay-only limit bounds the full gate
    assert outcome.summary["F_7"] <= outcome.summary["decay_bound"] + 1e-3


def test_random_seventh_control_keeps_the_gate_robust(tmp_path):
    cfg = config_from_dict({"workers": 4})
    outcome = experiments.seventh(cfg, tmp_path, "nojump", 10)
    assert outcome.ok
    samples = outcome.rows[:10]
    assert [r[0] for r in samples] == list(range(10))
    assert all(r[5] < 1.0 for r in samples)
    assert 0.976 <= outcome.summary["mean_F"] <= 0.9845
