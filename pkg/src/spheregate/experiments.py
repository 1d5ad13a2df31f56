"""Experiment workflows behind the CLI subcommands.

Each workflow takes a resolved RunConfig, fans its points out to a worker
pool, writes CSV + gnuplot + JSON run record into the output directory and
returns a RunOutcome. Rows are always ordered by sweep index.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import RunConfig, mhz
from .errors import (
    analytic_budget,
    arb_margins,
    e_abl,
    e_abl_max,
    e_k_sp,
    e_sp,
    numeric_decomposition,
    optional_envelope,
)
from .exceptions import ModelError, SpheregateError
from .fidelity import FidelityReport, gate_fidelity, unit_fidelities
from .geometry import (
    TWO_PI,
    SphericalLayout,
    UnitType,
    build_layout,
    interaction_table,
    pair_geometry,
    representative_pairs,
    sample_extra_control,
)
from .model import GateParameters, standard_sequence
from .output import write_csv, write_gnuplot, write_run_record
from .utils import bits_label

logger = logging.getLogger(__name__)

MAX_DIM = 3**8
UNIT_ORDER = (UnitType.LINEAR, UnitType.ACUTE, UnitType.OBTUSE)


@dataclass
class RunOutcome:
    command: str
    files: List[Path] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    failures: List[Dict[str, Any]] = field(default_factory=list)
    rows: List[List[Any]] = field(default_factory=list)
    header: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def layout_for(cfg: RunConfig, height_ratio: Optional[float] = None) -> SphericalLayout:
    g = cfg.geometry
    height = g.height_um if height_ratio is None else height_ratio * g.radius_um
    return build_layout(g.radius_um, height, g.twist_rad, g.ring_size)


def gate_parameters(cfg: RunConfig, layout: SphericalLayout, omega_t: float, omega_c: float) -> GateParameters:
    """Parameters for the whole layout with the config's ideal-limit overrides applied."""
    ov = cfg.overrides
    interactions = interaction_table(layout, cfg.geometry.c3, cfg.geometry.c6)
    interactions = interactions.with_overrides(ov.uct_scale, ov.zero_ucc)
    gamma_c = 0.0 if ov.zero_decay else cfg.decay.gamma_c
    gamma_t = 0.0 if ov.zero_decay else cfg.decay.gamma_t
    return GateParameters(interactions, standard_sequence(omega_c, omega_t), gamma_c, gamma_t, cfg.decay.jump_model)


def _guarded(args: Tuple[Callable, Any]) -> Tuple[bool, Any]:
    fn, arg = args
    try:
        return True, fn(arg)
    except SpheregateError as exc:
        return False, str(exc)


def map_points(fn: Callable, args: Sequence[Any], workers: int) -> List[Tuple[bool, Any]]:
    """Run fn over args, in a process pool when workers > 1; results keep input order."""
    jobs = [(fn, a) for a in args]
    if workers <= 1 or len(jobs) <= 1:
        return [_guarded(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_guarded, jobs))


def _collect(outcome: RunOutcome, values: Sequence[Any], results: Sequence[Tuple[bool, Any]], label: str) -> List[Any]:
    done = []
    for i, (value, (ok, res)) in enumerate(zip(values, results)):
        if ok:
            done.append(res)
        else:
            logger.error("%s point %d (%s) failed: %s", label, i, value, res)
            outcome.failures.append({"index": i, "value": value, "error": res})
    return done


def _finish(
    outcome: RunOutcome,
    out_dir: Path,
    stem: str,
    header: Sequence[str],
    rows: List[List[Any]],
    plot: Optional[Tuple[str, Sequence[str], str]] = None,
    comment: Optional[str] = None,
    logscale_y: bool = False,
) -> None:
    csv_path = write_csv(out_dir / f"{stem}.csv", header, rows, comment)
    outcome.files.append(csv_path)
    if plot is not None:
        x, ys, title = plot
        outcome.files.append(write_gnuplot(out_dir / f"{stem}.gp", csv_path.name, x, ys, header, title, logscale_y))
    outcome.rows, outcome.header = rows, list(header)


def _record(outcome: RunOutcome, cfg: RunConfig, out_dir: Path) -> RunOutcome:
    outcome.files.append(
        write_run_record(
            out_dir / f"{outcome.command}.json", outcome.command, cfg.to_dict(), outcome.summary,
            outcome.files, outcome.failures,
        )
    )
    return outcome


def _local_maxima(xs: Sequence[float], ys: Sequence[float]) -> List[Tuple[float, float]]:
    peaks = []
    for i, y in enumerate(ys):
        left = ys[i - 1] if i > 0 else -math.inf
        right = ys[i + 1] if i + 1 < len(ys) else -math.inf
        if y >= left and y >= right and not math.isnan(y):
            peaks.append((xs[i], y))
    return peaks


# sweep-h


def _h_point(args) -> List[Any]:
    cfg, mode, ratio = args
    layout = layout_for(cfg, ratio)
    params = gate_parameters(cfg, layout, cfg.drive.omega_t, cfg.drive.omega_c)
    units = unit_fidelities(
        layout, params, mode, cfg.solver.trajectories, cfg.master_seed, cfg.solver.rk4_substeps_per_period,
        measure=cfg.solver.fidelity_measure,
    )
    row: List[Any] = [ratio, ratio * cfg.geometry.radius_um]
    for unit in UNIT_ORDER:
        rep = units.reports.get(unit)
        row += [rep.average, rep.average_stderr] if rep else [math.nan, math.nan]
    row += [units.average, units.stderr]
    for unit in UNIT_ORDER:
        pair = units.pairs.get(unit)
        if pair is None:
            row.append(math.nan)
            continue
        ucc = params.interactions.u_cc[pair]
        uct = abs(params.interactions.u_ct[pair[0]])
        row.append(uct / ucc if ucc > 0 else math.inf)
    row.append(params.interactions.u_ct[0] / TWO_PI)
    return row


def sweep_h(cfg: RunConfig, out_dir: Path, mode: str) -> RunOutcome:
    outcome = RunOutcome("sweep-h")
    ratios = cfg.sweep_for("h").values()
    rows = _collect(outcome, ratios, map_points(_h_point, [(cfg, mode, r) for r in ratios], cfg.workers), "h")
    header = ["h_over_R", "h_um"]
    for unit in UNIT_ORDER:
        header += [f"F3_{unit.value}", f"F3_{unit.value}_stderr"]
    header += ["F3_av", "F3_av_stderr"] + [f"uct_over_ucc_{u.value}" for u in UNIT_ORDER] + ["u_ct_MHz"]
    _finish(
        outcome, out_dir, "sweep_h", header, rows,
        plot=("h_over_R", ["F3_linear", "F3_acute", "F3_obtuse", "F3_av"], "F_3 versus h/R_ct"),
        comment=f"mode={mode} trajectories={cfg.solver.trajectories} chi={cfg.drive.chi}",
    )
    if rows:
        xs = [r[0] for r in rows]
        av = [r[header.index("F3_av")] for r in rows]
        best = int(np.nanargmax(av))
        outcome.summary = {
            "argmax_h_over_R": xs[best],
            "max_F3_av": av[best],
            "local_maxima": [{"h_over_R": x, "F3_av": y} for x, y in _local_maxima(xs, av)],
        }
        logger.info("max F_3,av = %.5f at h/R = %.3f", av[best], xs[best])
    return _record(outcome, cfg, out_dir)


# sweep-chi


def _chi_point(args) -> List[Any]:
    cfg, mode, chi = args
    omega_t = cfg.drive.omega_t
    row: List[Any] = [chi]
    for ratio in cfg.sweep_for("chi").height_ratios():
        layout = layout_for(cfg, ratio)
        params = gate_parameters(cfg, layout, omega_t, chi * omega_t)
        units = unit_fidelities(
            layout, params, mode, cfg.solver.trajectories, cfg.master_seed, cfg.solver.rk4_substeps_per_period,
            measure=cfg.solver.fidelity_measure,
        )
        row += [units.average, units.stderr]
    return row


def sweep_chi(cfg: RunConfig, out_dir: Path, mode: str) -> RunOutcome:
    outcome = RunOutcome("sweep-chi")
    sweep = cfg.sweep_for("chi")
    chis, heights = sweep.values(), sweep.height_ratios()
    rows = _collect(outcome, chis, map_points(_chi_point, [(cfg, mode, c) for c in chis], cfg.workers), "chi")
    header = ["chi"]
    for ratio in heights:
        header += [f"F3_av_h{ratio:g}", f"F3_av_h{ratio:g}_stderr"]
    _finish(
        outcome, out_dir, "sweep_chi", header, rows,
        plot=("chi", header[1::2], "F_3,av versus chi = Omega_c/Omega_t"),
        comment=f"mode={mode} trajectories={cfg.solver.trajectories} omega_t_MHz={cfg.drive.omega_t_MHz}",
    )
    if rows:
        omega_t = cfg.drive.omega_t
        top = max(rows, key=lambda r: r[0])
        analytic = e_sp(omega_t, top[0] * omega_t, cfg.decay.gamma_t, cfg.decay.gamma_c)
        outcome.summary = {
            "max_chi": top[0],
            "F3_av_at_max_chi": {h: top[1 + 2 * i] for i, h in enumerate(heights)},
            "decay_limit_at_max_chi": 1.0 - analytic,
        }
    return _record(outcome, cfg, out_dir)


# sweep-omega


def _omega_point(args) -> Tuple[List[Any], List[Any]]:
    cfg, mode, omega_mhz = args
    omega_t = mhz(omega_mhz)
    omega_c = cfg.drive.chi * omega_t
    layout = layout_for(cfg)
    params = gate_parameters(cfg, layout, omega_t, omega_c)
    budgets = {}
    for unit, pair in representative_pairs(layout).items():
        unit_params = GateParameters(
            params.interactions.subset(pair), params.schedule, params.gamma_c, params.gamma_t, params.jump_model
        )
        budgets[unit] = numeric_decomposition(
            unit_params, mode, cfg.solver.trajectories, cfg.master_seed, cfg.solver.rk4_substeps_per_period,
            measure=cfg.solver.fidelity_measure,
        )
    inter = params.interactions
    envelope = optional_envelope(omega_t, float(inter.u_ct[0]))
    mean = {name: float(np.mean([getattr(b, name) for b in budgets.values()])) for name in ("e_sp", "e_bl", "e_abl", "e_tot")}
    main = [
        omega_mhz,
        e_sp(omega_t, omega_c, cfg.decay.gamma_t, cfg.decay.gamma_c),
        mean["e_sp"],
        envelope if envelope is not None else math.nan,
        mean["e_bl"],
        e_abl_max(inter, omega_c),
        mean["e_abl"],
        mean["e_tot"],
    ]
    inset: List[Any] = [omega_mhz]
    for unit in UNIT_ORDER:
        b = budgets.get(unit)
        pair = representative_pairs(layout).get(unit)
        inset.append(b.e_abl if b else math.nan)
        inset.append(e_abl(float(inter.u_cc[pair]), omega_c) if pair else math.nan)
    return main, inset


def sweep_omega(cfg: RunConfig, out_dir: Path, mode: str) -> RunOutcome:
    outcome = RunOutcome("sweep-omega")
    omegas = cfg.sweep_for("omega_t").values()
    done = _collect(outcome, omegas, map_points(_omega_point, [(cfg, mode, w) for w in omegas], cfg.workers), "omega_t")
    header = [
        "omega_t_MHz", "e_sp_analytic", "e_sp_num", "e_bl_env", "e_bl_num",
        "e_abl_analytic", "e_abl_num", "e_tot_num",
    ]
    inset_header = ["omega_t_MHz"]
    for unit in UNIT_ORDER:
        inset_header += [f"e_abl_num_{unit.value}", f"e_abl_analytic_{unit.value}"]
    comment = f"mode={mode} h_over_R={cfg.geometry.height_um / cfg.geometry.radius_um:g} chi={cfg.drive.chi}"
    _finish(
        outcome, out_dir, "sweep_omega_abl", inset_header, [d[1] for d in done],
        plot=("omega_t_MHz", inset_header[1::2], "antiblockade error per unit type"), comment=comment,
        logscale_y=True,
    )
    _finish(
        outcome, out_dir, "sweep_omega", header, [d[0] for d in done],
        plot=("omega_t_MHz", header[1:], "error sources versus Omega_t"), comment=comment, logscale_y=True,
    )
    if done:
        abl = [d[1][i] for d in done for i in (1, 3, 5) if not math.isnan(d[1][i])]
        ordered = sorted((d[0] for d in done), key=lambda r: r[0])
        inter = gate_parameters(cfg, layout_for(cfg), cfg.drive.omega_t, cfg.drive.omega_c).interactions
        weakest = float(min(inter.u_ct, key=abs))
        fit = _envelope_fit([r[0] for r in ordered], [r[4] for r in ordered], weakest)
        outcome.summary = {
            "max_e_abl_num": max(abl) if abl else None,
            "e_bl_envelope_fit": fit,
            "e_sp_dominates_at_min_omega": bool(ordered[0][2] > ordered[0][4]),
        }
        if fit is not None:
            logger.info("blockade envelope prefactor %.3f from %d omega points", fit, len(ordered))
    return _record(outcome, cfg, out_dir)


def _envelope_fit(omegas_mhz: Sequence[float], e_bl: Sequence[float], u_ct: float) -> Optional[float]:
    """Least-squares c in c (Omega_t/U_ct)^2 through the local maxima of e_bl; None without a blockade."""
    if u_ct == 0:
        return None
    peaks = _local_maxima(omegas_mhz, e_bl)
    if not peaks:
        return None
    x = np.array([(mhz(w) / u_ct) ** 2 for w, _ in peaks])
    y = np.array([e for _, e in peaks])
    return float(np.dot(x, y) / np.dot(x, x))


# gate and truth table


def _gate_setup(cfg: RunConfig, controls: int, force: bool, layout: Optional[SphericalLayout] = None):
    layout = layout if layout is not None else layout_for(cfg, cfg.gate.height_ratio)
    if not 1 <= controls <= layout.n_controls:
        raise ModelError(f"layout has {layout.n_controls} controls, asked for {controls}")
    dim = 3 ** (controls + 1)
    if dim > MAX_DIM and not force:
        raise ModelError(f"dimension {dim} exceeds {MAX_DIM}; pass --force to run anyway")
    omega_t = cfg.drive.omega_t
    omega_c = cfg.gate.chi * omega_t
    full = gate_parameters(cfg, layout, omega_t, omega_c)
    params = GateParameters(
        full.interactions.subset(range(controls)), full.schedule, full.gamma_c, full.gamma_t, full.jump_model
    )
    return layout, params, omega_t, omega_c


def _report_rows(report: FidelityReport) -> List[List[Any]]:
    rows: List[List[Any]] = [
        [bits_label(b), f, s] for b, f, s in zip(report.inputs, report.fidelities, report.stderrs)
    ]
    rows.append(["average", report.average, report.average_stderr])
    return rows


def gate(cfg: RunConfig, out_dir: Path, mode: str, controls: int, force: bool = False) -> RunOutcome:
    outcome = RunOutcome("gate")
    _, params, omega_t, omega_c = _gate_setup(cfg, controls, force)
    margins = arb_margins(params.interactions, omega_c, omega_t)
    report = gate_fidelity(
        params.build(), mode, cfg.solver.trajectories, cfg.master_seed, cfg.solver.rk4_substeps_per_period,
        cfg.workers, parameters={"controls": controls}, measure=cfg.gate.fidelity_measure,
    )
    bound = 1.0 - e_k_sp(controls, omega_t, omega_c, cfg.decay.gamma_t, cfg.decay.gamma_c)
    try:
        budget = analytic_budget(omega_t, omega_c, cfg.decay.gamma_t, cfg.decay.gamma_c, params.interactions)
    except ModelError as exc:
        logger.warning("no analytic budget: %s", exc)
        budget = None
    _finish(
        outcome, out_dir, f"gate_k{controls}", ["input_bits", "F_i", "stderr"], _report_rows(report),
        comment=f"mode={mode} controls={controls} h_over_R={cfg.gate.height_ratio} chi={cfg.gate.chi}",
    )
    outcome.summary = {
        "controls": controls,
        f"F_{controls + 1}": report.average,
        "stderr": report.average_stderr,
        "decay_bound": bound,
        "analytic_e_sp": budget.e_sp if budget else None,
        "analytic_e_bl_envelope": budget.e_bl if budget else None,
        "analytic_e_abl": budget.e_abl if budget else None,
        "arb_margins": {"blockade": margins.blockade, "drive": margins.drive, "antiblockade": margins.antiblockade},
    }
    logger.info("F_%d = %.5f, decay bound %.5f", controls + 1, report.average, bound)
    return _record(outcome, cfg, out_dir)


def truth_table(cfg: RunConfig, out_dir: Path, mode: str, controls: int, force: bool = False) -> RunOutcome:
    outcome = RunOutcome("truth-table")
    _, params, _, _ = _gate_setup(cfg, controls, force)
    report = gate_fidelity(
        params.build(), mode, cfg.solver.trajectories, cfg.master_seed, cfg.solver.rk4_substeps_per_period,
        cfg.workers, measure=cfg.gate.fidelity_measure,
    )
    rows = [
        [bits_label(b), bits_label(out), pop, f]
        for b, (out, pop), f in zip(report.inputs, report.dominant_outputs(), report.fidelities)
    ]
    _finish(
        outcome, out_dir, f"truth_table_k{controls}", ["input_bits", "output_bits", "population", "F_i"], rows,
        comment=f"mode={mode} controls={controls}",
    )
    outcome.summary = {"average_fidelity": report.average, "min_population": min(r[2] for r in rows)}
    return _record(outcome, cfg, out_dir)


# seventh control atom


def _seventh_point(args) -> List[Any]:
    cfg, mode, sample, force = args
    base = layout_for(cfg, cfg.gate.height_ratio)
    seed = np.random.SeedSequence([cfg.master_seed, sample])
    pos = sample_extra_control(
        base, cfg.seventh.max_ucc, seed, cfg.geometry.c6, cfg.seventh.max_attempts
    )
    layout = base.with_extra_control(pos)
    controls = layout.n_controls
    _, params, _, _ = _gate_setup(cfg, controls, force, layout)
    nearest = min(pair_geometry(layout, controls - 1, j).distance for j in range(controls - 1))
    report = gate_fidelity(
        params.build(), mode, cfg.solver.trajectories, cfg.master_seed, cfg.solver.rk4_substeps_per_period,
        measure=cfg.gate.fidelity_measure,
    )
    extra_ucc = float(np.max(params.interactions.u_cc[-1]))
    return [sample, pos[0], pos[1], pos[2], nearest, extra_ucc / TWO_PI, report.average, report.average_stderr]


def seventh(cfg: RunConfig, out_dir: Path, mode: str, samples: int, force: bool = False) -> RunOutcome:
    outcome = RunOutcome("seventh")
    idx = list(range(samples))
    rows = _collect(outcome, idx, map_points(_seventh_point, [(cfg, mode, s, force) for s in idx], cfg.workers), "sample")
    header = ["sample", "x_um", "y_um", "z_um", "nearest_um", "max_ucc_MHz", "F", "stderr"]
    k = cfg.geometry.ring_size * 2 + 1
    omega_t = cfg.drive.omega_t
    reference = 1.0 - e_k_sp(k, omega_t, cfg.gate.chi * omega_t, cfg.decay.gamma_t, cfg.decay.gamma_c)
    fids = np.array([r[6] for r in rows])
    summary_rows: List[List[Any]] = []
    if len(fids):
        spread = float(np.std(fids, ddof=1)) if len(fids) > 1 else 0.0
        summary_rows = [
            ["mean", "", "", "", "", "", float(np.mean(fids)), spread / math.sqrt(len(fids))],
            ["std", "", "", "", "", "", spread, ""],
        ]
        outcome.summary = {"mean_F": float(np.mean(fids)), "std_F": spread, "analytic_reference": reference}
    summary_rows.append(["analytic", "", "", "", "", "", reference, ""])
    _finish(
        outcome, out_dir, "seventh", header, rows + summary_rows,
        comment=f"mode={mode} controls={k} max_ucc_MHz={cfg.seventh.max_ucc_MHz}",
    )
    return _record(outcome, cfg, out_dir)


# layout description


def describe_layout(cfg: RunConfig) -> Dict[str, Any]:
    """Positions, pair geometry and interaction energies of the configured layout."""
    layout = layout_for(cfg)
    inter = interaction_table(layout, cfg.geometry.c3, cfg.geometry.c6)
    t = layout.target_index
    controls = []
    for i, pos in enumerate(layout.control_positions):
        pg = pair_geometry(layout, t, i)
        controls.append({
            "index": i,
            "position_um": [float(x) for x in pos],
            "theta_deg": math.degrees(pg.polar_angle),
            "u_ct_MHz": float(inter.u_ct[i]) / TWO_PI,
        })
    pairs = []
    for i in range(layout.n_controls):
        for j in range(i + 1, layout.n_controls):
            pg = pair_geometry(layout, i, j)
            pairs.append({
                "pair": [i, j],
                "distance_um": pg.distance,
                "unit_type": pg.unit_type.value if pg.unit_type else None,
                "u_cc_MHz": float(inter.u_cc[i, j]) / TWO_PI,
            })
    margins = arb_margins(inter, cfg.drive.omega_c, cfg.drive.omega_t)
    return {
        "radius_um": layout.radius_ct,
        "height_um": layout.height,
        "h_over_R": layout.height / layout.radius_ct,
        "ring_radius_um": layout.ring_radius,
        "controls": controls,
        "pairs": pairs,
        "arb_margins": {"blockade": margins.blockade, "drive": margins.drive, "antiblockade": margins.antiblockade},
    }
