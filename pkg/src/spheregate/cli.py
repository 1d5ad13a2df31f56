from __future__ import annotations

import json
import logging
from typing import Callable, Optional

import typer

from . import config, experiments
from .exceptions import ConfigError, SpheregateError
from .fidelity import MODES

app = typer.Typer(add_completion=False, help="Spheroidal multi-qubit Rydberg Toffoli gate simulator")


def _load(
    config_path: Optional[str],
    seed: Optional[int] = None,
    trajectories: Optional[int] = None,
    workers: Optional[int] = None,
) -> config.RunConfig:
    cfg = config.load_config(config_path)
    if seed is not None:
        cfg.master_seed = seed
    if trajectories is not None:
        cfg.solver.trajectories = trajectories
    if workers is not None:
        cfg.workers = workers
    return cfg.validate()


def _mode(mode: Optional[str], default: str) -> str:
    chosen = mode or default
    if chosen not in MODES:
        raise ConfigError(f"--mode must be one of {', '.join(MODES)}, got {chosen!r}")
    return chosen


def _run(work: Callable[[], experiments.RunOutcome]) -> experiments.RunOutcome:
    """Run a workflow; library errors become a stderr message and exit code 1."""
    try:
        outcome = work()
    except SpheregateError as exc:
        typer.echo(f"error: {exc}", err=True)
        raise typer.Exit(1)
    for path in outcome.files:
        typer.echo(str(path))
    if outcome.failures:
        typer.echo(f"{len(outcome.failures)} point(s) failed:", err=True)
        for f in outcome.failures:
            typer.echo(f"  [{f['index']}] {f['value']}: {f['error']}", err=True)
        raise typer.Exit(1)
    return outcome


@app.callback()
def _default(
    verbose: int = typer.Option(0, "--verbose", "-v", count=True, help="-v for progress, -vv for solver detail"),
):
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


@app.command(name="sweep-h")
def sweep_h(
    config_path: Optional[str] = typer.Option(None, "--config", help="JSON run config"),
    out: Optional[str] = typer.Option(None, help="Output directory ($SPHEREGATE_OUT wins)"),
    seed: Optional[int] = typer.Option(None, help="Master seed"),
    trajectories: Optional[int] = typer.Option(None, help="Trajectories per input (mcwf)"),
    mode: Optional[str] = typer.Option(None, help="mcwf | nojump | master"),
    workers: Optional[int] = typer.Option(None, help="Worker processes"),
):
    """F_3 of the three (2+1) unit types versus h/R_ct."""
    def work():
        cfg = _load(config_path, seed, trajectories, workers)
        return experiments.sweep_h(cfg, config.get_out_dir(out, cfg), _mode(mode, cfg.solver.mode))

    outcome = _run(work)
    if outcome.summary:
        typer.echo(f"max F_3,av = {outcome.summary['max_F3_av']:.5f} at h/R = {outcome.summary['argmax_h_over_R']:.3f}")


@app.command(name="sweep-chi")
def sweep_chi(
    config_path: Optional[str] = typer.Option(None, "--config", help="JSON run config"),
    out: Optional[str] = typer.Option(None, help="Output directory ($SPHEREGATE_OUT wins)"),
    seed: Optional[int] = typer.Option(None, help="Master seed"),
    trajectories: Optional[int] = typer.Option(None, help="Trajectories per input (mcwf)"),
    mode: Optional[str] = typer.Option(None, help="mcwf | nojump | master"),
    workers: Optional[int] = typer.Option(None, help="Worker processes"),
):
    """F_3,av versus chi = Omega_c/Omega_t at the configured heights."""
    def work():
        cfg = _load(config_path, seed, trajectories, workers)
        return experiments.sweep_chi(cfg, config.get_out_dir(out, cfg), _mode(mode, cfg.solver.mode))

    _run(work)


@app.command(name="sweep-omega")
def sweep_omega(
    config_path: Optional[str] = typer.Option(None, "--config", help="JSON run config"),
    out: Optional[str] = typer.Option(None, help="Output directory ($SPHEREGATE_OUT wins)"),
    seed: Optional[int] = typer.Option(None, help="Master seed"),
    trajectories: Optional[int] = typer.Option(None, help="Trajectories per input (mcwf)"),
    mode: Optional[str] = typer.Option(None, help="mcwf | nojump | master (default nojump)"),
    workers: Optional[int] = typer.Option(None, help="Worker processes"),
):
    """Analytic and numeric error sources versus Omega_t."""
    def work():
        cfg = _load(config_path, seed, trajectories, workers)
        return experiments.sweep_omega(cfg, config.get_out_dir(out, cfg), _mode(mode, "nojump"))

    fit = _run(work).summary.get("e_bl_envelope_fit")
    if fit is not None:
        typer.echo(f"e_bl envelope prefactor = {fit:.3f}")


@app.command()
def gate(
    controls: Optional[int] = typer.Option(None, "--controls", "-k", help="Number of control atoms"),
    config_path: Optional[str] = typer.Option(None, "--config", help="JSON run config"),
    out: Optional[str] = typer.Option(None, help="Output directory ($SPHEREGATE_OUT wins)"),
    seed: Optional[int] = typer.Option(None, help="Master seed"),
    trajectories: Optional[int] = typer.Option(None, help="Trajectories per input (mcwf)"),
    mode: Optional[str] = typer.Option(None, help="mcwf | nojump | master (default gate.mode)"),
    workers: Optional[int] = typer.Option(None, help="Worker processes"),
    force: bool = typer.Option(False, "--force", help="Allow dimensions above 3^8"),
):
    """Full (k+1)-qubit fidelity at the gate operating point."""
    def work():
        cfg = _load(config_path, seed, trajectories, workers)
        k = controls if controls is not None else cfg.gate.controls
        return experiments.gate(cfg, config.get_out_dir(out, cfg), _mode(mode, cfg.gate.mode), k, force)

    outcome = _run(work)
    s = outcome.summary
    k = s["controls"]
    typer.echo(f"F_{k + 1} = {s[f'F_{k + 1}']:.5f} +- {s['stderr']:.2g}   (1 - E_{k},sp = {s['decay_bound']:.5f})")


@app.command()
def seventh(
    samples: Optional[int] = typer.Option(None, help="Random placements of the extra control"),
    config_path: Optional[str] = typer.Option(None, "--config", help="JSON run config"),
    out: Optional[str] = typer.Option(None, help="Output directory ($SPHEREGATE_OUT wins)"),
    seed: Optional[int] = typer.Option(None, help="Master seed"),
    trajectories: Optional[int] = typer.Option(None, help="Trajectories per input (mcwf)"),
    mode: Optional[str] = typer.Option(None, help="mcwf | nojump | master (default gate.mode)"),
    workers: Optional[int] = typer.Option(None, help="Worker processes"),
    force: bool = typer.Option(False, "--force", help="Allow dimensions above 3^8"),
):
    """Fidelity with one extra control placed at random under the U_cc limit."""
    def work():
        cfg = _load(config_path, seed, trajectories, workers)
        n = samples if samples is not None else cfg.seventh.samples
        return experiments.seventh(cfg, config.get_out_dir(out, cfg), _mode(mode, cfg.gate.mode), n, force)

    outcome = _run(work)
    s = outcome.summary
    if s:
        typer.echo(f"mean F = {s['mean_F']:.5f} (std {s['std_F']:.2g}), analytic {s['analytic_reference']:.5f}")


@app.command(name="truth-table")
def truth_table(
    controls: Optional[int] = typer.Option(None, "--controls", "-k", help="Number of control atoms"),
    config_path: Optional[str] = typer.Option(None, "--config", help="JSON run config"),
    out: Optional[str] = typer.Option(None, help="Output directory ($SPHEREGATE_OUT wins)"),
    seed: Optional[int] = typer.Option(None, help="Master seed"),
    trajectories: Optional[int] = typer.Option(None, help="Trajectories per input (mcwf)"),
    mode: Optional[str] = typer.Option(None, help="mcwf | nojump | master (default gate.mode)"),
    workers: Optional[int] = typer.Option(None, help="Worker processes"),
    force: bool = typer.Option(False, "--force", help="Allow dimensions above 3^8"),
):
    """Dominant output and fidelity for every computational input."""
    def work():
        cfg = _load(config_path, seed, trajectories, workers)
        k = controls if controls is not None else cfg.gate.controls
        return experiments.truth_table(cfg, config.get_out_dir(out, cfg), _mode(mode, cfg.gate.mode), k, force)

    outcome = _run(work)
    typer.echo(f"{'input':>10}  {'output':>10}  {'population':>10}  {'F_i':>8}")
    for bits, out_bits, pop, fid in outcome.rows:
        typer.echo(f"{bits:>10}  {out_bits:>10}  {pop:>10.5f}  {fid:>8.5f}")


@app.command()
def layout(
    config_path: Optional[str] = typer.Option(None, "--config", help="JSON run config"),
):
    """Print positions, pair types and interaction energies of the configured layout."""
    try:
        cfg = _load(config_path)
        desc = experiments.describe_layout(cfg)
    except SpheregateError as exc:
        typer.echo(f"error: {exc}", err=True)
        raise typer.Exit(1)
    typer.echo(json.dumps(desc, indent=2))


def main():
    app()


if __name__ == "__main__":
    main()
