"""Command line front end: `l0box run`, `l0box oracle`, `l0box audit`."""
from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .bench import (
    audit_trace_file,
    build_problem,
    default_baseline,
    generate_instance,
    make_spec,
    run_experiment,
    write_report,
)
from .core import ContractViolation
from .oracle import enumerate_local_minimizers

_CONFIG_KEYS = {
    "example", "m", "n", "s", "seed", "lambda", "epsilon", "sigma", "mu0",
    "alpha", "max_iter", "noise_scale", "solver", "beta_preset", "baselines",
    "out", "full_scale", "figures",
}


def _load_config(path):
    if path is None:
        return {}
    data = tomllib.loads(Path(path).read_text())
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise click.UsageError(f"unknown config keys: {sorted(unknown)}")
    return data


def _merge(file_cfg, cli_cfg):
    merged = dict(file_cfg)
    merged.update({k: v for k, v in cli_cfg.items() if v is not None})
    return merged


@click.group()
@click.version_option(package_name="l0box")
def main():
    """Box-constrained sparse regression solvers with descent audits."""


@main.command()
@click.option("--example", type=click.Choice(["41", "42", "43"]), default=None,
              help="Benchmark family to run.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="TOML file with the same keys as the flags.")
@click.option("--m", type=int, default=None, help="Rows of A.")
@click.option("--n", type=int, default=None, help="Columns of A.")
@click.option("--s", type=int, default=None, help="Planted support size.")
@click.option("--seed", type=int, default=None, help="Instance RNG seed.")
@click.option("--lambda", "lam", type=float, default=None, help="Cardinality weight.")
@click.option("--epsilon", type=float, default=None, help="Stopping tolerance.")
@click.option("--sigma", type=float, default=None, help="Smoothing decay exponent.")
@click.option("--mu0", type=float, default=None, help="Initial smoothing parameter.")
@click.option("--alpha", type=float, default=None, help="Momentum denominator offset.")
@click.option("--max-iter", type=int, default=None, help="Iteration cap.")
@click.option("--noise-scale", type=float, default=None, help="Observation noise scale.")
@click.option("--solver", type=click.Choice(["sfiht", "siht", "fiht", "iht"]), default=None)
@click.option("--beta-preset", type=click.Choice(["generic", "seqconv", "fista", "paper-default"]),
              default=None, help="Momentum schedule for sfiht.")
@click.option("--baselines", type=str, default=None,
              help="Comma-separated baseline solvers, or 'none'. Default: the "
                   "unaccelerated twin of --solver.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Output directory (default l0box_out).")
@click.option("--full-scale/--desk-scale", "full_scale", default=None,
              help="Use the large benchmark shapes instead of the desk presets.")
@click.option("--figures/--no-figures", "figures", default=None,
              help="Render trace figures alongside the CSV/JSON outputs (default on).")
def run(config_path, **cli_cfg):
    """Run one benchmark instance and write traces, summary, report, figures."""
    cfg = _merge(_load_config(config_path), cli_cfg)
    example = cfg.pop("example", None)
    if example is None:
        raise click.UsageError("--example is required (flag or config file)")
    out_file, out_cli = cfg.pop("out", None), cfg.pop("out_dir", None)
    out_dir = out_cli or out_file or "l0box_out"
    figures = cfg.pop("figures", None)
    figures = True if figures is None else bool(figures)
    full_scale = bool(cfg.pop("full_scale", None) or False)
    lam_file, lam_cli = cfg.pop("lambda", None), cfg.pop("lam", None)
    cfg["lam"] = lam_cli if lam_cli is not None else lam_file

    baselines = cfg.pop("baselines", None)
    if isinstance(baselines, str):
        baselines = [] if baselines.strip().lower() == "none" else [
            t.strip() for t in baselines.split(",") if t.strip()
        ]
    try:
        spec = make_spec(str(example), full_scale=full_scale,
                         **{k: v for k, v in cfg.items() if v is not None})
        if baselines is None:
            twin = default_baseline(spec.solver)
            baselines = [twin] if twin else []
        spec = dataclasses.replace(spec, baselines=tuple(baselines))
    except ContractViolation as exc:
        raise click.UsageError(str(exc)) from exc

    click.echo(f"example {spec.example_id}: m={spec.m} n={spec.n} s={spec.s} "
               f"seed={spec.seed} lambda={spec.lam:g} solver={spec.solver}"
               + (f" baselines={','.join(spec.baselines)}" if spec.baselines else ""))
    report = run_experiment(spec)
    paths = write_report(report, out_dir, figures=figures)
    for name, srun in report.runs.items():
        audit = srun.result.audit
        click.echo(f"  {name}: {srun.result.status} after {srun.result.iterations} "
                   f"iterations, card {srun.final_card}, F {srun.final_F:.6g}, "
                   f"{audit.summary()}, {srun.wall_time_s:.3f}s")
        if not audit.ok:
            click.echo("  WARNING: descent audit recorded violations", err=True)
    click.echo("wrote:")
    for p in paths:
        click.echo(f"  {p}")
    if any(not srun.result.audit.ok for srun in report.runs.values()):
        sys.exit(2)


@main.command()
@click.option("--dim", type=int, required=True, help="Problem dimension (max 12).")
@click.option("--seed", type=int, default=0, help="Instance RNG seed.")
@click.option("--lambda", "lam", type=float, default=0.05, help="Cardinality weight.")
@click.option("--example", type=click.Choice(["41", "42", "43"]), default="43",
              help="Loss/box family for the tiny instance.")
@click.option("--m", type=int, default=None, help="Rows of A (default: dim-compatible preset).")
@click.option("--s", type=int, default=None, help="Planted support size (default dim//2).")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Write the certificate list to this JSON file (default stdout).")
def oracle(dim, seed, lam, example, m, s, out_path):
    """Enumerate every support of a tiny instance and certify local minimizers."""
    if dim > 12:
        raise click.UsageError("exhaustive enumeration is capped at dim 12")
    s = s if s is not None else max(1, dim // 2)
    if m is None:
        m = dim - 1 if example in ("41", "43") else dim + 2
    try:
        spec = make_spec(example, m=m, n=dim, s=s, seed=seed, lam=lam)
    except ContractViolation as exc:
        raise click.UsageError(str(exc)) from exc
    instance = generate_instance(spec)
    problem = build_problem(spec, instance)
    rng = np.random.default_rng(seed + 10_000)
    certs = enumerate_local_minimizers(problem, rng=rng)
    payload = {
        "dim": dim,
        "example": example,
        "seed": seed,
        "lambda": lam,
        "local_minimizers": [
            {
                "zero_indices": list(c.support),
                "x": [float(v) for v in c.x],
                "objective": c.objective,
                "restricted_value": c.value,
                "precision_flag": c.precision_flag,
            }
            for c in certs
            if c.is_local_min
        ],
        "supports_enumerated": len(certs),
    }
    text = json.dumps(payload, indent=2) + "\n"
    if out_path:
        Path(out_path).write_text(text)
        click.echo(f"wrote {out_path} ({len(payload['local_minimizers'])} local minimizers)")
    else:
        click.echo(text, nl=False)


@main.command()
@click.argument("trace", type=click.Path(exists=True, dir_okay=False))
@click.option("--summary", "summary_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="summary.json from the same run; enables constant checks.")
def audit(trace, summary_path):
    """Re-check a written trace CSV; exit 0 only if every check passes."""
    try:
        ok, messages = audit_trace_file(trace, summary_path)
    except (ContractViolation, ValueError) as exc:
        click.echo(f"audit error: {exc}", err=True)
        sys.exit(1)
    for msg in messages:
        click.echo(msg)
    click.echo("audit: " + ("clean" if ok else "FAILED"))
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
