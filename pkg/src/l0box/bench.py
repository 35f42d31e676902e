"""Seeded experiment harness: instance generation, solver runs, traces, reports.

Three benchmark families are built in. Family 41 is absolute-deviation linear
regression on [-1, 1]^n with row-orthonormal A and m < n; family 42 is censored
absolute-deviation regression on [0, 1]^n with Gaussian A and m > n; family 43
is least squares on [0, 5]^n with row-orthonormal A and m < n. Desk-scale
presets keep runs in seconds; --full-scale switches to the large shapes.
"""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import BoxSet, ContractViolation, Problem, objective
from .smoothing import censored_regression_loss, l1_regression_loss, least_squares_loss
from .solvers import (
    CONVERGED,
    REGIME_STEP1,
    REGIME_STEP3B,
    REGIME_STEP3B2,
    FihtConfig,
    IterationRecord,
    SfihtConfig,
    fiht_solve,
    sfiht_solve,
)

__all__ = [
    "EXAMPLE_IDS",
    "DESK_PRESETS",
    "FULL_PRESETS",
    "ExperimentSpec",
    "GeneratedInstance",
    "SolverRun",
    "ExperimentReport",
    "RateReport",
    "make_spec",
    "generate_instance",
    "build_problem",
    "build_config",
    "run_experiment",
    "write_report",
    "rate_probe",
    "render_markdown_table",
    "write_trace_csv",
    "trace_csv_text",
    "read_trace_csv",
    "audit_trace_file",
]

EXAMPLE_IDS = ("41", "42", "43")
TRACE_COLUMNS = ("k", "regime", "beta_k", "mu_k", "card", "f_exact", "f_smooth", "F", "energy", "step_norm")
SCHEMA_VERSION = 1

# Desk-scale shapes keep every benchmark under a couple of seconds; lambda
# values are calibration defaults chosen so recovered supports stay nontrivial,
# the primary solver converges before the cap on every seed in 0-19, and
# supports settle well before the final quarter of each trace.
DESK_PRESETS = {
    "41": dict(m=60, n=200, s=80, noise_scale=0.005, lam=0.01, epsilon=1e-3, sigma=0.95,
               solver="sfiht", beta_preset="seqconv"),
    "42": dict(m=200, n=40, s=12, noise_scale=0.01, lam=0.002, epsilon=1e-2, sigma=0.7,
               solver="sfiht", beta_preset="fista"),
    "43": dict(m=100, n=300, s=60, noise_scale=0.01, lam=0.01, epsilon=1e-4, sigma=0.95,
               solver="fiht", beta_preset="paper-default"),
}
FULL_PRESETS = {
    "41": dict(m=300, n=1000, s=400),
    "42": dict(m=1000, n=200, s=60),
    "43": dict(m=500, n=5000, s=1000),
}
_DEFAULT_BASELINE = {"sfiht": "siht", "fiht": "iht", "siht": None, "iht": None}
_SOLVERS_BY_EXAMPLE = {"41": ("sfiht", "siht"), "42": ("sfiht", "siht"), "43": ("fiht", "iht")}


@dataclass
class ExperimentSpec:
    """Everything needed to reproduce one benchmark run bit for bit."""

    example_id: str
    m: int
    n: int
    s: int
    seed: int = 0
    noise_scale: float = 0.01
    lam: float = 0.01
    epsilon: float = 1e-3
    sigma: float = 0.95
    mu0: float = 0.7
    alpha: float = 4.0
    max_iter: int = 15000
    solver: str = "sfiht"
    beta_preset: str = "paper-default"
    baselines: tuple = ()
    full_scale: bool = False

    def __post_init__(self):
        if self.example_id not in EXAMPLE_IDS:
            raise ContractViolation(f"unknown example_id {self.example_id!r}")
        if min(self.m, self.n, self.s) < 1 or self.s > self.n:
            raise ContractViolation("need 1 <= s <= n and m >= 1")
        if self.example_id in ("41", "43") and not self.m < self.n:
            raise ContractViolation(f"example {self.example_id} needs m < n")
        if self.example_id == "42" and not self.m > self.n:
            raise ContractViolation("example 42 needs m > n")
        allowed = _SOLVERS_BY_EXAMPLE[self.example_id]
        for name in (self.solver, *self.baselines):
            if name not in allowed:
                raise ContractViolation(
                    f"solver {name!r} does not apply to example {self.example_id} "
                    f"(allowed: {allowed})"
                )
        if self.beta_preset not in ("generic", "seqconv", "fista", "paper-default"):
            raise ContractViolation(f"unknown beta_preset {self.beta_preset!r}")


def make_spec(example_id, full_scale=False, **overrides):
    """Spec with desk-scale (or full-scale) preset values, then overrides."""
    if example_id not in EXAMPLE_IDS:
        raise ContractViolation(f"unknown example_id {example_id!r}")
    values = dict(DESK_PRESETS[example_id])
    if full_scale:
        values.update(FULL_PRESETS[example_id])
    values.update({k: v for k, v in overrides.items() if v is not None})
    values.setdefault("baselines", ())
    if isinstance(values["baselines"], str):
        raise ContractViolation("baselines must be a sequence of solver names")
    return ExperimentSpec(example_id=example_id, full_scale=full_scale, **values)


def default_baseline(solver):
    return _DEFAULT_BASELINE.get(solver)


@dataclass(eq=False)
class GeneratedInstance:
    example_id: str
    A: np.ndarray
    b: np.ndarray
    x_star: np.ndarray
    box: BoxSet
    seed_used: int


def _orthonormal_rows(rng, m, n):
    g = rng.standard_normal((m, n))
    q, r = np.linalg.qr(g.T)
    if np.min(np.abs(np.diag(r))) < 1e-10:
        return None
    return q.T


def generate_instance(spec):
    """Draw one benchmark instance; on a degenerate draw the seed is bumped."""
    for bump in range(8):
        rng = np.random.default_rng(spec.seed + bump)
        if spec.example_id in ("41", "43"):
            lo, hi = (-1.0, 1.0) if spec.example_id == "41" else (0.0, 5.0)
            x_bar = np.zeros(spec.n)
            order = rng.permutation(spec.n)
            x_bar[order[: spec.s]] = rng.standard_normal(spec.s)
            x_star = np.clip(x_bar, lo, hi)
            A = _orthonormal_rows(rng, spec.m, spec.n)
            if A is None:
                continue
            b = A @ x_star + spec.noise_scale * rng.standard_normal(spec.m)
            box = BoxSet.cube(spec.n, lo, hi)
        else:
            A = rng.standard_normal((spec.m, spec.n))
            x_star = np.zeros(spec.n)
            order = rng.permutation(spec.n)
            x_star[order[: spec.s]] = rng.uniform(0.1, 1.0, spec.s)
            b = np.maximum(A @ x_star + spec.noise_scale * rng.standard_normal(spec.m), 0.0)
            box = BoxSet.cube(spec.n, 0.0, 1.0)
        return GeneratedInstance(spec.example_id, A, b, x_star, box, spec.seed + bump)
    raise ContractViolation("could not draw a non-degenerate instance")


def build_problem(spec, instance):
    loss_by_example = {
        "41": l1_regression_loss,
        "42": censored_regression_loss,
        "43": least_squares_loss,
    }
    loss = loss_by_example[spec.example_id](instance.A, instance.b)
    return Problem(loss, instance.box, spec.lam)


def _resolve_beta(spec):
    if spec.beta_preset != "paper-default":
        return spec.beta_preset
    return {"41": "seqconv", "42": "fista", "43": "paper-default"}[spec.example_id]


def build_config(spec, solver_name):
    """Solver configuration for one named solver under this spec."""
    if solver_name in ("fiht", "iht"):
        return FihtConfig(
            epsilon=spec.epsilon,
            alpha=spec.alpha,
            beta_strategy="alpha" if solver_name == "fiht" else "zero",
            max_iter=spec.max_iter,
        )
    x0 = np.full(spec.n, 0.1) if spec.example_id == "42" else None
    return SfihtConfig(
        epsilon=spec.epsilon,
        sigma=spec.sigma,
        mu0=spec.mu0,
        alpha=spec.alpha,
        beta_strategy=_resolve_beta(spec) if solver_name == "sfiht" else "zero",
        max_iter=spec.max_iter,
        x0=x0,
    )


@dataclass(frozen=True)
class RateReport:
    mode: str
    passed: bool
    note: str = ""
    slope: float | None = None
    slope_band: float | None = None
    threshold: float | None = None
    tail_max: float | None = None
    quarter_ratio: float | None = None

    def to_dict(self):
        return {
            "mode": self.mode,
            "passed": self.passed,
            "note": self.note,
            "slope": self.slope,
            "slope_band": self.slope_band,
            "threshold": self.threshold,
            "tail_max": self.tail_max,
            "quarter_ratio": self.quarter_ratio,
        }


def rate_probe(trace, mode, sigma=None):
    """Empirical decay check on the objective trace.

    mode "sfiht": fit the tail slope of log(F - F_end + floor) against log k
    over the trailing half and compare with -0.8 * sigma. mode "fiht": compare
    the max of k^2 * (F - F_end) between the 3rd and 4th quarters; a decaying
    sequence keeps the ratio below 1.
    """
    if len(trace) < 200:
        raise ContractViolation("rate probes need at least 200 trace rows")
    f_end = trace[-1].F
    floor = np.finfo(float).eps * (1.0 + abs(f_end))
    if mode == "sfiht":
        if sigma is None:
            raise ContractViolation("sfiht rate probe needs sigma")
        tail = trace[len(trace) // 2 :]
        raw = np.array([r.F - f_end for r in tail])
        if np.all(raw <= 0.0):
            return RateReport(mode, True, note="converged beyond measurement")
        ks = np.log([r.k for r in tail])
        gaps = np.log(np.maximum(raw, 0.0) + floor)
        coeffs, cov = np.polyfit(ks, gaps, 1, cov=True)
        slope = float(coeffs[0])
        band = float(1.96 * np.sqrt(max(cov[0, 0], 0.0)))
        threshold = -0.8 * sigma
        return RateReport(mode, slope <= threshold, slope=slope, slope_band=band, threshold=threshold)
    if mode == "fiht":
        n = len(trace)
        q3 = trace[n // 2 : 3 * n // 4]
        q4 = trace[3 * n // 4 :]
        m3 = max(r.k**2 * max(r.F - f_end, 0.0) for r in q3)
        m4 = max(r.k**2 * max(r.F - f_end, 0.0) for r in q4)
        if m3 <= 0.0:
            return RateReport(mode, True, note="converged beyond measurement", tail_max=m4)
        ratio = m4 / m3
        return RateReport(mode, ratio < 1.0, tail_max=m4, quarter_ratio=ratio)
    raise ContractViolation(f"unknown rate probe mode {mode!r}")


@dataclass(eq=False)
class SolverRun:
    name: str
    result: object
    wall_time_s: float
    rate: RateReport | None
    final_f: float
    final_F: float
    final_card: int


@dataclass(eq=False)
class ExperimentReport:
    spec: ExperimentSpec
    instance: GeneratedInstance
    problem: Problem
    runs: dict = field(default_factory=dict)


def run_experiment(spec):
    """Generate one instance and run the configured solver plus its baselines on it."""
    instance = generate_instance(spec)
    problem = build_problem(spec, instance)
    report = ExperimentReport(spec, instance, problem)
    for name in (spec.solver, *spec.baselines):
        config = build_config(spec, name)
        t0 = time.perf_counter()
        result = fiht_solve(problem, config) if name in ("fiht", "iht") else sfiht_solve(problem, config)
        wall = time.perf_counter() - t0
        mode = "fiht" if name in ("fiht", "iht") else "sfiht"
        if len(result.trace) >= 200:
            rate = rate_probe(result.trace, mode, sigma=spec.sigma)
        elif result.status == CONVERGED:
            # The probe needs a 200-row tail; a run that met the stopping rule
            # sooner has already decayed past anything the probe could resolve.
            rate = RateReport(mode, True, note="converged before probe window")
        else:
            rate = None
        f, F, card = objective(problem, result.x_final)
        report.runs[name] = SolverRun(name, result, wall, rate, f, F, card)
    return report


def _fmt(value):
    if value is None:
        return ""
    return repr(float(value))


def trace_csv_text(trace):
    """Render trace rows to CSV text (stable float repr, newline terminated)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for r in trace:
        writer.writerow(
            [r.k, r.regime, _fmt(r.beta), _fmt(r.mu), r.card, _fmt(r.f_exact),
             _fmt(r.f_smooth), _fmt(r.F), _fmt(r.energy), _fmt(r.step_norm)]
        )
    return buf.getvalue()


def write_trace_csv(trace, path):
    Path(path).write_text(trace_csv_text(trace))


def read_trace_csv(path):
    """Parse a trace CSV back into IterationRecord rows (support flags unset)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRACE_COLUMNS:
            raise ContractViolation(f"unexpected trace header {header}")
        for raw in reader:
            rows.append(
                IterationRecord(
                    k=int(raw[0]),
                    regime=raw[1],
                    beta=float(raw[2]),
                    mu=float(raw[3]) if raw[3] else None,
                    card=int(raw[4]),
                    f_exact=float(raw[5]),
                    f_smooth=float(raw[6]),
                    F=float(raw[7]),
                    energy=float(raw[8]),
                    step_norm=float(raw[9]),
                )
            )
    return rows


def render_markdown_table(by_epsilon):
    """Iterations/time table shaped like the benchmark summaries: one row per
    solver, one column pair per epsilon. by_epsilon: {eps: {solver: (iters, s)}}."""
    eps_keys = sorted(by_epsilon)
    solvers = []
    for eps in eps_keys:
        for name in by_epsilon[eps]:
            if name not in solvers:
                solvers.append(name)
    head = ["solver"]
    for eps in eps_keys:
        head += [f"iterations (eps={eps:g})", f"time s (eps={eps:g})"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for name in solvers:
        cells = [name]
        for eps in eps_keys:
            entry = by_epsilon[eps].get(name)
            if entry is None:
                cells += ["-", "-"]
            else:
                iters, secs = entry
                cells += [str(iters), f"{secs:.3f}"]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def _constants_dict(constants):
    return {
        "L": constants.L,
        "L_smooth": constants.L_smooth,
        "kappa": constants.kappa,
        "gamma": constants.gamma,
        "nu": constants.nu,
        "delta": constants.delta,
    }


def summary_dict(report):
    spec = report.spec
    out = {
        "schema_version": SCHEMA_VERSION,
        "spec": {
            "example_id": spec.example_id,
            "m": spec.m,
            "n": spec.n,
            "s": spec.s,
            "seed": spec.seed,
            "noise_scale": spec.noise_scale,
            "lambda": spec.lam,
            "epsilon": spec.epsilon,
            "sigma": spec.sigma,
            "mu0": spec.mu0,
            "alpha": spec.alpha,
            "max_iter": spec.max_iter,
            "solver": spec.solver,
            "beta_preset": spec.beta_preset,
            "baselines": list(spec.baselines),
            "full_scale": spec.full_scale,
        },
        "rng": {
            "bit_generator": "PCG64",
            "numpy_version": np.__version__,
            "seed": spec.seed,
            "seed_used": report.instance.seed_used,
        },
        "instance": {
            "m": spec.m,
            "n": spec.n,
            "planted_card": int(np.count_nonzero(report.instance.x_star)),
            "box_lower": float(report.instance.box.lower[0]),
            "box_upper": float(report.instance.box.upper[0]),
        },
        "solvers": {},
    }
    for name, run in report.runs.items():
        res = run.result
        out["solvers"][name] = {
            "status": res.status,
            "iterations": res.iterations,
            "wall_time_s": run.wall_time_s,
            "final_card": run.final_card,
            "final_f": run.final_f,
            "final_F": run.final_F,
            "support_changes": res.support_change_count,
            "max_beta": res.max_beta,
            "audit": {"checks": res.audit.checks, "violations": len(res.audit.violations)},
            "constants": _constants_dict(res.constants),
            "rate_probe": run.rate.to_dict() if run.rate else None,
        }
    return out


def write_report(report, out_dir, figures=True):
    """Write traces, summary JSON, a markdown report, and (optionally) figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, run in report.runs.items():
        p = out / f"trace_{name}.csv"
        write_trace_csv(run.result.trace, p)
        paths.append(p)
    summary = summary_dict(report)
    sp = out / "summary.json"
    sp.write_text(json.dumps(summary, indent=2) + "\n")
    paths.append(sp)

    by_eps = {report.spec.epsilon: {n: (r.result.iterations, r.wall_time_s) for n, r in report.runs.items()}}
    md = [
        f"# Benchmark report: example {report.spec.example_id}",
        "",
        f"shape m={report.spec.m}, n={report.spec.n}, s={report.spec.s}, "
        f"seed={report.spec.seed}, lambda={report.spec.lam:g}",
        "",
        render_markdown_table(by_eps),
    ]
    for name, run in report.runs.items():
        audit = run.result.audit
        md.append(
            f"- `{name}`: status {run.result.status}, final card {run.final_card}, "
            f"final objective {run.final_F:.6g}, energy audit {audit.summary()}"
        )
    mp = out / "report.md"
    mp.write_text("\n".join(md) + "\n")
    paths.append(mp)

    if figures:
        from .figures import render_run_figures

        paths.extend(render_run_figures(report, out))
    return paths


def audit_trace_file(trace_path, summary_path=None):
    """Offline audit of a trace CSV: row contiguity, the smoothing schedule,
    energy monotonicity, and (when a summary is supplied) momentum caps and
    minimum support-change steps. Returns (ok, messages)."""
    rows = read_trace_csv(trace_path)
    failures, notes = [], []
    if not rows:
        return False, ["empty trace"]

    def check(cond, msg):
        if not cond:
            failures.append(msg)

    check([r.k for r in rows] == list(range(1, len(rows) + 1)), "k not contiguous from 1")
    for r in rows:
        check(r.regime in (REGIME_STEP1, REGIME_STEP3B, REGIME_STEP3B2),
              f"row {r.k}: bad regime {r.regime!r}")
        check(r.card >= 0 and r.step_norm >= 0 and r.beta >= 0, f"row {r.k}: negative field")
        if failures:
            break
    for prev, cur in zip(rows, rows[1:]):
        slack = 1e-10 * (1.0 + abs(prev.energy))
        check(cur.energy <= prev.energy + slack,
              f"row {cur.k}: energy increased by {cur.energy - prev.energy:.3e}")

    smoothed = rows[0].mu is not None
    sigma = None
    if smoothed and len(rows) >= 2 and rows[1].mu:
        mu0 = rows[0].mu
        sigma = float(np.log(mu0 / rows[1].mu) / np.log(3.0))
        for r in rows[1:]:
            expect = mu0 / (r.k + 1) ** sigma
            check(abs(r.mu - expect) <= 1e-12 * expect,
                  f"row {r.k}: mu off schedule ({r.mu} vs {expect})")

    if summary_path is not None:
        name = Path(trace_path).stem.replace("trace_", "")
        summary = json.loads(Path(summary_path).read_text())
        entry = summary.get("solvers", {}).get(name)
        if entry is None:
            notes.append(f"no solver entry {name!r} in summary; constants checks skipped")
        else:
            consts = entry["constants"]
            L, Ls = consts["L"], consts["L_smooth"]
            alpha = summary["spec"]["alpha"]
            for i, r in enumerate(rows):
                if smoothed:
                    mu_prev = rows[i - 1].mu if i else rows[0].mu
                    ratio = r.mu / mu_prev
                    caps = {
                        REGIME_STEP1: np.sqrt(ratio),
                        REGIME_STEP3B: np.sqrt((L - Ls) / (4 * L) * ratio),
                        REGIME_STEP3B2: np.sqrt((L - Ls) / (8 * L - 4 * Ls) * ratio),
                    }
                else:
                    caps = {
                        REGIME_STEP1: (r.k - 1) / (r.k + alpha - 1),
                        REGIME_STEP3B: np.sqrt(r.k / (r.k + 1) * (L - Ls) / (4 * L)),
                        REGIME_STEP3B2: np.sqrt(r.k / (r.k + 1) * (L - Ls) / (8 * L - 4 * Ls)),
                    }
                check(r.beta <= caps[r.regime] * (1 + 1e-9) + 1e-15,
                      f"row {r.k}: beta {r.beta} above {r.regime} cap {caps[r.regime]}")
            for prev, cur in zip(rows, rows[1:]):
                if prev.card != cur.card:  # support surely moved on the step into row cur
                    if smoothed:
                        check(cur.step_norm**2 >= consts["nu"] * prev.mu - 1e-12,
                              f"row {cur.k}: support-change step below nu*mu bound")
                    else:
                        check(cur.step_norm >= consts["delta"] - 1e-12,
                              f"row {cur.k}: support-change step below delta")
    return not failures, failures + notes
