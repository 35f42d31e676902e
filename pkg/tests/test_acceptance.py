"""End-to-end acceptance checks.

Each test prints a single `criterion N: PASS/FAIL` line (run pytest with -s to
see them on success; failures show the captured line anyway) and then asserts.
Criteria 4 and 5 are split per problem family so a red leg pins down exactly
which claim does not hold at desk scale.
"""
import math
import time

import numpy as np
import pytest

from l0box.bench import make_spec, generate_instance, build_problem, run_experiment, trace_csv_text
from l0box.core import BoxSet, objective
from l0box.diagnostics import compute_delta
from l0box.oracle import certificate_for_support, enumerate_local_minimizers, finite_diff_gradient
from l0box.smoothing import (
    CensoredRegressionLoss,
    L1RegressionLoss,
    huber_scalar,
    smooth_plus_scalar,
)
from l0box.solvers import FihtConfig, SfihtConfig, fiht_solve, sfiht_solve
from l0box.subproblem import SubproblemInput, hard_threshold_step


def _line(tag, ok, detail):
    print(f"criterion {tag}: {'PASS' if ok else 'FAIL'} - {detail}")
    return ok


@pytest.fixture(scope="session")
def desk_runs():
    """Twenty seeded desk-scale experiments per example, preset configurations."""
    t0 = time.perf_counter()
    runs = {"41": [], "42": [], "43": []}
    for seed in range(20):
        runs["41"].append(run_experiment(make_spec("41", seed=seed, baselines=("siht",))))
        runs["42"].append(run_experiment(make_spec("42", seed=seed, baselines=())))
        runs["43"].append(run_experiment(make_spec("43", seed=seed, baselines=("iht",))))
    return runs, time.perf_counter() - t0


def _primary(report):
    return report.runs[report.spec.solver]


def test_criterion_1_threshold_step_matches_grid_oracle():
    rng = np.random.default_rng(90)
    coarse = np.linspace(0.0, 1.0, 1001)
    fine = np.linspace(-1.0, 1.0, 201)
    rows = np.arange(50)
    t0 = time.perf_counter()
    checked = 0
    max_gap = 0.0
    branch_bad = 0
    for _ in range(2000):
        mu = float(rng.uniform(0.05, 1.0))
        L = float(rng.uniform(0.5, 10.0))
        lam = float(10.0 ** rng.uniform(-4.0, -0.3))
        lo = -(10.0 ** rng.uniform(-2.0, 1.0, 50))
        hi = 10.0 ** rng.uniform(-2.0, 1.0, 50)
        lo[rng.random(50) < 0.25] = -np.inf
        hi[rng.random(50) < 0.25] = np.inf
        y = rng.uniform(-3.0, 3.0, 50)
        g = rng.normal(0.0, 3.0, 50)
        res = hard_threshold_step(SubproblemInput(y, g, mu, L, lam, BoxSet(lo, hi)))
        c = L / (2.0 * mu)
        s = res.s_point
        p = np.clip(s, lo, hi)

        # branch choice against the analytic two-candidate compare; skip ties
        # closer than the value tolerance, where float rounding may flip either
        branch_gap = c * (p - s) ** 2 + lam - c * s * s
        decisive = np.abs(branch_gap) > 1e-7
        branch_bad += int(
            np.count_nonzero((res.x_next[decisive] != 0.0) != (branch_gap[decisive] < 0.0))
        )

        # surrogate value against a two-stage grid plus the exact-zero candidate;
        # the window is centered on the projected gradient point, which carries
        # the constrained minimum of the nonzero branch
        a = np.maximum(lo, p - 0.05)
        b = np.minimum(hi, p + 0.05)
        grid = a[:, None] + (b - a)[:, None] * coarse[None, :]
        qc = c * (grid - s[:, None]) ** 2 + lam
        at = grid[rows, np.argmin(qc, axis=1)]
        h = (b - a) / 1000.0
        refined = np.clip(at[:, None] + h[:, None] * fine[None, :], a[:, None], b[:, None])
        oracle = np.minimum((c * (refined - s[:, None]) ** 2 + lam).min(axis=1), c * s * s)
        kernel = c * (res.x_next - s) ** 2 + lam * (res.x_next != 0.0)
        max_gap = max(max_gap, float(np.abs(kernel - oracle).max()))
        checked += 50
    elapsed = time.perf_counter() - t0
    ok = checked == 100_000 and max_gap <= 1e-7 and branch_bad == 0 and elapsed < 10.0
    _line(
        1,
        ok,
        f"{checked} scalar subproblems, max value gap {max_gap:.2e}, "
        f"{branch_bad} branch mismatches, {elapsed:.1f}s",
    )
    assert max_gap <= 1e-7
    assert branch_bad == 0
    assert elapsed < 10.0


def test_criterion_2_energy_descent_clean(desk_runs):
    runs, fixture_wall = desk_runs
    kinds = {"energy_increase", "energy_decrement", "beta_weight"}
    bad = 0
    solver_wall = 0.0
    count = 0
    for reports in runs.values():
        for report in reports:
            run = _primary(report)
            bad += sum(1 for v in run.result.audit.violations if v.kind in kinds)
            solver_wall += run.wall_time_s
            count += 1
    ok = bad == 0 and solver_wall < 120.0
    _line(
        2,
        ok,
        f"{bad} energy/momentum violations over {count} preset runs; "
        f"solver time {solver_wall:.1f}s (fixture wall {fixture_wall:.1f}s)",
    )
    assert bad == 0
    assert solver_wall < 120.0


def test_criterion_3_step_bounds_and_support_stabilization(desk_runs):
    runs, _ = desk_runs
    kinds = {"step_lower_bound", "nonzero_magnitude"}
    bad = 0
    unstable = []
    for family, reports in runs.items():
        for report in reports:
            run = _primary(report)
            bad += sum(1 for v in run.result.audit.violations if v.kind in kinds)
            trace = run.result.trace
            tail = trace[(3 * len(trace)) // 4 :]
            if any(r.support_changed for r in tail):
                unstable.append((family, report.spec.seed))
    ok = bad == 0 and not unstable
    _line(
        3,
        ok,
        f"{bad} step-bound violations; late support changes in {unstable or 'none'}",
    )
    assert bad == 0
    assert not unstable


def _certify(family, seed_base, lam, make_config, solve):
    """Run tiny instances of one family and compare against enumerated certificates."""
    matched = 0
    details = []
    for trial in range(10):
        n = (4, 6, 8)[trial % 3]
        m = n + 2 if family == "42" else n - 1
        spec = make_spec(family, m=m, n=n, s=max(1, n // 2), seed=seed_base + trial, lam=lam)
        problem = build_problem(spec, generate_instance(spec))
        result = solve(problem, make_config(n))
        certs = enumerate_local_minimizers(problem, rng=np.random.default_rng(trial))
        zeros = tuple(int(i) for i in np.flatnonzero(result.x_final == 0.0))
        cert = certificate_for_support(certs, zeros)
        _, f_solver, _ = objective(problem, result.x_final)
        if cert is None:
            details.append((trial, "no such support"))
            continue
        d_f = abs(f_solver - cert.objective)
        tol = 1e-3 if cert.precision_flag else 1e-5
        if cert.is_local_min and d_f <= tol:
            matched += 1
        else:
            details.append((trial, f"local={cert.is_local_min} dF={d_f:.1e}"))
    return matched, details


def test_criterion_4_certified_minimizers_l1():
    matched, details = _certify(
        "41",
        200,
        0.005,
        lambda n: SfihtConfig(
            epsilon=1e-5, sigma=0.95, mu0=0.1, beta_strategy="seqconv", max_iter=60000
        ),
        sfiht_solve,
    )
    ok = matched == 10
    _line("4 (l1 family)", ok, f"{matched}/10 supports certified locally minimal {details}")
    assert matched == 10


def test_criterion_4_certified_minimizers_censored():
    matched, details = _certify(
        "42",
        300,
        0.01,
        lambda n: SfihtConfig(
            epsilon=1e-4,
            sigma=0.95,
            mu0=0.1,
            beta_strategy="seqconv",
            max_iter=20000,
            x0=np.full(n, 0.1),
        ),
        sfiht_solve,
    )
    # Known red: the censored loss is nonconvex, outside the certified-descent
    # hypothesis, and its flat regions park the smoothed iteration at points the
    # exact-loss oracle can still improve.
    ok = matched == 10
    _line("4 (censored family)", ok, f"{matched}/10 supports certified {details}")
    assert matched == 10


def test_criterion_4_certified_minimizers_least_squares():
    matched = 0
    magnitude_ok = True
    details = []
    for trial in range(10):
        n = (4, 6, 8)[trial % 3]
        spec = make_spec("43", m=n - 1, n=n, s=max(1, n // 2), seed=100 + trial, lam=0.05)
        problem = build_problem(spec, generate_instance(spec))
        result = fiht_solve(problem, FihtConfig(epsilon=1e-10, max_iter=50000))
        certs = enumerate_local_minimizers(problem, rng=np.random.default_rng(trial))
        zeros = tuple(int(i) for i in np.flatnonzero(result.x_final == 0.0))
        cert = certificate_for_support(certs, zeros)
        _, f_solver, _ = objective(problem, result.x_final)
        delta, _ = compute_delta(problem.box, problem.lam, result.constants.L)
        nz = result.x_final != 0.0
        above_floor = (not nz.any()) or float(
            np.min(np.abs(result.x_final[nz]))
        ) >= delta - 1e-12
        magnitude_ok = magnitude_ok and above_floor
        if cert is not None and cert.is_local_min and abs(f_solver - cert.objective) <= 1e-5:
            matched += 1
        else:
            details.append(trial)
    ok = matched == 10 and magnitude_ok
    _line(
        "4 (least-squares family)",
        ok,
        f"{matched}/10 certified, nonzero magnitudes >= delta: {magnitude_ok} {details}",
    )
    assert matched == 10
    assert magnitude_ok


def _win_count(reports, baseline):
    wins = 0
    pairs = []
    for report in reports:
        primary = _primary(report).result.iterations
        other = report.runs[baseline].result.iterations
        wins += primary < other
        pairs.append((primary, other))
    return wins, pairs


def test_criterion_5_momentum_beats_plain_l1(desk_runs):
    runs, _ = desk_runs
    wins, pairs = _win_count(runs["41"], "siht")
    # Known red at desk scale: the mu-schedule cannot pass epsilon before
    # iteration 987, and on most seeds both solvers resolve their gradients
    # earlier and terminate together at that floor. Momentum never loses; a
    # strict win needs plain thresholding to outlast the floor, which no lambda
    # makes happen on 18 of 20 seeds.
    ok = wins >= 18
    _line("5 (l1 family)", ok, f"momentum wins {wins}/20 vs plain thresholding {pairs}")
    assert wins >= 18


def test_criterion_5_momentum_beats_plain_least_squares(desk_runs):
    runs, _ = desk_runs
    wins, pairs = _win_count(runs["43"], "iht")
    ok = wins >= 18
    _line("5 (least-squares family)", ok, f"momentum wins {wins}/20 vs plain {pairs}")
    assert wins >= 18


def test_criterion_6_tail_slope_censored(desk_runs):
    runs, _ = desk_runs
    passed = 0
    slopes = []
    for report in runs["42"]:
        rate = _primary(report).rate
        passed += rate is not None and rate.passed
        slopes.append(None if rate is None else rate.slope)
    ok = passed >= 16
    _line("6 (tail slope)", ok, f"{passed}/20 fitted slopes within bound {slopes}")
    assert passed >= 16


def test_criterion_6_quarter_ratio_least_squares(desk_runs):
    runs, _ = desk_runs
    passed = 0
    ratios = []
    for report in runs["43"]:
        rate = _primary(report).rate
        passed += rate is not None and rate.passed
        ratios.append(None if rate is None else (rate.quarter_ratio, rate.note or None))
    ok = passed >= 18
    _line("6 (quarter ratio)", ok, f"{passed}/20 quadratic-decay probes pass {ratios}")
    assert passed >= 18


def test_criterion_7_smoothing_contract():
    rng = np.random.default_rng(77)
    losses = {
        "l1": L1RegressionLoss(rng.normal(size=(6, 5)), rng.normal(size=6)),
        "censored": CensoredRegressionLoss(rng.normal(size=(7, 4)), np.abs(rng.normal(size=7))),
    }
    worst_gap = 0.0
    worst_fd = 0.0
    for loss in losses.values():
        n = loss.A.shape[1]
        for _ in range(1000):
            x = rng.normal(0.0, 1.5, n)
            mu = float(10.0 ** rng.uniform(-3.0, math.log10(loss.mu_bar)))
            gap = abs(loss.evaluate(x, mu) - loss.evaluate_exact(x)) / (loss.kappa * mu)
            worst_gap = max(worst_gap, gap)
        for _ in range(1000):
            x = rng.normal(0.0, 1.5, n)
            mu = float(10.0 ** rng.uniform(-2.0, math.log10(loss.mu_bar)))
            g = loss.gradient(x, mu)
            fd = finite_diff_gradient(loss, x, mu)
            rel = float(np.abs(fd - g).max() / max(1.0, np.abs(g).max()))
            worst_fd = max(worst_fd, rel)
    seam = 0.0
    for mu in np.logspace(-3.0, math.log10(0.7), 25):
        v, d = huber_scalar(mu, mu)
        seam = max(seam, abs(v - (mu * mu / (2.0 * mu) + mu / 2.0)), abs(v - mu), abs(d - 1.0))
        v, d = huber_scalar(-mu, mu)
        seam = max(seam, abs(v - mu), abs(d + 1.0))
        v, d = smooth_plus_scalar(mu, mu)
        seam = max(seam, abs(v - (mu + mu) ** 2 / (4.0 * mu)), abs(v - mu), abs(d - 1.0))
        v, d = smooth_plus_scalar(-mu, mu)
        seam = max(seam, abs(v), abs(d))
    ok = worst_gap <= 1.0 + 1e-12 and worst_fd <= 1e-5 and seam <= 1e-12
    _line(
        7,
        ok,
        f"worst gap {worst_gap:.3f}x kappa*mu, worst fd rel err {worst_fd:.1e}, "
        f"seam mismatch {seam:.1e}",
    )
    assert worst_gap <= 1.0 + 1e-12
    assert worst_fd <= 1e-5
    assert seam <= 1e-12


def test_criterion_8_bitwise_deterministic_traces():
    spec = make_spec(
        "41", m=20, n=60, s=20, epsilon=1e-2, lam=0.004, seed=3, baselines=("siht",)
    )
    first = run_experiment(spec)
    second = run_experiment(spec)
    same = all(
        trace_csv_text(first.runs[name].result.trace)
        == trace_csv_text(second.runs[name].result.trace)
        for name in first.runs
    )
    _line(8, same, f"{len(first.runs)} traces re-run bitwise identical: {same}")
    assert same
