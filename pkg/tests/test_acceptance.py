"""Desk-scale acceptance suite; each test is one criterion with its own time budget."""
import json
import math
import os
import time
from dataclasses import replace

import numpy as np
import pytest

from rwidth.cli import main
from rwidth.harness import TrialConfig, converse_trial, expand_trials, gen_matrix, run_experiment, trial_seed
from rwidth.rwp import certify_alpha_lower
from rwidth.solvers import oracle_dantzig_lp, soft_threshold, solve_dantzig, solve_lasso
from rwidth.space import CsSpaceModel, decompose
from rwidth.theorem import default_rho, lemma1_report

pytestmark = pytest.mark.slow
WORKERS = min(8, os.cpu_count() or 1)


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


@pytest.mark.criterion(1, "Subgradient dual norm, pairing and subgradient inequality")
def test_subgradient_suite(record_property):
    rng = np.random.default_rng(101)
    X = rng.standard_normal((1000, 10))
    Y = rng.standard_normal((1000, 100, 10))

    def body():
        return [lemma1_report(x, Y[i]) for i, x in enumerate(X)]

    reports, secs = timed(body)
    worst_gap = max(abs(r.pairing_gap) for r in reports)
    worst_sub = min(r.subgradient_slack for r in reports)
    record_property("detail", f"1000 x, max gap {worst_gap:.1e}, min subgradient slack {worst_sub:.2e}, {secs:.2f}s")
    assert all(r.dual_norm == 1.0 for r in reports)
    assert worst_gap <= 1e-12
    assert worst_sub >= -1e-12
    assert secs < 1.0


@pytest.mark.criterion(2, "CS-space decomposition")
def test_decomposition_suite(record_property):
    rng = np.random.default_rng(102)
    cases = []
    for i in range(1000):
        k = (1, 3, 5)[i % 3]
        a = np.zeros(20)
        supp = rng.choice(20, size=int(rng.integers(0, k + 1)), replace=False)
        a[supp] = rng.standard_normal(supp.size)
        cases.append((k, a, rng.standard_normal(20)))

    def body():
        worst = 0.0
        for k, a, v in cases:
            d = decompose(CsSpaceModel(20, k), a, v)
            worst = max(
                worst,
                float(np.max(np.abs(d.z1 + d.z2 - v))),
                abs(float(np.abs(a + d.z1).sum() - np.abs(a).sum() - np.abs(d.z1).sum())),
                float(np.abs(d.z2).sum() - math.sqrt(k) * np.linalg.norm(v)),
            )
        return worst

    worst, secs = timed(body)
    record_property("detail", f"1000 cases, worst violation {worst:.1e}, {secs:.2f}s")
    assert worst <= 1e-12
    assert secs < 1.0


@pytest.mark.criterion(3, "Solver oracle equivalence")
def test_solver_oracles(record_property):
    rng = np.random.default_rng(103)

    def body():
        lasso_err = 0.0
        for _ in range(100):
            n = int(rng.integers(2, 17))
            Q, R = np.linalg.qr(rng.standard_normal((n, n)))
            Q = Q * np.sign(np.diag(R))
            y = 2 * rng.standard_normal(n)
            lam = float(rng.uniform(0.05, 1.5))
            lasso_err = max(lasso_err, float(np.linalg.norm(solve_lasso(Q, y, lam) - soft_threshold(Q.T @ y, lam))))
        gap = feas = 0.0
        for _ in range(50):
            P = rng.standard_normal((4, 6))
            y = 2 * rng.standard_normal(4)
            lam = float(rng.uniform(0.05, 1.0))
            xs = solve_dantzig(P, y, lam)
            xo = oracle_dantzig_lp(P, y, lam)
            gap = max(gap, abs(float(np.abs(xs).sum() - np.abs(xo).sum())))
            feas = max(feas, (float(np.max(np.abs(P.T @ (P @ xs - y)))) - lam) / lam)
        return lasso_err, gap, feas

    (lasso_err, gap, feas), secs = timed(body)
    record_property("detail", f"lasso err {lasso_err:.1e}, dantzig gap {gap:.1e}, rel. infeasibility {feas:.1e}, {secs:.1f}s")
    assert lasso_err <= 1e-6 and gap <= 1e-6 and feas <= 1e-8
    assert secs < 30


def slack_suite(model, master):
    base = TrialConfig(m=20, n=50, k=3, kappa=0.5, theta=1.0, model=model)
    configs = []
    for j, lam in enumerate((0.1, 1.0)):
        configs += expand_trials(replace(base, lam=lam), 250, trial_seed(master, j))
    return run_experiment(configs, parallelism=WORKERS)


def describe(summary, secs):
    return (f"{summary.n_passed}/{summary.n_trials} pass, solver failures {summary.n_solver_failures}, "
            f"worst slacks " + ", ".join(f"{k} {v:.2e}" for k, v in summary.worst_slacks.items()) + f", {secs:.1f}s")


@pytest.mark.criterion(4, "Lasso proof-step slacks")
def test_lasso_slacks(record_property):
    summary, secs = timed(lambda: slack_suite("lasso", 104))
    record_property("detail", describe(summary, secs))
    assert summary.n_trials == 500
    assert all(r.solver_ok and r.admissible and r.slacks_ok for r in summary.records)
    assert secs < 120


@pytest.mark.criterion(5, "Dantzig proof-step slacks")
def test_dantzig_slacks(record_property):
    summary, secs = timed(lambda: slack_suite("dantzig", 105))
    record_property("detail", describe(summary, secs))
    assert summary.n_trials == 500
    for r in summary.records:
        assert r.solver_ok and r.admissible
        assert r.slacks.step1 >= -r.eps and r.slacks.step3 >= -r.eps
    assert secs < 300


def sphere_samples(rng, n, rho, count):
    out = []
    while sum(len(o) for o in out) < count:
        X = rng.standard_normal((2 * count, n))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        out.append(X[rho * np.abs(X).sum(axis=1) <= 1.0])
    return np.vstack(out)[:count]


@pytest.mark.criterion(6, "End-to-end bound with certified robust width")
def test_end_to_end_bound(record_property):
    rng = np.random.default_rng(106)
    matrices, trials = 20, 10

    def body():
        configs, sound = [], math.inf
        for j in range(matrices):
            ens = "gaussian" if j % 2 == 0 else "bernoulli"
            k = 1 if j < matrices // 2 else 2
            cfg = TrialConfig(m=10, n=4, k=k, ensemble=ens, kappa=0.5, lam=0.3, delta=0.02, matrix_seed=1000 + j)
            phi = gen_matrix(ens, 10, 4, cfg.matrix_seed ^ 1)
            rho = default_rho("lasso", 0.5, math.sqrt(k))
            lb = certify_alpha_lower(phi, rho, 0.02)
            X = sphere_samples(rng, 4, rho, 10_000)
            sound = min(sound, float(np.min(np.linalg.norm(X @ phi.entries.T, axis=1) - lb)))
            configs += expand_trials(cfg, trials, trial_seed(106, j))
        # serial run so the certificate cache is shared across a matrix's trials
        return run_experiment(configs, parallelism=1), sound

    (summary, sound), secs = timed(body)
    certified = [r for r in summary.records if r.constants is not None and r.constants.valid]
    record_property(
        "detail",
        f"{len(certified)}/{summary.n_trials} certified, bound pass {sum(bool(r.bound_ok) for r in certified)}, "
        f"max lhs/rhs {summary.tightness_max:.2e}, min sampled gain margin {sound:.3f}, {secs:.1f}s",
    )
    assert len(certified) == 200
    assert all(r.admissible and r.bound_ok for r in certified)
    assert sound >= 0.0
    assert secs < 600


@pytest.mark.criterion(7, "Converse construction returns zero")
def test_converse(record_property):
    rng = np.random.default_rng(107)

    def body():
        worst = 0.0
        for i in range(100):
            m, n = int(rng.integers(3, 15)), int(rng.integers(3, 30))
            P = rng.standard_normal((m, n)) / math.sqrt(m)
            x = rng.standard_normal(n)
            for model in ("lasso", "dantzig"):
                worst = max(worst, converse_trial(P, x, 0.5, model).x_star_norm)
        return worst

    worst, secs = timed(body)
    record_property("detail", f"200 runs, max ||x*|| {worst:.1e}, {secs:.2f}s")
    assert worst <= 1e-8
    assert secs < 10


@pytest.mark.criterion(8, "Determinism across parallelism")
def test_determinism(tmp_path, record_property, capsys):
    cfg = tmp_path / "verify.json"
    cfg.write_text(json.dumps({"m": 20, "n": 50, "k": 3, "lambda": 0.1, "trials": 48}))

    def body():
        codes = [main(["verify", "--config", str(cfg), "--seed", "2024", "--parallel", str(p), "--out", str(tmp_path / f"p{p}")])
                 for p in (1, 8)]
        capsys.readouterr()
        return codes

    codes, secs = timed(body)
    a = (tmp_path / "p1" / "report.csv").read_bytes()
    b = (tmp_path / "p8" / "report.csv").read_bytes()
    record_property("detail", f"exit codes {codes}, {len(a)} bytes, identical={a == b}, {secs:.1f}s")
    assert codes == [0, 0]
    assert a == b
    assert secs < 60
