"""Acceptance criteria 1-7, each reported as one PASS/FAIL line.

The lines are echoed to the terminal as they are produced and repeated in
an "acceptance criteria" section of the pytest summary.
"""

import contextlib
import functools
import io
import json
import sys
import time

import numpy as np

from cpsflow import cli
from cpsflow.lti import (DetectorConfig, LtiSystem, Observer, empirical_alarm_rate,
                         half_normal_stats, lyapunov_residual, residual_covariance,
                         settling_horizon, simulate, solve_lyapunov)
from cpsflow.reach import (corollary_check, integrity_verdict, project, reach, replay_witness,
                           starts_h_equivalent)

from conftest import ACCEPTANCE_LINES, auto_reach, scenario
from oracles import brute_force_layers, depth_for, random_model
from test_lti import random_stable

FIXTURE_ATTACKERS = [(name, att) for name in ("two-tank-v1", "two-tank-fair", "single-tank",
                                              "single-tank-composed")
                     for att in scenario(name).attackers]


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} C{number} {detail}"
    ACCEPTANCE_LINES.append(line)
    sys.__stdout__.write("\n" + line + "\n")
    sys.__stdout__.flush()
    return ok


@functools.lru_cache(maxsize=None)
def cli_analysis(fixture, attacker):
    """(seconds, json records) of one `analyze --k auto` run."""
    buf = io.StringIO()
    t0 = time.perf_counter()
    with contextlib.redirect_stdout(buf):
        cli.main(["analyze", "--model", fixture, "--attacker", attacker, "--k", "auto",
                  "--format", "json-lines"])
    seconds = time.perf_counter() - t0
    return seconds, [json.loads(line) for line in buf.getvalue().splitlines()]


def row(fixture, attacker):
    cells = {}
    for rec in cli_analysis(fixture, attacker)[1]:
        cells.update({k: v["reachable"] == "yes" for k, v in rec["vulnerabilities"].items()})
    return "".join("✓" if cells[p] else "✗" for p in ("E1", "E2", "F1", "F2"))


def hull(fixture, attacker, variable):
    rec = next(r for r in cli_analysis(fixture, attacker)[1] if r["variable"] == variable)
    return tuple(rec["hull"])


def test_c1_vulnerability_matrix():
    expected = {("two-tank-v1", "alpha1"): "✓✓✓✓", ("two-tank-v1", "alpha2"): "✗✓✗✓",
                ("two-tank-v1", "alpha3"): "✓✓✓✗", ("two-tank-fair", "alpha3"): "✓✗✓✗"}
    bad, slowest = [], 0.0
    for (fixture, attacker), want in expected.items():
        seconds, _ = cli_analysis(fixture, attacker)
        got = row(fixture, attacker)
        slowest = max(slowest, seconds)
        if got != want or seconds >= 60:
            bad.append(f"{fixture}/{attacker} got {got} want {want} in {seconds:.1f}s")
    detail = "; ".join(bad) if bad else f"4 rows exact, slowest {slowest:.1f}s"
    assert report(1, not bad, f"vulnerability matrix: {detail}"), detail


def test_c2_interval_hulls():
    v1, fair = scenario("two-tank-v1"), scenario("two-tank-fair")
    L = v1.config.L
    expected = {
        ("two-tank-v1", "alpha1", "y1"): (0, L), ("two-tank-v1", "alpha1", "y2"): (0, L),
        ("two-tank-v1", "alpha2", "y1"): (v1.band.lo[0], v1.band.hi[0]),
        ("two-tank-v1", "alpha2", "y2"): (0, L),
        ("two-tank-v1", "alpha3", "y2"): (0, v1.band.hi[1]),
        ("two-tank-fair", "alpha3", "y2"): (fair.band.lo[1] - fair.config.v2, fair.band.hi[1]),
    }
    bad = [f"{f}/{a}/{v} got {list(hull(f, a, v))} want {list(want)}"
           for (f, a, v), want in expected.items() if hull(f, a, v) != want]
    detail = "; ".join(bad) if bad else f"{len(expected)} hulls exact"
    assert report(2, not bad, f"interval hulls: {detail}"), detail


def test_c3_intermediate_sets():
    sc = scenario("two-tank-v1")
    cfg, (r1, r2) = sc.config, sc.band.hi
    a1 = reach(sc.model, sc.attackers["alpha1"], sc.sigma0, 2)
    a2 = reach(sc.model, sc.attackers["alpha2"], sc.sigma0, 3)

    def ys(res, layer, comp):
        return {v[0] for v in project(res, layer, [comp]).values}

    checks = [("y1 layer 1 alpha1", ys(a1, 1, "y1"), {r1 - cfg.v1}),
              ("y1 layer 2 alpha1", ys(a1, 2, "y1"), {r1 - 2 * cfg.v1, r1 - 2 * cfg.v1 + cfg.w}),
              ("y2 layer 3 alpha2", ys(a2, 3, "y2"), {r2 - 3 * cfg.v2, r2 - 3 * cfg.v2 + cfg.w})]
    bad = [f"{name} got {sorted(got)} want {sorted(want)}" for name, got, want in checks if got != want]
    detail = "; ".join(bad) if bad else ", ".join(f"{n} = {sorted(w)}" for n, _, w in checks)
    assert report(3, not bad, f"intermediate sets: {detail}"), detail


def test_c4_corollary():
    exceptions, runs = [], 0
    for fixture, attacker in FIXTURE_ATTACKERS:
        runs += 1
        if not corollary_check(auto_reach(fixture, attacker)):
            exceptions.append(f"{fixture}/{attacker}")
    for seed in range(100):
        model, s0, att = random_model(seed, max_states=1000)
        runs += 1
        if not corollary_check(reach(model, att, s0, "auto", k_max=200)):
            exceptions.append(f"random-{seed}")
    detail = f"{runs} runs, {len(exceptions)} exceptions" + (f": {exceptions}" if exceptions else "")
    assert report(4, not exceptions, f"corollary: {detail}"), detail


def test_c5_brute_force_equivalence():
    t0 = time.perf_counter()
    mismatches, depths = [], []
    for trial in range(50):
        seed = 50_000 + trial
        model, s0, att = random_model(seed, max_states=10_000)
        k = depth_for(att, k_max=8)
        depths.append(k)
        if [set(layer) for layer in reach(model, att, s0, k).layers] != \
                brute_force_layers(model, att, s0, k):
            mismatches.append(seed)
    seconds = time.perf_counter() - t0
    ok = not mismatches and seconds < 300
    detail = (f"50 trials, k in [{min(depths)}, {max(depths)}], {len(mismatches)} mismatches, "
              f"{seconds:.1f}s")
    assert report(5, ok, f"brute-force oracle: {detail}"), f"{detail} {mismatches}"


def _calibration_plant():
    A = np.array([[0.7, 0.2], [-0.1, 0.6]])
    B = np.array([[1.0], [0.5]])
    C = np.eye(2)
    R1 = np.array([[0.05, 0.01], [0.01, 0.05]])
    R2 = np.diag([0.1, 0.2])
    return LtiSystem(A, B, C, R1, R2), 0.3 * np.eye(2)


def test_c6_lti_statistics():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        sys_, L = random_stable(rng, n=int(rng.integers(2, 5)), m=int(rng.integers(1, 3)))
        worst = max(worst, lyapunov_residual(sys_, L, solve_lyapunov(sys_, L)))
    parts = {"a": worst < 1e-8}

    sys_, L = _calibration_plant()
    obs = Observer.for_system(sys_, L)
    sigma = np.sqrt(np.diag(residual_covariance(sys_, solve_lyapunov(sys_, L))))
    burn = settling_horizon(sys_, L)

    N = 100_000
    r = simulate(sys_, obs, N + burn, seed=1).r[burn:]
    mean_err = np.abs(r.mean(axis=0)) / (4 * sigma / np.sqrt(N))
    parts["b"] = bool(np.all(mean_err < 1))
    hn = np.abs(np.abs(r).mean(axis=0) / np.array([half_normal_stats(s).mean for s in sigma]) - 1)
    parts["d"] = bool(np.all(hn < 0.02))
    det = DetectorConfig.design(sigma, 0.05)
    rate = empirical_alarm_rate(r, det)
    parts["e"] = bool(np.all(np.abs(rate / 0.05 - 1) <= 0.20))

    big = simulate(sys_, obs, 1_000_000 + burn, seed=2).r[burn:]
    S = residual_covariance(sys_, solve_lyapunov(sys_, L))
    cov_err = np.max(np.abs(np.cov(big.T, bias=True) - S) / np.abs(S))
    parts["c"] = bool(cov_err < 0.03)

    seconds = time.perf_counter() - t0
    ok = all(parts.values()) and seconds < 120
    detail = (f"(a) max Lyapunov residual {worst:.2e}; (b) |mean|/(4s/sqrtN) max "
              f"{mean_err.max():.2f}; (c) covariance rel err {cov_err:.4f}; (d) half-normal "
              f"rel err {hn.max():.4f}; (e) alarm rate {', '.join(f'{x:.4f}' for x in rate)}; "
              f"{seconds:.1f}s")
    failed = [k for k, v in sorted(parts.items()) if not v]
    assert report(6, ok, f"LTI statistics: {detail}"), f"failed parts {failed}: {detail}"


def test_c7_witness_replay():
    checked, failures = 0, []
    cases = [(f"{f}/{a}", sc.model, sc.attackers[a], auto_reach(f, a))
             for f, a in FIXTURE_ATTACKERS for sc in [scenario(f)]]
    for seed in range(200):
        model, s0, att = random_model(seed, max_states=1000)
        cases.append((f"random-{seed}", model, att, reach(model, att, s0, "auto", k_max=200)))
    for name, model, att, res in cases:
        v = integrity_verdict(res)
        if v.status != "violated":
            continue
        checked += 1
        w = v.witness
        ok = (replay_witness(model, w) and starts_h_equivalent(model, att, w)
              and w.first.states[-1].y != w.second.states[-1].y
              and len(w.first.states) == w.cycle + 1 == len(w.second.states))
        if not ok:
            failures.append(name)
    ok = checked > 0 and not failures
    detail = f"{checked} violated verdicts replayed, {len(failures)} failures"
    assert report(7, ok, f"witness replay: {detail}"), f"{detail} {failures}"
