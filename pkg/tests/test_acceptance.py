"""End-to-end acceptance checks, one PASS/FAIL line per criterion.

The experiment cells (G24_5, G24_1 and G24_7 at S=20, 30 runs per strategy)
are executed once per session into a temporary store with the default
configuration.  Thresholds are the contract values; nothing is relaxed when
a result misses them.
"""

import math
import os
import time

import numpy as np
import pytest

from conftest import make_ind
from dcopde import harness
from dcopde.constraints import deb_compare, eps_compare, sr_sort
from dcopde.g24 import DYNAMIC_IDS, STATIC_IDS, TABLE, feasible_region_ratio
from dcopde.stats import DOMINATED, SampleGroup, compare, kruskal_wallis

from test_measures import GOLDEN_OPTIMA, golden_trace
from test_stats import null_rejection_rate

GRID_BUDGET_S = 3600


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nacceptance criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def cells(tmp_path_factory):
    config = harness.ExperimentConfig(
        instances=("G24_5", "G24_1", "G24_7"), severities=(20,),
        out=str(tmp_path_factory.mktemp("acceptance")), workers=os.cpu_count() or 1,
    )
    store = harness.ResultStore(config.out)
    start = time.perf_counter()
    harness.ensure_optima(config, store)
    oracle_s = time.perf_counter() - start
    start = time.perf_counter()
    harness.run_experiment(config)
    runs_s = time.perf_counter() - start
    results = {(c.instance, c.severity): c for c in harness.collect(config, store)}
    return config, store, results, oracle_s, runs_s


def mean(cell, strategy, measure):
    return cell.reports[strategy].mean[measure]


def test_criterion_1_feasible_regions(capsys):
    bad = []
    for iid in STATIC_IDS:
        pct = 100 * feasible_region_ratio(iid, 20, 0, n_samples=10**6)
        if abs(pct - TABLE[iid].feasible_pct[0]) > 1.5:
            bad.append(f"{iid}={pct:.2f}%")
    for iid in DYNAMIC_IDS:
        lo, hi = TABLE[iid].feasible_pct
        for t in range(11):
            pct = 100 * feasible_region_ratio(iid, 20, t, n_samples=10**6)
            if not lo - 2 <= pct <= hi + 2:
                bad.append(f"{iid}@t{t}={pct:.2f}%")
    report(capsys, 1, not bad, f"{len(STATIC_IDS)} static ratios within 1.5 pts, {len(DYNAMIC_IDS)}x11 dynamic "
           f"ratios within range +-2 pts at S=20; misses: {', '.join(bad) or 'none'}")


def test_criterion_2_offline_error_direction(capsys, cells):
    config, _, results, oracle_s, runs_s = cells
    g5, g1 = results[("G24_5", 20)], results[("G24_1", 20)]
    pen, feas = mean(g5, "penalty", "M_off_e"), mean(g5, "feasibility", "M_off_e")
    ratio = pen / feas
    eps1, feas1 = mean(g1, "epsilon", "M_off_e"), mean(g1, "feasibility", "M_off_e")
    n_runs = sum(len(c.per_strategy[s]) for c in results.values() for s in config.strategies)
    # full grid: 24 cells of oracle work and 2880 runs, scaled from this session on this machine
    grid_s = oracle_s / 3 * 24 + runs_s / n_runs * 2880
    checks = {
        "G24_5 penalty/feasibility >= 3": ratio >= 3,
        "G24_1 epsilon in [0.1, 0.8]": 0.1 <= eps1 <= 0.8,
        "G24_1 feasibility in [0.1, 0.8]": 0.1 <= feas1 <= 0.8,
        "grid <= 1 h": grid_s <= GRID_BUDGET_S,
    }
    failed = [k for k, v in checks.items() if not v]
    report(capsys, 2, not failed,
           f"G24_5 S=20 penalty {pen:.3f} / feasibility {feas:.3f} = {ratio:.2f}; "
           f"G24_1 S=20 epsilon {eps1:.3f}, feasibility {feas1:.3f}; "
           f"projected grid time {grid_s / 60:.1f} min; failed: {', '.join(failed) or 'none'}")


def test_criterion_3_penalty_dominated(capsys, cells):
    _, _, results, _, _ = cells
    cell = results[("G24_5", 20)]
    res = compare({s: [r["M_off_e"] for r in cell.per_strategy[s]] for s in cell.per_strategy})
    rel = {o: res.relation[("penalty", o)] for o in ("epsilon", "feasibility", "stochastic")}
    ok = all(r == DOMINATED for r in rel.values())
    report(capsys, 3, ok, f"G24_5 S=20 H={res.H:.3f} p={res.p:.3g}; penalty vs "
           + ", ".join(f"{o}: {r} (p_adj={res.p_adjusted[('penalty', o)]:.3g})" for o, r in rel.items()))


def test_criterion_4_success_and_feasibility(capsys, cells):
    config, _, results, _, _ = cells
    g7, g1 = results[("G24_7", 20)], results[("G24_1", 20)]
    sr = {f"{c.instance}/{s}": mean(c, s, "SR_t") for c in (g7, g1) for s in config.strategies}
    fr = {s: mean(g1, s, "FR_t") for s in config.strategies}
    failed = [f"SR {k}={v:.2f}" for k, v in sr.items() if v != 0.0]
    failed += [f"FR G24_1/{s}={fr[s]:.2f}" for s in ("epsilon", "feasibility", "stochastic") if fr[s] != 1.0]
    if not fr["penalty"] < 1.0:
        failed.append(f"FR G24_1/penalty={fr['penalty']:.2f}")
    report(capsys, 4, not failed,
           "SR " + ", ".join(f"{k}={v:.2f}" for k, v in sr.items())
           + "; FR G24_1 " + ", ".join(f"{s}={v:.2f}" for s, v in fr.items())
           + f"; failed: {', '.join(failed) or 'none'}")


def test_criterion_5_strategy_oracles(capsys):
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(10_000):
        a, b = (make_ind(float(rng.normal()), 0.0 if rng.random() < 0.5 else float(rng.exponential()))
                for _ in range(2))
        mismatches += eps_compare(a, b, 0.0) is not deb_compare(a, b)
        mismatches += eps_compare(a, b, math.inf) is not (a if a.f_val <= b.f_val else b)
    sort_mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        f = rng.permutation(100)[:n].astype(float)
        phi = (rng.permutation(100)[:n] + 1).astype(float)
        infeasible = [make_ind(a, b) for a, b in zip(f, phi)]
        mixed = [make_ind(a, b if rng.random() < 0.5 else 0.0) for a, b in zip(f, phi)]
        feasible = [make_ind(a) for a in f]
        by_f = sorted(range(n), key=lambda i: f[i])
        sort_mismatches += sr_sort(infeasible, 0.0, rng) != sorted(range(n), key=lambda i: phi[i])
        sort_mismatches += sr_sort(mixed, 1.0, rng) != by_f
        sort_mismatches += sr_sort(feasible, float(rng.random()), rng) != by_f
    report(capsys, 5, mismatches == 0 and sort_mismatches == 0,
           f"epsilon-vs-oracle mismatches {mismatches}/20000; stochastic-ranking sort mismatches {sort_mismatches}/3000")


def test_criterion_6_golden_trace(capsys):
    from dcopde.measures import run_measures

    got = run_measures(golden_trace(), GOLDEN_OPTIMA)
    pr = (abs(math.log(math.sqrt(7 / 5))) + abs(math.log(math.sqrt(2.0))) + abs(math.log(math.sqrt(4.0)))) / 3
    expected = {"M_off_e": 10.1 / 6, "FR_t": 0.75, "SR_t": 0.5, "AE_t": 48.5, "CS_t": 97.0, "PR_t": pr}
    wrong = [m for m, v in expected.items() if not math.isclose(got[m], v, rel_tol=1e-12)]
    report(capsys, 6, not wrong, "synthetic trace " + ", ".join(f"{m}={got[m]:.6g}" for m in expected)
           + f"; wrong: {', '.join(wrong) or 'none'}")


def test_criterion_7_statistics(capsys):
    from scipy.stats import kruskal

    H, p = kruskal_wallis([SampleGroup("a", [1, 2, 3]), SampleGroup("b", [4, 5, 6])])
    ref = kruskal([1, 2, 3], [4, 5, 6])
    rate = null_rejection_rate()
    ok = (abs(H - 3.857) <= 1e-3 and abs(p - 0.0495) <= 1e-3
          and abs(H - ref.statistic) <= 1e-9 and abs(p - ref.pvalue) <= 1e-9 and abs(rate - 0.05) <= 0.02)
    report(capsys, 7, ok, f"H={H:.6f} p={p:.6f} (reference H={ref.statistic:.6f} p={ref.pvalue:.6f}); "
           f"null rejection rate {rate:.3f}")


def test_criterion_8_determinism_and_budget(capsys, cells, tmp_path):
    config, store, _, _, _ = cells
    sample = [t for t in harness.tasks(config) if t.run_index < 2]
    identical = all(
        harness.execute(t, config).dumps() == store.trace_path(t.instance, t.severity, t.strategy, t.run_index).read_text()
        for t in sample
    )
    budget = config.T * config.fc
    spent = [store.load_trace(t, config).generations[-1].evaluations for t in harness.tasks(config)]
    in_budget = all(abs(e - budget) <= config.NP for e in spent)
    report(capsys, 8, identical and in_budget,
           f"{len(sample)} re-executed runs byte-identical: {identical}; evaluations per run "
           f"{min(spent)}..{max(spent)} for budget {budget} +- {config.NP} over {len(spent)} runs")
