import itertools
import math

import numpy as np
import pytest
from scipy import stats as sps

from dcopde.problem import ContractViolation
from dcopde.stats import (
    DOMINATED,
    NO_DIFFERENCE,
    OUTPERFORMS,
    SampleGroup,
    compare,
    dominance_cell,
    dominance_matrix,
    ks_normality,
    kruskal_wallis,
    posthoc_bonferroni,
    STRATEGY_INDEX,
)


def groups(**kw):
    return [SampleGroup(k, v) for k, v in kw.items()]


def null_rejection_rate(reps=1000, seed=0):
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(reps):
        data = rng.normal(size=(3, 30))
        hits += kruskal_wallis([SampleGroup(str(i), d) for i, d in enumerate(data)])[1] < 0.05
    return hits / reps


def test_two_small_groups():
    H, p = kruskal_wallis(groups(a=[1, 2, 3], b=[4, 5, 6]))
    ref = sps.kruskal([1, 2, 3], [4, 5, 6])
    assert H == pytest.approx(3.857, abs=1e-3) and p == pytest.approx(0.0495, abs=1e-3)
    assert H == pytest.approx(ref.statistic, rel=1e-12) and p == pytest.approx(ref.pvalue, rel=1e-12)


def test_identical_groups():
    assert kruskal_wallis(groups(a=[1, 2, 3], b=[1, 2, 3])) == (0.0, 1.0)
    assert kruskal_wallis(groups(a=[5, 5], b=[5, 5])) == (0.0, 1.0)


def test_matches_reference_with_ties():
    rng = np.random.default_rng(1)
    for _ in range(50):
        data = [rng.integers(0, 6, int(rng.integers(3, 12))) for _ in range(4)]
        if len(np.unique(np.concatenate(data))) < 2:
            continue
        H, p = kruskal_wallis([SampleGroup(str(i), d) for i, d in enumerate(data)])
        ref = sps.kruskal(*data)
        assert H == pytest.approx(ref.statistic, rel=1e-10) and p == pytest.approx(ref.pvalue, rel=1e-9)


def test_null_calibration():
    assert null_rejection_rate() == pytest.approx(0.05, abs=0.02)


def test_monotone_transform_invariance():
    rng = np.random.default_rng(2)
    data = [rng.exponential(size=10) for _ in range(3)]
    a = kruskal_wallis([SampleGroup(str(i), d) for i, d in enumerate(data)])
    b = kruskal_wallis([SampleGroup(str(i), np.log(d) * 3 + 1) for i, d in enumerate(data)])
    assert a == pytest.approx(b, rel=1e-12)


def test_group_order_invariance():
    rng = np.random.default_rng(3)
    g = [SampleGroup(str(i), rng.normal(i * 0.3, size=12)) for i in range(4)]
    assert kruskal_wallis(g) == pytest.approx(kruskal_wallis(g[::-1]), rel=1e-12)


def test_group_contract():
    with pytest.raises(ContractViolation):
        SampleGroup("a", [])
    with pytest.raises(ContractViolation):
        SampleGroup("a", [1.0, math.nan])
    with pytest.raises(ContractViolation):
        kruskal_wallis(groups(a=[1, 2]))
    with pytest.raises(ContractViolation):
        kruskal_wallis(groups(a=[1], b=[2, 3]))


def test_posthoc_identical_groups():
    res = compare({"a": [1, 2, 3, 4], "b": [1, 2, 3, 4], "c": [1, 2, 3, 4]})
    assert all(r == NO_DIFFERENCE for r in res.relation.values())


def dunn_raw(data):
    """Untied Dunn z-test p-values from scratch."""
    pooled = np.concatenate(list(data.values()))
    N = pooled.size
    order = np.argsort(pooled)
    ranks = np.empty(N)
    ranks[order] = np.arange(1, N + 1)
    mean, start = {}, 0
    for k, v in data.items():
        mean[k] = ranks[start:start + len(v)].mean()
        start += len(v)
    out = {}
    for a, b in itertools.combinations(data, 2):
        se = math.sqrt(N * (N + 1) / 12 * (1 / len(data[a]) + 1 / len(data[b])))
        out[(a, b)] = 2 * sps.norm.sf(abs(mean[a] - mean[b]) / se)
    return out


def test_bonferroni_arithmetic():
    rng = np.random.default_rng(4)
    data = {s: rng.normal(i * 0.4, size=15) for i, s in enumerate("wxyz")}
    res = compare(data)
    raw = dunn_raw(data)
    assert len(raw) == 6
    for (a, b), p in raw.items():
        assert res.p_adjusted[(a, b)] == pytest.approx(min(1.0, 6 * p), rel=1e-9)
        assert res.p_adjusted[(b, a)] == res.p_adjusted[(a, b)]


def test_dominance_direction_and_antisymmetry():
    res = compare({"good": np.arange(30) * 0.01, "bad": 5 + np.arange(30) * 0.01, "mid": 2 + np.arange(30) * 0.01})
    assert res.relation[("good", "bad")] == OUTPERFORMS
    assert res.relation[("bad", "good")] == DOMINATED
    for (a, b), r in res.relation.items():
        flip = {OUTPERFORMS: DOMINATED, DOMINATED: OUTPERFORMS, NO_DIFFERENCE: NO_DIFFERENCE}[r]
        assert res.relation[(b, a)] == flip
    assert res.outperformed_by("good") == ["bad", "mid"]
    assert res.dominating("bad") == ["good", "mid"]


def test_posthoc_gated_on_omnibus():
    # a large pairwise gap cannot count when the omnibus test is forced to accept
    res = posthoc_bonferroni(groups(a=[1, 2, 3, 4], b=[5, 6, 7, 8]), alpha=0.001)
    assert res.p > 0.001
    assert res.relation[("a", "b")] == NO_DIFFERENCE


def test_dominance_cell_and_matrix():
    res = compare({
        "epsilon": np.arange(30) * 0.01, "feasibility": np.arange(30) * 0.01 + 0.001,
        "penalty": 9 + np.arange(30) * 0.01, "stochastic": np.arange(30) * 0.01 + 0.002,
    })
    assert dominance_cell(res, "penalty", STRATEGY_INDEX) == "1(+), 2(+), 4(+)"
    assert dominance_cell(res, "epsilon", STRATEGY_INDEX) == "3(-)"
    text = dominance_matrix([("G24_5", 20, res)], ["epsilon", "feasibility", "penalty", "stochastic"])
    header, row = text.splitlines()
    assert header.split("\t") == ["instance", "S", "epsilon(1)", "feasibility(2)", "penalty(3)", "stochastic(4)"]
    assert row.split("\t")[4] == "1(+), 2(+), 4(+)"
    sub = dominance_matrix([("G24_5", 20, compare({"feasibility": [1, 2, 3], "penalty": [1, 2, 3]}))],
                           ["feasibility", "penalty"])
    assert sub.splitlines()[0].split("\t")[2:] == ["feasibility(2)", "penalty(3)"]


def test_ks_normal_accepts():
    rng = np.random.default_rng(5)
    passes = sum(ks_normality(rng.normal(size=1000)) > 0.05 for _ in range(100))
    assert passes >= 90


def test_ks_uniform_rejects():
    rng = np.random.default_rng(6)
    rejects = sum(ks_normality(rng.random(200)) < 0.05 for _ in range(100))
    assert rejects >= 90


def test_ks_degenerate():
    assert ks_normality([3.0] * 10) == 0.0
    with pytest.raises(ContractViolation):
        ks_normality([1.0, 2.0])
