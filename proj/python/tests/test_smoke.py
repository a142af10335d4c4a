import json
import math
import os
import pathlib

import pytest

import refereval as rv

EXP2 = rv.DecisionCosts(0.0, 8.0, 0.0, 12.0, 0.0)


def test_costs_and_index():
    assert EXP2.indifference_posterior() == pytest.approx(0.4)
    assert rv.auto_bayes_decision(0.4, EXP2) == rv.Hypothesis.H0
    assert rv.gamma_auto_star(0.4, EXP2) == pytest.approx(4.8)
    r = rv.Rates(0.87, 0.046)
    by_hand = 0.6 * 0.046 * 8 + 0.4 * 0.13 * 12
    assert rv.gamma_human(0.4, r, EXP2) == pytest.approx(by_hand)
    assert rv.referral_index(0.4, r, EXP2) == pytest.approx(4.8 - by_hand)


def test_invalid_costs_raise_with_code():
    with pytest.raises(rv.Error) as info:
        rv.DecisionCosts(0.0, 1.0, 2.0, 5.0, 0.0)
    assert info.value.code == "invalid_costs"
    assert isinstance(info.value, ValueError)


def test_optimal_referral_beats_every_subset():
    from itertools import combinations

    post = [0.05, 0.38, 0.92, 0.45, 0.2, 0.6]
    perf = rv.HumanPerfModel.table([1, 6], [0.95, 0.6], [0.02, 0.25])
    res = rv.optimal_referral(post, [], perf, EXP2)
    best = res_cost = rv.team_cost(post, res["referred"], perf, EXP2)
    for w in range(len(post) + 1):
        for s in combinations(range(len(post)), w):
            best = min(best, rv.team_cost(post, list(s), perf, EXP2))
    assert res_cost == pytest.approx(best)
    assert res["load"] == len(res["referred"])
    assert len(res["referred"]) + len(res["terminal"]) == len(post)
    assert rv.top_w_referral(post, 2, perf, EXP2) == sorted(rv.top_w_referral(post, 2, perf, EXP2))


def test_perf_models():
    cap = rv.perf_model({"kind": "capacity"})
    assert cap.rates(10).tpr == 0.87
    assert rv.capacity_tpr_fpr(15).fpr == pytest.approx(0.1973, abs=1e-4)
    table = rv.perf_model(json.dumps({"kind": "table", "loads": [6, 9], "tpr": [0.9, 0.6], "fpr": [0.05, 0.2]}))
    assert table.rates(7).tpr == pytest.approx(0.8)
    r = rv.analytic_tpr_fpr(20, "case1", 3.0, 1.25, 20, EXP2, rv.Prior(0.2))
    assert (r.tpr, r.fpr) == (0.0, 0.0)
    assert rv.ba_workload(rv.Prior(0.2), 0.81, 0.18, cap, EXP2, 30, list(range(6, 16))) == 10


def test_statistics():
    r = rv.paired_t_test([2, 0, 2, 0])
    assert r["t0"] == pytest.approx(math.sqrt(3))
    assert r["df"] == 3
    assert rv.student_t_cdf(0.0, 5) == pytest.approx(0.5)
    s = rv.summary_stats([1, 2, 3, 4, 5])
    assert (s["q1"], s["median"], s["q3"]) == (2, 3, 4)
    with pytest.raises(rv.Error):
        rv.paired_t_test([1, 1, 1])


def test_study_is_deterministic_across_workers():
    cfg_dir = pathlib.Path(os.environ.get("REFEREVAL_CONFIG_DIR", pathlib.Path(__file__).parents[2] / "config"))
    scenario = json.loads((cfg_dir / "scenario_default.json").read_text())
    scenario["study"].update(n_instances=2, n_batches=50, sa_samples=50)
    a = rv.run_study(scenario, 3, 1)
    b = rv.run_study(scenario, 3, 4)
    assert a == b
    assert len(a) == 2 * 50 * 3
    assert {row[1] for row in a} == {"oa", "ba", "sa"}


def test_oracle():
    t = rv.run_oracle(5, 40, 1)
    assert t["allocation_matches"] == 40
    assert t["fixed_load_matches"] == 40
