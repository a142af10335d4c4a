"""Decision referral for human-automation binary classification teams."""

import json as _json

from ._refereval import (
    DecisionCosts,
    Error,
    HumanPerfModel,
    Hypothesis,
    Prior,
    Rates,
    analytic_tpr_fpr,
    auto_bayes_decision,
    ba_workload,
    capacity_tpr_fpr,
    gamma_auto_star,
    gamma_human,
    optimal_referral,
    paired_t_test,
    referral_index,
    run_oracle,
    student_t_cdf,
    summary_stats,
    team_cost,
    top_w_referral,
)
from . import _refereval

__version__ = "0.1.0"


def perf_model(doc):
    """Perf model from a dict or JSON string ({"kind": "table" | "capacity" | "analytic", ...})."""
    if not isinstance(doc, str):
        doc = _json.dumps(doc)
    return HumanPerfModel.from_json(doc)


def run_study(scenario, seed, workers=1):
    """Run the randomized policy study; `scenario` is a dict or JSON string.

    Returns a list of (instance_id, policy, batch_id, realized_cost, expected_cost, load).
    """
    if not isinstance(scenario, str):
        scenario = _json.dumps(scenario)
    return _refereval.run_study(scenario, seed, workers)
