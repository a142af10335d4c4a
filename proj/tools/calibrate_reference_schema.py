#!/usr/bin/env python3
"""Tune the reference microworld attribute laws so that the reference trees
reach their target operating points.

Attributes are conditionally independent given the hidden state, so the
probability of reaching a tree leaf factorizes over attributes and is
computed exactly here (no sampling). The script searches over the free law
parameters, labels every automation leaf with the Bayes decision for the
configured prior and costs, and writes config/experiment_reference.json.

    python3 tools/calibrate_reference_schema.py [--out PATH] [--seed N]
"""
import argparse
import json
import math
import pathlib

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

TARGET_HUMAN = (0.87, 0.046)
TARGET_AUTO = (0.81, 0.18)
PRIOR_PI1 = 0.2
COSTS = {"c_tp": 0.0, "c_fp": 8.0, "c_tn": 0.0, "c_fn": 12.0, "c_r": 0.0}

CATEGORIES = {
    "origin": ["friendly", "neutral", "unknown", "hostile"],
    "direction": ["inbound", "outbound", "crossing"],
    "weapons": ["none", "light", "heavy"],
    "emission": ["civil", "military", "silent"],
    "identification_response": ["friend", "none", "invalid"],
}
CONTINUOUS = ["speed", "altitude", "distance"]
# Plausible display ranges: (mean_lo, mean_hi, sd_lo, sd_hi) in knots,
# thousands of feet and nautical miles.
CONT_RANGE = {
    "speed": (150.0, 700.0, 30.0, 150.0),
    "altitude": (2.0, 40.0, 2.0, 10.0),
    "distance": (10.0, 120.0, 8.0, 30.0),
}
# No single continuous attribute may separate the hypotheses by more than
# this many pooled standard deviations.
MAX_SEPARATION = 2.0

# Human decision tree. Continuous tests send value > threshold to "yes";
# categorical tests send membership in the category list to "yes".
HUMAN_TREE = [
    {"id": "n0", "attribute": "identification_response", "categories": ["friend"], "yes": "n1", "no": "n2"},
    {"id": "n1", "attribute": "origin", "categories": ["friendly", "neutral"], "yes": "n3", "no": "n4"},
    {"id": "n3", "attribute": "altitude", "threshold": "alt_hi", "yes": "h_civil_high", "no": "n7"},
    {"id": "n7", "attribute": "speed", "threshold": "spd_friend", "yes": "n11", "no": "h_friend_slow"},
    {"id": "n11", "attribute": "direction", "categories": ["inbound"], "yes": "h_friend_fast_in", "no": "h_friend_fast_out"},
    {"id": "n4", "attribute": "emission", "categories": ["military"], "yes": "n8", "no": "h_friend_unk_civil"},
    {"id": "n8", "attribute": "weapons", "categories": ["heavy"], "yes": "h_friend_unk_armed", "no": "n12"},
    {"id": "n12", "attribute": "distance", "threshold": "dist_close", "yes": "h_friend_unk_far", "no": "h_friend_unk_close"},
    {"id": "n2", "attribute": "weapons", "categories": ["none"], "yes": "n5", "no": "n6"},
    {"id": "n5", "attribute": "emission", "categories": ["civil"], "yes": "n9", "no": "n10"},
    {"id": "n9", "attribute": "speed", "threshold": "spd_civil", "yes": "n13", "no": "h_civil_slow"},
    {"id": "n13", "attribute": "direction", "categories": ["inbound"], "yes": "h_civil_fast_in", "no": "h_civil_fast_out"},
    {"id": "n10", "attribute": "distance", "threshold": "dist_near", "yes": "h_quiet_far", "no": "n14"},
    {"id": "n14", "attribute": "altitude", "threshold": "alt_lo", "yes": "h_quiet_near_high", "no": "h_quiet_near_low"},
    {"id": "n6", "attribute": "speed", "threshold": "spd_armed", "yes": "n15", "no": "n17"},
    {"id": "n15", "attribute": "direction", "categories": ["inbound"], "yes": "h_armed_fast_in", "no": "n16"},
    {"id": "n16", "attribute": "origin", "categories": ["hostile"], "yes": "h_armed_fast_hostile", "no": "h_armed_fast_other"},
    {"id": "n17", "attribute": "identification_response", "categories": ["invalid"], "yes": "n18", "no": "h_armed_slow_silent"},
    {"id": "n18", "attribute": "distance", "threshold": "dist_armed", "yes": "h_armed_slow_far", "no": "h_armed_slow_close"},
]
HUMAN_LABELS = {
    "h_civil_high": "H0", "h_friend_slow": "H0", "h_friend_fast_in": "H1", "h_friend_fast_out": "H0",
    "h_friend_unk_civil": "H0", "h_friend_unk_armed": "H1", "h_friend_unk_far": "H0", "h_friend_unk_close": "H1",
    "h_civil_slow": "H0", "h_civil_fast_in": "H1", "h_civil_fast_out": "H0",
    "h_quiet_far": "H0", "h_quiet_near_high": "H0", "h_quiet_near_low": "H1",
    "h_armed_fast_in": "H1", "h_armed_fast_hostile": "H1", "h_armed_fast_other": "H0",
    "h_armed_slow_silent": "H0", "h_armed_slow_far": "H0", "h_armed_slow_close": "H1",
}
# Automation tree: these human-tree subtrees collapse into single leaves.
AUTO_MERGE = [("n3", "a_friend_known"), ("n4", "a_friend_unknown"), ("n9", "a_civil"),
              ("n10", "a_quiet"), ("n15", "a_armed_fast"), ("n17", "a_armed_slow")]

# Free parameters: (name, initial value). Probabilities go through a softmax.
CONT_INIT = {
    "speed": (330.0, 90.0, 470.0, 100.0),
    "altitude": (24.0, 8.0, 14.0, 8.0),
    "distance": (60.0, 20.0, 40.0, 20.0),
}
CAT_INIT = {
    "origin": ([0.5, 0.3, 0.15, 0.05], [0.1, 0.2, 0.3, 0.4]),
    "direction": ([0.3, 0.4, 0.3], [0.6, 0.15, 0.25]),
    "weapons": ([0.7, 0.2, 0.1], [0.2, 0.4, 0.4]),
    "emission": ([0.6, 0.15, 0.25], [0.2, 0.5, 0.3]),
    "identification_response": ([0.7, 0.25, 0.05], [0.25, 0.45, 0.3]),
}
THRESHOLDS = {"alt_hi": 20.0, "alt_lo": 18.0, "spd_friend": 420.0, "spd_civil": 430.0,
              "spd_armed": 400.0, "dist_close": 45.0, "dist_near": 50.0, "dist_armed": 45.0}


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def logit(q):
    q = min(max(q, 1e-6), 1 - 1e-6)
    return math.log(q / (1 - q))


def nodes_by_id():
    return {n["id"]: n for n in HUMAN_TREE}


def enumerate_paths(root, stop_at=None):
    """Returns (leaf_id, depth, constraints, visited) for every leaf below root."""
    nodes = nodes_by_id()
    out = []

    def walk(nid, depth, cons, visited=()):
        visited = visited + (nid,)
        if stop_at and nid in stop_at:
            out.append((stop_at[nid], depth, cons, visited))
            return
        if nid not in nodes:
            out.append((nid, depth, cons, visited))
            return
        n = nodes[nid]
        for branch in ("yes", "no"):
            c = dict(cons)
            a = n["attribute"]
            if "threshold" in n:
                lo, hi = c.get(a, (-math.inf, math.inf))
                t = THRESHOLDS[n["threshold"]]
                c[a] = (max(lo, t), hi) if branch == "yes" else (lo, min(hi, t))
            else:
                allowed = c.get(a, set(CATEGORIES[a]))
                sel = set(n["categories"])
                c[a] = (allowed & sel) if branch == "yes" else (allowed - sel)
            walk(n[branch], depth + 1, c, visited)

    walk(root, 0, {})
    return out


def unpack(x):
    cont, cat, i = {}, {}, 0
    for a in CONTINUOUS:
        z = x[i:i + 4]
        mlo, mhi, slo, shi = CONT_RANGE[a]
        cont[a] = (mlo + (mhi - mlo) * sigmoid(z[0]), slo + (shi - slo) * sigmoid(z[1]),
                   mlo + (mhi - mlo) * sigmoid(z[2]), slo + (shi - slo) * sigmoid(z[3]))
        i += 4
    for a in CATEGORIES:
        n = len(CATEGORIES[a])
        z0 = np.append(x[i:i + n - 1], 0.0)
        z1 = np.append(x[i + n - 1:i + 2 * n - 2], 0.0)
        i += 2 * n - 2
        cat[a] = (np.exp(z0) / np.exp(z0).sum(), np.exp(z1) / np.exp(z1).sum())
    return cont, cat


def pack():
    x = []
    for a in CONTINUOUS:
        m0, s0, m1, s1 = CONT_INIT[a]
        mlo, mhi, slo, shi = CONT_RANGE[a]
        x += [logit((m0 - mlo) / (mhi - mlo)), logit((s0 - slo) / (shi - slo)),
              logit((m1 - mlo) / (mhi - mlo)), logit((s1 - slo) / (shi - slo))]
    for a in CATEGORIES:
        p0, p1 = CAT_INIT[a]
        x += list(np.log(np.array(p0[:-1]) / p0[-1]))
        x += list(np.log(np.array(p1[:-1]) / p1[-1]))
    return np.array(x, dtype=float)


def path_prob(cons, h, cont, cat):
    p = 1.0
    for a, c in cons.items():
        if a in cont:
            m0, s0, m1, s1 = cont[a]
            m, s = (m1, s1) if h else (m0, s0)
            p *= norm.cdf((c[1] - m) / s) - norm.cdf((c[0] - m) / s)
        else:
            probs = cat[a][1 if h else 0]
            p *= sum(probs[CATEGORIES[a].index(v)] for v in c)
    return p


def evaluate(x):
    cont, cat = unpack(x)
    human = enumerate_paths("n0")
    tpr = sum(path_prob(c, 1, cont, cat) for l, d, c, _ in human if HUMAN_LABELS[l] == "H1")
    fpr = sum(path_prob(c, 0, cont, cat) for l, d, c, _ in human if HUMAN_LABELS[l] == "H1")
    auto = enumerate_paths("n0", stop_at=dict(AUTO_MERGE))
    rho = (COSTS["c_fp"] - COSTS["c_tn"]) / (COSTS["c_fp"] - COSTS["c_tn"] + COSTS["c_fn"] - COSTS["c_tp"])
    a_tpr = a_fpr = 0.0
    leaves = {}
    for l, d, c, _ in auto:
        q1, q0 = path_prob(c, 1, cont, cat), path_prob(c, 0, cont, cat)
        post = PRIOR_PI1 * q1 / (PRIOR_PI1 * q1 + (1 - PRIOR_PI1) * q0)
        label = "H1" if post > rho else "H0"
        leaves[l] = (label, post, q0, q1)
        if label == "H1":
            a_tpr += q1
            a_fpr += q0
    return tpr, fpr, a_tpr, a_fpr, leaves


def deep_share(x):
    """Share of each automation leaf's mass (prior mixture) that lies on
    human-tree paths of depth 4 or 5."""
    cont, cat = unpack(x)
    total = {leaf: 0.0 for _, leaf in AUTO_MERGE}
    deep = dict(total)
    for l, d, c, visited in enumerate_paths("n0"):
        m = PRIOR_PI1 * path_prob(c, 1, cont, cat) + (1 - PRIOR_PI1) * path_prob(c, 0, cont, cat)
        for node, leaf in AUTO_MERGE:
            if node in visited:
                total[leaf] += m
                if d in (4, 5):
                    deep[leaf] += m
    return {k: deep[k] / total[k] if total[k] > 0 else 0.0 for k in total}


def loss(x):
    tpr, fpr, a_tpr, a_fpr, leaves = evaluate(x)
    labels = [v[0] for v in leaves.values()]
    pen = 0.0 if ("H1" in labels and "H0" in labels) else 1.0
    # keep every leaf informative but not degenerate, and reachable at depth 4-5
    for _, post, q0, q1 in leaves.values():
        for q in (q0, q1):
            if not q >= 0.02:
                pen += ((0.02 - (q if q == q else 0.0)) / 0.002) ** 2
    for share in deep_share(x).values():
        if share < 0.2:
            pen += ((0.2 - share) / 0.02) ** 2
    cont, cat = unpack(x)
    for m0, s0, m1, s1 in cont.values():
        sep = abs(m1 - m0) / math.sqrt((s0 * s0 + s1 * s1) / 2)
        if sep > MAX_SEPARATION:
            pen += ((sep - MAX_SEPARATION) / 0.05) ** 2
        for m, sd in ((m0, s0), (m1, s1)):
            if m < 2.5 * sd:
                pen += ((2.5 * sd - m) / (0.1 * sd)) ** 2
    for p0, p1 in cat.values():
        for p in list(p0) + list(p1):
            if p < 0.02:
                pen += ((0.02 - p) / 0.005) ** 2
    return ((tpr - TARGET_HUMAN[0]) / 0.005) ** 2 + ((fpr - TARGET_HUMAN[1]) / 0.002) ** 2 \
        + ((a_tpr - TARGET_AUTO[0]) / 0.005) ** 2 + ((a_fpr - TARGET_AUTO[1]) / 0.005) ** 2 + pen


def to_config(x):
    cont, cat = unpack(x)
    attrs = []
    for a in ["speed", "altitude", "origin", "distance", "direction", "weapons", "emission",
              "identification_response"]:
        if a in cont:
            m0, s0, m1, s1 = cont[a]
            attrs.append({"name": a, "kind": "continuous",
                          "h0": {"mean": round(m0, 4), "sd": round(s0, 4)},
                          "h1": {"mean": round(m1, 4), "sd": round(s1, 4)}})
        else:
            p0, p1 = cat[a]
            attrs.append({"name": a, "kind": "categorical", "categories": CATEGORIES[a],
                          "h0": [round(float(v), 6) for v in p0], "h1": [round(float(v), 6) for v in p1]})
    # renormalize rounded categorical probabilities
    for at in attrs:
        if at["kind"] == "categorical":
            for h in ("h0", "h1"):
                s = sum(at[h][:-1])
                at[h][-1] = round(1.0 - s, 6)
    nodes = []
    for n in HUMAN_TREE:
        node = {"id": n["id"], "attribute": n["attribute"]}
        if "threshold" in n:
            node["threshold"] = THRESHOLDS[n["threshold"]]
        else:
            node["categories"] = n["categories"]
        node["yes"], node["no"] = n["yes"], n["no"]
        nodes.append(node)
    for leaf, label in HUMAN_LABELS.items():
        nodes.append({"id": leaf, "label": label})
    _, _, _, _, leaves = evaluate(x)
    merge = [{"node": node, "leaf": leaf, "label": leaves[leaf][0]} for node, leaf in AUTO_MERGE]
    return attrs, {"root": "n0", "nodes": nodes}, {"base": "human", "merge": merge}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "config" / "experiment_reference.json"))
    ap.add_argument("--restarts", type=int, default=8)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--maxiter", type=int, default=20000)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    best = None
    x0 = pack()
    for r in range(args.restarts):
        start = x0 if r == 0 else x0 + rng.normal(0, 0.15, size=x0.size) * np.maximum(1.0, np.abs(x0) * 0.05)
        res = minimize(loss, start, method="Nelder-Mead", options={"maxiter": args.maxiter, "xatol": 1e-6, "fatol": 1e-9})
        if best is None or res.fun < best.fun:
            best = res
    tpr, fpr, a_tpr, a_fpr, leaves = evaluate(best.x)
    print(f"human tree  TPR={tpr:.4f} FPR={fpr:.4f}")
    print(f"auto tree   TPR={a_tpr:.4f} FPR={a_fpr:.4f}")
    for l, (lab, post, q0, q1) in leaves.items():
        print(f"  {l:18s} {lab} posterior={post:.4f} P(leaf|H0)={q0:.4f} P(leaf|H1)={q1:.4f}")
    for l, share in deep_share(best.x).items():
        print(f"  {l:18s} depth-4/5 share={share:.3f}")

    attrs, human, auto = to_config(best.x)
    path = pathlib.Path(args.out)
    doc = json.loads(path.read_text()) if path.exists() else {}
    doc["schema"] = {"attributes": attrs}
    doc["human_tree"] = human
    doc["auto_tree"] = auto
    path.write_text(json.dumps(doc, indent=2) + "\n")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
