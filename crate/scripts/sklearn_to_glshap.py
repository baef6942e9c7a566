#!/usr/bin/env python3
"""Convert fitted scikit-learn models to glshap model files.

Supported:
  * DecisionTreeRegressor, RandomForestRegressor, ExtraTreesRegressor
  * GradientBoostingRegressor (least squares; the init prediction is folded
    into the first tree)
  * KernelRidge with kernel="rbf" or "laplacian"

Thresholds are compared in double precision here, while scikit-learn casts
inputs to float32 first, so instances within float32 rounding of a threshold
may route differently.

Usage:
  python sklearn_to_glshap.py model.joblib out_dir
"""

import json
import pathlib
import sys

import joblib
import numpy as np


def tree_to_nodes(tree, scale=1.0, shift=0.0):
    t = tree.tree_
    nodes = []
    for k in range(t.node_count):
        left, right = int(t.children_left[k]), int(t.children_right[k])
        if left == -1:
            nodes.append({"value": float(t.value[k].ravel()[0]) * scale + shift})
            continue
        w = t.weighted_n_node_samples
        frac = float(w[left] / w[k])
        # Fractions must lie strictly inside (0, 1).
        frac = min(max(frac, 1e-12), 1.0 - 1e-12)
        nodes.append(
            {
                "feature": int(t.feature[k]),
                "threshold": float(t.threshold[k]),
                "left": left,
                "right": right,
                "left_fraction": frac,
            }
        )
    return {"root": 0, "nodes": nodes}


def convert_trees(model):
    name = type(model).__name__
    if name == "DecisionTreeRegressor":
        trees = [tree_to_nodes(model)]
    elif name in ("RandomForestRegressor", "ExtraTreesRegressor"):
        n = len(model.estimators_)
        trees = [tree_to_nodes(est, scale=1.0 / n) for est in model.estimators_]
    elif name == "GradientBoostingRegressor":
        init = float(np.ravel(model._raw_predict_init(np.zeros((1, model.n_features_in_))))[0])
        lr = model.learning_rate
        trees = [
            tree_to_nodes(est[0], scale=lr, shift=init if i == 0 else 0.0)
            for i, est in enumerate(model.estimators_)
        ]
    else:
        return None
    return {"feature_count": int(model.n_features_in_), "trees": trees}


def convert_kernel(model, out):
    if type(model).__name__ != "KernelRidge":
        return None
    x = np.asarray(model.X_fit_, dtype=float)
    d = x.shape[1]
    gamma = model.gamma if model.gamma is not None else 1.0 / d
    family = {"rbf": "rbf", "laplacian": "laplace"}.get(model.kernel)
    if family is None:
        raise SystemExit(f"unsupported kernel {model.kernel!r}")
    if family == "rbf":
        kernel = {"family": "rbf", "gamma": float(gamma)}
    else:
        # exp(-gamma * sum |a - b|) is a product of exp(-|a_j - b_j| / l) with l = 1/gamma.
        kernel = {"family": "laplace", "lengthscales": [1.0 / float(gamma)] * d}
    np.savetxt(out / "train.csv", x, delimiter=",", fmt="%.17g")
    return {
        "alpha": [float(a) for a in np.ravel(model.dual_coef_)],
        "intercept": 0.0,
        "kernel": kernel,
        "train": "train.csv",
    }


def main():
    if len(sys.argv) != 3:
        raise SystemExit(__doc__)
    model = joblib.load(sys.argv[1])
    out = pathlib.Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    doc = convert_trees(model) or convert_kernel(model, out)
    if doc is None:
        raise SystemExit(f"unsupported model type {type(model).__name__}")
    (out / "model.json").write_text(json.dumps(doc, indent=2))
    print(out / "model.json")


if __name__ == "__main__":
    main()
