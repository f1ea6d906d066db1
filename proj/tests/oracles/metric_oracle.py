"""Independent reference for the clustering metric suite.

Writes metric_fixtures.json: fixed point sets, labels, reconstruction pairs
and the six metrics computed with scikit-learn and numpy. The JSON is
committed; rerun this script only to regenerate it.
"""

import json
import pathlib

import numpy as np
from sklearn.metrics import calinski_harabasz_score, davies_bouldin_score, silhouette_score


def reference(X, labels, pred, target):
    ks = sorted(set(labels))
    cents = np.array([X[labels == k].mean(axis=0) for k in ks])
    wcss = sum(((X[labels == k] - c) ** 2).sum() for k, c in zip(ks, cents))
    pair = [np.linalg.norm(cents[i] - cents[j]) for i in range(len(ks)) for j in range(i + 1, len(ks))]
    return {
        "silhouette": float(silhouette_score(X, labels)),
        "davies_bouldin": float(davies_bouldin_score(X, labels)),
        "calinski_harabasz": float(calinski_harabasz_score(X, labels)),
        "rmse": float(np.sqrt(np.mean((pred - target) ** 2))),
        "variance": float(wcss / X.size),
        "inter_centroid_distance": float(np.mean(pair)),
    }


def fixture(rng, n, d, k, spread):
    labels = np.arange(n) % k
    rng.shuffle(labels)
    centers = rng.normal(scale=spread, size=(k, d))
    X = centers[labels] + rng.normal(size=(n, d))
    pred = rng.normal(size=(3, 2, 2, 2))
    target = rng.normal(size=(3, 2, 2, 2))
    return X, labels, pred, target


def main():
    rng = np.random.default_rng(20240607)
    cases = []
    for n, d, k, spread in [(12, 2, 2, 3.0), (30, 4, 3, 2.0), (40, 8, 5, 1.0), (25, 3, 4, 0.5), (50, 6, 7, 4.0)]:
        X, labels, pred, target = fixture(rng, n, d, k, spread)
        cases.append({
            "points": X.tolist(),
            "labels": labels.tolist(),
            "predicted": pred.reshape(-1).tolist(),
            "target": target.reshape(-1).tolist(),
            "expected": reference(X, labels, pred, target),
        })
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    labels = np.array([0, 0, 1, 1])
    z = np.zeros(8)
    cases.append({
        "points": X.tolist(),
        "labels": labels.tolist(),
        "predicted": z.tolist(),
        "target": z.tolist(),
        "expected": reference(X, labels, z.reshape(1, 2, 2, 2), z.reshape(1, 2, 2, 2)),
    })
    out = pathlib.Path(__file__).with_name("metric_fixtures.json")
    out.write_text(json.dumps({"cases": cases}, indent=1) + "\n")


if __name__ == "__main__":
    main()
