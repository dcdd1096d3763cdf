"""Regenerates metrics_golden.json: sklearn metrics for a 20-sample set with tied scores."""
import json
import sys

import numpy as np
from sklearn import metrics

LABELS = [1, 0, 1, 1, 0, 0, 1, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0, 1, 0, 0]
SCORES = [0.9, 0.8, 0.8, 0.7, 0.7, 0.7, 0.6, 0.55, 0.5, 0.5,
          0.45, 0.4, 0.4, 0.3, 0.3, 0.2, 0.2, 0.1, 0.05, 0.05]
ALPHAS = [1e-4, 1e-3, 1e-2, 1e-1]


def main(path):
    y = np.array(LABELS)
    s = np.array(SCORES)
    pred = (s >= 0.5).astype(int)
    tn, fp, fn, tp = metrics.confusion_matrix(y, pred, labels=[0, 1]).ravel()
    fpr, tpr, _ = metrics.roc_curve(y, s, drop_intermediate=False)
    golden = {
        "labels": LABELS, "scores": SCORES, "threshold": 0.5,
        "tn": int(tn), "fp": int(fp), "fn": int(fn), "tp": int(tp),
        "acc": metrics.accuracy_score(y, pred),
        "precision": metrics.precision_score(y, pred, zero_division=0),
        "recall": metrics.recall_score(y, pred, zero_division=0),
        "f1": metrics.f1_score(y, pred, zero_division=0),
        "mcc": metrics.matthews_corrcoef(y, pred),
        "weighted_f1": metrics.f1_score(y, pred, average="weighted", zero_division=0),
        "roc_auc": metrics.roc_auc_score(y, s),
        "pr_auc": metrics.average_precision_score(y, s),
        "tpr_at_fpr": {repr(a): float(max([t for f, t in zip(fpr, tpr) if f <= a], default=0.0)) for a in ALPHAS},
    }
    with open(path, "w") as f:
        json.dump(golden, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "metrics_golden.json")
