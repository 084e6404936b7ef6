"""Classification metrics.

weighted_f1 uses explicit per-class loops with the 2PR/(P+R) formula so
an independent confusion-matrix oracle can reproduce it bit-for-bit.
"""

from __future__ import annotations

import numpy as np


def weighted_f1(predictions, golds, num_labels: int) -> tuple[float, list[float]]:
    """Support-weighted F1 plus the per-class F1 vector.

    A class with neither predictions nor gold occurrences scores 0 and
    contributes zero weight.
    """
    preds = np.asarray(predictions, dtype=np.intp)
    gold = np.asarray(golds, dtype=np.intp)
    if preds.shape != gold.shape or preds.ndim != 1:
        raise ValueError("predictions and golds must be equal-length 1-d sequences")
    if len(gold) == 0:
        raise ValueError("cannot score an empty label sequence")
    if np.any((preds < 0) | (preds >= num_labels) | (gold < 0) | (gold >= num_labels)):
        raise ValueError("labels out of range")
    total = len(gold)
    per_class: list[float] = []
    weighted = 0.0
    for k in range(num_labels):
        tp = int(np.sum((preds == k) & (gold == k)))
        pred_k = int(np.sum(preds == k))
        gold_k = int(np.sum(gold == k))
        if pred_k == 0 or gold_k == 0 or tp == 0:
            f1 = 0.0
        else:
            precision = tp / pred_k
            recall = tp / gold_k
            f1 = 2 * precision * recall / (precision + recall)
        per_class.append(f1)
        weighted += (gold_k / total) * f1
    return weighted, per_class
