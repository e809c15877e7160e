"""Regression and ranking metrics."""

from __future__ import annotations

import numpy as np


def _paired(pred, true) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=float)
    true = np.asarray(true, dtype=float)
    if pred.shape != true.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs true {true.shape}")
    return pred, true


def mae(pred, true) -> float:
    pred, true = _paired(pred, true)
    return float(np.abs(pred - true).mean())


def rmse(pred, true) -> float:
    pred, true = _paired(pred, true)
    return float(np.sqrt(((pred - true) ** 2).mean()))


def rmsle(pred, true) -> float:
    """Root mean squared log error; negatives are clamped to 0 before the log."""
    pred, true = _paired(pred, true)
    pred = np.clip(pred, 0.0, None)
    true = np.clip(true, 0.0, None)
    return float(np.sqrt(((np.log1p(pred) - np.log1p(true)) ** 2).mean()))


def r2_score(pred, true) -> float:
    """1 - SS_res / SS_tot; can be negative for models worse than the mean."""
    pred, true = _paired(pred, true)
    ss_tot = float(((true - true.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise ValueError("r2_score undefined: true values have zero variance")
    ss_res = float(((true - pred) ** 2).sum())
    return 1.0 - ss_res / ss_tot


def ndcg(true_relevance, predicted_scores) -> float:
    """Normalized discounted cumulative gain of one ranking, in [0, 1].

    Items are ordered by predicted score (descending, stable); the gain is the
    true relevance itself (shares are fractional, so no exponential gain) with
    the usual 1/log2(position + 1) discount, normalized by the ideal ordering.
    """
    true_rel, scores = _paired(true_relevance, predicted_scores)
    if true_rel.ndim != 1 or len(true_rel) < 1:
        raise ValueError("ndcg expects non-empty 1-d vectors")
    if (true_rel < 0).any():
        raise ValueError("true relevance must be nonnegative")
    if not (true_rel > 0).any():
        raise ValueError("ndcg undefined: all true relevances are zero")

    discounts = 1.0 / np.log2(np.arange(2, len(true_rel) + 2))
    predicted_order = np.argsort(-scores, kind="stable")
    dcg = float((true_rel[predicted_order] * discounts).sum())
    ideal = float((np.sort(true_rel)[::-1] * discounts).sum())
    return dcg / ideal
