"""Loss functions for the three label tracks, with analytic gradients.

AU uses a multi-label cross entropy over positive/negative logit sets, CE a
softmax cross entropy, VA one minus the concordance correlation coefficient
per dimension. Presence masks gate every term: unlabeled samples contribute
zero loss and exactly-zero gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import N_AU, N_CE


@dataclass
class LossBreakdown:
    """Per-track losses and contributing-sample counts for one batch."""

    l_au: float = 0.0
    l_ce: float = 0.0
    l_va: float = 0.0
    total: float = 0.0
    n_au: int = 0
    n_ce: int = 0
    n_va: int = 0


def _log1p_sum_exp(x):
    """log(1 + sum(exp(x))) with log-sum-exp shifting; x may be empty."""
    if x.size == 0:
        return 0.0
    m = max(0.0, float(x.max()))
    return m + math.log(np.exp(-m) + np.exp(x - m).sum())


def multilabel_ce(logits, target):
    """Multi-label cross entropy over a 12-unit logit vector.

    loss = log(1 + sum_{i: target_i=0} exp(v_i))
         + log(1 + sum_{j: target_j=1} exp(-v_j))

    Returns (loss, gradient w.r.t. each logit). Targets must be 0/1.
    """
    logits = np.asarray(logits, dtype=float)
    target = np.asarray(target)
    if logits.shape != target.shape:
        raise ValueError(f"logits shape {logits.shape} != target shape {target.shape}")
    if not np.isin(target, (0, 1)).all():
        raise ValueError(f"target entries must be 0 or 1, got {target!r}")
    neg = target == 0
    pos = target == 1
    term_neg = _log1p_sum_exp(logits[neg])
    term_pos = _log1p_sum_exp(-logits[pos])
    grad = np.zeros_like(logits)
    # exp(v_i - term) <= 1 by construction, so these never overflow
    grad[neg] = np.exp(logits[neg] - term_neg)
    grad[pos] = -np.exp(-logits[pos] - term_pos)
    return term_neg + term_pos, grad


def softmax_ce(logits, target):
    """Softmax cross entropy with an integer class target.

    Returns (loss, gradient) with gradient = softmax(logits) - onehot(target).
    """
    logits = np.asarray(logits, dtype=float)
    k = logits.shape[0]
    target = int(target)
    if not 0 <= target < k:
        raise ValueError(f"class target {target} out of range 0..{k - 1}")
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    z = exp.sum()
    loss = math.log(z) - shifted[target]
    grad = exp / z
    grad[target] -= 1.0
    return loss, grad


def ccc(pred, truth):
    """Concordance correlation coefficient with population (1/n) statistics.

    CCC = 2 cov / (var_pred + var_truth + (mean_pred - mean_truth)^2).
    Degenerate denominators: both sequences constant and equal -> 1;
    an otherwise-zero denominator -> 0.
    """
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError(f"ccc expects equal-length vectors, got {pred.shape} and {truth.shape}")
    n = pred.shape[0]
    if n < 2:
        raise ValueError(f"ccc needs at least 2 samples, got {n}")
    mp, mt = pred.mean(), truth.mean()
    vp, vt = pred.var(), truth.var()
    cov = ((pred - mp) * (truth - mt)).mean()
    denom = vp + vt + (mp - mt) ** 2
    if denom == 0.0:
        return 1.0 if (vp == 0.0 and vt == 0.0 and mp == mt) else 0.0
    return 2.0 * cov / denom


def _ccc_grad(pred, truth):
    """d ccc / d pred_i; zero when the denominator is degenerate."""
    n = pred.shape[0]
    mp, mt = pred.mean(), truth.mean()
    vp, vt = pred.var(), truth.var()
    cov = ((pred - mp) * (truth - mt)).mean()
    denom = vp + vt + (mp - mt) ** 2
    if denom == 0.0:
        return np.zeros_like(pred)
    c = 2.0 * cov / denom
    return (2.0 / (n * denom)) * ((truth - mt) - c * (pred - mt))


def va_loss(pred, truth):
    """(1 - CCC_valence) + (1 - CCC_arousal) over a VA-labeled batch.

    pred, truth: arrays of shape (n, 2) with n >= 2. Returns (loss, gradient
    of shape (n, 2)).
    """
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.ndim != 2 or pred.shape[1] != 2:
        raise ValueError(f"va_loss expects (n, 2) arrays, got {pred.shape} and {truth.shape}")
    if pred.shape[0] < 2:
        raise ValueError(f"va_loss needs at least 2 samples, got {pred.shape[0]}")
    loss = 0.0
    grad = np.zeros_like(pred)
    for d in range(2):
        loss += 1.0 - ccc(pred[:, d], truth[:, d])
        grad[:, d] = -_ccc_grad(pred[:, d], truth[:, d])
    return loss, grad


def total_loss(au_logits, ce_logits, va_pred, labels):
    """Masked multi-task loss over one batch.

    au_logits (B, 12), ce_logits (B, 7), va_pred (B, 2) are the network
    outputs; labels is a list of B LabelSet. AU and CE losses are averaged
    over their labeled samples; the VA loss is a single batch-level quantity
    over the VA-labeled subset and is skipped (zero, count 0) when that
    subset has fewer than 2 samples. Unlabeled tracks get exactly-zero
    gradients.

    Returns (LossBreakdown, (grad_au, grad_ce, grad_va)).
    """
    au_logits = np.asarray(au_logits, dtype=float)
    ce_logits = np.asarray(ce_logits, dtype=float)
    va_pred = np.asarray(va_pred, dtype=float)
    n = len(labels)
    if n == 0 or au_logits.shape != (n, N_AU) or ce_logits.shape != (n, N_CE) \
            or va_pred.shape != (n, 2):
        raise ValueError("prediction shapes do not match the batch")
    if not any(lab.any_present() for lab in labels):
        raise ValueError("batch has no labels on any track")

    bd = LossBreakdown()
    grad_au = np.zeros_like(au_logits)
    grad_ce = np.zeros_like(ce_logits)
    grad_va = np.zeros_like(va_pred)

    au_idx = [i for i, lab in enumerate(labels) if lab.au is not None]
    if au_idx:
        acc = 0.0
        for i in au_idx:
            loss_i, g_i = multilabel_ce(au_logits[i], labels[i].au)
            acc += loss_i
            grad_au[i] = g_i / len(au_idx)
        bd.l_au = acc / len(au_idx)
        bd.n_au = len(au_idx)

    ce_idx = [i for i, lab in enumerate(labels) if lab.ce is not None]
    if ce_idx:
        acc = 0.0
        for i in ce_idx:
            loss_i, g_i = softmax_ce(ce_logits[i], labels[i].ce)
            acc += loss_i
            grad_ce[i] = g_i / len(ce_idx)
        bd.l_ce = acc / len(ce_idx)
        bd.n_ce = len(ce_idx)

    va_idx = [i for i, lab in enumerate(labels) if lab.va is not None]
    if len(va_idx) >= 2:
        truth = np.stack([labels[i].va for i in va_idx])
        loss_va, g_va = va_loss(va_pred[va_idx], truth)
        bd.l_va = loss_va
        bd.n_va = len(va_idx)
        for row, i in enumerate(va_idx):
            grad_va[i] = g_va[row]

    bd.total = bd.l_au + bd.l_ce + bd.l_va
    return bd, (grad_au, grad_ce, grad_va)
