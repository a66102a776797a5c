"""Continual-learning metrics over a ``K x K`` accuracy matrix.

``R[t][k]`` is the percent accuracy on task ``k``'s test samples after
training through task ``t``; entries above the diagonal are undefined
(stored as NaN). Index conventions follow the GEM-style definitions::

    bwt  = 1/(K-1) * sum_{k<K-1} (R[K-1][k] - R[k][k])
    forg = 1/(K-1) * sum_{k<K-1} (max_{k<=t<K-1} R[t][k] - R[K-1][k])
    pla  = 1/K     * sum_k R[k][k]

Sums run in ascending ``k`` with plain float addition so results are
reproducible bit for bit.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError


def _as_matrix(R, min_tasks):
    R = np.asarray(R, dtype=np.float64)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ContractError(f"accuracy matrix must be square, got shape {R.shape}")
    if R.shape[0] < min_tasks:
        raise ContractError(f"metric needs at least {min_tasks} tasks, got {R.shape[0]}")
    return R


def rarg(acc_base, acc_new):
    """Room-aware relative gain of ``acc_new`` over ``acc_base``, in percent."""
    if acc_base >= 100.0:
        raise ZeroDivisionError("rarg undefined when the baseline accuracy is 100")
    return 100.0 * (acc_new - acc_base) / (100.0 - acc_base)


def bwt(R):
    R = _as_matrix(R, 2)
    K = R.shape[0]
    total = 0.0
    for k in range(K - 1):
        total += R[K - 1][k] - R[k][k]
    return total / (K - 1)


def forgetting(R, clamp=False):
    """Average drop from the best earlier accuracy; ``clamp`` floors each term at 0."""
    R = _as_matrix(R, 2)
    K = R.shape[0]
    total = 0.0
    for k in range(K - 1):
        best = R[k][k]
        for t in range(k + 1, K - 1):
            if R[t][k] > best:
                best = R[t][k]
        drop = best - R[K - 1][k]
        if clamp and drop < 0.0:
            drop = 0.0
        total += drop
    return total / (K - 1)


def plasticity(R):
    R = _as_matrix(R, 1)
    K = R.shape[0]
    total = 0.0
    for k in range(K):
        total += R[k][k]
    return total / K


def final_accuracy(correct, total):
    """Sample-weighted percent accuracy over the whole final test set."""
    if total <= 0:
        raise DataError("final accuracy needs a non-empty test set")
    return 100.0 * correct / total


@dataclass
class MetricsReport:
    acc_final: float
    bwt: float | None
    forg: float | None
    pla: float
    ttime_min: float | None = None
    fps: float | None = None
    rarg_vs_baseline: float | None = None
    fwt: float = field(default=0.0)

    @classmethod
    def from_run(cls, result, clamp_forgetting=False):
        R = result.accuracy
        K = R.shape[0]
        return cls(
            acc_final=final_accuracy(result.final_correct, result.final_total),
            bwt=bwt(R) if K >= 2 else None,
            forg=forgetting(R, clamp=clamp_forgetting) if K >= 2 else None,
            pla=plasticity(R),
            ttime_min=result.ttime_s / 60.0 if result.ttime_s is not None else None,
            fps=result.fps,
        )
