"""Difficulty coefficients, cross-task normalization and significance tests."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class MetricError(ValueError):
    """A metric is undefined for the given input."""


@dataclass
class TrainingCurve:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.std = np.asarray(self.std, dtype=float)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1 or not len(self.mean):
            raise MetricError("mean and std must be equal-length non-empty vectors")
        if np.any(self.std < 0):
            raise MetricError("negative standard deviation")

    @classmethod
    def from_runs(cls, runs: Sequence[Sequence[float]]) -> TrainingCurve:
        """Curve over seeds; ``runs[seed][generation]``. Uses the population std."""
        arr = np.asarray(runs, dtype=float)
        return cls(arr.mean(axis=0), arr.std(axis=0))


def auc_difficulty(curve: TrainingCurve) -> float:
    """Sum of (mean - std) over generations divided by the final mean."""
    final = curve.mean[-1]
    if final == 0:
        raise MetricError("final mean score is zero; AUC coefficient undefined")
    return float(np.sum(curve.mean - curve.std) / final)


def normalize_difficulty(aucs: Sequence[float]) -> list[float]:
    """Divide by the largest AUC; higher means easier."""
    top = max(aucs)
    if top <= 0:
        raise MetricError("normalization needs a positive maximum")
    return [a / top for a in aucs]


# -- Student t distribution ------------------------------------------------------


def _betacf(a: float, b: float, x: float, tol: float = 1e-15, max_iter: int = 500) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise MetricError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float, y: float | None = None) -> float:
    """Regularized incomplete beta I_x(a, b).

    ``y`` may pass ``1 - x`` computed without cancellation.
    """
    if x <= 0.0:
        return 0.0
    if y is None:
        y, log_y = 1.0 - x, math.log1p(-x) if x < 1.0 else -math.inf
    else:
        log_y = math.log(y) if y > 0.0 else -math.inf
    if y <= 0.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * log_y)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, y) / b


def t_two_tailed_p(t: float, df: float) -> float:
    if math.isnan(t):
        return math.nan
    if math.isinf(t):
        return 0.0
    t2 = t * t
    return min(1.0, max(0.0, betainc(df / 2.0, 0.5, df / (df + t2), t2 / (df + t2))))


class WelchResult(NamedTuple):
    t: float
    df: float
    p: float


def _mean_var(x: Sequence[float]) -> tuple[float, float, int]:
    arr = np.asarray(x, dtype=float)
    return float(arr.mean()), float(arr.var(ddof=1)), len(arr)


def welch_t(a: Sequence[float], b: Sequence[float]) -> WelchResult:
    """Two-tailed Welch t-test with Welch-Satterthwaite degrees of freedom."""
    if len(a) < 2 or len(b) < 2:
        raise MetricError("Welch's test needs at least two samples per group")
    ma, va, na = _mean_var(a)
    mb, vb, nb = _mean_var(b)
    qa, qb = va / na, vb / nb
    se2 = qa + qb
    if se2 == 0.0:
        if ma == mb:
            return WelchResult(0.0, float(na + nb - 2), 1.0)
        return WelchResult(math.copysign(math.inf, ma - mb), float(na + nb - 2), 0.0)
    t = (ma - mb) / math.sqrt(se2)
    # scaled so tiny variances do not underflow when squared
    ra, rb = qa / max(qa, qb), qb / max(qa, qb)
    df = (ra + rb) ** 2 / (ra * ra / (na - 1) + rb * rb / (nb - 1))
    return WelchResult(t, df, t_two_tailed_p(t, df))


def cohens_d(a: Sequence[float], b: Sequence[float]) -> float:
    """Mean difference over the pooled (n - 1) standard deviation."""
    ma, va, na = _mean_var(a)
    mb, vb, nb = _mean_var(b)
    pooled = math.sqrt(((na - 1) * va + (nb - 1) * vb) / (na + nb - 2))
    diff = ma - mb
    if pooled == 0.0:
        return 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return diff / pooled


def bonferroni(alpha: float, n_tests: int) -> float:
    if n_tests < 1:
        raise MetricError("n_tests must be >= 1")
    return alpha / n_tests


# -- cross-task transfer -----------------------------------------------------------


@dataclass
class CrossTaskMatrix:
    raw: np.ndarray  # [trained, evaluated]
    normalized: np.ndarray

    def off_diagonal(self) -> np.ndarray:
        mask = ~np.eye(self.raw.shape[0], dtype=bool)
        return self.normalized[mask]


def cross_task_matrix(raw: Sequence[Sequence[float]], baselines: Sequence[float]) -> CrossTaskMatrix:
    """Divide each column by the baseline of the task evaluated in that column.

    Cells whose baseline is zero are NaN (undefined).
    """
    raw = np.asarray(raw, dtype=float)
    base = np.asarray(baselines, dtype=float)
    if raw.ndim != 2 or raw.shape[1] != len(base):
        raise MetricError("one baseline per evaluated task is required")
    with np.errstate(divide="ignore", invalid="ignore"):
        norm = np.where(base != 0, raw / np.where(base != 0, base, 1.0), np.nan)
    return CrossTaskMatrix(raw, norm)
