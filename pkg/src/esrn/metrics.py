"""Evaluation metrics for Dl predictors and plot-ready summaries.

Conventions: WMAPE is ``sum|pred - obs| / sum|obs|``; the discrepancy ratio
is ``log10(pred / obs)``; standard deviations in the Taylor statistics are
population (ddof=0) so the law-of-cosines identity holds exactly.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

DR_EDGES = (-0.3, 0.0, 0.3)
DR_BIN_LABELS = ("dr<=-0.3", "-0.3<dr<=0", "0<dr<=0.3", "dr>0.3")
ACCURACY_BAND = 0.3


class MetricError(ValueError):
    pass


def _pair(obs, pred) -> tuple[np.ndarray, np.ndarray]:
    obs = np.asarray(obs, dtype=float).ravel()
    pred = np.asarray(pred, dtype=float).ravel()
    if obs.shape != pred.shape:
        raise MetricError(f"length mismatch: {obs.size} observations, {pred.size} predictions")
    if obs.size == 0:
        raise MetricError("no samples")
    return obs, pred


def rmse(obs, pred) -> float:
    obs, pred = _pair(obs, pred)
    return float(np.sqrt(np.mean((pred - obs) ** 2)))


def wmape(obs, pred) -> float:
    obs, pred = _pair(obs, pred)
    denom = np.sum(np.abs(obs))
    if denom == 0:
        raise MetricError("WMAPE undefined when all observations are zero")
    return float(np.sum(np.abs(pred - obs)) / denom)


def r2(obs, pred) -> float:
    """Coefficient of determination; 1 for a perfect fit, 0 for the mean."""
    obs, pred = _pair(obs, pred)
    ss_res = float(np.sum((obs - pred) ** 2))
    ss_tot = float(np.sum((obs - obs.mean()) ** 2))
    if ss_tot == 0:
        return 1.0 if ss_res == 0 else 0.0
    return 1.0 - ss_res / ss_tot


def dr(obs, pred):
    """Discrepancy ratio ``log10(pred/obs)``; nan where either is non-positive."""
    obs = np.asarray(obs, dtype=float)
    pred = np.asarray(pred, dtype=float)
    valid = (obs > 0) & (pred > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(valid, np.log10(np.where(valid, pred, 1.0) / np.where(valid, obs, 1.0)), np.nan)
    return float(out) if out.ndim == 0 else out


def dr_bins(ratios) -> list[float]:
    """Fractions of finite ratios in (-inf,-0.3], (-0.3,0], (0,0.3], (0.3,inf)."""
    r = np.asarray(ratios, dtype=float)
    r = r[np.isfinite(r)]
    if r.size == 0:
        return [0.0, 0.0, 0.0, 0.0]
    lo, mid, hi = DR_EDGES
    counts = [
        np.sum(r <= lo),
        np.sum((r > lo) & (r <= mid)),
        np.sum((r > mid) & (r <= hi)),
        np.sum(r > hi),
    ]
    return [float(c) / r.size for c in counts]


def accuracy(ratios) -> float:
    """Percent of finite ratios strictly inside (-0.3, 0.3)."""
    r = np.asarray(ratios, dtype=float)
    r = r[np.isfinite(r)]
    if r.size == 0:
        return 0.0
    return 100.0 * float(np.mean(np.abs(r) < ACCURACY_BAND))


@dataclass(frozen=True)
class TaylorStats:
    pred_std: float
    obs_std: float
    correlation: float
    centered_rms: float
    correlation_defined: bool = True


def taylor_stats(obs, pred) -> TaylorStats:
    obs, pred = _pair(obs, pred)
    # a constant vector centres to exact zeros (its float mean may not be exact)
    po = pred - pred.mean() if np.ptp(pred) else np.zeros_like(pred)
    oo = obs - obs.mean() if np.ptp(obs) else np.zeros_like(obs)
    sp = float(np.sqrt(np.mean(po ** 2)))
    so = float(np.sqrt(np.mean(oo ** 2)))
    crms = float(np.sqrt(np.mean((po - oo) ** 2)))
    if sp == 0 or so == 0:
        return TaylorStats(sp, so, 0.0, crms, False)
    rho = float(np.mean(po * oo) / (sp * so))
    return TaylorStats(sp, so, rho, crms)


@dataclass
class EvalReport:
    n: int
    rmse: float
    wmape: float
    r2: float
    dr_bins: list
    accuracy_pct: float
    accuracy_bins_pct: float  # bins 2+3 as fractions of 100, edges as printed
    taylor: TaylorStats
    n_dr_excluded: int = 0
    n_negative_pred: int = 0
    definitions: dict = field(default_factory=lambda: {
        "wmape": "sum|pred-obs|/sum|obs|",
        "dr": "log10(pred/obs)",
        "accuracy": "-0.3 < dr < 0.3",
        "dr_bins": list(DR_BIN_LABELS),
    })

    def to_dict(self) -> dict:
        out = asdict(self)
        out["dr_bins"] = dict(zip(DR_BIN_LABELS, self.dr_bins))
        return out


Predictor = Union[str, Callable]


def _predictions(predictor: Predictor, samples: Sequence) -> np.ndarray:
    if isinstance(predictor, str):
        from .models import predict_samples

        return predict_samples(predictor, samples)
    if hasattr(predictor, "predict"):
        from .dataset import to_columns, FEATURES

        cols = to_columns(samples, FEATURES)
        return np.asarray(predictor.predict(np.column_stack([cols[c] for c in FEATURES])), dtype=float)
    return np.asarray(predictor(samples), dtype=float)


def evaluate(predictor: Predictor, samples: Sequence) -> EvalReport:
    """Score a predictor on samples with observed ``Dl``.

    ``predictor`` may be a catalog model id, an estimator with ``predict``
    over ``(w, d, U, Ustar)`` columns, or a callable mapping samples to
    predictions.
    """
    obs = np.array([s.Dl for s in samples], dtype=float)
    pred = _predictions(predictor, samples)
    return report(obs, pred)


def report(obs, pred) -> EvalReport:
    obs, pred = _pair(obs, pred)
    ratios = dr(obs, pred)
    finite = np.isfinite(ratios)
    bins = dr_bins(ratios)
    return EvalReport(
        n=int(obs.size),
        rmse=rmse(obs, pred),
        wmape=wmape(obs, pred),
        r2=r2(obs, pred),
        dr_bins=bins,
        accuracy_pct=accuracy(ratios),
        accuracy_bins_pct=100.0 * (bins[1] + bins[2]),
        taylor=taylor_stats(obs, pred),
        n_dr_excluded=int(np.sum(~finite)),
        n_negative_pred=int(np.sum(pred < 0)),
    )
