"""Depth error metrics: RMSE, MAE, REL and log10 over ground-truth pixels."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .io import DepthImage

# lower clamp keeps REL and log10 finite where the prediction is empty
MIN_PREDICTION = 1e-3


@dataclass(frozen=True)
class EvalResult:
    rmse: float
    mae: float
    rel: float
    log10: float
    n_evaluated: int

    def record(self) -> str:
        return f"rmse={self.rmse!r} mae={self.mae!r} rel={self.rel!r} log10={self.log10!r} n={self.n_evaluated}"


def evaluate(pred: DepthImage, gt: DepthImage, cap: float = 80.0,
             crop: tuple[int, int, int, int] | None = None,
             rel_denominator: str = "pred") -> EvalResult:
    """Score ``pred`` on the valid ground-truth pixels.

    ``crop`` is (top, bottom, left, right), half-open. Predictions are
    clamped to (0, cap]. ``rel_denominator="pred"`` divides by the
    prediction, ``"gt"`` by the ground truth.
    """
    if pred.shape != gt.shape:
        raise ValidationError(f"shape mismatch: prediction {pred.shape} vs ground truth {gt.shape}")
    if rel_denominator not in ("pred", "gt"):
        raise ValidationError("rel_denominator must be 'pred' or 'gt'")
    mask = gt.valid.copy()
    if crop is not None:
        top, bottom, left, right = crop
        window = np.zeros_like(mask)
        window[top:bottom, left:right] = True
        mask &= window
    n = int(mask.sum())
    if n == 0:
        raise ValidationError("no valid ground-truth pixels to evaluate")

    d = gt.depth[mask]
    d_hat = np.clip(pred.depth[mask], MIN_PREDICTION, cap)
    err = d_hat - d
    denom = d_hat if rel_denominator == "pred" else d
    return EvalResult(
        rmse=float(np.sqrt(np.mean(err ** 2))),
        mae=float(np.mean(np.abs(err))),
        rel=float(np.mean(np.abs(err) / denom)),
        log10=float(np.mean(np.abs(np.log10(d_hat) - np.log10(d)))),
        n_evaluated=n,
    )


def unit_scale(result: EvalResult, factor: float) -> EvalResult:
    if factor <= 0:
        raise ValidationError("factor must be positive")
    return replace(result, rmse=result.rmse * factor, mae=result.mae * factor)


CSV_HEADER = ("param", "value", "rmse", "mae", "rel", "log10", "n")


def csv_rows(param: str, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for value, res in rows:
        writer.writerow([param, value, repr(res.rmse), repr(res.mae), repr(res.rel), repr(res.log10), res.n_evaluated])
    return buf.getvalue()
