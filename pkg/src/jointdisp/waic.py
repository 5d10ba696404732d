"""WAIC from an S x N matrix of pointwise log-likelihoods."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidArgument, NumericError


@dataclass(frozen=True)
class WAIC:
    waic: float
    lppd: float
    p_waic: float


def waic_components(pointwise_loglik) -> tuple[np.ndarray, np.ndarray]:
    """Per-subject ``(lppd_i, p_waic_i)``."""
    ll = np.asarray(pointwise_loglik, dtype=float)
    if ll.ndim != 2:
        raise InvalidArgument(f"pointwise log-likelihood must be 2-d, got shape {ll.shape}")
    S = ll.shape[0]
    if S < 2:
        raise InvalidArgument("WAIC needs at least two draws")
    if not np.all(np.isfinite(ll)):
        raise NumericError("pointwise log-likelihood contains non-finite entries")
    lppd_i = logsumexp(ll, axis=0) - math.log(S)
    p_i = np.var(ll, axis=0, ddof=1)
    return lppd_i, p_i


def compute_waic(pointwise_loglik) -> WAIC:
    """WAIC = -2 (lppd - p_waic), lower is better.

    ``p_waic`` sums the per-subject sample variances (denominator ``S - 1``).
    """
    lppd_i, p_i = waic_components(pointwise_loglik)
    lppd = float(np.sum(lppd_i))
    p_waic = float(np.sum(p_i))
    return WAIC(waic=-2.0 * (lppd - p_waic), lppd=lppd, p_waic=p_waic)


def write_waic_table(rows, path) -> None:
    """Write ``(label, WAIC)`` pairs as ``model,lppd,p_waic,waic``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "lppd", "p_waic", "waic"])
        for label, res in rows:
            w.writerow([label, f"{res.lppd:.17g}", f"{res.p_waic:.17g}", f"{res.waic:.17g}"])
