"""Uniform cubic B-splines with a first-order random-walk penalty.

All basis functions share one shape, including those touching the boundary:
the knot grid is extended by three equally spaced knots on each side of
``[t_min, t_max]`` and evaluation is restricted to that interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidArgument

ORDER = 3
FIRST_COEF_VARIANCE = 1000.0
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SplineBasis:
    """Cubic B-spline basis on ``s`` equal intervals of ``[t_min, t_max]``."""

    t_min: float
    t_max: float
    num_intervals: int
    knots: np.ndarray = field(repr=False, compare=False)

    @property
    def order(self) -> int:
        return ORDER

    @property
    def Q(self) -> int:
        return self.num_intervals + ORDER

    @property
    def spacing(self) -> float:
        return (self.t_max - self.t_min) / self.num_intervals

    @property
    def interior_knots(self) -> np.ndarray:
        """The ``s + 1`` knots spanning the domain."""
        return self.knots[ORDER:-ORDER]

    def __call__(self, t):
        return eval_basis(self, t)


def build_basis(t_min: float, t_max: float, s: int) -> SplineBasis:
    """Build the uniform cubic basis with ``Q = s + 3`` functions."""
    if not (math.isfinite(t_min) and math.isfinite(t_max)):
        raise InvalidArgument(f"spline bounds must be finite, got ({t_min}, {t_max})")
    if t_max <= t_min:
        raise InvalidArgument(f"t_max must exceed t_min, got ({t_min}, {t_max})")
    if int(s) != s or s < 1:
        raise InvalidArgument(f"number of intervals must be a positive integer, got {s}")
    s = int(s)
    h = (t_max - t_min) / s
    knots = t_min + h * np.arange(-ORDER, s + ORDER + 1, dtype=float)
    # pin the domain ends exactly so boundary checks are not off by rounding
    knots[ORDER] = t_min
    knots[ORDER + s] = t_max
    knots.setflags(write=False)
    return SplineBasis(float(t_min), float(t_max), s, knots)


def _locate(basis: SplineBasis, t: np.ndarray):
    if np.any(~np.isfinite(t)):
        raise DomainError("spline evaluation point is not finite")
    bad = (t < basis.t_min) | (t > basis.t_max)
    if np.any(bad):
        raise DomainError(
            f"t={t[bad][0]!r} outside spline domain [{basis.t_min}, {basis.t_max}]"
        )
    u = (t - basis.t_min) / basis.spacing
    j = np.minimum(np.floor(u).astype(np.intp), basis.num_intervals - 1)
    return j, u - j


def _pieces(f: np.ndarray) -> np.ndarray:
    # the four nonzero uniform cubic B-spline values on an interval, local coordinate f in [0, 1]
    f2 = f * f
    f3 = f2 * f
    g = 1.0 - f
    return np.stack(
        [
            g * g * g / 6.0,
            (3.0 * f3 - 6.0 * f2 + 4.0) / 6.0,
            (-3.0 * f3 + 3.0 * f2 + 3.0 * f + 1.0) / 6.0,
            f3 / 6.0,
        ],
        axis=-1,
    )


def eval_basis(basis: SplineBasis, t) -> np.ndarray:
    """Evaluate all ``Q`` basis functions at ``t``.

    A scalar ``t`` gives a vector of length ``Q``; an array gives an array of
    shape ``t.shape + (Q,)``. Points outside ``[t_min, t_max]`` raise
    :class:`DomainError`.
    """
    t_arr = np.asarray(t, dtype=float)
    flat = t_arr.reshape(-1)
    j, f = _locate(basis, flat)
    out = np.zeros((flat.size, basis.Q))
    rows = np.arange(flat.size)[:, None]
    out[rows, j[:, None] + np.arange(4)] = _pieces(f)
    return out.reshape(t_arr.shape + (basis.Q,))


def eval_spline(basis: SplineBasis, gamma, t):
    """Return ``sum_q gamma_q B_q(t)``; scalar in, scalar out."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (basis.Q,):
        raise InvalidArgument(f"expected {basis.Q} coefficients, got shape {gamma.shape}")
    value = eval_basis(basis, t) @ gamma
    return float(value) if np.ndim(value) == 0 else value


def difference_matrix(Q: int) -> np.ndarray:
    """First-order difference matrix of shape ``(Q - 1, Q)``."""
    if int(Q) != Q or Q < 2:
        raise InvalidArgument(f"difference matrix needs Q >= 2, got {Q}")
    Q = int(Q)
    D = np.zeros((Q - 1, Q), dtype=np.int64)
    idx = np.arange(Q - 1)
    D[idx, idx] = -1
    D[idx, idx + 1] = 1
    return D


def penalty_matrix(D: np.ndarray) -> np.ndarray:
    D = np.asarray(D)
    return D.T @ D


def log_rw1_prior(gamma, tau2: float, first_coef_variance: float = FIRST_COEF_VARIANCE) -> float:
    """Log density of the first-order random walk on spline coefficients.

    The first coefficient is ``N(0, first_coef_variance)`` and each later one
    is Gaussian around its predecessor with variance ``tau2``.
    """
    if not tau2 > 0:
        raise InvalidArgument(f"tau2 must be positive, got {tau2}")
    if not first_coef_variance > 0:
        raise InvalidArgument(f"first_coef_variance must be positive, got {first_coef_variance}")
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim != 1 or gamma.size < 2:
        raise InvalidArgument("random-walk prior needs at least two coefficients")
    inc = np.diff(gamma)
    head = -0.5 * (_LOG_2PI + math.log(first_coef_variance)) - 0.5 * gamma[0] ** 2 / first_coef_variance
    body = -0.5 * inc.size * (_LOG_2PI + math.log(tau2)) - 0.5 * float(inc @ inc) / tau2
    return float(head + body)
