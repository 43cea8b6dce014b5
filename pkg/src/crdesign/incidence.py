"""Competing-risk incidence integrals by Gauss-Legendre quadrature.

Every arm, whether it comes from a posterior draw or from a calibrated
data generator, is described per cause by a ``shape`` and a ``rate``:

* Weibull:      cumulative hazard ``rate * t**shape``
* log-logistic: cumulative hazard ``log(1 + rate * t**shape)``

Arrays carry a leading batch axis (one row per draw) and a trailing cause
axis of length 2.  The integrand ``S1(x) S2(x) lambda_k(x)`` has an
``x**(shape-1)`` factor at the origin, so the interval starting at zero is
integrated in ``s`` with ``x = t * s**q`` and ``q = 3 / min(shape)``.  That
makes the transformed integrand behave like ``s**2`` at zero, which
64-node Gauss-Legendre handles to ~1e-12 relative error.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numba import njit

WEIBULL = "weibull"
LOGLOGISTIC = "loglogistic"
FAMILIES = (WEIBULL, LOGLOGISTIC)

N_NODES = 64
_GRADING = 3.0


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    nodes = 0.5 * (x + 1.0)
    weights = 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _as_batch(shape, rate):
    shape = np.atleast_2d(np.asarray(shape, dtype=float))
    rate = np.atleast_2d(np.asarray(rate, dtype=float))
    return np.broadcast_arrays(shape, rate)


def cumulative_hazard(family, shape, rate, t):
    """Per-cause cumulative hazard at scalar time ``t``; shape ``(n, 2)``."""
    shape, rate = _as_batch(shape, rate)
    if t <= 0:
        return np.zeros_like(rate)
    z = np.exp(np.log(t) * shape) * rate
    if family == WEIBULL:
        return z
    if family == LOGLOGISTIC:
        return np.log1p(z)
    raise ValueError(f"unknown family {family!r}")


@njit(cache=True)
def _incidence_kernel(loglogistic, shape, rate, lo, hi, s, ws, grading):
    n, m = shape.shape[0], s.shape[0]
    out = np.zeros((n, 2))
    graded = lo == 0.0
    # Node positions: for the graded rule these are log(s) and ws / s and get
    # scaled per draw by q; otherwise log(x) and dx / x directly.
    base_log = np.empty(m)
    base_w = np.empty(m)
    for j in range(m):
        if graded:
            base_log[j] = np.log(s[j])
            base_w[j] = ws[j] / s[j]
        else:
            x = lo + (hi - lo) * s[j]
            base_log[j] = np.log(x)
            base_w[j] = (hi - lo) * ws[j] / x
    log_hi = np.log(hi) if graded else 0.0
    for i in range(n):
        a1, a2 = shape[i, 0], shape[i, 1]
        r1, r2 = rate[i, 0], rate[i, 1]
        q = grading / min(a1, a2) if graded else 1.0
        c1 = np.log(r1) + a1 * log_hi if r1 > 0.0 else -np.inf
        c2 = np.log(r2) + a2 * log_hi if r2 > 0.0 else -np.inf
        qa1, qa2 = q * a1, q * a2
        acc1 = 0.0
        acc2 = 0.0
        for j in range(m):
            # x = hi * s**q  =>  dx / x = q ds / s
            z1 = np.exp(min(c1 + qa1 * base_log[j], 700.0))
            z2 = np.exp(min(c2 + qa2 * base_log[j], 700.0))
            if loglogistic:
                surv = 1.0 / ((1.0 + z1) * (1.0 + z2))
                z1 = z1 / (1.0 + z1)
                z2 = z2 / (1.0 + z2)
            else:
                surv = np.exp(-(z1 + z2))
            acc1 += z1 * surv * base_w[j]
            acc2 += z2 * surv * base_w[j]
        out[i, 0] = a1 * q * acc1
        out[i, 1] = a2 * q * acc2
    return out


def incidence_between(family, shape, rate, lo, hi, n_nodes=N_NODES):
    """``int_lo^hi S1 S2 lambda_k dx`` for k = 1, 2; returns ``(n, 2)``.

    With ``z_k = rate_k x**shape_k`` the hazard is ``shape_k z_k / x`` for
    the Weibull and ``shape_k z_k / (x (1 + z_k))`` for the log-logistic,
    so the integrand is ``shape_k z_k g(z) S(z) dx / x``.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    shape, rate = _as_batch(shape, rate)
    if hi <= lo:
        return np.zeros((shape.shape[0], 2))
    s, ws = gauss_legendre(n_nodes)
    return _incidence_kernel(family == LOGLOGISTIC, np.ascontiguousarray(shape), np.ascontiguousarray(rate),
                             float(lo), float(hi), s, ws, _GRADING)


def event_probabilities(family, shape, rate, nu=1.0, n_nodes=N_NODES):
    """Probabilities of the five outcomes, ``(n, 5)``.

    Columns: cause 1 in [0, nu/2], cause 2 in [0, nu/2], cause 1 in
    (nu/2, nu], cause 2 in (nu/2, nu], no event by ``nu``.
    """
    shape, rate = _as_batch(shape, rate)
    early = incidence_between(family, shape, rate, 0.0, nu / 2, n_nodes)
    late = incidence_between(family, shape, rate, nu / 2, nu, n_nodes)
    event_free = np.exp(-cumulative_hazard(family, shape, rate, nu).sum(axis=1))
    return np.column_stack([early, late, event_free])


def marginal_event_probabilities(family, shape, rate, nu=1.0):
    """Outcome probabilities when each cause is read off its own survival curve.

    This ignores competition: cause ``k`` falls in [0, nu/2] with probability
    ``1 - S_k(nu/2)`` whatever the other cause does, and the no-event cell
    is ``S_1(nu) S_2(nu)``.  The five cells overstate the event mass and do
    not sum to one; they are deliberately left unnormalised.
    """
    shape, rate = _as_batch(shape, rate)
    s_half = np.exp(-cumulative_hazard(family, shape, rate, nu / 2))
    s_end = np.exp(-cumulative_hazard(family, shape, rate, nu))
    return np.column_stack([1.0 - s_half, s_half - s_end, s_end.prod(axis=1)])
