"""Metropolis-within-Gibbs sampler for the competing-risk posterior.

Each iteration sweeps the ten coordinates in :data:`~crdesign.model.COORDINATES`
order.  Shapes and rates move by a Gaussian random walk on the log scale
(with the log-Jacobian added to the acceptance ratio); log hazard ratios
move by a plain Gaussian random walk.  Proposal scales are tuned per
coordinate in batches during burn-in only and frozen afterwards.

The likelihood of cause ``k`` depends on the data only through per-arm
event counts, the sum of log times over cause-``k`` events and per-arm
sums of ``x**alpha_k``.  Only the last needs a pass over the data, and only
when ``alpha_k`` moves.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numba
import numpy as np

from .model import COORDINATES, ModelParams, PatientRecord, PriorConfig

N_COORD = len(COORDINATES)
_LOG_SCALE0 = np.array([math.log(0.5)] * 4 + [0.0] * 6)


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class McmcConfig:
    n_iter: int = 4000
    n_burn: int = 2000
    thin: int = 1
    init: ModelParams = field(default_factory=ModelParams)
    seed: int = 0
    target_accept: float = 0.3
    adapt_window: int = 50

    def __post_init__(self):
        if self.n_iter <= 0 or not 0 <= self.n_burn < self.n_iter:
            raise ValueError("need n_iter > 0 and 0 <= n_burn < n_iter")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must be in (0, 1)")
        if self.adapt_window < 1:
            raise ValueError("adapt_window must be >= 1")

    @property
    def n_keep(self) -> int:
        return (self.n_iter - self.n_burn) // self.thin


@dataclass(frozen=True)
class Dataset:
    """Column view of a list of :class:`PatientRecord`."""

    w: np.ndarray
    d: np.ndarray
    x: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray

    @classmethod
    def from_records(cls, records: Iterable[PatientRecord]) -> "Dataset":
        records = list(records)
        return cls(
            w=np.array([r.w for r in records], dtype=np.int64),
            d=np.array([r.d for r in records], dtype=np.int64),
            x=np.array([r.x for r in records], dtype=float),
            delta1=np.array([r.delta1 for r in records], dtype=np.int64),
            delta2=np.array([r.delta2 for r in records], dtype=np.int64),
        )

    @classmethod
    def empty(cls) -> "Dataset":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, np.zeros(0), z, z)

    def __len__(self):
        return len(self.x)

    def select(self, mask) -> "Dataset":
        return Dataset(self.w[mask], self.d[mask], self.x[mask], self.delta1[mask], self.delta2[mask])

    def records(self) -> list[PatientRecord]:
        return [
            PatientRecord(int(w), int(d), float(x), int(e1), int(e2))
            for w, d, x, e1, e2 in zip(self.w, self.d, self.x, self.delta1, self.delta2)
        ]


def as_dataset(data) -> Dataset:
    if isinstance(data, Dataset):
        return data
    return Dataset.from_records(data)


@dataclass
class PosteriorDraws:
    """Retained draws as an ``(n, 10)`` array in :data:`COORDINATES` order."""

    values: np.ndarray
    accept_rates: np.ndarray
    seed: int
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != N_COORD:
            raise ValueError("draws must be an (n, 10) array")

    def __len__(self):
        return self.values.shape[0]

    def __iter__(self):
        return (ModelParams.from_array(v) for v in self.values)

    @property
    def draws(self) -> list[ModelParams]:
        return list(self)

    @classmethod
    def from_params(cls, params: Sequence[ModelParams], seed: int = 0) -> "PosteriorDraws":
        return cls(np.array([p.as_array() for p in params]).reshape(-1, N_COORD), np.full(N_COORD, np.nan), seed)


# -- kernel -----------------------------------------------------------------


@numba.njit(cache=True)
def _power_sums(cell, logx, alpha):
    out = np.zeros(4)
    for i in range(cell.shape[0]):
        out[cell[i]] += math.exp(alpha * logx[i])
    return out


@numba.njit(cache=True)
def _cause_loglik(alpha, beta, g0, g1, g2, n_events, log_event_sum, powsum):
    if not (alpha > 0.0 and beta > 0.0):
        return -np.inf
    la = math.log(alpha) + math.log(beta)
    ll = (alpha - 1.0) * log_event_sum
    ll += n_events[0] * la - beta * powsum[0]
    ll += n_events[1] * (la + g0) - beta * math.exp(g0) * powsum[1]
    ll += n_events[2] * (la + g1) - beta * math.exp(g1) * powsum[2]
    ll += n_events[3] * (la + g2) - beta * math.exp(g2) * powsum[3]
    return ll


@numba.njit(cache=True)
def _mwg_kernel(cell, logx, n_events, log_event_sum, theta0, a, b, c,
                z, u, n_burn, thin, target, window, log_scale0):
    n_iter = z.shape[0]
    theta = theta0.copy()
    log_scale = log_scale0.copy()
    powsum = np.zeros((2, 4))
    ll = np.zeros(2)
    for k in range(2):
        powsum[k] = _power_sums(cell, logx, theta[k])
        g = 4 + 3 * k
        ll[k] = _cause_loglik(theta[k], theta[2 + k], theta[g], theta[g + 1], theta[g + 2],
                              n_events[k], log_event_sum[k], powsum[k])

    n_keep = (n_iter - n_burn) // thin
    out = np.empty((n_keep, 10))
    acc_window = np.zeros(10)
    acc_post = np.zeros(10)
    batch = 0
    kept = 0
    for it in range(n_iter):
        for j in range(10):
            if j < 4:
                k = j % 2
            else:
                k = (j - 4) // 3
            g = 4 + 3 * k
            step = math.exp(log_scale[j]) * z[it, j]
            cur = theta[j]
            new_powsum = powsum[k]
            if j < 4:
                prop = cur * math.exp(step)
                # Gamma(a, scale b) prior plus log-Jacobian of the log transform
                log_ratio = (a - 1.0) * (math.log(prop) - math.log(cur)) - (prop - cur) / b + step
            else:
                prop = cur + step
                log_ratio = -0.5 * (prop * prop - cur * cur) / (c * c)
            theta[j] = prop
            if j < 2:
                new_powsum = _power_sums(cell, logx, prop)
            new_ll = _cause_loglik(theta[k], theta[2 + k], theta[g], theta[g + 1], theta[g + 2],
                                   n_events[k], log_event_sum[k], new_powsum)
            log_ratio += new_ll - ll[k]
            accepted = math.log(u[it, j]) < log_ratio
            if accepted:
                ll[k] = new_ll
                if j < 2:
                    powsum[k] = new_powsum
            else:
                theta[j] = cur
            if it < n_burn:
                acc_window[j] += accepted
            else:
                acc_post[j] += accepted
        if it < n_burn and (it + 1) % window == 0:
            batch += 1
            gain = min(1.0, 2.0 / math.sqrt(batch))
            for j in range(10):
                log_scale[j] += gain * (acc_window[j] / window - target)
                acc_window[j] = 0.0
        if it >= n_burn and (it - n_burn + 1) % thin == 0 and kept < n_keep:
            out[kept] = theta
            kept += 1
    return out, acc_post / (n_iter - n_burn)


def _sufficient_stats(data: Dataset):
    keep = data.x > 0
    if not np.all(keep):
        data = data.select(keep)
    cell = np.where(data.w == 1, data.d, data.d + 1).astype(np.int64)
    logx = np.log(data.x)
    n_events = np.zeros((2, 4))
    log_event_sum = np.zeros(2)
    for k, delta in enumerate((data.delta1, data.delta2)):
        n_events[k] = np.bincount(cell, weights=delta.astype(float), minlength=4)
        log_event_sum[k] = float(np.sum(logx * delta))
    return cell, logx, n_events, log_event_sum


def sample_posterior(data, prior: PriorConfig, cfg: McmcConfig) -> PosteriorDraws:
    """Draw from the posterior given ``data`` (records or a :class:`Dataset`).

    Records with ``x == 0`` carry no information about a Weibull hazard with
    shape below one and are left out.  With no data the chain targets the
    prior.
    """
    if not cfg.init.in_support():
        raise SamplerError(f"initial state {cfg.init} has non-positive alpha or beta")
    data = as_dataset(data)
    cell, logx, n_events, log_event_sum = _sufficient_stats(data)
    rng = np.random.default_rng(cfg.seed)
    z = rng.standard_normal((cfg.n_iter, N_COORD))
    u = rng.random((cfg.n_iter, N_COORD))
    values, acc = _mwg_kernel(
        cell, logx, n_events, log_event_sum, cfg.init.as_array(),
        float(prior.a), float(prior.b), float(prior.c), z, u,
        cfg.n_burn, cfg.thin, cfg.target_accept, cfg.adapt_window, _LOG_SCALE0,
    )
    if not np.all(np.isfinite(values)):
        raise SamplerError("non-finite draw produced")
    return PosteriorDraws(values, acc, cfg.seed)


_CAUSE_COLUMNS = (np.array([0, 2, 4, 5, 6]), np.array([1, 3, 7, 8, 9]))


def separate_design_posterior(data, prior: PriorConfig, cfg: McmcConfig) -> PosteriorDraws:
    """Fit DP and NC as two unrelated single-event Weibull regressions.

    Each fit sees the other cause's events as ordinary right-censoring and
    runs its own chain; the two five-coordinate blocks are then laid side by
    side in the usual ten-coordinate layout.
    """
    data = as_dataset(data)
    seeds = np.random.SeedSequence(cfg.seed).generate_state(2, dtype=np.uint64)
    zero = np.zeros_like(data.delta1)
    only = (
        Dataset(data.w, data.d, data.x, data.delta1, zero),
        Dataset(data.w, data.d, data.x, zero, data.delta2),
    )
    values = np.empty((cfg.n_keep, N_COORD))
    acc = np.empty(N_COORD)
    for k in range(2):
        fit = sample_posterior(only[k], prior, replace(cfg, seed=int(seeds[k])))
        cols = _CAUSE_COLUMNS[k]
        values[:, cols] = fit.values[:, cols]
        acc[cols] = fit.accept_rates[cols]
    return PosteriorDraws(values, acc, cfg.seed)


# -- diagnostics ------------------------------------------------------------


def effective_sample_size(chain: np.ndarray) -> float:
    """ESS from the initial positive sequence of autocorrelation pairs.

    A chain with zero variance has no autocorrelation to speak of; its ESS is
    reported as the chain length.
    """
    x = np.asarray(chain, dtype=float)
    n = x.size
    if n < 2:
        return float(n)
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var <= 1e-300:
        return float(n)
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n] / n
    rho = acov / acov[0]
    tau = -1.0
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    tau = max(tau, 1.0 / n)
    return float(min(n / tau, n * np.log10(n)))


def diagnostics(draws: PosteriorDraws) -> dict[str, dict[str, float]]:
    """Per-coordinate mean, SD, ESS, Monte-Carlo SE and acceptance rate."""
    if len(draws) == 0:
        raise ValueError("no draws to summarise")
    out = {}
    for j, name in enumerate(COORDINATES):
        col = draws.values[:, j]
        ess = effective_sample_size(col)
        sd = float(col.std(ddof=1)) if len(col) > 1 else 0.0
        out[name] = {
            "mean": float(col.mean()),
            "sd": sd,
            "ess": ess,
            "mcse": sd / math.sqrt(ess),
            "accept_rate": float(draws.accept_rates[j]),
        }
    return out


def write_chain(draws: PosteriorDraws, path) -> None:
    """One row per retained draw, header naming the coordinates."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COORDINATES)
        for row in draws.values:
            writer.writerow([repr(float(v)) for v in row])


def read_chain(path, seed: int = 0) -> PosteriorDraws:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != COORDINATES:
            raise ValueError(f"unexpected chain header {header}")
        rows = [[float(v) for v in row] for row in reader]
    return PosteriorDraws(np.array(rows).reshape(-1, N_COORD), np.full(N_COORD, np.nan), seed)
