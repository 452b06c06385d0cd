"""Monte-Carlo and quadrature estimators of MI and GMI under a Gaussian auxiliary channel.

All estimators assume the matched Gaussian metric q(y|x) = exp(-|y - sqrt(P) x|^2
/ sigma2) / (pi sigma2) and uniform priors unless a pmf is passed explicitly.

MI (symbol-metric) per sample:   log2[ q(y|x) / sum_j p_j q(y|x_j) ]
GMI (bit-metric) per sample:     m - sum_i log2(1 + exp(-(2 s_i - 1) LLR_i(y)))
LLR per bit:                     log[ sum_{x: b_i=1} q(y|x) / sum_{x: b_i=0} q(y|x) ]

Monte-Carlo estimates are accumulated in fixed-size chunks; results are
bit-identical for a fixed seed and chunk size. The MI estimator orders points
canonically before sampling, so its value depends only on the point multiset
and pmf, never on the labeling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .channel import ChannelParams, noise_variance, sample
from .constellation import Constellation, Pmf, bit_table, gray_penalty, moments
from .errors import UnsupportedOrderError

LN2 = math.log(2.0)

DEFAULT_CHUNK = 1 << 16

MIN_MC_SAMPLES = 10_000

_QUADRATURE_MAX_ORDER = 64


@dataclass(frozen=True)
class AuxChannel:
    """Gaussian decoding metric: total complex noise variance and launch power, mW."""

    sigma2_mw: float
    launch_power_mw: float

    def __post_init__(self):
        if not (self.sigma2_mw > 0.0):
            raise ValueError("sigma2_mw must be positive")
        if not (self.launch_power_mw > 0.0):
            raise ValueError("launch_power_mw must be positive")


@dataclass
class MetricsReport:
    """Consolidated evaluation record for one constellation on one channel."""

    m: int
    mi_bits: float
    gmi_bits: float
    mc_std_error_bits: float
    samples_used: int
    gray_penalty: float
    seed: int
    loss_rate_bits: float | None = None

    CSV_HEADER = "m,mi_bits,gmi_bits,stderr_bits,gray_penalty,samples,seed"

    def csv_row(self) -> str:
        return (
            f"{self.m},{self.mi_bits:.12g},{self.gmi_bits:.12g},"
            f"{self.mc_std_error_bits:.12g},{self.gray_penalty:.12g},"
            f"{self.samples_used},{self.seed}"
        )


def _check_samples(n_samples: int) -> None:
    if n_samples < MIN_MC_SAMPLES:
        raise ValueError(f"n_samples must be >= {MIN_MC_SAMPLES}, got {n_samples}")


def _chunk_sizes(total: int, chunk: int):
    done = 0
    while done < total:
        size = min(chunk, total - done)
        yield size
        done += size


def _finalize(sum1: float, sum2: float, n: int) -> tuple[float, float]:
    mean = sum1 / n
    var = max(0.0, (sum2 - n * mean * mean) / max(1, n - 1))
    return max(0.0, mean), math.sqrt(var / n)


def llrs(
    y: np.ndarray,
    c: Constellation,
    aux: AuxChannel,
    max_log: bool = False,
) -> np.ndarray:
    """Per-bit log-likelihood ratios log[P(bit=1|y) / P(bit=0|y)], shape (N, m).

    Uniform priors; exact log-sum-exp over each bit's point sets unless
    ``max_log`` selects the max-log approximation.
    """
    y = np.asarray(y, dtype=np.complex128).ravel()
    e = -np.abs(y[:, None] - math.sqrt(aux.launch_power_mw) * c.points[None, :]) ** 2
    e /= aux.sigma2_mw
    bits = bit_table(c.order).astype(bool)
    out = np.empty((y.shape[0], c.bits_per_symbol))
    for i in range(c.bits_per_symbol):
        on = e[:, bits[:, i]]
        off = e[:, ~bits[:, i]]
        if max_log:
            out[:, i] = on.max(axis=1) - off.max(axis=1)
        else:
            out[:, i] = logsumexp(on, axis=1) - logsumexp(off, axis=1)
    return out


def gmi_mc(
    c: Constellation,
    aux: AuxChannel,
    n_samples: int,
    rng: np.random.Generator,
    chunk_size: int = DEFAULT_CHUNK,
) -> tuple[float, float]:
    """Monte-Carlo GMI in bits/symbol with its standard error.

    Transmits uniform labels through the Gaussian channel at the auxiliary
    variance and scores the exact per-bit LLRs against the sent bits.
    """
    _check_samples(n_samples)
    m = c.bits_per_symbol
    bits = bit_table(c.order)
    sum1 = sum2 = 0.0
    for size in _chunk_sizes(n_samples, chunk_size):
        idx = rng.integers(0, c.order, size=size)
        y = sample(c.points[idx], aux.sigma2_mw, rng, aux.launch_power_mw)
        llr = llrs(y, c, aux)
        sgn = 2.0 * bits[idx].astype(np.float64) - 1.0
        penalty = np.logaddexp(0.0, -sgn * llr).sum(axis=1) / LN2
        v = m - penalty
        sum1 += float(v.sum())
        sum2 += float(np.dot(v, v))
    return _finalize(sum1, sum2, n_samples)


def _canonical(c: Constellation, pmf: Pmf) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((c.points.imag, c.points.real))
    pts = c.points[order]
    probs = pmf.probs[order]
    return pts, probs / probs.sum()


def mi_mc(
    c: Constellation,
    pmf: Pmf,
    aux: AuxChannel,
    n_samples: int,
    rng: np.random.Generator,
    chunk_size: int = DEFAULT_CHUNK,
) -> tuple[float, float]:
    """Monte-Carlo MI in bits/symbol with its standard error; supports non-uniform pmfs."""
    _check_samples(n_samples)
    if pmf.order != c.order:
        raise ValueError("pmf order does not match constellation order")
    pts, probs = _canonical(c, pmf)
    sqrt_p = math.sqrt(aux.launch_power_mw)
    logp = np.full(pts.shape[0], -np.inf)
    nz = probs > 0.0
    logp[nz] = np.log(probs[nz])
    sum1 = sum2 = 0.0
    for size in _chunk_sizes(n_samples, chunk_size):
        idx = rng.choice(pts.shape[0], size=size, p=probs)
        y = sample(pts[idx], aux.sigma2_mw, rng, aux.launch_power_mw)
        d = np.abs(y[:, None] - sqrt_p * pts[None, :]) ** 2
        d /= aux.sigma2_mw
        log_mix = logsumexp(-d + logp[None, :], axis=1)
        log_num = -d[np.arange(size), idx]
        v = (log_num - log_mix) / LN2
        sum1 += float(v.sum())
        sum2 += float(np.dot(v, v))
    return _finalize(sum1, sum2, n_samples)


def mi_quadrature_oracle(
    c: Constellation,
    pmf: Pmf,
    aux: AuxChannel,
    nodes_per_axis: int = 48,
) -> float:
    """Deterministic MI reference via 2-D Gauss-Hermite quadrature.

    Guarded to M <= 64 for cost; use mi_mc above that.
    """
    if c.order > _QUADRATURE_MAX_ORDER:
        raise UnsupportedOrderError(
            f"quadrature oracle supports M <= {_QUADRATURE_MAX_ORDER}; use mi_mc"
        )
    if nodes_per_axis < 40:
        raise ValueError("nodes_per_axis must be >= 40")
    if pmf.order != c.order:
        raise ValueError("pmf order does not match constellation order")
    nodes, weights = np.polynomial.hermite.hermgauss(nodes_per_axis)
    sigma = math.sqrt(aux.sigma2_mw)
    sqrt_p = math.sqrt(aux.launch_power_mw)
    noise = sigma * (nodes[:, None] + 1j * nodes[None, :]).ravel()
    wt = (weights[:, None] * weights[None, :]).ravel() / math.pi
    pts, probs = _canonical(c, pmf)
    logp = np.full(pts.shape[0], -np.inf)
    nz = probs > 0.0
    logp[nz] = np.log(probs[nz])
    log_self = -np.abs(noise) ** 2 / aux.sigma2_mw
    total = 0.0
    for j in np.flatnonzero(nz):
        y = sqrt_p * pts[j] + noise
        d = np.abs(y[:, None] - sqrt_p * pts[None, :]) ** 2
        log_mix = logsumexp(-d / aux.sigma2_mw + logp[None, :], axis=1)
        total += probs[j] * float(np.dot(wt, log_self - log_mix)) / LN2
    return max(0.0, total)


def evaluate(
    c: Constellation,
    channel_params: ChannelParams,
    n_samples: int,
    seed: int,
) -> MetricsReport:
    """Run MI, GMI and Gray-penalty on one unit-power constellation.

    The auxiliary variance is matched to the surrogate channel's true variance
    at the constellation's moments. Deterministic given the seed.
    """
    mom = moments(c)
    sigma2 = noise_variance(channel_params, mom)
    aux = AuxChannel(sigma2, channel_params.launch_power_mw)
    rng = np.random.default_rng(seed)
    mi, se_mi = mi_mc(c, Pmf.uniform(c.order), aux, n_samples, rng)
    gmi, se_gmi = gmi_mc(c, aux, n_samples, rng)
    return MetricsReport(
        m=c.bits_per_symbol,
        mi_bits=mi,
        gmi_bits=gmi,
        mc_std_error_bits=max(se_mi, se_gmi),
        samples_used=n_samples,
        gray_penalty=gray_penalty(c),
        seed=seed,
    )
