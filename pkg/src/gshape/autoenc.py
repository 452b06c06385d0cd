"""Bits-in, bits-out autoencoder trained through the surrogate channel.

The encoder is a trainable table of M complex points, normalized to unit
average power inside the forward pass (uniform weighting over the full table),
so the transmit shape is scale-free by construction. The decoder is a small
MLP [2 -> H -> H -> m] on the received (re, im) pair, with tanh hidden layers
and sigmoid outputs that estimate the per-bit posteriors. Training minimizes
the mean per-bit binary cross-entropy in nats.

Gradients are hand-derived for this fixed graph. The channel noise is
reparameterized as

    y = sqrt(P) * x + sqrt(sigma2) * eps,   eps ~ CN(0, 1) stored in the cache,

and sigma2 is computed from the exact moments of the normalized table (not
batch-empirical moments), so the backward pass carries two coupled paths into
the table: the lookup/normalization path through x, and the moment path
through sigma2(kappa, kappa3). Both are exact; see ``backward``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .channel import ChannelParams, noise_variance
from .constellation import (
    MIN_RELATIVE_DISTANCE,
    Constellation,
    Moments,
    bit_table,
    is_power_of_two,
    square_qam,
)
from .errors import (
    ConfigError,
    DegenerateInputError,
    ParseError,
    TrainingError,
    UnsupportedOrderError,
)

#: Posterior clamp applied to sigmoid outputs before taking logs.
POSTERIOR_CLAMP = 1e-12

#: Relative jitter applied to the initial point table, per real component.
DEFAULT_INIT_JITTER = 0.01

_SQUARE_INIT_ORDERS = (4, 16, 64, 256, 1024)

_VAL_STREAM = 0xA5

_DECODER_HEADER_PREFIX = "GSHAPE-DECODER v1"

LN2 = math.log(2.0)


@dataclass
class TrainConfig:
    """Hyperparameters of one training run; every field is exposed in configs."""

    order: int
    channel: ChannelParams
    batch_size: int = 1024
    steps: int = 20000
    learning_rate: float = 1e-3
    seed: int = 0
    hidden_width: int = 64
    restarts: int = 5

    def __post_init__(self):
        if self.order < 2 or not is_power_of_two(self.order):
            raise UnsupportedOrderError(f"order must be a power of two >= 2, got {self.order}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not (self.learning_rate > 0.0):
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.hidden_width < 1:
            raise ValueError("hidden_width must be >= 1")


@dataclass
class AutoencoderParams:
    """Trainable state: encoder point table (re/im) and decoder MLP weights."""

    enc_re: np.ndarray
    enc_im: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "enc_re": self.enc_re,
            "enc_im": self.enc_im,
            "w1": self.w1,
            "b1": self.b1,
            "w2": self.w2,
            "b2": self.b2,
            "w3": self.w3,
            "b3": self.b3,
        }

    def copy(self) -> "AutoencoderParams":
        return AutoencoderParams(**{k: v.copy() for k, v in self.arrays().items()})

    @property
    def order(self) -> int:
        return self.enc_re.shape[0]

    @property
    def bits_per_symbol(self) -> int:
        return self.order.bit_length() - 1

    @property
    def encoder_table(self) -> np.ndarray:
        return self.enc_re + 1j * self.enc_im


@dataclass(frozen=True)
class LossRecord:
    step: int
    bce_nats_per_bit: float
    rate_bits: float


@dataclass(frozen=True)
class Checkpoint:
    step: int
    constellation: Constellation
    rate_bits: float


@dataclass
class TrainResult:
    params: AutoencoderParams
    constellation: Constellation
    history: list[LossRecord]
    checkpoints: list[Checkpoint]
    restart_rates: list[float]
    best_restart: int


@dataclass
class ForwardCache:
    """Intermediates retained by ``forward`` for the exact backward pass."""

    params: AutoencoderParams
    channel: ChannelParams
    idx: np.ndarray
    bits: np.ndarray
    eps_re: np.ndarray
    eps_im: np.ndarray
    s2: float
    s4: float
    s6: float
    gain: float
    kappa: float
    kappa3: float
    sigma2: float
    features: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    r_raw: np.ndarray
    posteriors: np.ndarray


def _two_ring_table(order: int) -> np.ndarray:
    """Fallback init for non-square orders: two rings with radius ratio 2."""
    half = order // 2
    ang = 2.0 * np.pi * np.arange(half) / half
    inner = np.exp(1j * ang)
    outer = 2.0 * np.exp(1j * (ang + np.pi / half))
    pts = np.concatenate([inner, outer])
    return pts / math.sqrt(float(np.mean(np.abs(pts) ** 2)))


def init(
    config: TrainConfig,
    rng: np.random.Generator,
    jitter_std: float = DEFAULT_INIT_JITTER,
) -> AutoencoderParams:
    """Deterministic-for-seed initialization.

    The table starts at unit-power Gray square QAM when the order is square,
    otherwise at two concentric rings, plus complex jitter with the given
    per-component standard deviation. Decoder weights use 1/sqrt(fan_in)
    Gaussian initialization with zero biases. The jitter draws are consumed
    even when jitter_std is 0, so the decoder init does not depend on it.
    """
    order = config.order
    if order in _SQUARE_INIT_ORDERS:
        table = square_qam(order).points.copy()
    else:
        table = _two_ring_table(order)
    jitter = rng.standard_normal(order) + 1j * rng.standard_normal(order)
    table = table + jitter_std * jitter
    h = config.hidden_width
    m = config.order.bit_length() - 1
    return AutoencoderParams(
        enc_re=table.real.copy(),
        enc_im=table.imag.copy(),
        w1=rng.standard_normal((2, h)) / math.sqrt(2.0),
        b1=np.zeros(h),
        w2=rng.standard_normal((h, h)) / math.sqrt(h),
        b2=np.zeros(h),
        w3=rng.standard_normal((h, m)) / math.sqrt(h),
        b3=np.zeros(m),
    )


def _table_stats(params: AutoencoderParams) -> tuple[np.ndarray, float, float, float, float]:
    energy = params.enc_re**2 + params.enc_im**2
    s2 = float(energy.mean())
    s4 = float((energy**2).mean())
    s6 = float((energy**3).mean())
    if s2 <= 0.0:
        raise DegenerateInputError("encoder table has zero power")
    return energy, s2, s4, s6, s2**-0.5


def encode(params: AutoencoderParams, indices: np.ndarray) -> np.ndarray:
    """Look up points for the given label indices from the unit-power table."""
    _, _, _, _, gain = _table_stats(params)
    table = gain * (params.enc_re + 1j * params.enc_im)
    return table[np.asarray(indices, dtype=np.intp)]


def _check_table_distinct(table: np.ndarray) -> None:
    d = np.abs(table[:, None] - table[None, :])
    np.fill_diagonal(d, np.inf)
    if float(d.min()) <= MIN_RELATIVE_DISTANCE:
        raise DegenerateInputError(
            "encoder table collapsed: coincident points in the normalized table"
        )


def forward(
    params: AutoencoderParams,
    channel: ChannelParams,
    indices: np.ndarray,
    rng: np.random.Generator | None = None,
    eps: np.ndarray | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Run words -> points -> noisy observations -> per-bit posteriors.

    ``eps`` fixes the unit-variance complex noise draw (used by gradient
    checks); otherwise it is drawn from ``rng``. Posteriors are sigmoid
    outputs clamped to (POSTERIOR_CLAMP, 1 - POSTERIOR_CLAMP).
    """
    idx = np.asarray(indices, dtype=np.intp)
    energy, s2, s4, s6, gain = _table_stats(params)
    table = gain * (params.enc_re + 1j * params.enc_im)
    _check_table_distinct(table)
    kappa = s4 / s2**2
    kappa3 = s6 / s2**3
    sigma2 = noise_variance(channel, Moments(mu2=1.0, kappa=kappa, kappa3=kappa3))

    if eps is None:
        if rng is None:
            raise ValueError("forward needs either rng or a fixed eps draw")
        eps_re = rng.standard_normal(idx.shape[0]) / math.sqrt(2.0)
        eps_im = rng.standard_normal(idx.shape[0]) / math.sqrt(2.0)
    else:
        eps = np.asarray(eps, dtype=np.complex128)
        eps_re = eps.real.copy()
        eps_im = eps.imag.copy()

    x = table[idx]
    root_sigma = math.sqrt(sigma2)
    sqrt_p = math.sqrt(channel.launch_power_mw)
    y_re = sqrt_p * x.real + root_sigma * eps_re
    y_im = sqrt_p * x.imag + root_sigma * eps_im
    features = np.column_stack([y_re, y_im])

    h1 = np.tanh(features @ params.w1 + params.b1)
    h2 = np.tanh(h1 @ params.w2 + params.b2)
    r_raw = expit(h2 @ params.w3 + params.b3)
    posteriors = np.clip(r_raw, POSTERIOR_CLAMP, 1.0 - POSTERIOR_CLAMP)

    cache = ForwardCache(
        params=params,
        channel=channel,
        idx=idx,
        bits=bit_table(params.order)[idx].astype(np.float64),
        eps_re=eps_re,
        eps_im=eps_im,
        s2=s2,
        s4=s4,
        s6=s6,
        gain=gain,
        kappa=kappa,
        kappa3=kappa3,
        sigma2=sigma2,
        features=features,
        h1=h1,
        h2=h2,
        r_raw=r_raw,
        posteriors=posteriors,
    )
    return posteriors, cache


def bce_loss(bits: np.ndarray, posteriors: np.ndarray) -> float:
    """Mean per-bit binary cross-entropy in nats over the batch."""
    return float(
        -np.mean(bits * np.log(posteriors) + (1.0 - bits) * np.log1p(-posteriors))
    )


def rate_from_loss(loss_nats_per_bit: float, m: int) -> float:
    """Achievable-rate lower bound m * (1 - L / ln 2) in bits/symbol, clamped at 0."""
    if loss_nats_per_bit < 0.0:
        raise ValueError("loss must be >= 0")
    return max(0.0, m * (1.0 - loss_nats_per_bit / LN2))


def backward(cache: ForwardCache) -> dict[str, np.ndarray]:
    """Exact gradients of the batch BCE with respect to every parameter array.

    Decoder layers backpropagate as usual. The received features u = (re y,
    im y) then split three ways:

      * x path: dL/dx = sqrt(P) * dL/du, scattered into the normalized table
        and pulled through the normalization c = t / sqrt(mean|t|^2), whose
        Jacobian couples every point through the common gain;
      * sigma2 path: dL/dsigma2 = sum_k <dL/du_k, eps_k> / (2 sqrt(sigma2))
        via the reparameterized noise, then into the table through
        dsigma2/dkappa = spans * P^3 * c1 and dsigma2/dkappa3 = spans * P^3 * c2
        and the moment ratios kappa = S4/S2^2, kappa3 = S6/S2^3.

    Saturated posteriors (outside the clamp window) contribute zero gradient,
    matching finite differences of the clamped loss.
    """
    p = cache.params
    k_batch, m = cache.bits.shape
    scale = 1.0 / (k_batch * m)

    clamped = (cache.r_raw <= POSTERIOR_CLAMP) | (cache.r_raw >= 1.0 - POSTERIOR_CLAMP)
    gz = np.where(clamped, 0.0, (cache.r_raw - cache.bits) * scale)

    gw3 = cache.h2.T @ gz
    gb3 = gz.sum(axis=0)
    gh2 = gz @ p.w3.T

    ga2 = gh2 * (1.0 - cache.h2**2)
    gw2 = cache.h1.T @ ga2
    gb2 = ga2.sum(axis=0)
    gh1 = ga2 @ p.w2.T

    ga1 = gh1 * (1.0 - cache.h1**2)
    gw1 = cache.features.T @ ga1
    gb1 = ga1.sum(axis=0)
    gu = ga1 @ p.w1.T

    sqrt_p = math.sqrt(cache.channel.launch_power_mw)
    root_sigma = math.sqrt(cache.sigma2)

    # x path into the normalized table
    gc_re = np.zeros(p.order)
    gc_im = np.zeros(p.order)
    np.add.at(gc_re, cache.idx, sqrt_p * gu[:, 0])
    np.add.at(gc_im, cache.idx, sqrt_p * gu[:, 1])

    order = p.order
    s2, s4, s6, gain = cache.s2, cache.s4, cache.s6, cache.gain
    # c_j = gain * t_j with gain = S2^(-1/2); dgain/dt_i = -S2^(-3/2) t_i / M
    dot = float(np.dot(gc_re, p.enc_re) + np.dot(gc_im, p.enc_im))
    common = dot * s2**-1.5 / order
    gt_re = gain * gc_re - common * p.enc_re
    gt_im = gain * gc_im - common * p.enc_im

    # sigma2 path via the stored noise draw
    gsigma2 = float(np.dot(gu[:, 0], cache.eps_re) + np.dot(gu[:, 1], cache.eps_im))
    gsigma2 /= 2.0 * root_sigma
    c_p = cache.channel.spans * cache.channel.launch_power_mw**3
    energy = p.enc_re**2 + p.enc_im**2
    # dkappa/dt = (4 t / M) (e/S2^2 - kappa/S2); dkappa3/dt = (6 t / M) (e^2/S2^3 - kappa3/S2)
    dk = 4.0 / order * (energy / s2**2 - cache.kappa / s2)
    dk3 = 6.0 / order * (energy**2 / s2**3 - cache.kappa3 / s2)
    moment_factor = gsigma2 * c_p * (cache.channel.nlin.c1 * dk + cache.channel.nlin.c2 * dk3)
    gt_re += moment_factor * p.enc_re
    gt_im += moment_factor * p.enc_im

    return {
        "enc_re": gt_re,
        "enc_im": gt_im,
        "w1": gw1,
        "b1": gb1,
        "w2": gw2,
        "b2": gb2,
        "w3": gw3,
        "b3": gb3,
    }


class Adam:
    """Adam with bias correction; state keyed by parameter name."""

    def __init__(self, params: AutoencoderParams, learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays().items()}

    def step(self, params: AutoencoderParams, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for key, value in params.arrays().items():
            g = grads[key]
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            value -= self.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def extract_constellation(params: AutoencoderParams) -> Constellation:
    """The learned shape: the unit-power normalized table with index labeling."""
    _, _, _, _, gain = _table_stats(params)
    return Constellation(gain * params.encoder_table)


def _validation_rate(
    params: AutoencoderParams,
    channel: ChannelParams,
    rng: np.random.Generator,
    n_words: int,
) -> float:
    order = params.order
    reps = -(-n_words // order)
    idx = np.tile(np.arange(order), reps)[:n_words]
    posteriors, cache = forward(params, channel, idx, rng)
    return rate_from_loss(bce_loss(cache.bits, posteriors), params.bits_per_symbol)


def train(config: TrainConfig, checkpoint_every: int | None = None) -> TrainResult:
    """Run Adam over fresh uniform batches; return the best of the restarts.

    Restarts use independent seeded streams derived from config.seed and are
    ranked by the loss-derived rate on a held-out validation pass (ties go to
    the lower restart index). A restart whose loss goes non-finite is dropped;
    if every restart diverges a TrainingError is raised.
    """
    if config.batch_size < config.order:
        warnings.warn(
            f"batch_size {config.batch_size} is below the constellation order "
            f"{config.order}; each step will miss some words",
            RuntimeWarning,
            stacklevel=2,
        )
    m = config.order.bit_length() - 1
    best: tuple[int, float, AutoencoderParams, list[LossRecord], list[Checkpoint]] | None = None
    restart_rates: list[float] = []
    failures: list[str] = []

    for restart in range(config.restarts):
        rng = np.random.default_rng([config.seed, restart])
        params = init(config, rng)
        opt = Adam(params, config.learning_rate)
        records: list[LossRecord] = []
        checkpoints: list[Checkpoint] = []
        diverged = False
        try:
            for step in range(1, config.steps + 1):
                idx = rng.integers(0, config.order, size=config.batch_size)
                posteriors, cache = forward(params, config.channel, idx, rng)
                loss = bce_loss(cache.bits, posteriors)
                if not math.isfinite(loss):
                    diverged = True
                    failures.append(f"restart {restart}: loss became non-finite at step {step}")
                    break
                records.append(LossRecord(step, loss, rate_from_loss(loss, m)))
                opt.step(params, backward(cache))
                if checkpoint_every is not None and step % checkpoint_every == 0:
                    val_rng = np.random.default_rng([config.seed, restart, _VAL_STREAM, step])
                    checkpoints.append(
                        Checkpoint(
                            step,
                            extract_constellation(params),
                            _validation_rate(params, config.channel, val_rng, 4096),
                        )
                    )
        except (DegenerateInputError, ConfigError) as exc:
            # collapsed tables and non-finite moments both surface here
            diverged = True
            failures.append(f"restart {restart}: {exc}")
        if diverged:
            restart_rates.append(float("nan"))
            continue
        val_rng = np.random.default_rng([config.seed, restart, _VAL_STREAM])
        rate = _validation_rate(params, config.channel, val_rng, 16384)
        restart_rates.append(rate)
        if best is None or rate > best[1]:
            best = (restart, rate, params, records, checkpoints)

    if best is None:
        raise TrainingError("all restarts failed: " + "; ".join(failures))
    restart, _, params, records, checkpoints = best
    return TrainResult(
        params=params,
        constellation=extract_constellation(params),
        history=records,
        checkpoints=checkpoints,
        restart_rates=restart_rates,
        best_restart=restart,
    )


def write_decoder(params: AutoencoderParams, path) -> None:
    """Sidecar checkpoint of the decoder weights: versioned, row-major, 17 digits."""
    path = Path(path)
    h = params.w1.shape[1]
    lines = [f"{_DECODER_HEADER_PREFIX} M={params.order} H={h}"]
    for name in ("w1", "b1", "w2", "b2", "w3", "b3"):
        arr = np.atleast_2d(params.arrays()[name])
        lines.append(f"{name} {arr.shape[0]} {arr.shape[1]}")
        for row in arr:
            lines.append(" ".join(f"{v:.17g}" for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def read_decoder(path) -> dict[str, np.ndarray]:
    """Parse a decoder sidecar back into its weight arrays."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="ascii").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(path, 0, f"cannot read file: {exc}") from exc
    if not lines or not lines[0].startswith(_DECODER_HEADER_PREFIX):
        raise ParseError(path, 1, "bad decoder header")
    arrays: dict[str, np.ndarray] = {}
    pos = 1
    for name in ("w1", "b1", "w2", "b2", "w3", "b3"):
        if pos >= len(lines):
            raise ParseError(path, pos + 1, f"missing block {name!r}")
        parts = lines[pos].split()
        if len(parts) != 3 or parts[0] != name:
            raise ParseError(path, pos + 1, f"expected '{name} <rows> <cols>', got {lines[pos]!r}")
        rows, cols = int(parts[1]), int(parts[2])
        pos += 1
        block = np.empty((rows, cols))
        for r in range(rows):
            vals = lines[pos].split()
            if len(vals) != cols:
                raise ParseError(path, pos + 1, f"expected {cols} values")
            block[r] = [float(v) for v in vals]
            pos += 1
        arrays[name] = block[0] if name.startswith("b") else block
    return arrays


def load_autoencoder(constellation_path, decoder_path) -> AutoencoderParams:
    """Rebuild trainable state from a constellation file plus decoder sidecar."""
    from .constellation import read_constellation

    c = read_constellation(constellation_path)
    dec = read_decoder(decoder_path)
    if dec["w3"].shape[1] != c.bits_per_symbol:
        raise ParseError(decoder_path, 1, "decoder output width does not match constellation order")
    return AutoencoderParams(
        enc_re=c.points.real.copy(),
        enc_im=c.points.imag.copy(),
        w1=dec["w1"],
        b1=dec["b1"],
        w2=dec["w2"],
        b2=dec["b2"],
        w3=dec["w3"],
        b3=dec["b3"],
    )
