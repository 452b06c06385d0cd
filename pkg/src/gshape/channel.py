"""Moment-dependent Gaussian surrogate of an amplified fiber link.

The channel adds circular complex Gaussian noise whose total variance over
``spans`` identical spans is

    sigma2 = spans * ase_per_span + spans * P^3 * (c0 + c1*(kappa - 2) + c2*(kappa3 - 6))

with ``P`` the launch power in mW and (kappa, kappa3) the normalized fourth-
and sixth-order moments of the unit-power transmit constellation. The moment
term is centered at circular-Gaussian moments so a Gaussian-like input sees
exactly ``c0`` per span. The coefficients are configuration inputs with
surrogate defaults, not a calibrated fiber model. Constellations are kept at
unit power throughout; launch power enters as a sqrt(P) scale at the channel
input and as P in SNR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constellation import Moments
from .errors import ConfigError

PLANCK_J_S = 6.62607015e-34

DEFAULT_CENTER_FREQUENCY_HZ = 193.41e12

#: Surrogate per-span NLIN coefficients, 1/mW^2.
DEFAULT_NLIN_C0 = 2e-3
DEFAULT_NLIN_C1 = -4e-4
DEFAULT_NLIN_C2 = -2e-5


@dataclass(frozen=True)
class LinkBudget:
    """Per-span amplifier and bandwidth bookkeeping."""

    span_length_km: float
    attenuation_db_per_km: float
    spans: int
    noise_figure_db: float
    reference_bandwidth_hz: float
    center_frequency_hz: float = DEFAULT_CENTER_FREQUENCY_HZ

    def __post_init__(self):
        if self.spans < 1:
            raise ConfigError(f"spans must be >= 1, got {self.spans}")
        for name in (
            "span_length_km",
            "attenuation_db_per_km",
            "noise_figure_db",
            "reference_bandwidth_hz",
            "center_frequency_hz",
        ):
            if not (getattr(self, name) > 0.0):
                raise ConfigError(f"{name} must be positive")


@dataclass(frozen=True)
class NlinCoeffs:
    """Per-span nonlinear-interference coefficients, 1/mW^2."""

    c0: float = DEFAULT_NLIN_C0
    c1: float = DEFAULT_NLIN_C1
    c2: float = DEFAULT_NLIN_C2

    def __post_init__(self):
        if not (self.c0 > 0.0):
            raise ConfigError(f"c0 must be positive, got {self.c0}")
        if not (math.isfinite(self.c1) and math.isfinite(self.c2)):
            raise ConfigError("c1 and c2 must be finite")


@dataclass(frozen=True)
class ChannelParams:
    """Everything the surrogate needs: accumulated ASE, NLIN coefficients, power."""

    ase_variance_per_span_mw: float
    nlin: NlinCoeffs
    spans: int
    launch_power_mw: float

    def __post_init__(self):
        if self.ase_variance_per_span_mw < 0.0:
            raise ConfigError("ase_variance_per_span_mw must be >= 0")
        if self.spans < 1:
            raise ConfigError(f"spans must be >= 1, got {self.spans}")
        if not (self.launch_power_mw > 0.0):
            raise ConfigError("launch_power_mw must be positive")

    @classmethod
    def from_link(
        cls,
        link: LinkBudget,
        nlin: NlinCoeffs | None = None,
        launch_power_mw: float = 1.0,
    ) -> "ChannelParams":
        return cls(
            ase_variance_per_span_mw=ase_variance_per_span(link),
            nlin=nlin if nlin is not None else NlinCoeffs(),
            spans=link.spans,
            launch_power_mw=launch_power_mw,
        )

    @classmethod
    def awgn(cls, snr_db: float, launch_power_mw: float = 1.0) -> "ChannelParams":
        """Single-span additive-noise-only channel at the given SNR.

        The NLIN term is kept structurally present with a vanishing c0 so all
        invariants hold; its contribution is negligible (1e-30 * P^3).
        """
        ase = launch_power_mw / 10.0 ** (snr_db / 10.0)
        return cls(
            ase_variance_per_span_mw=ase,
            nlin=NlinCoeffs(c0=1e-30, c1=0.0, c2=0.0),
            spans=1,
            launch_power_mw=launch_power_mw,
        )


def ase_variance_per_span(link: LinkBudget) -> float:
    """Amplifier noise power per span in mW: h * f_c * NF * (G - 1) * B_ref.

    Single polarization; G is the linear span gain compensating the span loss.
    """
    gain = 10.0 ** (link.attenuation_db_per_km * link.span_length_km / 10.0)
    nf_lin = 10.0 ** (link.noise_figure_db / 10.0)
    watts = (
        PLANCK_J_S
        * link.center_frequency_hz
        * nf_lin
        * (gain - 1.0)
        * link.reference_bandwidth_hz
    )
    return watts * 1e3


def _per_span_nlin(params: ChannelParams, m: Moments) -> float:
    return params.launch_power_mw**3 * (
        params.nlin.c0
        + params.nlin.c1 * (m.kappa - 2.0)
        + params.nlin.c2 * (m.kappa3 - 6.0)
    )


def noise_variance(params: ChannelParams, m: Moments) -> float:
    """Total complex noise variance in mW for a unit-power constellation."""
    if abs(m.mu2 - 1.0) > 1e-9:
        raise ValueError(
            f"moments must come from a unit-power constellation, mu2={m.mu2!r}"
        )
    sigma2 = params.spans * (params.ase_variance_per_span_mw + _per_span_nlin(params, m))
    if not (sigma2 > 0.0):
        raise ConfigError(
            f"nonpositive noise variance {sigma2:.6e}; check NLIN coefficients"
        )
    return float(sigma2)


def effective_snr_db(params: ChannelParams, m: Moments) -> float:
    """10*log10(P / sigma2)."""
    return 10.0 * math.log10(params.launch_power_mw / noise_variance(params, m))


def analytic_optimal_power_mw(params: ChannelParams, m: Moments) -> float:
    """SNR-maximizing launch power (A / 2B)^(1/3) for SNR(P) = P / (A + B P^3).

    A is the accumulated ASE and B the accumulated per-mW^3 NLIN slope at the
    given moments. Requires both positive, otherwise SNR has no interior
    maximum.
    """
    a = params.spans * params.ase_variance_per_span_mw
    c_eff = (
        params.nlin.c0
        + params.nlin.c1 * (m.kappa - 2.0)
        + params.nlin.c2 * (m.kappa3 - 6.0)
    )
    b = params.spans * c_eff
    if a <= 0.0 or b <= 0.0:
        raise ConfigError(
            "SNR has no interior optimum: need positive ASE and positive NLIN slope"
        )
    return (a / (2.0 * b)) ** (1.0 / 3.0)


def sample(
    x: np.ndarray,
    sigma2: float,
    rng: np.random.Generator,
    launch_power_mw: float = 1.0,
) -> np.ndarray:
    """Draw y = sqrt(P) * x + n with n circular complex Gaussian of variance sigma2.

    Deterministic given the generator state: the real parts are drawn first
    for the whole batch, then the imaginary parts.
    """
    if not (sigma2 > 0.0):
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    x = np.asarray(x, dtype=np.complex128)
    scale = math.sqrt(sigma2 / 2.0)
    noise = scale * (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape))
    return math.sqrt(launch_power_mw) * x + noise
