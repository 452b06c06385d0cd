"""Labeled complex constellations: geometry, moments, labelings, baselines, file I/O.

A constellation of order ``M`` (a power of two) is an ordered array of ``M``
complex points. Point ``i`` carries the bit word given by the
``m = log2(M)``-bit binary expansion of ``i``, MSB first, so a relabeling is a
permutation of the point array and no separate label table is stored.
Probability mass functions over the points default to uniform.
"""

from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateInputError, ParseError, UnsupportedOrderError

#: Smallest allowed pairwise distance, relative to the RMS point magnitude.
MIN_RELATIVE_DISTANCE = 1e-6

#: Tolerance on unit average power.
UNIT_POWER_TOL = 1e-12

#: Relative distance window inside which nearest neighbors count as tied.
NEIGHBOR_TIE_REL = 1e-9

_SQUARE_ORDERS = (4, 16, 64, 256, 1024)

_FILE_HEADER_RE = re.compile(r"^GSHAPE v1 M=(\d+)\s*$")


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@functools.lru_cache(maxsize=None)
def bit_table(order: int) -> np.ndarray:
    """Return the (M, m) bit words; row ``i`` is the MSB-first expansion of ``i``."""
    m = order.bit_length() - 1
    idx = np.arange(order)
    table = ((idx[:, None] >> np.arange(m - 1, -1, -1)[None, :]) & 1).astype(np.uint8)
    table.setflags(write=False)
    return table


@dataclass(frozen=True, eq=False)
class Constellation:
    """Ordered complex points with the implicit index labeling.

    The constructor checks order and finiteness only; geometric validity
    (distinct points) is checked separately by :func:`validate_geometry` so
    that files can be parsed first and rejected later.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.complex128).copy()
        if pts.ndim != 1:
            raise ValueError("points must be a 1-D sequence of complex values")
        order = pts.shape[0]
        if order < 2 or not is_power_of_two(order):
            raise UnsupportedOrderError(
                f"constellation order must be a power of two >= 2, got {order}"
            )
        if not np.all(np.isfinite(pts)):
            raise ValueError("constellation points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def order(self) -> int:
        return self.points.shape[0]

    @property
    def bits_per_symbol(self) -> int:
        return self.order.bit_length() - 1

    def labels(self) -> np.ndarray:
        """Bit words carried by the points, shape (M, m)."""
        return bit_table(self.order)


@dataclass(frozen=True, eq=False)
class Pmf:
    """Probability mass function over the points of one constellation."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64).copy()
        if p.ndim != 1:
            raise ValueError("probs must be 1-D")
        if np.any(p < 0.0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(float(p.sum()) - 1.0) > UNIT_POWER_TOL:
            raise ValueError(f"probabilities must sum to 1, got {p.sum()!r}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, order: int) -> "Pmf":
        return cls(np.full(order, 1.0 / order))

    @property
    def order(self) -> int:
        return self.probs.shape[0]

    def entropy_bits(self) -> float:
        p = self.probs[self.probs > 0.0]
        return float(-(p * np.log2(p)).sum())


@dataclass(frozen=True)
class Moments:
    """Second-, fourth- and sixth-order magnitude moments of a constellation.

    ``mu2`` is the mean square magnitude in linear power units; ``kappa`` and
    ``kappa3`` are the dimensionless ratios E|x|^4 / mu2^2 and E|x|^6 / mu2^3,
    both >= 1 for any distribution (Jensen), with equality iff constant modulus.
    """

    mu2: float
    kappa: float
    kappa3: float

    def __post_init__(self):
        if not (self.mu2 > 0.0):
            raise ValueError("mu2 must be positive")
        # 1e-9 slack absorbs floating-point rounding on constant-modulus inputs
        if self.kappa < 1.0 - 1e-9 or self.kappa3 < 1.0 - 1e-9:
            raise ValueError("kappa and kappa3 must be >= 1")


def _pmf_or_uniform(c: Constellation, p: Pmf | None) -> Pmf:
    if p is None:
        return Pmf.uniform(c.order)
    if p.order != c.order:
        raise ValueError(f"pmf order {p.order} does not match constellation order {c.order}")
    return p


def validate_geometry(c: Constellation) -> None:
    """Reject constellations with coincident points.

    The threshold is :data:`MIN_RELATIVE_DISTANCE` relative to the RMS point
    magnitude, so degenerate learned shapes cannot silently pass.
    """
    pts = c.points
    rms = math.sqrt(float(np.mean(np.abs(pts) ** 2)))
    if rms == 0.0:
        raise DegenerateInputError("all-zero constellation")
    d = np.abs(pts[:, None] - pts[None, :])
    np.fill_diagonal(d, np.inf)
    dmin = float(d.min())
    if dmin <= MIN_RELATIVE_DISTANCE * rms:
        raise DegenerateInputError(
            f"minimum pairwise distance {dmin:.3e} is below "
            f"{MIN_RELATIVE_DISTANCE:g} x RMS magnitude {rms:.3e}"
        )


def normalize_power(c: Constellation, p: Pmf | None = None) -> Constellation:
    """Scale the points by one positive factor so the average power is 1.

    Already-unit-power inputs (within :data:`UNIT_POWER_TOL`) are returned
    unchanged, which makes the operation exactly idempotent.
    """
    probs = _pmf_or_uniform(c, p).probs
    power = float(np.sum(probs * np.abs(c.points) ** 2))
    if power <= 0.0:
        raise DegenerateInputError("zero average power, cannot normalize")
    if abs(power - 1.0) <= UNIT_POWER_TOL:
        return c
    return Constellation(c.points / math.sqrt(power))


def moments(c: Constellation, p: Pmf | None = None) -> Moments:
    """Magnitude moments of ``c`` under ``p`` (uniform when omitted)."""
    probs = _pmf_or_uniform(c, p).probs
    e = np.abs(c.points) ** 2
    mu2 = float(np.sum(probs * e))
    if mu2 <= 0.0:
        raise DegenerateInputError("zero average power, moments undefined")
    kappa = float(np.sum(probs * e * e)) / mu2**2
    kappa3 = float(np.sum(probs * e * e * e)) / mu2**3
    return Moments(mu2=mu2, kappa=kappa, kappa3=kappa3)


def _gray_decode(codes: np.ndarray) -> np.ndarray:
    """Invert binary-reflected Gray coding (prefix XOR)."""
    n = codes.copy()
    shift = 1
    while shift < 32:
        n ^= n >> shift
        shift <<= 1
    return n


def square_qam(order: int) -> Constellation:
    """Unit-power square QAM grid with per-axis binary-reflected Gray labeling.

    The first m/2 label bits select the in-phase level, the last m/2 the
    quadrature level. Nearest grid neighbors therefore differ in exactly one
    bit.

    Args:
        order: one of 4, 16, 64, 256, 1024.
    """
    if order not in _SQUARE_ORDERS:
        raise UnsupportedOrderError(
            f"square QAM supports orders {_SQUARE_ORDERS}, got {order}"
        )
    m = order.bit_length() - 1
    half = m // 2
    levels = 1 << half
    labels = np.arange(order)
    i_pos = _gray_decode(labels >> half)
    q_pos = _gray_decode(labels & (levels - 1))
    amp_i = 2.0 * i_pos - (levels - 1)
    amp_q = 2.0 * q_pos - (levels - 1)
    return normalize_power(Constellation(amp_i + 1j * amp_q))


def gray_penalty(c: Constellation) -> float:
    """Mean Hamming distance between each point's label and its nearest neighbors'.

    Nearest Euclidean neighbors within a relative distance window of
    :data:`NEIGHBOR_TIE_REL` all count; tied neighbors are averaged. A perfect
    Gray labeling on a square grid measures exactly 1.0.
    """
    validate_geometry(c)
    pts = c.points
    order = c.order
    d = np.abs(pts[:, None] - pts[None, :])
    np.fill_diagonal(d, np.inf)
    dmin = d.min(axis=1)
    tied = d <= dmin[:, None] * (1.0 + NEIGHBOR_TIE_REL)
    idx = np.arange(order)
    xor = idx[:, None] ^ idx[None, :]
    ham = np.zeros_like(xor)
    for k in range(c.bits_per_symbol):
        ham += (xor >> k) & 1
    per_point = (ham * tied).sum(axis=1) / tied.sum(axis=1)
    return float(per_point.mean())


def maxwell_boltzmann(c: Constellation, nu: float) -> Pmf:
    """Maxwell-Boltzmann point probabilities p_i proportional to exp(-nu |x_i|^2).

    Computed against the geometry as given (no renormalization), with the
    minimum energy subtracted in the exponent for numerical stability; the
    shift cancels in the normalization.
    """
    if nu < 0.0:
        raise ValueError(f"nu must be >= 0, got {nu}")
    e = np.abs(c.points) ** 2
    w = np.exp(-nu * (e - e.min()))
    return Pmf(w / w.sum())


def optimize_mb(
    c: Constellation,
    channel,
    nu_grid,
    n_samples: int = 100_000,
    seed: int = 0,
    refine_iters: int = 16,
) -> tuple[float, Pmf]:
    """Pick the Maxwell-Boltzmann shaping exponent maximizing estimated MI.

    Exhaustive scan over ``nu_grid`` followed by one golden-section refinement
    between the neighbors of the best grid point. Every candidate is scored
    with the non-uniform Monte-Carlo MI estimator on the renormalized shaped
    constellation over the surrogate channel, using the same estimator seed
    (common random numbers), so the search is deterministic. Candidates must
    improve by more than 1e-12 bits to win, so estimates that agree to
    floating-point noise count as ties and resolve toward smaller nu.

    Returns:
        (nu, pmf) with pmf = maxwell_boltzmann(c, nu).
    """
    from . import infometrics
    from .channel import noise_variance

    grid = [float(v) for v in nu_grid]
    if not grid:
        raise ValueError("nu_grid must be nonempty")
    if any(v < 0.0 for v in grid):
        raise ValueError("nu values must be >= 0")
    grid = sorted(grid)

    def shaped_mi(nu: float) -> float:
        pmf = maxwell_boltzmann(c, nu)
        shaped = normalize_power(c, pmf)
        sigma2 = noise_variance(channel, moments(shaped, pmf))
        aux = infometrics.AuxChannel(sigma2, channel.launch_power_mw)
        rng = np.random.default_rng(seed)
        mi, _ = infometrics.mi_mc(shaped, pmf, aux, n_samples, rng)
        return mi

    tie_tol = 1e-12
    best_nu = grid[0]
    best_mi = shaped_mi(best_nu)
    for nu in grid[1:]:
        mi = shaped_mi(nu)
        if mi > best_mi + tie_tol:
            best_nu, best_mi = nu, mi

    k = grid.index(best_nu)
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    if hi > lo and refine_iters > 0:
        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        x1 = b - invphi * (b - a)
        x2 = a + invphi * (b - a)
        f1, f2 = shaped_mi(x1), shaped_mi(x2)
        for _ in range(refine_iters):
            if f1 > f2:
                b, x2, f2 = x2, x1, f1
                x1 = b - invphi * (b - a)
                f1 = shaped_mi(x1)
            else:
                a, x1, f1 = x1, x2, f2
                x2 = a + invphi * (b - a)
                f2 = shaped_mi(x2)
        cand, fc = (x1, f1) if f1 >= f2 else (x2, f2)
        if fc > best_mi + tie_tol or (abs(fc - best_mi) <= tie_tol and cand < best_nu):
            best_nu, best_mi = cand, fc

    return best_nu, maxwell_boltzmann(c, best_nu)


def write_constellation(c: Constellation, path) -> None:
    """Write the line-oriented constellation format.

    Line 1 is ``GSHAPE v1 M=<int>``; lines 2..M+1 hold ``<re> <im>`` in label
    order with 17 significant digits, which round-trips float64 exactly.
    """
    path = Path(path)
    lines = [f"GSHAPE v1 M={c.order}"]
    lines.extend(f"{p.real:.17g} {p.imag:.17g}" for p in c.points)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def read_constellation(path) -> Constellation:
    """Parse a constellation file; errors carry file and line context.

    Duplicate points are accepted here and rejected by
    :func:`validate_geometry`.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(path, 0, f"cannot read file: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise ParseError(path, 1, "empty file")
    header = _FILE_HEADER_RE.match(lines[0])
    if header is None:
        raise ParseError(path, 1, f"bad header {lines[0]!r}, expected 'GSHAPE v1 M=<int>'")
    order = int(header.group(1))
    if order < 2 or not is_power_of_two(order):
        raise ParseError(path, 1, f"M={order} is not a power of two >= 2")
    if len(lines) < 1 + order:
        raise ParseError(
            path, len(lines), f"expected {order} point lines, found {len(lines) - 1}"
        )
    pts = np.empty(order, dtype=np.complex128)
    for i in range(order):
        lineno = i + 2
        parts = lines[1 + i].split()
        if len(parts) != 2:
            raise ParseError(path, lineno, f"expected '<re> <im>', got {lines[1 + i]!r}")
        try:
            re_v, im_v = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise ParseError(path, lineno, f"bad float in {lines[1 + i]!r}") from exc
        if not (math.isfinite(re_v) and math.isfinite(im_v)):
            raise ParseError(path, lineno, "points must be finite")
        pts[i] = complex(re_v, im_v)
    for j, line in enumerate(lines[1 + order:], start=order + 2):
        if line.strip() and not line.lstrip().startswith("#"):
            raise ParseError(path, j, f"unexpected trailing content {line!r}")
    return Constellation(pts)
