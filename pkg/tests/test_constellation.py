"""Tests for constellation geometry, moments, labelings and file I/O."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gshape.constellation import (
    Constellation,
    Pmf,
    bit_table,
    gray_penalty,
    maxwell_boltzmann,
    moments,
    normalize_power,
    optimize_mb,
    read_constellation,
    square_qam,
    validate_geometry,
    write_constellation,
)
from gshape.channel import ChannelParams
from gshape.errors import DegenerateInputError, ParseError, UnsupportedOrderError

QPSK_RAW = np.array([-1 - 1j, -1 + 1j, 1 - 1j, 1 + 1j])


def random_constellation(rng: np.random.Generator, order: int) -> Constellation:
    pts = rng.standard_normal(order) + 1j * rng.standard_normal(order)
    return normalize_power(Constellation(pts))


class TestConstruction:
    def test_rejects_non_power_of_two(self):
        with pytest.raises(UnsupportedOrderError):
            Constellation(np.arange(3) + 0j)

    def test_rejects_single_point(self):
        with pytest.raises(UnsupportedOrderError):
            Constellation(np.array([1 + 0j]))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Constellation(np.array([1 + 0j, np.nan + 0j]))

    def test_points_read_only(self):
        c = square_qam(4)
        with pytest.raises(ValueError):
            c.points[0] = 0.0

    def test_bit_table_msb_first(self):
        table = bit_table(8)
        assert table.shape == (8, 3)
        np.testing.assert_array_equal(table[5], [1, 0, 1])
        np.testing.assert_array_equal(table[0], [0, 0, 0])


class TestNormalizePower:
    def test_unit_qpsk_unchanged(self):
        c = Constellation(QPSK_RAW / math.sqrt(2.0))
        out = normalize_power(c)
        assert out is c

    def test_qpsk_scaled_by_inverse_sqrt2(self):
        out = normalize_power(Constellation(QPSK_RAW))
        np.testing.assert_allclose(out.points, QPSK_RAW / math.sqrt(2.0), rtol=1e-15)

    def test_16qam_scale_from_enumeration(self):
        # energy oracle: mean over the raw {+-1,+-3}^2 grid
        axis = np.array([-3.0, -1.0, 1.0, 3.0])
        grid = (axis[:, None] + 1j * axis[None, :]).ravel()
        assert np.mean(grid.real**2 + grid.imag**2) == 10.0
        out = normalize_power(Constellation(grid))
        np.testing.assert_allclose(out.points, grid / math.sqrt(10.0), rtol=1e-15)

    def test_zero_power_rejected(self):
        with pytest.raises(DegenerateInputError):
            normalize_power(Constellation(np.zeros(4, dtype=complex)))

    def test_respects_pmf(self):
        c = Constellation(np.array([1 + 0j, 2 + 0j]))
        p = Pmf(np.array([0.75, 0.25]))
        out = normalize_power(c, p)
        power = float(np.sum(p.probs * np.abs(out.points) ** 2))
        assert abs(power - 1.0) <= 1e-12


class TestMoments:
    def test_qpsk_constant_modulus(self):
        m = moments(square_qam(4))
        assert m.kappa == pytest.approx(1.0, abs=1e-12)
        assert m.kappa3 == pytest.approx(1.0, abs=1e-12)

    def test_16qam_enumeration(self):
        # energies {0.2, 1.0, 1.8} with multiplicities (4, 8, 4)
        m = moments(square_qam(16))
        assert m.mu2 == pytest.approx(1.0, abs=1e-12)
        assert m.kappa == pytest.approx(1.32, abs=1e-12)
        assert m.kappa3 == pytest.approx(1.96, abs=1e-12)

    def test_scaling_covariance(self):
        c = square_qam(16)
        scaled = Constellation(2.0 * c.points)
        m0, m1 = moments(c), moments(scaled)
        assert m1.mu2 == pytest.approx(4.0 * m0.mu2, rel=1e-14)
        assert m1.kappa == pytest.approx(m0.kappa, rel=1e-14)
        assert m1.kappa3 == pytest.approx(m0.kappa3, rel=1e-14)

    def test_complex_gaussian_limit(self):
        rng = np.random.default_rng(2024)
        n = 1 << 20
        pts = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)
        m = moments(Constellation(pts))
        assert m.kappa == pytest.approx(2.0, rel=0.02)
        assert m.kappa3 == pytest.approx(6.0, rel=0.02)


class TestSquareQam:
    @pytest.mark.parametrize("order", [4, 16, 64, 256, 1024])
    def test_unit_power_and_gray(self, order):
        c = square_qam(order)
        assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0, abs=1e-12)
        assert gray_penalty(c) == 1.0

    def test_qpsk_adjacent_labels_differ_in_one_bit(self):
        c = square_qam(4)
        pts = c.points
        for i in range(4):
            d = np.abs(pts - pts[i])
            d[i] = np.inf
            for j in np.flatnonzero(d <= d.min() * (1 + 1e-9)):
                assert bin(i ^ j).count("1") == 1

    def test_256qam_kappa_from_enumeration(self):
        # direct enumeration over {+-1..+-15}^2: kappa = 40324 / 28900
        m = moments(square_qam(256))
        assert m.kappa == pytest.approx(40324.0 / 28900.0, rel=1e-12)
        assert m.kappa == pytest.approx(1.3953, abs=5e-5)

    @pytest.mark.parametrize("order", [2, 8, 32, 12, 100])
    def test_unsupported_orders(self, order):
        with pytest.raises(UnsupportedOrderError):
            square_qam(order)


class TestGrayPenalty:
    def test_anti_gray_qpsk_above_one(self):
        # neighbors along one axis differ in both bits
        pts = np.array([-1 - 1j, 1 + 1j, 1 - 1j, -1 + 1j]) / math.sqrt(2.0)
        assert gray_penalty(Constellation(pts)) > 1.0

    def test_coincident_points_rejected(self):
        pts = np.array([1 + 1j, 1 + 1j, -1 - 1j, -1 + 1j])
        with pytest.raises(DegenerateInputError):
            gray_penalty(Constellation(pts))

    def test_tied_neighbors_averaged(self):
        # labels 0..3 on a square: each point has two equidistant neighbors
        pts = np.array([1 + 0j, 0 + 1j, -1 + 0j, 0 - 1j])
        penalty = gray_penalty(Constellation(pts))
        # neighbor label pairs: (0,1),(0,3),(1,2),(2,3) -> hamming 1,2,2,1 mixed
        expected = np.mean([(1 + 2) / 2, (1 + 2) / 2, (2 + 1) / 2, (2 + 1) / 2])
        assert penalty == pytest.approx(expected, abs=1e-12)


class TestMaxwellBoltzmann:
    def test_zero_nu_uniform(self):
        p = maxwell_boltzmann(square_qam(16), 0.0)
        np.testing.assert_allclose(p.probs, np.full(16, 1 / 16), rtol=1e-15)

    def test_large_nu_concentrates_on_low_energy(self):
        c = square_qam(16)
        p = maxwell_boltzmann(c, 500.0)
        e = np.abs(c.points) ** 2
        low = e <= e.min() * (1 + 1e-9)
        assert low.sum() == 4
        np.testing.assert_allclose(p.probs[low], 0.25, atol=1e-12)
        assert p.probs[~low].max() < 1e-12

    def test_small_nu_entropy_below_uniform(self):
        p = maxwell_boltzmann(square_qam(16), 0.1)
        assert p.entropy_bits() < 4.0

    def test_entropy_nonincreasing_in_nu(self):
        c = square_qam(64)
        grid = np.linspace(0.0, 4.0, 30)
        entropies = [maxwell_boltzmann(c, nu).entropy_bits() for nu in grid]
        assert all(a >= b - 1e-12 for a, b in zip(entropies, entropies[1:]))

    def test_negative_nu_rejected(self):
        with pytest.raises(ValueError):
            maxwell_boltzmann(square_qam(4), -0.5)


class TestOptimizeMb:
    def test_high_snr_prefers_uniform(self):
        channel = ChannelParams.awgn(25.0)
        nu, pmf = optimize_mb(square_qam(16), channel, [0.0, 0.5, 1.0, 2.0],
                              n_samples=20000, seed=11)
        assert nu == 0.0
        np.testing.assert_allclose(pmf.probs, 1 / 16, rtol=1e-12)

    def test_huge_noise_ties_to_smallest_nu(self):
        channel = ChannelParams.awgn(-400.0)  # sigma2 ~ 1e40: estimates all exactly 0
        nu, _ = optimize_mb(square_qam(16), channel, [0.25, 0.5, 1.0],
                            n_samples=10000, seed=3)
        assert nu == 0.25

    def test_argmax_dominates_uniform(self):
        channel = ChannelParams.awgn(8.0)
        from gshape.infometrics import AuxChannel, mi_mc
        from gshape.channel import noise_variance

        c = square_qam(16)
        grid = [0.0, 0.25, 0.5, 1.0]
        nu, pmf = optimize_mb(c, channel, grid, n_samples=20000, seed=5)

        def shaped_mi(nu_val):
            p = maxwell_boltzmann(c, nu_val)
            shaped = normalize_power(c, p)
            aux = AuxChannel(noise_variance(channel, moments(shaped, p)),
                             channel.launch_power_mw)
            mi, _ = mi_mc(shaped, p, aux, 20000, np.random.default_rng(5))
            return mi

        assert shaped_mi(nu) >= shaped_mi(0.0)


class TestFileIO:
    def test_round_trip_bit_for_bit(self, tmp_path):
        c = square_qam(16)
        path = tmp_path / "qam16.txt"
        write_constellation(c, path)
        back = read_constellation(path)
        np.testing.assert_array_equal(back.points, c.points)

    def test_point_count_mismatch(self, tmp_path):
        path = tmp_path / "bad.txt"
        lines = ["GSHAPE v1 M=16"] + ["0.1 0.2"] * 15
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError):
            read_constellation(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("GSHAPE v2 M=4\n0 0\n0 1\n1 0\n1 1\n")
        with pytest.raises(ParseError, match="header"):
            read_constellation(path)

    def test_non_power_of_two_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("GSHAPE v1 M=6\n" + "0 1\n" * 6)
        with pytest.raises(ParseError):
            read_constellation(path)

    def test_duplicates_parse_but_fail_validation(self, tmp_path):
        path = tmp_path / "dup.txt"
        path.write_text("GSHAPE v1 M=4\n1 1\n1 1\n-1 1\n-1 -1\n")
        c = read_constellation(path)
        assert c.order == 4
        with pytest.raises(DegenerateInputError):
            validate_geometry(c)

    def test_trailing_comments_allowed(self, tmp_path):
        path = tmp_path / "c.txt"
        write_constellation(square_qam(4), path)
        with path.open("a") as handle:
            handle.write("# generated for a unit test\n\n")
        assert read_constellation(path).order == 4

    def test_trailing_garbage_rejected(self, tmp_path):
        path = tmp_path / "c.txt"
        write_constellation(square_qam(4), path)
        with path.open("a") as handle:
            handle.write("0.5 0.5\n")
        with pytest.raises(ParseError, match="trailing"):
            read_constellation(path)

    def test_bad_float_reports_line(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("GSHAPE v1 M=2\n0.0 0.0\nx y\n")
        with pytest.raises(ParseError, match=":3:"):
            read_constellation(path)


@st.composite
def constellations(draw):
    order = draw(st.sampled_from([2, 4, 8, 16, 32]))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal(order) + 1j * rng.standard_normal(order)
    return Constellation(pts)


class TestProperties:
    @given(constellations(), st.floats(0.01, 100.0))
    def test_moments_scale_covariant(self, c, scale):
        base = moments(c)
        scaled = moments(Constellation(scale * c.points))
        assert scaled.mu2 == pytest.approx(scale**2 * base.mu2, rel=1e-10)
        assert scaled.kappa == pytest.approx(base.kappa, rel=1e-10)
        assert scaled.kappa3 == pytest.approx(base.kappa3, rel=1e-10)

    @given(constellations())
    def test_jensen_bounds(self, c):
        m = moments(c)
        assert m.kappa >= 1.0 - 1e-9
        assert m.kappa3 >= 1.0 - 1e-9

    @given(constellations())
    def test_normalize_idempotent(self, c):
        once = normalize_power(c)
        twice = normalize_power(once)
        assert twice is once

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=30)
    def test_round_trip_random(self, tmp_path_factory, seed):
        rng = np.random.default_rng(seed)
        c = Constellation(1e3 * (rng.standard_normal(8) + 1j * rng.standard_normal(8)))
        path = tmp_path_factory.mktemp("io") / "c.txt"
        write_constellation(c, path)
        np.testing.assert_array_equal(read_constellation(path).points, c.points)
