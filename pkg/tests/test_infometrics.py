"""Tests for the MI/GMI estimators, LLRs and the quadrature oracle."""

import math

import numpy as np
import pytest

from gshape.channel import ChannelParams, noise_variance
from gshape.constellation import Constellation, Pmf, moments, normalize_power, square_qam
from gshape.errors import UnsupportedOrderError
from gshape.infometrics import (
    AuxChannel,
    MetricsReport,
    evaluate,
    gmi_mc,
    llrs,
    mi_mc,
    mi_quadrature_oracle,
)

BPSK = Constellation(np.array([-1.0 + 0j, 1.0 + 0j]))  # bit 1 <-> +1


def aux_at_snr_db(snr_db: float) -> AuxChannel:
    return AuxChannel(sigma2_mw=10.0 ** (-snr_db / 10.0), launch_power_mw=1.0)


def random_labeled_constellation(rng: np.random.Generator, order: int) -> Constellation:
    pts = rng.standard_normal(order) + 1j * rng.standard_normal(order)
    return normalize_power(Constellation(pts))


class TestLlrs:
    def test_bpsk_algebra(self):
        out = llrs(np.array([1.0 + 0j]), BPSK, AuxChannel(2.0, 1.0))
        assert out.shape == (1, 1)
        assert out[0, 0] == pytest.approx(2.0, abs=1e-12)

    def test_bpsk_closed_form_random_points(self):
        rng = np.random.default_rng(3)
        y = rng.standard_normal(50) + 1j * rng.standard_normal(50)
        sigma2 = 0.7
        out = llrs(y, BPSK, AuxChannel(sigma2, 1.0))
        np.testing.assert_allclose(out[:, 0], 4.0 * y.real / sigma2, rtol=1e-12)

    def test_origin_gives_zero_on_balanced_labelings(self):
        # QPSK bits select axis signs, so both point sets mirror at the origin
        out = llrs(np.array([0j]), square_qam(4), aux_at_snr_db(10.0))
        np.testing.assert_allclose(out, 0.0, atol=1e-12)
        # on 16QAM only the per-axis sign bits (0 and 2) are balanced
        out16 = llrs(np.array([0j]), square_qam(16), aux_at_snr_db(10.0))
        np.testing.assert_allclose(out16[:, [0, 2]], 0.0, atol=1e-12)
        assert np.all(np.abs(out16[:, [1, 3]]) > 0.1)

    def test_gray_qpsk_separates_axes(self):
        c = square_qam(4)
        aux = aux_at_snr_db(6.0)
        y = np.array([0.4 - 0.2j])
        shifted = np.array([0.4 + 0.9j])
        a = llrs(y, c, aux)
        b = llrs(shifted, c, aux)
        # first bit selects the in-phase axis: invariant to imaginary shifts
        assert a[0, 0] == pytest.approx(b[0, 0], abs=1e-12)
        assert a[0, 1] != pytest.approx(b[0, 1], abs=1e-6)

    def test_label_mirror_flips_sign(self):
        rng = np.random.default_rng(8)
        c = random_labeled_constellation(rng, 16)
        # complement bit 0: swap points between label b and label b ^ 0b1000
        perm = np.arange(16) ^ 0b1000
        mirrored = Constellation(c.points[perm])
        aux = aux_at_snr_db(5.0)
        y = rng.standard_normal(20) + 1j * rng.standard_normal(20)
        a = llrs(y, c, aux)
        b = llrs(y, mirrored, aux)
        np.testing.assert_allclose(b[:, 0], -a[:, 0], rtol=1e-10)

    def test_max_log_close_at_high_snr(self):
        c = square_qam(16)
        aux = aux_at_snr_db(25.0)
        y = c.points + 0.01
        exact = llrs(y, c, aux)
        approx = llrs(y, c, aux, max_log=True)
        np.testing.assert_allclose(approx, exact, rtol=1e-3, atol=1e-2)


class TestGmiMc:
    def test_noiseless_limit(self):
        gmi, _ = gmi_mc(square_qam(4), aux_at_snr_db(30.0), 20_000, np.random.default_rng(0))
        assert gmi == pytest.approx(2.0, abs=1e-3)

    def test_huge_noise_limit(self):
        gmi, _ = gmi_mc(square_qam(4), aux_at_snr_db(-40.0), 20_000, np.random.default_rng(1))
        assert gmi <= 0.01

    def test_gray_qpsk_matches_oracle_mi(self):
        # Gray QPSK factorizes into independent BPSK axes, so GMI equals MI
        c = square_qam(4)
        aux = aux_at_snr_db(0.0)
        gmi, stderr = gmi_mc(c, aux, 1_000_000, np.random.default_rng(2))
        oracle = mi_quadrature_oracle(c, Pmf.uniform(4), aux)
        assert abs(gmi - oracle) <= 0.005

    def test_determinism(self):
        c = square_qam(16)
        aux = aux_at_snr_db(8.0)
        a = gmi_mc(c, aux, 50_000, np.random.default_rng(5))
        b = gmi_mc(c, aux, 50_000, np.random.default_rng(5))
        assert a == b

    def test_minimum_samples_enforced(self):
        with pytest.raises(ValueError):
            gmi_mc(square_qam(4), aux_at_snr_db(10.0), 100, np.random.default_rng(0))


class TestMiMc:
    def test_qpsk_high_snr(self):
        mi, _ = mi_mc(square_qam(4), Pmf.uniform(4), aux_at_snr_db(30.0),
                      20_000, np.random.default_rng(0))
        assert mi == pytest.approx(2.0, abs=1e-3)

    def test_point_mass_gives_zero(self):
        pmf = Pmf(np.array([1.0, 0.0, 0.0, 0.0]))
        mi, stderr = mi_mc(square_qam(4), pmf, aux_at_snr_db(10.0),
                           20_000, np.random.default_rng(1))
        assert mi == 0.0
        assert stderr == 0.0

    def test_matches_oracle_16qam(self):
        c = square_qam(16)
        aux = aux_at_snr_db(10.0)
        mi, stderr = mi_mc(c, Pmf.uniform(16), aux, 200_000, np.random.default_rng(2))
        oracle = mi_quadrature_oracle(c, Pmf.uniform(16), aux)
        assert abs(mi - oracle) <= max(3.0 * stderr, 1e-3)

    def test_shaped_pmf_supported(self):
        c = square_qam(16)
        probs = np.exp(-0.8 * np.abs(c.points) ** 2)
        pmf = Pmf(probs / probs.sum())
        shaped = normalize_power(c, pmf)
        aux = aux_at_snr_db(8.0)
        mi, stderr = mi_mc(shaped, pmf, aux, 100_000, np.random.default_rng(3))
        oracle = mi_quadrature_oracle(shaped, pmf, aux)
        assert abs(mi - oracle) <= max(3.0 * stderr, 1e-3)

    def test_relabeling_invariance_exact(self):
        rng = np.random.default_rng(4)
        c = random_labeled_constellation(rng, 16)
        perm = np.random.default_rng(5).permutation(16)
        relabeled = Constellation(c.points[perm])
        aux = aux_at_snr_db(7.0)
        a = mi_mc(c, Pmf.uniform(16), aux, 20_000, np.random.default_rng(6))
        b = mi_mc(relabeled, Pmf.uniform(16), aux, 20_000, np.random.default_rng(6))
        assert a == b

    def test_relabeling_changes_gmi(self):
        c = square_qam(16)
        swapped = c.points.copy()
        swapped[[0, 5]] = swapped[[5, 0]]
        aux = aux_at_snr_db(7.0)
        a, _ = gmi_mc(c, aux, 50_000, np.random.default_rng(7))
        b, _ = gmi_mc(Constellation(swapped), aux, 50_000, np.random.default_rng(7))
        assert abs(a - b) > 0.01


class TestQuadratureOracle:
    def test_entropy_bound(self):
        for order in (4, 16, 64):
            mi = mi_quadrature_oracle(square_qam(order), Pmf.uniform(order), aux_at_snr_db(12.0))
            assert 0.0 <= mi <= math.log2(order)

    def test_capacity_bound(self):
        for snr_db in (0.0, 5.0, 10.0, 15.0):
            mi = mi_quadrature_oracle(square_qam(16), Pmf.uniform(16), aux_at_snr_db(snr_db))
            capacity = math.log2(1.0 + 10.0 ** (snr_db / 10.0))
            assert mi <= capacity + 0.01

    def test_agrees_with_mc_across_snr_grid(self):
        c = square_qam(4)
        pmf = Pmf.uniform(4)
        for snr_db in (-5.0, 0.0, 5.0, 10.0, 15.0):
            aux = aux_at_snr_db(snr_db)
            mi, stderr = mi_mc(c, pmf, aux, 100_000, np.random.default_rng(int(snr_db) + 50))
            oracle = mi_quadrature_oracle(c, pmf, aux)
            assert abs(mi - oracle) <= 3.0 * max(stderr, 1e-4)

    def test_order_guard(self):
        with pytest.raises(UnsupportedOrderError):
            mi_quadrature_oracle(square_qam(256), Pmf.uniform(256), aux_at_snr_db(10.0))

    def test_node_floor(self):
        with pytest.raises(ValueError):
            mi_quadrature_oracle(square_qam(4), Pmf.uniform(4), aux_at_snr_db(10.0),
                                 nodes_per_axis=10)


class TestEvaluate:
    def make_channel(self) -> ChannelParams:
        return ChannelParams.awgn(9.0)

    def test_deterministic(self):
        c = square_qam(16)
        a = evaluate(c, self.make_channel(), 20_000, seed=42)
        b = evaluate(c, self.make_channel(), 20_000, seed=42)
        assert a == b

    def test_gmi_bounded_by_mi(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            c = random_labeled_constellation(rng, 16)
            report = evaluate(c, self.make_channel(), 20_000, seed=int(rng.integers(1 << 31)))
            assert report.gmi_bits <= report.mi_bits + 3.0 * report.mc_std_error_bits

    def test_report_fields_and_csv(self):
        report = evaluate(square_qam(16), self.make_channel(), 20_000, seed=7)
        assert report.m == 4
        assert report.samples_used == 20_000
        assert report.gray_penalty == 1.0
        row = report.csv_row()
        assert row.startswith("4,")
        assert len(row.split(",")) == len(MetricsReport.CSV_HEADER.split(","))

    def test_matched_variance_wiring(self):
        c = square_qam(16)
        channel = ChannelParams.awgn(9.0)
        report = evaluate(c, channel, 20_000, seed=3)
        aux = AuxChannel(noise_variance(channel, moments(c)), channel.launch_power_mw)
        mi, _ = mi_mc(c, Pmf.uniform(16), aux, 20_000, np.random.default_rng(3))
        assert report.mi_bits == mi
