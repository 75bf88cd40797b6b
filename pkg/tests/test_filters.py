import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lite_tsc import filters as F
from oracles import conv1d_naive


@pytest.fixture(scope="module")
def bank():
    return F.make_bank()


class TestBuilders:
    def test_increase_two(self):
        np.testing.assert_array_equal(F.make_increase_filter(2), [-1, 1])

    def test_increase_ramp_response(self):
        assert float(F.make_increase_filter(4) @ np.arange(4.0)) == 2

    def test_decrease_two(self):
        np.testing.assert_array_equal(F.make_decrease_filter(2), [1, -1])

    def test_decrease_ramp_response(self):
        assert float(F.make_decrease_filter(4) @ np.array([3.0, 2, 1, 0])) == 2

    def test_peak_six(self):
        np.testing.assert_array_equal(F.make_peak_filter(6), [-1, -1, 2, 2, -1, -1])

    def test_peak_twelve_layout(self):
        l = np.array([0.25, 1.0])  # ((i+1)/2)^2
        expected = np.concatenate([-l, -l[::-1], 2 * l, 2 * l[::-1], -l, -l[::-1]])
        np.testing.assert_allclose(F.make_peak_filter(12), expected)

    @pytest.mark.parametrize("k", [0, 3, -2])
    def test_increase_rejects_bad_size(self, k):
        with pytest.raises(ValueError):
            F.make_increase_filter(k)

    @pytest.mark.parametrize("k", [0, 4, 9])
    def test_peak_rejects_bad_size(self, k):
        with pytest.raises(ValueError):
            F.make_peak_filter(k)

    def test_peak_prefers_bump_over_constant(self):
        k = 24
        w = F.make_peak_filter(k)
        t = np.arange(k)
        bump = 1 - np.abs(t - (k - 1) / 2) / (k / 2)
        assert float(w @ np.full(k, 3.7)) == pytest.approx(0.0, abs=1e-5)
        assert float(w @ bump) > 0


class TestBank:
    def test_cardinality_and_sizes(self, bank):
        assert len(bank) == 17
        assert bank.sizes == {"increase": (2, 4, 8, 16, 32, 64), "decrease": (2, 4, 8, 16, 32, 64),
                              "peak": (6, 12, 24, 48, 96)}

    def test_all_zero_sum(self, bank):
        for kernel in bank.kernels:
            assert abs(float(kernel.coefficients.astype(np.float64).sum())) < 1e-5, (kernel.kind, kernel.size)

    def test_decrease_is_negated_increase(self, bank):
        inc = {k.size: k.coefficients for k in bank.kernels if k.kind == "increase"}
        for k in bank.kernels:
            if k.kind == "decrease":
                np.testing.assert_array_equal(k.coefficients, -inc[k.size])

    def test_peaks_palindromic_with_positive_centre(self, bank):
        for k in bank.kernels:
            if k.kind == "peak":
                np.testing.assert_array_equal(k.coefficients, k.coefficients[::-1])
                assert k.coefficients[k.size // 2] > 0 and k.coefficients[0] < 0

    def test_coefficients_frozen(self, bank):
        with pytest.raises(ValueError):
            bank.kernels[0].coefficients[0] = 5.0

    @settings(max_examples=40, deadline=None)
    @given(slope=st.floats(0.01, 10), offset=st.floats(-5, 5), n=st.integers(64, 90))
    def test_sign_property(self, bank, slope, offset, n):
        x = offset + slope * np.arange(n, dtype=np.float64)
        for kernel in bank.kernels:
            if kernel.kind == "peak":
                continue
            w = kernel.coefficients.astype(np.float64)
            valid_up = np.correlate(x, w, mode="valid")
            valid_down = np.correlate(x[::-1], w, mode="valid")
            sign = 1 if kernel.kind == "increase" else -1
            assert (sign * valid_up > 0).all()
            assert (sign * valid_down < 0).all()


class TestApply:
    def test_univariate_shape(self, bank, rng):
        assert F.apply_bank(rng.normal(size=(2, 1, 50)).astype(np.float32), bank).shape == (2, 17, 50)

    def test_multivariate_shape(self, bank, rng):
        out = F.apply_bank(rng.normal(size=(2, 3, 50)).astype(np.float32), bank, multivariate_mode=True)
        assert out.shape == (2, 51, 50)

    def test_constant_input_on_zero_sum_kernel(self):
        small = F.FilterBank((F.Kernel("increase", 2, F.make_increase_filter(2)),))
        out = F.apply_bank(np.full((1, 1, 9), 4.0, np.float32), small)
        # zero-sum kernels cancel constants wherever no padding is read; the
        # last sample sees one padded zero on the right
        np.testing.assert_array_equal(out[..., :-1], 0)
        assert out[0, 0, -1] == -4.0

    def test_empty_bank_rejected(self):
        with pytest.raises(ValueError):
            F.apply_bank(np.zeros((1, 1, 4), np.float32), F.FilterBank(()))

    def test_matches_per_kernel_same_padding(self, bank, rng):
        x = rng.normal(size=(2, 2, 40))
        out = F.apply_bank(x, bank)
        for i, kernel in enumerate(bank.kernels):
            w = np.broadcast_to(kernel.coefficients.astype(np.float64), (1, 2, kernel.size))
            np.testing.assert_allclose(out[:, i], conv1d_naive(x, w)[:, 0], atol=1e-9)

    def test_multivariate_channel_major(self, bank, rng):
        x = rng.normal(size=(1, 3, 30))
        out = F.apply_bank(x, bank, multivariate_mode=True)
        for c in range(3):
            np.testing.assert_allclose(out[:, 17 * c : 17 * (c + 1)], F.apply_bank(x[:, c : c + 1], bank), atol=1e-12)


class TestCsv:
    def test_dump_has_header_and_17_rows(self, bank):
        rows = list(csv.reader(io.StringIO(F.bank_to_csv(bank))))
        assert rows[0] == ["kind", "size", "coefficients"]
        assert len(rows) == 18
        for kind, size, coeffs in rows[1:]:
            assert len(coeffs.split()) == int(size)
