"""Fixed-point word arithmetic and the quantization-noise model."""
from fractions import Fraction
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fxpnlc import fxp
from fxpnlc.errors import ConfigurationError, InvalidSampleError
from fxpnlc.fxp import ComplexFxp, FxpWord, QuantNoiseModel

bits = st.integers(min_value=4, max_value=32)


@st.composite
def words(draw, B=None):
    B = draw(bits) if B is None else B
    lo, hi = fxp.raw_limits(B)
    return FxpWord(draw(st.integers(lo, hi)), B)


@st.composite
def word_pairs(draw):
    B = draw(bits)
    return draw(words(B)), draw(words(B))


@st.composite
def word_quads(draw):
    B = draw(bits)
    return tuple(draw(words(B)) for _ in range(4))


def _oracle_round(frac: Fraction, B: int) -> int:
    """Exact rational round-half-away then saturate."""
    t = frac * (1 << (B - 1))
    mag = math.floor(abs(t) + Fraction(1, 2))
    r = mag if t >= 0 else -mag
    lo, hi = fxp.raw_limits(B)
    return max(lo, min(hi, r))


class TestQuantize:
    def test_exact_value(self):
        w = fxp.quantize(0.5, 3)
        assert (w.raw, w.value) == (2, 0.5)

    def test_positive_saturation(self):
        assert fxp.quantize(0.999, 3).value == 0.75

    def test_negative_saturation(self):
        assert fxp.quantize(-1.37, 8).value == -1.0

    def test_huge_inputs_saturate(self):
        assert fxp.quantize(1e300, 12) == FxpWord.max_value(12)
        assert fxp.quantize(-1e300, 12) == FxpWord.min_value(12)

    @pytest.mark.parametrize("x", [math.nan, math.inf, -math.inf])
    def test_non_finite_rejected(self, x):
        with pytest.raises(InvalidSampleError):
            fxp.quantize(x, 8)

    @pytest.mark.parametrize("B", [1, 33, 8.0, True])
    def test_bad_bit_depth(self, B):
        with pytest.raises(ConfigurationError):
            fxp.quantize(0.1, B)

    def test_ties_round_away_from_zero(self):
        half_lsb = fxp.lsb(8) / 2
        assert fxp.quantize(half_lsb, 8).raw == 1
        assert fxp.quantize(-half_lsb, 8).raw == -1
        assert fxp.quantize(3 * half_lsb, 8).raw == 2

    def test_error_zero_centred(self):
        x = np.random.default_rng(3).uniform(-0.9, 0.9, 200_000)
        err = x - fxp.dequantize_raw(fxp.quantize_raw(x, 10), 10)
        assert abs(err.mean()) < 0.01 * fxp.lsb(10)
        assert np.max(np.abs(err)) <= fxp.lsb(10) / 2

    @given(words())
    def test_round_trip(self, w):
        assert fxp.quantize(w.value, w.bit_depth) == w

    @given(bits, st.floats(-3, 3), st.floats(-3, 3))
    def test_monotone(self, B, x, y):
        x, y = min(x, y), max(x, y)
        assert fxp.quantize(x, B).raw <= fxp.quantize(y, B).raw

    @given(bits, st.floats(-1e6, 1e6))
    def test_range(self, B, x):
        v = fxp.quantize(x, B).value
        assert -1 <= v < 1


class TestWord:
    def test_raw_out_of_range(self):
        with pytest.raises(ConfigurationError):
            FxpWord(128, 8)

    def test_limits(self):
        assert FxpWord.max_value(8).value == 127 / 128
        assert FxpWord.min_value(8).value == -1.0

    def test_complex_depth_mismatch(self):
        with pytest.raises(ConfigurationError):
            ComplexFxp(FxpWord(1, 8), FxpWord(1, 9))


class TestAdd:
    def test_exact(self):
        s = fxp.fxp_add(fxp.quantize(0.25, 8), fxp.quantize(0.5, 8))
        assert s.value == 0.75

    def test_saturates(self):
        s = fxp.fxp_add(fxp.quantize(0.75, 8), fxp.quantize(0.75, 8))
        assert s.value == 127 / 128

    def test_mismatch(self):
        with pytest.raises(ConfigurationError):
            fxp.fxp_add(FxpWord(1, 8), FxpWord(1, 9))

    @given(words())
    def test_zero_identity(self, w):
        assert fxp.fxp_add(w, FxpWord(0, w.bit_depth)) == w

    @given(word_pairs())
    def test_saturating_sum(self, ab):
        a, b = ab
        lo, hi = fxp.raw_limits(a.bit_depth)
        assert fxp.fxp_add(a, b).raw == max(lo, min(hi, a.raw + b.raw))
        assert fxp.fxp_sub(a, b).raw == max(lo, min(hi, a.raw - b.raw))


class TestMul:
    def test_exact(self):
        assert fxp.fxp_mul(fxp.quantize(0.5, 8), fxp.quantize(0.5, 8)).value == 0.25

    def test_minus_one_squared_saturates(self):
        m = FxpWord.min_value(8)
        assert fxp.fxp_mul(m, m).value == 127 / 128

    def test_rounded_product(self):
        a = FxpWord(13, 8)
        assert a.value == 0.1015625
        assert fxp.fxp_mul(a, a).value == 1 / 128

    def test_mismatch(self):
        with pytest.raises(ConfigurationError):
            fxp.fxp_mul(FxpWord(1, 8), FxpWord(1, 9))

    @given(word_pairs())
    def test_matches_exact_rational(self, ab):
        a, b = ab
        B = a.bit_depth
        exact = Fraction(a.raw * b.raw, 1 << (2 * B - 2))
        assert fxp.fxp_mul(a, b).raw == _oracle_round(exact, B)

    @given(word_pairs())
    def test_magnitude_non_expansion(self, ab):
        a, b = ab
        p = fxp.fxp_mul(a, b)
        assert abs(p.value) <= min(abs(a.value), abs(b.value)) + fxp.lsb(a.bit_depth)
        assert p.raw <= fxp.raw_limits(a.bit_depth)[1]

    @given(word_pairs())
    def test_only_minus_one_squared_overflows(self, ab):
        a, b = ab
        lo, _ = fxp.raw_limits(a.bit_depth)
        exact = Fraction(a.raw * b.raw, 1 << (2 * a.bit_depth - 2))
        if exact >= 1:
            assert a.raw == b.raw == lo


class TestComplexMul:
    def test_by_unity(self):
        B = 12
        rng = np.random.default_rng(0)
        one = ComplexFxp(FxpWord.max_value(B), FxpWord(0, B))
        for z in rng.uniform(-1, 1, (50, 2)):
            a = ComplexFxp.from_complex(complex(*z), B)
            p = fxp.complex_mul(a, one)
            assert abs(p.re.raw - a.re.raw) <= 1 and abs(p.im.raw - a.im.raw) <= 1

    def test_exact_case(self):
        B = 12
        a = ComplexFxp.from_complex(0.5 + 0.5j, B)
        b = ComplexFxp.from_complex(0.5 - 0.5j, B)
        assert fxp.complex_mul(a, b).value == 0.5 + 0j

    def test_random_vs_double(self):
        B = 16
        rng = np.random.default_rng(1)
        z = rng.uniform(-0.7, 0.7, (2000, 4))
        ar, ai, br, bi = (fxp.quantize_raw(z[:, i], B) for i in range(4))
        re, im = fxp.cmul_raw(ar, ai, br, bi, B)
        a = fxp.dequantize_complex_raw(ar, ai, B)
        b = fxp.dequantize_complex_raw(br, bi, B)
        got = fxp.dequantize_complex_raw(re, im, B)
        err = np.maximum(np.abs(got.real - (a * b).real), np.abs(got.imag - (a * b).imag))
        assert err.max() <= 2 * 2.0 ** -16

    @given(word_quads())
    def test_composed_from_primitives(self, q):
        ar, ai, br, bi = q
        p = fxp.complex_mul(ComplexFxp(ar, ai), ComplexFxp(br, bi))
        re = fxp.fxp_sub(fxp.fxp_mul(ar, br), fxp.fxp_mul(ai, bi))
        im = fxp.fxp_add(fxp.fxp_mul(ar, bi), fxp.fxp_mul(ai, br))
        assert (p.re, p.im) == (re, im)


class TestNoiseModel:
    def test_b8(self):
        assert fxp.theoretical_sqnr(8) == pytest.approx(58.9566, abs=1e-3)

    def test_b1(self):
        assert fxp.theoretical_sqnr(1) == pytest.approx(16.812, abs=1e-3)

    @pytest.mark.parametrize("B", range(1, 32))
    def test_per_bit_increment(self, B):
        d = fxp.theoretical_sqnr(B + 1) - fxp.theoretical_sqnr(B)
        assert d == pytest.approx(20 * math.log10(2))

    def test_model_fields(self):
        m = QuantNoiseModel(10)
        assert m.sigma_sq == 2.0 ** -20 / 12
        assert m.sqnr_db == pytest.approx(10 * math.log10(1 / m.sigma_sq))
        assert m.sqnr_db == pytest.approx(fxp.theoretical_sqnr(10))

    def test_exact_signal_is_infinite(self):
        assert fxp.measure_sqnr(np.array([0.5, -0.25, 0.0]), 8) == math.inf

    def test_measured_increment_per_bit(self):
        x = np.random.default_rng(2).uniform(-1, 1, 10 ** 6)
        s = [fxp.measure_sqnr(x, B) for B in range(6, 17)]
        assert np.allclose(np.diff(s), 6.02, atol=0.2)

    def test_dithered_constant_step(self):
        rng = np.random.default_rng(4)
        # the dither has to span a few LSBs at B=4 for the error to look uniform
        x = 0.5 + rng.uniform(-0.25, 0.25, 10 ** 5)
        assert fxp.measure_sqnr(x, 5) - fxp.measure_sqnr(x, 4) == pytest.approx(6.02, abs=0.5)

    def test_complex_input(self):
        u = np.random.default_rng(5).uniform(-1, 1, (2, 10 ** 5))
        z = u[0] + 1j * u[1]
        # both components see the same noise model as a real signal
        assert fxp.measure_sqnr(z, 10) == pytest.approx(fxp.measure_sqnr(u.ravel(), 10), abs=0.05)
