"""
Fractional two's-complement fixed-point arithmetic.

A word of bit depth ``B`` stores a signed integer ``raw`` in
``[-2**(B-1), 2**(B-1) - 1]`` and represents ``raw / 2**(B-1)``, i.e. every
value lies in ``[-1, 1)``. All results are rounded to the nearest grid point
(ties away from zero) and saturate at the interval endpoints; nothing wraps.

Two layers are provided:

* scalar value types (:class:`FxpWord`, :class:`ComplexFxp`) with the
  primitive operations :func:`quantize`, :func:`fxp_add`, :func:`fxp_mul`,
  :func:`complex_mul`;
* vectorized kernels on ``int64`` raw arrays (``*_raw`` functions) used by the
  DSP blocks. The scalar operations are thin wrappers around them so both
  layers round identically.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .errors import ConfigurationError, InvalidSampleError

MIN_BITS = 2
MAX_BITS = 32


def check_bits(B: int) -> int:
    if isinstance(B, bool) or not isinstance(B, (int, np.integer)):
        raise ConfigurationError(f"bit depth must be an integer, got {B!r}")
    if not MIN_BITS <= B <= MAX_BITS:
        raise ConfigurationError(f"bit depth {B} outside [{MIN_BITS}, {MAX_BITS}]")
    return int(B)


def raw_limits(B: int) -> tuple[int, int]:
    """Smallest and largest raw integer at bit depth ``B``."""
    half = 1 << (B - 1)
    return -half, half - 1


def lsb(B: int) -> float:
    return 2.0 ** (1 - B)


# ---------------------------------------------------------------------------
# vectorized raw kernels
# ---------------------------------------------------------------------------

def saturate_raw(raw, B: int):
    lo, hi = raw_limits(B)
    return np.clip(raw, lo, hi)


def round_shift(p, shift: int):
    """Divide integers by ``2**shift``, rounding half away from zero.

    Negative ``shift`` multiplies (exact). Works on scalars and int arrays.
    """
    if shift <= 0:
        return p * (1 << -shift) if shift else p
    half = 1 << (shift - 1)
    mag = (np.abs(p) + half) >> shift
    return np.where(p < 0, -mag, mag)


def quantize_raw(x, B: int) -> np.ndarray:
    """Quantize real samples to raw integers at bit depth ``B``."""
    B = check_bits(B)
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InvalidSampleError("cannot quantize non-finite samples")
    # clip far outside the range first so the integer conversion cannot overflow
    t = np.clip(x, -2.0, 2.0) * float(1 << (B - 1))
    mag = np.floor(np.abs(t) + 0.5)
    r = np.where(t < 0, -mag, mag).astype(np.int64)
    return saturate_raw(r, B)


def dequantize_raw(raw, B: int) -> np.ndarray:
    return np.asarray(raw, dtype=np.float64) / float(1 << (B - 1))


def add_raw(a, b, B: int):
    return saturate_raw(a + b, B)


def sub_raw(a, b, B: int):
    return saturate_raw(a - b, B)


def mul_raw(a, b, B: int):
    """Exact product (2B-1 significant bits) rounded back to ``B`` bits."""
    return saturate_raw(round_shift(a * b, B - 1), B)


def cmul_raw(ar, ai, br, bi, B: int):
    """Complex product from four independently rounded real products."""
    rr = mul_raw(ar, br, B)
    ii = mul_raw(ai, bi, B)
    ri = mul_raw(ar, bi, B)
    ir = mul_raw(ai, br, B)
    return sub_raw(rr, ii, B), add_raw(ri, ir, B)


def quantize_complex_raw(z, B: int) -> tuple[np.ndarray, np.ndarray]:
    z = np.asarray(z)
    return quantize_raw(z.real, B), quantize_raw(z.imag, B)


def dequantize_complex_raw(re, im, B: int) -> np.ndarray:
    return dequantize_raw(re, B) + 1j * dequantize_raw(im, B)


# ---------------------------------------------------------------------------
# scalar value types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FxpWord:
    """One fixed-point sample: ``value = raw / 2**(bit_depth - 1)``."""

    raw: int
    bit_depth: int

    def __post_init__(self):
        check_bits(self.bit_depth)
        lo, hi = raw_limits(self.bit_depth)
        if not lo <= self.raw <= hi:
            raise ConfigurationError(
                f"raw {self.raw} does not fit in {self.bit_depth} bits")

    @property
    def value(self) -> float:
        return self.raw / float(1 << (self.bit_depth - 1))

    @classmethod
    def max_value(cls, B: int) -> "FxpWord":
        return cls(raw_limits(B)[1], B)

    @classmethod
    def min_value(cls, B: int) -> "FxpWord":
        return cls(raw_limits(B)[0], B)

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class ComplexFxp:
    re: FxpWord
    im: FxpWord

    def __post_init__(self):
        if self.re.bit_depth != self.im.bit_depth:
            raise ConfigurationError("real and imaginary parts differ in bit depth")

    @property
    def bit_depth(self) -> int:
        return self.re.bit_depth

    @property
    def value(self) -> complex:
        return complex(self.re.value, self.im.value)

    @classmethod
    def from_complex(cls, z: complex, B: int) -> "ComplexFxp":
        return cls(quantize(z.real, B), quantize(z.imag, B))


@dataclass(frozen=True)
class QuantNoiseModel:
    """Uniform quantization-noise model at bit depth ``B``."""

    bit_depth: int

    @property
    def sigma_sq(self) -> float:
        return 2.0 ** (-2 * self.bit_depth) / 12.0

    @property
    def sqnr_db(self) -> float:
        return 10.0 * math.log10(1.0 / self.sigma_sq)


def _same_depth(a: FxpWord, b: FxpWord) -> int:
    if a.bit_depth != b.bit_depth:
        raise ConfigurationError(
            f"bit depth mismatch: {a.bit_depth} vs {b.bit_depth}")
    return a.bit_depth


def quantize(x: float, B: int) -> FxpWord:
    """Round ``x`` to the nearest representable value, saturating out of range."""
    return FxpWord(int(quantize_raw(x, B)), B)


def fxp_add(a: FxpWord, b: FxpWord) -> FxpWord:
    B = _same_depth(a, b)
    return FxpWord(int(add_raw(a.raw, b.raw, B)), B)


def fxp_sub(a: FxpWord, b: FxpWord) -> FxpWord:
    B = _same_depth(a, b)
    return FxpWord(int(sub_raw(a.raw, b.raw, B)), B)


def fxp_mul(a: FxpWord, b: FxpWord) -> FxpWord:
    B = _same_depth(a, b)
    return FxpWord(int(mul_raw(a.raw, b.raw, B)), B)


def complex_mul(a: ComplexFxp, b: ComplexFxp) -> ComplexFxp:
    B = _same_depth(a.re, b.re)
    re, im = cmul_raw(a.re.raw, a.im.raw, b.re.raw, b.im.raw, B)
    return ComplexFxp(FxpWord(int(re), B), FxpWord(int(im), B))


def theoretical_sqnr(B: int) -> float:
    """SQNR in dB of the uniform noise model, ``10 log10(12 * 2**(2B))``."""
    if B < 1:
        raise ConfigurationError("bit depth must be positive")
    return 10.0 * math.log10(12.0 * 4.0 ** B)


def measure_sqnr(signal, B: int) -> float:
    """Empirical SQNR (dB) of quantizing ``signal`` to ``B`` bits.

    Complex input is quantized per component. Returns ``math.inf`` when every
    sample is exactly representable.
    """
    x = np.asarray(signal)
    if np.iscomplexobj(x):
        q = dequantize_complex_raw(*quantize_complex_raw(x, B), B)
    else:
        q = dequantize_raw(quantize_raw(x, B), B)
    err = float(np.sum(np.abs(x - q) ** 2))
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(float(np.sum(np.abs(x) ** 2)) / err)
