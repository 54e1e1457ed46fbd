"""
DSP kernels generic over the arithmetic backend.

A *backend* is either the string ``"float64"`` (double-precision reference)
or an integer bit depth selecting the fixed-point emulation in :mod:`fxp`.

Kernels:

* :func:`fft` -- radix-2 decimation-in-time FFT with per-stage conditional
  block scaling on the fixed-point backend;
* :func:`cordic_rotate` / :func:`cordic_raw` -- CORDIC complex exponential;
* :func:`overlap_save` -- streaming frequency-domain filtering in batches of
  ``N`` samples with an ``N/4`` overlap.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
import math
from typing import Callable, Union

import numpy as np

from . import fxp
from .errors import ConfigurationError, InvalidSampleError
from .signal import DualPolSignal

Backend = Union[str, int]

MIN_FFT_EXP = 5
MAX_FFT_EXP = 15
# int64 holds the widened butterfly sums up to this depth; beyond it we fall
# back to Python integers.
_INT64_MAX_BITS = 30


def is_float_backend(backend: Backend) -> bool:
    if isinstance(backend, str):
        if backend != "float64":
            raise ConfigurationError(f"unknown backend {backend!r}")
        return True
    if backend is None:
        return True
    fxp.check_bits(backend)
    return False


def log2_exact(N: int) -> int:
    n = int(N).bit_length() - 1
    if N < 1 or (1 << n) != N:
        raise ConfigurationError(f"length {N} is not a power of two")
    return n


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

@dataclass
class ComplexFxpBuffer:
    """Block(s) of complex fixed-point samples sharing a scaling exponent.

    ``re``/``im`` hold raw integers with shape ``(..., N)``; ``scale_exp`` has
    the leading shape (one exponent per block). Sample value is
    ``(re + 1j*im) / 2**(B-1) * 2**scale_exp``.
    """

    re: np.ndarray
    im: np.ndarray
    bit_depth: int
    scale_exp: np.ndarray | int = 0

    def __post_init__(self):
        fxp.check_bits(self.bit_depth)
        self.scale_exp = np.broadcast_to(
            np.asarray(self.scale_exp, dtype=np.int64), self.re.shape[:-1]).copy()

    @classmethod
    def from_complex(cls, z, B: int) -> "ComplexFxpBuffer":
        re, im = fxp.quantize_complex_raw(z, B)
        return cls(re, im, B)

    def __len__(self) -> int:
        return self.re.shape[-1]

    def stored(self) -> np.ndarray:
        """Stored values, ignoring ``scale_exp``."""
        return fxp.dequantize_complex_raw(self.re, self.im, self.bit_depth)

    def values(self) -> np.ndarray:
        """Represented values, ``stored * 2**scale_exp``."""
        return self.stored() * np.exp2(self.scale_exp)[..., None]


@dataclass(frozen=True)
class FreqResponse:
    """Filter taps on the FFT frequency grid of an ``N``-point transform."""

    taps: np.ndarray
    sample_rate: float = 1.0

    @property
    def size(self) -> int:
        return self.taps.size

    @property
    def grid(self) -> np.ndarray:
        """Angular frequencies (rad/s) in FFT bin order."""
        return 2 * np.pi * np.fft.fftfreq(self.size, d=1.0 / self.sample_rate)

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], N: int,
                      sample_rate: float = 1.0) -> "FreqResponse":
        omega = 2 * np.pi * np.fft.fftfreq(N, d=1.0 / sample_rate)
        return cls(np.asarray(fn(omega), dtype=np.complex128), sample_rate)

    @classmethod
    def identity(cls, N: int, sample_rate: float = 1.0) -> "FreqResponse":
        return cls(np.ones(N, dtype=np.complex128), sample_rate)

    def quantized_raw(self, B: int) -> tuple[np.ndarray, np.ndarray]:
        return _quantize_taps(self.taps, B)


def _quantize_taps(taps: np.ndarray, B: int):
    re, im = fxp.quantize_complex_raw(taps, B)
    one = 1 << (B - 1)
    # rounding both components up can push |tap| above one; pull the larger
    # component back toward zero by 1 LSB until the magnitude fits
    while True:
        over = re * re + im * im > one * one
        if not over.any():
            return re, im
        bigger_re = over & (np.abs(re) >= np.abs(im))
        bigger_im = over & ~bigger_re
        re = re - np.sign(re) * bigger_re
        im = im - np.sign(im) * bigger_im


@dataclass(frozen=True)
class CordicConfig:
    iterations: int = 20
    gain_compensation: float = field(init=False)

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError("CORDIC needs at least one iteration")
        k = math.prod(math.sqrt(1.0 + 2.0 ** (-2 * i)) for i in range(self.iterations))
        object.__setattr__(self, "gain_compensation", 1.0 / k)

    @property
    def guard_bits(self) -> int:
        return max(2, math.ceil(math.log2(self.iterations)) + 2)


# ---------------------------------------------------------------------------
# FFT
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _bit_reverse(n: int) -> np.ndarray:
    idx = np.arange(1 << n)
    rev = np.zeros_like(idx)
    for b in range(n):
        rev |= ((idx >> b) & 1) << (n - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _stage_twiddles(m: int, B: int, inverse: bool):
    """Quantized twiddles ``exp(-+i*pi*j/m)`` for ``j < m`` (double precision first)."""
    sign = 1.0 if inverse else -1.0
    w = np.exp(sign * 1j * np.pi * np.arange(m) / m)
    re, im = fxp.quantize_complex_raw(w, B)
    return re, im


def _round_rows(wide, shifts: np.ndarray):
    """Round ``wide[:, r]`` by ``shifts[r]`` bits for every row ``r``."""
    out = np.empty_like(wide)
    for sh in np.unique(shifts):
        rows = shifts == sh
        out[:, rows] = fxp.round_shift(wide[:, rows], int(sh))
    return out


def _fxp_fft_rows(re: np.ndarray, im: np.ndarray, B: int, inverse: bool):
    """Radix-2 DIT FFT of each row with conditional per-stage block scaling.

    Each butterfly output is formed exactly in widened precision (the
    twiddle product is not rounded separately) and rounded once to ``B``
    bits. Before each stage a row whose largest component magnitude reaches
    1/2 is halved (folded into that single rounding) and its exponent
    incremented; if a butterfly output would still saturate, the row is
    shifted one more bit.
    """
    rows, N = re.shape
    n = log2_exact(N)
    frac = B - 1
    lo, hi = fxp.raw_limits(B)
    dtype = np.int64 if B <= _INT64_MAX_BITS else object
    perm = _bit_reverse(n)
    re = re[:, perm].astype(dtype)
    im = im[:, perm].astype(dtype)
    exp = np.zeros(rows, dtype=np.int64)

    for s in range(n):
        m = 1 << s
        shape = (rows, N // (2 * m), 2, m)
        r4 = re.reshape(shape)
        i4 = im.reshape(shape)
        a_re = r4[:, :, 0, :] << frac
        a_im = i4[:, :, 0, :] << frac
        b_re = r4[:, :, 1, :]
        b_im = i4[:, :, 1, :]
        w_re, w_im = _stage_twiddles(m, B, inverse)
        w_re = w_re.astype(dtype)
        w_im = w_im.astype(dtype)
        t_re = w_re * b_re - w_im * b_im
        t_im = w_re * b_im + w_im * b_re
        # the j = 0 butterfly is a trivial add/subtract: no multiplier, exact
        t_re[..., 0] = b_re[..., 0] << frac
        t_im[..., 0] = b_im[..., 0] << frac

        wide = np.stack([a_re + t_re, a_im + t_im, a_re - t_re, a_im - t_im])
        # pre-stage guard: halve the block when any input component reaches 1/2
        peak = np.maximum(np.abs(re), np.abs(im)).max(axis=1)
        shift = (peak >= (1 << (frac - 1))).astype(np.int64)
        out = _round_rows(wide, frac + shift)
        # fallback: the guard does not bound |a + w b| < 1 in every case
        for _ in range(2):
            flat = out.reshape(4, rows, -1)
            bad = (flat.max(axis=(0, 2)) > hi) | (flat.min(axis=(0, 2)) < lo)
            if not bad.any():
                break
            shift[bad] += 1
            out[:, bad] = _round_rows(wide[:, bad], frac + shift[bad])
        out = np.clip(out, lo, hi)
        exp += shift

        new_re = np.empty(shape, dtype=dtype)
        new_im = np.empty(shape, dtype=dtype)
        new_re[:, :, 0, :] = out[0]
        new_im[:, :, 0, :] = out[1]
        new_re[:, :, 1, :] = out[2]
        new_im[:, :, 1, :] = out[3]
        re = new_re.reshape(rows, N)
        im = new_im.reshape(rows, N)

    if inverse:
        exp -= n
    return re.astype(np.int64), im.astype(np.int64), exp


def fft(buffer, direction: str = "forward", backend: Backend | None = None):
    """Forward or inverse DFT along the last axis.

    ``buffer`` is either a complex array (float64 backend) or a
    :class:`ComplexFxpBuffer`. The fixed-point result is a new buffer whose
    ``values()`` approximate the unnormalized forward DFT, or the ``1/N``
    normalized inverse; the ``1/N`` is applied exactly through ``scale_exp``.
    """
    if direction not in ("forward", "inverse"):
        raise ConfigurationError(f"unknown FFT direction {direction!r}")
    inverse = direction == "inverse"
    if isinstance(buffer, ComplexFxpBuffer):
        N = len(buffer)
        log2_exact(N)
        lead = buffer.re.shape[:-1]
        re, im, e = _fxp_fft_rows(buffer.re.reshape(-1, N), buffer.im.reshape(-1, N),
                                  buffer.bit_depth, inverse)
        exp = buffer.scale_exp.reshape(-1) + e
        return ComplexFxpBuffer(re.reshape(lead + (N,)), im.reshape(lead + (N,)),
                                buffer.bit_depth, exp.reshape(lead))
    if backend is not None and not is_float_backend(backend):
        return fft(ComplexFxpBuffer.from_complex(buffer, backend), direction)
    x = np.asarray(buffer, dtype=np.complex128)
    log2_exact(x.shape[-1])
    return np.fft.ifft(x) if inverse else np.fft.fft(x)


def fft_noise_bound(N: int, B: int) -> float:
    """Quantization noise variance bound ``4 (N-1) sigma^2`` for an N-point FFT."""
    return 4.0 * (N - 1) * 2.0 ** (-2 * B) / 12.0


# ---------------------------------------------------------------------------
# CORDIC
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _cordic_tables(iterations: int, width: int):
    scale = float(1 << (width - 1))
    atans = [int(round(math.atan(2.0 ** -i) / math.pi * scale)) for i in range(iterations)]
    gain = CordicConfig(iterations).gain_compensation
    return atans, int(round(gain * scale))


def cordic_raw(angles, cfg: CordicConfig, B: int):
    """Vectorized CORDIC: raw ``(cos, sin)`` at ``B`` bits for angles in radians.

    Angles are range-reduced to ``[-pi, pi)`` in double precision, then
    quantized to a binary angle (units of pi) on the rotation registers, which
    are widened by :attr:`CordicConfig.guard_bits`. The result is rounded
    back to ``B`` bits.
    """
    B = fxp.check_bits(B)
    theta = np.asarray(angles, dtype=np.float64)
    if not np.all(np.isfinite(theta)):
        raise InvalidSampleError("CORDIC angle must be finite")
    g = cfg.guard_bits
    W = B + g
    half = 1 << (W - 1)
    quarter = half >> 1
    reduced = np.remainder(theta + np.pi, 2 * np.pi) - np.pi
    # binary angle in units of pi on the widened register; +pi wraps to -pi
    t = reduced / np.pi * float(half)
    z = np.where(t < 0, -np.floor(-t + 0.5), np.floor(t + 0.5)).astype(np.int64)
    z = np.where(z >= half, z - 2 * half, z)
    # fold into [-pi/2, pi/2]; the rotation by pi is an exact negation
    flip = (z > quarter) | (z < -quarter)
    z = np.where(z > quarter, z - half, z)
    z = np.where(z < -quarter, z + half, z)

    atans, x0 = _cordic_tables(cfg.iterations, W)
    x = np.full(z.shape, x0, dtype=np.int64)
    y = np.zeros(z.shape, dtype=np.int64)
    for i, a in enumerate(atans):
        d = np.where(z >= 0, 1, -1)
        x, y = x - d * (y >> i), y + d * (x >> i)
        z = z - d * a

    c = fxp.saturate_raw(fxp.round_shift(x, g), B)
    s = fxp.saturate_raw(fxp.round_shift(y, g), B)
    c = np.where(flip, fxp.saturate_raw(-c, B), c)
    s = np.where(flip, fxp.saturate_raw(-s, B), s)
    return c, s


def cordic_rotate(angle: float, cfg: CordicConfig | None = None, B: int = 16) -> fxp.ComplexFxp:
    """``(cos(angle), sin(angle))`` as a fixed-point complex number."""
    cfg = cfg or CordicConfig()
    c, s = cordic_raw(angle, cfg, B)
    return fxp.ComplexFxp(fxp.FxpWord(int(c), B), fxp.FxpWord(int(s), B))


# ---------------------------------------------------------------------------
# overlap-and-save
# ---------------------------------------------------------------------------

def check_fft_size(N: int) -> int:
    n = log2_exact(N)
    if not MIN_FFT_EXP <= n <= MAX_FFT_EXP:
        raise ConfigurationError(
            f"FFT size 2^{n} outside 2^{MIN_FFT_EXP}..2^{MAX_FFT_EXP}")
    return n


def _batches(x: np.ndarray, N: int):
    """Split the last axis into overlapping length-N batches.

    The discarded overlap (N/4) is split evenly before and after each batch,
    matching a zero-centred (two-sided) impulse response. Returns the batch
    array ``(..., n_batches, N)`` and the hop.
    """
    L = x.shape[-1]
    hop = N - N // 4
    guard = N // 8
    nb = -(-L // hop)
    total = nb * hop + N // 4
    pad = [(0, 0)] * (x.ndim - 1) + [(guard, total - guard - L)]
    padded = np.pad(x, pad)
    windows = np.lib.stride_tricks.sliding_window_view(padded, N, axis=-1)
    return windows[..., ::hop, :][..., :nb, :], hop, guard


def _unbatch(y: np.ndarray, hop: int, guard: int, L: int) -> np.ndarray:
    valid = y[..., guard:guard + hop]
    return valid.reshape(valid.shape[:-2] + (-1,))[..., :L]


def overlap_save_array(x: np.ndarray, response: FreqResponse, backend: Backend = "float64"):
    """Overlap-and-save filtering of ``x`` along its last axis.

    On the fixed-point backend ``x`` must already be scaled into ``[-1, 1)``;
    it is quantized on entry and the output lies on the ``B``-bit grid.
    """
    N = response.size
    check_fft_size(N)
    x = np.asarray(x, dtype=np.complex128)
    L = x.shape[-1]
    batches, hop, guard = _batches(x, N)

    if is_float_backend(backend):
        y = np.fft.ifft(np.fft.fft(batches, axis=-1) * response.taps, axis=-1)
        return _unbatch(y, hop, guard, L)

    B = fxp.check_bits(backend)
    lead = batches.shape[:-1]
    buf = ComplexFxpBuffer.from_complex(batches.reshape(-1, N), B)
    spec = _rotation_headroom(fft(buf, "forward"))
    t_re, t_im = response.quantized_raw(B)
    p_re, p_im = fxp.cmul_raw(spec.re, spec.im, t_re, t_im, B)
    out = fft(ComplexFxpBuffer(p_re, p_im, B, spec.scale_exp), "inverse")
    re = _rescale_rows(out.re, out.scale_exp, B)
    im = _rescale_rows(out.im, out.scale_exp, B)
    y = fxp.dequantize_complex_raw(re, im, B).reshape(lead + (N,))
    return _unbatch(y, hop, guard, L)


def _rotation_headroom(buf: ComplexFxpBuffer) -> ComplexFxpBuffer:
    """Halve rows whose peak magnitude could rotate into saturation.

    Each component is below full scale but the magnitude may reach sqrt(2);
    a unit-modulus product can then move it onto a single axis and clip.
    """
    B = buf.bit_depth
    hi = fxp.raw_limits(B)[1]
    mag = np.hypot(buf.re.astype(np.float64), buf.im.astype(np.float64)).max(axis=-1)
    # product rounding and the quantized taps add up to ~1.5 LSB
    shift = mag > hi - 3
    if not shift.any():
        return buf
    re = np.array(buf.re, copy=True)
    im = np.array(buf.im, copy=True)
    re[shift] = fxp.round_shift(buf.re[shift], 1)
    im[shift] = fxp.round_shift(buf.im[shift], 1)
    return ComplexFxpBuffer(re, im, B, buf.scale_exp + shift)


def _rescale_rows(raw: np.ndarray, exps: np.ndarray, B: int) -> np.ndarray:
    """Bring block-scaled rows back to exponent 0 with rounding and saturation."""
    out = np.array(raw, copy=True)
    for e in np.unique(exps):
        rows = exps == e
        out[rows] = fxp.round_shift(raw[rows], int(-e))
    return fxp.saturate_raw(out, B)


def overlap_save(stream, response: FreqResponse, N: int | None = None,
                 backend: Backend = "float64"):
    """Filter a :class:`DualPolSignal` (or plain array) with ``response``.

    ``N`` defaults to the response length; when given it must match.
    """
    if N is not None and N != response.size:
        raise ConfigurationError(f"response has {response.size} taps, FFT size is {N}")
    if isinstance(stream, DualPolSignal):
        y = overlap_save_array(stream.fields, response, backend)
        return stream.with_fields(y[0], y[1])
    return overlap_save_array(stream, response, backend)
