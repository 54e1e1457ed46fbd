"""
Receiver-side equalizers: CDC, k-step DBP and single-step ESSFM.

All three are Wiener-Hammerstein chains: frequency-domain dispersion blocks
(applied with overlap-and-save) alternating with time-domain nonlinear phase
blocks. A plan is compiled into a *schedule* of blocks along the virtual
(back-propagated) link; adjacent linear blocks are merged, and a nonlinear
block that is identically zero is dropped so its neighbours merge too.

The back-propagated link is walked from the receiver (distance 0) to the
transmitter (distance ``L``). Step ``j`` of a ``k``-step plan covers
``[j h, (j+1) h]`` with ``h = L / k``; its nonlinear block sits at
``(j + split) h``, so ``split`` is the fraction of the step's dispersion
applied *before* the nonlinearity.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dsp, fxp
from .channel import LinkSpec, MANAKOV_FACTOR, dbm_to_w
from .errors import ConfigurationError
from .signal import DualPolSignal

ALGORITHMS = ("cdc", "dbp", "essfm")
DEFAULT_SPLIT = {"cdc": 0.0, "dbp": 0.85, "essfm": 0.4}
LOSS_MODES = ("leff", "explicit")


@dataclass(frozen=True)
class NlcPlan:
    """Equalizer selection plus everything needed to run it.

    ``bit_depth=None`` selects the float64 backend. ``input_scale`` is the
    power-of-two backoff applied to the unit-power signal before it enters
    the fixed-point datapath.
    """

    algorithm: str = "cdc"
    steps_per_link: int = 1
    coeffs: tuple[float, ...] = ()
    wh_split: float | None = None
    fft_size_exp: int = 10
    bit_depth: int | None = None
    launch_power_dbm: float = 0.0
    input_scale: float = 0.25
    loss_mode: str = "leff"
    cordic_iterations: int = 20
    nonlinear: bool = True

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}")
        if self.wh_split is None:
            object.__setattr__(self, "wh_split", DEFAULT_SPLIT[self.algorithm])
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if not 0.0 <= self.wh_split <= 1.0:
            raise ConfigurationError("WH split must lie in [0, 1]")
        if self.steps_per_link < 1:
            raise ConfigurationError("DBP needs at least one step per link")
        if self.algorithm == "essfm":
            n = len(self.coeffs)
            if n < 1 or n & (n - 1):
                raise ConfigurationError(
                    f"ESSFM needs a power-of-two number of coefficients, got {n}")
            if self.steps_per_link != 1:
                raise ConfigurationError("ESSFM is a single step per link")
        dsp.check_fft_size(1 << self.fft_size_exp)
        if self.bit_depth is not None:
            fxp.check_bits(self.bit_depth)
        if self.loss_mode not in LOSS_MODES:
            raise ConfigurationError(f"unknown loss mode {self.loss_mode!r}")
        if self.input_scale <= 0 or self.input_scale > 1:
            raise ConfigurationError("input_scale must lie in (0, 1]")

    @classmethod
    def cdc(cls, **kw) -> "NlcPlan":
        return cls(algorithm="cdc", **kw)

    @classmethod
    def dbp(cls, steps_per_link: int, **kw) -> "NlcPlan":
        return cls(algorithm="dbp", steps_per_link=steps_per_link, **kw)

    @classmethod
    def essfm(cls, coeffs: Sequence[float], **kw) -> "NlcPlan":
        return cls(algorithm="essfm", coeffs=tuple(coeffs), **kw)

    @property
    def fft_size(self) -> int:
        return 1 << self.fft_size_exp

    @property
    def backend(self):
        return "float64" if self.bit_depth is None else self.bit_depth

    @property
    def nonlinear_coeffs(self) -> tuple[float, ...]:
        """Taps of the power filter; plain DBP is the one-tap case ``c0 = 1/2``."""
        return self.coeffs if self.algorithm == "essfm" else (0.5,)

    def with_(self, **changes) -> "NlcPlan":
        return replace(self, **changes)


@dataclass(frozen=True)
class VirtualStep:
    h: float
    leading_disp: float
    trailing_disp: float
    l_eff: float

    def __post_init__(self):
        if self.h <= 0:
            raise ConfigurationError("zero-length DBP step")


@dataclass(frozen=True)
class LinearBlock:
    length: float


@dataclass(frozen=True)
class NonlinearBlock:
    step: VirtualStep
    coeffs: tuple[float, ...]
    position: float


# ---------------------------------------------------------------------------
# schedule
# ---------------------------------------------------------------------------

def _power_integral(z0: float, z1: float, link: LinkSpec) -> float:
    """``int exp(-alpha * (z mod span)) dz`` over forward positions ``[z0, z1]``."""
    a, S = link.alpha, link.span_length_m
    total = 0.0
    z = z0
    while z < z1 - 1e-9:
        span = math.floor(z / S + 1e-12)
        start = span * S
        end = min(z1, start + S)
        u0, u1 = z - start, end - start
        total += (u1 - u0) if a == 0 else (math.exp(-a * u0) - math.exp(-a * u1)) / a
        z = end
    return total


def virtual_steps(link: LinkSpec, k: int, split: float, loss_mode: str = "leff") -> list[VirtualStep]:
    L = link.total_length
    h = L / k
    steps = []
    for j in range(k):
        # step j of the back-propagation covers forward positions [L-(j+1)h, L-jh]
        z_hi = L - j * h
        z_lo = L - (j + 1) * h
        if loss_mode == "leff":
            leff = _power_integral(max(z_lo, 0.0), z_hi, link)
        else:
            z_nl = L - (j + split) * h
            depth = z_nl - math.floor(z_nl / link.span_length_m + 1e-12) * link.span_length_m
            leff = h * math.exp(-link.alpha * depth)
        steps.append(VirtualStep(h, split * h, (1 - split) * h, leff))
    return steps


def build_schedule(plan: NlcPlan, link: LinkSpec) -> list[LinearBlock | NonlinearBlock]:
    """Linear/nonlinear block sequence with adjacent linear blocks merged."""
    L = link.total_length
    points: list[NonlinearBlock] = []
    if plan.algorithm != "cdc" and plan.nonlinear and link.gamma > 0 \
            and any(c != 0 for c in _effective_coeffs(plan)):
        k = plan.steps_per_link
        for j, step in enumerate(virtual_steps(link, k, plan.wh_split, plan.loss_mode)):
            pos = (j + plan.wh_split) * L / k
            points.append(NonlinearBlock(step, plan.nonlinear_coeffs, pos))
    blocks: list[LinearBlock | NonlinearBlock] = []
    prev = 0.0
    for p in points:
        blocks.append(LinearBlock(p.position - prev))
        blocks.append(p)
        prev = p.position
    blocks.append(LinearBlock(L - prev))
    return [b for b in blocks if not (isinstance(b, LinearBlock) and b.length == 0)]


def _effective_coeffs(plan: NlcPlan) -> np.ndarray:
    c = np.asarray(plan.nonlinear_coeffs, dtype=np.float64)
    if plan.bit_depth is None:
        return c
    return quantize_coefficients(c, plan.bit_depth).values()


# ---------------------------------------------------------------------------
# blocks
# ---------------------------------------------------------------------------

def dispersion_response(z: float, link: LinkSpec, N: int, sample_rate: float) -> dsp.FreqResponse:
    """Back-propagation dispersion filter over ``z`` metres on an ``N``-point grid."""
    omega = 2 * np.pi * np.fft.fftfreq(N, d=1.0 / sample_rate)
    taps = np.exp(-1j * (link.beta2 / 2) * omega ** 2 * z)
    return dsp.FreqResponse(taps, sample_rate)


def symmetric_taps(coeffs: Sequence[float]) -> np.ndarray:
    """``[c_Nc, ..., c_1, 2 c_0, c_1, ..., c_Nc]``."""
    c = np.asarray(coeffs, dtype=np.float64)
    return np.concatenate([c[:0:-1], [2 * c[0]], c[1:]])


def filtered_power(power: np.ndarray, coeffs: Sequence[float]) -> np.ndarray:
    """``sum_i c_i (P[k-i] + P[k+i])`` with zeros outside the record."""
    return np.convolve(power, symmetric_taps(coeffs), mode="same")


@dataclass(frozen=True)
class QuantizedCoeffs:
    """Coefficients ``raw / 2**(B-1) * 2**scale_exp``."""

    raw: np.ndarray
    bit_depth: int
    scale_exp: int

    def values(self) -> np.ndarray:
        return fxp.dequantize_raw(self.raw, self.bit_depth) * 2.0 ** self.scale_exp

    @property
    def words(self) -> list[fxp.FxpWord]:
        return [fxp.FxpWord(int(r), self.bit_depth) for r in self.raw]


def quantize_coefficients(c, B: int) -> QuantizedCoeffs:
    """Quantize filter taps, first scaling by ``2**-k`` if they exceed the range.

    The shift is compensated exactly when the phase is formed.
    """
    c = np.asarray(c, dtype=np.float64)
    if not np.all(np.isfinite(c)):
        raise ConfigurationError("coefficients must be finite")
    B = fxp.check_bits(B)
    peak = float(np.max(np.abs(c))) if c.size else 0.0
    k = 0
    limit = 1.0 - fxp.lsb(B) / 2
    while peak * 2.0 ** -k > limit:
        k += 1
    return QuantizedCoeffs(fxp.quantize_raw(c * 2.0 ** -k, B), B, k)


def _nonlinear_float(fields: np.ndarray, block: NonlinearBlock, k_phase: float) -> np.ndarray:
    power = fields[0].real ** 2 + fields[0].imag ** 2 + fields[1].real ** 2 + fields[1].imag ** 2
    phi = k_phase * filtered_power(power, block.coeffs)
    return fields * np.exp(-1j * phi)


def fxp_filtered_power(re: np.ndarray, im: np.ndarray, q: QuantizedCoeffs) -> np.ndarray:
    """Fixed-point ``|Ex|^2 + |Ey|^2`` followed by the symmetric tap filter.

    ``re``/``im`` are raw ``(2, n)`` arrays. Every multiply and add is a
    ``B``-bit primitive; the accumulator saturates like any other word.
    """
    B = q.bit_depth
    sq = [fxp.mul_raw(v, v, B) for v in (re[0], im[0], re[1], im[1])]
    p = fxp.add_raw(fxp.add_raw(sq[0], sq[1], B), fxp.add_raw(sq[2], sq[3], B), B)
    n = p.size
    nc = q.raw.size - 1
    padded = np.concatenate([np.zeros(nc, np.int64), p, np.zeros(nc, np.int64)])
    acc = np.zeros(n, dtype=np.int64)
    for i, c in enumerate(q.raw):
        pair = fxp.add_raw(padded[nc - i:nc - i + n], padded[nc + i:nc + i + n], B)
        acc = fxp.add_raw(acc, fxp.mul_raw(int(c), pair, B), B)
    return acc


def _nonlinear_fxp(fields: np.ndarray, block: NonlinearBlock, k_phase: float,
                   plan: NlcPlan) -> np.ndarray:
    B = plan.bit_depth
    re, im = fxp.quantize_complex_raw(fields, B)
    q = quantize_coefficients(block.coeffs, B)
    acc = fxp_filtered_power(re, im, q)
    # stored power is scaled by input_scale**2 and the taps by 2**-scale_exp
    phi = k_phase * fxp.dequantize_raw(acc, B) * 2.0 ** q.scale_exp / plan.input_scale ** 2
    c, s = dsp.cordic_raw(-phi, dsp.CordicConfig(plan.cordic_iterations), B)
    out_re, out_im = fxp.cmul_raw(re, im, c, s, B)
    return fxp.dequantize_complex_raw(out_re, out_im, B)


def apply_plan(signal: DualPolSignal, link: LinkSpec, plan: NlcPlan) -> DualPolSignal:
    """Run the equalizer of ``plan`` on a unit-power signal at 2 samples/symbol."""
    N = plan.fft_size
    p_launch = dbm_to_w(plan.launch_power_dbm)
    fields = signal.fields
    fixed = plan.bit_depth is not None
    if fixed:
        fields = fxp.dequantize_complex_raw(
            *fxp.quantize_complex_raw(fields * plan.input_scale, plan.bit_depth), plan.bit_depth)
    for block in build_schedule(plan, link):
        if isinstance(block, LinearBlock):
            resp = dispersion_response(block.length, link, N, signal.sample_rate)
            fields = dsp.overlap_save_array(fields, resp, plan.backend)
        else:
            k_phase = MANAKOV_FACTOR * link.gamma * block.step.l_eff * p_launch
            if fixed:
                fields = _nonlinear_fxp(fields, block, k_phase, plan)
            else:
                fields = _nonlinear_float(fields, block, k_phase)
    if fixed:
        fields = fields / plan.input_scale
    return signal.with_fields(fields[0], fields[1])


def _expect(plan: NlcPlan, algorithm: str) -> None:
    if plan.algorithm != algorithm:
        raise ConfigurationError(f"plan is for {plan.algorithm}, not {algorithm}")


def cdc(signal: DualPolSignal, link: LinkSpec, plan: NlcPlan | None = None) -> DualPolSignal:
    plan = plan or NlcPlan.cdc()
    _expect(plan, "cdc")
    return apply_plan(signal, link, plan)


def dbp(signal: DualPolSignal, link: LinkSpec, plan: NlcPlan) -> DualPolSignal:
    _expect(plan, "dbp")
    return apply_plan(signal, link, plan)


def essfm(signal: DualPolSignal, link: LinkSpec, plan: NlcPlan) -> DualPolSignal:
    _expect(plan, "essfm")
    return apply_plan(signal, link, plan)


# ---------------------------------------------------------------------------
# analysis helpers
# ---------------------------------------------------------------------------

def essfm_filter_response(coeffs: Sequence[float], n_points: int = 1024):
    """Magnitude response (dB) of the symmetric power filter.

    Returns ``(freq, mag_db)`` with ``freq`` in units of pi rad/sample over
    ``[0, 1]``.
    """
    taps = symmetric_taps(coeffs)
    nfft = max(2 * n_points, taps.size)
    H = np.fft.rfft(taps, nfft)[: n_points + 1]
    freq = np.linspace(0.0, 1.0, n_points + 1)
    with np.errstate(divide="ignore"):
        mag = 20 * np.log10(np.abs(H))
    return freq, mag


def essfm_nonlinear_mults(nc: int, n_spans: int) -> int:
    """Real multiplications per symbol of the ESSFM nonlinear operator."""
    return n_spans * (2 * nc + 1)


def multiplication_count(plan: NlcPlan, link: LinkSpec) -> dict:
    """Complexity tally for reporting only.

    ``nonlinear`` follows ``N_s (2 N_c + 1)`` for the ESSFM and counts one
    multiplication per nonlinear block for DBP (the ``N_c = 0`` case);
    ``fft_complex_ops_per_block`` is ``4 (N/2) log2 N``.
    """
    N = plan.fft_size
    if plan.algorithm == "cdc":
        nl, nl_blocks = 0, 0
    elif plan.algorithm == "dbp":
        nl, nl_blocks = plan.steps_per_link, plan.steps_per_link
    else:
        nl, nl_blocks = essfm_nonlinear_mults(len(plan.coeffs) - 1, link.span_count), 1
    return {
        "nonlinear": nl,
        "nonlinear_blocks": nl_blocks,
        "linear_blocks": nl_blocks + 1,
        "fft_complex_ops_per_block": 4 * (N // 2) * plan.fft_size_exp,
    }


# ---------------------------------------------------------------------------
# coefficient files
# ---------------------------------------------------------------------------

def write_coefficients(path, coeffs: Sequence[float], launch_power_dbm: float,
                       fmt: str, link_length_m: float) -> None:
    """Header line ``n_coeffs launch_power_dbm format link_length_m``, then one
    coefficient per line."""
    lines = [f"{len(coeffs)} {launch_power_dbm!r} {fmt} {float(link_length_m)!r}"]
    lines += [repr(float(c)) for c in coeffs]
    Path(path).write_text("\n".join(lines) + "\n")


def read_coefficients(path) -> tuple[np.ndarray, dict]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ConfigurationError(f"{path} is empty")
    head = lines[0].split()
    if len(head) != 4:
        raise ConfigurationError(f"{path}: malformed header {lines[0]!r}")
    n = int(head[0])
    coeffs = np.array([float(v) for v in lines[1:]])
    if coeffs.size != n:
        raise ConfigurationError(f"{path}: header says {n} coefficients, found {coeffs.size}")
    meta = {"n_coeffs": n, "launch_power_dbm": float(head[1]), "format": head[2],
            "link_length_m": float(head[3])}
    return coeffs, meta
