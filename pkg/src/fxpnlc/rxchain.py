"""
Ideal coherent receiver around the equalizer under test.

The chain is: resample 4 -> 2 samples/symbol, normalize to unit power, run
the NLC plan, RRC matched filter, pick one sample per symbol, normalize, and
estimate SNR against the known transmitted symbols. Everything except the
NLC block runs in double precision.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .channel import LinkSpec, rrc_filter
from .errors import ConfigurationError
from .nlc import NlcPlan, apply_plan
from .signal import DualPolSignal

SNR_WINDOW = 2 ** 14
ESTIMATOR = "data-aided global complex scalar"


@dataclass(frozen=True)
class SnrEstimate:
    snr_db: float
    n_symbols_used: int
    per_pol: tuple[float, float]


def _to_db(x: float) -> float:
    if x == math.inf:
        return math.inf
    return 10.0 * math.log10(x)


def normalize(signal: DualPolSignal) -> DualPolSignal:
    """Scale to unit mean dual-pol power."""
    p = signal.power()
    if not p > 0:
        raise ConfigurationError("cannot normalize a zero signal")
    return signal.scaled(1.0 / math.sqrt(p))


def resample(signal: DualPolSignal, sps_out: int) -> DualPolSignal:
    """Spectral resampling to ``sps_out`` samples/symbol (integer decimation).

    Keeps the lowest ``n_out`` FFT bins, which is an ideal low-pass at the new
    Nyquist frequency.
    """
    sps_in = signal.samples_per_symbol
    if sps_out < 1 or sps_in % sps_out:
        raise ConfigurationError(f"cannot decimate {sps_in} -> {sps_out} samples/symbol")
    factor = sps_in // sps_out
    n = len(signal)
    if n % factor:
        raise ConfigurationError(f"{n} samples not divisible by decimation factor {factor}")
    if factor == 1:
        return signal
    m = n // factor
    X = np.fft.fft(signal.fields, axis=-1)
    keep = np.fft.fftfreq(n) * n
    sel = np.abs(keep) < m / 2
    Y = np.zeros((2, m), dtype=np.complex128)
    Y[:, np.asarray(keep[sel], dtype=int) % m] = X[:, sel]
    # the shared Nyquist bin is split between +m/2 and -m/2
    nyq = m // 2
    Y[:, nyq] = 0.5 * (X[:, nyq] + X[:, n - nyq])
    y = np.fft.ifft(Y, axis=-1) / factor
    return signal.with_fields(y[0], y[1], sample_rate=signal.sample_rate / factor,
                              samples_per_symbol=sps_out)


def frontend(signal: DualPolSignal) -> DualPolSignal:
    """Received optical field at 4 sps -> unit-power samples at 2 sps."""
    return normalize(resample(signal, 2))


def matched_filter_and_decimate(signal: DualPolSignal, rolloff: float = 0.01) -> np.ndarray:
    """RRC matched filter then one sample per symbol; returns ``(2, n_symbols)``.

    Each polarization is scaled to unit mean symbol energy.
    """
    sps = signal.samples_per_symbol
    y = rrc_filter(signal.fields, signal.sample_rate, signal.symbol_rate, rolloff)[:, ::sps]
    energy = np.mean(np.abs(y) ** 2, axis=-1, keepdims=True)
    if np.any(energy == 0):
        raise ConfigurationError("matched filter output is identically zero")
    return y / np.sqrt(energy)


def central_window(n: int, window: int) -> slice:
    if window > n:
        raise ConfigurationError(f"SNR window {window} exceeds {n} symbols")
    start = (n - window) // 2
    return slice(start, start + window)


def estimate_snr(rx: np.ndarray, tx: np.ndarray, window: int = SNR_WINDOW) -> SnrEstimate:
    """Data-aided SNR over the central ``window`` symbols.

    Per polarization ``a = <rx, tx>/<tx, tx>`` and ``SNR = |a|^2 E|tx|^2 / E|rx - a tx|^2``;
    the two polarizations are averaged in linear units.
    """
    rx = np.atleast_2d(np.asarray(rx, dtype=np.complex128))
    tx = np.atleast_2d(np.asarray(tx, dtype=np.complex128))
    if rx.shape != tx.shape:
        raise ConfigurationError(f"rx {rx.shape} and tx {tx.shape} are not aligned")
    sl = central_window(rx.shape[-1], window)
    lin = []
    for r, t in zip(rx[:, sl], tx[:, sl]):
        ett = np.vdot(t, t).real
        a = np.vdot(t, r) / ett
        err = float(np.sum(np.abs(r - a * t) ** 2))
        sig = abs(a) ** 2 * ett
        lin.append(math.inf if err == 0.0 else sig / err)
    per_pol = tuple(_to_db(v) for v in lin)
    return SnrEstimate(_to_db(float(np.mean(lin))), window, per_pol)


def default_window(n_symbols: int) -> int:
    """Largest power of two, at most ``SNR_WINDOW``, leaving a quarter-record guard each side."""
    if n_symbols < 4:
        raise ConfigurationError("too few symbols for SNR estimation")
    w = 1 << int(math.floor(math.log2(n_symbols // 2)))
    return min(SNR_WINDOW, w)


def equalize(received: DualPolSignal, link: LinkSpec, plan: NlcPlan) -> DualPolSignal:
    """Frontend then the equalizer; output at 2 sps."""
    return apply_plan(frontend(received), link, plan)


def run_chain(received: DualPolSignal, tx_symbols: np.ndarray, link: LinkSpec, plan: NlcPlan,
              rolloff: float = 0.01, window: int | None = None) -> SnrEstimate:
    """Full receiver: frontend, NLC, matched filter, decimation and SNR."""
    eq = equalize(received, link, plan)
    rx = matched_filter_and_decimate(eq, rolloff)
    return estimate_snr(rx, tx_symbols, window or default_window(rx.shape[-1]))
