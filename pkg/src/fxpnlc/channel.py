"""
Transmitter and forward fiber channel (always double precision).

Dual-polarization QPSK/16QAM symbols are RRC shaped in the frequency domain
and propagated with a symmetric split-step solver of the Manakov equation,
span by span, each span followed by an EDFA that restores the span loss and
adds ASE noise.

Sign convention: the forward linear step multiplies the spectrum by
``exp(+1j * beta2/2 * w**2 * z)`` and the nonlinear step rotates by
``exp(+1j * 8/9 * gamma * P * Leff)``; back propagation uses the conjugates.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
import json
import math
import struct
from pathlib import Path

import numpy as np
import scipy.constants as const

from .errors import ConfigurationError
from .signal import DualPolSignal, SYMBOL_RATE

FORMATS = ("QPSK", "16QAM")
MANAKOV_FACTOR = 8.0 / 9.0


def dbm_to_w(p_dbm: float) -> float:
    return 1e-3 * 10.0 ** (p_dbm / 10.0)


def w_to_dbm(p_w: float) -> float:
    return 10.0 * math.log10(p_w / 1e-3)


@dataclass(frozen=True)
class LinkSpec:
    """Fiber, amplifier and link parameters (SI units unless the name says otherwise)."""

    alpha_db_per_km: float = 0.2
    dispersion_ps_nm_km: float = 17.0
    gamma_per_w_km: float = 1.2
    span_length_m: float = 40e3
    span_count: int = 25
    sim_step_m: float = 100.0
    edfa_nf_db: float = 5.0
    wavelength_m: float = 1550e-9

    def __post_init__(self):
        if self.span_count < 1:
            raise ConfigurationError("span_count must be >= 1")
        for name in ("span_length_m", "sim_step_m", "wavelength_m"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.alpha_db_per_km < 0 or self.gamma_per_w_km < 0:
            raise ConfigurationError("loss and nonlinearity must be non-negative")
        steps = self.span_length_m / self.sim_step_m
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigurationError("sim_step_m must divide span_length_m")

    @property
    def alpha(self) -> float:
        """Power attenuation coefficient in 1/m."""
        return self.alpha_db_per_km * math.log(10) / 10.0 / 1e3

    @property
    def beta2(self) -> float:
        """Group velocity dispersion in s^2/m."""
        D = self.dispersion_ps_nm_km * 1e-12 / (1e-9 * 1e3)
        return -D * self.wavelength_m ** 2 / (2 * math.pi * const.c)

    @property
    def gamma(self) -> float:
        """Nonlinear coefficient in 1/(W m)."""
        return self.gamma_per_w_km / 1e3

    @property
    def carrier_frequency(self) -> float:
        return const.c / self.wavelength_m

    @property
    def total_length(self) -> float:
        return self.span_length_m * self.span_count

    @property
    def span_loss_db(self) -> float:
        return self.alpha_db_per_km * self.span_length_m / 1e3

    @property
    def leff_span(self) -> float:
        return effective_length(self.span_length_m, self.alpha)

    @property
    def steps_per_span(self) -> int:
        return int(round(self.span_length_m / self.sim_step_m))


def effective_length(length: float, alpha: float) -> float:
    if alpha == 0:
        return length
    return -math.expm1(-alpha * length) / alpha


@dataclass(frozen=True)
class TxConfig:
    format: str = "QPSK"
    n_symbols: int = 2 ** 14
    rrc_rolloff: float = 0.01
    seed: int = 1
    samples_per_symbol: int = 4
    symbol_rate: float = SYMBOL_RATE

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ConfigurationError(f"unsupported modulation format {self.format!r}")
        if not 0 < self.rrc_rolloff <= 1:
            raise ConfigurationError("RRC rolloff must lie in (0, 1]")
        if self.n_symbols < 1:
            raise ConfigurationError("n_symbols must be positive")

    @property
    def n_samples(self) -> int:
        return self.n_symbols * self.samples_per_symbol


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def generate_symbols(cfg: TxConfig) -> np.ndarray:
    """Unit-energy symbols, shape ``(2, n_symbols)``, deterministic in ``cfg.seed``."""
    rng = _rng(cfg.seed, 0)
    if cfg.format == "QPSK":
        bits = rng.integers(0, 2, size=(2, 2, cfg.n_symbols))
        return ((2 * bits[0] - 1) + 1j * (2 * bits[1] - 1)) / math.sqrt(2)
    levels = np.array([-3.0, -1.0, 1.0, 3.0])
    idx = rng.integers(0, 4, size=(2, 2, cfg.n_symbols))
    return (levels[idx[0]] + 1j * levels[idx[1]]) / math.sqrt(10)


def rrc_response(f: np.ndarray, symbol_rate: float, rolloff: float) -> np.ndarray:
    """Root-raised-cosine amplitude response (peak 1) at frequencies ``f`` in Hz."""
    T = 1.0 / symbol_rate
    af = np.abs(f)
    f1 = (1 - rolloff) / (2 * T)
    f2 = (1 + rolloff) / (2 * T)
    H = np.zeros_like(af)
    H[af <= f1] = 1.0
    band = (af > f1) & (af <= f2)
    H[band] = np.sqrt(0.5 * (1 + np.cos(math.pi * T / rolloff * (af[band] - f1))))
    return H


def rrc_filter(fields: np.ndarray, sample_rate: float, symbol_rate: float,
               rolloff: float) -> np.ndarray:
    """Circular frequency-domain RRC filtering along the last axis."""
    n = fields.shape[-1]
    H = rrc_response(np.fft.fftfreq(n, d=1.0 / sample_rate), symbol_rate, rolloff)
    return np.fft.ifft(np.fft.fft(fields, axis=-1) * H, axis=-1)


def rrc_shape(symbols: np.ndarray, rolloff: float = 0.01, sps: int = 4,
              symbol_rate: float = SYMBOL_RATE) -> DualPolSignal:
    """Upsample to ``sps`` and RRC shape; output normalized to unit total power."""
    if sps < 2:
        raise ConfigurationError("need at least 2 samples per symbol")
    symbols = np.atleast_2d(symbols)
    up = np.zeros((2, symbols.shape[-1] * sps), dtype=np.complex128)
    up[:, ::sps] = symbols
    fs = symbol_rate * sps
    shaped = rrc_filter(up, fs, symbol_rate, rolloff)
    power = np.mean(np.sum(np.abs(shaped) ** 2, axis=0))
    shaped /= math.sqrt(power)
    return DualPolSignal(shaped[0], shaped[1], fs, sps)


def transmit(cfg: TxConfig) -> tuple[np.ndarray, DualPolSignal]:
    symbols = generate_symbols(cfg)
    return symbols, rrc_shape(symbols, cfg.rrc_rolloff, cfg.samples_per_symbol, cfg.symbol_rate)


# ---------------------------------------------------------------------------
# fiber
# ---------------------------------------------------------------------------

def _omega(n: int, sample_rate: float) -> np.ndarray:
    return 2 * np.pi * np.fft.fftfreq(n, d=1.0 / sample_rate)


def propagate_fiber(fields: np.ndarray, length: float, link: LinkSpec, sample_rate: float,
                    step: float | None = None) -> np.ndarray:
    """Symmetric split-step propagation of ``(2, n)`` fields over ``length`` metres.

    Each step is half linear (dispersion and loss), a nonlinear rotation at
    mid-step, then the other half. The loss over the step is folded into the
    nonlinear length ``2 sinh(alpha h/2) / alpha``. Adjacent half steps are
    merged into one spectral multiplication.
    """
    fields = np.asarray(fields, dtype=np.complex128)
    if length == 0:
        return fields.copy()
    h = step or link.sim_step_m
    n_steps = max(1, int(round(length / h)))
    h = length / n_steps
    w2 = _omega(fields.shape[-1], sample_rate) ** 2
    a = link.alpha

    def linear(dz):
        return np.exp(1j * link.beta2 / 2 * w2 * dz - a / 2 * dz)

    X = np.fft.fft(fields, axis=-1)
    if link.gamma == 0:
        return np.fft.ifft(X * linear(length), axis=-1)

    half = linear(h / 2)
    full = linear(h)
    leff = h if a == 0 else 2 * math.sinh(a * h / 2) / a
    k_nl = MANAKOV_FACTOR * link.gamma * leff
    X *= half
    for i in range(n_steps):
        x = np.fft.ifft(X, axis=-1)
        power = np.sum(x.real ** 2 + x.imag ** 2, axis=0)
        x *= np.exp(1j * k_nl * power)
        X = np.fft.fft(x, axis=-1)
        X *= full if i < n_steps - 1 else half
    return np.fft.ifft(X, axis=-1)


def fiber_span(signal: DualPolSignal, length: float, link: LinkSpec) -> DualPolSignal:
    out = propagate_fiber(signal.fields, length, link, signal.sample_rate)
    return signal.with_fields(out[0], out[1])


def ase_variance(gain_db: float, nf_db: float, sample_rate: float, carrier_frequency: float) -> float:
    """Per-sample complex ASE variance per polarization."""
    G = 10 ** (gain_db / 10)
    F = 10 ** (nf_db / 10)
    return (G - 1) * F * const.h * carrier_frequency * sample_rate / 2


def edfa(signal: DualPolSignal, gain_db: float, nf_db: float | None = 5.0,
         seed: int | np.random.Generator | None = None,
         carrier_frequency: float = const.c / 1550e-9) -> DualPolSignal:
    """Amplify by ``gain_db`` and add circular Gaussian ASE; ``nf_db=None`` is noiseless."""
    if gain_db < 0:
        raise ConfigurationError("EDFA gain must be at least 0 dB")
    g = math.sqrt(10 ** (gain_db / 10))
    x, y = signal.x * g, signal.y * g
    if nf_db is not None:
        var = ase_variance(gain_db, nf_db, signal.sample_rate, carrier_frequency)
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        noise = rng.normal(scale=math.sqrt(var / 2), size=(4, len(signal)))
        x = x + noise[0] + 1j * noise[1]
        y = y + noise[2] + 1j * noise[3]
    return signal.with_fields(x, y)


def propagate_link(signal: DualPolSignal, link: LinkSpec, launch_power_dbm: float,
                   seed: int = 1, noiseless: bool = False) -> DualPolSignal:
    """Launch at ``launch_power_dbm`` (total over both polarizations) and
    propagate through every span and amplifier.

    ASE for span ``i`` is drawn from a stream keyed by ``(seed, i)`` so the
    result does not depend on how runs are scheduled.
    """
    p = signal.power()
    scale = math.sqrt(dbm_to_w(launch_power_dbm) / p) if p > 0 else math.nan
    if not math.isfinite(scale):
        raise ConfigurationError("cannot scale signal to the requested launch power")
    out = signal.scaled(scale)
    out = out.with_fields(out.x, out.y, mean_power_dbm=launch_power_dbm)
    for span in range(link.span_count):
        out = fiber_span(out, link.span_length_m, link)
        out = edfa(out, link.span_loss_db, None if noiseless else link.edfa_nf_db,
                   _rng(seed, 1, span), link.carrier_frequency)
    if not (np.all(np.isfinite(out.x)) and np.all(np.isfinite(out.y))):
        raise ConfigurationError("propagation produced non-finite samples")
    return out


# ---------------------------------------------------------------------------
# waveform dump
# ---------------------------------------------------------------------------

_MAGIC = b"FXPNLCWF"


def save_signal(path, signal: DualPolSignal, **extra) -> None:
    """Write a waveform: magic, uint32 header length, JSON header, then
    little-endian float64 samples interleaved as x_re, x_im, y_re, y_im."""
    header = {
        "n_samples": len(signal),
        "sample_rate": signal.sample_rate,
        "samples_per_symbol": signal.samples_per_symbol,
        "mean_power_dbm": signal.mean_power_dbm,
        **extra,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    data = np.empty((len(signal), 4), dtype="<f8")
    data[:, 0], data[:, 1] = signal.x.real, signal.x.imag
    data[:, 2], data[:, 3] = signal.y.real, signal.y.imag
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(data.tobytes())


def load_signal(path) -> tuple[DualPolSignal, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ConfigurationError(f"{path} is not a waveform dump")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + hlen])
    data = np.frombuffer(raw[12 + hlen:], dtype="<f8").reshape(-1, 4)
    if data.shape[0] != header["n_samples"]:
        raise ConfigurationError(f"{path} is truncated")
    sig = DualPolSignal(data[:, 0] + 1j * data[:, 1], data[:, 2] + 1j * data[:, 3],
                        header["sample_rate"], header["samples_per_symbol"],
                        header.get("mean_power_dbm"))
    return sig, header


def link_key(link: LinkSpec) -> dict:
    return asdict(link)
