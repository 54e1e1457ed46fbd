"""Receiver frontend, matched filter and the data-aided SNR estimator."""
import math

import numpy as np
import pytest

from fxpnlc import channel, rxchain
from fxpnlc.channel import LinkSpec, TxConfig
from fxpnlc.errors import ConfigurationError
from fxpnlc.nlc import NlcPlan
from fxpnlc.signal import DualPolSignal


@pytest.fixture(scope="module")
def b2b():
    return channel.transmit(TxConfig(n_symbols=2 ** 12))


class TestFrontend:
    def test_unit_power_two_sps(self, b2b):
        _, sig = b2b
        out = rxchain.frontend(sig.scaled(0.01))
        assert out.power() == pytest.approx(1, rel=1e-12)
        assert out.samples_per_symbol == 2 and out.sample_rate == 64e9
        assert len(out) == len(sig) // 2

    def test_in_band_tone_preserved(self):
        n = 4096
        fs = 128e9
        t = np.arange(n) / fs
        f0 = fs * 320 / n  # 10 GHz, on the FFT grid
        tone = np.exp(2j * np.pi * f0 * t)
        sig = DualPolSignal(tone, 0.5 * tone, fs, 4)
        out = rxchain.resample(sig, 2)
        t2 = np.arange(n // 2) / (fs / 2)
        assert np.allclose(out.x, np.exp(2j * np.pi * f0 * t2), atol=1e-12)

    def test_out_of_band_removed(self):
        n = 4096
        fs = 128e9
        t = np.arange(n) / fs
        tone = np.exp(2j * np.pi * fs * 1200 / n * t)  # 37.5 GHz
        out = rxchain.resample(DualPolSignal(tone, tone, fs, 4), 2)
        assert np.max(np.abs(out.x)) < 1e-12

    def test_bad_factor(self, b2b):
        with pytest.raises(ConfigurationError):
            rxchain.resample(b2b[1], 3)

    def test_zero_signal(self):
        z = np.zeros(16, complex)
        with pytest.raises(ConfigurationError):
            rxchain.normalize(DualPolSignal(z, z, 1.0, 2))


class TestMatchedFilter:
    def test_back_to_back(self, b2b):
        sym, sig = b2b
        rx = rxchain.matched_filter_and_decimate(rxchain.frontend(sig))
        assert rx.shape == sym.shape
        assert rxchain.estimate_snr(rx, sym, 2 ** 11).snr_db > 60

    def test_unit_energy(self, b2b):
        _, sig = b2b
        rx = rxchain.matched_filter_and_decimate(rxchain.frontend(sig))
        assert np.allclose(np.mean(np.abs(rx) ** 2, axis=-1), 1)


class TestSnrEstimator:
    def test_perfect(self):
        s = np.exp(2j * np.pi * np.random.default_rng(0).random((2, 1024)))
        est = rxchain.estimate_snr(s, s, 512)
        assert est.snr_db == math.inf and est.per_pol == (math.inf, math.inf)

    def test_known_noise(self):
        rng = np.random.default_rng(1)
        n = 2 ** 17
        tx = (rng.choice([-1, 1], (2, n)) + 1j * rng.choice([-1, 1], (2, n))) / math.sqrt(2)
        noise = (rng.standard_normal((2, n)) + 1j * rng.standard_normal((2, n))) * math.sqrt(0.05)
        est = rxchain.estimate_snr(tx + noise, tx, 2 ** 16)
        assert est.snr_db == pytest.approx(10.0, abs=0.1)
        assert est.n_symbols_used == 2 ** 16

    def test_complex_scale_invariant(self):
        rng = np.random.default_rng(2)
        tx = np.exp(1j * rng.uniform(0, 2 * np.pi, (2, 4096)))
        rx = tx + 0.1 * rng.standard_normal((2, 4096))
        a = rxchain.estimate_snr(rx, tx, 2048).snr_db
        b = rxchain.estimate_snr(rx * 3.7 * np.exp(0.8j), tx, 2048).snr_db
        assert a == pytest.approx(b, abs=1e-9)

    def test_guard_excluded(self):
        rng = np.random.default_rng(3)
        tx = np.exp(1j * rng.uniform(0, 2 * np.pi, (2, 4096)))
        rx = tx.copy()
        rx[:, :1000] = 0
        rx[:, -1000:] = 0
        assert rxchain.estimate_snr(rx, tx, 2048).snr_db == math.inf

    def test_linear_average_over_pols(self):
        rng = np.random.default_rng(4)
        tx = np.exp(1j * rng.uniform(0, 2 * np.pi, (2, 2 ** 15)))
        n = rng.standard_normal((2, 2 ** 15)) + 1j * rng.standard_normal((2, 2 ** 15))
        rx = tx + n * np.array([[0.1], [0.3]])
        est = rxchain.estimate_snr(rx, tx, 2 ** 14)
        lin = np.mean([10 ** (p / 10) for p in est.per_pol])
        assert est.snr_db == pytest.approx(10 * math.log10(lin))
        assert est.per_pol[0] > est.per_pol[1]

    def test_shape_mismatch(self):
        with pytest.raises(ConfigurationError):
            rxchain.estimate_snr(np.ones((2, 100)), np.ones((2, 101)), 50)

    def test_window_too_large(self):
        with pytest.raises(ConfigurationError):
            rxchain.estimate_snr(np.ones((2, 100)), np.ones((2, 100)), 128)

    @pytest.mark.parametrize("n,w", [(2 ** 16, 2 ** 14), (2 ** 14, 2 ** 13), (3000, 1024),
                                     (2 ** 17, 2 ** 14)])
    def test_default_window(self, n, w):
        assert rxchain.default_window(n) == w


class TestChain:
    def test_deterministic_and_cdc_recovers(self):
        link = LinkSpec(span_count=2)
        sym, sig = channel.transmit(TxConfig(n_symbols=2 ** 12))
        rx = channel.propagate_link(sig, link, -2.0, seed=3)
        a = rxchain.run_chain(rx, sym, link, NlcPlan.cdc(fft_size_exp=9))
        b = rxchain.run_chain(rx, sym, link, NlcPlan.cdc(fft_size_exp=9))
        assert a == b
        assert 20 < a.snr_db < 40
        nothing = rxchain.estimate_snr(
            rxchain.matched_filter_and_decimate(rxchain.frontend(rx)), sym, 2048)
        assert nothing.snr_db < 5

    def test_phase_rotation_ignored(self):
        link = LinkSpec(span_count=1)
        sym, sig = channel.transmit(TxConfig(n_symbols=2 ** 12))
        rx = channel.propagate_link(sig, link, 0.0, seed=3)
        rot = rx.with_fields(rx.x * np.exp(1.1j), rx.y * np.exp(-0.4j))
        plan = NlcPlan.cdc(fft_size_exp=9)
        assert rxchain.run_chain(rx, sym, link, plan).snr_db == pytest.approx(
            rxchain.run_chain(rot, sym, link, plan).snr_db, abs=1e-9)
