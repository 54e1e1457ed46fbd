"""
Offline ESSFM coefficient optimization.

The objective is the negated SNR (dB) of the full float64 receiver with an
ESSFM of coefficients ``c``, evaluated on one fixed noisy realization
(common random numbers). Minimization is quasi-Newton BFGS with central
finite-difference gradients; scipy's implementation supplies the line search
(a Wolfe search with cubic interpolation), and a relative objective-decrease
stop is added on top.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from typing import Callable

import numpy as np
from scipy import optimize as sopt

from . import dsp
from .channel import LinkSpec, MANAKOV_FACTOR, TxConfig, dbm_to_w, propagate_link, transmit
from .errors import ConfigurationError
from .nlc import (NlcPlan, QuantizedCoeffs, dispersion_response, filtered_power,
                  quantize_coefficients, virtual_steps)
from .rxchain import default_window, estimate_snr, frontend, matched_filter_and_decimate
from .signal import DualPolSignal

log = logging.getLogger(__name__)

PENALTY = 1e3
FD_REL_STEP = 1e-4

__all__ = ["OptimProblem", "EssfmObjective", "OptimReport", "optimize", "minimize",
           "quantize_coefficients", "QuantizedCoeffs", "initial_coeffs"]


def initial_coeffs(n_coeffs: int) -> np.ndarray:
    """``c0 = 1/2`` and zeros elsewhere: the single-step DBP point."""
    c = np.zeros(n_coeffs)
    c[0] = 0.5
    return c


@dataclass(frozen=True)
class OptimProblem:
    link: LinkSpec
    tx: TxConfig
    launch_power_dbm: float
    n_coeffs: int
    init: tuple[float, ...] | None = None
    rel_tol: float = 1e-3
    max_iters: int = 100
    noise_seed: int = 1
    wh_split: float = 0.4
    fft_size_exp: int = 12

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ConfigurationError("rel_tol must be positive")
        n = self.n_coeffs
        if n < 1 or n > 256 or n & (n - 1):
            raise ConfigurationError(f"n_coeffs must be a power of two in [1, 256], got {n}")
        if self.init is not None and len(self.init) != n:
            raise ConfigurationError("init has the wrong length")

    @property
    def x0(self) -> np.ndarray:
        return initial_coeffs(self.n_coeffs) if self.init is None else np.array(self.init, float)

    def plan(self, coeffs) -> NlcPlan:
        return NlcPlan.essfm(coeffs, wh_split=self.wh_split, fft_size_exp=self.fft_size_exp,
                             launch_power_dbm=self.launch_power_dbm)


class EssfmObjective:
    """``c -> -SNR_dB`` with everything upstream of the nonlinear block cached.

    The received waveform, the frontend and the leading dispersion block do
    not depend on ``c``, so each evaluation costs one power filter, one
    rotation, one dispersion block and the matched filter.
    """

    def __init__(self, problem: OptimProblem, received: DualPolSignal | None = None,
                 tx_symbols: np.ndarray | None = None):
        self.problem = problem
        link = problem.link
        if received is None:
            tx_symbols, sig = transmit(problem.tx)
            received = propagate_link(sig, link, problem.launch_power_dbm, seed=problem.noise_seed)
        self.tx_symbols = tx_symbols
        front = frontend(received)
        self._template = front
        N = 1 << problem.fft_size_exp
        L = link.total_length
        lead = dispersion_response(problem.wh_split * L, link, N, front.sample_rate)
        self._trail = dispersion_response((1 - problem.wh_split) * L, link, N, front.sample_rate)
        self._fields = dsp.overlap_save_array(front.fields, lead, "float64")
        f = self._fields
        self._power = f[0].real ** 2 + f[0].imag ** 2 + f[1].real ** 2 + f[1].imag ** 2
        step = virtual_steps(link, 1, problem.wh_split)[0]
        self._k_phase = MANAKOV_FACTOR * link.gamma * step.l_eff * dbm_to_w(problem.launch_power_dbm)
        self._window = default_window(tx_symbols.shape[-1])
        self.n_evals = 0

    def snr(self, c) -> float:
        c = np.asarray(c, dtype=np.float64)
        phi = self._k_phase * filtered_power(self._power, c)
        out = dsp.overlap_save_array(self._fields * np.exp(-1j * phi), self._trail, "float64")
        sig = self._template.with_fields(out[0], out[1])
        rx = matched_filter_and_decimate(sig, self.problem.tx.rrc_rolloff)
        return estimate_snr(rx, self.tx_symbols, self._window).snr_db

    def __call__(self, c) -> float:
        self.n_evals += 1
        if not np.all(np.isfinite(c)):
            return PENALTY
        v = -self.snr(c)
        if not math.isfinite(v):
            log.warning("non-finite SNR at c=%s, returning penalty", np.asarray(c)[:4])
            return PENALTY
        return v


@dataclass
class OptimReport:
    x: np.ndarray
    fun: float
    iterations: int
    n_evals: int
    grad_norm: float
    status: str
    history: list = field(default_factory=list)

    @property
    def snr_db(self) -> float:
        return -self.fun

    def log_lines(self) -> list[str]:
        lines = [f"iter={i} objective={f!r}" for i, f in enumerate(self.history)]
        lines.append(f"status={self.status} iterations={self.iterations} evals={self.n_evals} "
                     f"objective={self.fun!r} grad_norm={self.grad_norm!r}")
        return lines


class _RelTolStop(Exception):
    pass


def _central_grad(fun: Callable, x: np.ndarray, rel_step: float = FD_REL_STEP) -> np.ndarray:
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * max(abs(x[i]), 1.0)
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def minimize(fun: Callable, x0, rel_tol: float = 1e-3, max_iters: int = 100,
             gtol: float = 1e-8) -> OptimReport:
    """BFGS with central-difference gradients and a relative-decrease stop.

    Stops when an iteration lowers the objective by less than
    ``rel_tol * |f|``. If the line search fails, one steepest-descent step
    with backtracking is tried before giving up with status ``"warning"``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    n_evals = [0]

    def f(x):
        n_evals[0] += 1
        return float(fun(x))

    history = [f(x0)]
    state = {"x": x0.copy(), "status": "max_iters"}

    def callback(intermediate_result):
        fx = float(intermediate_result.fun)
        prev = history[-1]
        history.append(fx)
        state["x"] = np.array(intermediate_result.x)
        if prev - fx < rel_tol * abs(prev):
            state["status"] = "converged"
            raise StopIteration

    res = sopt.minimize(f, x0, method="BFGS", jac=lambda x: _central_grad(f, x),
                        callback=callback,
                        options={"maxiter": max_iters, "gtol": gtol})
    x = np.asarray(res.x, dtype=np.float64)
    status = state["status"]
    if res.status == 0 and status == "max_iters":
        status = "converged"
    elif res.status == 2:
        # line search failure: one steepest-descent attempt
        fx = f(x)
        g = _central_grad(f, x)
        t = 1.0 / max(np.linalg.norm(g), 1e-12)
        status = "warning"
        for _ in range(30):
            xn = x - t * g
            fn = f(xn)
            if fn < fx:
                x, status = xn, "warning-recovered"
                history.append(fn)
                break
            t *= 0.5
        log.warning("line search failed; steepest-descent fallback: %s", status)
    fun_x = f(x)
    if fun_x > history[-1]:
        # keep the best visited point so the reported sequence stays monotone
        x, fun_x = state["x"], history[-1]
    grad = _central_grad(f, x)
    return OptimReport(x, fun_x, len(history) - 1, n_evals[0], float(np.linalg.norm(grad)),
                       status, history)


def optimize(problem: OptimProblem, objective: EssfmObjective | None = None) -> OptimReport:
    """Optimize ESSFM coefficients for ``problem``."""
    objective = objective or EssfmObjective(problem)
    report = minimize(objective, problem.x0, problem.rel_tol, problem.max_iters)
    for line in report.log_lines():
        log.info(line)
    return report
