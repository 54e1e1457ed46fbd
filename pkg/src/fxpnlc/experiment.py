"""
Sweep orchestration: configuration, per-point runs, FFT-size selection,
result records and the per-figure CSV tables.

A sweep runs in stages:

1. propagate one waveform per (format, launch power, seed) and cache it;
2. optimize ESSFM coefficients per (format, power, n_coeffs) and cache them;
3. float64 runs over launch power for CDC, DBP and ESSFM;
4. fixed-point runs at each algorithm's best float64 launch power, over bit
   depth and FFT size, CDC first so every record carries its CDC baseline.

Every run is an :class:`ExperimentRecord` appended to ``records.jsonl`` and
keyed by a hash of its full configuration, so an interrupted sweep resumes
where it stopped. Tables are built from records only (``report``).
"""
from __future__ import annotations

import configparser
from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import asdict, dataclass, fields
import functools
import hashlib
import io
import json
import logging
import math
from pathlib import Path
import time
from typing import Callable, Iterable, Sequence

import numpy as np

from .channel import LinkSpec, TxConfig, link_key, load_signal, propagate_link, save_signal, transmit
from .errors import ConfigurationError
from .nlc import NlcPlan, essfm_filter_response, read_coefficients, write_coefficients
from .optim import EssfmObjective, OptimProblem, optimize
from .rxchain import ESTIMATOR, default_window, run_chain
from .signal import DualPolSignal

log = logging.getLogger(__name__)

try:
    from importlib.metadata import version as _pkg_version
    VERSION = _pkg_version("artifact")
except Exception:  # pragma: no cover - not installed
    VERSION = "0+unknown"

FFT_TIE_DB = 0.01
CSV_NAMES = ("dbp_over_cdc.csv", "spl_sweep.csv", "essfm_snr_vs_power.csv",
             "essfm_dsnr_vs_taps.csv", "essfm_filter_response.csv", "essfm_dsnr_vs_bits.csv")


class MissingCoefficientsError(ConfigurationError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _frange(start: float, stop: float, step: float) -> list[float]:
    n = int(round((stop - start) / step))
    return [round(start + i * step, 10) for i in range(n + 1)]


SCENARIOS = {
    "desk": dict(
        span_count=5, n_symbols=2 ** 14, formats=("QPSK", "16QAM"), dbp_formats=("QPSK",),
        seeds=(1,), bit_depths=tuple(range(7, 17)), steps_per_link=(1, 2, 5, 10, 20),
        n_coeffs=(4, 16, 64), launch_power_dbm=(0.0, 2.0, 4.0, 6.0),
        fft_size_exp=tuple(range(7, 12)), float_fft_size_exp=11, optim_max_iters=30,
    ),
    "full": dict(
        span_count=25, n_symbols=2 ** 16, formats=("QPSK", "16QAM"), dbp_formats=("QPSK",),
        seeds=(1,), bit_depths=tuple(range(7, 17)), steps_per_link=(1, 10, 25, 50),
        n_coeffs=(16, 32, 64, 128, 256), launch_power_dbm=tuple(_frange(-4.0, 0.0, 0.5)),
        fft_size_exp=tuple(range(5, 16)), float_fft_size_exp=13, optim_max_iters=100,
    ),
}


@dataclass(frozen=True)
class SweepConfig:
    """Grid and run options of one sweep (every axis must be non-empty)."""

    scenario: str = "desk"
    span_count: int = 5
    n_symbols: int = 2 ** 14
    formats: tuple[str, ...] = ("QPSK",)
    dbp_formats: tuple[str, ...] = ("QPSK",)
    seeds: tuple[int, ...] = (1,)
    bit_depths: tuple[int, ...] = tuple(range(7, 17))
    steps_per_link: tuple[int, ...] = (1, 2, 5, 10)
    n_coeffs: tuple[int, ...] = (4, 16, 64)
    launch_power_dbm: tuple[float, ...] = (0.0, 2.0, 4.0)
    fft_size_exp: tuple[int, ...] = tuple(range(7, 12))
    float_fft_size_exp: int = 11
    optim_max_iters: int = 30
    output_dir: str = "results"
    jobs: int = 1

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                object.__setattr__(self, f.name, tuple(v))
                v = tuple(v)
            if isinstance(v, tuple) and not v:
                raise ConfigurationError(f"axis {f.name!r} is empty")
        for fmt in self.formats + self.dbp_formats:
            TxConfig(format=fmt)
        for B in self.bit_depths:
            NlcPlan(bit_depth=B)
        for n in self.fft_size_exp + (self.float_fft_size_exp,):
            NlcPlan(fft_size_exp=n)
        for n in self.n_coeffs:
            NlcPlan.essfm(np.zeros(n))
        if any(k < 1 for k in self.steps_per_link):
            raise ConfigurationError("steps_per_link entries must be >= 1")
        if self.jobs < 1:
            raise ConfigurationError("jobs must be >= 1")
        LinkSpec(span_count=self.span_count)

    @classmethod
    def from_scenario(cls, name: str, **overrides) -> "SweepConfig":
        if name not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
        return cls(scenario=name, **{**SCENARIOS[name], **overrides})

    @classmethod
    def from_file(cls, path, scenario: str | None = None, **overrides) -> "SweepConfig":
        """Read ``key = value`` lines from the ``[sweep]`` section.

        Lists are comma separated; integer ranges may be written ``a..b``.
        Unlisted keys come from the named scenario.
        """
        cp = configparser.ConfigParser()
        if not cp.read(path):
            raise ConfigurationError(f"cannot read config {path}")
        if "sweep" not in cp:
            raise ConfigurationError(f"{path}: missing [sweep] section")
        sec = cp["sweep"]
        name = scenario or sec.get("scenario", "desk")
        types = {f.name: f.type for f in fields(cls)}
        parsed = {}
        for key, raw in sec.items():
            if key == "scenario":
                continue
            if key not in types:
                raise ConfigurationError(f"{path}: unknown key {key!r}")
            parsed[key] = _parse_value(key, raw, str(types[key]))
        return cls.from_scenario(name, **{**parsed, **overrides})

    @property
    def link(self) -> LinkSpec:
        return LinkSpec(span_count=self.span_count)

    def tx(self, fmt: str, seed: int) -> TxConfig:
        return TxConfig(format=fmt, n_symbols=self.n_symbols, seed=seed)


def _parse_value(key: str, raw: str, typ: str):
    raw = raw.strip()
    is_tuple = typ.startswith("tuple")
    elem = "int" if "int" in typ else "float" if "float" in typ else "str"
    conv = {"int": int, "float": float, "str": str}[elem]
    try:
        if not is_tuple:
            return conv(raw)
        items = []
        for tok in (t.strip() for t in raw.split(",")):
            if not tok:
                continue
            if ".." in tok and elem == "int":
                a, b = tok.split("..")
                items.extend(range(int(a), int(b) + 1))
            else:
                items.append(conv(tok))
        return tuple(items)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {raw!r}") from exc


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=float)


def point_key(plan: NlcPlan, link: LinkSpec, tx: TxConfig, seed: int) -> str:
    blob = _canonical({"plan": asdict(plan), "link": link_key(link), "tx": asdict(tx), "seed": seed})
    return hashlib.sha256(blob.encode()).hexdigest()[:20]


@dataclass
class ExperimentRecord:
    key: str
    plan: dict
    link: dict
    tx: dict
    seed: int
    snr_db: float
    per_pol: tuple = ()
    n_symbols_used: int = 0
    cdc_snr_db: float | None = None
    cdc_fft_size_exp: int | None = None
    delta_snr_over_cdc_db: float | None = None
    optimum: bool = False
    wall_time_s: float = 0.0
    version: str = VERSION
    status: str = "ok"
    error: str = ""
    estimator: str = ESTIMATOR
    wh_split_convention: str = "leading fraction"

    def to_json(self) -> str:
        d = asdict(self)
        for k in ("snr_db", "cdc_snr_db", "delta_snr_over_cdc_db"):
            if isinstance(d[k], float) and not math.isfinite(d[k]):
                d[k] = repr(d[k])
        d["per_pol"] = [repr(v) if not math.isfinite(v) else v for v in d["per_pol"]]
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ExperimentRecord":
        d = json.loads(line)
        for k in ("snr_db", "cdc_snr_db", "delta_snr_over_cdc_db"):
            if isinstance(d.get(k), str):
                d[k] = float(d[k])
        d["per_pol"] = tuple(float(v) for v in d.get("per_pol", ()))
        return cls(**d)

    def nlc_plan(self) -> NlcPlan:
        p = dict(self.plan)
        p["coeffs"] = tuple(p["coeffs"])
        return NlcPlan(**p)


class RecordStore:
    """Append-only JSONL file of records, indexed by key (last write wins)."""

    def __init__(self, path):
        self.path = Path(path)
        self.records: dict[str, ExperimentRecord] = {}
        if self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    r = ExperimentRecord.from_json(line)
                    self.records[r.key] = r

    def __contains__(self, key: str) -> bool:
        return key in self.records

    def get(self, key: str) -> ExperimentRecord | None:
        return self.records.get(key)

    def add(self, rec: ExperimentRecord) -> None:
        self.records[rec.key] = rec
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(rec.to_json() + "\n")

    def rewrite(self) -> None:
        tmp = self.path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            for k in sorted(self.records):
                fh.write(self.records[k].to_json() + "\n")
        tmp.replace(self.path)


# ---------------------------------------------------------------------------
# waveforms and coefficients
# ---------------------------------------------------------------------------

def _waveform_path(cache_dir: Path, link: LinkSpec, tx: TxConfig, power: float, seed: int) -> Path:
    blob = _canonical({"link": link_key(link), "tx": asdict(tx), "power": power, "seed": seed})
    return cache_dir / f"wf_{hashlib.sha256(blob.encode()).hexdigest()[:16]}.bin"


@functools.lru_cache(maxsize=4)
def _waveform_cached(link: LinkSpec, tx: TxConfig, power: float, seed: int,
                     cache_dir: str | None) -> tuple[np.ndarray, DualPolSignal]:
    symbols, sig = transmit(tx)
    if cache_dir is not None:
        path = _waveform_path(Path(cache_dir), link, tx, power, seed)
        if path.exists():
            return symbols, load_signal(path)[0]
    rx = propagate_link(sig, link, power, seed=seed)
    if cache_dir is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".part")
        save_signal(tmp, rx, n_symbols=tx.n_symbols, format=tx.format, seed=seed,
                    launch_power_dbm=power, span_count=link.span_count)
        tmp.replace(path)
    return symbols, rx


def waveform(link: LinkSpec, tx: TxConfig, power: float, seed: int,
             cache_dir=None) -> tuple[np.ndarray, DualPolSignal]:
    """Transmitted symbols and the received 4-sps field, cached on disk if asked."""
    return _waveform_cached(link, tx, float(power), int(seed),
                            None if cache_dir is None else str(cache_dir))


def coeff_path(cache_dir, fmt: str, power: float, n_coeffs: int, link: LinkSpec, seed: int) -> Path:
    km = link.total_length / 1e3
    return Path(cache_dir) / f"{fmt}_P{power:+.2f}_n{n_coeffs}_L{km:g}km_s{seed}.txt"


def load_coefficients(cache_dir, fmt, power, n_coeffs, link, seed) -> np.ndarray:
    path = coeff_path(cache_dir, fmt, power, n_coeffs, link, seed)
    if not path.exists():
        raise MissingCoefficientsError(
            f"no ESSFM coefficients at {path}; run the 'optimize' subcommand first")
    c, _ = read_coefficients(path)
    return c


def optimize_and_store(cache_dir, fmt, power, n_coeffs, link, tx, seed, max_iters=30,
                       fft_size_exp=11, force=False) -> Path:
    path = coeff_path(cache_dir, fmt, power, n_coeffs, link, seed)
    if path.exists() and not force:
        return path
    prob = OptimProblem(link, tx, power, n_coeffs, max_iters=max_iters, noise_seed=seed,
                        fft_size_exp=fft_size_exp)
    symbols, rx = waveform(link, tx, power, seed, Path(cache_dir).parent / "waveforms")
    rep = optimize(prob, EssfmObjective(prob, rx, symbols))
    path.parent.mkdir(parents=True, exist_ok=True)
    write_coefficients(path, rep.x, power, fmt, link.total_length)
    log.info("optimized %s: %s", path.name, rep.log_lines()[-1])
    return path


# ---------------------------------------------------------------------------
# points
# ---------------------------------------------------------------------------

def optimize_fft_size(evaluate: Callable[[int], float], exps: Sequence[int],
                      tie_db: float = FFT_TIE_DB) -> tuple[int, dict]:
    """Pick the FFT size exponent with the best SNR.

    Sizes within ``tie_db`` of the best count as ties and the smallest wins.
    Returns the choice and every evaluated SNR.
    """
    exps = sorted(set(int(n) for n in exps))
    if not exps:
        raise ConfigurationError("empty FFT size axis")
    snrs = {n: evaluate(n) for n in exps}
    return select_fft_size(snrs, tie_db), snrs


def select_fft_size(snrs: dict, tie_db: float = FFT_TIE_DB) -> int:
    finite = {n: s for n, s in snrs.items() if s is not None and not math.isnan(s)}
    if not finite:
        return min(snrs)
    best = max(finite.values())
    return min(n for n, s in finite.items() if s >= best - tie_db)


def run_point(plan: NlcPlan, link: LinkSpec, tx: TxConfig, seed: int = 1, cache_dir=None,
              cdc_fft_exps: Sequence[int] | None = None,
              baseline: tuple[float, int] | None = None) -> ExperimentRecord:
    """One chain run plus its CDC baseline at the same bit depth and launch power.

    The baseline uses its own best FFT size over ``cdc_fft_exps`` (default:
    the plan's size) unless ``baseline=(snr_db, fft_size_exp)`` is supplied.
    """
    if plan.algorithm == "essfm" and not plan.coeffs:
        raise MissingCoefficientsError("ESSFM plan has no coefficients; run 'optimize' first")
    t0 = time.perf_counter()
    symbols, rx = waveform(link, tx, plan.launch_power_dbm, seed, cache_dir)
    window = default_window(tx.n_symbols)
    est = run_chain(rx, symbols, link, plan, tx.rrc_rolloff, window)
    if baseline is None:
        def cdc_at(n):
            cp = NlcPlan.cdc(fft_size_exp=n, bit_depth=plan.bit_depth,
                             launch_power_dbm=plan.launch_power_dbm, input_scale=plan.input_scale)
            if cp == plan:
                return est.snr_db
            return run_chain(rx, symbols, link, cp, tx.rrc_rolloff, window).snr_db
        n_cdc, snrs = optimize_fft_size(cdc_at, cdc_fft_exps or (plan.fft_size_exp,))
        baseline = (snrs[n_cdc], n_cdc)
    return ExperimentRecord(
        key=point_key(plan, link, tx, seed), plan=asdict(plan), link=link_key(link),
        tx=asdict(tx), seed=seed, snr_db=est.snr_db, per_pol=est.per_pol,
        n_symbols_used=est.n_symbols_used, cdc_snr_db=baseline[0], cdc_fft_size_exp=baseline[1],
        delta_snr_over_cdc_db=est.snr_db - baseline[0], wall_time_s=time.perf_counter() - t0)


def _job(args) -> str:
    plan, link, tx, seed, cache_dir, baseline = args
    try:
        rec = run_point(plan, link, tx, seed, cache_dir, baseline=baseline or (math.nan, -1))
        if baseline is None:
            rec.cdc_snr_db = rec.cdc_fft_size_exp = rec.delta_snr_over_cdc_db = None
    except Exception as exc:  # recorded per point; the sweep continues
        rec = ExperimentRecord(point_key(plan, link, tx, seed), asdict(plan), link_key(link),
                               asdict(tx), seed, math.nan, status="error",
                               error=f"{type(exc).__name__}: {exc}")
    return rec.to_json()


def _run_jobs(jobs: list, store: RecordStore, n_workers: int) -> None:
    todo, seen = [], set()
    for j in jobs:
        k = point_key(*j[:4])
        if k not in store and k not in seen:
            seen.add(k)
            todo.append(j)
    if not todo:
        return
    log.info("running %d of %d points", len(todo), len(jobs))
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            for line in pool.map(_job, todo, chunksize=1):
                store.add(ExperimentRecord.from_json(line))
    else:
        for j in todo:
            store.add(ExperimentRecord.from_json(_job(j)))


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepPaths:
    root: Path

    @property
    def waveforms(self) -> Path:
        return self.root / "waveforms"

    @property
    def coeffs(self) -> Path:
        return self.root / "coeffs"

    @property
    def records(self) -> Path:
        return self.root / "records.jsonl"


def _float_plans(cfg: SweepConfig, fmt: str, power: float, seed: int, coeff_dir) -> dict:
    """Float64 plans at one launch power, labelled by series name."""
    base = dict(fft_size_exp=cfg.float_fft_size_exp, launch_power_dbm=power)
    plans = {"cdc": NlcPlan.cdc(**base)}
    if fmt in cfg.dbp_formats:
        for k in cfg.steps_per_link:
            plans[f"dbp{k}"] = NlcPlan.dbp(k, **base)
    for n in cfg.n_coeffs:
        c = load_coefficients(coeff_dir, fmt, power, n, cfg.link, seed)
        plans[f"essfm{n}"] = NlcPlan.essfm(c, **base)
    return plans


def _best_power(store: RecordStore, cfg: SweepConfig, fmt: str, seed: int, coeff_dir,
                label: str) -> float:
    best, best_p = -math.inf, cfg.launch_power_dbm[0]
    for p in cfg.launch_power_dbm:
        plan = _float_plans(cfg, fmt, p, seed, coeff_dir)[label]
        rec = store.get(point_key(plan, cfg.link, cfg.tx(fmt, seed), seed))
        if rec is not None and rec.status == "ok" and rec.snr_db > best:
            best, best_p = rec.snr_db, p
    return best_p


def _fxp_labels(cfg: SweepConfig, fmt: str) -> list[str]:
    labels = ["cdc"]
    if fmt in cfg.dbp_formats:
        labels += [f"dbp{k}" for k in cfg.steps_per_link]
    labels.append(f"essfm{max(cfg.n_coeffs)}")
    return labels


def _fxp_plan(cfg, fmt, seed, coeff_dir, label, power, B, n) -> NlcPlan:
    plan = _float_plans(cfg, fmt, power, seed, coeff_dir)[label]
    return plan.with_(bit_depth=B, fft_size_exp=n)


def run_sweep(cfg: SweepConfig, progress: Callable[[str], None] | None = None) -> list[Path]:
    """Run (or resume) every stage and write the CSV tables."""
    say = progress or log.info
    paths = SweepPaths(Path(cfg.output_dir))
    paths.root.mkdir(parents=True, exist_ok=True)
    store = RecordStore(paths.records)
    link = cfg.link
    all_formats = tuple(dict.fromkeys(cfg.formats + cfg.dbp_formats))

    say("stage 1/4: waveforms")
    for fmt in all_formats:
        for seed in cfg.seeds:
            for p in cfg.launch_power_dbm:
                waveform(link, cfg.tx(fmt, seed), p, seed, paths.waveforms)

    say("stage 2/4: ESSFM coefficients")
    for fmt in all_formats:
        for seed in cfg.seeds:
            for p in cfg.launch_power_dbm:
                for n in cfg.n_coeffs:
                    optimize_and_store(paths.coeffs, fmt, p, n, link, cfg.tx(fmt, seed), seed,
                                       cfg.optim_max_iters, cfg.float_fft_size_exp)

    say("stage 3/4: float64 launch-power sweep")
    jobs = []
    for fmt in all_formats:
        for seed in cfg.seeds:
            for p in cfg.launch_power_dbm:
                for plan in _float_plans(cfg, fmt, p, seed, paths.coeffs).values():
                    jobs.append((plan, link, cfg.tx(fmt, seed), seed, str(paths.waveforms), None))
    _run_jobs(jobs, store, cfg.jobs)

    say("stage 4/4: fixed-point sweep")
    for stage in ("cdc", "nlc"):
        jobs = []
        for fmt in all_formats:
            for seed in cfg.seeds:
                tx = cfg.tx(fmt, seed)
                for label in _fxp_labels(cfg, fmt):
                    p = _best_power(store, cfg, fmt, seed, paths.coeffs, label)
                    # CDC baselines are needed at every power some series selected
                    run_label = "cdc" if stage == "cdc" else label
                    if stage == "nlc" and label == "cdc":
                        continue
                    for B in cfg.bit_depths:
                        baseline = None
                        if stage == "nlc":
                            baseline = _cdc_baseline(store, cfg, fmt, seed, paths.coeffs, p, B)
                        for n in cfg.fft_size_exp:
                            plan = _fxp_plan(cfg, fmt, seed, paths.coeffs, run_label, p, B, n)
                            jobs.append((plan, link, tx, seed, str(paths.waveforms), baseline))
        _run_jobs(jobs, store, cfg.jobs)
    return write_report(cfg, store)


def _cdc_baseline(store, cfg, fmt, seed, coeff_dir, power, B) -> tuple[float, int] | None:
    """Best CDC SNR over the FFT axis at this bit depth (``B=None`` for float64)."""
    snrs = {}
    tx = cfg.tx(fmt, seed)
    exps = cfg.fft_size_exp if B is not None else (cfg.float_fft_size_exp,)
    for n in exps:
        plan = NlcPlan.cdc(fft_size_exp=n, bit_depth=B, launch_power_dbm=power)
        rec = store.get(point_key(plan, cfg.link, tx, seed))
        if rec is None or rec.status != "ok":
            # a CDC run at this power may be missing if no NLC series selected it
            rec = ExperimentRecord.from_json(_job((plan, cfg.link, tx, seed,
                                                   str(SweepPaths(Path(cfg.output_dir)).waveforms),
                                                   None)))
            store.add(rec)
        snrs[n] = rec.snr_db
    n = select_fft_size(snrs)
    return snrs[n], n


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

def _fmt_num(v) -> str:
    if v is None:
        return "nan"
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], meta: dict) -> Path:
    """CSV with ``# key: value`` metadata lines, a header row and LF line endings."""
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt_num(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")
    return Path(path)


def _parse_cell(s: str):
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def read_csv(path) -> tuple[dict, list[dict]]:
    """Inverse of :func:`write_csv`: metadata dict and rows with numbers parsed."""
    meta, body = {}, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition(":")
            meta[k.strip()] = v.strip()
        else:
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    return meta, [dict(zip(header, (_parse_cell(c) for c in row))) for row in reader]


def _meta(cfg: SweepConfig, figure: str) -> dict:
    link = cfg.link
    return {
        "figure": figure,
        "scenario": cfg.scenario,
        "version": VERSION,
        "link_km": link.total_length / 1e3,
        "spans": link.span_count,
        "n_symbols": cfg.n_symbols,
        "n_samples_tx": cfg.n_symbols * 4,
        "snr_window_symbols": default_window(cfg.n_symbols),
        "seeds": ",".join(map(str, cfg.seeds)),
        "estimator": ESTIMATOR,
        "wh_split": "leading fraction; dbp 0.85, essfm 0.4",
        "fft_selection": f"argmax SNR, ties within {FFT_TIE_DB} dB to smaller N",
    }


def _lookup(store, cfg, plan, fmt, seed):
    return store.get(point_key(plan, cfg.link, cfg.tx(fmt, seed), seed))


def _mean(vals):
    vals = [v for v in vals if v is not None and math.isfinite(v)]
    return float(np.mean(vals)) if vals else math.nan


def _fxp_series(store, cfg, fmt, label, B, mark=True):
    """Best-FFT fixed-point SNR and ΔSNR for one series at bit depth ``B``, averaged over seeds."""
    snr, dsnr, ok = [], [], True
    for seed in cfg.seeds:
        p = _best_power(store, cfg, fmt, seed, SweepPaths(Path(cfg.output_dir)).coeffs, label)
        recs = {}
        for n in cfg.fft_size_exp:
            plan = _fxp_plan(cfg, fmt, seed, SweepPaths(Path(cfg.output_dir)).coeffs, label, p, B, n)
            r = _lookup(store, cfg, plan, fmt, seed)
            if r is not None and r.status == "ok":
                recs[n] = r
            else:
                ok = False
        if not recs:
            continue
        n_best = select_fft_size({n: r.snr_db for n, r in recs.items()})
        best = recs[n_best]
        if mark and not best.optimum:
            best.optimum = True
        snr.append(best.snr_db)
        if best.delta_snr_over_cdc_db is not None:
            dsnr.append(best.delta_snr_over_cdc_db)
    return _mean(snr), _mean(dsnr), ok


def write_report(cfg: SweepConfig, store: RecordStore | None = None) -> list[Path]:
    """Build the six tables from stored records (no computation)."""
    paths = SweepPaths(Path(cfg.output_dir))
    store = store or RecordStore(paths.records)
    for r in store.records.values():
        r.optimum = False
    out = []
    coeff_dir = paths.coeffs
    fmts = tuple(dict.fromkeys(cfg.formats + cfg.dbp_formats))

    # DBP gain over CDC vs bit depth, and SNR vs steps per link
    dbp_fmt = cfg.dbp_formats[0]
    rows_a, rows_b = [], []
    grid = {}
    for B in cfg.bit_depths:
        row, status = [B], "ok"
        for k in cfg.steps_per_link:
            snr, dsnr, ok = _fxp_series(store, cfg, dbp_fmt, f"dbp{k}", B)
            grid[k, B] = snr
            row.append(dsnr)
            status = status if ok else "partial"
        rows_a.append(row + [status])
    for k in cfg.steps_per_link:
        rows_b.append([k] + [grid[k, B] for B in cfg.bit_depths]
                      + ["ok" if all(math.isfinite(grid[k, B]) for B in cfg.bit_depths) else "partial"])
    meta = {**_meta(cfg, "DBP gain over fixed-point CDC vs bit depth"), "format": dbp_fmt}
    out.append(write_csv(paths.root / CSV_NAMES[0],
                         ["bit_depth"] + [f"dsnr_{k}spl" for k in cfg.steps_per_link] + ["status"],
                         rows_a, meta))
    meta = {**_meta(cfg, "fixed-point DBP SNR vs steps per link"), "format": dbp_fmt}
    out.append(write_csv(paths.root / CSV_NAMES[1],
                         ["spl"] + [f"snr_{B}bits" for B in cfg.bit_depths] + ["status"],
                         rows_b, meta))

    # float64 SNR vs launch power
    rows = []
    labels_all = ["cdc"] + [f"dbp{k}" for k in cfg.steps_per_link] + [f"essfm{n}" for n in cfg.n_coeffs]
    for fmt in fmts:
        for p in cfg.launch_power_dbm:
            vals = {lab: [] for lab in labels_all}
            for seed in cfg.seeds:
                for lab, plan in _float_plans(cfg, fmt, p, seed, coeff_dir).items():
                    r = _lookup(store, cfg, plan, fmt, seed)
                    vals[lab].append(None if r is None or r.status != "ok" else r.snr_db)
            rows.append([fmt, p] + [_mean(vals[lab]) for lab in labels_all])
    out.append(write_csv(paths.root / CSV_NAMES[2],
                         ["format", "launch_power_dbm"] + [f"snr_{lab}" for lab in labels_all],
                         rows, _meta(cfg, "float64 SNR vs launch power")))

    # float64 ESSFM gain vs number of taps at each format's best power
    rows, responses = [], {}
    for fmt in cfg.formats:
        cdc_p = {s: _best_power(store, cfg, fmt, s, coeff_dir, "cdc") for s in cfg.seeds}
        for n in cfg.n_coeffs:
            snrs, dsnrs, powers = [], [], []
            for seed in cfg.seeds:
                p = _best_power(store, cfg, fmt, seed, coeff_dir, f"essfm{n}")
                plans = _float_plans(cfg, fmt, p, seed, coeff_dir)
                r = _lookup(store, cfg, plans[f"essfm{n}"], fmt, seed)
                c = _lookup(store, cfg, _float_plans(cfg, fmt, cdc_p[seed], seed, coeff_dir)["cdc"],
                            fmt, seed)
                if r is not None and c is not None:
                    snrs.append(r.snr_db)
                    dsnrs.append(r.snr_db - c.snr_db)
                powers.append(p)
                if seed == cfg.seeds[0]:
                    responses[fmt, n] = essfm_filter_response(plans[f"essfm{n}"].coeffs)
            rows.append([fmt, n, powers[0], _mean(snrs), _mean(dsnrs)])
    out.append(write_csv(paths.root / CSV_NAMES[3],
                         ["format", "n_coeffs", "launch_power_dbm", "snr_db", "dsnr_db"], rows,
                         {**_meta(cfg, "float64 ESSFM gain over CDC vs number of taps"),
                          "baseline": "float64 CDC at its own best launch power"}))

    keys = list(responses)
    freq = responses[keys[0]][0]
    header = ["freq_norm"] + [f"mag_db_{fmt}_{n}taps" for fmt, n in keys]
    rows = [[f] + [float(responses[k][1][i]) for k in keys] for i, f in enumerate(freq)]
    out.append(write_csv(paths.root / CSV_NAMES[4], header, rows,
                         {**_meta(cfg, "ESSFM power-filter magnitude response"),
                          "freq_units": "pi rad/sample",
                          "launch_power": "best float64 power per series"}))

    # fixed-point ESSFM gain vs bit depth
    rows = []
    n_max = max(cfg.n_coeffs)
    for fmt in cfg.formats:
        for B in cfg.bit_depths:
            snr, dsnr, ok = _fxp_series(store, cfg, fmt, f"essfm{n_max}", B)
            ref = []
            for seed in cfg.seeds:
                p = _best_power(store, cfg, fmt, seed, coeff_dir, f"essfm{n_max}")
                r = _lookup(store, cfg, _float_plans(cfg, fmt, p, seed, coeff_dir)[f"essfm{n_max}"],
                            fmt, seed)
                ref.append(None if r is None else r.snr_db)
            ref_snr = _mean(ref)
            rows.append([fmt, B, snr, snr - dsnr if math.isfinite(dsnr) else math.nan, dsnr,
                         ref_snr - snr, "ok" if ok else "partial"])
    out.append(write_csv(paths.root / CSV_NAMES[5],
                         ["format", "bit_depth", "snr_essfm", "snr_cdc", "dsnr_db",
                          "penalty_vs_float64_db", "status"], rows,
                         {**_meta(cfg, "fixed-point ESSFM gain over fixed-point CDC vs bit depth"),
                          "n_coeffs": n_max}))
    store.rewrite()
    return out
