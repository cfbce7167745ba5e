"""Experiment configuration, presets, execution and result files.

Configs are INI files with sections ``[experiment]``, ``[scenario]``,
``[inference]``, ``[baselines]`` and ``[run]``; every key maps onto a field of
the matching dataclass below.  An optional sweep varies one dotted key::

    [experiment]
    name = sweep-snr
    sweep = scenario.noise_var
    values = 15.85, 7.94, 3.98, 2.0, 1.0

Output files, written under ``<output root>/<name>-<hash>/``:

``config.ini``
    the exact config (its sha256 prefix is the run hash)
``records.csv``
    one row per (sweep value, seed, method); columns ``CSV_COLUMNS``
``summary.json``
    box-plot statistics per method and sweep value plus per-run timings
``plot_<metric>.csv``
    x/y series per method (mean and quartiles), one file per metric
``runs/<x>_<seed>.json``
    log-joint trace and per-phase wall-clock of each run
"""

import configparser
import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, get_type_hints

import numpy as np

from . import baselines as bl
from .evaluation import MapEstimate, align_chains, compute_metrics, map_estimate, summarize_runs
from .gibbs import SamplerConfig, TemperSchedule, full_iteration, init_state, write_snapshot
from .model import Hyperparams
from .numerics import spawn_rngs
from .simulator import ScenarioConfig, simulate

logger = logging.getLogger(__name__)

OUTPUT_ENV = "IFFSM_OUTPUT_ROOT"
CSV_COLUMNS = ["config_hash", "sweep", "x", "seed", "method", "m_plus", "recovered",
               "ader", "ser", "mse", "snr_db"]
METHODS = ("iffsm", "genie-pgas", "ffbs", "bcjr")

__all__ = [
    "InferenceSettings",
    "BaselineSettings",
    "RunSettings",
    "ExperimentConfig",
    "PRESETS",
    "preset",
    "run_single",
    "run_experiment",
    "emit_results",
    "read_records",
    "replay",
]


@dataclass
class InferenceSettings:
    """Sampler settings; ``n_taps = None`` uses the scenario's channel length."""

    n_taps: Optional[int] = None
    particles: int = 3000
    particles_per_chain: Optional[int] = None
    systematic: bool = False
    temper_mode: str = "geometric"
    start_var: float = 10 ** 1.2
    decay: float = 0.99
    n_temper: Optional[int] = None
    n_exploit: int = 200
    joint_iters: Optional[int] = None
    block_size: Optional[int] = None
    map_window: int = 100
    slice_beta: Optional[tuple] = None
    max_chains: int = 50
    snapshot_every: int = 0
    alpha: float = 1.0
    beta0: float = 2.0
    beta1: float = 0.1
    sigma_h2: float = 1.0
    lam: float = 0.5
    kappa: float = 1.0


@dataclass
class BaselineSettings:
    genie_pgas: bool = False
    ffbs: bool = False
    bcjr: bool = False
    genie_a: float = 0.998
    genie_b: float = 0.002
    iters: int = 200
    map_window: int = 100
    particles: int = 3000
    joint_iters: Optional[int] = None
    block_size: Optional[int] = None
    state_cap: float = 1e6


@dataclass
class RunSettings:
    seeds: tuple = tuple(range(10))
    workers: int = 1
    output_dir: Optional[str] = None
    snapshots: bool = False


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    inference: InferenceSettings = field(default_factory=InferenceSettings)
    baselines: BaselineSettings = field(default_factory=BaselineSettings)
    run: RunSettings = field(default_factory=RunSettings)
    sweep: Optional[str] = None
    values: tuple = ()

    # -- validation and derived settings ---------------------------------

    def validate(self):
        self.scenario.validate()
        inf = self.inference
        if inf.particles < 1:
            raise ValueError("inference.particles must be >= 1")
        if inf.map_window < 1:
            raise ValueError("inference.map_window must be >= 1")
        if self.sweep and not self.values:
            raise ValueError(f"sweep over {self.sweep} needs values")
        if self.sweep:
            section, _, key = self.sweep.partition(".")
            if section not in _SECTIONS or key not in _field_types(getattr(self, section)):
                raise ValueError(f"unknown sweep key {self.sweep!r}")
        if not self.run.seeds:
            raise ValueError("run.seeds is empty")
        self.schedule(self.scenario.noise_var)
        return self

    def schedule(self, noise_var):
        inf = self.inference
        return TemperSchedule(noise_var, start_var=inf.start_var, decay=inf.decay,
                              mode=inf.temper_mode, n_temper=inf.n_temper,
                              n_exploit=inf.n_exploit)

    def hyper(self):
        inf = self.inference
        return Hyperparams(alpha=inf.alpha, beta0=inf.beta0, beta1=inf.beta1,
                           sigma_h2=inf.sigma_h2, lam=inf.lam, kappa=inf.kappa,
                           noise_var=self.scenario.noise_var)

    def points(self):
        """Sweep values, or ``[None]`` for a single scenario."""
        return list(self.values) if self.sweep else [None]

    def at(self, value):
        """Copy with the sweep key set to ``value``."""
        cfg = self.copy()
        if self.sweep and value is not None:
            section, _, key = self.sweep.partition(".")
            sub = getattr(cfg, section)
            setattr(sub, key, _coerce(str(value), _field_types(sub)[key]))
        return cfg

    def copy(self):
        return from_ini(to_ini(self))

    @property
    def config_hash(self):
        """Hash of everything that affects results (not output location or workers)."""
        cfg = from_ini(to_ini(self))
        cfg.run.output_dir, cfg.run.workers = None, 1
        return hashlib.sha256(to_ini(cfg).encode()).hexdigest()[:16]

    def output_path(self):
        if self.run.output_dir:
            return Path(self.run.output_dir)
        root = Path(os.environ.get(OUTPUT_ENV, "results"))
        return root / f"{self.name}-{self.config_hash}"

    def set(self, dotted, value):
        """Override one ``section.key`` (or ``experiment.key``) from a string."""
        section, _, key = dotted.partition(".")
        if section == "experiment":
            if key == "values":
                self.values = _parse_list(value)
            elif key == "sweep":
                self.sweep = None if value.strip().lower() in ("", "none") else value.strip()
            elif key == "name":
                self.name = value
            else:
                raise KeyError(dotted)
            return self
        if section not in _SECTIONS:
            raise KeyError(f"unknown section {section!r}")
        sub = getattr(self, section)
        types = _field_types(sub)
        if key not in types:
            raise KeyError(f"unknown key {dotted!r}")
        setattr(sub, key, _coerce(value, types[key]))
        return self


_SECTIONS = ("scenario", "inference", "baselines", "run")


# ---------------------------------------------------------------------------
# INI round trip
# ---------------------------------------------------------------------------

_SCENARIO_TYPES = {"T": int, "D": int, "L": int, "n_tx": int, "constellation": str,
                   "noise_var": float, "burst_len": int, "tap_var": Optional[tuple],
                   "start_max": Optional[int], "channel_file": Optional[str]}


def _field_types(obj):
    if isinstance(obj, ScenarioConfig):
        return _SCENARIO_TYPES
    return get_type_hints(type(obj))


def _parse_list(text):
    parts = [p for p in text.replace(",", " ").split() if p]
    out = []
    for p in parts:
        if "-" in p[1:] and p.replace("-", "").isdigit():
            lo, hi = p.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            v = float(p)
            out.append(int(v) if v.is_integer() and "." not in p and "e" not in p.lower() else v)
    return tuple(out)


def _coerce(text, typ):
    text = text.strip()
    args = getattr(typ, "__args__", None)
    if args and type(None) in args:
        if text.lower() in ("", "none"):
            return None
        typ = next(a for a in args if a is not type(None))
    if typ is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if typ is int:
        return int(float(text)) if float(text).is_integer() else int(text)
    if typ is float:
        return float(text)
    if typ is tuple:
        return _parse_list(text)
    return text


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(float(v))
    if isinstance(v, (tuple, list)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def to_ini(cfg):
    """Canonical INI text (stable key order, exact float repr)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["experiment"] = {"name": cfg.name, "sweep": _fmt(cfg.sweep), "values": _fmt(cfg.values)}
    for section in _SECTIONS:
        sub = getattr(cfg, section)
        cp[section] = {f.name: _fmt(getattr(sub, f.name)) for f in dataclasses.fields(sub)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def from_ini(text):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(text)
    cfg = ExperimentConfig(scenario=ScenarioConfig(), inference=InferenceSettings(),
                           baselines=BaselineSettings(), run=RunSettings())
    known = {"experiment", *_SECTIONS}
    for section in cp.sections():
        if section not in known:
            raise ValueError(f"unknown config section [{section}]")
        for key, value in cp[section].items():
            cfg.set(f"{section}.{key}", value)
    return cfg


def load_config(path):
    return from_ini(Path(path).read_text())


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def _base(name, **scenario):
    cfg = ExperimentConfig(name=name)
    cfg.scenario = ScenarioConfig(T=1000, D=20, L=1, n_tx=5, constellation="qpsk",
                                  noise_var=2.0, burst_len=500)
    for k, v in scenario.items():
        setattr(cfg.scenario, k, v)
    cfg.baselines.genie_pgas = True
    cfg.baselines.ffbs = True
    cfg.baselines.bcjr = True
    return cfg


def _sweep(cfg, key, values):
    cfg.sweep, cfg.values = key, tuple(values)
    return cfg


def _wifi():
    cfg = _base("wifi", T=2000, D=12, L=5, n_tx=12, burst_len=1000, noise_var=1e-3,
                tap_var=tuple(0.01 * math.exp(-0.5 * ell) for ell in range(5)))
    cfg.inference.sigma_h2 = 0.01
    cfg.inference.temper_mode = "lineardb"
    cfg.inference.n_temper = 800
    cfg.inference.n_exploit = 200
    cfg.baselines.genie_pgas = cfg.baselines.bcjr = False
    return _sweep(cfg, "inference.n_taps", range(1, 6))


def _qam1024():
    cfg = _sweep(_base("qam1024", constellation="qam1024"), "scenario.noise_var",
                 [10 ** 1.5, 10 ** 1.8, 10 ** 2.1, 10 ** 2.4])
    cfg.inference.joint_iters = 300
    cfg.inference.block_size = 1
    cfg.baselines.joint_iters = 100
    cfg.baselines.block_size = 1
    cfg.baselines.ffbs = cfg.baselines.bcjr = False
    return cfg


def _particles():
    cfg = _sweep(_base("sweep-particles", n_tx=10, noise_var=10 ** 0.3),
                 "inference.particles", [300, 1000, 3000, 10000, 30000])
    cfg.inference.temper_mode = "lineardb"
    cfg.inference.n_temper = 700
    cfg.run.seeds = (0,)
    cfg.baselines.ffbs = cfg.baselines.bcjr = False
    return cfg


PRESETS = {
    "rayleigh-base": lambda: _base("rayleigh-base"),
    "sweep-snr": lambda: _sweep(_base("sweep-snr"), "scenario.noise_var",
                                [10 ** 1.2, 10 ** 0.9, 10 ** 0.6, 10 ** 0.3, 1.0]),
    "sweep-transmitters": lambda: _sweep(_base("sweep-transmitters"), "scenario.n_tx",
                                         range(2, 7)),
    "sweep-receivers": lambda: _sweep(_base("sweep-receivers"), "scenario.D",
                                      [2, 4, 6, 8, 10, 15, 20, 25, 30]),
    "sweep-L": lambda: _sweep(_base("sweep-L", noise_var=10 ** 0.9), "scenario.L", range(1, 6)),
    "sweep-snr-L5": lambda: _sweep(_base("sweep-snr-L5", L=5), "scenario.noise_var",
                                   [10 ** 1.8, 10 ** 1.5, 10 ** 1.2, 10 ** 0.9]),
    "sweep-L-mismatch": lambda: _sweep(_base("sweep-L-mismatch"), "inference.n_taps",
                                       range(1, 6)),
    "qam1024": _qam1024,
    "sweep-particles": _particles,
    "wifi": _wifi,
}


def preset(name, full_scale=False):
    """Named study at desk scale (10 seeds, ~1k iterations) or full scale.

    Full scale restores 50 seeds, the 0.9995 decay with a 20000-iteration
    budget, 2000-sample MAP windows and 10000-iteration genie runs.
    """
    try:
        cfg = PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}") from None
    if full_scale:
        inf, base = cfg.inference, cfg.baselines
        if name != "sweep-particles":
            cfg.run.seeds = tuple(range(50))
        inf.map_window = base.map_window = 2000
        base.iters = 10000
        if inf.temper_mode == "geometric":
            inf.decay = 0.9995
            inf.n_exploit = 20000 - cfg.schedule(1.0).temper_iters
        if name == "wifi":
            inf.n_temper, inf.n_exploit = 26600, 3400
            cfg.scenario.T, cfg.scenario.burst_len = 2000, 1000
        if name == "sweep-particles":
            inf.n_temper, inf.n_exploit = 7000, 3000
        if name == "qam1024":
            inf.joint_iters, inf.n_exploit = 5000, 20000
            inf.n_temper = 0 if inf.temper_mode == "off" else inf.n_temper
            base.joint_iters = 5000
    return cfg.validate()


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

def _metrics_row(metrics):
    return {"m_plus": metrics.m_plus, "recovered": metrics.recovered, "ader": metrics.ader,
            "ser": metrics.ser, "mse": metrics.mse}


def _evaluate(est, truth, constellation, threshold=0.5):
    al = align_chains(est, truth.idx, truth.taps, constellation, threshold)
    return compute_metrics(al, est, truth.idx, truth.taps, constellation)


def _run_inference(cfg, Y, rng, snap_dir=None):
    scen, inf = cfg.scenario, cfg.inference
    hyper = cfg.hyper()
    constellation = scen.get_constellation()
    L = inf.n_taps or scen.L
    schedule = cfg.schedule(scen.noise_var)
    joint = SamplerConfig(n_taps=L, particles=inf.particles, systematic=inf.systematic,
                          slice_beta=inf.slice_beta, max_chains=inf.max_chains,
                          particles_per_chain=inf.particles_per_chain)
    blocked = dataclasses.replace(joint, block_size=inf.block_size)
    state = init_state(scen.T, scen.D, hyper, rng, n_taps=L)
    n_iter = schedule.total_iters
    window, trace = [], []
    for i in range(n_iter):
        use_blocks = inf.block_size and (inf.joint_iters is None or i >= inf.joint_iters)
        state = full_iteration(state, Y, schedule, i, rng, hyper, constellation,
                               blocked if use_blocks else joint)
        trace.append(state.logjoint)
        if i >= n_iter - inf.map_window:
            window.append((state.idx.copy(), state.chain_ids.copy()))
        if snap_dir is not None and inf.snapshot_every and (i + 1) % inf.snapshot_every == 0:
            write_snapshot(snap_dir / f"iter_{i + 1:06d}.snap", state)
    est = map_estimate(window, Y, constellation, state.globals_.tap_var, scen.noise_var)
    return est, trace, state


def _run_baselines(cfg, Y, truth, rng):
    scen, base = cfg.scenario, cfg.baselines
    constellation = scen.get_constellation()
    genie = bl.GenieConfig(truth.taps, scen.noise_var, constellation, a=base.genie_a,
                           b=base.genie_b, state_cap=base.state_cap)
    out, notes, timing = {}, [], {}
    burn = max(base.iters - base.map_window, 0)
    jobs = [("genie-pgas", base.genie_pgas, lambda: bl.genie_pgas(
                Y, genie, base.particles, base.iters, rng, burn_in=burn,
                block_size=base.block_size, joint_iters=base.joint_iters)),
            ("ffbs", base.ffbs, lambda: bl.ffbs_gibbs(Y, genie, base.iters, rng, burn_in=burn)),
            ("bcjr", base.bcjr, lambda: bl.bcjr_joint(Y, genie))]
    for name, enabled, fn in jobs:
        if not enabled:
            continue
        t0 = time.perf_counter()
        try:
            res = fn()
        except bl.StateSpaceTooLarge as err:
            notes.append(f"{name} skipped: {err}")
            logger.info("%s skipped: %s", name, err)
            continue
        timing[name] = time.perf_counter() - t0
        est = MapEstimate(res.map_idx(), truth.taps.copy(), np.arange(genie.n_tx))
        out[name] = _metrics_row(_evaluate(est, truth, constellation))
    return out, notes, timing


def run_single(cfg, seed, value=None, run_dir=None):
    """One seed at one sweep point; returns a JSON-friendly record dict."""
    cfg = cfg.at(value)
    data_rng, inf_rng, base_rng = spawn_rngs(seed, 3)
    timing = {}
    t0 = time.perf_counter()
    Y, truth = simulate(cfg.scenario, data_rng)
    timing["data"] = time.perf_counter() - t0
    snap_dir = None
    if run_dir is not None and cfg.inference.snapshot_every:
        snap_dir = Path(run_dir) / "snapshots" / f"{_xtag(value)}_{seed}"
        snap_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    est, trace, _ = _run_inference(cfg, Y, inf_rng, snap_dir)
    timing["inference"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    methods = {"iffsm": _metrics_row(_evaluate(est, truth, cfg.scenario.get_constellation()))}
    timing["metrics"] = time.perf_counter() - t0
    base, notes, btime = _run_baselines(cfg, Y, truth, base_rng)
    methods.update(base)
    timing.update({f"baseline:{k}": v for k, v in btime.items()})
    logger.info("x=%r seed=%d: %s (%.0f s)", value, seed, {k: (m["recovered"], round(m["ser"], 4))
                for k, m in methods.items()}, sum(timing.values()))
    return {"seed": int(seed), "x": value, "snr_db": float(cfg.scenario.snr_db),
            "methods": methods, "notes": notes, "runtime": timing, "logjoint": trace}


def _xtag(value):
    return "single" if value is None else f"x{value!r}".replace(".", "p")


def _job(args):
    text, seed, value = args
    return run_single(from_ini(text), seed, value)


def run_experiment(cfg, write=True):
    """Run every (sweep value, seed) pair and optionally write the result files."""
    cfg.validate()
    jobs = [(v, s) for v in cfg.points() for s in cfg.run.seeds]
    run_dir = cfg.output_path() if write else None
    if cfg.run.workers > 1 and len(jobs) > 1:
        text = to_ini(cfg)
        with ProcessPoolExecutor(max_workers=cfg.run.workers) as pool:
            records = list(pool.map(_job, [(text, s, v) for v, s in jobs]))
    else:
        records = [run_single(cfg, s, v, run_dir) for v, s in jobs]
    if write:
        emit_results(records, cfg, run_dir)
    return records


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _csv_rows(records, cfg):
    h = cfg.config_hash
    rows = []
    for r in records:
        for method in METHODS:
            m = r["methods"].get(method)
            if m is None:
                continue
            rows.append({"config_hash": h, "sweep": cfg.sweep or "", "x": "" if r["x"] is None
                         else repr(r["x"]), "seed": r["seed"], "method": method,
                         "m_plus": m["m_plus"], "recovered": m["recovered"],
                         "ader": repr(float(m["ader"])), "ser": repr(float(m["ser"])),
                         "mse": repr(float(m["mse"])), "snr_db": repr(float(r["snr_db"]))})
    return rows


def _summaries(records):
    out = {}
    for method in METHODS:
        groups = {}
        for r in records:
            if method in r["methods"]:
                groups.setdefault(repr(r["x"]), []).append(r["methods"][method])
        if groups:
            out[method] = {x: summarize_runs(recs) for x, recs in groups.items()}
    return out


def emit_results(records, cfg, run_dir, svg=False):
    """Write CSV, JSON summary, per-run traces and plot-data files."""
    if not records:
        raise ValueError("no run records to emit")
    run_dir = Path(run_dir)
    (run_dir / "runs").mkdir(parents=True, exist_ok=True)
    (run_dir / "config.ini").write_text(to_ini(cfg))
    rows = _csv_rows(records, cfg)
    with open(run_dir / "records.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    summary = _summaries(records)
    payload = {"name": cfg.name, "config_hash": cfg.config_hash, "sweep": cfg.sweep,
               "summary": summary,
               "runtime": [{"x": r["x"], "seed": r["seed"], **r["runtime"]} for r in records],
               "notes": sorted({n for r in records for n in r["notes"]})}
    (run_dir / "summary.json").write_text(json.dumps(payload, indent=2, default=_json_default))
    for r in records:
        name = f"{_xtag(r['x'])}_{r['seed']}.json"
        (run_dir / "runs" / name).write_text(json.dumps(r, default=_json_default))
    _write_plot_data(summary, run_dir, svg)
    return run_dir


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(type(o))


def _write_plot_data(summary, run_dir, svg):
    for metric in ("m_plus", "recovered", "ader", "ser", "mse"):
        with open(run_dir / f"plot_{metric}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "x", "mean", "p25", "median", "p75", "min", "max"])
            for method, groups in summary.items():
                for x, stats in groups.items():
                    s = stats[metric]
                    w.writerow([method, x] + [repr(s[k]) for k in
                                              ("mean", "p25", "median", "p75", "min", "max")])
    if svg:
        _write_svg(summary, run_dir)


def _write_svg(summary, run_dir):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        logger.warning("matplotlib not installed; skipping SVG output")
        return
    for metric in ("ader", "ser", "mse", "m_plus", "recovered"):
        fig, ax = plt.subplots(figsize=(4, 3))
        for method, groups in summary.items():
            xs = list(groups)
            try:
                pos = [float(x) for x in xs]
            except ValueError:
                pos = list(range(len(xs)))
            ax.plot(pos, [groups[x][metric]["mean"] for x in xs], marker="o", label=method)
        ax.set_ylabel(metric)
        if metric in ("ader", "ser", "mse"):
            ax.set_yscale("log")
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(run_dir / f"plot_{metric}.svg")
        plt.close(fig)


def read_records(path):
    """Parse ``records.csv`` back into typed rows."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["seed"] = int(r["seed"])
        r["m_plus"] = int(r["m_plus"])
        r["recovered"] = int(r["recovered"])
        for k in ("ader", "ser", "mse", "snr_db"):
            r[k] = float(r[k])
        r["x"] = None if r["x"] == "" else float(r["x"])
    return rows


def replay(run_dir, seeds=None):
    """Re-run stored seeds and compare CSV rows; returns ``(ok, mismatches)``."""
    run_dir = Path(run_dir)
    cfg = load_config(run_dir / "config.ini")
    seeds = cfg.run.seeds if seeds is None else tuple(seeds)
    stored = {(r["x"], r["seed"], r["method"]): r for r in _raw_rows(run_dir / "records.csv")}
    records = [run_single(cfg, s, v) for v in cfg.points() for s in seeds]
    if not records:
        raise ValueError("nothing to replay")
    mismatches = []
    for row in _csv_rows(records, cfg):
        key = (row["x"], str(row["seed"]), row["method"])
        old = stored.get(key)
        new = {k: str(v) for k, v in row.items()}
        if old != new:
            mismatches.append((key, old, new))
    return not mismatches, mismatches


def _raw_rows(path):
    with open(path, newline="") as fh:
        return [dict(r) for r in csv.DictReader(fh)]
