"""Monte Carlo experiments over transmit power, rate-set size and QoS domain.

Every realization draws its geometry and channels from its own generator,
seeded by ``(master_seed, realization_idx)``, so results do not depend on
how realizations are scheduled across workers.  All algorithms and sweep
points of a realization see the same channels.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from . import baselines as bl
from . import envelope_bcd as bcd
from .link_metrics import RateEvaluation, evaluate_rates
from .network_model import ScenarioParams, dbm_to_mw, draw_channels, place_scenario
from .rate_model import QosDomain, RateSet, parse_rate_set, preset_rate_set

__all__ = [
    "ALGORITHMS",
    "ExperimentConfig",
    "ResultRecord",
    "TraceRecord",
    "ExperimentResult",
    "realization_rng",
    "run_realization",
    "run_experiment",
    "write_outputs",
    "plot_rows",
    "load_config",
]

log = logging.getLogger(__name__)

ALGORITHMS = ("proposed", "wmmse", "maxsinr", "tdma")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioParams = ScenarioParams()
    rate_set: str = "wifi"
    margin: float = 1.0
    margin_db: bool = False
    qos_domains: tuple[QosDomain, ...] = (QosDomain.CONTINUOUS_RATE,)
    algorithms: tuple[str, ...] = ALGORITHMS
    tx_powers_dbm: tuple[float, ...] = tuple(float(p) for p in range(0, 40, 3))
    q_max_values: Optional[tuple[int, ...]] = None
    n_realizations: int = 100
    master_seed: int = 0
    workers: int = 1
    record_traces: bool = False
    bcd: bcd.BcdConfig = bcd.BcdConfig()
    baselines: bl.BaselineConfig = bl.BaselineConfig()
    out_dir: str = "results"

    def __post_init__(self):
        if not self.tx_powers_dbm:
            raise ValueError("power sweep must not be empty")
        if self.q_max_values is not None and not self.q_max_values:
            raise ValueError("q_max sweep must not be empty")
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        if not self.qos_domains:
            raise ValueError("need at least one QoS domain")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown algorithms {sorted(unknown)}")
        object.__setattr__(self, "qos_domains", tuple(QosDomain.parse(d) for d in self.qos_domains))

    def rate_sets(self) -> list[tuple[Optional[int], RateSet]]:
        if self.q_max_values is None:
            return [(None, parse_rate_set(self.rate_set, self.margin, self.margin_db))]
        margin = 10.0 ** (self.margin / 10.0) if self.margin_db else self.margin
        return [(q, preset_rate_set(f"grid({q})", margin)) for q in self.q_max_values]


@dataclass(frozen=True)
class ResultRecord:
    realization_idx: int
    algorithm: str
    qos_domain: str
    tx_power_dbm: float
    q_max: Optional[int]
    iterations_used: int
    weighted_discrete_rate: float
    weighted_continuous_rate: float
    power_fraction: tuple[float, ...]
    error: str = ""


@dataclass(frozen=True)
class TraceRecord:
    realization_idx: int
    algorithm: str
    qos_domain: str
    tx_power_dbm: float
    q_max: Optional[int]
    iteration: int
    objective: float
    weighted_discrete_rate: float
    weighted_continuous_rate: float


@dataclass
class ExperimentResult:
    records: list[ResultRecord] = field(default_factory=list)
    traces: list[TraceRecord] = field(default_factory=list)


def realization_rng(master_seed: int, idx: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(idx,)))


def _record(idx, alg, dom, p_dbm, q_max, iters, ev: Optional[RateEvaluation], budget, error=""):
    if ev is None:
        frac = tuple(math.nan for _ in budget)
        return ResultRecord(idx, alg, dom, p_dbm, q_max, iters, math.nan, math.nan, frac, error)
    frac = tuple(float(f) for f in ev.power_fraction(budget))
    return ResultRecord(idx, alg, dom, p_dbm, q_max, iters, ev.weighted_discrete,
                        ev.weighted_continuous, frac, error)


def run_realization(cfg: ExperimentConfig, idx: int) -> ExperimentResult:
    rng = realization_rng(cfg.master_seed, idx)
    geometry = place_scenario(cfg.scenario, rng)
    base = draw_channels(geometry, cfg.scenario, rng)
    out = ExperimentResult()
    sets = cfg.rate_sets()
    for p_dbm in cfg.tx_powers_dbm:
        real = base.with_power(np.full(cfg.scenario.n_bs, float(dbm_to_mw(p_dbm))))
        cache: dict[str, Any] = {}
        for q_max, rs in sets:
            for alg in cfg.algorithms:
                doms = cfg.qos_domains if alg == "proposed" else (None,)
                for dom in doms:
                    dom_name = dom.value if dom is not None else ""
                    key = (idx, alg, dom_name, p_dbm, q_max)
                    try:
                        rec, tr = _run_cell(cfg, alg, dom, real, rs, cache, key)
                    except Exception as exc:   # recorded, the sweep goes on
                        log.exception("cell %s failed", key)
                        rec = _record(*key, 0, None, real.power, f"{type(exc).__name__}: {exc}")
                        tr = []
                    out.records.append(rec)
                    out.traces.extend(tr)
    out.records.sort(key=_sort_key)
    out.traces.sort(key=_sort_key)
    return out


def _run_cell(cfg, alg, dom, real, rs, cache, key):
    traces = []
    if alg == "proposed":
        state = bcd.run(real, rs, dataclasses.replace(cfg.bcd, qos_domain=dom))
        ev = evaluate_rates(real, state.V, rs)
        if cfg.record_traces:
            traces = [TraceRecord(*key, r.iteration, r.objective, r.weighted_discrete,
                                  r.weighted_continuous) for r in state.trace]
        return _record(*key, state.iterations, ev, real.power), traces
    if alg == "wmmse":
        if cfg.record_traces:
            res = bl.wmmse_run(real, cfg.baselines, rate_sets=rs)
            traces = [TraceRecord(*key, n, obj, disc, cont)
                      for n, (obj, disc, cont) in enumerate(res.trace)]
        else:
            res = cache.get("wmmse") or bl.wmmse_run(real, cfg.baselines)
            cache["wmmse"] = res
        return _record(*key, res.iterations, evaluate_rates(real, res.V, rs), real.power), traces
    if alg == "maxsinr":
        res = cache.get("maxsinr") or bl.maxsinr_run(real, cfg.baselines)
        cache["maxsinr"] = res
        return _record(*key, res.iterations, evaluate_rates(real, res.V, rs), real.power), traces
    if alg == "tdma":
        res = bl.tdma_run(real, rs)
        return _record(*key, 1, res.evaluation, real.power), traces
    raise ValueError(f"unknown algorithm {alg!r}")


def _sort_key(r):
    return (r.tx_power_dbm, -1 if r.q_max is None else r.q_max, r.realization_idx,
            r.algorithm, r.qos_domain, getattr(r, "iteration", 0))


def run_experiment(cfg: ExperimentConfig, progress: bool = False) -> ExperimentResult:
    """Run every (realization, power, rate set, algorithm, domain) cell."""
    idxs = range(cfg.n_realizations)
    result = ExperimentResult()
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(run_realization, [cfg] * len(idxs), idxs))
    else:
        parts = []
        for idx in idxs:
            parts.append(run_realization(cfg, idx))
            if progress:
                log.info("realization %d/%d done", idx + 1, cfg.n_realizations)
    for part in parts:
        result.records.extend(part.records)
        result.traces.extend(part.traces)
    result.records.sort(key=_sort_key)
    result.traces.sort(key=_sort_key)
    return result


# ---------------------------------------------------------------------------
# output

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, tuple):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


SUMMARY_FIELDS = tuple(f.name for f in dataclasses.fields(ResultRecord))
TRACE_FIELDS = tuple(f.name for f in dataclasses.fields(TraceRecord))
PLOT_FIELDS = ("algorithm", "qos_domain", "tx_power_dbm", "q_max", "n",
               "mean_discrete_rate", "sem_discrete_rate",
               "mean_continuous_rate", "sem_continuous_rate")


def plot_rows(records: Sequence[ResultRecord]) -> list[tuple]:
    """Mean and standard error per (algorithm, domain, power, q_max);
    failed cells are left out."""
    groups: dict[tuple, list[ResultRecord]] = defaultdict(list)
    for r in records:
        if not r.error:
            groups[(r.algorithm, r.qos_domain, r.tx_power_dbm, r.q_max)].append(r)
    rows = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2], -1 if k[3] is None else k[3])):
        g = groups[key]
        disc = np.array([r.weighted_discrete_rate for r in g])
        cont = np.array([r.weighted_continuous_rate for r in g])
        n = len(g)

        def sem(a):
            return float(np.std(a, ddof=1) / math.sqrt(n)) if n > 1 else 0.0

        rows.append(key + (n, float(np.mean(disc)), sem(disc), float(np.mean(cont)), sem(cont)))
    return rows


def write_outputs(result: ExperimentResult, out_dir) -> dict[str, Path]:
    """Write ``summary.csv``, ``trace.csv`` and ``plotdata.csv``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {name: out / f"{name}.csv" for name in ("summary", "trace", "plotdata")}
        _write_csv(paths["summary"], SUMMARY_FIELDS,
                   (dataclasses.astuple(r) for r in result.records))
        _write_csv(paths["trace"], TRACE_FIELDS, (dataclasses.astuple(r) for r in result.traces))
        _write_csv(paths["plotdata"], PLOT_FIELDS, plot_rows(result.records))
    except OSError as exc:
        raise SystemExit(f"cannot write outputs to {out}: {exc}") from exc
    return paths


# ---------------------------------------------------------------------------
# config file

def _floats(text: str) -> tuple[float, ...]:
    """Comma list, or ``start:stop:step`` with ``stop`` inclusive."""
    text = text.strip()
    if ":" in text:
        a, b, c = (float(v) for v in text.split(":"))
        n = int(math.floor((b - a) / c + 1e-9)) + 1
        return tuple(a + c * k for k in range(n))
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(round(v)) for v in _floats(text))


def _names(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


_SCENARIO_KEYS = {
    "corridor_length": float, "corridor_width": float, "n_bs": int, "users_per_bs": int,
    "bs_antennas": int, "ms_antennas": int, "streams": int, "carrier_freq_ghz": float,
    "noise_power_dbm": float, "shadowing": _bool, "min_distance": float,
    "user_weights": _floats,
}
_BCD_KEYS = {
    "max_iterations": int, "rel_tolerance": float, "inner_tolerance": float,
    "barrier_factor": float, "newton_tolerance": float, "max_newton_steps": int,
    "mse_floor": float, "kappa": float,
}
_BASELINE_KEYS = {
    "wmmse_max_iterations": int, "wmmse_rel_tolerance": float, "maxsinr_max_iterations": int,
    "filter_change_tolerance": float, "bisection_tolerance": float,
}


def _section(parser, name, keys) -> dict:
    if not parser.has_section(name):
        return {}
    out = {}
    for k, v in parser.items(name):
        if k in keys:
            out[k] = keys[k](v)
    return out


def load_config(source, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Parse an INI-style config from a path, or from text when
    ``source`` is a string spanning several lines.

    ``overrides`` are ``section.key=value`` strings applied on top of the
    file, e.g. ``experiment.n_realizations=10``.
    """
    parser = configparser.ConfigParser()
    if isinstance(source, str) and "\n" in source:
        parser.read_string(source)
    else:
        with open(source) as fh:      # a missing file is a fatal OSError
            parser.read_file(fh)
    for item in overrides:
        lhs, _, value = item.partition("=")
        sec, _, key = lhs.strip().rpartition(".")
        if not sec or not _:
            raise ValueError(f"override {item!r} must look like section.key=value")
        if not parser.has_section(sec):
            parser.add_section(sec)
        parser.set(sec, key, value.strip())

    scen = _section(parser, "scenario", _SCENARIO_KEYS)
    if "user_weights" in scen:
        scen["user_weights"] = tuple(scen["user_weights"])
    exp = dict(parser.items("experiment")) if parser.has_section("experiment") else {}
    rates = dict(parser.items("rates")) if parser.has_section("rates") else {}
    prop = dict(parser.items("algorithm.proposed")) if parser.has_section("algorithm.proposed") else {}
    base = dict(parser.items("algorithm.baselines")) if parser.has_section("algorithm.baselines") else {}

    kw: dict[str, Any] = {"scenario": ScenarioParams(**scen)}
    if "set" in rates:
        kw["rate_set"] = rates["set"]
    if "margin" in rates:
        kw["margin"] = float(rates["margin"])
    if "margin_db" in rates:
        kw["margin_db"] = _bool(rates["margin_db"])
    if "domains" in prop:
        kw["qos_domains"] = tuple(QosDomain.parse(d) for d in _names(prop["domains"]))
    algs = []
    if _bool(prop.get("enabled", "true")):
        algs.append("proposed")
    algs.extend(_names(base.get("enabled", "wmmse, maxsinr, tdma")))
    kw["algorithms"] = tuple(algs)
    if "tx_power_dbm" in exp:
        kw["tx_powers_dbm"] = _floats(exp["tx_power_dbm"])
    if "q_max" in exp:
        kw["q_max_values"] = _ints(exp["q_max"])
    for key, conv in (("n_realizations", int), ("master_seed", int), ("workers", int)):
        if key in exp:
            kw[key] = conv(exp[key])
    if "record_traces" in exp:
        kw["record_traces"] = _bool(exp["record_traces"])
    if parser.has_option("output", "dir"):
        kw["out_dir"] = parser.get("output", "dir")
    kw["bcd"] = bcd.BcdConfig(**_section(parser, "algorithm.proposed", _BCD_KEYS))
    kw["baselines"] = bl.BaselineConfig(**_section(parser, "algorithm.baselines", _BASELINE_KEYS))
    return ExperimentConfig(**kw)
