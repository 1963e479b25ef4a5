"""Seeded batch experiments comparing MAP, entropy, BMA and C_entropy selection.

Every repetition draws a ground truth, samples and masks a dataset, runs
multi-start EM once, and derives all enabled methods' estimates from that one
candidate set.  Sub-seeds are derived from ``(seed, repetition, stream)``,
so the rows do not depend on worker count or scheduling.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path


from . import seeding
from .centropy import CEntropyConfig, c_entropy_solve
from .em import EmConfig, multi_start_em
from .inference import CompiledData
from .metrics import METRICS, friedman_test, lower_median, relative_medians
from .network import (BnStructure, MissingnessSpec, forward_sample, inject_missingness,
                      network_from_dict, sample_true_params)
from .scoring import WEIGHTINGS, DirichletPrior, map_score, param_entropy
from .selection import ScoreSlack, bma_estimate, select_max_entropy, select_max_score

log = logging.getLogger(__name__)

METHODS = ("map", "entropy", "bma", "c_entropy")
BASELINE = "map"
PRESETS = ("bn3-535", "bn3-848")
ROW_COLUMNS = ("repetition", "method", "metric_kind", "metric_value", "score", "entropy",
               "iterations", "runtime_ms", "diagnostic_flags")
REP_COLUMNS = ("repetition", "status", "candidate_digest", "best_score", "score_gap",
               "missing_cells", "error")
SCHEMA_VERSION = 1
MAX_FAILURE_FRACTION = 0.10

EM_DEFAULTS = {"num_starts": 20, "max_iters": 500, "tol": 1e-6, "alpha": 2.0, "init_concentration": 1.0}
CENTROPY_DEFAULTS = {"mu0": 10.0, "growth": 10.0, "rounds": 5, "max_steps": 2000, "step0": 1.0,
                     "shrink": 0.5, "sufficient_increase": 1e-4, "grad_tol": 1e-6, "warm_starts": 3,
                     "feas_tol": 1e-6, "inner": "lbfgs"}
BMA_DEFAULTS = {"temperature": 1.0, "scheme": "softmax"}
MISSINGNESS_DEFAULTS = {"mechanism": "MCAR", "rates": {}, "conditioning_node": None, "rate_table": None,
                        "exact_count": False}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    network: dict
    n: int
    true_params: str = "fresh"
    truth_concentration: float = 1.0
    missingness: dict = field(default_factory=lambda: dict(MISSINGNESS_DEFAULTS))
    repetitions: int = 200
    em: dict = field(default_factory=lambda: dict(EM_DEFAULTS))
    slack: float = 0.001
    centropy: dict = field(default_factory=lambda: dict(CENTROPY_DEFAULTS))
    bma: dict = field(default_factory=lambda: dict(BMA_DEFAULTS))
    entropy_weighting: str = "unweighted"
    methods: tuple = METHODS
    metric: str = "kl"
    output_dir: str = "results"
    seed: int = 0
    workers: int | None = None

    def structure(self) -> BnStructure:
        return network_from_dict(self.network)[0]

    def fixed_truth(self):
        return network_from_dict(self.network)[1]

    def missingness_spec(self, structure: BnStructure) -> MissingnessSpec:
        m = self.missingness
        rates = [0.0] * structure.n_nodes
        for name, rate in m["rates"].items():
            rates[structure.index(name)] = rate
        cond = m.get("conditioning_node")
        return MissingnessSpec(tuple(rates), m["mechanism"],
                               structure.index(cond) if cond is not None else None,
                               tuple(m["rate_table"]) if m.get("rate_table") is not None else None,
                               bool(m.get("exact_count", False)))

    @property
    def prior(self) -> DirichletPrior:
        return DirichletPrior(self.em["alpha"])

    def em_config(self, seed) -> EmConfig:
        e = self.em
        return EmConfig(num_starts=e["num_starts"], max_iters=e["max_iters"], tol=e["tol"],
                        prior=self.prior, init_concentration=e["init_concentration"], seed=seed,
                        entropy_weighting=self.entropy_weighting)

    def centropy_config(self) -> CEntropyConfig:
        return CEntropyConfig(slack=ScoreSlack(self.slack), weighting=self.entropy_weighting, **self.centropy)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        return d


_TOP_KEYS = {f for f in ExperimentConfig.__dataclass_fields__}
_REQUIRED = ("network", "n")
_SECTIONS = {"em": EM_DEFAULTS, "centropy": CENTROPY_DEFAULTS, "bma": BMA_DEFAULTS,
             "missingness": MISSINGNESS_DEFAULTS}


def _preset_doc(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return json.loads(resources.files("bnselect").joinpath("presets", f"{name}.json").read_text())


def config_from_dict(doc: dict, base_dir: str | os.PathLike = ".") -> ExperimentConfig:
    """Validate a config document and fill in defaults.

    ``network`` may be an inline network document, a preset name or a path
    to a network file (relative to ``base_dir``).
    """
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}")
    for key in _REQUIRED:
        if key not in doc:
            raise ConfigError(f"missing required config key {key!r}")
    kwargs = dict(doc)
    for section, defaults in _SECTIONS.items():
        given = kwargs.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"config key {section!r} must be an object")
        bad = sorted(set(given) - set(defaults))
        if bad:
            raise ConfigError(f"unknown config key {section}.{bad[0]!r}")
        kwargs[section] = {**defaults, **given}
    net = kwargs["network"]
    if isinstance(net, str):
        if net in PRESETS:
            net = _preset_doc(net)["network"]
        else:
            path = Path(base_dir) / net
            if not path.exists():
                raise ConfigError(f"network file {str(path)!r} does not exist")
            net = json.loads(path.read_text())
    kwargs["network"] = net
    if "methods" in kwargs:
        kwargs["methods"] = tuple(kwargs["methods"])
    config = ExperimentConfig(**kwargs)
    _validate(config)
    return config


def _validate(c: ExperimentConfig) -> None:
    try:
        structure = c.structure()
        spec = c.missingness_spec(structure)
        spec.check(structure)
        c.em_config(0)
        c.centropy_config()
        ScoreSlack(c.slack)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    if not isinstance(c.n, int) or c.n < 0:
        raise ConfigError("config key 'n' must be a nonnegative integer")
    if not isinstance(c.repetitions, int) or c.repetitions < 1:
        raise ConfigError("config key 'repetitions' must be an integer >= 1")
    if not c.methods or set(c.methods) - set(METHODS):
        raise ConfigError(f"config key 'methods' must be a non-empty subset of {list(METHODS)}")
    if len(set(c.methods)) != len(c.methods):
        raise ConfigError("config key 'methods' lists a method twice")
    if c.metric not in METRICS:
        raise ConfigError(f"config key 'metric' must be one of {list(METRICS)}")
    if c.entropy_weighting not in WEIGHTINGS:
        raise ConfigError(f"config key 'entropy_weighting' must be one of {list(WEIGHTINGS)}")
    if c.true_params not in ("fresh", "fixed"):
        raise ConfigError("config key 'true_params' must be 'fresh' or 'fixed'")
    if c.bma["scheme"] not in ("softmax", "rank") or not c.bma["temperature"] > 0:
        raise ConfigError("config key 'bma' needs scheme softmax|rank and temperature > 0")
    if c.workers is not None and c.workers < 1:
        raise ConfigError("config key 'workers' must be >= 1")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {str(path)!r} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config file: {exc}") from None
    return config_from_dict(doc, path.parent)


def load_preset(name: str, **overrides) -> ExperimentConfig:
    doc = _preset_doc(name)
    doc.update(overrides)
    return config_from_dict(doc)


# -- running -------------------------------------------------------------------

def _format(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _flags(diagnostics: dict) -> str:
    return ";".join(f"{k}={diagnostics[k]}" for k in sorted(diagnostics))


def _truth(config: ExperimentConfig, structure, rep: int):
    if config.true_params == "fixed":
        fixed = config.fixed_truth()
        if fixed is not None:
            return fixed
        return sample_true_params(structure, seeding.derive_seed(config.seed, seeding.TRUTH),
                                  config.truth_concentration)
    return sample_true_params(structure, seeding.derive_seed(config.seed, rep, seeding.TRUTH),
                              config.truth_concentration)


def run_repetition(config: ExperimentConfig, rep: int):
    """Rows and repetition record for one repetition; errors become a failed record."""
    try:
        return _run_repetition(config, rep)
    except Exception as exc:  # recorded, excluded from summary
        log.warning("repetition %d failed: %s", rep, exc)
        return [], {"repetition": rep, "status": "failed", "candidate_digest": "", "best_score": "",
                    "score_gap": "", "missing_cells": "", "error": f"{type(exc).__name__}: {exc}"}


def _run_repetition(config: ExperimentConfig, rep: int):
    from .metrics import joint_divergence

    structure = config.structure()
    truth = _truth(config, structure, rep)
    data = forward_sample(structure, truth, config.n, seeding.derive_seed(config.seed, rep, seeding.SAMPLE))
    data = inject_missingness(data, config.missingness_spec(structure),
                              seeding.derive_seed(config.seed, rep, seeding.MASK))
    cd = CompiledData(structure, data)
    prior = config.prior
    candidates = multi_start_em(structure, cd,
                                config.em_config(seeding.derive_seed(config.seed, rep, seeding.EM_INIT)))
    slack = ScoreSlack(config.slack)
    rows = []
    for method in config.methods:
        t0 = time.perf_counter()
        if method == "map":
            est = select_max_score(candidates)
            params, score, entropy, iters, flags = est.params, est.score, est.entropy, est.iterations, est.diagnostics
        elif method == "entropy":
            est = select_max_entropy(candidates, slack)
            params, score, entropy, iters, flags = est.params, est.score, est.entropy, est.iterations, est.diagnostics
        elif method == "bma":
            params, weights = bma_estimate(candidates, config.bma["temperature"], config.bma["scheme"])
            score = map_score(structure, params, cd, prior)
            entropy = param_entropy(structure, params, config.entropy_weighting)
            iters = 0
            flags = {"bma_degenerate_weights": 1} if weights.degenerate else {}
        else:
            est = c_entropy_solve(structure, cd, config.centropy_config(), candidates, prior)
            params, score, entropy, iters, flags = est.params, est.score, est.entropy, est.iterations, est.diagnostics
        runtime_ms = int(round(1000 * (time.perf_counter() - t0)))
        rows.append({"repetition": rep, "method": method, "metric_kind": config.metric,
                     "metric_value": float(joint_divergence(structure, truth, params, config.metric)),
                     "score": float(score), "entropy": float(entropy), "iterations": int(iters),
                     "runtime_ms": runtime_ms, "diagnostic_flags": _flags(flags)})
    info = {"repetition": rep, "status": "ok", "candidate_digest": candidates.digest(),
            "best_score": float(candidates.best_score),
            "score_gap": float(candidates.best_score - candidates.scores.min()),
            "missing_cells": data.missing_count(), "error": ""}
    return rows, info


def _rep_task(args):
    config, rep = args
    return run_repetition(config, rep)


@dataclass
class ExperimentReport:
    config: dict
    rows: list
    repetitions: list
    summary: dict

    @property
    def failures(self) -> list:
        return [r for r in self.repetitions if r["status"] != "ok"]

    @property
    def excessive_failures(self) -> bool:
        return len(self.failures) > MAX_FAILURE_FRACTION * max(len(self.repetitions), 1)


class _CsvAppender:
    def __init__(self, path, columns):
        self.fh = open(path, "w", newline="")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        self.writer.writerow(columns)
        self.columns = columns

    def write(self, rows):
        for r in rows:
            self.writer.writerow([_format(r[c]) for c in self.columns])
        self.fh.flush()

    def close(self):
        self.fh.close()


def run_experiment(config: ExperimentConfig, out_dir=None, workers: int | None = None) -> ExperimentReport:
    """Run every repetition, appending rows to ``out_dir/rows.csv`` as they complete in order."""
    workers = workers or config.workers or os.cpu_count() or 1
    tasks = [(config, rep) for rep in range(config.repetitions)]
    rows_out = reps_out = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        rows_out = _CsvAppender(os.path.join(out_dir, "rows.csv"), ROW_COLUMNS)
        reps_out = _CsvAppender(os.path.join(out_dir, "repetitions.csv"), REP_COLUMNS)
    all_rows, all_reps = [], []
    try:
        if workers > 1:
            pool = ProcessPoolExecutor(workers)
            results = pool.map(_rep_task, tasks)
        else:
            pool = None
            results = map(_rep_task, tasks)
        for rows, info in results:
            all_rows += rows
            all_reps.append(info)
            if rows_out is not None:
                rows_out.write(rows)
                reps_out.write([info])
            log.info("repetition %d/%d %s", info["repetition"] + 1, config.repetitions, info["status"])
        if pool is not None:
            pool.shutdown()
    finally:
        if rows_out is not None:
            rows_out.close()
            reps_out.close()
    report = ExperimentReport(config.to_dict(), all_rows, all_reps,
                              summarize(all_rows, config.methods, all_reps))
    if out_dir is not None:
        write_report(report, out_dir)
    return report


# -- summaries and files ---------------------------------------------------------

def _method_columns(rows, methods):
    by = {m: {} for m in methods}
    for r in rows:
        by[r["method"]][r["repetition"]] = r["metric_value"]
    reps = sorted(set.intersection(*(set(v) for v in by.values()))) if by else []
    return reps, {m: [by[m][k] for k in reps] for m in methods}


def summarize(rows, methods=None, repetitions=None) -> dict:
    """Summary statistics; a pure function of the rows (and repetition records)."""
    if methods is None:
        methods = list(dict.fromkeys(r["method"] for r in rows))
    methods = list(methods)
    reps, columns = _method_columns(rows, methods)
    summary = {"schema_version": SCHEMA_VERSION,
               "metric_kind": rows[0]["metric_kind"] if rows else None,
               "methods": methods, "repetitions_completed": len(reps),
               "medians": {m: (lower_median(v) if v else None) for m, v in columns.items()},
               "relative_medians": None, "friedman": None,
               "diagnostics": {m: {} for m in methods}}
    if repetitions is not None:
        summary["repetitions_failed"] = sum(1 for r in repetitions if r["status"] != "ok")
    if BASELINE in columns and reps:
        try:
            summary["baseline"] = BASELINE
            summary["relative_medians"] = relative_medians(columns, BASELINE)
        except ValueError:
            summary["relative_medians"] = None
    if len(methods) >= 2 and len(reps) >= 2:
        summary["friedman"] = friedman_test(columns).as_dict()
    for r in rows:
        for flag in filter(None, r["diagnostic_flags"].split(";")):
            name, _, count = flag.partition("=")
            d = summary["diagnostics"][r["method"]]
            d[name] = d.get(name, 0) + int(count or 1)
    return summary


def write_report(report: ExperimentReport, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name, columns, records in (("rows.csv", ROW_COLUMNS, report.rows),
                                   ("repetitions.csv", REP_COLUMNS, report.repetitions)):
        w = _CsvAppender(os.path.join(out_dir, name), columns)
        w.write(records)
        w.close()
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(report.summary, fh, indent=2, sort_keys=True)
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(report.config, fh, indent=2, sort_keys=True)


def _parse_float(s: str) -> float:
    return float(s) if s != "" else math.nan


def read_rows(path) -> list[dict]:
    """Parse a rows CSV; a truncated trailing line from an interrupted run is skipped."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != ROW_COLUMNS:
            raise ValueError(f"unexpected rows header {header}")
        for rec in reader:
            if len(rec) != len(ROW_COLUMNS):
                continue
            r = dict(zip(ROW_COLUMNS, rec))
            try:
                rows.append({"repetition": int(r["repetition"]), "method": r["method"],
                             "metric_kind": r["metric_kind"],
                             "metric_value": _parse_float(r["metric_value"]),
                             "score": _parse_float(r["score"]), "entropy": _parse_float(r["entropy"]),
                             "iterations": int(r["iterations"]), "runtime_ms": int(r["runtime_ms"]),
                             "diagnostic_flags": r["diagnostic_flags"]})
            except ValueError:
                continue
    return rows


def _read_reps(path) -> list[dict]:
    with open(path, newline="") as fh:
        out = []
        for r in csv.DictReader(fh):
            r["repetition"] = int(r["repetition"])
            out.append(r)
        return out


def _close(a, b, tol=1e-12) -> bool:
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(_close(a[k], b[k], tol) for k in a)
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(_close(x, y, tol) for x, y in zip(a, b))
    if isinstance(a, (int, float)) and isinstance(b, (int, float)) and not isinstance(a, bool):
        if math.isinf(a) or math.isinf(b) or math.isnan(a) or math.isnan(b):
            return a == b or (math.isnan(a) and math.isnan(b))
        return abs(a - b) <= tol * max(1.0, abs(a), abs(b))
    return a == b


def load_report(out_dir) -> ExperimentReport:
    """Read a report and check its stored summary against one recomputed from the rows."""
    out_dir = Path(out_dir)
    config = json.loads((out_dir / "config.json").read_text())
    stored = json.loads((out_dir / "summary.json").read_text())
    rows = read_rows(out_dir / "rows.csv")
    reps = _read_reps(out_dir / "repetitions.csv")
    recomputed = json.loads(json.dumps(summarize(rows, config["methods"], reps)))
    if not _close(stored, recomputed):
        raise ValueError("stored summary does not match the rows")
    return ExperimentReport(config, rows, reps, stored)


def with_overrides(config: ExperimentConfig, **changes) -> ExperimentConfig:
    new = replace(config, **changes)
    _validate(new)
    return new
