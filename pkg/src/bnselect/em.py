"""MAP-EM for discrete networks and multi-start orchestration."""

from __future__ import annotations

import csv
import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .inference import CompiledData
from .network import BnStructure, CptParams, IncompleteDataset, sample_true_params
from .scoring import UNWEIGHTED, DirichletPrior, log_prior, map_update, param_entropy
from .seeding import derive_seed


class NoFiniteCandidate(RuntimeError):
    pass


@dataclass(frozen=True)
class EmConfig:
    num_starts: int = 20
    max_iters: int = 500
    tol: float = 1e-6
    prior: DirichletPrior = DirichletPrior()
    init_concentration: float = 1.0
    init_params: tuple[CptParams, ...] | None = None
    seed: object = 0
    entropy_weighting: str = UNWEIGHTED
    on_impossible: str = "skip"
    workers: int = 1

    def __post_init__(self):
        if self.num_starts < 1:
            raise ValueError("num_starts must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if not self.init_concentration > 0:
            raise ValueError("init concentration must be > 0")
        if self.init_params is not None and len(self.init_params) < self.num_starts:
            raise ValueError("fewer provided initialisations than num_starts")
        if self.on_impossible not in ("skip", "raise"):
            raise ValueError("on_impossible must be 'skip' or 'raise'")


@dataclass(frozen=True)
class CandidateEstimate:
    params: CptParams
    score: float
    entropy: float
    run_index: int
    iterations: int = 0
    converged: bool = True
    source: str = "em"
    diagnostics: dict = field(default_factory=dict, compare=False)  # flag name -> count
    info: dict = field(default_factory=dict, compare=False)
    history: tuple[float, ...] = field(default=(), compare=False, repr=False)

    @property
    def degenerate(self) -> bool:
        return not math.isfinite(self.score)


def _sort_key(c: CandidateEstimate):
    return (-c.score if math.isfinite(c.score) else math.inf, c.run_index)


@dataclass(frozen=True)
class CandidateSet:
    """Candidates in descending score order, ties by ascending run index."""

    candidates: tuple[CandidateEstimate, ...]

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(sorted(self.candidates, key=_sort_key)))

    def __len__(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def __getitem__(self, i):
        return self.candidates[i]

    @property
    def best_score(self) -> float:
        if not self.candidates:
            raise ValueError("empty candidate set")
        return self.candidates[0].score

    @property
    def scores(self) -> np.ndarray:
        return np.array([c.score for c in self.candidates])

    def digest(self) -> str:
        """Stable hash of every candidate's parameters and score."""
        h = hashlib.sha256()
        for c in self.candidates:
            h.update(np.int64(c.run_index).tobytes())
            h.update(np.float64(c.score).tobytes())
            for t in c.params.tables:
                h.update(np.ascontiguousarray(t).tobytes())
        return h.hexdigest()[:16]


def e_step(structure: BnStructure, params: CptParams, data, on_impossible: str = "skip"):
    """Expected family counts; returns ``(tables, skipped_records)``."""
    cd = data if isinstance(data, CompiledData) else CompiledData(structure, data)
    _, counts, skipped = cd.evaluate(params, counts=True, on_impossible=on_impossible)
    return counts, skipped


def em_run(structure: BnStructure, data, config: EmConfig, init_params: CptParams,
           run_index: int = 0, trace_path=None) -> CandidateEstimate:
    """Iterate E- and M-steps from ``init_params`` until the relative score change drops below ``tol``.

    A run also stops once the expected counts reproduce exactly, since the
    next M-step would return the same parameters.
    """
    cd = data if isinstance(data, CompiledData) else CompiledData(structure, data)
    prior = config.prior

    def score_of(p):
        ll, counts, skipped = cd.evaluate(p, on_impossible=config.on_impossible)
        return ll + log_prior(structure, p, prior), counts, skipped

    params = init_params
    score, counts, skipped = score_of(params)
    history = [score]
    trace = [(0, score, param_entropy(structure, params, config.entropy_weighting))] if trace_path else None
    unsupported, max_skipped = 0, skipped
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        new_params, unsupported = map_update(structure, counts, prior)
        new_score, new_counts, skipped = score_of(new_params)
        max_skipped = max(max_skipped, skipped)
        history.append(new_score)
        if trace is not None:
            trace.append((it, new_score, param_entropy(structure, new_params, config.entropy_weighting)))
        fixed = all(np.array_equal(a, b) for a, b in zip(counts, new_counts))
        change = abs(new_score - score) / (1.0 + abs(score))
        params, score, counts = new_params, new_score, new_counts
        if fixed or change < config.tol:
            converged = True
            break
    if trace is not None:
        with open(trace_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "score", "entropy"])
            w.writerows(trace)
    diagnostics = {}
    if unsupported:
        diagnostics["unsupported_rows"] = unsupported
    if max_skipped:
        diagnostics["impossible_evidence_skipped"] = max_skipped
    return CandidateEstimate(
        params=params, score=score,
        entropy=param_entropy(structure, params, config.entropy_weighting),
        run_index=run_index, iterations=it, converged=converged,
        diagnostics=diagnostics, history=tuple(history))


def initial_params(structure: BnStructure, config: EmConfig, run_index: int) -> CptParams:
    if config.init_params is not None:
        return config.init_params[run_index]
    return sample_true_params(structure, derive_seed(config.seed, run_index), config.init_concentration)


def multi_start_em(structure: BnStructure, data: IncompleteDataset | CompiledData,
                   config: EmConfig) -> CandidateSet:
    """Run ``num_starts`` independent EM runs; output does not depend on ``workers``."""
    cd = data if isinstance(data, CompiledData) else CompiledData(structure, data)

    def run(r):
        return em_run(structure, cd, config, initial_params(structure, config, r), run_index=r)

    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            results = list(pool.map(run, range(config.num_starts)))
    else:
        results = [run(r) for r in range(config.num_starts)]
    if all(c.degenerate for c in results):
        raise NoFiniteCandidate("no finite-score candidate")
    return CandidateSet(tuple(results))
