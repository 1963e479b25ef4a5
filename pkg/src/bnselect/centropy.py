"""Constrained maximum-entropy estimation (C_entropy).

Maximises parameter entropy subject to ``score >= best - eps * |best|`` with
a quadratic penalty method.  CPT rows are parameterised by softmax logits so
every iterate stays strictly inside the simplex; each row's logits are only
defined up to an additive constant.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .em import CandidateEstimate, CandidateSet
from .inference import CompiledData
from .network import BnStructure, CptParams
from .scoring import (MODEL_WEIGHTED, UNWEIGHTED, DirichletPrior, log_prior, param_entropy,
                      row_entropies)
from .selection import ScoreSlack, select_max_entropy

# keeps every softmax cell above ~1e-26 so line searches cannot reach theta = 0
LOGIT_BOUND = 30.0


@dataclass(frozen=True)
class CEntropyConfig:
    slack: ScoreSlack = ScoreSlack()
    mu0: float = 10.0
    growth: float = 10.0
    rounds: int = 5
    max_steps: int = 2000
    step0: float = 1.0
    shrink: float = 0.5
    sufficient_increase: float = 1e-4
    grad_tol: float = 1e-6
    warm_starts: int = 3
    feas_tol: float = 1e-6
    inner: str = "lbfgs"
    weighting: str = UNWEIGHTED
    trace_dir: str | None = None

    def __post_init__(self):
        if not self.mu0 > 0:
            raise ValueError("mu0 must be > 0")
        if not self.growth > 1:
            raise ValueError("growth must be > 1")
        if self.warm_starts < 1:
            raise ValueError("warm_starts must be >= 1")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.inner not in ("lbfgs", "gradient"):
            raise ValueError("inner must be 'lbfgs' or 'gradient'")
        if self.weighting not in (UNWEIGHTED, MODEL_WEIGHTED):
            raise ValueError(f"unknown entropy weighting {self.weighting!r}")


# -- softmax chart -------------------------------------------------------------

def _split(structure: BnStructure, vector: np.ndarray) -> list[np.ndarray]:
    out, start = [], 0
    for r, c in structure.table_shapes():
        out.append(vector[start:start + r * c].reshape(r, c))
        start += r * c
    return out


def encode(params: CptParams) -> np.ndarray:
    """Logits with zero row mean; zero cells map to a large negative logit."""
    parts = []
    for t in params.tables:
        z = np.log(np.maximum(t, 1e-300))
        parts.append((z - z.mean(axis=1, keepdims=True)).ravel())
    return np.concatenate(parts)


def decode_tables(structure: BnStructure, logits: np.ndarray) -> list[np.ndarray]:
    tables = []
    for z in _split(structure, np.asarray(logits, dtype=float)):
        e = np.exp(z - z.max(axis=1, keepdims=True))
        tables.append(e / e.sum(axis=1, keepdims=True))
    return tables


def decode(structure: BnStructure, logits: np.ndarray) -> CptParams:
    return CptParams(structure, decode_tables(structure, logits))


# -- gradients -----------------------------------------------------------------

def _compiled(structure, data):
    return data if isinstance(data, CompiledData) else CompiledData(structure, data)


def score_gradient(structure: BnStructure, params: CptParams, data, prior: DirichletPrior = DirichletPrior()):
    """d(LL + log prior)/d theta per cell: ``(E[N] + alpha - 1) / theta``."""
    if any((t <= 0.0).any() for t in params.tables):
        raise ValueError("score gradient needs strictly positive parameters")
    _, counts, _ = _compiled(structure, data).evaluate(params)
    return [(c + prior.for_node(j) - 1.0) / t for j, (c, t) in enumerate(zip(counts, params.tables))]


def _score_and_logit_grad(structure, cd, tables, params, prior):
    ll, counts, _ = cd.evaluate(params)
    score = ll + log_prior(structure, params, prior)
    grads = []
    for j, (c, t) in enumerate(zip(counts, tables)):
        s = c + (prior.for_node(j) - 1.0)
        grads.append((s - t * s.sum(axis=1, keepdims=True)).ravel())
    return score, np.concatenate(grads)


def _entropy_and_logit_grad(structure, cd, tables, params, weighting):
    if weighting == UNWEIGHTED:
        value, grads = 0.0, []
        for t in tables:
            logt = np.log(t)
            h = row_entropies(t)
            value += float(h.sum())
            grads.append((-t * (logt + h[:, None])).ravel())
        return value, np.concatenate(grads)
    # joint entropy; theta * dH/dtheta is a bincount of -J (log J + 1)
    joint = cd.joint(params)
    logj = np.log(np.where(joint > 0, joint, 1.0))
    value = float(-(joint * logj).sum())
    v = -joint * (logj + 1.0)
    grads = []
    for j, ((r, c), t) in enumerate(zip(structure.table_shapes(), tables)):
        tg = np.bincount(cd._cells[j], weights=v, minlength=r * c).reshape(r, c)
        grads.append((tg - t * tg.sum(axis=1, keepdims=True)).ravel())
    return value, np.concatenate(grads)


class PenalizedObjective:
    """``entropy - mu * max(0, threshold - score)**2`` over logits, with gradient."""

    def __init__(self, structure: BnStructure, data, prior: DirichletPrior, threshold: float,
                 mu: float, weighting: str = UNWEIGHTED):
        self.structure = structure
        self.cd = _compiled(structure, data)
        if weighting == MODEL_WEIGHTED and not self.cd.enumerated:
            raise ValueError("model-weighted entropy gradient needs an enumerable joint")
        self.prior = prior
        self.threshold = threshold
        self.mu = mu
        self.weighting = weighting
        self.evaluations = 0

    def parts(self, logits):
        """``(value, gradient, score, entropy, violation)`` at ``logits``."""
        self.evaluations += 1
        tables = decode_tables(self.structure, logits)
        if any((t <= 0.0).any() for t in tables):
            return -np.inf, np.zeros_like(logits), -np.inf, 0.0, np.inf
        params = CptParams(self.structure, tables, validate=False)
        h, gh = _entropy_and_logit_grad(self.structure, self.cd, tables, params, self.weighting)
        s, gs = _score_and_logit_grad(self.structure, self.cd, tables, params, self.prior)
        v = max(0.0, self.threshold - s)
        value = h - self.mu * v * v
        grad = gh + (2.0 * self.mu * v) * gs if v > 0 else gh
        return value, grad, s, h, v

    def __call__(self, logits):
        value, grad, *_ = self.parts(logits)
        return value, grad


def penalized_objective(structure, logits, data, prior, threshold, mu, weighting=UNWEIGHTED):
    return PenalizedObjective(structure, data, prior, threshold, mu, weighting)(logits)


# -- inner maximisers ----------------------------------------------------------

def gradient_ascent(objective: PenalizedObjective, z0, config: CEntropyConfig, trace=None):
    """Steepest ascent with backtracking (Armijo) line search."""
    z = np.array(z0, dtype=float)
    value, grad, *rest = objective.parts(z)
    steps = 0
    while steps < config.max_steps:
        gnorm2 = float(grad @ grad)
        if math.sqrt(gnorm2) < config.grad_tol:
            break
        t = config.step0
        while True:
            cand = z + t * grad
            c_value, c_grad, *c_rest = objective.parts(cand)
            if c_value >= value + config.sufficient_increase * t * gnorm2:
                break
            t *= config.shrink
            if t < 1e-16:
                return z
        z, value, grad, rest = cand, c_value, c_grad, c_rest
        steps += 1
        if trace is not None:
            trace(steps, value, *rest)
    return z


def lbfgs_ascent(objective: PenalizedObjective, z0, config: CEntropyConfig, trace=None):
    counter = [0]

    def neg(z):
        value, grad = objective(z)
        return -value, -grad

    def callback(zk):
        counter[0] += 1
        if trace is not None:
            value, _, *rest = objective.parts(zk)
            trace(counter[0], value, *rest)

    z0 = np.clip(np.asarray(z0, dtype=float), -LOGIT_BOUND, LOGIT_BOUND)
    res = minimize(neg, z0, jac=True, method="L-BFGS-B", callback=callback,
                   bounds=[(-LOGIT_BOUND, LOGIT_BOUND)] * z0.size, options={"maxiter": config.max_steps, "gtol": config.grad_tol, "ftol": 1e-15,
                            "maxcor": 20})
    return res.x


def c_entropy_solve(structure: BnStructure, data, config: CEntropyConfig, candidates: CandidateSet,
                    prior: DirichletPrior = DirichletPrior()) -> CandidateEstimate:
    """Maximum-entropy estimate within the score slack of the best candidate.

    Each warm start runs the penalty schedule; the most entropic end point
    meeting the feasibility tolerance wins (ties: higher score, then earlier
    warm start).  Falls back to the max-entropy EM candidate, flagged, when no
    end point is feasible or none beats it.
    """
    if len(candidates) == 0:
        raise ValueError("empty candidate set")
    pick = select_max_entropy(candidates, config.slack)
    if config.slack.epsilon == 0.0:
        # zero slack: feasible set is the set of score maximisers
        return _relabel(pick, {"zero_slack": 1})
    cd = _compiled(structure, data)
    best = candidates.best_score
    threshold = config.slack.threshold(best)
    starts = list(candidates.candidates[: config.warm_starts])
    if all(c.run_index != pick.run_index for c in starts):
        starts.append(pick)

    results = []
    for k, start in enumerate(starts):
        z = encode(start.params)
        violations = []
        writer = fh = None
        if config.trace_dir:
            os.makedirs(config.trace_dir, exist_ok=True)
            fh = open(os.path.join(config.trace_dir, f"branch_{k}.csv"), "w", newline="")
            writer = csv.writer(fh)
            writer.writerow(["round", "mu", "step", "objective", "score", "entropy", "violation"])
        try:
            for rnd in range(config.rounds):
                mu = config.mu0 * config.growth ** rnd
                obj = PenalizedObjective(structure, cd, prior, threshold, mu, config.weighting)
                trace = None
                if writer is not None:
                    trace = (lambda step, value, s, h, v, rnd=rnd, mu=mu:
                             writer.writerow([rnd, mu, step, value, s, h, v]))
                inner = lbfgs_ascent if config.inner == "lbfgs" else gradient_ascent
                z = inner(obj, z, config, trace)
                violations.append(obj.parts(z)[4])
        finally:
            if fh is not None:
                fh.close()
        params = decode(structure, z)
        score = cd.evaluate(params, counts=False)[0] + log_prior(structure, params, prior)
        entropy = param_entropy(structure, params, config.weighting)
        feasible = score >= threshold - config.feas_tol * abs(threshold)
        results.append((k, start, params, score, entropy, feasible, violations))

    feasible = [r for r in results if r[5]]
    if not feasible:
        return _relabel(pick, {"solver_infeasible": 1})
    k, start, params, score, entropy, _, violations = min(feasible, key=lambda r: (-r[4], -r[3], r[0]))
    if entropy < pick.entropy:
        return _relabel(pick, {"solver_no_improvement": 1})
    return CandidateEstimate(
        params=params, score=score, entropy=entropy, run_index=start.run_index,
        iterations=config.rounds, converged=True, source="c_entropy",
        info={"warm_start": k, "threshold": threshold, "violations": tuple(violations)})


def _relabel(c: CandidateEstimate, flags: dict) -> CandidateEstimate:
    return CandidateEstimate(params=c.params, score=c.score, entropy=c.entropy, run_index=c.run_index,
                             iterations=c.iterations, converged=c.converged, source="c_entropy",
                             diagnostics={**c.diagnostics, **flags}, info=dict(c.info))
