"""Optimal 1-of-N retrieval when probe and gallery are compared only by covariates.

The probe's noisy covariate is observed; the policy picks a target value and
then a gallery item carrying that (noisy) value uniformly at random. What
happens when no gallery item carries the target is set by ``empty_choice``:

``"error"``
    the trial is lost (default).
``"uniform"``
    fall back to a uniform pick over the whole gallery.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .prob import (
    NORMALIZATION_TOL,
    CovariateSpace,
    DomainError,
    ModelError,
    UndefinedPosteriorError,
    WorldModel,
    _frozen,
    _same_space,
)

EmptyChoice = Literal["error", "uniform"]
EMPTY_CHOICES = ("error", "uniform")
DEFAULT_BUDGET = 10**7


@dataclass(frozen=True, eq=False)
class RetrievalPolicy:
    """Stochastic rule ``rule[noisy_probe, target]`` = r(target | noisy probe)."""

    space: CovariateSpace
    rule: np.ndarray = field(repr=False)

    def __post_init__(self):
        r = np.asarray(self.rule, dtype=np.float64)
        m = self.space.size
        if r.shape != (m, m):
            raise ModelError(f"retrieval policy has shape {r.shape}, expected ({m}, {m})")
        if not np.all(np.isfinite(r)) or np.any(r < 0) or np.any(r > 1):
            raise ModelError("retrieval policy entries must lie in [0, 1]")
        totals = np.array([math.fsum(row) for row in r])
        bad = np.flatnonzero(np.abs(totals - 1.0) > NORMALIZATION_TOL)
        if bad.size:
            i = int(bad[0])
            raise ModelError(f"retrieval policy row {self.space.labels[i]!r} sums to {totals[i]!r}")
        object.__setattr__(self, "rule", _frozen(r / totals[:, None]))

    @classmethod
    def uniform(cls, space: CovariateSpace) -> RetrievalPolicy:
        return cls(space, np.full((space.size, space.size), 1.0 / space.size))

    @classmethod
    def identity(cls, space: CovariateSpace) -> RetrievalPolicy:
        """Target the value the probe was classified as."""
        return cls(space, np.eye(space.size))

    @classmethod
    def deterministic(cls, space: CovariateSpace, targets) -> RetrievalPolicy:
        rule = np.zeros((space.size, space.size))
        for row, t in enumerate(targets):
            rule[row, space.index(t)] = 1.0
        return cls(space, rule)

    def targets(self) -> dict[str, dict[str, float]]:
        labels = self.space.labels
        return {a: {b: float(v) for b, v in zip(labels, row)} for a, row in zip(labels, self.rule)}


@dataclass(frozen=True, eq=False)
class RetrievalAnswer:
    policy: RetrievalPolicy
    per_probe_correct: np.ndarray = field(repr=False)
    overall_error: float
    unreachable: tuple[str, ...] = ()


def _check_n(n: int) -> int:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"gallery size must be an integer >= 1, got {n!r}")
    return int(n)


def _check_empty(empty_choice: str) -> None:
    if empty_choice not in EMPTY_CHOICES:
        raise ModelError(f"empty_choice must be one of {EMPTY_CHOICES}, got {empty_choice!r}")


def _gain_p(p: float, n: int) -> float:
    # (1 - (1 - p)^n) / (n p), with the p -> 0 limit of 1
    if p <= 0.0:
        return 1.0
    return -math.expm1(n * math.log1p(-p)) / (n * p) if p < 1.0 else 1.0 / n


def _empty_p(p: float, n: int) -> float:
    # P(no imposter carries the target) * 1/n
    return (1.0 - p) ** (n - 1) / n


def gain(cs: str | int, model: WorldModel, n: int) -> float:
    """Credit factor E[1/(K+1)] for targeting ``cs`` given the true match carries it.

    K is the number of the n-1 imposters whose noisy value is ``cs``. The
    result does not depend on the probe's true covariate.
    """
    n = _check_n(n)
    p = model.noisy_imposter_marginal().probs[model.space.index(cs)]
    return _gain_p(float(p), n)


def credit_matrix(model: WorldModel, n: int, empty_choice: EmptyChoice = "error") -> np.ndarray:
    """``credit[c_p, target]`` = P(correct | true probe covariate, target)."""
    n = _check_n(n)
    _check_empty(empty_choice)
    p_gj = model.noisy_imposter_marginal().probs
    g = np.array([_gain_p(float(p), n) for p in p_gj])
    pj = model.gallery_channel.matrix
    credit = pj * g[None, :]
    if empty_choice == "uniform":
        e = np.array([_empty_p(float(p), n) for p in p_gj])
        credit = credit + (1.0 - pj) * e[None, :]
    return credit


def _scores(model: WorldModel, n: int, empty_choice: EmptyChoice):
    """Return (P_QH marginal, score[noisy_probe, target]); unreachable rows are 0."""
    joint = model.probe_prior.probs[:, None] * model.probe_channel.matrix  # [c_p, noisy]
    marginal = joint.sum(axis=0)
    credit = credit_matrix(model, n, empty_choice)
    scores = np.zeros((model.space.size, model.space.size))
    for o in range(model.space.size):
        if marginal[o] > 0:
            post = joint[:, o] / marginal[o]
            scores[o] = post @ credit
    return marginal, scores


def correct_given_noisy_probe(
    ctilde_p: str | int,
    cs: str | int,
    model: WorldModel,
    n: int,
    empty_choice: EmptyChoice = "error",
) -> float:
    """P(correct | noisy probe value, target ``cs``), averaging over the true probe value."""
    o = model.space.index(ctilde_p)
    marginal, scores = _scores(model, n, empty_choice)
    if marginal[o] <= 0:
        raise UndefinedPosteriorError(model.space.labels[o], float(marginal[o]))
    return float(scores[o, model.space.index(cs)])


def optimal_policy(model: WorldModel, n: int, empty_choice: EmptyChoice = "error") -> RetrievalAnswer:
    """Deterministic argmax rule, ties to the lowest label index.

    Noisy probe values that never occur get a point mass on index 0 and are
    listed in ``unreachable``.
    """
    marginal, scores = _scores(model, n, empty_choice)
    space = model.space
    targets = np.argmax(scores, axis=1)
    unreachable = []
    per_probe = np.zeros(space.size)
    for o in range(space.size):
        if marginal[o] > 0:
            per_probe[o] = scores[o, targets[o]]
        else:
            targets[o] = 0
            unreachable.append(space.labels[o])
    policy = RetrievalPolicy.deterministic(space, targets)
    error = 1.0 - math.fsum(marginal * per_probe)
    return RetrievalAnswer(policy, _frozen(per_probe), error, tuple(unreachable))


def policy_error(
    policy: RetrievalPolicy, model: WorldModel, n: int, empty_choice: EmptyChoice = "error"
) -> float:
    """Exact error of an arbitrary stochastic retrieval policy."""
    _same_space(policy.space, model.space)
    marginal, scores = _scores(model, n, empty_choice)
    per_probe = np.einsum("ot,ot->o", policy.rule, scores)
    return 1.0 - math.fsum(marginal * per_probe)


def evaluate_policy(
    policy: RetrievalPolicy, model: WorldModel, n: int, empty_choice: EmptyChoice = "error"
) -> RetrievalAnswer:
    _same_space(policy.space, model.space)
    marginal, scores = _scores(model, n, empty_choice)
    per_probe = np.einsum("ot,ot->o", policy.rule, scores)
    unreachable = tuple(lab for lab, m in zip(model.space.labels, marginal) if m <= 0)
    return RetrievalAnswer(policy, _frozen(per_probe), 1.0 - math.fsum(marginal * per_probe), unreachable)


class BudgetExceeded(DomainError):
    def __init__(self, required: int, budget: int):
        self.required = required
        self.budget = budget
        super().__init__(f"enumeration needs {required} terms, budget is {budget}")


def _compositions(total: int, parts: int):
    """All non-negative integer vectors of length ``parts`` summing to ``total``."""
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(total + parts - 1 - prev - 1)
        yield tuple(out)


def enumeration_size(m: int, n: int) -> int:
    return m**3 * math.comb(n - 1 + m - 1, m - 1)


def brute_force_retrieval(
    model: WorldModel,
    n: int,
    policy: RetrievalPolicy,
    empty_choice: EmptyChoice = "error",
    budget: int = DEFAULT_BUDGET,
) -> float:
    """Exact error by exhaustive enumeration of every random outcome.

    Sums over the true probe covariate, its noisy probe value, the true
    match's noisy gallery value and the multinomial vector of imposter noisy
    value counts. Shares nothing with the closed form beyond the model.
    """
    n = _check_n(n)
    _check_empty(empty_choice)
    _same_space(policy.space, model.space)
    m = model.space.size
    required = enumeration_size(m, n)
    if required > budget:
        raise BudgetExceeded(required, budget)

    q = model.probe_prior.probs
    h = model.probe_channel.matrix
    j = model.gallery_channel.matrix
    g = model.imposter_prior.probs
    p_imp = [math.fsum(g[c] * j[c, o] for c in range(m)) for o in range(m)]
    r = policy.rule

    count_terms = []
    log_fact = math.lgamma(n)
    for counts in _compositions(n - 1, m):
        if any(k > 0 and p_imp[o] == 0.0 for o, k in enumerate(counts)):
            continue
        logp = log_fact
        for o, k in enumerate(counts):
            logp -= math.lgamma(k + 1)
            if k:
                logp += k * math.log(p_imp[o])
        count_terms.append((counts, math.exp(logp)))

    terms = []
    for cp, ctp, ctg0 in itertools.product(range(m), repeat=3):
        w = q[cp] * h[cp, ctp] * j[cp, ctg0]
        if w == 0.0:
            continue
        for counts, pc in count_terms:
            credit = 0.0
            for t in range(m):
                if r[ctp, t] == 0.0:
                    continue
                if ctg0 == t:
                    credit += r[ctp, t] / (1 + counts[t])
                elif counts[t] == 0 and empty_choice == "uniform":
                    credit += r[ctp, t] / n
            if credit:
                terms.append(w * pc * credit)
    return 1.0 - math.fsum(terms)
