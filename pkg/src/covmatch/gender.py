"""Closed forms for matching on a binary covariate with a 50/50 prior.

Gallery items are faces classified with error ``e_f``; probes are voices
classified with error ``e_v``. Imbalanced priors and other covariates go
through :mod:`covmatch.retrieval` and :mod:`covmatch.verification`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .prob import DomainError, WorldModel
from .retrieval import RetrievalPolicy


@dataclass(frozen=True)
class GenderErrorRates:
    e_f: float = 0.0
    e_v: float = 0.0

    def __post_init__(self):
        for name in ("e_f", "e_v"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {v}")

    @property
    def alpha(self) -> float:
        """Probability the same/different relation of two items is called correctly."""
        return (1 - self.e_f) * (1 - self.e_v) + self.e_f * self.e_v

    def model(self) -> WorldModel:
        """The general model this special case embeds into (voice probe, face gallery)."""
        return WorldModel.binary_symmetric(self.e_v, self.e_f)


@dataclass(frozen=True)
class MatchStrategy12:
    """``p_same``: how often the gender-matched item is taken when the gallery genders differ."""

    p_same: float
    error: float


class MismatchTypeRow(NamedTuple):
    type: int
    probe_ok: bool
    gallery1_ok: bool
    gallery2_ok: bool
    base_prob: float
    error_factor: float

    @property
    def prob_error(self) -> float:
        return self.base_prob * self.error_factor


class EerPerfect(NamedTuple):
    p_accept: float
    eer: float


class EerImperfect(NamedTuple):
    alpha: float
    p_accept: float
    q_accept: float
    eer: float


def match12_perfect() -> float:
    # gallery genders differ half the time (no error), else a coin flip
    return 0.5 * 0.0 + 0.5 * 0.5


def match12_error(rates: GenderErrorRates, p_same: float) -> float:
    ef, ev = rates.e_f, rates.e_v
    return 0.25 + 0.5 * (2 * ef * ev - ev - ef + 1 + p_same * (2 * ef + 2 * ev - 4 * ef * ev - 1))


def match12_imperfect(rates: GenderErrorRates) -> MatchStrategy12:
    """Bang-bang choice of ``p_same`` and the resulting 1:2 matching error."""
    ef, ev = rates.e_f, rates.e_v
    if ef + ev < 2 * ef * ev + 0.5:
        return MatchStrategy12(1.0, 0.25 + 0.5 * (ef + ev - 2 * ev * ef))
    return MatchStrategy12(0.0, 0.75 + ef * ev - 0.5 * (ev + ef))


def mismatch_type_table(rates: GenderErrorRates, p: float) -> list[MismatchTypeRow]:
    """The eight classification-correctness cases when the two gallery genders differ.

    ``gallery1`` is the true match. ``base_prob`` is the probability of the
    correctness pattern, ``error_factor`` the matching error it leads to.
    """
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p}")
    ef, ev = rates.e_f, rates.e_v
    rows = []
    for k, (probe, g1, g2) in enumerate(
        [(1, 1, 1), (1, 0, 1), (1, 1, 0), (1, 0, 0), (0, 1, 1), (0, 0, 1), (0, 1, 0), (0, 0, 0)],
        start=1,
    ):
        base = (1 - ev if probe else ev) * (1 - ef if g1 else ef) * (1 - ef if g2 else ef)
        if g1 != g2:
            factor = 0.5  # both gallery items read as the same gender
        elif probe == g1:
            factor = 1 - p  # the gender-consistent pick is the true match
        else:
            factor = p
        rows.append(MismatchTypeRow(k, bool(probe), bool(g1), bool(g2), base, factor))
    return rows


def match12_from_table(rates: GenderErrorRates, p: float) -> float:
    return 0.25 + 0.5 * sum(row.prob_error for row in mismatch_type_table(rates, p))


def strategy_policy(p_same: float) -> RetrievalPolicy:
    """The 1:2 strategy as a general retrieval policy (use with ``empty_choice="uniform"``)."""
    space = GenderErrorRates().model().space
    return RetrievalPolicy(space, np.array([[p_same, 1 - p_same], [1 - p_same, p_same]]))


def match1n_perfect(n: int) -> float:
    """1:N error when genders are known exactly: 1 - (2 - 0.5^(N-1)) / N."""
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"gallery size must be an integer >= 1, got {n!r}")
    return 1.0 - (2.0 - 0.5 ** (n - 1)) / n


def verify_eer_perfect() -> EerPerfect:
    # FAR = 0.5 P, FRR = 1 - P
    p = 2.0 / 3.0
    return EerPerfect(p, 0.5 * p)


def verify_eer_imperfect(rates: GenderErrorRates) -> EerImperfect:
    """Optimal verification EER from noisy gender labels.

    Rates above 0.5 are reduced by relabeling that classifier's output. When
    exactly one rate exceeds 0.5 the polarity flips (alpha < 0.5) and the
    optimum accepts pairs read as *different* genders, so ``q_accept``
    carries the mass instead of ``p_accept``. ``alpha`` is reported raw.
    """
    alpha = rates.alpha
    effective = max(alpha, 1.0 - alpha)
    accept = 2.0 / (1.0 + 2.0 * effective)
    eer = 1.0 / (1.0 + 2.0 * effective)
    if alpha >= 0.5:
        return EerImperfect(alpha, accept, 0.0, eer)
    return EerImperfect(alpha, 0.0, accept, eer)
