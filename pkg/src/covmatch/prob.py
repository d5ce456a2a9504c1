"""Finite probability primitives: covariate spaces, distributions and channels.

Labels are strings at the edges; everything inside works by index, with the
order of ``CovariateSpace.labels`` fixing the index mapping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

NORMALIZATION_TOL = 1e-9


class ModelError(ValueError):
    """A structural problem: shapes, label sets or normalization are wrong."""


class DomainError(ValueError):
    """A well-formed input outside an operation's domain."""


class UndefinedPosteriorError(DomainError):
    """The conditioning observation has zero marginal probability."""

    def __init__(self, label: str, marginal: float):
        self.label = label
        self.marginal = marginal
        super().__init__(
            f"posterior undefined: observed label {label!r} has marginal "
            f"probability {marginal!r}"
        )


@dataclass(frozen=True)
class CovariateSpace:
    labels: tuple[str, ...]

    def __init__(self, labels: Sequence[str]):
        labels = tuple(labels)
        if len(labels) < 1:
            raise ModelError("covariate space needs at least one label")
        if not all(isinstance(lab, str) for lab in labels):
            raise ModelError("covariate labels must be strings")
        if len(set(labels)) != len(labels):
            raise ModelError(f"covariate labels must be unique, got {list(labels)}")
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: str | int) -> int:
        if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
            if not 0 <= label < self.size:
                raise ModelError(f"label index {label} out of range for M={self.size}")
            return int(label)
        try:
            return self.labels.index(label)
        except ValueError:
            raise ModelError(f"unknown label {label!r}; known {list(self.labels)}") from None

    def __len__(self) -> int:
        return self.size


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _check_probs(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise ModelError(f"{what}: entries must be finite")
    if np.any(values < 0.0) or np.any(values > 1.0):
        raise ModelError(f"{what}: entries must lie in [0, 1], got {values.tolist()}")


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probability vector over a covariate space.

    Validated to ``NORMALIZATION_TOL`` then renormalized exactly, so that
    identities downstream hold to round-off rather than to input rounding.
    """

    space: CovariateSpace
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape != (self.space.size,):
            raise ModelError(
                f"distribution has shape {p.shape}, expected ({self.space.size},)"
            )
        _check_probs(p, "distribution")
        total = math.fsum(p)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ModelError(f"distribution sums to {total!r}, not 1 (tol {NORMALIZATION_TOL})")
        object.__setattr__(self, "probs", _frozen(p / total))

    @classmethod
    def uniform(cls, space: CovariateSpace) -> Distribution:
        return cls(space, np.full(space.size, 1.0 / space.size))

    @classmethod
    def point_mass(cls, space: CovariateSpace, label: str | int) -> Distribution:
        p = np.zeros(space.size)
        p[space.index(label)] = 1.0
        return cls(space, p)

    def __getitem__(self, label: str | int) -> float:
        return float(self.probs[self.space.index(label)])

    def as_dict(self) -> dict[str, float]:
        return {lab: float(v) for lab, v in zip(self.space.labels, self.probs)}


@dataclass(frozen=True, eq=False)
class Channel:
    """Row-stochastic confusion matrix; ``matrix[i, o] = P(out=o | in=i)``."""

    space: CovariateSpace
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        size = self.space.size
        if m.shape != (size, size):
            raise ModelError(f"channel has shape {m.shape}, expected ({size}, {size})")
        _check_probs(m, "channel")
        totals = np.array([math.fsum(row) for row in m])
        bad = np.flatnonzero(np.abs(totals - 1.0) > NORMALIZATION_TOL)
        if bad.size:
            i = int(bad[0])
            raise ModelError(
                f"channel row {self.space.labels[i]!r} sums to {totals[i]!r}, not 1 "
                f"(tol {NORMALIZATION_TOL})"
            )
        object.__setattr__(self, "matrix", _frozen(m / totals[:, None]))

    @classmethod
    def identity(cls, space: CovariateSpace) -> Channel:
        return cls(space, np.eye(space.size))

    @classmethod
    def symmetric(cls, space: CovariateSpace, error: float) -> Channel:
        """Confuse each label with every other with equal total probability ``error``."""
        size = space.size
        if size == 1:
            return cls.identity(space)
        m = np.full((size, size), error / (size - 1))
        np.fill_diagonal(m, 1.0 - error)
        return cls(space, m)

    def then(self, other: Channel) -> Channel:
        """Composition: pass through ``self`` and then ``other``."""
        _same_space(self.space, other.space)
        return Channel(self.space, self.matrix @ other.matrix)


def _same_space(*spaces: CovariateSpace) -> None:
    first = spaces[0]
    for s in spaces[1:]:
        if s != first:
            raise ModelError(
                f"covariate space mismatch: {list(first.labels)} vs {list(s.labels)}"
            )


@dataclass(frozen=True, eq=False)
class WorldModel:
    """The generative model: probe prior, imposter prior and the two classifiers."""

    space: CovariateSpace
    probe_prior: Distribution
    imposter_prior: Distribution
    probe_channel: Channel
    gallery_channel: Channel

    def __post_init__(self):
        _same_space(
            self.space,
            self.probe_prior.space,
            self.imposter_prior.space,
            self.probe_channel.space,
            self.gallery_channel.space,
        )

    @classmethod
    def binary_symmetric(
        cls,
        e_probe: float,
        e_gallery: float,
        labels: Sequence[str] = ("F", "M"),
        probe_prior: Sequence[float] | None = None,
        imposter_prior: Sequence[float] | None = None,
    ) -> WorldModel:
        """Two labels, symmetric classifier errors, uniform priors unless given."""
        space = CovariateSpace(labels)
        if len(space) != 2:
            raise ModelError("binary_symmetric needs exactly two labels")
        q = Distribution.uniform(space) if probe_prior is None else Distribution(space, probe_prior)
        g = q if imposter_prior is None else Distribution(space, imposter_prior)
        return cls(space, q, g, Channel.symmetric(space, e_probe), Channel.symmetric(space, e_gallery))

    def noisy_probe_marginal(self) -> Distribution:
        return output_marginal(self.probe_prior, self.probe_channel)

    def noisy_imposter_marginal(self) -> Distribution:
        return output_marginal(self.imposter_prior, self.gallery_channel)


def output_marginal(prior: Distribution, channel: Channel) -> Distribution:
    """Push ``prior`` through ``channel``: sum_c prior(c) P(o | c)."""
    _same_space(prior.space, channel.space)
    return Distribution(prior.space, prior.probs @ channel.matrix)


def posterior(prior: Distribution, channel: Channel, observed: str | int) -> Distribution:
    """Bayes posterior over the channel input given output ``observed``."""
    _same_space(prior.space, channel.space)
    o = prior.space.index(observed)
    joint = prior.probs * channel.matrix[:, o]
    marginal = math.fsum(joint)
    if marginal <= 0.0:
        raise UndefinedPosteriorError(prior.space.labels[o], marginal)
    return Distribution(prior.space, joint / marginal)


def binomial_pmf(n: int, k: int, p: float) -> float:
    """C(n, k) p^k (1-p)^(n-k), evaluated in the log domain."""
    if n < 0 or k < 0:
        raise DomainError(f"binomial_pmf needs n, k >= 0, got n={n}, k={k}")
    if k > n:
        raise DomainError(f"binomial_pmf needs k <= n, got n={n}, k={k}")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"binomial_pmf needs p in [0, 1], got {p}")
    # 0**0 = 1 conventions at the endpoints
    if p == 0.0:
        return 1.0 if k == 0 else 0.0
    if p == 1.0:
        return 1.0 if k == n else 0.0
    log_coef = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
    return math.exp(log_coef + k * math.log(p) + (n - k) * math.log1p(-p))
