"""Seeded Monte Carlo for the retrieval and verification generative models.

Every chunk of trials draws from its own Philox stream keyed by
``(seed, stream, chunk_index)``, so results depend only on ``seed``,
``trials`` and ``chunk_size`` and never on how many workers ran the chunks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .prob import DomainError, WorldModel, _same_space
from .retrieval import EmptyChoice, RetrievalPolicy, _check_empty, _check_n, policy_error
from .verification import VerificationPolicy, far, frr, joint_tables

RETRIEVAL_STREAM = 0
MATCH_STREAM = 1
MISMATCH_STREAM = 2


@dataclass(frozen=True)
class SimConfig:
    trials: int
    seed: int = 0
    chunk_size: int = 65536
    confidence_z: float = 3.0
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise DomainError(f"trials must be >= 1, got {self.trials}")
        if self.chunk_size < 1:
            raise DomainError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if not 0 <= self.seed < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.workers < 1:
            raise DomainError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class SimReport:
    estimate: float
    trials: int
    std_error: float
    ci_low: float
    ci_high: float
    analytic: float | None = None
    within_ci: bool | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def make_report(count: int, trials: int, z: float, analytic: float | None = None) -> SimReport:
    est = count / trials
    se = math.sqrt(est * (1.0 - est) / trials)
    half = z * se
    within = None if analytic is None else bool(abs(est - analytic) <= half)
    return SimReport(est, trials, se, max(0.0, est - half), min(1.0, est + half), analytic, within)


def chunk_rng(seed: int, stream: int, chunk_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream, chunk_index))
    return np.random.Generator(np.random.Philox(ss))


def cdf_table(probs: np.ndarray) -> np.ndarray:
    """Row-wise cumulative table with the last column pinned to exactly 1."""
    c = np.cumsum(np.atleast_2d(probs), axis=1)
    c[:, -1] = 1.0
    return c


def sample_rows(cdf: np.ndarray, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Categorical draw from ``cdf[rows]``; ``u < cdf[i]`` selects the first such i."""
    idx = (u[:, None] >= cdf[rows]).sum(axis=1)
    return np.minimum(idx, cdf.shape[1] - 1)


def _chunks(config: SimConfig):
    n_chunks = -(-config.trials // config.chunk_size)
    for c in range(n_chunks):
        start = c * config.chunk_size
        yield c, min(config.chunk_size, config.trials - start)


def _run(fn, config: SimConfig) -> int:
    jobs = list(_chunks(config))
    if config.workers == 1:
        return sum(fn(c, size) for c, size in jobs)
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        return sum(pool.map(lambda job: fn(*job), jobs))


def simulate_retrieval(
    model: WorldModel,
    n: int,
    policy: RetrievalPolicy,
    config: SimConfig,
    empty_choice: EmptyChoice = "error",
    analytic: bool = True,
) -> SimReport:
    """Empirical 1-of-N error of ``policy`` on galleries of size ``n``."""
    n = _check_n(n)
    _check_empty(empty_choice)
    _same_space(policy.space, model.space)
    q = cdf_table(model.probe_prior.probs)
    g = cdf_table(model.imposter_prior.probs)
    h = cdf_table(model.probe_channel.matrix)
    j = cdf_table(model.gallery_channel.matrix)
    r = cdf_table(policy.rule)

    def errors(chunk_index: int, size: int) -> int:
        rng = chunk_rng(config.seed, RETRIEVAL_STREAM, chunk_index)
        zeros = np.zeros(size, dtype=np.intp)
        cp = sample_rows(q, zeros, rng.random(size))
        ctp = sample_rows(h, cp, rng.random(size))
        ctg0 = sample_rows(j, cp, rng.random(size))
        target = sample_rows(r, ctp, rng.random(size))
        hits = np.zeros(size, dtype=np.int64)
        for _ in range(n - 1):
            cg = sample_rows(g, zeros, rng.random(size))
            hits += sample_rows(j, cg, rng.random(size)) == target
        u = rng.random(size)
        has_match = ctg0 == target
        carriers = hits + has_match
        # the true match sits at position 0 among the carriers of the target
        correct = has_match & (u * carriers < 1.0)
        if empty_choice == "uniform":
            correct |= (carriers == 0) & (u * n < 1.0)
        return int(size - np.count_nonzero(correct))

    count = _run(errors, config)
    exact = policy_error(policy, model, n, empty_choice) if analytic else None
    return make_report(count, config.trials, config.confidence_z, exact)


def simulate_verification(
    model: WorldModel,
    policy: VerificationPolicy,
    config: SimConfig,
    analytic: bool = True,
) -> tuple[SimReport, SimReport]:
    """Empirical (FAR, FRR): ``config.trials`` mismatched and as many matched pairs."""
    _same_space(policy.space, model.space)
    q = cdf_table(model.probe_prior.probs)
    g = cdf_table(model.imposter_prior.probs)
    h = cdf_table(model.probe_channel.matrix)
    j = cdf_table(model.gallery_channel.matrix)
    accept = policy.accept

    def false_accepts(chunk_index: int, size: int) -> int:
        rng = chunk_rng(config.seed, MISMATCH_STREAM, chunk_index)
        zeros = np.zeros(size, dtype=np.intp)
        cp = sample_rows(q, zeros, rng.random(size))
        cg = sample_rows(g, zeros, rng.random(size))
        ctp = sample_rows(h, cp, rng.random(size))
        ctg = sample_rows(j, cg, rng.random(size))
        return int(np.count_nonzero(rng.random(size) < accept[ctp, ctg]))

    def false_rejects(chunk_index: int, size: int) -> int:
        rng = chunk_rng(config.seed, MATCH_STREAM, chunk_index)
        zeros = np.zeros(size, dtype=np.intp)
        cp = sample_rows(q, zeros, rng.random(size))
        ctp = sample_rows(h, cp, rng.random(size))
        ctg = sample_rows(j, cp, rng.random(size))
        return int(np.count_nonzero(rng.random(size) >= accept[ctp, ctg]))

    fa_count = _run(false_accepts, config)
    fr_count = _run(false_rejects, config)
    fa_exact = fr_exact = None
    if analytic:
        joints = joint_tables(model)
        fa_exact, fr_exact = far(policy, joints), frr(policy, joints)
    z = config.confidence_z
    return (
        make_report(fa_count, config.trials, z, fa_exact),
        make_report(fr_count, config.trials, z, fr_exact),
    )
