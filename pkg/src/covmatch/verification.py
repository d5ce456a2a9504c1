"""Covariate-only verification: acceptance policies, FAR/FRR and the optimal EER policy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .prob import CovariateSpace, DomainError, ModelError, WorldModel, _frozen, _same_space

DEFAULT_GRID = 21
DEFAULT_MAX_POINTS = 2_000_000
RATIO_TIE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class JointTable:
    """``match[p, g]`` and ``mismatch[p, g]``: P(noisy probe p, noisy gallery g | hypothesis)."""

    space: CovariateSpace
    match: np.ndarray = field(repr=False)
    mismatch: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = self.space.size
        for name in ("match", "mismatch"):
            t = np.asarray(getattr(self, name), dtype=np.float64)
            if t.shape != (m, m):
                raise ModelError(f"{name} table has shape {t.shape}, expected ({m}, {m})")
            if np.any(t < 0) or np.any(t > 1) or abs(math.fsum(t.ravel()) - 1.0) > 1e-9:
                raise ModelError(f"{name} table is not a probability table")
            object.__setattr__(self, name, _frozen(t))


@dataclass(frozen=True, eq=False)
class VerificationPolicy:
    """``accept[p, g]``: probability of declaring a match for noisy pair (p, g)."""

    space: CovariateSpace
    accept: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.accept, dtype=np.float64)
        m = self.space.size
        if a.shape != (m, m):
            raise ModelError(f"verification policy has shape {a.shape}, expected ({m}, {m})")
        if not np.all(np.isfinite(a)) or np.any(a < 0) or np.any(a > 1):
            raise ModelError("acceptance probabilities must lie in [0, 1]")
        object.__setattr__(self, "accept", _frozen(a))

    @classmethod
    def constant(cls, space: CovariateSpace, value: float) -> VerificationPolicy:
        return cls(space, np.full((space.size, space.size), float(value)))

    @classmethod
    def accept_equal(cls, space: CovariateSpace, value: float = 1.0) -> VerificationPolicy:
        """Accept with probability ``value`` when the noisy labels agree, never otherwise."""
        return cls(space, np.eye(space.size) * value)


@dataclass(frozen=True, eq=False)
class EerSolution:
    """Optimal policy at the operating point FAR = beta * FRR; ``eer`` is its FAR."""

    policy: VerificationPolicy
    eer: float
    far: float
    frr: float
    beta: float = 1.0


def joint_tables(model: WorldModel) -> JointTable:
    q = model.probe_prior.probs
    h = model.probe_channel.matrix
    j = model.gallery_channel.matrix
    match = h.T @ (q[:, None] * j)
    mismatch = np.outer(model.noisy_probe_marginal().probs, model.noisy_imposter_marginal().probs)
    return JointTable(model.space, match, mismatch)


def far(policy: VerificationPolicy, joints: JointTable) -> float:
    _same_space(policy.space, joints.space)
    return math.fsum((policy.accept * joints.mismatch).ravel())


def frr(policy: VerificationPolicy, joints: JointTable) -> float:
    _same_space(policy.space, joints.space)
    return math.fsum(((1.0 - policy.accept) * joints.match).ravel())


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not math.isfinite(beta) or beta < 0:
        raise DomainError(f"beta must be a finite number >= 0, got {beta}")
    return beta


def solve_knapsack(cost: np.ndarray, weight: np.ndarray, capacity: float) -> np.ndarray:
    """Minimise cost.r subject to weight.r = capacity, 0 <= r <= 1.

    Greedy in ascending cost/weight ratio. Items whose ratios tie (to
    ``RATIO_TIE_RTOL``) form one class; the class straddling the capacity is
    filled at a common fraction, so the result is symmetric under relabeling.
    Zero-weight items stay at 0. Raises if the capacity cannot be reached.
    """
    cost = np.asarray(cost, dtype=np.float64).ravel()
    weight = np.asarray(weight, dtype=np.float64).ravel()
    r = np.zeros_like(weight)
    live = np.flatnonzero(weight > 0)
    if capacity <= 0:
        return r
    if math.fsum(weight[live]) < capacity * (1 - 1e-12):
        raise DomainError(f"capacity {capacity} exceeds total weight {weight.sum()}")
    ratio = cost[live] / weight[live]
    order = np.lexsort((live, ratio))
    ratio, order = ratio[order], live[order]

    classes = []
    for pos, k in enumerate(order):
        if classes and ratio[pos] - ratio[classes[-1][0]] <= RATIO_TIE_RTOL * max(1.0, ratio[pos]):
            classes[-1][1].append(k)
        else:
            classes.append((pos, [k]))

    filled = 0.0
    for _, members in classes:
        w = math.fsum(weight[members])
        if filled + w <= capacity:
            r[members] = 1.0
            filled += w
            if filled == capacity:
                break
        else:
            r[members] = (capacity - filled) / w
            break
    return r


def optimal_eer(model: WorldModel, beta: float = 1.0) -> EerSolution:
    """Policy minimising FAR subject to FAR = beta * FRR (beta = 1 is the EER).

    The constraint is linear in the acceptance cells,
    sum r * (mismatch + beta * match) = beta, so the problem is a
    continuous knapsack.
    """
    beta = _check_beta(beta)
    joints = joint_tables(model)
    return _solve(joints, beta)


def _solve(joints: JointTable, beta: float) -> EerSolution:
    weight = joints.mismatch + beta * joints.match
    r = solve_knapsack(joints.mismatch, weight, beta).reshape(weight.shape)
    policy = VerificationPolicy(joints.space, np.clip(r, 0.0, 1.0))
    fa, fr = far(policy, joints), frr(policy, joints)
    return EerSolution(policy, fa, fa, fr, beta)


def optimal_eer_from_joints(joints: JointTable, beta: float = 1.0) -> EerSolution:
    return _solve(joints, _check_beta(beta))


def grid_quantization_bound(joints: JointTable, grid: int) -> float:
    """How far above the optimum the best grid point can sit.

    Some optimal vertex has at most one fractional cell. Rounding that cell
    up to the grid and rescaling onto the constraint raises FAR by at most
    one grid step times the cell's mismatch mass.
    """
    return float(joints.mismatch.max()) / (grid - 1)


def brute_force_eer(
    model: WorldModel,
    grid: int = DEFAULT_GRID,
    beta: float = 1.0,
    max_points: int = DEFAULT_MAX_POINTS,
) -> EerSolution:
    """Best operating point over acceptance vectors on a regular grid.

    Each grid vector is scaled along its ray onto the constraint surface and
    kept if it stays inside the unit box. Independent of the greedy solver.
    """
    beta = _check_beta(beta)
    m = model.space.size
    if m > 3:
        raise DomainError(f"brute_force_eer supports M <= 3, got M={m}")
    if not 2 <= grid <= 21:
        raise DomainError(f"grid resolution must be in [2, 21], got {grid}")
    cells = m * m
    total = grid**cells
    if total > max_points:
        raise DomainError(f"grid {grid} over {cells} cells needs {total} points, limit {max_points}")

    joints = joint_tables(model)
    cost = joints.mismatch.ravel()
    weight = (joints.mismatch + beta * joints.match).ravel()
    if beta == 0:
        return _evaluate(joints, np.zeros(cells), beta)

    powers = grid ** np.arange(cells)
    best_obj, best_r = math.inf, None
    chunk = 1 << 18
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        r = ((idx[:, None] // powers) % grid) / (grid - 1)
        wr = r @ weight
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = beta / wr
            ok = (wr > 0) & (scale * r.max(axis=1) <= 1.0 + 1e-12)
            obj = np.where(ok, scale * (r @ cost), np.inf)
        if not ok.any():
            continue
        k = int(np.argmin(obj))
        if obj[k] < best_obj:
            best_obj, best_r = float(obj[k]), np.minimum(r[k] * scale[k], 1.0)
    if best_r is None:
        raise DomainError("no grid point satisfies the operating-point constraint")
    return _evaluate(joints, best_r, beta)


def _evaluate(joints: JointTable, r: np.ndarray, beta: float) -> EerSolution:
    m = joints.space.size
    policy = VerificationPolicy(joints.space, r.reshape(m, m))
    fa, fr = far(policy, joints), frr(policy, joints)
    return EerSolution(policy, fa, fa, fr, beta)
