"""Stochastic matrices, Markov chains, stationary vectors and return times.

Finite chains are dense numpy matrices.  Countable chains are given by a
closed-form entry rule plus an exact inverse-CDF sampler; the only
built-in one is the free-group chain on infinitely many generators
(``finfty_chain``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import AmbiguousStationary, NoReturnObserved

ROW_TOL = 1e-12
STATIONARY_TOL = 1e-10


class StochasticMatrix:
    """Common interface of :class:`Finite` and :class:`RowRule` matrices."""

    state_count: float  # an int, or math.inf

    def entry(self, i: int, j: int) -> float:
        raise NotImplementedError

    def sample_next(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    @property
    def is_finite(self) -> bool:
        return self.state_count != math.inf


class Finite(StochasticMatrix):
    def __init__(self, matrix):
        P = np.array(matrix, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("transition matrix must be square")
        if (P < 0).any():
            raise ValueError("transition matrix has negative entries")
        if np.abs(P.sum(axis=1) - 1.0).max() > ROW_TOL:
            raise ValueError("transition matrix rows must sum to 1")
        P.setflags(write=False)
        self.P = P
        self.state_count = P.shape[0]
        self._cum = np.cumsum(P, axis=1)

    def entry(self, i, j):
        return float(self.P[i, j])

    def sample_next(self, states, rng):
        u = rng.random(len(states))
        nxt = (u[:, None] >= self._cum[states]).sum(axis=1)
        return np.minimum(nxt, self.state_count - 1)


class RowRule(StochasticMatrix):
    """Countable-state matrix given by a closed-form entry and row sampler."""

    def __init__(self, name: str, entry: Callable[[int, int], float], sampler, irreducible: bool):
        self.name = name
        self._entry = entry
        self._sampler = sampler
        self.irreducible = irreducible
        self.state_count = math.inf

    def entry(self, i, j):
        return self._entry(i, j)

    def sample_next(self, states, rng):
        return self._sampler(states, rng)

    def row_partial_sum(self, i: int, depth: int) -> float:
        return math.fsum(self._entry(i, j) for j in range(depth + 1))


@dataclass(frozen=True)
class MarkovChain:
    """Transition matrix plus a strictly positive initial distribution.

    For finite chains ``initial`` is a probability vector; for row-rule
    chains it is a function ``j -> pi(j)`` together with an inverse-CDF
    sampler ``initial_sampler(rng, count)``.
    """

    matrix: StochasticMatrix
    initial: object
    stationary: bool = False
    initial_sampler: Callable | None = field(default=None, compare=False)
    name: str = ""

    def __post_init__(self):
        if self.matrix.is_finite:
            pi = np.array(self.initial, dtype=float)
            if pi.shape != (self.matrix.state_count,):
                raise ValueError("initial distribution has the wrong length")
            if (pi <= 0).any():
                raise ValueError("initial distribution must be strictly positive")
            if abs(pi.sum() - 1.0) > ROW_TOL:
                raise ValueError("initial distribution must sum to 1")
            pi.setflags(write=False)
            object.__setattr__(self, "initial", pi)
            if self.stationary and stationarity_residual(self.matrix, pi) > STATIONARY_TOL:
                raise ValueError("chain flagged stationary but pi P != pi")

    @classmethod
    def from_matrix(cls, matrix, initial=None, name="") -> "MarkovChain":
        """Finite chain; the initial law defaults to the stationary vector."""
        m = matrix if isinstance(matrix, StochasticMatrix) else Finite(matrix)
        if initial is None:
            pi = stationary_distribution(m)
            return cls(m, pi, stationary=True, name=name)
        stat = stationarity_residual(m, np.asarray(initial, float)) <= STATIONARY_TOL
        return cls(m, initial, stationary=stat, name=name)

    @property
    def is_finite(self) -> bool:
        return self.matrix.is_finite

    def pi(self, i: int) -> float:
        if self.is_finite:
            return float(self.initial[i])
        return self.initial(i)

    def P(self, i: int, j: int) -> float:
        return self.matrix.entry(i, j)

    def sample_initial(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.is_finite:
            cum = np.cumsum(self.initial)
            idx = np.searchsorted(cum, rng.random(count), side="right")
            return np.minimum(idx, len(cum) - 1)
        return self.initial_sampler(rng, count)


def stationarity_residual(matrix: StochasticMatrix, pi) -> float:
    P = matrix.P if isinstance(matrix, Finite) else np.asarray(matrix, float)
    pi = np.asarray(pi, float)
    return float(np.abs(pi @ P - pi).sum())


def _as_array(matrix) -> np.ndarray:
    if isinstance(matrix, Finite):
        return matrix.P
    if isinstance(matrix, StochasticMatrix):
        raise TypeError("operation needs a finite matrix")
    return np.asarray(matrix, dtype=float)


def communicating_classes(matrix) -> tuple[list[np.ndarray], list[bool]]:
    """Strongly connected classes of the positive-entry graph and whether each is closed."""
    P = _as_array(matrix)
    n, labels = connected_components(P > 0, directed=True, connection="strong")
    classes = [np.flatnonzero(labels == c) for c in range(n)]
    closed = []
    for members in classes:
        outside = np.ones(P.shape[0], dtype=bool)
        outside[members] = False
        closed.append(not (P[np.ix_(members, outside)] > 0).any())
    return classes, closed


def is_irreducible(matrix) -> bool:
    if isinstance(matrix, RowRule):
        return matrix.irreducible
    P = _as_array(matrix)
    n, _ = connected_components(P > 0, directed=True, connection="strong")
    return n == 1


def stationary_distribution(matrix) -> np.ndarray:
    """Solve ``pi P = pi`` with ``sum(pi) = 1``.

    Direct solve of the transposed system with one equation replaced by the
    normalisation; power iteration if the solve is singular or inaccurate.
    """
    P = _as_array(matrix)
    _, closed = communicating_classes(P)
    if sum(closed) > 1:
        raise AmbiguousStationary(
            f"{sum(closed)} closed classes; solve each block separately"
        )
    n = P.shape[0]
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
        if np.abs(pi @ P - pi).sum() <= STATIONARY_TOL and (pi >= -STATIONARY_TOL).all():
            return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()
    except np.linalg.LinAlgError:
        pass
    return _power_iteration(P)


def _power_iteration(P, tol=1e-12, max_iter=1_000_000):
    n = P.shape[0]
    # lazy chain: same stationary vector, no periodicity
    Q = 0.5 * (P + np.eye(n))
    pi = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = pi @ Q
        if np.abs(nxt - pi).sum() < tol:
            return nxt / nxt.sum()
        pi = nxt
    return pi / pi.sum()


def block_stationary(matrix, classes: Sequence[Sequence[int]], masses: Sequence[float]) -> np.ndarray:
    """Stationary vector of a block-diagonal matrix with prescribed block masses."""
    P = _as_array(matrix)
    pi = np.zeros(P.shape[0])
    for members, mass in zip(classes, masses):
        members = np.asarray(members)
        pi[members] = mass * stationary_distribution(P[np.ix_(members, members)])
    return pi


def cylinder_measure(chain: MarkovChain, w: Sequence[int]) -> float:
    """``P[w] = pi(w_0) P(w_0, w_1) ... P(w_{n-2}, w_{n-1})``; 1 for the empty word."""
    if len(w) == 0:
        return 1.0
    out = chain.pi(w[0])
    for a, b in zip(w[:-1], w[1:]):
        out *= chain.P(a, b)
    return out


def sample_paths(chain: MarkovChain, length: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent paths as rows of an integer matrix."""
    if length < 1:
        raise ValueError("length must be at least 1")
    out = np.empty((count, length), dtype=np.int64)
    out[:, 0] = chain.sample_initial(rng, count)
    for t in range(1, length):
        out[:, t] = chain.matrix.sample_next(out[:, t - 1], rng)
    return out


def sample_path(chain: MarkovChain, length: int, rng_seed: int) -> tuple:
    rng = np.random.default_rng(rng_seed)
    return tuple(int(s) for s in sample_paths(chain, length, 1, rng)[0])


@dataclass(frozen=True)
class ReturnTimeStats:
    """Monte Carlo return-time summary.

    ``survival[k]`` estimates ``P_i[tau_i >= k]`` for ``k = 0 .. K`` (the
    first two entries are 1 by definition).
    """

    state: int
    samples: int
    mean_return: float
    std_error: float
    censored: int
    survival: np.ndarray

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.samples

    def survival_std_error(self, k: int) -> float:
        p = float(self.survival[k])
        return math.sqrt(max(p * (1 - p), 0.0) / self.samples)


def expected_return_time(
    chain: MarkovChain,
    state: int,
    max_horizon: int = 10_000,
    sample_count: int = 100_000,
    rng_seed: int = 0,
    survival_depth: int = 16,
) -> ReturnTimeStats:
    """Estimate ``E_i tau_i`` by simulating from ``state`` until first return.

    Runs still out at ``max_horizon`` are censored: they contribute
    ``max_horizon`` to the mean and are counted separately.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")
    if state < 0 or (chain.is_finite and state >= chain.matrix.state_count):
        raise ValueError(f"state {state} is not a state of the chain")
    rng = np.random.default_rng(rng_seed)
    current = np.full(sample_count, state, dtype=np.int64)
    tau = np.zeros(sample_count, dtype=np.int64)
    alive = np.arange(sample_count)
    for t in range(1, max_horizon + 1):
        current[alive] = chain.matrix.sample_next(current[alive], rng)
        back = current[alive] == state
        tau[alive[back]] = t
        alive = alive[~back]
        if alive.size == 0:
            break
    censored = int(alive.size)
    if censored == sample_count:
        raise NoReturnObserved(f"no run returned to state {state} within {max_horizon} steps")
    tau[alive] = max_horizon
    survival = np.array(
        [1.0] + [float(np.mean(tau >= k)) for k in range(1, survival_depth + 1)]
    )
    return ReturnTimeStats(
        state=state,
        samples=sample_count,
        mean_return=float(tau.mean()),
        std_error=float(tau.std(ddof=1) / math.sqrt(sample_count)) if sample_count > 1 else math.inf,
        censored=censored,
        survival=survival,
    )


@dataclass(frozen=True)
class SurvivalRecurrence:
    """Exact ``q_k, r_k`` (``k = 1..k_max``) and ``p_k`` (``k = 1..k_max+1``) as Fractions."""

    q: dict
    r: dict
    p: dict


def survival_recurrence(k_max: int) -> SurvivalRecurrence:
    """Return-time tail of ``a_0`` for the infinite free-group chain.

    ``q_k`` is the chance of not having returned by time ``k`` while sitting
    at ``a_1``, ``r_k`` the same while sitting elsewhere (not ``a_0``), and
    ``p_{k+1} = q_k + r_k = P[tau >= k+1]``.
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    half, quarter = Fraction(1, 2), Fraction(1, 4)
    q = {1: Fraction(0)}
    r = {1: Fraction(1) - half}
    for k in range(2, k_max + 1):
        q[k] = half * q[k - 1] + quarter * r[k - 1]
        r[k] = (1 - half) * q[k - 1] + (1 - half - quarter) * r[k - 1]
    p = {1: Fraction(1)}
    for k in range(1, k_max + 1):
        p[k + 1] = q[k] + r[k]
    return SurvivalRecurrence(q=q, r=r, p=p)


# -- the chain on infinitely many free generators ---------------------------


def finfty_entry(i: int, j: int) -> float:
    """Row ``i`` is ``(2^-(k+1))_k`` with a zero inserted at the inverse ``i ^ 1``."""
    m = i ^ 1
    if j < m:
        return 2.0 ** -(j + 1)
    if j == m:
        return 0.0
    return 2.0 ** -j


def _finfty_sampler(states, rng):
    u = 1.0 - rng.random(len(states))  # in (0, 1]
    k = np.floor(-np.log2(u)).astype(np.int64)  # P[k] = 2^-(k+1)
    inv = states ^ 1
    return np.where(k < inv, k, k + 1)


@lru_cache(maxsize=None)
def finfty_stationary(budget: int) -> np.ndarray:
    """Exact stationary masses of ``a_0 .. a_{budget-1}`` for the infinite chain.

    For even ``J`` the states ``{a_j : j >= J}`` all share the same
    transition probabilities into ``a_0 .. a_{J-1}``, so they lump into a
    single state and ``pi`` restricted to the first ``J`` states solves a
    finite ``(J+1)``-state system.  Only the first ``budget`` entries are
    returned; the lumped tail mass is left out.
    """
    J = budget + (budget % 2)
    Q = np.zeros((J + 1, J + 1))
    for i in range(J):
        for j in range(J):
            Q[i, j] = finfty_entry(i, j)
        Q[i, J] = 2.0 ** -(J - 1)
    for j in range(J):
        Q[J, j] = 2.0 ** -(j + 1)
    Q[J, J] = 2.0 ** -J
    pi = stationary_distribution(Q)
    out = pi[:budget].copy()
    out.setflags(write=False)
    return out


def finfty_tail_mass(budget: int) -> float:
    """Stationary mass of the symbols ``>= budget`` (``budget`` even)."""
    if budget % 2:
        raise ValueError("tail mass is exact only for even budgets")
    return 1.0 - math.fsum(finfty_stationary(budget))


_FINFTY_PI_DEPTH = 64


def _finfty_pi(j: int) -> float:
    depth = _FINFTY_PI_DEPTH
    while j >= depth:
        depth *= 2
    return float(finfty_stationary(depth)[j])


def _finfty_initial_sampler(rng, count):
    pi = finfty_stationary(_FINFTY_PI_DEPTH)
    cum = np.cumsum(pi)
    u = rng.random(count)
    idx = np.searchsorted(cum, u, side="right")
    over = idx >= len(cum)
    if over.any():
        # u landed in the (about 2^-60) tail: fall back to a deeper table
        deep = np.cumsum(finfty_stationary(4 * _FINFTY_PI_DEPTH))
        idx[over] = np.minimum(np.searchsorted(deep, u[over], side="right"), len(deep) - 1)
    return idx


def finfty_chain() -> MarkovChain:
    """Stationary Markov chain on the generators of the free group of countable rank."""
    matrix = RowRule("finfty_chain", finfty_entry, _finfty_sampler, irreducible=True)
    return MarkovChain(
        matrix, _finfty_pi, stationary=True, initial_sampler=_finfty_initial_sampler, name="finfty_chain"
    )


def uniform_free_chain(r: int) -> MarkovChain:
    """pi = 1/(2r); each row constant 1/(2r-1) with a zero at the inverse."""
    n = 2 * r
    P = np.full((n, n), 1.0 / (n - 1))
    for i in range(n):
        P[i, i ^ 1] = 0.0
    return MarkovChain(Finite(P), np.full(n, 1.0 / n), stationary=True, name=f"uniform_free:r={r}")


def two_state_chain() -> MarkovChain:
    return MarkovChain.from_matrix([[0.9, 0.1], [0.4, 0.6]], name="two_state")


def uniform_chain(k: int) -> MarkovChain:
    return MarkovChain(Finite(np.full((k, k), 1.0 / k)), np.full(k, 1.0 / k), stationary=True, name=f"uniform:{k}")
