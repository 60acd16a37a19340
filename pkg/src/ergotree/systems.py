"""Countable-to-one measure-preserving systems with their preimage cocycles.

Every system works on *states*: batches of points stored as arrays, so
that a whole level of a preimage tree is advanced with one numpy call.
The scalar methods (``apply_T``, ``preimages``, ``evaluate``) are thin
wrappers over the batched ones.

Catalog
-------
``bernoulli_system``      uniform shift on k symbols
``markov_shift_system``   stationary Markov shift
``boundary_system``       shift on the boundary of a free group (r finite or ``inf``)
``gauss_system``          continued-fraction map with branches capped at M
``skew_product_system``   (x, y) -> (y_0^{-1} . x, s(y)) over a group action
``block_chain_system``    non-ergodic Markov shift with two invariant blocks
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    DomainError,
    InsufficientDepth,
    InvalidAlphabet,
    NotBoundarySupported,
    NotMeasurePreserving,
)
from .markov import (
    STATIONARY_TOL,
    Finite,
    MarkovChain,
    block_stationary,
    communicating_classes,
    finfty_chain,
    finfty_entry,
    finfty_stationary,
    finfty_tail_mass,
    sample_paths,
    stationarity_residual,
    uniform_chain,
    uniform_free_chain,
)
from .words import Alphabet, reduce_word

# -- points -----------------------------------------------------------------


@dataclass(frozen=True)
class SymbolicPoint:
    """A point of a shift space known through a finite prefix."""

    prefix: tuple
    seed: int | None = None

    @property
    def depth(self) -> int:
        return len(self.prefix)


# Denominators below this are resolvable in double precision; a float equal
# to such a fraction is treated as a rational point.
MAX_RATIONAL_DENOMINATOR = 2**20


class RealPoint(float):
    """A number in (0, 1] whose continued fraction does not visibly terminate."""

    def __new__(cls, value):
        x = float(value)
        if not 0.0 < x <= 1.0:
            raise DomainError(f"{x!r} is outside (0, 1]")
        q = Fraction(x).limit_denominator(MAX_RATIONAL_DENOMINATOR)
        if abs(x - float(q)) <= 4 * math.ulp(x):
            raise DomainError(f"{x!r} is numerically rational ({q}); its continued fraction terminates")
        return super().__new__(cls, x)


@dataclass(frozen=True)
class ProductPoint:
    base: float
    boundary: SymbolicPoint


@dataclass(frozen=True)
class PreimageBranch:
    symbol: int
    point: object
    weight: float


# -- observables --------------------------------------------------------------


class Observable:
    """A real function on points.

    ``integral`` is the mean under the system's invariant measure when known;
    it is what ergodic systems report as the backward-average target.
    """

    name: str = "observable"
    depth: int = 0
    integral: float | None = None

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class Constant(Observable):
    def __init__(self, c: float):
        self.c = float(c)
        self.name = f"constant:{c:g}"
        self.integral = self.c


class Cylinder(Observable):
    """Function of the first ``depth`` symbols.

    ``values`` is either a mapping from words of length ``depth`` to reals or a
    callable on such words.  Words missing from a mapping must have zero
    probability; evaluating one at a realised point is an error.
    """

    def __init__(self, depth: int, values, name: str | None = None):
        if depth < 1:
            raise ValueError("cylinder depth must be at least 1")
        self.depth = depth
        self.values = values
        self.name = name or f"cylinder:{depth}"
        self._tables: dict[int, np.ndarray] = {}
        if isinstance(values, Mapping):
            for w, v in values.items():
                if len(w) != depth or not math.isfinite(v):
                    raise ValueError(f"bad cylinder entry {w!r} -> {v!r}")

    def value(self, word: Sequence[int]) -> float:
        w = tuple(int(s) for s in word[: self.depth])
        if isinstance(self.values, Mapping):
            return float(self.values[w])
        return float(self.values(w))

    def table(self, k: int) -> np.ndarray:
        """Values of all ``k**depth`` words in lexicographic (base-k) order."""
        if k not in self._tables:
            out = np.full(k**self.depth, np.nan)
            for code, w in enumerate(np.ndindex(*([k] * self.depth))):
                try:
                    out[code] = self.value(w)
                except KeyError:
                    pass
            out.setflags(write=False)
            self._tables[k] = out
        return self._tables[k]


class Continuous(Observable):
    """Closed-form function of a real point, vectorised over numpy arrays."""

    def __init__(self, name: str, func: Callable, integral: float | None = None):
        self.name = name
        self.func = func
        self.integral = integral


class BaseLift(Observable):
    """Function of the base coordinate of a skew product."""

    def __init__(self, name: str, func: Callable, integral: float | None = None):
        self.name = name
        self.func = func
        self.integral = integral


def indicator(symbol: int) -> Cylinder:
    return Cylinder(1, lambda w: float(w[0] == symbol), name=f"indicator:{symbol}")


def first_symbol_values(values: Sequence[float]) -> Cylinder:
    vals = [float(v) for v in values]
    return Cylinder(1, {(i,): v for i, v in enumerate(vals)}, name="first_symbol:" + ",".join(f"{v:g}" for v in vals))


def gauss_identity() -> Continuous:
    return Continuous("identity", lambda x: np.asarray(x, float), integral=(1 - math.log(2)) / math.log(2))


def cos2pi() -> BaseLift:
    return BaseLift("cos2pi", lambda t: np.cos(2 * np.pi * np.asarray(t, float)), integral=0.0)


# -- system interface -------------------------------------------------------


class System:
    """Batched dynamics of a countable-to-one map ``T`` with its cocycle.

    Subclasses implement the state methods; a *state* is a batch of points.
    ``extend(state, parent, symbols)`` applies the right-inverse indexed by
    ``symbols[k]`` to point ``parent[k]`` and returns the new state with the
    one-step weights ``rho(gamma(y), y)`` (zero marks a non-existent branch).
    """

    system_id: str
    alphabet: Alphabet
    finite_branching: bool = True

    # batched interface
    def lift(self, point):
        raise NotImplementedError

    def extend(self, state, parent, symbols):
        raise NotImplementedError

    def shift(self, state):
        raise NotImplementedError

    def take(self, state, idx):
        return state[idx]

    def trim(self, state, width):
        return state

    def size(self, state) -> int:
        return len(state)

    def node_tail(self, state) -> np.ndarray:
        """Weight of the preimages of each point that are not enumerated."""
        return np.zeros(self.size(state))

    def merge(self, state, weights):
        """Combine points that are indistinguishable at the current width.

        Only valid for states already trimmed to the width the observable and
        the cocycle need.  The default keeps every point.
        """
        return state, weights

    def values(self, obs: Observable, state) -> np.ndarray:
        raise NotImplementedError

    def to_point(self, state, i: int):
        raise NotImplementedError

    def sample_point(self, rng: np.random.Generator, depth: int):
        raise NotImplementedError

    def invariant_target(self, obs: Observable, point) -> float | None:
        return obs.integral

    # scalar conveniences
    def apply_T(self, point):
        return self.to_point(self.shift(self.lift(point)), 0)

    def preimages(self, point) -> list[PreimageBranch]:
        state = self.lift(point)
        symbols = np.arange(self.alphabet.size)
        children, w = self.extend(state, np.zeros(len(symbols), dtype=np.int64), symbols)
        return [
            PreimageBranch(int(c), self.to_point(children, k), float(w[k]))
            for k, c in enumerate(symbols)
            if w[k] > 0
        ]

    def preimage_tail(self, point) -> float:
        return float(self.node_tail(self.lift(point))[0])

    def evaluate(self, obs: Observable, point) -> float:
        return float(self.values(obs, self.lift(point))[0])

    def __repr__(self):
        return f"<{type(self).__name__} {self.system_id}>"


def _constant_values(obs, n):
    return np.full(n, obs.c)


# -- shift spaces -----------------------------------------------------------


class ShiftSystem(System):
    """Shift on ``I^N`` under a stationary Markov measure.

    The preimage ``i^x`` of ``x`` has weight ``pi(i) P(i, x_0) / pi(x_0)``.
    States are integer matrices whose rows are point prefixes.
    """

    def __init__(
        self,
        system_id: str,
        alphabet: Alphabet,
        chain: MarkovChain,
        pi: np.ndarray,
        P: np.ndarray,
        tail: np.ndarray | None = None,
    ):
        self.system_id = system_id
        self.alphabet = alphabet
        self.chain = chain
        self.pi = np.asarray(pi, float)
        self.P = np.asarray(P, float)
        k = alphabet.size
        if self.pi.shape != (k,) or self.P.shape != (k, k):
            raise InvalidAlphabet("chain size does not match the alphabet")
        # branch[c, f] = rho(c^x, x) for x starting with f
        self.branch = self.pi[:, None] * self.P / self.pi[None, :]
        self.tail = np.zeros(k) if tail is None else np.asarray(tail, float)
        self.finite_branching = tail is None
        classes, closed = communicating_classes(self.P)
        self.classes = [c for c, is_closed in zip(classes, closed) if is_closed]
        self._class_of = np.full(k, -1)
        for n, members in enumerate(self.classes):
            self._class_of[members] = n
        self._word_probs: dict[int, np.ndarray] = {}

    def lift(self, point):
        if not isinstance(point, SymbolicPoint):
            point = SymbolicPoint(tuple(point))
        self.alphabet.check(point.prefix)
        return np.asarray(point.prefix, dtype=np.int64).reshape(1, -1)

    def _require(self, state, width, what):
        if state.shape[1] < width:
            raise InsufficientDepth(
                f"{self.system_id}: {what} needs {width} prefix symbols, point has {state.shape[1]}",
                required=width,
                available=state.shape[1],
            )

    def extend(self, state, parent, symbols):
        self._require(state, 1, "a preimage weight")
        par = state[parent]
        w = self.branch[symbols, par[:, 0]]
        return np.column_stack([symbols, par]), w

    def shift(self, state):
        self._require(state, 1, "the shift")
        return state[:, 1:]

    def trim(self, state, width):
        return state[:, : max(width, 1)]

    def merge(self, state, weights):
        # weights and observables read only the trimmed prefix
        k = self.alphabet.size
        codes = state @ (k ** np.arange(state.shape[1] - 1, -1, -1))
        uniq, first, inverse = np.unique(codes, return_index=True, return_inverse=True)
        if len(uniq) == len(codes):
            return state, weights
        return state[first], np.bincount(inverse, weights=weights, minlength=len(uniq))

    def node_tail(self, state):
        if self.finite_branching:
            return np.zeros(len(state))
        self._require(state, 1, "a tail weight")
        return self.tail[state[:, 0]]

    def head(self, state, k):
        self._require(state, k, "the tile rule")
        return state[:, :k]

    def values(self, obs, state):
        if isinstance(obs, Constant):
            return _constant_values(obs, len(state))
        if not isinstance(obs, Cylinder):
            raise TypeError(f"{self.system_id} evaluates only cylinder observables, not {obs!r}")
        d = obs.depth
        self._require(state, d, f"observable {obs.name}")
        k = self.alphabet.size
        codes = state[:, :d] @ (k ** np.arange(d - 1, -1, -1))
        return obs.table(k)[codes]

    def to_point(self, state, i):
        return SymbolicPoint(tuple(int(s) for s in state[i]))

    def sample_point(self, rng, depth):
        if depth < 1:
            raise ValueError("sampled points need depth >= 1")
        path = sample_paths(self.chain, depth, 1, rng)[0]
        return SymbolicPoint(tuple(int(s) for s in path))

    def class_index(self, symbol: int) -> int:
        return int(self._class_of[symbol])

    def word_probs(self, d: int) -> np.ndarray:
        """``P[w]`` for all words of length ``d`` as a ``(k,)*d`` array."""
        if d not in self._word_probs:
            probs = self.pi.copy()
            for _ in range(d - 1):
                probs = probs[..., None] * self.P
            self._word_probs[d] = probs
        return self._word_probs[d]

    def invariant_target(self, obs, point):
        """Mean of ``obs`` over the closed class of the point's first symbol."""
        if isinstance(obs, Constant):
            return obs.c
        if not isinstance(obs, Cylinder):
            return None
        d = obs.depth
        k = self.alphabet.size
        probs = self.word_probs(d).reshape(-1)
        vals = obs.table(k)
        first = np.arange(k**d) // k ** (d - 1)
        prefix = point.prefix if isinstance(point, SymbolicPoint) else tuple(point)
        if len(self.classes) == 1:
            members = np.ones(k**d, dtype=bool)
        else:
            if not prefix:
                raise InsufficientDepth("the block of a point is read from its first symbol", 1, 0)
            cls = self.classes[self.class_index(prefix[0])]
            members = np.isin(first, cls)
        mask = members & (probs > 0)
        if np.isnan(vals[mask]).any():
            raise KeyError(f"{obs.name} has no value for some positive-probability word")
        return math.fsum(vals[mask] * probs[mask]) / math.fsum(probs[mask])


class BoundarySystem(ShiftSystem):
    """Shift on the boundary of a free group: infinite reduced words.

    The free group acts by reduced concatenation, and the preimages of ``x``
    under the shift are exactly ``a . x`` for ``a != x_0^{-1}``.
    """

    def act(self, word: Sequence[int], point: SymbolicPoint) -> SymbolicPoint:
        self.alphabet.check(word)
        return SymbolicPoint(reduce_word(tuple(word) + tuple(point.prefix)))

    def sample_point(self, rng, depth):
        if depth < 1:
            raise ValueError("sampled points need depth >= 1")
        k = self.alphabet.size
        while True:
            path = sample_paths(self.chain, depth, 1, rng)[0]
            # countable-rank chains are confined to the generator budget
            if (path < k).all():
                return SymbolicPoint(tuple(int(s) for s in path))

    def budget_excess_bound(self, depth: int) -> float:
        """Upper bound on the mass of depth-``depth`` prefixes leaving the budget."""
        if self.finite_branching:
            return 0.0
        return depth * finfty_tail_mass(self.alphabet.size)


def bernoulli_system(symbol_count: int) -> ShiftSystem:
    if symbol_count < 2:
        raise ValueError("a Bernoulli shift needs at least 2 symbols")
    chain = uniform_chain(symbol_count)
    return ShiftSystem(
        f"bernoulli:{symbol_count}", Alphabet(symbol_count), chain, chain.initial, chain.matrix.P
    )


def _require_stationary(chain: MarkovChain):
    if not chain.is_finite:
        raise TypeError("finite chain required")
    if stationarity_residual(chain.matrix, chain.initial) > STATIONARY_TOL:
        raise NotMeasurePreserving("initial distribution is not stationary; the shift does not preserve the measure")


def markov_shift_system(chain: MarkovChain, system_id: str | None = None) -> ShiftSystem:
    _require_stationary(chain)
    k = chain.matrix.state_count
    return ShiftSystem(
        system_id or f"markov:{chain.name or 'chain'}", Alphabet(k), chain, chain.initial, chain.matrix.P
    )


DEFAULT_FINFTY_BUDGET = 20


def boundary_system(r, chain: MarkovChain | None = None, budget: int = DEFAULT_FINFTY_BUDGET) -> BoundarySystem:
    """Boundary shift of the free group of rank ``r`` (``r = math.inf`` allowed).

    Finite ``r`` defaults to the uniform non-backtracking chain.  For
    ``r = inf`` the chain is the countable-rank chain and only generators
    ``a_0 .. a_{budget-1}`` are enumerated; the missing preimage weight of
    each point is reported exactly through ``node_tail``.
    """
    if r == math.inf or r == "inf":
        G = budget + (budget % 2)
        pi = np.array(finfty_stationary(G))
        P = np.array([[finfty_entry(i, j) for j in range(G)] for i in range(G)])
        # symbols >= G all move to f with probability 2^-(f+1)
        tail = finfty_tail_mass(G) * 2.0 ** -(np.arange(G) + 1.0) / pi
        return BoundarySystem("boundary:r=inf:finfty_chain", Alphabet(G, involution=True), finfty_chain(), pi, P, tail)
    r = int(r)
    if r < 1:
        raise ValueError("rank must be positive")
    name = "uniform" if chain is None else (chain.name or "chain")
    chain = chain or uniform_free_chain(r)
    if chain.matrix.state_count != 2 * r:
        raise InvalidAlphabet(f"chain has {chain.matrix.state_count} states, expected {2 * r}")
    P = chain.matrix.P
    if any(P[a, a ^ 1] != 0 for a in range(2 * r)):
        raise NotBoundarySupported("chain allows a generator to be followed by its inverse")
    _require_stationary(chain)
    return BoundarySystem(f"boundary:r={r}:{name}", Alphabet.free_group(r), chain, chain.initial, P)


def block_chain_system() -> ShiftSystem:
    """Two irreducible 2-state blocks, each carrying stationary mass 1/2."""
    P = np.zeros((4, 4))
    P[:2, :2] = [[0.6, 0.4], [0.5, 0.5]]
    P[2:, 2:] = [[0.3, 0.7], [0.6, 0.4]]
    pi = block_stationary(P, [[0, 1], [2, 3]], [0.5, 0.5])
    chain = MarkovChain(Finite(P), pi, stationary=True, name="blocks")
    return ShiftSystem("blocks", Alphabet(4), chain, pi, P)


# -- Gauss map ----------------------------------------------------------------


class GaussSystem(System):
    """``T(x) = 1/x mod 1`` on (0, 1] with the Gauss measure.

    The branch with digit ``n`` maps ``x`` to ``1/(n + x)`` and carries weight
    ``(1+x) / ((n+x)(n+x+1))``; digits above the cap ``M`` are not
    enumerated, their total weight ``(1+x)/(M+1+x)`` is the node tail.
    Symbol ``c`` stands for digit ``c + 1``.
    """

    finite_branching = False

    def __init__(self, branch_cap: int):
        if branch_cap < 2:
            raise ValueError("branch cap must be at least 2")
        self.M = branch_cap
        self.alphabet = Alphabet(branch_cap)
        self.system_id = f"gauss:M={branch_cap}"

    @staticmethod
    def _check(x):
        x = np.asarray(x, float)
        if not ((x > 0) & (x <= 1)).all():
            raise DomainError("Gauss points must lie in (0, 1]")
        return x

    def lift(self, point):
        return self._check(np.array([float(point)]))

    def extend(self, state, parent, symbols):
        p = state[parent]
        n = symbols + 1.0
        return 1.0 / (n + p), (1.0 + p) / ((n + p) * (n + p + 1.0))

    def shift(self, state):
        return np.mod(1.0 / self._check(state), 1.0)

    def node_tail(self, state):
        return (1.0 + state) / (self.M + 1.0 + state)

    def head(self, state, k):
        digits = np.empty((len(state), k), dtype=np.int64)
        x = state.copy()
        for j in range(k):
            inv = 1.0 / x
            digits[:, j] = np.floor(inv) - 1
            x = np.where(inv > np.floor(inv), inv - np.floor(inv), 1.0)
        return digits

    def values(self, obs, state):
        if isinstance(obs, Constant):
            return _constant_values(obs, len(state))
        if isinstance(obs, Continuous):
            return np.asarray(obs.func(state), float)
        if isinstance(obs, Cylinder):
            d = obs.depth
            codes = np.minimum(self.head(state, d), self.M - 1) @ (self.M ** np.arange(d - 1, -1, -1))
            return obs.table(self.M)[codes]
        raise TypeError(f"Gauss map cannot evaluate {obs!r}")

    def apply_T(self, point):
        return float(self.shift(self.lift(point))[0])

    def to_point(self, state, i):
        return float(state[i])

    def sample_point(self, rng, depth=0):
        while True:
            # inverse CDF of the Gauss measure, u in (0, 1]
            u = 1.0 - rng.random()
            try:
                return RealPoint(2.0**u - 1.0)
            except DomainError:
                continue


def gauss_system(branch_cap: int = 50) -> GaussSystem:
    return GaussSystem(branch_cap)


# -- group actions and skew products ----------------------------------------


class GroupAction:
    """Action of the free group of rank ``r`` given generator by generator.

    Symbol ``2i`` acts as generator ``b_i``, ``2i + 1`` as its inverse.  A word
    acts as a group element: its last symbol acts first.
    """

    rank: int
    ergodic: bool = False

    def act_symbols(self, symbols: np.ndarray, xs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def act(self, word: Sequence[int], x):
        xs = np.atleast_1d(np.asarray(x, float))
        for s in reversed(tuple(word)):
            xs = self.act_symbols(np.full(len(xs), s), xs)
        return xs if np.ndim(x) else float(xs[0])

    def sample_base(self, rng, count):
        raise NotImplementedError


class CircleRotation(GroupAction):
    """Generators rotate the circle R/Z by fixed angles; Lebesgue measure is preserved."""

    def __init__(self, angles: Sequence[float], ergodic: bool = True):
        # Ergodic as soon as one angle is irrational; floats cannot certify
        # that, so the caller vouches for it.
        self.angles = tuple(float(a) for a in angles)
        self.rank = len(self.angles)
        self.shifts = np.array([s * a for a in self.angles for s in (1.0, -1.0)])
        self.ergodic = ergodic

    def act_symbols(self, symbols, xs):
        return np.mod(xs + self.shifts[symbols], 1.0)

    def sample_base(self, rng, count):
        return rng.random(count)


DEFAULT_ANGLES = (math.sqrt(2) - 1, math.sqrt(3) - 1, math.sqrt(5) - 2, math.sqrt(7) - 2)


def circle_rotation_action(r: int, angles: Sequence[float] | None = None) -> CircleRotation:
    if angles is None:
        if r > len(DEFAULT_ANGLES):
            raise ValueError(f"supply angles explicitly for r > {len(DEFAULT_ANGLES)}")
        angles = DEFAULT_ANGLES[:r]
    if len(angles) != r:
        raise ValueError(f"need {r} angles, got {len(angles)}")
    return CircleRotation(angles)


class SkewProductSystem(System):
    """``T(x, y) = (y_0^{-1} . x, s(y))`` on ``X x boundary``.

    The preimage with symbol ``i`` is ``(a_i . x, i^y)``, with the boundary
    weight, so weights never depend on the base coordinate.
    """

    def __init__(self, action: GroupAction, boundary: BoundarySystem):
        if not boundary.alphabet.involution or boundary.alphabet.rank != action.rank:
            raise InvalidAlphabet("group action and boundary chain use different alphabets")
        if not boundary.finite_branching:
            raise InvalidAlphabet("skew products need a finite-rank boundary")
        self.action = action
        self.boundary = boundary
        self.alphabet = boundary.alphabet
        self.chain = boundary.chain
        self.system_id = f"skew:rotation:r={action.rank}" if isinstance(action, CircleRotation) else "skew"

    def lift(self, point):
        return np.array([float(point.base)]), self.boundary.lift(point.boundary)

    def extend(self, state, parent, symbols):
        base, prefix = state
        child_prefix, w = self.boundary.extend(prefix, parent, symbols)
        return (self.action.act_symbols(symbols, base[parent]), child_prefix), w

    def shift(self, state):
        base, prefix = state
        self.boundary._require(prefix, 1, "the shift")
        return self.action.act_symbols(prefix[:, 0] ^ 1, base), prefix[:, 1:]

    def take(self, state, idx):
        return state[0][idx], state[1][idx]

    def trim(self, state, width):
        return state[0], self.boundary.trim(state[1], width)

    def size(self, state):
        return len(state[0])

    def head(self, state, k):
        return self.boundary.head(state[1], k)

    def values(self, obs, state):
        base, prefix = state
        if isinstance(obs, BaseLift):
            return np.asarray(obs.func(base), float)
        return self.boundary.values(obs, prefix)

    def to_point(self, state, i):
        return ProductPoint(float(state[0][i]), self.boundary.to_point(state[1], i))

    def sample_point(self, rng, depth):
        base = float(self.action.sample_base(rng, 1)[0])
        return ProductPoint(base, self.boundary.sample_point(rng, depth))

    def invariant_target(self, obs, point):
        if isinstance(obs, BaseLift):
            return obs.integral if self.action.ergodic else None
        return self.boundary.invariant_target(obs, point.boundary)


def skew_product_system(action: GroupAction, boundary: BoundarySystem | None = None) -> SkewProductSystem:
    return SkewProductSystem(action, boundary or boundary_system(action.rank))
