"""Alphabets, finite words and right-rooted (suffix-closed) trees of words.

Words are tuples of symbol indices stored root-outward: ``w[0]`` is the
symbol applied last, so ``w . x`` is the concatenation ``w + x`` and the
parent of a word is ``w[1:]``.  Growing a tree therefore means prepending.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import InvalidAlphabet

Word = tuple  # tuple[int, ...]


@dataclass(frozen=True)
class Alphabet:
    """Symbols ``0 .. size-1``, optionally paired by the involution ``i <-> i ^ 1``.

    Free-group alphabets put generator ``b_i`` at ``2i`` and its inverse at
    ``2i + 1``.
    """

    size: int
    involution: bool = False

    def __post_init__(self):
        if self.size < 1:
            raise InvalidAlphabet(f"alphabet size must be positive, got {self.size}")
        if self.involution and self.size % 2:
            raise InvalidAlphabet("an involution alphabet needs an even number of symbols")

    @classmethod
    def free_group(cls, r: int) -> "Alphabet":
        return cls(2 * r, involution=True)

    @property
    def rank(self) -> int:
        if not self.involution:
            raise InvalidAlphabet("plain alphabets have no free-group rank")
        return self.size // 2

    def inv(self, symbol: int) -> int:
        if not self.involution:
            raise InvalidAlphabet("plain alphabets have no inverses")
        return symbol ^ 1

    def check(self, word: Sequence[int]) -> None:
        for s in word:
            if not 0 <= s < self.size:
                raise InvalidAlphabet(f"symbol {s} outside alphabet of size {self.size}")


def is_reduced(word: Sequence[int]) -> bool:
    """True if no symbol is immediately followed by its inverse (``i ^ 1``)."""
    return all(word[j + 1] != word[j] ^ 1 for j in range(len(word) - 1))


def reduce_word(word: Sequence[int]) -> Word:
    """Free reduction: cancel adjacent inverse pairs until none remain."""
    out: list[int] = []
    for s in word:
        if out and out[-1] == s ^ 1:
            out.pop()
        else:
            out.append(s)
    return tuple(out)


class RightRootedTree:
    """A finite suffix-closed set of words containing the empty word.

    Nodes are grouped by length; node 0 is the empty word.  For every other
    node ``k``, ``symbol[k]`` is its outermost symbol ``w[0]`` and
    ``parent[k]`` the index of ``w[1:]``, which always sits in the previous
    level.
    """

    def __init__(self, words: Iterable[Sequence[int]], alphabet: Alphabet | None = None):
        ws = {tuple(int(s) for s in w) for w in words}
        if alphabet is not None:
            for w in ws:
                alphabet.check(w)
        if not is_right_rooted(ws):
            raise ValueError("word set is not right-rooted (missing the empty word or a suffix)")
        order = sorted(ws, key=lambda w: (len(w), w))
        index = {w: k for k, w in enumerate(order)}
        symbol = np.full(len(order), -1, dtype=np.int64)
        parent = np.full(len(order), -1, dtype=np.int64)
        for k, w in enumerate(order[1:], start=1):
            symbol[k] = w[0]
            parent[k] = index[w[1:]]
        lengths = np.fromiter((len(w) for w in order), dtype=np.int64, count=len(order))
        self._init_arrays(symbol, parent, lengths)
        self._words = order
        self.alphabet = alphabet

    @classmethod
    def _from_arrays(cls, symbol, parent, lengths, alphabet=None) -> "RightRootedTree":
        tree = cls.__new__(cls)
        tree._init_arrays(symbol, parent, lengths)
        tree._words = None
        tree.alphabet = alphabet
        return tree

    def _init_arrays(self, symbol, parent, lengths):
        self.symbol = symbol
        self.parent = parent
        self.height = int(lengths[-1]) if len(lengths) else 0
        self.level_starts = np.searchsorted(lengths, np.arange(self.height + 2))
        for arr in (self.symbol, self.parent, self.level_starts):
            arr.setflags(write=False)
        self._index = None

    @property
    def words(self) -> list[Word]:
        if self._words is None:
            out: list[Word] = [()]
            for k in range(1, len(self.symbol)):
                out.append((int(self.symbol[k]),) + out[self.parent[k]])
            self._words = out
        return self._words

    def level(self, n: int) -> slice:
        return slice(int(self.level_starts[n]), int(self.level_starts[n + 1]))

    def level_size(self, n: int) -> int:
        return int(self.level_starts[n + 1] - self.level_starts[n])

    def index(self, word: Sequence[int]) -> int:
        if self._index is None:
            self._index = {w: k for k, w in enumerate(self.words)}
        return self._index[tuple(word)]

    def __len__(self) -> int:
        return len(self.symbol)

    def __iter__(self) -> Iterator[Word]:
        return iter(self.words)

    def __contains__(self, word) -> bool:
        try:
            self.index(word)
        except KeyError:
            return False
        return True

    def as_set(self) -> frozenset:
        return frozenset(self.words)

    def without(self, word: Sequence[int]) -> "RightRootedTree":
        """Drop a word; only valid for words that are not a suffix of another word."""
        return RightRootedTree(set(self.words) - {tuple(word)}, self.alphabet)

    def __repr__(self) -> str:
        return f"RightRootedTree(words={len(self)}, height={self.height})"


def is_right_rooted(words: Iterable[Sequence[int]]) -> bool:
    ws = {tuple(w) for w in words}
    return () in ws and all(w[1:] in ws for w in ws if w)


@lru_cache(maxsize=64)
def complete_tree(
    alphabet: Alphabet,
    n: int,
    reduced: bool = False,
    forbid_first: int | None = None,
) -> RightRootedTree:
    """All words of length at most ``n``.

    With ``reduced`` only freely reduced words are kept.  ``forbid_first``
    excludes words whose root-adjacent symbol (the first one applied, i.e.
    ``w[-1]``) equals the given symbol; with ``forbid_first = inv(a)`` this is
    the ball ``B_n^a`` of reduced words that can act on a point starting
    with ``a`` without cancellation.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if forbid_first is not None:
        if not alphabet.involution:
            raise InvalidAlphabet("forbid_first needs a free-group alphabet")
        alphabet.check((forbid_first,))
    if reduced and not alphabet.involution:
        raise InvalidAlphabet("reduced words need a free-group alphabet")
    k = alphabet.size
    syms = [np.array([-1], dtype=np.int64)]
    pars = [np.array([-1], dtype=np.int64)]
    lens = [np.zeros(1, dtype=np.int64)]
    prev_sym = syms[0]
    start = 0
    for level in range(1, n + 1):
        m = len(prev_sym)
        parent = np.repeat(np.arange(start, start + m), k)
        child = np.tile(np.arange(k), m)
        outer = np.repeat(prev_sym, k)
        keep = np.ones(len(child), dtype=bool)
        if level == 1:
            if forbid_first is not None:
                keep &= child != forbid_first
        elif reduced:
            keep &= child != (outer ^ 1)
        syms.append(child[keep])
        pars.append(parent[keep])
        lens.append(np.full(int(keep.sum()), level, dtype=np.int64))
        start += m
        prev_sym = syms[-1]
    return RightRootedTree._from_arrays(
        np.concatenate(syms), np.concatenate(pars), np.concatenate(lens), alphabet
    )


def random_tree(
    alphabet: Alphabet,
    max_height: int,
    target_word_count: int,
    rng_seed: int,
    reduced: bool = False,
) -> RightRootedTree:
    """Grow a random tree by prepending random symbols to random extendable words.

    Deterministic for a given seed.  Raises ``ValueError`` if the requested
    size exceeds the number of admissible words of height ``max_height``.
    """
    if target_word_count < 1:
        raise ValueError("target_word_count must be at least 1")
    rng = np.random.default_rng(rng_seed)
    words: list[Word] = [()]
    present = {()}
    extendable = [()] if max_height > 0 else []
    while len(words) < target_word_count:
        if not extendable:
            raise ValueError("not enough admissible words for the requested tree size")
        j = int(rng.integers(len(extendable)))
        base = extendable[j]
        options = [
            c
            for c in range(alphabet.size)
            if (c,) + base not in present and not (reduced and base and c == base[0] ^ 1)
        ]
        if not options:
            extendable[j] = extendable[-1]
            extendable.pop()
            continue
        w = (options[int(rng.integers(len(options)))],) + base
        words.append(w)
        present.add(w)
        if len(w) < max_height:
            extendable.append(w)
    return RightRootedTree(words, alphabet)
