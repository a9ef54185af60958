"""Free-group words.

A word is a tuple of nonzero ints: i stands for the generator x_i and -i for
its inverse. Letters are stored in written order, so ``(1, -2)`` is
``x1 x2^-1``; acting on a vector the rightmost letter applies first.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass

import numpy as np

from . import linalg as la

__all__ = [
    "Word",
    "reduce",
    "cyclic_reduce",
    "is_proper_power",
    "random_walk_word",
    "evaluate",
    "parse_word",
    "enumerate_reduced",
    "letter_key",
]

_ALIASES = {"x": 1, "y": 2, "z": 3}


class WordError(ValueError):
    pass


@dataclass(frozen=True)
class Word:
    k: int
    letters: tuple[int, ...]

    def __post_init__(self):
        for a in self.letters:
            if a == 0 or abs(a) > self.k:
                raise WordError(f"letter {a} outside the alphabet of rank {self.k}")

    def __len__(self) -> int:
        return len(self.letters)

    def __mul__(self, other: "Word") -> "Word":
        return Word(max(self.k, other.k), self.letters + other.letters)

    def inverse(self) -> "Word":
        return Word(self.k, tuple(-a for a in reversed(self.letters)))

    def __pow__(self, m: int) -> "Word":
        base = self if m >= 0 else self.inverse()
        return Word(self.k, base.letters * abs(m))

    @property
    def is_reduced(self) -> bool:
        return all(a != -b for a, b in zip(self.letters, self.letters[1:]))

    @property
    def is_cyclically_reduced(self) -> bool:
        return self.is_reduced and (len(self.letters) < 2 or self.letters[0] != -self.letters[-1])

    def __str__(self) -> str:
        if not self.letters:
            return "1"
        return " ".join(f"x{abs(a)}" + ("^-1" if a < 0 else "") for a in self.letters)

    def to_json(self) -> str:
        return json.dumps(list(self.letters))


def parse_word(text: str, k: int | None = None) -> Word:
    """Parse "x1 x2^-1 x1" (also "x y^-1 z", powers "x1^3", "1" for the empty word)."""
    letters: list[int] = []
    text = text.strip()
    if text in ("", "1", "e"):
        return Word(k or 1, ())
    for tok in text.replace("*", " ").split():
        m = re.fullmatch(r"([a-z])(\d*)(?:\^(-?\d+))?", tok)
        if not m:
            raise WordError(f"bad token {tok!r}; expected x<i> or x<i>^<e>")
        name, idx, exp = m.groups()
        if idx:
            if name != "x":
                raise WordError(f"bad token {tok!r}")
            gen = int(idx)
        elif name in _ALIASES:
            gen = _ALIASES[name]
        else:
            raise WordError(f"unknown generator {tok!r}")
        if gen < 1:
            raise WordError(f"generator index must be positive in {tok!r}")
        e = int(exp) if exp is not None else 1
        letters.extend([gen if e > 0 else -gen] * abs(e))
    top = max((abs(a) for a in letters), default=1)
    return Word(max(k or top, top), tuple(letters))


def reduce(w: Word) -> Word:
    stack: list[int] = []
    for a in w.letters:
        if stack and stack[-1] == -a:
            stack.pop()
        else:
            stack.append(a)
    return Word(w.k, tuple(stack))


def letter_key(a: int) -> int:
    """Order x1 < x1^-1 < x2 < x2^-1 < ..."""
    return 2 * (abs(a) - 1) + (a < 0)


def _canonical_rotation(letters: tuple[int, ...]) -> int:
    if not letters:
        return 0
    keys = [letter_key(a) for a in letters]
    n = len(keys)
    return min(range(n), key=lambda i: keys[i:] + keys[:i])


def cyclic_reduce(w: Word) -> tuple[Word, Word]:
    """Core and conjugator c with w = c^{-1} core c; the core is the pinned rotation."""
    w = reduce(w)
    a = list(w.letters)
    i, j = 0, len(a) - 1
    while i < j and a[i] == -a[j]:
        i += 1
        j -= 1
    core = tuple(a[i : j + 1])
    # w = p core p^{-1} with p = a[:i]
    p = Word(w.k, tuple(a[:i]))
    r = _canonical_rotation(core)
    # core = s t with rotation t s; core = s (t s) s^{-1}
    s = Word(w.k, core[:r])
    rotated = Word(w.k, core[r:] + core[:r])
    outer = reduce(p * s)  # w = outer rotated outer^{-1}
    return rotated, outer.inverse()


def is_proper_power(w: Word) -> tuple[bool, Word, int]:
    """(w is u^m with m >= 2, primitive root u, maximal exponent m) for cyclically reduced w."""
    if not w.is_cyclically_reduced:
        raise WordError("is_proper_power expects a cyclically reduced word")
    n = len(w.letters)
    if n == 0:
        return False, w, 1
    for period in range(1, n):
        if n % period == 0 and w.letters == w.letters[:period] * (n // period):
            return True, Word(w.k, w.letters[:period]), n // period
    return False, w, 1


def random_walk_word(k: int, length: int, rng) -> Word:
    """Product of `length` uniform letters from the 2k symmetric generators, freely reduced."""
    if k < 1 or length < 0:
        raise WordError("need k >= 1 and length >= 0")
    draws = rng.integers(0, 2 * k, size=length)
    letters = tuple(int(d // 2 + 1) * (1 if d % 2 == 0 else -1) for d in draws)
    return reduce(Word(k, letters))


def evaluate(ctx, w: Word, elements, inverses=None) -> np.ndarray:
    """w(x_1, ..., x_k) as a matrix product in written order."""
    if len(elements) < w.k and any(abs(a) > len(elements) for a in w.letters):
        raise WordError(f"word needs {w.k} elements, got {len(elements)}")
    n = la.as_array(elements[0]).shape[0]
    if inverses is None:
        inverses = {}
    out = la.identity(n)
    for a in w.letters:
        i = abs(a) - 1
        if a > 0:
            m = elements[i]
        else:
            if i not in inverses:
                inverses[i] = la.inverse(ctx, elements[i])
            m = inverses[i]
        out = la.matmul(ctx, out, m)
    return out


def enumerate_reduced(k: int, max_len: int, min_len: int = 0):
    """Reduced words by length, then lexicographically in the letter_key order."""
    alphabet = sorted([i for i in range(1, k + 1)] + [-i for i in range(1, k + 1)], key=letter_key)
    for n in range(min_len, max_len + 1):
        if n == 0:
            yield Word(k, ())
            continue
        yield from _reduced_of_length(k, alphabet, n)


def _reduced_of_length(k, alphabet, n):
    def rec(prefix):
        if len(prefix) == n:
            yield Word(k, tuple(prefix))
            return
        for a in alphabet:
            if prefix and prefix[-1] == -a:
                continue
            prefix.append(a)
            yield from rec(prefix)
            prefix.pop()

    yield from rec([])


def count_reduced(k: int, n: int) -> int:
    return 1 if n == 0 else 2 * k * (2 * k - 1) ** (n - 1)


def all_words(k: int, n: int):
    """Every (not necessarily reduced) word of length n."""
    alphabet = [i for i in range(1, k + 1)] + [-i for i in range(1, k + 1)]
    for letters in itertools.product(alphabet, repeat=n):
        yield Word(k, letters)
