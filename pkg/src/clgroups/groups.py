"""Classical group descriptors, exactly uniform sampling, membership and tiny-group enumeration.

A group is a formed space plus a *level*: a subgroup of the image of the
full isometry group GCl in its abelianization. The trivial level is SCl,
the full image is GCl, anything in between is an intermediate Cl.
"""

from __future__ import annotations

import functools
import itertools
import math
import re
from dataclasses import dataclass

import numpy as np

from . import forms as fm
from . import linalg as la
from .forms import FormedSpace, FormError
from .gf import field_of_size

__all__ = [
    "GroupDesc",
    "parse_group",
    "make_group",
    "contains",
    "sample_uniform",
    "enumerate_small",
    "group_order",
    "gcl_order",
]

_HEADS = {
    "GL": ("linear", "G"),
    "SL": ("linear", "S"),
    "Sp": ("symplectic", "G"),
    "GO+": ("orthogonal_plus", "G"),
    "GO-": ("orthogonal_minus", "G"),
    "GO": ("orthogonal_odd", "G"),
    "Omega+": ("orthogonal_plus", "S"),
    "Omega-": ("orthogonal_minus", "S"),
    "Omega": ("orthogonal_odd", "S"),
    "GU": ("unitary", "G"),
    "SU": ("unitary", "S"),
}
_TAG = {"linear": "GL", "symplectic": "Sp", "orthogonal_plus": "GO+", "orthogonal_minus": "GO-", "orthogonal_odd": "GO", "unitary": "GU"}
_GRAMMAR = "KIND(n,q)[:S|:G|:<(a,..),(b,..)>] with KIND in GL, SL, Sp, GO+, GO-, GO, Omega+, Omega-, Omega, GU, SU"
_DESC_RE = re.compile(r"^(GL|SL|Sp|GO\+|GO-|GO|Omega\+|Omega-|Omega|GU|SU)\((\d+),(\d+)\)(?::(.*))?$")


class GroupError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GroupDesc:
    space: FormedSpace
    level: frozenset

    @property
    def ctx(self):
        return self.space.ctx

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def kind(self) -> str:
        return self.space.kind

    @property
    def is_full(self) -> bool:
        return self.level == invariant_image(self.space)

    @property
    def is_special(self) -> bool:
        return self.level == frozenset({fm.invariant_identity(self.space)})

    @property
    def quasisimple_range(self) -> bool:
        """False for the tiny parameters kept only as test oracles."""
        n, q = self.n, self.ctx.q
        if self.kind == "linear":
            return not (n == 1 or (n == 2 and q <= 3))
        return n >= 4 and not (self.kind == "orthogonal_plus" and n == 4)

    @property
    def descriptor(self) -> str:
        base = f"{_TAG[self.kind]}({self.n},{self.ctx.q})"
        if self.is_full:
            return base
        if self.is_special:
            return base + ":S"
        gens = ",".join(str(tuple(int(x) for x in a)) for a in sorted(self.level))
        return base + f":<{gens}>"

    def __repr__(self) -> str:
        return f"GroupDesc({self.descriptor})"


def invariant_image(space: FormedSpace) -> frozenset:
    """The image of GCl in its abelianization."""
    return frozenset(fm.invariant_transversal(space).keys())


def _closure(space: FormedSpace, gens) -> frozenset:
    elems = {fm.invariant_identity(space)}
    frontier = list(elems)
    while frontier:
        nxt = []
        for a in frontier:
            for g in gens:
                b = fm.invariant_mul(space, a, g)
                if b not in elems:
                    elems.add(b)
                    nxt.append(b)
        frontier = nxt
    return frozenset(elems)


def make_group(space: FormedSpace, level="G") -> GroupDesc:
    full = invariant_image(space)
    if level == "G":
        lv = full
    elif level == "S":
        lv = frozenset({fm.invariant_identity(space)})
    else:
        gens = [tuple(int(x) for x in g) for g in level]
        bad = [g for g in gens if g not in full]
        if bad:
            raise GroupError(f"level generators {bad} are not invariant values of {space.descriptor}; allowed: {sorted(full)}")
        lv = _closure(space, gens)
    return GroupDesc(space, lv)


@functools.lru_cache(maxsize=256)
def parse_group(text: str) -> GroupDesc:
    """Parse a group descriptor such as "GL(4,3)", "SL(3,2)", "GO+(4,3):S" or "GU(3,4):<(2,)>"."""
    t = text.strip().replace(" ", "")
    m = _DESC_RE.match(t)
    if not m:
        raise GroupError(f"cannot parse group descriptor {text!r}; grammar: {_GRAMMAR}")
    head, n_s, q_s, lev = m.groups()
    kind, default_level = _HEADS[head]
    try:
        ctx = field_of_size(int(q_s))
        space = fm.standard_space(kind, int(n_s), ctx)
    except (FormError, ValueError) as exc:
        raise GroupError(f"invalid parameters in {text!r}: {exc}") from exc
    if lev is None or lev == "":
        return make_group(space, default_level)
    if lev in ("S", "G"):
        if default_level == "S" and lev == "G":
            raise GroupError(f"{head} already fixes the level; drop the suffix")
        return make_group(space, lev)
    lm = re.fullmatch(r"<(.*)>", lev)
    if not lm:
        raise GroupError(f"bad level {lev!r}; grammar: {_GRAMMAR}")
    tuples = re.findall(r"\(([^()]*)\)", lm.group(1))
    gens = [tuple(int(x) for x in tup.split(",") if x != "") for tup in tuples]
    return make_group(space, gens)


# -- orders -------------------------------------------------------------------------

def gcl_order(space: FormedSpace) -> int:
    n, q = space.n, space.ctx.q
    kind = space.kind
    if kind == "linear":
        return q ** (n * (n - 1) // 2) * math.prod(q**i - 1 for i in range(1, n + 1))
    if kind == "symplectic":
        m = n // 2
        return q ** (m * m) * math.prod(q ** (2 * i) - 1 for i in range(1, m + 1))
    if kind in ("orthogonal_plus", "orthogonal_minus"):
        m = n // 2
        eps = 1 if kind == "orthogonal_plus" else -1
        return 2 * q ** (m * (m - 1)) * (q**m - eps) * math.prod(q ** (2 * i) - 1 for i in range(1, m))
    if kind == "orthogonal_odd":
        m = n // 2
        return 2 * q ** (m * m) * math.prod(q ** (2 * i) - 1 for i in range(1, m + 1))
    q0 = space.ctx.q0
    return q0 ** (n * (n - 1) // 2) * math.prod(q0**i - (-1) ** i for i in range(1, n + 1))


def group_order(desc: GroupDesc) -> int:
    image = invariant_image(desc.space)
    return gcl_order(desc.space) // len(image) * len(desc.level)


# -- membership --------------------------------------------------------------------

def contains(desc: GroupDesc, g) -> bool:
    g = la.as_array(g)
    if g.shape != (desc.n, desc.n) or not desc.space.is_isometry(g):
        return False
    return fm._invariant_unchecked(desc.space, g) in desc.level


# -- sampling -------------------------------------------------------------------------

_FAST_VECTORS = 4096


class _TinySpaceCache:
    """Every vector of a small space with its Q value and encoding."""

    def __init__(self, space: FormedSpace):
        ctx, n = space.ctx, space.n
        self.vectors = fm.all_vectors(ctx, n)
        self.qvals = space.quad_value(self.vectors) if space.has_quadric else np.zeros(len(self.vectors), dtype=np.int64)
        self.weights = ctx.q ** np.arange(n, dtype=np.int64)


def _tiny_cache(space: FormedSpace) -> _TinySpaceCache:
    return space._cached("tiny", lambda: _TinySpaceCache(space))


def _sample_gcl_tiny(space: FormedSpace, rng) -> np.ndarray:
    ctx, n = space.ctx, space.n
    cache = _tiny_cache(space)
    xs = cache.vectors
    in_span = np.zeros(len(xs), dtype=bool)
    in_span[0] = True
    cols = []
    gram = space.gram
    for j in range(n):
        mask = ~in_span
        if space.has_quadric:
            mask &= cache.qvals == space.quad_value(la.identity(n)[j])
        for i, y in enumerate(cols):
            if space.kind == "linear":
                break
            w = la.matmul(ctx, gram, space.conj(y))
            mask &= la.matmul(ctx, xs, w) == gram[j, i]
        idx = np.flatnonzero(mask)
        x = xs[idx[fm._randbelow(rng, idx.size)]]
        cols.append(x)
        # span grows by all multiples of x added to the old span
        old = np.flatnonzero(in_span)
        for c in range(1, ctx.q):
            moved = ctx.add(xs[old], ctx.mul(x, c)[None, :])
            in_span[moved @ cache.weights] = True
    return np.array(cols).T


def _sample_gl_rejection(ctx, n: int, rng) -> np.ndarray:
    while True:
        g = rng.integers(0, ctx.q, size=(n, n))
        if la.rank(ctx, g) == n:
            return g


def sample_gcl(space: FormedSpace, rng) -> np.ndarray:
    """Exactly uniform element of the full isometry group."""
    if space.kind == "linear" and space.n > 3:
        return _sample_gl_rejection(space.ctx, space.n, rng)
    if space.ctx.q**space.n <= _FAST_VECTORS:
        return _sample_gcl_tiny(space, rng)
    return fm.extend_isometry(space, [], rng)


def _level_tables(desc: GroupDesc):
    def build():
        table = fm.invariant_transversal(desc.space)
        inv = {k: la.inverse(desc.ctx, m) for k, m in table.items()}
        lv = sorted(desc.level)
        return table, inv, lv

    return desc.space._cached(("level", desc.level), build)


def sample_uniform(desc: GroupDesc, rng) -> np.ndarray:
    """Exactly uniform element of desc.

    A uniform GCl element g is moved into the fibre of a uniform level value l
    by g -> g t_{inv g}^{-1} t_l, with t the fixed transversal. Fibres are
    cosets of SCl of equal size, so the result is uniform on the level.
    """
    space = desc.space
    g = sample_gcl(space, rng)
    if desc.is_full:
        return g
    table, inv, lv = _level_tables(desc)
    a = fm._invariant_unchecked(space, g)
    target = lv[fm._randbelow(rng, len(lv))] if len(lv) > 1 else lv[0]
    if a == target:
        return g
    ctx = desc.ctx
    return la.matmul(ctx, la.matmul(ctx, g, inv[a]), table[target])


# -- enumeration ------------------------------------------------------------------------

_BRUTE_LIMIT = 1 << 22
_ENUM_LIMIT = 10**7


def _leibniz_det(ctx, mats: np.ndarray) -> np.ndarray:
    """Determinants of a stack of small matrices by the permutation expansion."""
    n = mats.shape[-1]
    out = np.zeros(mats.shape[0], dtype=np.int64)
    for perm in itertools.permutations(range(n)):
        inversions = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        term = np.ones(mats.shape[0], dtype=np.int64)
        for i in range(n):
            term = ctx.mul(term, mats[:, i, perm[i]])
        out = ctx.sub(out, term) if inversions % 2 else ctx.add(out, term)
    return out


def enumerate_small(desc: GroupDesc) -> np.ndarray:
    """Every element of desc as an (N, n, n) array in a fixed order.

    Uses a brute-force filter over all n x n matrices when that space is
    small, and a closure from random generators otherwise. The closure only
    borrows sampled elements as generators, so its output does not depend
    on the sampler's law.
    """
    ctx, n = desc.ctx, desc.n
    order = group_order(desc)
    if order > _ENUM_LIMIT:
        raise GroupError(f"{desc.descriptor} has order {order} > {_ENUM_LIMIT}")
    total = ctx.q ** (n * n)
    if total <= _BRUTE_LIMIT and n <= 4:
        found = []
        chunk = 1 << 18
        weights = ctx.q ** np.arange(n * n, dtype=np.int64)
        for start in range(0, total, chunk):
            idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
            mats = ((idx[:, None] // weights[None, :]) % ctx.q).reshape(-1, n, n)
            mats = mats[_leibniz_det(ctx, mats) != 0]
            mats = mats[desc.space.isometry_mask(mats)]
            if not desc.is_full:
                keep = [fm._invariant_unchecked(desc.space, m) in desc.level for m in mats]
                mats = mats[np.array(keep, dtype=bool)] if len(keep) else mats
            found.append(mats)
        out = np.concatenate(found) if found else np.zeros((0, n, n), dtype=np.int64)
    else:
        out = _closure_enumeration(desc, order)
    if out.shape[0] != order:
        raise GroupError(f"enumeration found {out.shape[0]} elements, order formula gives {order}")  # pragma: no cover
    return out


def _closure_enumeration(desc: GroupDesc, order: int) -> np.ndarray:
    ctx, n = desc.ctx, desc.n
    rng = np.random.default_rng(20240)
    gens = [sample_uniform(desc, rng) for _ in range(3)]
    while True:
        seen = {la.identity(n).tobytes(): la.identity(n)}
        frontier = [la.identity(n)]
        while frontier:
            stack = np.array(frontier)
            nxt = []
            for g in gens:
                prods = la.matmul(ctx, stack, g)
                for m in prods:
                    key = m.tobytes()
                    if key not in seen:
                        seen[key] = m
                        nxt.append(m)
            frontier = nxt
        if len(seen) == order:
            keys = sorted(seen)
            return np.array([seen[k] for k in keys])
        gens.append(sample_uniform(desc, rng))
