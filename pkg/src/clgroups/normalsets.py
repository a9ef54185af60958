"""Block-element normal sets C_d, the minimal-degree set and the short-word searches built on them.

Each element of C_d respects a fixed decomposition of the natural module.
For GL it is L + V_1 + ... + V_k + R + W, with
    L: a 2-dim transvection block;
    V_i: multiplication by t on F_q[t]/(p_i);
    R: a scalar fixing the determinant;
    W: the identity.
For formed spaces every constituent is a sum of hyperbolic pairs of the
standard basis. Each V_i = V_{i,1} + V_{i,2} is split into dual totally
singular halves, and g acts on them by (C, theta(C)^{-T}) with C the
companion of p_i. Some power of every such element lies in the minimal
degree set, which is the certificate the word searches look for.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import forms as fm
from . import linalg as la
from . import polys
from .gf import FieldCtx
from .groups import GroupDesc, contains, make_group, sample_uniform
from .words import Word, enumerate_reduced

__all__ = [
    "NormalSetSpec",
    "MinimalDegreeSet",
    "irreducibles",
    "star",
    "make_spec",
    "default_block_degree",
    "build_cd_element",
    "random_cd_parameters",
    "in_minimal_degree_set",
    "search_word_into_M",
    "generation_certificate",
    "estimate_cd_density",
]


class NormalSetError(ValueError):
    pass


# -- polynomial inventories -------------------------------------------------------------------

def _mobius(n: int) -> int:
    out, m, f = 1, n, 2
    while f * f <= m:
        if m % f == 0:
            m //= f
            if m % f == 0:
                return 0
            out = -out
        f += 1
    return -out if m > 1 else out


def irreducible_count(q: int, d: int) -> int:
    """Number of monic irreducibles of degree d over F_q (necklace formula)."""
    return sum(_mobius(e) * q ** (d // e) for e in range(1, d + 1) if d % e == 0) // d


def irreducibles(ctx: FieldCtx, d: int) -> list[tuple]:
    """All monic irreducible polynomials of degree d, sorted lexicographically from the constant term."""
    if d < 1:
        raise NormalSetError("degree must be positive")
    out = []
    for low in itertools.product(range(ctx.q), repeat=d):
        f = tuple(low) + (1,)
        if polys.is_irreducible(ctx, f):
            out.append(f)
    return out


def star(ctx: FieldCtx, p, unitary: bool = False) -> tuple:
    """p*(t) = p(0)^{-1} t^d p(t^{-1}); coefficients go through theta first when unitary."""
    p = polys.trim(p)
    if not p or p[0] == 0:
        raise NormalSetError("star needs a polynomial with nonzero constant term")
    if unitary:
        p = tuple(ctx.stheta(c) for c in p)
    return polys.monic(ctx, tuple(reversed(p)))


def star_pairs(ctx: FieldCtx, d: int, unitary: bool = False) -> list[tuple[tuple, tuple]]:
    """Unordered pairs {p, p*} with p != p*, each listed once as (smaller, larger)."""
    seen = set()
    out = []
    for p in irreducibles(ctx, d):
        if p[0] == 0:
            continue
        ps = star(ctx, p, unitary)
        if ps == p or p in seen:
            continue
        seen.update((p, ps))
        out.append((p, ps) if p < ps else (ps, p))
    return sorted(out)


# -- specification ------------------------------------------------------------------------------

def default_block_degree(n: int, q: int) -> int:
    """max(ceil(log_q(4n)), 2)."""
    d = 1
    while q**d < 4 * n:
        d += 1
    return max(d, 2)


def _kappa(desc: GroupDesc) -> int:
    return 2 if desc.space.is_orthogonal and desc.ctx.p == 2 else 1


def _anisotropic_dim(space: fm.FormedSpace) -> int:
    return {"orthogonal_plus": 0, "orthogonal_minus": 2, "orthogonal_odd": 1, "symplectic": 0}.get(space.kind, space.n % 2)


@dataclass(frozen=True)
class NormalSetSpec:
    desc: GroupDesc
    d: int
    k: int
    r: int
    alpha: tuple
    kappa: int
    delta: int  # 3 for GL; dim V_an + 4 + 2 kappa otherwise

    @property
    def formed(self) -> bool:
        return self.desc.kind != "linear"

    @property
    def exponent(self) -> int:
        return self.kappa * (self.desc.ctx.q**self.d - 1)

    @property
    def block_dim(self) -> int:
        return 2 * self.d if self.formed else self.d


def make_spec(desc: GroupDesc, d: int | None = None, alpha=None) -> NormalSetSpec:
    space = desc.space
    n, q = desc.n, desc.ctx.q
    if desc.kind != "linear" and not fm._is_standard(space):
        raise NormalSetError("block elements are built in the standard basis only")
    d = default_block_degree(n, q) if d is None else int(d)
    if d < 2 or d > n:
        raise NormalSetError(f"block degree d must lie in [2, n], got {d}")
    kappa = _kappa(desc)
    if desc.kind == "linear":
        delta, block = 3, d
    else:
        delta, block = _anisotropic_dim(space) + 4 + 2 * kappa, 2 * d
    if n - delta < block:
        raise NormalSetError(f"n = {n} leaves no room for a block of dimension {block} (need n >= {delta + block})")
    k, r = divmod(n - delta, block)
    alpha = fm.invariant_identity(space) if alpha is None else tuple(int(a) for a in alpha)
    if alpha not in desc.level:
        raise NormalSetError(f"alpha {alpha} is not in the level of {desc.descriptor}")
    available = len(irreducibles(desc.ctx, d)) if desc.kind == "linear" else len(star_pairs(desc.ctx, d, space.is_unitary))
    if available < k:
        raise NormalSetError(f"only {available} admissible polynomials of degree {d} for {k} blocks; increase d")
    return NormalSetSpec(desc, d, k, r, alpha, kappa, delta)


# -- block builders ----------------------------------------------------------------------------

def _pair_coords(pairs: list[int]) -> list[int]:
    """Coordinates of v_1..v_m, w_1..w_m for the given hyperbolic pair indices."""
    return [2 * j for j in pairs] + [2 * j + 1 for j in pairs]


def _place(g: np.ndarray, coords: list[int], block: np.ndarray) -> None:
    idx = np.array(coords)
    g[np.ix_(idx, idx)] = block


def _dual_block(ctx: FieldCtx, c: np.ndarray, unitary: bool) -> np.ndarray:
    """diag(C, theta(C)^{-T}): the form-preserving extension of C to the dual half."""
    ct = ctx.theta(c) if unitary else c
    return la.block_diag(c, la.inverse(ctx, ct).T)


def _l_block(spec: NormalSetSpec) -> np.ndarray:
    ctx, kind = spec.desc.ctx, spec.desc.kind
    if kind == "linear":
        return np.array([[1, 1], [0, 1]], dtype=np.int64)
    if kind in ("symplectic", "unitary"):
        g = la.identity(4)
        g[0, 2] = _unitary_lambda(ctx) if kind == "unitary" else 1
        return g
    if ctx.p == 2:
        a = np.array([[1, 1, 0], [0, 1, 1], [0, 0, 1]], dtype=np.int64)
    else:
        a = np.array([[1, 1], [0, 1]], dtype=np.int64)
    return la.block_diag(a, la.inverse(ctx, a).T)


def _unitary_lambda(ctx: FieldCtx) -> int:
    """Nonzero lambda with lambda + theta(lambda) = 0."""
    if ctx.p == 2:
        return 1
    q0 = math.isqrt(ctx.q)
    return ctx.spow(ctx.gen, (q0 + 1) // 2)


def _r_candidates(spec: NormalSetSpec):
    """Pinned enumeration of GO_2^+ (orthogonal) or diag(a, theta(a)^{-1}) (unitary) on R."""
    ctx = spec.desc.ctx
    if spec.desc.space.is_unitary:
        for a in range(1, ctx.q):
            yield np.array([[a, 0], [0, ctx.sinv(ctx.stheta(a))]], dtype=np.int64)
        return
    for a in range(1, ctx.q):
        yield np.array([[a, 0], [0, ctx.sinv(a)]], dtype=np.int64)
    for a in range(1, ctx.q):
        yield np.array([[0, a], [ctx.sinv(a), 0]], dtype=np.int64)


def _layout(spec: NormalSetSpec):
    """Coordinate lists for L, each V_i and R."""
    d, k = spec.d, spec.k
    if not spec.formed:
        l_coords = [0, 1]
        v_coords = [list(range(2 + i * d, 2 + (i + 1) * d)) for i in range(k)]
        return l_coords, v_coords, [2 + k * d]
    kap = spec.kappa
    l_coords = _pair_coords(list(range(kap + 1)))
    base = kap + 1
    v_coords = [_pair_coords(list(range(base + i * d, base + (i + 1) * d))) for i in range(k)]
    return l_coords, v_coords, _pair_coords([base + k * d])


def check_cd_parameters(spec: NormalSetSpec, chosen) -> list[tuple]:
    ctx = spec.desc.ctx
    chosen = [polys.trim(p) for p in chosen]
    if len(chosen) != spec.k:
        raise NormalSetError(f"need exactly k = {spec.k} polynomials, got {len(chosen)}")
    for p in chosen:
        if polys.degree(p) != spec.d or p[-1] != 1 or not polys.is_irreducible(ctx, p):
            raise NormalSetError(f"{polys.pretty(p)} is not a monic irreducible of degree {spec.d}")
    if not spec.formed:
        if len(set(chosen)) != len(chosen):
            raise NormalSetError("the polynomials must be distinct")
        return chosen
    unitary = spec.desc.space.is_unitary
    keys = []
    for p in chosen:
        ps = star(ctx, p, unitary)
        if ps == p:
            raise NormalSetError(f"{polys.pretty(p)} is its own star; pick p with p != p*")
        keys.append(frozenset((p, ps)))
    if len(set(keys)) != len(keys):
        raise NormalSetError("the star pairs must be distinct")
    return chosen


def build_cd_element(spec: NormalSetSpec, chosen) -> np.ndarray:
    """The block element g_{p_1..p_k; alpha}, verified to lie in spec.desc over alpha."""
    desc = spec.desc
    space, ctx, n = desc.space, desc.ctx, desc.n
    chosen = check_cd_parameters(spec, chosen)
    g = la.identity(n)
    l_coords, v_coords, r_coords = _layout(spec)
    _place(g, l_coords, _l_block(spec))
    for p, coords in zip(chosen, v_coords):
        c = polys.companion(ctx, p)
        _place(g, coords, _dual_block(ctx, c, space.is_unitary) if spec.formed else c)
    if desc.kind == "linear":
        denom = 1
        for p in chosen:
            denom = ctx.smul(denom, ctx.smul(p[0], ctx.spow(ctx.sneg(1), spec.d)))
        g[r_coords[0], r_coords[0]] = ctx.smul(spec.alpha[0], ctx.sinv(denom))
    elif desc.kind != "symplectic":
        have = fm._invariant_unchecked(space, g)
        need = fm.invariant_mul(space, spec.alpha, fm.invariant_inv(space, have))
        for block in _r_candidates(spec):
            trial = g.copy()
            _place(trial, r_coords, block)
            if fm._invariant_unchecked(space, trial) == fm.invariant_mul(space, have, need):
                g = trial
                break
        else:  # pragma: no cover - the R block reaches every invariant
            raise NormalSetError(f"no R block realises invariant {spec.alpha}")
    if not space.is_isometry(g):
        raise NormalSetError("internal error: built element is not an isometry")  # pragma: no cover
    if fm._invariant_unchecked(space, g) != spec.alpha:
        raise NormalSetError("internal error: built element has the wrong invariant")  # pragma: no cover
    return g


def random_cd_parameters(spec: NormalSetSpec, rng) -> list[tuple]:
    ctx = spec.desc.ctx
    if not spec.formed:
        pool = irreducibles(ctx, spec.d)
        idx = rng.choice(len(pool), size=spec.k, replace=False)
        return [pool[i] for i in sorted(idx)]
    pool = star_pairs(ctx, spec.d, spec.desc.space.is_unitary)
    idx = rng.choice(len(pool), size=spec.k, replace=False)
    return [pool[i][int(rng.integers(2))] for i in sorted(idx)]


# -- minimal degree set ------------------------------------------------------------------------

@dataclass(frozen=True)
class MinimalDegreeSet:
    desc: GroupDesc

    @property
    def s(self) -> int:
        return 2 if self.desc.space.is_orthogonal else 1

    def __contains__(self, g) -> bool:
        return in_minimal_degree_set(self.desc, g)


def in_minimal_degree_set(desc, g) -> bool:
    """g in SCl, g != 1 and rank(g - 1) equals the minimal degree s."""
    desc = desc.desc if isinstance(desc, MinimalDegreeSet) else desc
    space, ctx = desc.space, desc.ctx
    g = la.as_array(g)
    s = 2 if space.is_orthogonal else 1
    if la.rank(ctx, ctx.sub(g, la.identity(desc.n))) != s:
        return False
    if not space.is_isometry(g) or la.rank(ctx, g) < desc.n:
        return False
    return fm._invariant_unchecked(space, g) == fm.invariant_identity(space)


# -- word searches -------------------------------------------------------------------------------

@dataclass
class SearchResult:
    inner: Word  # u over the inner generators 1..k
    word: Word  # (x1 * u shifted up by one)^exponent, x1 standing for x_0
    exponent: int
    witness: np.ndarray
    tested: int

    def to_json(self) -> dict:
        return {
            "inner": list(self.inner.letters),
            "word_base": [1] + [a + (1 if a > 0 else -1) for a in self.inner.letters],
            "exponent": self.exponent,
            "witness": self.witness.tolist(),
            "tested": self.tested,
        }


def _words_with_products(ctx, gens, invs, max_len, n):
    """Yield (word letters, product) for reduced words by length, then lex order."""
    k = len(gens)
    mats = {a: gens[a - 1] for a in range(1, k + 1)}
    mats.update({-a: invs[a - 1] for a in range(1, k + 1)})
    layer = {(): la.identity(n)}
    yield (), layer[()]
    for length in range(1, max_len + 1):
        nxt = {}
        for w in enumerate_reduced(k, length, min_len=length):
            prev = layer[w.letters[:-1]]
            prod = la.matmul(ctx, prev, mats[w.letters[-1]])
            nxt[w.letters] = prod
            yield w.letters, prod
        layer = nxt


def search_word_into_M(desc: GroupDesc, xs, max_len: int, d: int | None = None) -> SearchResult | None:
    """First reduced u (by length, then letter order) with (x_0 u)^{kappa (q^d - 1)} in M.

    xs[0] is x_0 and xs[1:] are the inner generators.
    """
    ctx = desc.ctx
    xs = [la.as_array(x) for x in xs]
    k = len(xs) - 1
    if k < 1:
        raise NormalSetError("need x_0 and at least one inner generator")
    if 2 * k * (2 * k - 1) ** max(max_len - 1, 0) > 10**6:
        raise NormalSetError("word budget exceeds 10^6 words at the top length")
    d = default_block_degree(desc.n, ctx.q) if d is None else d
    exponent = _kappa(desc) * (ctx.q**d - 1)
    invs = [la.inverse(ctx, x) for x in xs[1:]]
    tested = 0
    for letters, ubar in _words_with_products(ctx, xs[1:], invs, max_len, desc.n):
        tested += 1
        h = la.mat_pow(ctx, la.matmul(ctx, xs[0], ubar), exponent)
        if in_minimal_degree_set(desc, h):
            inner = Word(k, letters)
            base = Word(k + 1, (1,) + tuple(a + (1 if a > 0 else -1) for a in letters))
            return SearchResult(inner, base**exponent, exponent, h, tested)
    return None


def is_transvection(ctx, g) -> bool:
    """rank(g - 1) = 1 and (g - 1)^2 = 0."""
    e = ctx.sub(la.as_array(g), la.identity(len(g)))
    return la.rank(ctx, e) == 1 and not np.any(la.matmul(ctx, e, e))


def is_class_one(ctx, g) -> bool:
    """Irreducible with order m (p^n - 1)/(p - 1) for some m dividing p - 1."""
    n, p = len(g), ctx.q
    if not polys.is_irreducible(ctx, la.char_poly(ctx, g)):
        return False
    order = la.element_order(ctx, g)
    base = (p**n - 1) // (p - 1)
    return order % base == 0 and (p - 1) % (order // base) == 0


def is_class_two(ctx, g) -> bool:
    """Order p^{n-1} - 1 with char poly splitting as (linear) * (irreducible of degree n - 1)."""
    n, p = len(g), ctx.q
    degs = sorted((polys.degree(f), m) for f, m in la.factor_poly(ctx, la.char_poly(ctx, g)))
    if n < 3 or degs != [(1, 1), (n - 1, 1)]:
        return False
    return la.element_order(ctx, g) == p ** (n - 1) - 1


def generation_certificate(ctx, xs, max_len: int) -> dict:
    """Search words x * u(y, z) for members of the classes C_1 and C_2.

    Finding both certifies that <x, y, z> contains SL_n(p).
    """
    if ctx.e != 1:
        raise NormalSetError("the generation certificate is stated for prime fields")
    xs = [la.as_array(x) for x in xs]
    n = xs[0].shape[0]
    invs = [la.inverse(ctx, x) for x in xs[1:]]
    found = {"C1": None, "C2": None}
    tested = 0
    for letters, ubar in _words_with_products(ctx, xs[1:], invs, max_len, n):
        tested += 1
        g = la.matmul(ctx, xs[0], ubar)
        word = [1] + [a + (1 if a > 0 else -1) for a in letters]
        if found["C1"] is None and is_class_one(ctx, g):
            found["C1"] = {"word": word, "order": la.element_order(ctx, g)}
        if found["C2"] is None and is_class_two(ctx, g):
            found["C2"] = {"word": word, "order": la.element_order(ctx, g)}
        if found["C1"] and found["C2"]:
            break
    return {"certified": bool(found["C1"] and found["C2"]), "tested": tested, **found}


# -- density ------------------------------------------------------------------------------------

def _jordan_profile(ctx, g, roots, depth: int) -> tuple:
    n = len(g)
    out = []
    for mu in roots:
        e = ctx.sub(g, ctx.mul(la.identity(n), mu))
        acc = la.identity(n)
        ranks = []
        for _ in range(depth):
            acc = la.matmul(ctx, acc, e)
            ranks.append(la.rank(ctx, acc))
        out.append((mu, tuple(ranks)))
    return tuple(out)


def _cd_pattern(spec: NormalSetSpec, g) -> list[tuple] | None:
    """The block polynomials of g if its nonlinear factors have the C_d shape, else None."""
    ctx = spec.desc.ctx
    factors = la.factor_poly(ctx, la.char_poly(ctx, g))
    big = [(f, m) for f, m in factors if polys.degree(f) > 1]
    if any(m != 1 or polys.degree(f) != spec.d for f, m in big):
        return None
    fs = sorted(f for f, _ in big)
    if not spec.formed:
        return fs if len(fs) == spec.k else None
    unitary = spec.desc.space.is_unitary
    fset = set(fs)
    reps = []
    for f in fs:
        fst = star(ctx, f, unitary)
        if fst == f or fst not in fset:
            return None
        if f < fst:
            reps.append(f)
    return reps if len(reps) == spec.k and 2 * len(reps) == len(fs) else None


def in_cd_proxy(spec: NormalSetSpec, g) -> tuple | None:
    """Invariant alpha if g matches the rational-canonical-form pattern of some g_{p; alpha}, else None.

    Exact for GL. For formed kinds it is a necessary-condition proxy built
    from the char poly and the Jordan ranks at each rational eigenvalue.
    """
    desc = spec.desc
    ctx = desc.ctx
    chosen = _cd_pattern(spec, g)
    if chosen is None:
        return None
    alpha = fm._invariant_unchecked(desc.space, g)
    if alpha not in desc.level:
        return None
    ref_spec = NormalSetSpec(desc, spec.d, spec.k, spec.r, alpha, spec.kappa, spec.delta)
    ref = build_cd_element(ref_spec, chosen)
    cp = la.char_poly(ctx, g)
    if cp != la.char_poly(ctx, ref):
        return None
    roots = sorted({f[0] for f, _ in la.factor_poly(ctx, cp) if polys.degree(f) == 1})
    roots = [ctx.sneg(r) for r in roots]
    if _jordan_profile(ctx, g, roots, 4) != _jordan_profile(ctx, ref, roots, 4):
        return None
    return alpha


@dataclass
class DensityReport:
    spec: NormalSetSpec
    trials: int
    per_fibre: dict = field(default_factory=dict)  # alpha -> [samples in fibre, hits]

    @property
    def hits(self) -> int:
        return sum(v[1] for v in self.per_fibre.values())

    @property
    def frequency(self) -> float:
        return self.hits / self.trials

    def fibre_frequencies(self) -> dict:
        """alpha -> (frequency within the fibre, standard error)."""
        out = {}
        for a, (m, h) in self.per_fibre.items():
            f = h / m if m else 0.0
            out[a] = (f, math.sqrt(max(f * (1 - f), 1.0 / max(m, 1)) / max(m, 1)))
        return out

    def lower_bound_order(self) -> float:
        """exp(-d^2 log q - n log n / d), the shape of the density lower bound (constants dropped)."""
        d, q, n = self.spec.d, self.spec.desc.ctx.q, self.spec.desc.n
        return math.exp(-(d * d) * math.log(q) - n * math.log(n) / d)

    def summary(self) -> dict:
        return {
            "group": self.spec.desc.descriptor,
            "d": self.spec.d,
            "k": self.spec.k,
            "trials": self.trials,
            "hits": self.hits,
            "frequency": self.frequency,
            "lower_bound_order": self.lower_bound_order(),
            "proxy_exact": not self.spec.formed,
            "fibres": {str(a): {"samples": m, "hits": h} for a, (m, h) in sorted(self.per_fibre.items())},
        }


def estimate_cd_density(desc: GroupDesc, d: int | None, trials: int, rng) -> DensityReport:
    """Monte Carlo frequency of the C_d proxy among uniform samples, split by abelian fibre."""
    spec = make_spec(desc, d)
    report = DensityReport(spec, trials, {a: [0, 0] for a in sorted(desc.level)})
    for _ in range(trials):
        g = sample_uniform(desc, rng)
        alpha = fm._invariant_unchecked(desc.space, g)
        cell = report.per_fibre[alpha]
        cell[0] += 1
        if in_cd_proxy(spec, g) is not None:
            cell[1] += 1
    return report


def special_group(desc: GroupDesc) -> GroupDesc:
    return make_group(desc.space, "S")


def membership_report(spec: NormalSetSpec, g) -> dict:
    """The checks of the power property for one built element."""
    desc = spec.desc
    h = la.mat_pow(desc.ctx, g, spec.exponent)
    return {
        "in_group": contains(desc, g),
        "alpha": fm._invariant_unchecked(desc.space, g),
        "power_degree": la.rank(desc.ctx, desc.ctx.sub(h, la.identity(desc.n))),
        "power_in_M": in_minimal_degree_set(desc, h),
    }
