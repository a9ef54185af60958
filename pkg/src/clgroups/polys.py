"""Univariate polynomials over F_q as tuples of ascending coefficients.

The zero polynomial is the empty tuple. Every function takes the field
context first and returns trimmed tuples.
"""

from __future__ import annotations

import numpy as np

from .gf import FieldCtx

Poly = tuple  # tuple[int, ...], ascending coefficients, no trailing zeros


def trim(a) -> Poly:
    a = list(a)
    while a and a[-1] == 0:
        a.pop()
    return tuple(int(c) for c in a)


def degree(a: Poly) -> int:
    return len(a) - 1


def monic(ctx: FieldCtx, a: Poly) -> Poly:
    if not a:
        return a
    inv = ctx.sinv(a[-1])
    return tuple(ctx.smul(c, inv) for c in a)


def add(ctx: FieldCtx, a: Poly, b: Poly) -> Poly:
    n = max(len(a), len(b))
    return trim(ctx.sadd(a[i] if i < len(a) else 0, b[i] if i < len(b) else 0) for i in range(n))


def sub(ctx: FieldCtx, a: Poly, b: Poly) -> Poly:
    n = max(len(a), len(b))
    return trim(ctx.ssub(a[i] if i < len(a) else 0, b[i] if i < len(b) else 0) for i in range(n))


def scale(ctx: FieldCtx, a: Poly, c: int) -> Poly:
    return trim(ctx.smul(x, c) for x in a)


def mul(ctx: FieldCtx, a: Poly, b: Poly) -> Poly:
    if not a or not b:
        return ()
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                if y:
                    out[i + j] = ctx.sadd(out[i + j], ctx.smul(x, y))
    return trim(out)


def divmod_(ctx: FieldCtx, a: Poly, b: Poly) -> tuple[Poly, Poly]:
    if not b:
        raise ZeroDivisionError("polynomial division by zero")
    r = list(a)
    db = len(b) - 1
    if len(r) - 1 < db:
        return (), trim(r)
    inv_lead = ctx.sinv(b[-1])
    quo = [0] * (len(r) - db)
    for k in range(len(r) - 1 - db, -1, -1):
        c = r[k + db]
        if c:
            c = ctx.smul(c, inv_lead)
            quo[k] = c
            for i, bi in enumerate(b):
                if bi:
                    r[k + i] = ctx.ssub(r[k + i], ctx.smul(c, bi))
    return trim(quo), trim(r[:db])


def mod(ctx: FieldCtx, a: Poly, b: Poly) -> Poly:
    return divmod_(ctx, a, b)[1]


def gcd(ctx: FieldCtx, a: Poly, b: Poly) -> Poly:
    while b:
        a, b = b, mod(ctx, a, b)
    return monic(ctx, a)


def powmod(ctx: FieldCtx, a: Poly, k: int, m: Poly) -> Poly:
    result: Poly = (1,)
    base = mod(ctx, a, m)
    while k:
        if k & 1:
            result = mod(ctx, mul(ctx, result, base), m)
        base = mod(ctx, mul(ctx, base, base), m)
        k >>= 1
    return mod(ctx, result, m)


def deriv(ctx: FieldCtx, a: Poly) -> Poly:
    return trim(ctx.smul(a[i], i % ctx.p) for i in range(1, len(a)))


def evaluate(ctx: FieldCtx, a: Poly, x):
    """Horner evaluation; x may be a scalar or an array of field elements."""
    acc = np.zeros_like(np.asarray(x, dtype=np.int64))
    for c in reversed(a):
        acc = ctx.add(ctx.mul(acc, x), c)
    return acc


def pth_root(ctx: FieldCtx, a: Poly) -> Poly:
    """g with g(t)^p = a(t), assuming a' = 0."""
    p = ctx.p
    root = ctx.proot_table
    return trim(int(root[a[i]]) for i in range(0, len(a), p))


def x_power(k: int) -> Poly:
    return tuple([0] * k + [1])


def is_irreducible(ctx: FieldCtx, f: Poly) -> bool:
    """Ben-Or test: no factor of degree <= deg/2."""
    d = degree(f)
    if d < 1:
        return False
    if d == 1:
        return True
    f = monic(ctx, f)
    x = (0, 1)
    h = x
    for _ in range(d // 2):
        h = powmod(ctx, h, ctx.q, f)
        if degree(gcd(ctx, f, sub(ctx, h, x))) > 0:
            return False
    return True


def _squarefree(ctx: FieldCtx, f: Poly) -> list[tuple[Poly, int]]:
    """Yun's algorithm adapted to characteristic p. f monic, nonconstant."""
    out: list[tuple[Poly, int]] = []
    fd = deriv(ctx, f)
    if not fd:
        for g, m in _squarefree(ctx, pth_root(ctx, f)):
            out.append((g, m * ctx.p))
        return out
    c = gcd(ctx, f, fd)
    w = divmod_(ctx, f, c)[0]
    i = 1
    while degree(w) > 0:
        y = gcd(ctx, w, c)
        z = divmod_(ctx, w, y)[0]
        if degree(z) > 0:
            out.append((monic(ctx, z), i))
        i += 1
        w = y
        c = divmod_(ctx, c, y)[0]
    if degree(c) > 0:
        for g, m in _squarefree(ctx, pth_root(ctx, monic(ctx, c))):
            out.append((g, m * ctx.p))
    return out


def _distinct_degree(ctx: FieldCtx, f: Poly) -> list[tuple[Poly, int]]:
    out = []
    x = (0, 1)
    h = x
    d = 0
    while degree(f) >= 2 * (d + 1):
        d += 1
        h = powmod(ctx, h, ctx.q, f)
        g = gcd(ctx, f, sub(ctx, h, x))
        if degree(g) > 0:
            out.append((g, d))
            f = divmod_(ctx, f, g)[0]
            h = mod(ctx, h, f)
    if degree(f) > 0:
        out.append((monic(ctx, f), degree(f)))
    return out


def _roots(ctx: FieldCtx, f: Poly) -> list[int]:
    vals = evaluate(ctx, f, np.arange(ctx.q, dtype=np.int64))
    return [int(r) for r in np.nonzero(vals == 0)[0]]


def _split_by_roots(ctx: FieldCtx, f: Poly) -> list[Poly]:
    """Factor a squarefree f of degree <= 3 by root search."""
    out = []
    for r in _roots(ctx, f):
        lin = (ctx.sneg(r), 1)
        out.append(lin)
        f = divmod_(ctx, f, lin)[0]
    if degree(f) > 0:
        out.append(monic(ctx, f))
    return out


def _equal_degree(ctx: FieldCtx, f: Poly, d: int, rng) -> list[Poly]:
    """Cantor-Zassenhaus splitting of a product of distinct degree-d irreducibles."""
    n = degree(f)
    if n == d:
        return [f]
    if n <= 3 and ctx.q <= 4096:
        return _split_by_roots(ctx, f)
    q = ctx.q
    while True:
        a = trim(int(c) for c in rng.integers(0, q, size=n))
        if degree(a) < 1:
            continue
        if ctx.p == 2:
            # absolute trace map onto F_2 kills half of the factors on average
            t = a
            acc = a
            for _ in range(ctx.e * d - 1):
                t = mod(ctx, mul(ctx, t, t), f)
                acc = add(ctx, acc, t)
            b = acc
        else:
            b = sub(ctx, powmod(ctx, a, (q**d - 1) // 2, f), (1,))
        g = gcd(ctx, f, b)
        if 0 < degree(g) < n:
            return _equal_degree(ctx, g, d, rng) + _equal_degree(ctx, divmod_(ctx, f, g)[0], d, rng)


def factor(ctx: FieldCtx, f: Poly) -> list[tuple[Poly, int]]:
    """Complete factorization into monic irreducibles with multiplicities.

    The leading coefficient is dropped. Output is sorted by (degree, coefficients).
    """
    f = trim(f)
    if not f:
        raise ValueError("cannot factor the zero polynomial")
    f = monic(ctx, f)
    if degree(f) == 0:
        return []
    rng = np.random.default_rng(0x5EED)
    counts: dict[Poly, int] = {}
    for g, m in _squarefree(ctx, f):
        if degree(g) <= 3 and ctx.q <= 4096:
            pieces = _split_by_roots(ctx, g)
        else:
            pieces = []
            for h, d in _distinct_degree(ctx, g):
                pieces.extend(_equal_degree(ctx, h, d, rng))
        for h in pieces:
            counts[h] = counts.get(h, 0) + m
    return sorted(counts.items(), key=lambda kv: (len(kv[0]), kv[0]))


def expand(ctx: FieldCtx, factors) -> Poly:
    out: Poly = (1,)
    for g, m in factors:
        for _ in range(m):
            out = mul(ctx, out, g)
    return out


def companion(ctx: FieldCtx, f: Poly) -> np.ndarray:
    """Companion matrix of monic f: multiplication by t on the basis 1, t, ..., t^{d-1}."""
    f = monic(ctx, f)
    d = degree(f)
    c = np.zeros((d, d), dtype=np.int64)
    for j in range(d - 1):
        c[j + 1, j] = 1
    for i in range(d):
        c[i, d - 1] = ctx.sneg(f[i])
    return c


def to_text(a: Poly) -> str:
    return " ".join(str(c) for c in a) if a else "0"


def from_text(text: str) -> Poly:
    return trim(int(t) for t in text.split())


def pretty(a: Poly, var: str = "t") -> str:
    if not a:
        return "0"
    terms = []
    for i in range(len(a) - 1, -1, -1):
        c = a[i]
        if not c:
            continue
        mono = "" if i == 0 else (var if i == 1 else f"{var}^{i}")
        if not mono:
            terms.append(str(c))
        elif c == 1:
            terms.append(mono)
        else:
            terms.append(f"{c}{mono}")
    return " + ".join(terms)
