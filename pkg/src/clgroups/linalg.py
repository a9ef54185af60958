"""Dense linear algebra over F_q on integer numpy arrays.

Matrices and vectors are plain ``int64`` arrays holding field encodings;
the field context is passed explicitly. Column vectors are 1-d arrays and
a matrix acts on them from the left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from . import polys
from .gf import FieldCtx

__all__ = [
    "AffineSolution",
    "SingularMatrixError",
    "matmul",
    "mat_pow",
    "identity",
    "rref",
    "rank",
    "nullspace",
    "solve_affine",
    "inverse",
    "det",
    "in_span",
    "char_poly",
    "factor_poly",
    "poly_of_matrix",
    "degree_of",
    "support_of",
    "element_order",
    "centralizer_order_brute",
    "format_matrix",
    "parse_matrix",
]


class SingularMatrixError(ValueError):
    """A group-element operation received a singular matrix."""


def identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=np.int64)


def as_array(a) -> np.ndarray:
    return np.asarray(a, dtype=np.int64)


def matmul(ctx: FieldCtx, a, b) -> np.ndarray:
    """Matrix product over F_q; batch dimensions broadcast like numpy.matmul."""
    a = as_array(a)
    b = as_array(b)
    if ctx.is_prime:
        return np.matmul(a, b) % ctx.p
    row = a.ndim == 1
    if row:
        a = a[None, :]
    vec = b.ndim == 1
    if vec:
        b = b[:, None]
    areg = ctx.reg[a]  # (..., m, n, e, e)
    bdig = ctx.digits[b]  # (..., n, k, e)
    cdig = np.einsum("...ijab,...jkb->...ika", areg, bdig) % ctx.p
    out = cdig @ ctx._powers
    if vec:
        out = out[..., 0]
    if row:
        out = out[..., 0] if vec else out[..., 0, :]
    return out


def mat_add(ctx: FieldCtx, a, b) -> np.ndarray:
    return ctx.add(as_array(a), as_array(b))


def mat_sub(ctx: FieldCtx, a, b) -> np.ndarray:
    return ctx.sub(as_array(a), as_array(b))


def mat_pow(ctx: FieldCtx, a, k: int) -> np.ndarray:
    """a^k by square-and-multiply; negative k uses the inverse."""
    a = as_array(a)
    if k < 0:
        a, k = inverse(ctx, a), -k
    result = identity(a.shape[-1])
    while k:
        if k & 1:
            result = matmul(ctx, result, a)
        k >>= 1
        if k:
            a = matmul(ctx, a, a)
    return result


# -- elimination ---------------------------------------------------------------

def _pack_rows_gf2(a: np.ndarray) -> list[int]:
    """Rows of a 0/1 matrix as Python ints (bit j = column j)."""
    weights = [1 << j for j in range(a.shape[1])]
    if a.shape[1] <= 62:
        w = np.array(weights, dtype=np.int64)
        return [int(x) for x in (a & 1) @ w]
    return [sum(w for w, bit in zip(weights, row) if bit) for row in a.tolist()]


def rank_gf2_packed(rows: list[int]) -> int:
    """Rank of bit-packed GF(2) rows by XOR elimination on leading bits."""
    basis: dict[int, int] = {}
    for v in rows:
        while v:
            h = v.bit_length() - 1
            b = basis.get(h)
            if b is None:
                basis[h] = v
                break
            v ^= b
    return len(basis)


def rref(ctx: FieldCtx, a) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form and pivot columns."""
    m = np.array(a, dtype=np.int64, copy=True)
    if m.ndim != 2:
        raise ValueError("rref expects a 2-d array")
    rows, cols = m.shape
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        nz = np.flatnonzero(m[r:, c])
        if nz.size == 0:
            continue
        i = r + int(nz[0])
        if i != r:
            m[[r, i]] = m[[i, r]]
        lead = int(m[r, c])
        if lead != 1:
            m[r] = ctx.mul(m[r], ctx.sinv(lead))
        col = m[:, c].copy()
        col[r] = 0
        hit = np.flatnonzero(col)
        if hit.size:
            m[hit] = ctx.sub(m[hit], ctx.mul(col[hit, None], m[r][None, :]))
        pivots.append(c)
        r += 1
    return m, pivots


def rank(ctx: FieldCtx, a) -> int:
    a = as_array(a)
    if a.size == 0:
        return 0
    if ctx.q == 2:
        return rank_gf2_packed(_pack_rows_gf2(a))
    return len(rref(ctx, a)[1])


def nullspace(ctx: FieldCtx, a) -> np.ndarray:
    """Basis (as rows) of {x : a x = 0}."""
    a = as_array(a)
    n = a.shape[1]
    if a.shape[0] == 0:
        return identity(n)
    r, piv = rref(ctx, a)
    free = [c for c in range(n) if c not in set(piv)]
    basis = np.zeros((len(free), n), dtype=np.int64)
    for k, f in enumerate(free):
        basis[k, f] = 1
        for i, pc in enumerate(piv):
            basis[k, pc] = ctx.sneg(int(r[i, f]))
    return basis


@dataclass(frozen=True)
class AffineSolution:
    """Solution set particular + span(kernel rows)."""

    particular: np.ndarray
    kernel: np.ndarray

    @property
    def dim(self) -> int:
        return self.kernel.shape[0]


def solve_affine(ctx: FieldCtx, a, b) -> AffineSolution | None:
    """All x with a x = b, or None when inconsistent."""
    a = as_array(a)
    b = as_array(b)
    rows, n = a.shape
    if rows == 0:
        return AffineSolution(np.zeros(n, dtype=np.int64), identity(n))
    aug = np.concatenate([a, b.reshape(rows, 1)], axis=1)
    r, piv = rref(ctx, aug)
    if piv and piv[-1] == n:
        return None
    x = np.zeros(n, dtype=np.int64)
    for i, pc in enumerate(piv):
        x[pc] = r[i, n]
    free = [c for c in range(n) if c not in set(piv)]
    kern = np.zeros((len(free), n), dtype=np.int64)
    for k, f in enumerate(free):
        kern[k, f] = 1
        for i, pc in enumerate(piv):
            kern[k, pc] = ctx.sneg(int(r[i, f]))
    return AffineSolution(x, kern)


def in_span(ctx: FieldCtx, basis_rows, v) -> bool:
    basis_rows = as_array(basis_rows)
    if basis_rows.shape[0] == 0:
        return not np.any(as_array(v))
    return rank(ctx, np.vstack([basis_rows, as_array(v)[None, :]])) == rank(ctx, basis_rows)


def span_coords(ctx: FieldCtx, basis_rows, v) -> np.ndarray | None:
    """Coefficients c with sum c_i basis_i = v, or None (basis assumed independent)."""
    basis_rows = as_array(basis_rows)
    if basis_rows.shape[0] == 0:
        return np.zeros(0, dtype=np.int64) if not np.any(v) else None
    sol = solve_affine(ctx, basis_rows.T, v)
    return None if sol is None else sol.particular


def inverse(ctx: FieldCtx, a) -> np.ndarray:
    a = as_array(a)
    n = a.shape[0]
    aug = np.concatenate([a, identity(n)], axis=1)
    r, piv = rref(ctx, aug)
    if len(piv) < n or piv[n - 1] != n - 1:
        raise SingularMatrixError("matrix is singular")
    return r[:, n:]


def det(ctx: FieldCtx, a) -> int:
    m = np.array(a, dtype=np.int64, copy=True)
    n = m.shape[0]
    d = 1
    for c in range(n):
        nz = np.flatnonzero(m[c:, c])
        if nz.size == 0:
            return 0
        i = c + int(nz[0])
        if i != c:
            m[[c, i]] = m[[i, c]]
            d = ctx.sneg(d)
        lead = int(m[c, c])
        d = ctx.smul(d, lead)
        inv = ctx.sinv(lead)
        below = m[c + 1 :, c]
        hit = np.flatnonzero(below)
        if hit.size:
            f = ctx.mul(below[hit], inv)
            m[c + 1 + hit] = ctx.sub(m[c + 1 + hit], ctx.mul(f[:, None], m[c][None, :]))
    return int(d)


# -- characteristic polynomial and spectral quantities -----------------------------

def char_poly(ctx: FieldCtx, a) -> polys.Poly:
    """det(tI - a) via Hessenberg reduction, ascending coefficients."""
    h = as_array(a).tolist()
    n = len(h)
    add, sub, mul = ctx.sadd, ctx.ssub, ctx.smul
    for m in range(1, n - 1):
        piv = next((i for i in range(m, n) if h[i][m - 1]), None)
        if piv is None:
            continue
        if piv != m:
            h[piv], h[m] = h[m], h[piv]
            for row in h:
                row[piv], row[m] = row[m], row[piv]
        inv = ctx.sinv(h[m][m - 1])
        for i in range(m + 1, n):
            u = mul(h[i][m - 1], inv)
            if u:
                hi, hm = h[i], h[m]
                for j in range(n):
                    if hm[j]:
                        hi[j] = sub(hi[j], mul(u, hm[j]))
                for row in h:
                    if row[i]:
                        row[m] = add(row[m], mul(u, row[i]))
    # recurrence on leading principal minors of tI - H
    p: list[polys.Poly] = [(1,)]
    for k in range(n):
        cur = polys.mul(ctx, (ctx.sneg(h[k][k]), 1), p[k])
        prod = 1
        for i in range(k - 1, -1, -1):
            prod = mul(prod, h[i + 1][i])
            if not prod:
                break
            coef = mul(prod, h[i][k])
            if coef:
                cur = polys.sub(ctx, cur, polys.scale(ctx, p[i], coef))
        p.append(cur)
    return p[n]


def factor_poly(ctx: FieldCtx, f) -> list[tuple[polys.Poly, int]]:
    return polys.factor(ctx, polys.trim(f))


def poly_of_matrix(ctx: FieldCtx, f: polys.Poly, a) -> np.ndarray:
    """f(a) by Horner's rule."""
    a = as_array(a)
    n = a.shape[0]
    acc = np.zeros((n, n), dtype=np.int64)
    eye = identity(n)
    for c in reversed(f):
        acc = matmul(ctx, acc, a)
        if c:
            acc = ctx.add(acc, ctx.mul(eye, c))
    return acc


def _check_invertible(ctx: FieldCtx, g) -> np.ndarray:
    g = as_array(g)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError("expected a square matrix")
    if rank(ctx, g) < g.shape[0]:
        raise SingularMatrixError("degree and support are defined for invertible matrices only")
    return g


def degree_of(ctx: FieldCtx, g) -> int:
    """rank(g - 1)."""
    g = _check_invertible(ctx, g)
    return rank(ctx, ctx.sub(g, identity(g.shape[0])))


def support_of(ctx: FieldCtx, g) -> int:
    """n minus the largest eigenspace dimension over the algebraic closure."""
    g = _check_invertible(ctx, g)
    n = g.shape[0]
    best = 0
    for f, _mult in factor_poly(ctx, char_poly(ctx, g)):
        kernel_dim = n - rank(ctx, poly_of_matrix(ctx, f, g))
        best = max(best, kernel_dim // polys.degree(f))
    return n - best


def _factorint(n: int) -> dict[int, int]:
    from sympy import factorint

    return {int(k): int(v) for k, v in factorint(n).items()}


def element_order(ctx: FieldCtx, g) -> int:
    """Exact multiplicative order of an invertible matrix."""
    g = _check_invertible(ctx, g)
    n = g.shape[0]
    eye = identity(n)
    factors = factor_poly(ctx, char_poly(ctx, g))
    exps: dict[int, int] = {}
    bound = 1
    for f, _ in factors:
        m = ctx.q ** polys.degree(f) - 1
        bound = math.lcm(bound, m)
    max_mult = max(m for _, m in factors)
    unip = 1
    while unip < max_mult:
        unip *= ctx.p
    bound *= unip
    for f, _ in factors:
        for r, k in _factorint(ctx.q ** polys.degree(f) - 1).items():
            exps[r] = max(exps.get(r, 0), k)
    if unip > 1:
        exps[ctx.p] = exps.get(ctx.p, 0) + round(math.log(unip, ctx.p))
    order = bound
    for r in exps:
        while order % r == 0 and np.array_equal(mat_pow(ctx, g, order // r), eye):
            order //= r
    return order


def centralizer_order_brute(ctx: FieldCtx, g, elements) -> int:
    """|{h in elements : gh = hg}| for an explicitly enumerated group."""
    g = as_array(g)
    elements = as_array(elements)
    count = 0
    for start in range(0, elements.shape[0], 4096):
        chunk = elements[start : start + 4096]
        gh = matmul(ctx, g[None], chunk)
        hg = matmul(ctx, chunk, g[None])
        count += int(np.sum(np.all(gh == hg, axis=(1, 2))))
    return count


# -- text formats ------------------------------------------------------------------

def format_matrix(a) -> str:
    return "\n".join(" ".join(str(int(x)) for x in row) for row in as_array(a))


def parse_matrix(text: str) -> np.ndarray:
    rows = [[int(t) for t in line.split()] for line in text.strip().splitlines() if line.strip()]
    if len({len(r) for r in rows}) > 1:
        raise ValueError("ragged matrix text")
    return np.array(rows, dtype=np.int64)


def block_diag(*blocks) -> np.ndarray:
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n), dtype=np.int64)
    i = 0
    for b in blocks:
        k = b.shape[0]
        out[i : i + k, i : i + k] = b
        i += k
    return out


def lcm_all(values) -> int:
    return reduce(math.lcm, values, 1)
