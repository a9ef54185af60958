"""Independent brute-force references used by the test-suite.

Nothing here imports the routines it checks. Field arithmetic comes from
FieldCtx scalar methods, which have their own table tests; everything else
(counting, spinor norms, group enumeration, BFS) is recomputed from scratch.
"""

from __future__ import annotations

import cmath
import itertools
import math
from collections import Counter, deque
from fractions import Fraction
from functools import lru_cache

import numpy as np


# -- vectors and quadrics ---------------------------------------------------------------------

def all_vecs(q: int, n: int) -> np.ndarray:
    """Row index = sum v_i q^i."""
    idx = np.arange(q**n, dtype=np.int64)
    return (idx[:, None] // (q ** np.arange(n, dtype=np.int64))[None, :]) % q


def q_value(space, v) -> int:
    """Q(v) from the defining coefficients, one scalar at a time."""
    ctx = space.ctx
    n = space.n
    acc = 0
    if space.kind.startswith("orthogonal"):
        for i in range(n):
            for j in range(i, n):
                c = int(space.quad[i, j])
                if c:
                    acc = ctx.sadd(acc, ctx.smul(c, ctx.smul(int(v[i]), int(v[j]))))
    elif space.kind == "unitary":
        for i in range(n):
            for j in range(n):
                c = int(space.gram[i, j])
                if c:
                    acc = ctx.sadd(acc, ctx.smul(ctx.smul(int(v[i]), c), ctx.stheta(int(v[j]))))
    return acc


def q_table(space) -> np.ndarray:
    return np.array([q_value(space, v) for v in all_vecs(space.ctx.q, space.n)], dtype=np.int64)


def targets(space) -> list[int]:
    ctx = space.ctx
    if space.kind.startswith("orthogonal"):
        return list(range(ctx.q))
    if space.kind == "unitary":
        return sorted(a for a in range(ctx.q) if ctx.stheta(a) == a)
    return [0]


def q0(space) -> int:
    if space.kind.startswith("orthogonal"):
        return space.ctx.q
    if space.kind == "unitary":
        return math.isqrt(space.ctx.q)
    return 1


def coset_points(space, v0, w) -> list[tuple]:
    ctx = space.ctx
    pts = []
    for coeffs in itertools.product(range(ctx.q), repeat=len(w)):
        v = [int(x) for x in v0]
        for c, row in zip(coeffs, w):
            for i in range(space.n):
                v[i] = ctx.sadd(v[i], ctx.smul(c, int(row[i])))
        pts.append(tuple(v))
    return pts


def count_on_coset(space, v0, w, target) -> int:
    return sum(1 for v in coset_points(space, v0, w) if q_value(space, v) == target)


# -- exhaustive coset census --------------------------------------------------------------------
#
# A coset of codimension s is {v : A v = b} for a reduced echelon s x n matrix A
# and b in F_q^s. Two routes:
#   "dual":    bucket every vector by (A v, Q(v)), one pass per A;
#   "fourier": count(A, b, t) = q^-s sum_c psi(-c.b) S_t(A^T c) with
#              S_t(lam) = sum_{Q(v) = t} psi(lam.v), psi = exp(2 pi i Tr(.)/p),
#              and S_t computed once by an F_p-DFT of the indicator of {Q = t}.

def _trace_table(ctx) -> np.ndarray:
    a = np.arange(ctx.q, dtype=np.int64)
    acc, cur = a.copy(), a
    for _ in range(ctx.e - 1):
        cur = ctx.power(cur, ctx.p)
        acc = ctx.add(acc, cur)
    assert acc.max() < ctx.p
    return acc


def echelon_batches(q: int, n: int, s: int):
    """Reduced echelon s x n matrices (full rank), grouped by pivot set; arrays (m, s, n)."""
    if s == 0:
        yield np.zeros((1, 0, n), dtype=np.int64)
        return
    for piv in itertools.combinations(range(n), s):
        slots = [(a, j) for a in range(s) for j in range(piv[a] + 1, n) if j not in piv]
        m = q ** len(slots)
        out = np.zeros((m, s, n), dtype=np.int16)
        for a in range(s):
            out[:, a, piv[a]] = 1
        vals = all_vecs(q, len(slots)).astype(np.int16) if slots else np.zeros((1, 0), dtype=np.int16)
        for col, (a, j) in enumerate(slots):
            out[:, a, j] = vals[:, col]
        yield out


def _combine(ctx, a_batch, coeffs):
    """Rows sum_k coeffs[k] a_batch[:, k] (coordinatewise field ops)."""
    m, s, n = a_batch.shape
    out = None
    for k in range(s):
        c = int(coeffs[k])
        if c == 0:
            continue
        row = a_batch[:, k].astype(np.int64)
        term = row if c == 1 else ctx.mul(c, row)
        out = term if out is None else ctx.add(out, term)
    return np.zeros((m, n), dtype=np.int64) if out is None else out


def _fourier_spectra(space, qtab, tgts, tr):
    ctx = space.ctx
    p, e, q, n = ctx.p, ctx.e, ctx.q, space.n
    spectra = {}
    # kappa(lam) digit (i, j) = Tr(lam_i * beta^j), beta^j encoded as p^j
    a = np.arange(q, dtype=np.int64)
    single = sum(tr[ctx.mul(a, p**j)] * p**j for j in range(e))
    lam = all_vecs(q, n)
    kappa = (single[lam] * (q ** np.arange(n, dtype=np.int64))[None, :]).sum(axis=1)
    shape = [p] * (n * e)
    for t in tgts:
        ind = (qtab == t).astype(float).reshape(shape)
        # ravel order puts digit 0 last; the DFT pairing is axis-symmetric so the index map is unchanged
        hat = np.conj(np.fft.fftn(ind)).ravel()
        spectra[t] = hat[kappa]
    return spectra


def census(space, max_codim: int = 2, route: str = "auto"):
    """Yield (s, counts) with counts[m, b, t_index] for every echelon A in a batch.

    "auto" takes the Fourier route when 1 <= s and 2s <= n (cheaper per A), else the dual pass.
    """
    for s, kind, data in _census(space, max_codim, route, dense=True):
        yield s, data


def census_extremes(space, max_codim: int = 2) -> dict:
    """codim -> (min count, max count, number of (coset, target) cells), over all cosets."""
    out = {}
    for s, kind, data in _census(space, max_codim, "auto", dense=False):
        lo, hi, cells = data
        plo, phi, pcells = out.get(s, (lo, hi, 0))
        out[s] = (min(plo, lo), max(phi, hi), pcells + cells)
    return out


def _census(space, max_codim, route, dense):
    ctx = space.ctx
    q, n = ctx.q, space.n
    tr = _trace_table(ctx)
    qtab = q_table(space)
    tgts = targets(space)
    nt = len(tgts)
    vecs = all_vecs(q, n)
    spectra = None
    omega = cmath.exp(2j * math.pi / ctx.p)
    tpos = np.full(q, -1, dtype=np.int64)
    tpos[tgts] = np.arange(nt)
    tidx = tpos[qtab]
    assert tidx.min() >= 0
    pw = q ** np.arange(n, dtype=np.int64)
    for s in range(0, min(max_codim, n) + 1):
        fourier = route == "fourier" or (route == "auto" and 1 <= s and 2 * s <= n)
        if fourier and spectra is None:
            spectra = _fourier_spectra(space, qtab, tgts, tr)
        cs = all_vecs(q, s)
        bs = cs
        if fourier:
            dots = np.zeros((len(bs), len(cs)), dtype=np.int64)
            for k in range(s):
                dots = ctx.add(dots, ctx.mul(bs[:, None, k], cs[None, :, k]))
            phase = omega ** (-(tr[dots].astype(float)))
        for batch in echelon_batches(q, n, s):
            if fourier:
                lam_idx = np.stack([_combine(ctx, batch, c) @ pw for c in cs], axis=1)
                out = np.empty((batch.shape[0], len(bs), nt), dtype=np.int64)
                for ti, t in enumerate(tgts):
                    vals = spectra[t][lam_idx]  # (m, |c|)
                    cnt = (vals @ phase.T) / q**s
                    rounded = np.rint(cnt.real)
                    assert np.all(np.abs(cnt - rounded) < 1e-6)
                    out[:, :, ti] = rounded.astype(np.int64)
                yield (s, "fourier", out) if dense else (s, "fourier", (int(out.min()), int(out.max()), out.size))
                continue
            cells = q**s * nt
            dense_out = np.zeros((batch.shape[0], q**s, nt), dtype=np.int64) if dense else None
            lo, hi = None, 0
            for mi, a in enumerate(batch.astype(np.int64)):
                key = np.zeros(len(vecs), dtype=np.int64)
                for k in range(s):
                    acc = np.zeros(len(vecs), dtype=np.int64)
                    for i in range(n):
                        if a[k, i]:
                            acc = ctx.add(acc, ctx.mul(a[k, i], vecs[:, i]))
                    key += acc * q**k
                if dense:
                    np.add.at(dense_out[mi], (key, tidx), 1)
                    continue
                _, cnt = np.unique(key * nt + tidx, return_counts=True)
                mlo = int(cnt.min()) if len(cnt) == cells else 0
                lo = mlo if lo is None else min(lo, mlo)
                hi = max(hi, int(cnt.max()))
            if dense:
                yield s, "dual", dense_out
            else:
                yield s, "dual", (lo, hi, cells * batch.shape[0])


def gaussian_binomial(n: int, k: int, q: int) -> int:
    num = den = 1
    for i in range(k):
        num *= q ** (n - i) - 1
        den *= q ** (k - i) - 1
    return num // den


# -- spinor norm (Zassenhaus) -------------------------------------------------------------------

def zassenhaus_spinor_bit(space, g) -> int:
    """Square class of det(-G(u_a, w_b)), u_a a basis of im(g - 1), (g - 1) w_b = u_b.

    With B = G/2 (so B(x, x) = Q(x)) this is Zassenhaus' discriminant with the
    normalization under which a reflection r_x has spinor norm Q(x).
    """
    import sympy

    ctx = space.ctx
    p = ctx.p
    assert ctx.e == 1 and p != 2
    n = space.n
    g = sympy.Matrix(np.asarray(g).tolist())
    h = (g - sympy.eye(n)).applyfunc(lambda x: x % p)
    cols = []
    basis = []
    for j in range(n):
        if _rank_mod(sympy.Matrix.hstack(*(cols + [h[:, j]])), p) > len(cols):
            cols.append(h[:, j])
            basis.append(j)
    m = len(cols)
    if m == 0:
        return 0
    # u_b = h e_{basis[b]}, so w_b = e_{basis[b]}
    gram = sympy.Matrix(np.asarray(space.gram).tolist())
    mat = sympy.zeros(m, m)
    for a in range(m):
        for b in range(m):
            wb = sympy.zeros(n, 1)
            wb[basis[b]] = 1
            mat[a, b] = (-(cols[a].T * gram * wb)[0, 0]) % p
    d = int(mat.det()) % p
    assert d != 0
    return 0 if pow(d, (p - 1) // 2, p) == 1 else 1


def _rank_mod(mat, p: int) -> int:
    rows = [[int(x) % p for x in mat.row(i)] for i in range(mat.rows)]
    rank = 0
    ncols = mat.cols
    for c in range(ncols):
        piv = next((r for r in range(rank, len(rows)) if rows[r][c]), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        inv = pow(rows[rank][c], p - 2, p)
        rows[rank] = [(x * inv) % p for x in rows[rank]]
        for r in range(len(rows)):
            if r != rank and rows[r][c]:
                f = rows[r][c]
                rows[r] = [(x - f * y) % p for x, y in zip(rows[r], rows[rank])]
        rank += 1
    return rank


# -- prime-field matrix groups in pure Python ----------------------------------------------------

def mat_mul_p(a, b, p):
    n = len(a)
    return tuple(tuple(sum(a[i][k] * b[k][j] for k in range(n)) % p for j in range(n)) for i in range(n))


def mat_inv_p(a, p):
    n = len(a)
    m = [list(row) + [int(i == j) for j in range(n)] for i, row in enumerate(a)]
    for c in range(n):
        piv = next(r for r in range(c, n) if m[r][c] % p)
        m[c], m[piv] = m[piv], m[c]
        inv = pow(m[c][c], p - 2, p)
        m[c] = [(x * inv) % p for x in m[c]]
        for r in range(n):
            if r != c and m[r][c]:
                f = m[r][c]
                m[r] = [(x - f * y) % p for x, y in zip(m[r], m[c])]
    return tuple(tuple(row[n:]) for row in m)


def det_p(a, p):
    n = len(a)
    m = [list(r) for r in a]
    d = 1
    for c in range(n):
        piv = next((r for r in range(c, n) if m[r][c] % p), None)
        if piv is None:
            return 0
        if piv != c:
            m[c], m[piv] = m[piv], m[c]
            d = -d
        d = d * m[c][c] % p
        inv = pow(m[c][c], p - 2, p)
        for r in range(c + 1, n):
            f = m[r][c] * inv % p
            m[r] = [(x - f * y) % p for x, y in zip(m[r], m[c])]
    return d % p


def all_matrices_p(n, p):
    for flat in itertools.product(range(p), repeat=n * n):
        yield tuple(tuple(flat[i * n:(i + 1) * n]) for i in range(n))


def _col(g, j):
    return [int(g[i][j]) for i in range(len(g))]


def preserves_form(space, g) -> bool:
    """Scalar check of the defining conditions on basis vectors and their pairwise sums."""
    ctx, n = space.ctx, space.n
    if space.kind.startswith("orthogonal"):
        eye = np.eye(n, dtype=np.int64)
        for i in range(n):
            for j in range(i, n):
                u = eye[i] if i == j else ctx.add(eye[i], eye[j])
                gu = [_dot(ctx, g[r], u) for r in range(n)]
                if q_value(space, gu) != q_value(space, u):
                    return False
        return True
    if space.kind == "linear":
        return True
    unitary = space.kind == "unitary"
    cols = [_col(g, j) for j in range(n)]
    for a in range(n):
        for b in range(n):
            acc = 0
            for i in range(n):
                for k in range(n):
                    c = int(space.gram[i, k])
                    if c:
                        y = ctx.stheta(cols[b][k]) if unitary else cols[b][k]
                        acc = ctx.sadd(acc, ctx.smul(ctx.smul(cols[a][i], c), y))
            if acc != int(space.gram[a, b]):
                return False
    return True


def brute_isometries(space) -> list[np.ndarray]:
    """Every invertible matrix preserving the form, by scanning all q^(n^2) matrices."""
    ctx, n = space.ctx, space.n
    out = []
    for flat in itertools.product(range(ctx.q), repeat=n * n):
        g = np.array(flat, dtype=np.int64).reshape(n, n)
        if _rank_field(ctx, g) == n and preserves_form(space, g):
            out.append(g)
    return out


def bfs_cayley(gens, p):
    """Sphere sizes of Cay(<S>, S u S^-1) from the identity; plain dict BFS."""
    n = len(gens[0])
    sym = [tuple(map(tuple, g)) for g in gens]
    sym += [mat_inv_p(g, p) for g in sym]
    ident = tuple(tuple(int(i == j) for j in range(n)) for i in range(n))
    dist = {ident: 0}
    queue = deque([ident])
    while queue:
        x = queue.popleft()
        for s in sym:
            y = mat_mul_p(x, s, p)
            if y not in dist:
                dist[y] = dist[x] + 1
                queue.append(y)
    diam = max(dist.values())
    spheres = [0] * (diam + 1)
    for d in dist.values():
        spheres[d] += 1
    return diam, spheres, len(dist)


# -- orbits and permutations ---------------------------------------------------------------------

def krylov_irreducible(ctx, g) -> bool:
    """No proper nonzero g-invariant subspace: every nonzero v spans everything under g."""
    n = g.shape[0]
    for v in all_vecs(ctx.q, n)[1:]:
        basis = [v]
        cur = v
        for _ in range(n - 1):
            cur = np.array([_dot(ctx, g[i], cur) for i in range(n)])
            basis.append(cur)
        if _rank_field(ctx, np.array(basis)) < n:
            return False
    return True


def _dot(ctx, a, b) -> int:
    acc = 0
    for x, y in zip(a, b):
        acc = ctx.sadd(acc, ctx.smul(int(x), int(y)))
    return acc


def _rank_field(ctx, rows) -> int:
    rows = [list(map(int, r)) for r in rows]
    rank = 0
    ncols = len(rows[0]) if rows else 0
    for c in range(ncols):
        piv = next((r for r in range(rank, len(rows)) if rows[r][c]), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        inv = ctx.sinv(rows[rank][c])
        rows[rank] = [ctx.smul(x, inv) for x in rows[rank]]
        for r in range(len(rows)):
            if r != rank and rows[r][c]:
                f = rows[r][c]
                rows[r] = [ctx.ssub(x, ctx.smul(f, y)) for x, y in zip(rows[r], rows[rank])]
        rank += 1
    return rank


def rank_field(ctx, rows) -> int:
    return _rank_field(ctx, rows)


def necklace_count(q: int, d: int) -> int:
    """Monic irreducibles of degree d over F_q by counting aperiodic necklaces."""
    total = 0
    for k in range(1, d + 1):
        if d % k == 0:
            total += _mu(d // k) * q**k
    return total // d


def _mu(n: int) -> int:
    res, m, f = 1, n, 2
    while f * f <= m:
        if m % f == 0:
            m //= f
            if m % f == 0:
                return 0
            res = -res
        f += 1
    return -res if m > 1 else res


def cycle_type_brute(perm) -> tuple:
    n = len(perm)
    seen = [False] * n
    out = []
    for s in range(n):
        if not seen[s]:
            c = 0
            x = s
            while not seen[x]:
                seen[x] = True
                x = perm[x]
                c += 1
            out.append(c)
    return tuple(sorted(out, reverse=True))


def chi_square_pvalue(counts, expected) -> float:
    from scipy.stats import chisquare

    return float(chisquare(counts, expected).pvalue)


# -- symmetric group class counting ----------------------------------------------------------------

@lru_cache(maxsize=None)
def counts_by_type(n):
    """Number of permutations of S_n per cycle type, by the length c of the cycle through the last point."""
    if n == 0:
        return {(): 1}
    out = Counter()
    for c in range(1, n + 1):
        ways = math.perm(n - 1, c - 1)
        for t, m in counts_by_type(n - c).items():
            out[tuple(sorted(t + (c,), reverse=True))] += ways * m
    return dict(out)


def density_and_sign_from_counts(n, types):
    counts = counts_by_type(n)
    total = math.factorial(n)
    types = {tuple(sorted(t, reverse=True)) for t in types}
    dens = Fraction(sum(counts.get(t, 0) for t in types), total)
    sg = Fraction(sum(counts.get(t, 0) * (-1) ** (n - len(t)) for t in types), total)
    return dens, sg
