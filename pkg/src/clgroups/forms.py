"""Formed spaces, quadric point counting and sampling, Witt extension, abelian invariants.

Conventions
-----------
* The form is f(u, v) = u^T G conj(v) where conj is theta in the unitary
  case and the identity otherwise. An isometry g satisfies
  g^T G conj(g) = G and, for orthogonal kinds, Q(g v) = Q(v).
* Orthogonal Q is stored as an upper-triangular coefficient matrix C with
  Q(v) = sum_{i<=j} C_ij v_i v_j; its polar form is G = C + C^T.
* Standard spaces list hyperbolic pairs first, as coordinates
  (e_1, f_1, e_2, f_2, ...), with f(e_i, f_i) = 1; the anisotropic part
  (dimension <= 2) occupies the last coordinates.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field

import numpy as np

from . import linalg as la
from .gf import FieldCtx, field_of_size

__all__ = [
    "KINDS",
    "FormedSpace",
    "FormError",
    "standard_space",
    "count_quadric_points",
    "enumerate_cosets",
    "quadric_bound",
    "quadric_targets",
    "sample_quadric_point",
    "extend_isometry",
    "abelian_invariant",
    "witt_decompose",
    "reflection",
    "all_vectors",
]

KINDS = ("linear", "symplectic", "orthogonal_plus", "orthogonal_minus", "orthogonal_odd", "unitary")
ORTHOGONAL = ("orthogonal_plus", "orthogonal_minus", "orthogonal_odd")

_ENUM_LIMIT = 8192  # cosets up to this many points are enumerated outright


class FormError(ValueError):
    """Incompatible parameters, violated preconditions, or non-isometries."""


@dataclass(frozen=True, eq=False)
class FormedSpace:
    ctx: FieldCtx
    n: int
    kind: str
    gram: np.ndarray
    quad: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- basic structure -----------------------------------------------------
    @property
    def is_orthogonal(self) -> bool:
        return self.kind in ORTHOGONAL

    @property
    def is_unitary(self) -> bool:
        return self.kind == "unitary"

    @property
    def has_quadric(self) -> bool:
        return self.is_orthogonal or self.is_unitary

    @property
    def q0(self) -> int:
        if self.is_orthogonal:
            return self.ctx.q
        if self.is_unitary:
            return self.ctx.q0
        return 1

    @property
    def s(self) -> int:
        """Minimal degree of a nontrivial element of the derived group."""
        return 2 if self.is_orthogonal else 1

    @property
    def descriptor(self) -> str:
        tag = {
            "linear": "GL",
            "symplectic": "Sp",
            "orthogonal_plus": "GO+",
            "orthogonal_minus": "GO-",
            "orthogonal_odd": "GO",
            "unitary": "GU",
        }[self.kind]
        return f"{tag}({self.n},{self.ctx.q})"

    def conj(self, a):
        return self.ctx.theta(a) if self.is_unitary else a

    def scalars(self) -> np.ndarray:
        """The field over which Q takes values and cosets are parametrized."""
        if self.is_unitary:
            return self._cached("subfield", self.ctx.subfield_elements)
        return np.arange(self.ctx.q, dtype=np.int64)

    def _cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    # -- form evaluation -------------------------------------------------------
    def form(self, u, v) -> np.ndarray:
        """Matrix [f(u_a, v_b)] for row stacks u, v (1-d inputs give scalars)."""
        u = la.as_array(u)
        v = la.as_array(v)
        uu = u[None] if u.ndim == 1 else u
        vv = v[None] if v.ndim == 1 else v
        out = la.matmul(self.ctx, uu, la.matmul(self.ctx, self.gram, self.conj(vv).T))
        if u.ndim == 1 and v.ndim == 1:
            return int(out[0, 0])
        if u.ndim == 1:
            return out[0]
        if v.ndim == 1:
            return out[:, 0]
        return out

    def quad_value(self, x):
        """Q on vectors (last axis). Zero for linear and symplectic kinds."""
        x = la.as_array(x)
        ctx = self.ctx
        out = np.zeros(x.shape[:-1], dtype=np.int64)
        if self.is_orthogonal:
            terms = self._cached("quad_terms", lambda: [(i, j, int(self.quad[i, j])) for i, j in zip(*np.nonzero(self.quad))])
            for i, j, c in terms:
                out = ctx.add(out, ctx.mul(c, ctx.mul(x[..., i], x[..., j])))
        elif self.is_unitary:
            terms = self._cached("herm_terms", lambda: [(i, j, int(self.gram[i, j])) for i, j in zip(*np.nonzero(self.gram))])
            for i, j, c in terms:
                out = ctx.add(out, ctx.mul(ctx.mul(x[..., i], c), ctx.theta(x[..., j])))
        return out if out.ndim else int(out)

    def polar(self, u, v):
        """Polar form of Q: Q(u+v) - Q(u) - Q(v)."""
        if self.is_unitary:
            a = self.form(u, v)
            b = self.form(v, u)
            return self.ctx.add(a, np.swapaxes(b, -1, -2) if np.ndim(b) == 2 else b)
        return self.form(u, v)

    def is_isometry(self, g) -> bool:
        g = la.as_array(g)
        ctx = self.ctx
        if g.shape != (self.n, self.n) or la.rank(ctx, g) < self.n:
            return False
        if self.kind == "linear":
            return True
        lhs = la.matmul(ctx, g.T, la.matmul(ctx, self.gram, self.conj(g)))
        if not np.array_equal(lhs, self.gram):
            return False
        if self.is_orthogonal and ctx.p == 2:
            eye = la.identity(self.n)
            return np.array_equal(self.quad_value(g.T), self.quad_value(eye))
        return True

    def isometry_mask(self, gs) -> np.ndarray:
        """Vectorized is_isometry over a stack of matrices (invertibility not checked)."""
        gs = la.as_array(gs)
        ctx = self.ctx
        if self.kind == "linear":
            return np.ones(gs.shape[0], dtype=bool)
        lhs = la.matmul(ctx, np.swapaxes(gs, 1, 2), la.matmul(ctx, self.gram[None], self.conj(gs)))
        ok = np.all(lhs == self.gram[None], axis=(1, 2))
        if self.is_orthogonal and ctx.p == 2:
            qs = self.quad_value(np.swapaxes(gs, 1, 2))
            ok &= np.all(qs == self.quad_value(la.identity(self.n))[None], axis=1)
        return ok

    def text_dump(self) -> str:
        parts = [f"# {self.descriptor} {self.kind} over {self.ctx.descriptor}", "gram:", la.format_matrix(self.gram)]
        if self.quad is not None:
            parts += ["quad:", la.format_matrix(self.quad)]
        return "\n".join(parts)


# -- standard spaces -------------------------------------------------------------

def _anisotropic_constant(ctx: FieldCtx) -> int:
    """Least a such that t^2 + t + a is irreducible."""
    a = np.arange(ctx.q, dtype=np.int64)
    for c in range(ctx.q):
        vals = ctx.add(ctx.add(ctx.mul(a, a), a), c)
        if not np.any(vals == 0):
            return c
    raise FormError("no anisotropic plane found")  # pragma: no cover


@functools.lru_cache(maxsize=None)
def standard_space(kind: str, n: int, ctx: FieldCtx) -> FormedSpace:
    """The standard model of the given kind: hyperbolic pairs then the anisotropic part."""
    if kind not in KINDS:
        raise FormError(f"unknown kind {kind!r}; expected one of {KINDS}")
    if n < 1:
        raise FormError("dimension must be positive")
    q = ctx.q
    gram = np.zeros((n, n), dtype=np.int64)
    quad = None
    if kind == "linear":
        return FormedSpace(ctx, n, kind, gram)
    if kind == "symplectic":
        if n % 2:
            raise FormError("symplectic spaces have even dimension")
        for i in range(0, n, 2):
            gram[i, i + 1] = 1
            gram[i + 1, i] = ctx.sneg(1)
        return FormedSpace(ctx, n, kind, gram)
    if kind == "unitary":
        if not ctx.theta_defined:
            raise FormError(f"unitary groups need a square field size, got q={q}")
        for i in range(0, n - 1, 2):
            gram[i, i + 1] = gram[i + 1, i] = 1
        if n % 2:
            gram[n - 1, n - 1] = 1
        return FormedSpace(ctx, n, kind, gram)
    quad = np.zeros((n, n), dtype=np.int64)
    if kind == "orthogonal_plus":
        if n % 2:
            raise FormError("orthogonal_plus needs even dimension")
        hyp = n // 2
    elif kind == "orthogonal_minus":
        if n % 2:
            raise FormError("orthogonal_minus needs even dimension")
        hyp = n // 2 - 1
        a = _anisotropic_constant(ctx)
        quad[n - 2, n - 2] = 1
        quad[n - 2, n - 1] = 1
        quad[n - 1, n - 1] = a
    else:
        if n % 2 == 0 or ctx.p == 2:
            raise FormError("orthogonal_odd needs odd dimension and odd characteristic")
        hyp = n // 2
        quad[n - 1, n - 1] = 1
    for i in range(hyp):
        quad[2 * i, 2 * i + 1] = 1
    gram = ctx.add(quad, quad.T)
    return FormedSpace(ctx, n, kind, gram, quad)


_TAGS = {"GL": "linear", "Sp": "symplectic", "GO+": "orthogonal_plus", "GO-": "orthogonal_minus", "GO": "orthogonal_odd", "GU": "unitary"}


def parse_space(text: str) -> FormedSpace:
    """Parse "GL(n,q)", "Sp(n,q)", "GO+(n,q)", "GO-(n,q)", "GO(n,q)" or "GU(n,q)"."""
    t = text.strip().replace(" ", "")
    head, _, rest = t.partition("(")
    if head not in _TAGS or not rest.endswith(")"):
        raise FormError(f"cannot parse space descriptor {text!r}; grammar: KIND(n,q) with KIND in {sorted(_TAGS)}")
    try:
        n_s, q_s = rest[:-1].split(",")
        n, q = int(n_s), int(q_s)
    except ValueError as exc:
        raise FormError(f"cannot parse space descriptor {text!r}; grammar: KIND(n,q)") from exc
    return standard_space(_TAGS[head], n, field_of_size(q))


# -- vector enumeration ------------------------------------------------------------------

@functools.lru_cache(maxsize=64)
def all_tuples(s: int, m: int) -> np.ndarray:
    """All index tuples in [0, s)^m, first coordinate fastest."""
    if m == 0:
        return np.zeros((1, 0), dtype=np.int64)
    idx = np.arange(s**m, dtype=np.int64)
    out = (idx[:, None] // (s ** np.arange(m, dtype=np.int64))[None, :]) % s
    out.setflags(write=False)
    return out


def all_vectors(ctx: FieldCtx, n: int) -> np.ndarray:
    """Every vector of F_q^n; row index = sum v_i q^i."""
    return all_tuples(ctx.q, n)


def encode_vectors(ctx: FieldCtx, x) -> np.ndarray:
    x = la.as_array(x)
    return x @ (ctx.q ** np.arange(x.shape[-1], dtype=np.int64))


# -- quadratic polynomial value counts -------------------------------------------------

def _randbelow(rng, n: int) -> int:
    if n <= 0:
        raise ValueError("empty range")
    if n < (1 << 62):
        return int(rng.integers(n))
    bits = n.bit_length()
    while True:
        words = rng.integers(0, 1 << 32, size=(bits + 31) // 32)
        x = 0
        for w in words:
            x = (x << 32) | int(w)
        x >>= (len(words) * 32 - bits)
        if x < n:
            return x


class _QuadPoly:
    """P(t) = sum_{i<=j} A_ij t_i t_j + mu . t + c0 over the scalar field S."""

    def __init__(self, ctx: FieldCtx, scal: np.ndarray, a: np.ndarray, mu: np.ndarray, c0: int):
        self.ctx = ctx
        self.scal = scal
        self.a = a
        self.mu = mu
        self.c0 = int(c0)

    @property
    def m(self) -> int:
        return self.mu.shape[0]

    def values(self, t: np.ndarray) -> np.ndarray:
        """P on rows of t (field elements)."""
        ctx = self.ctx
        out = np.full(t.shape[0], self.c0, dtype=np.int64)
        for i, j in zip(*np.nonzero(self.a)):
            out = ctx.add(out, ctx.mul(int(self.a[i, j]), ctx.mul(t[:, i], t[:, j])))
        for j in np.flatnonzero(self.mu):
            out = ctx.add(out, ctx.mul(int(self.mu[j]), t[:, j]))
        return out

    def fix_first(self, a_val: int) -> "_QuadPoly":
        ctx = self.ctx
        a00 = int(self.a[0, 0])
        c0 = ctx.sadd(ctx.sadd(self.c0, ctx.smul(int(self.mu[0]), a_val)), ctx.smul(a00, ctx.smul(a_val, a_val)))
        mu = ctx.add(self.mu[1:], ctx.mul(self.a[0, 1:], a_val))
        return _QuadPoly(ctx, self.scal, self.a[1:, 1:], mu, c0)

    # value histogram by orthogonal splitting of the polar form
    def histogram(self) -> np.ndarray:
        ctx, scal = self.ctx, self.scal
        m, s = self.m, len(scal)
        big = s**m >= (1 << 62)
        dtype = object if big else np.int64
        a = self.a
        bmat = ctx.add(a, a.T)  # polar matrix; diagonal is 2 A_ii

        def bf(x, y):
            return int(la.matmul(ctx, x, la.matmul(ctx, bmat, y)))

        rem = [row for row in la.identity(m)]
        pieces: list[list[np.ndarray]] = []
        odd = ctx.p != 2
        while rem:
            if odd:
                u = drop = None
                for i, b in enumerate(rem):
                    if bf(b, b):
                        u, drop = b, i
                        break
                if u is None:
                    for i, j in itertools.combinations(range(len(rem)), 2):
                        if bf(rem[i], rem[j]):
                            u, drop = ctx.add(rem[i], rem[j]), i
                            break
                if u is None:
                    break
                buu_inv = ctx.sinv(bf(u, u))
                rem = [
                    ctx.sub(b, ctx.mul(u, ctx.smul(bf(b, u), buu_inv)))
                    for k, b in enumerate(rem)
                    if k != drop
                ]
                pieces.append([u])
            else:
                pair = next(((i, j) for i, j in itertools.combinations(range(len(rem)), 2) if bf(rem[i], rem[j])), None)
                if pair is None:
                    break
                i, j = pair
                x = rem[i]
                y = ctx.mul(rem[j], ctx.sinv(bf(x, rem[j])))
                rem = [
                    ctx.add(ctx.add(b, ctx.mul(x, bf(b, y))), ctx.mul(y, bf(b, x)))
                    for k, b in enumerate(rem)
                    if k not in (i, j)
                ]
                pieces.append([x, y])

        hist = np.zeros(ctx.q, dtype=dtype)
        hist[0] = 1
        zero_c = _QuadPoly(ctx, scal, a, self.mu, 0)
        for piece in pieces:
            basis = np.array(piece)
            coeff = scal[all_tuples(s, len(piece))]
            pts = la.matmul(ctx, coeff, basis)
            vals = zero_c.values(pts)
            h = np.bincount(vals, minlength=ctx.q).astype(dtype)
            hist = _convolve(ctx, scal, hist, h)
        r = len(rem)
        if r:
            hist = _convolve(ctx, scal, hist, self._radical_hist(rem, dtype))
        if self.c0:
            shifted = np.zeros_like(hist)
            shifted[ctx.add(np.arange(ctx.q), self.c0)] = hist
            hist = shifted
        return hist

    def _radical_hist(self, rem, dtype) -> np.ndarray:
        ctx, scal = self.ctx, self.scal
        s, r = len(scal), len(rem)
        rad = np.array(rem)
        lin = la.matmul(ctx, rad, self.mu)
        h = np.zeros(ctx.q, dtype=dtype)
        if ctx.p != 2:
            if np.any(lin):
                h[scal] = s ** (r - 1)
            else:
                h[0] = s**r
            return h
        zero = _QuadPoly(ctx, scal, self.a, np.zeros_like(self.mu), 0)
        sq = ctx.sqrt_char2(zero.values(rad))
        both = np.vstack([sq, lin])
        rk = la.rank(ctx, both)
        if rk == 0:
            h[0] = s**r
        elif rk == 2:
            alpha, beta = np.meshgrid(scal, scal, indexing="ij")
            vals = ctx.add(ctx.mul(alpha, alpha), beta).ravel()
            np.add.at(h, vals, s ** (r - 2)) if dtype is not object else _add_at_obj(h, vals, s ** (r - 2))
        elif not np.any(sq):
            h[scal] = s ** (r - 1)
        else:
            k = int(np.flatnonzero(sq)[0])
            kappa = ctx.smul(int(lin[k]), ctx.sinv(int(sq[k])))
            vals = ctx.add(ctx.mul(scal, scal), ctx.mul(scal, kappa))
            np.add.at(h, vals, s ** (r - 1)) if dtype is not object else _add_at_obj(h, vals, s ** (r - 1))
        return h


def _add_at_obj(h, idx, val):
    for i in np.asarray(idx).tolist():
        h[i] += val


def _convolve(ctx: FieldCtx, scal: np.ndarray, h1: np.ndarray, h2: np.ndarray) -> np.ndarray:
    """Additive convolution of histograms supported on the scalar field."""
    out = np.zeros_like(h1)
    h2s = h2[scal]
    for x in np.flatnonzero(h1):
        tgt = ctx.add(int(x), scal)
        if out.dtype == object:
            for t_, v in zip(tgt.tolist(), h2s.tolist()):
                out[t_] += h1[x] * v
        else:
            out[tgt] += h1[x] * h2s
    return out


def _coset_poly(space: FormedSpace, v0, w) -> tuple[_QuadPoly, np.ndarray]:
    """Q restricted to v0 + span(w) as a polynomial over the scalar field, plus its spanning set."""
    ctx = space.ctx
    v0 = la.as_array(v0)
    w = la.as_array(w).reshape(-1, space.n)
    scal = space.scalars()
    if space.is_unitary:
        w = np.vstack([w, ctx.mul(w, ctx.gen)]) if w.shape[0] else w
    m = w.shape[0]
    if not space.has_quadric:
        return _QuadPoly(ctx, scal, np.zeros((m, m), dtype=np.int64), np.zeros(m, dtype=np.int64), 0), w
    if m == 0:
        return _QuadPoly(ctx, scal, np.zeros((0, 0), dtype=np.int64), np.zeros(0, dtype=np.int64), space.quad_value(v0)), w
    if space.is_orthogonal:
        a = np.triu(space.form(w, w), 1)
        a[np.diag_indices(m)] = space.quad_value(w)
        mu = space.form(v0, w)
    else:
        f = space.form(w, w)
        a = np.triu(ctx.add(f, f.T), 1)
        a[np.diag_indices(m)] = np.diag(f)
        mu = ctx.add(space.form(v0, w), space.form(w, v0))
    return _QuadPoly(ctx, scal, a, mu, space.quad_value(v0)), w


def _coset_size(space: FormedSpace, m: int) -> int:
    return len(space.scalars()) ** (2 * m if space.is_unitary else m)


def count_quadric_points(space: FormedSpace, affine, target: int) -> int:
    """|{v in v0 + span(W) : Q(v) = target}| for independent rows W."""
    v0, w = affine
    w = la.as_array(w).reshape(-1, space.n)
    if not space.has_quadric:
        return space.ctx.q ** w.shape[0] if int(target) == 0 else 0
    poly, _ = _coset_poly(space, v0, w)
    if poly.m == 0:
        return int(poly.c0 == int(target))
    return int(poly.histogram()[int(target)])


def enumerate_cosets(space: FormedSpace, max_codim: int):
    """Every affine coset v0 + W with codim W <= max_codim, as (codim, v0, W).

    W runs over reduced echelon bases; v0 runs over vectors supported on the
    non-pivot coordinates, one representative per coset.
    """
    ctx, n = space.ctx, space.n
    for codim in range(0, min(max_codim, n) + 1):
        dim = n - codim
        for pivots in itertools.combinations(range(n), dim):
            others = [j for j in range(n) if j not in pivots]
            slots = [(a, j) for a, i in enumerate(pivots) for j in range(i + 1, n) if j not in pivots]
            frees = all_tuples(ctx.q, len(slots))
            shifts = all_tuples(ctx.q, codim)
            for vals in frees:
                w = np.zeros((dim, n), dtype=np.int64)
                for a, i in enumerate(pivots):
                    w[a, i] = 1
                for (a, j), x in zip(slots, vals):
                    w[a, j] = x
                for sh in shifts:
                    v0 = np.zeros(n, dtype=np.int64)
                    v0[others] = sh
                    yield codim, v0, w


def quadric_targets(space: FormedSpace) -> np.ndarray:
    """Values Q can take: F_q (orthogonal), the fixed field (unitary), {0} otherwise."""
    if not space.has_quadric:
        return np.zeros(1, dtype=np.int64)
    return space.scalars()


def quadric_bound(space: FormedSpace, codim: int) -> tuple[float, float]:
    """The window q^{n-s}/q0 +- q^{n/2} for a coset of codimension s."""
    q, n = space.ctx.q, space.n
    centre = q ** (n - codim) / space.q0
    half = q ** (n / 2)
    return centre - half, centre + half


def _sample_poly(poly: _QuadPoly, target: int, rng) -> np.ndarray | None:
    ctx, scal = poly.ctx, poly.scal
    s = len(scal)
    chosen: list[int] = []
    while True:
        m = poly.m
        if s**m <= _ENUM_LIMIT:
            t = scal[all_tuples(s, m)]
            hit = np.flatnonzero(poly.values(t) == target)
            if hit.size == 0:
                return None
            pick = t[hit[_randbelow(rng, hit.size)]]
            return np.array(chosen + pick.tolist(), dtype=np.int64)
        counts = [int(poly.fix_first(int(a)).histogram()[target]) for a in scal]
        total = sum(counts)
        if total == 0:
            return None
        x = _randbelow(rng, total)
        for a, c in zip(scal, counts):
            if x < c:
                break
            x -= c
        chosen.append(int(a))
        poly = poly.fix_first(int(a))


def sample_quadric_point(space: FormedSpace, affine, target: int, rng) -> np.ndarray | None:
    """Exactly uniform point of {v in v0 + span(W) : Q(v) = target}, or None if empty."""
    ctx = space.ctx
    v0, w = affine
    v0 = la.as_array(v0)
    w = la.as_array(w).reshape(-1, space.n)
    if not space.has_quadric:
        if int(target) != 0:
            return None
        t = rng.integers(0, ctx.q, size=w.shape[0])
        return ctx.add(v0, la.matmul(ctx, t, w)) if w.shape[0] else v0.copy()
    poly, span = _coset_poly(space, v0, w)
    t = _sample_poly(poly, int(target), rng)
    if t is None:
        return None
    if span.shape[0] == 0:
        return v0.copy()
    return ctx.add(v0, la.matmul(ctx, t, span))


def enumerate_quadric_points(space: FormedSpace, affine, target: int) -> np.ndarray:
    """All solutions as rows (only for small cosets)."""
    ctx = space.ctx
    v0, w = affine
    v0 = la.as_array(v0)
    w = la.as_array(w).reshape(-1, space.n)
    poly, span = _coset_poly(space, v0, w)
    scal = space.scalars()
    if len(scal) ** poly.m > 1 << 20:
        raise FormError("coset too large to enumerate")
    t = scal[all_tuples(len(scal), poly.m)]
    pts = ctx.add(v0[None, :], la.matmul(ctx, t, span)) if span.shape[0] else v0[None, :].copy()
    if not space.has_quadric:
        return pts if int(target) == 0 else pts[:0]
    return pts[space.quad_value(pts) == int(target)]


# -- Witt extension -----------------------------------------------------------------------

def _span_points(ctx: FieldCtx, rows: np.ndarray) -> np.ndarray:
    k = rows.shape[0]
    coeff = all_tuples(ctx.q, k)
    return la.matmul(ctx, coeff, rows)


def _image_constraints(space: FormedSpace, dom: list, img: list, u: np.ndarray):
    """Rows C and rhs so that C x = rhs encodes f(x, img_i) = f(u, dom_i)."""
    ctx = space.ctx
    if not img or space.kind == "linear":
        return np.zeros((0, space.n), dtype=np.int64), np.zeros(0, dtype=np.int64)
    imgs = np.array(img)
    rows = la.matmul(ctx, space.gram, space.conj(imgs).T).T
    rhs = space.form(u, np.array(dom))
    return rows, la.as_array(rhs)


def sample_image(space: FormedSpace, dom: list, img: list, u, rng) -> np.ndarray:
    """Uniform x with dom -> img, u -> x an isometry of subspaces (x outside span(img)).

    This is the exact conditional law of g u for uniform g in the full
    isometry group given g dom_i = img_i.
    """
    ctx = space.ctx
    u = la.as_array(u)
    rows, rhs = _image_constraints(space, dom, img, u)
    target = space.quad_value(u) if space.has_quadric else 0
    sol = la.solve_affine(ctx, rows, rhs)
    if sol is None:
        raise FormError("isometry constraints are inconsistent")
    imgs = np.array(img) if img else np.zeros((0, space.n), dtype=np.int64)
    if _coset_size(space, sol.dim) <= _ENUM_LIMIT:
        pts = enumerate_quadric_points(space, (sol.particular, sol.kernel), target)
        if pts.shape[0]:
            excl = set(encode_vectors(ctx, _span_points(ctx, imgs)).tolist()) if imgs.shape[0] else {0}
            keep = np.array([c not in excl for c in encode_vectors(ctx, pts).tolist()], dtype=bool)
            pts = pts[keep]
        if pts.shape[0] == 0:
            raise FormError("no admissible image: Witt conditions violated")
        return pts[_randbelow(rng, pts.shape[0])]
    for _ in range(10_000):
        x = sample_quadric_point(space, (sol.particular, sol.kernel), target, rng)
        if x is None:
            raise FormError("no admissible image: Witt conditions violated")
        if (np.any(x) and not imgs.shape[0]) or (imgs.shape[0] and not la.in_span(ctx, imgs, x)):
            return x
    raise FormError("could not escape the excluded subspace")  # pragma: no cover


def _check_witt(space: FormedSpace, us: np.ndarray, vs: np.ndarray) -> None:
    ctx = space.ctx
    if us.shape != vs.shape:
        raise FormError("pair lists differ in shape")
    if la.rank(ctx, us) < us.shape[0]:
        raise FormError("source vectors must be linearly independent")
    if space.kind != "linear":
        if not np.array_equal(space.form(us, us), space.form(vs, vs)):
            raise FormError("pairs do not preserve the form")
    if space.has_quadric and not np.array_equal(space.quad_value(us), space.quad_value(vs)):
        raise FormError("pairs do not preserve the quadratic form")


def extend_isometry(space: FormedSpace, pairs, rng, special: bool = False, max_tries: int = 2000) -> np.ndarray:
    """A random isometry g with g u_i = v_i, uniform over all such g in the full isometry group.

    With special=True the result also has trivial abelian invariant: a uniform
    extension is multiplied on the right by an isometry fixing every u_i that
    cancels its invariant, which maps each invariant fibre of the extension
    coset bijectively onto the trivial one. The pointwise stabilizer of
    U = <u_i> is unipotent times the isometry group of a nondegenerate
    complement Y of dimension n - k - dim rad U. It meets every invariant
    fibre when dim Y >= 2 (orthogonal) or >= 1 (unitary), or in
    characteristic 2 when Q is nonzero on rad U. Otherwise the coset can miss
    the trivial fibre even for k <= n - 2, and FormError is raised.
    """
    ctx, n = space.ctx, space.n
    pairs = list(pairs)
    us = np.array([p[0] for p in pairs], dtype=np.int64).reshape(-1, n)
    vs = np.array([p[1] for p in pairs], dtype=np.int64).reshape(-1, n)
    _check_witt(space, us, vs)
    k = us.shape[0]
    if special and k > n - 2 and space.kind != "symplectic":
        raise FormError("trivial-invariant extension needs at most n-2 pairs")
    # unit vectors off the pivot columns of us complete it to a basis
    pivots = set(la.rref(ctx, us)[1]) if k else set()
    eye = la.identity(n)
    basis = list(us) + [eye[i] for i in range(n) if i not in pivots]
    dom_inv = la.inverse(ctx, np.array(basis).T)
    dom, img = list(us), list(vs)
    for u in basis[k:]:
        img.append(sample_image(space, dom, img, u, rng))
        dom.append(u)
    img = np.array(img)
    if not special or space.kind == "symplectic":
        return la.matmul(ctx, img.T, dom_inv)
    if space.kind == "linear":
        # rescale the image of the first completing vector
        g = la.matmul(ctx, img.T, dom_inv)
        img[k] = ctx.mul(img[k], ctx.sinv(la.det(ctx, g)))
        return la.matmul(ctx, img.T, dom_inv)
    g = la.matmul(ctx, img.T, dom_inv)
    want = invariant_inv(space, _invariant_unchecked(space, g))
    if want == invariant_identity(space):
        return g
    free_dim = _stabilizer_free_dim(space, us)
    guaranteed = free_dim >= (2 if space.is_orthogonal else 1)
    fix = _stabilizer_element(space, us, want, rng, max_tries if guaranteed else 64)
    if fix is None:
        if guaranteed:
            raise FormError("failed to reach the trivial invariant fibre")  # pragma: no cover
        raise FormError(f"no trivial-invariant extension: the sources leave a nondegenerate complement of "
                        f"dimension {free_dim}, too small to adjust the invariant")
    return la.matmul(ctx, g, fix)


def _stabilizer_free_dim(space: FormedSpace, us: np.ndarray) -> int:
    """dim Y for the pointwise stabilizer of <us>; in characteristic 2 orthogonal, at least 2 when Q is nonzero on rad."""
    ctx, n = space.ctx, space.n
    k = us.shape[0]
    gram = space.form(us, us)
    free = n - k - (k - la.rank(ctx, gram))
    if space.is_orthogonal and ctx.p == 2 and free < 2 and k:
        # a nonsingular radical vector y gives the transvection in y, which fixes U and flips Dickson
        rad = la.matmul(ctx, la.nullspace(ctx, gram).reshape(-1, k), us)
        if len(rad) and space.quad_value(rad).any():
            free = 2
    return free


def _stabilizer_element(space: FormedSpace, us: np.ndarray, want: tuple, rng, draws: int) -> np.ndarray | None:
    """An isometry fixing every row of us with abelian invariant `want`, built from at most two
    (quasi-)reflections in random vectors of <us>-perp; None if the draws turn none up."""
    ctx, n = space.ctx, space.n
    if us.shape[0]:
        perp = space.conj(la.nullspace(ctx, la.matmul(ctx, us, space.gram)))
    else:
        perp = la.identity(n)
    if space.is_unitary:
        if len(perp) == 0:
            return None
        for _ in range(draws):
            y = la.matmul(ctx, rng.integers(0, ctx.q, size=len(perp)), perp)
            if space.form(y, y) != 0:
                return quasi_reflection(space, y, want[0])
        return None
    seen: dict[tuple, np.ndarray] = {}
    for _ in range(draws):
        if len(perp) == 0:
            return None
        y = la.matmul(ctx, rng.integers(0, ctx.q, size=len(perp)), perp)
        qy = space.quad_value(y)
        if qy == 0:
            continue
        r = reflection(space, y)
        # a reflection has det -1 and spinor class Q(y); in characteristic 2, Dickson bit 1
        a = (1,) if ctx.p == 2 else (1, 0 if ctx.is_square(qy) else 1)
        if a == want:
            return r
        for b, t in seen.items():
            if invariant_mul(space, b, a) == want:
                return la.matmul(ctx, t, r)
        seen.setdefault(a, r)
    return None


# -- Witt decomposition --------------------------------------------------------------------

def _is_standard(space: FormedSpace) -> bool:
    return space._cache.get("standard", False) or space is standard_space(space.kind, space.n, space.ctx)


def witt_decompose(space: FormedSpace, rng=None) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Hyperbolic pairs (e, f) with f(e, f) = 1 (Q(e) = Q(f) = 0 when relevant) and an anisotropic basis."""
    ctx, n = space.ctx, space.n
    if space.kind == "linear":
        raise FormError("the zero form has no Witt decomposition")
    eye = la.identity(n)
    if _is_standard(space):
        hyp = {"symplectic": n // 2, "unitary": n // 2, "orthogonal_plus": n // 2, "orthogonal_minus": n // 2 - 1, "orthogonal_odd": n // 2}[space.kind]
        pairs = [(eye[2 * i], eye[2 * i + 1]) for i in range(hyp)]
        return pairs, eye[2 * hyp :]
    rng = rng or np.random.default_rng(0)
    pairs = []
    cur = eye.copy()
    while cur.shape[0]:
        v = _find_singular(space, cur, rng)
        if v is None:
            break
        # f(x, v) = c, linear in the coordinates of x over cur
        want = ctx.sneg(1) if space.kind == "symplectic" else 1
        col = space.form(cur, v)
        sol = la.solve_affine(ctx, col[None, :], np.array([want]))
        if sol is None:
            raise FormError("degenerate form")
        w = la.matmul(ctx, sol.particular, cur)
        if space.is_orthogonal:
            w = ctx.sub(w, ctx.mul(v, space.quad_value(w)))
        elif space.is_unitary:
            need = ctx.sneg(space.quad_value(w))
            cs = np.arange(ctx.q)
            c = int(cs[ctx.add(cs, ctx.theta(cs)) == need][0])
            w = ctx.add(w, ctx.mul(v, c))
        pairs.append((v, w))
        cons = np.vstack([space.form(cur, v), space.form(cur, w)])
        coords = la.nullspace(ctx, cons)
        cur = la.matmul(ctx, coords, cur) if coords.shape[0] else np.zeros((0, n), dtype=np.int64)
    return pairs, cur


def _find_singular(space: FormedSpace, basis: np.ndarray, rng) -> np.ndarray | None:
    ctx = space.ctx
    if space.kind == "symplectic":
        return basis[0]
    zero = np.zeros(space.n, dtype=np.int64)
    if _coset_size(space, basis.shape[0]) <= _ENUM_LIMIT:
        pts = enumerate_quadric_points(space, (zero, basis), 0)
        pts = pts[np.any(pts != 0, axis=1)]
        return pts[0] if pts.shape[0] else None
    if count_quadric_points(space, (zero, basis), 0) <= 1:
        return None
    while True:
        x = sample_quadric_point(space, (zero, basis), 0, rng)
        if np.any(x):
            return x


# -- abelian invariants -----------------------------------------------------------------------

def reflection(space: FormedSpace, x) -> np.ndarray:
    """Orthogonal reflection y -> y - f(y, x)/Q(x) x."""
    ctx = space.ctx
    x = la.as_array(x)
    qx = space.quad_value(x)
    if not space.is_orthogonal or qx == 0:
        raise FormError("reflections need a nonsingular vector of an orthogonal space")
    row = la.matmul(ctx, x, space.gram)  # y -> f(y, x) = x^T G y by symmetry
    c = ctx.sneg(ctx.sinv(qx))
    return ctx.add(la.identity(space.n), ctx.mul(ctx.mul(x[:, None], row[None, :]), c))


def quasi_reflection(space: FormedSpace, x, u: int) -> np.ndarray:
    """Unitary map fixing x-perp and scaling x by u (u * theta(u) = 1)."""
    ctx = space.ctx
    x = la.as_array(x)
    fxx = space.form(x, x)
    if fxx == 0:
        raise FormError("quasi-reflections need a non-isotropic vector")
    row = la.matmul(ctx, space.gram, ctx.theta(x))  # y -> f(y, x)
    c = ctx.smul(ctx.ssub(u, 1), ctx.sinv(fxx))
    return ctx.add(la.identity(space.n), ctx.mul(ctx.mul(x[:, None], row[None, :]), c))


def _reflection_vectors(space: FormedSpace, g: np.ndarray) -> list[np.ndarray]:
    """Vectors u_1..u_m with g = r_{u_1} ... r_{u_m} (odd characteristic).

    Works down an orthogonal flag: for a nonsingular x in the complement of
    the vectors already fixed, one reflection in hx - x, or two reflections
    (in hx + x, then x) when hx - x is singular, make x fixed. Since
    Q(hx - x) + Q(hx + x) = 4 Q(x), one of the two routes always applies.
    """
    ctx, n = space.ctx, space.n
    h = g.copy()
    used: list[np.ndarray] = []
    fixed: list[np.ndarray] = []
    for _ in range(n):
        if fixed:
            coords = la.nullspace(ctx, space.form(np.array(fixed), la.identity(n)))
            work = coords
        else:
            work = la.identity(n)
        x = _nonsingular_in(space, work)
        hx = la.matmul(ctx, h, x)
        if not np.array_equal(hx, x):
            d = ctx.sub(hx, x)
            if space.quad_value(d) != 0:
                steps = [d]
            else:
                v = ctx.add(hx, x)
                steps = [v, x] if np.any(v) else [x]
            for u in steps:
                h = la.matmul(ctx, reflection(space, u), h)
                used.append(u)
        fixed.append(x)
    if not np.array_equal(h, la.identity(n)):
        raise FormError("reflection decomposition failed")  # pragma: no cover
    return used


def _nonsingular_in(space: FormedSpace, basis: np.ndarray) -> np.ndarray:
    ctx = space.ctx
    qv = space.quad_value(basis)
    nz = np.flatnonzero(qv)
    if nz.size:
        return basis[nz[0]]
    for i, j in itertools.combinations(range(basis.shape[0]), 2):
        x = ctx.add(basis[i], basis[j])
        if space.quad_value(x) != 0:
            return x
    raise FormError("degenerate subspace")  # pragma: no cover


def spinor_class(space: FormedSpace, g) -> int:
    """0 if the spinor norm is a square, 1 otherwise (odd characteristic)."""
    ctx = space.ctx
    bit = 0
    for x in _reflection_vectors(space, la.as_array(g)):
        bit ^= 0 if bool(ctx.is_square(space.quad_value(x))) else 1
    return bit


def abelian_invariant(space: FormedSpace, g) -> tuple:
    """Image of g in the abelianization of the full isometry group.

    linear: (det,); symplectic: (); orthogonal odd q: (det bit, spinor bit);
    orthogonal even q: (Dickson bit,); unitary: (det,).
    """
    g = la.as_array(g)
    if not space.is_isometry(g):
        raise FormError("not an isometry of " + space.descriptor)
    return _invariant_unchecked(space, g)


def _invariant_unchecked(space: FormedSpace, g: np.ndarray) -> tuple:
    ctx = space.ctx
    if space.kind in ("linear", "unitary"):
        return (la.det(ctx, g),)
    if space.kind == "symplectic":
        return ()
    if ctx.p == 2:
        return (la.rank(ctx, ctx.sub(g, la.identity(space.n))) % 2,)
    det_bit = 0 if la.det(ctx, g) == 1 else 1
    return (det_bit, spinor_class(space, g))


def invariant_identity(space: FormedSpace) -> tuple:
    if space.kind in ("linear", "unitary"):
        return (1,)
    if space.kind == "symplectic":
        return ()
    return (0,) if space.ctx.p == 2 else (0, 0)


def invariant_mul(space: FormedSpace, a: tuple, b: tuple) -> tuple:
    if space.kind in ("linear", "unitary"):
        return (space.ctx.smul(a[0], b[0]),)
    return tuple(x ^ y for x, y in zip(a, b))


def invariant_inv(space: FormedSpace, a: tuple) -> tuple:
    if space.kind in ("linear", "unitary"):
        return (space.ctx.sinv(a[0]),)
    return a


def invariant_transversal(space: FormedSpace) -> dict[tuple, np.ndarray]:
    """One fixed isometry per element of the invariant image, supported near the first two coordinates."""
    return space._cached("transversal", lambda: _build_transversal(space))


def _build_transversal(space: FormedSpace) -> dict[tuple, np.ndarray]:
    ctx, n = space.ctx, space.n
    eye = la.identity(n)
    table = {invariant_identity(space): eye}
    if space.kind == "linear":
        for a in range(1, ctx.q):
            t = eye.copy()
            t[0, 0] = a
            table[(a,)] = t
        return table
    if space.kind == "symplectic":
        return table
    k = min(n, 2)
    local = all_tuples(ctx.q, k)
    vecs = np.zeros((local.shape[0], n), dtype=np.int64)
    vecs[:, :k] = local
    if space.is_unitary:
        fvals = space.quad_value(vecs)
        x = vecs[np.flatnonzero(fvals)[0]]
        for u in ctx.norm_one_elements().tolist():
            table[(int(u),)] = quasi_reflection(space, x, int(u))
        return table
    qv = space.quad_value(vecs)
    refl = []
    seen_cls = set()
    for idx in np.flatnonzero(qv):
        cls = bool(ctx.is_square(qv[idx])) if ctx.p != 2 else True
        if cls not in seen_cls:
            seen_cls.add(cls)
            refl.append(reflection(space, vecs[idx]))
    frontier = list(table.items())
    while frontier:
        nxt = []
        for inv, mat in frontier:
            for r in refl:
                m2 = la.matmul(ctx, mat, r)
                key = _invariant_unchecked(space, m2)
                if key not in table:
                    table[key] = m2
                    nxt.append((key, m2))
        frontier = nxt
    return table
