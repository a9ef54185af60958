"""Finite fields F_q for small q, encoded as integers in [0, q).

An element of F_{p^e} is stored as the integer sum(c_i * p**i) where
c_0 + c_1 x + ... + c_{e-1} x^{e-1} is its residue modulo the canonical
modulus (the lexicographically least monic irreducible of degree e, with
coefficients compared from the constant term upwards).

All arithmetic methods accept Python ints or integer numpy arrays.
"""

from __future__ import annotations

import functools
import math

import numpy as np

__all__ = ["FieldCtx", "FieldError", "make_field", "frobenius_theta", "parse_field"]

MAX_FIELD_SIZE = 1 << 16
_TABLE_LIMIT = 256  # full q x q add/mul tables below this size


class FieldError(ValueError):
    """Raised for unsupported or malformed field parameters."""


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    for d in range(2, math.isqrt(n) + 1):
        if n % d == 0:
            return False
    return True


def _prime_factors(n: int) -> list[int]:
    out, d = [], 2
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            while n % d == 0:
                n //= d
        d += 1
    if n > 1:
        out.append(n)
    return out


# -- polynomials over the prime field, used only to pin the modulus --------

def _pmod(a: list[int], m: list[int], p: int) -> list[int]:
    a = a[:]
    dm = len(m) - 1
    inv_lead = pow(m[-1], p - 2, p)
    while len(a) - 1 >= dm and a:
        c = a[-1] * inv_lead % p
        shift = len(a) - 1 - dm
        if c:
            for i, mi in enumerate(m):
                a[shift + i] = (a[shift + i] - c * mi) % p
        a.pop()
        while a and a[-1] == 0:
            a.pop()
    return a


def _pmulmod(a: list[int], b: list[int], m: list[int], p: int) -> list[int]:
    if not a or not b:
        return []
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] = (out[i + j] + x * y) % p
    while out and out[-1] == 0:
        out.pop()
    return _pmod(out, m, p)


def _pgcd(a: list[int], b: list[int], p: int) -> list[int]:
    while b:
        a, b = b, _pmod(a, b, p)
    return a


def _xpow_p_iter(k: int, m: list[int], p: int) -> list[int]:
    """x^(p^k) mod m."""
    r = [0, 1]
    for _ in range(k):
        acc, base, e = [1], r, p
        while e:
            if e & 1:
                acc = _pmulmod(acc, base, m, p)
            base = _pmulmod(base, base, m, p)
            e >>= 1
        r = acc
    return r


def _is_irreducible_prime_field(m: list[int], p: int) -> bool:
    """Rabin's test for a monic polynomial over F_p."""
    e = len(m) - 1
    if e == 1:
        return True
    if m[0] == 0:
        return False
    xq = _xpow_p_iter(e, m, p)
    if _psub(xq, [0, 1], p):
        return False
    for r in _prime_factors(e):
        h = _psub(_xpow_p_iter(e // r, m, p), [0, 1], p)
        if len(_pgcd(m, h, p)) != 1:
            return False
    return True


def _psub(a: list[int], b: list[int], p: int) -> list[int]:
    n = max(len(a), len(b))
    out = [((a[i] if i < len(a) else 0) - (b[i] if i < len(b) else 0)) % p for i in range(n)]
    while out and out[-1] == 0:
        out.pop()
    return out


def canonical_modulus(p: int, e: int) -> tuple[int, ...]:
    """Lexicographically least monic irreducible of degree e over F_p (ascending coefficients)."""
    if e == 1:
        return (0, 1)
    for idx in range(p**e):
        coeffs = []
        # constant term is the most significant digit of the lexicographic order
        for _ in range(e):
            coeffs.append(idx % p)
            idx //= p
        coeffs.reverse()
        m = coeffs + [1]
        if _is_irreducible_prime_field(m, p):
            return tuple(m)
    raise FieldError(f"no irreducible polynomial of degree {e} over F_{p}")  # pragma: no cover


class FieldCtx:
    """Arithmetic context for F_q. Immutable once built; use make_field."""

    def __init__(self, p: int, e: int):
        self.p = p
        self.e = e
        self.q = q = p**e
        self.modulus = canonical_modulus(p, e)
        self.theta_defined = e % 2 == 0
        self.q0 = math.isqrt(q) if self.theta_defined else None
        self.is_prime = e == 1
        self.is_binary = p == 2

        powers = p ** np.arange(e, dtype=np.int64)
        self._powers = powers
        elems = np.arange(q, dtype=np.int64)
        self.digits = (elems[:, None] // powers[None, :]) % p  # (q, e)

        # multiplication-by-x matrix on digit vectors
        mx = np.zeros((e, e), dtype=np.int64)
        for j in range(e - 1):
            mx[j + 1, j] = 1
        mx[:, e - 1] = [(-c) % p for c in self.modulus[:e]]
        self._mulx = mx

        self.gen = self._find_generator()
        self._build_log_tables()
        self._build_add_tables()
        self._build_unary_tables()
        self._build_regular_rep()
        for arr in (self.digits, self.exp, self.log, self.neg_table, self.inv_table):
            arr.setflags(write=False)

    # -- construction helpers ------------------------------------------------
    def _mat_of(self, a: int) -> np.ndarray:
        """Matrix of multiplication by the element a on digit vectors."""
        p, e = self.p, self.e
        col = self.digits[a].copy()
        m = np.zeros((e, e), dtype=np.int64)
        for j in range(e):
            m[:, j] = col
            col = (self._mulx @ col) % p
        return m

    def _find_generator(self) -> int:
        p, e, q = self.p, self.e, self.q
        if q == 2:
            return 1
        order = q - 1
        primes = _prime_factors(order)
        one = np.zeros(e, dtype=np.int64)
        one[0] = 1
        for g in range(2, q):
            mg = self._mat_of(g)
            ok = True
            for r in primes:
                k, acc, base = order // r, np.eye(e, dtype=np.int64), mg
                while k:
                    if k & 1:
                        acc = (acc @ base) % p
                    base = (base @ base) % p
                    k >>= 1
                if np.array_equal((acc @ one) % p, one):
                    ok = False
                    break
            if ok:
                return g
        raise FieldError("no primitive element found")  # pragma: no cover

    def _build_log_tables(self) -> None:
        p, q = self.p, self.q
        n = q - 1
        dig = np.zeros((1, self.e), dtype=np.int64)
        dig[0, 0] = 1
        step = self._mat_of(self.gen)
        while dig.shape[0] < n:
            dig = np.vstack([dig, (dig @ step.T) % p])
            step = (step @ step) % p
        dig = dig[:n]
        exp1 = dig @ self._powers
        self.exp = np.concatenate([exp1, exp1, exp1[:2]]).astype(np.int64)
        log = np.full(q, -1, dtype=np.int64)
        log[exp1] = np.arange(n, dtype=np.int64)
        self.log = log
        self._exp_l = self.exp.tolist()
        self._log_l = log.tolist()

    def _build_add_tables(self) -> None:
        q = self.q
        self.add_table = None
        self.mul_table = None
        if q <= _TABLE_LIMIT:
            a = np.arange(q, dtype=np.int64)
            self.add_table = self._add_raw(a[:, None], a[None, :])
            self.mul_table = self._mul_raw(a[:, None], a[None, :])
            self.add_table.setflags(write=False)
            self.mul_table.setflags(write=False)
            self._add_ll = self.add_table.tolist()
            self._mul_ll = self.mul_table.tolist()

    def _build_unary_tables(self) -> None:
        q, n = self.q, self.q - 1
        a = np.arange(q, dtype=np.int64)
        self.neg_table = self._neg_raw(a)
        inv = np.zeros(q, dtype=np.int64)
        nz = a[1:]
        inv[1:] = self.exp[(n - self.log[nz]) % n]
        self.inv_table = inv
        self._neg_l = self.neg_table.tolist()
        self._inv_l = inv.tolist()
        if self.theta_defined:
            th = np.zeros(q, dtype=np.int64)
            th[1:] = self.exp[(self.log[nz] * self.q0) % n]
            self.theta_table = th
            self.theta_table.setflags(write=False)
            self._theta_l = th.tolist()
        else:
            self.theta_table = None
        # p-th root (inverse Frobenius) and square roots in characteristic 2
        root = np.zeros(q, dtype=np.int64)
        root[1:] = self.exp[(self.log[nz] * (q // self.p)) % n]
        self.proot_table = root
        self.proot_table.setflags(write=False)

    def _build_regular_rep(self) -> None:
        """reg[a] is the F_p matrix of multiplication by a; used by matmul for e > 1."""
        if self.e == 1:
            self.reg = None
            return
        p, e, q = self.p, self.e, self.q
        reg = np.zeros((q, e, e), dtype=np.int64)
        cols = self.digits.copy()
        for j in range(e):
            reg[:, :, j] = cols
            cols = (cols @ self._mulx.T) % p
        self.reg = reg
        self.reg.setflags(write=False)

    # -- raw vectorized arithmetic (no tables) --------------------------------
    def _add_raw(self, a, b):
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        if self.is_prime:
            return (a + b) % self.p
        if self.is_binary:
            return a ^ b
        return ((self.digits[a] + self.digits[b]) % self.p) @ self._powers

    def _neg_raw(self, a):
        a = np.asarray(a, dtype=np.int64)
        if self.is_prime:
            return (-a) % self.p
        if self.is_binary:
            return a.copy()
        return ((-self.digits[a]) % self.p) @ self._powers

    def _mul_raw(self, a, b):
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        if self.is_prime:
            return (a * b) % self.p
        a, b = np.broadcast_arrays(a, b)
        la, lb = self.log[a], self.log[b]
        out = self.exp[np.where((la < 0) | (lb < 0), 0, la + lb)]
        return np.where((a == 0) | (b == 0), 0, out)

    # -- public vectorized arithmetic -----------------------------------------
    def add(self, a, b):
        if self.add_table is not None and not self.is_prime:
            return self.add_table[a, b]
        return self._add_raw(a, b)

    def neg(self, a):
        return self.neg_table[a]

    def sub(self, a, b):
        return self.add(a, self.neg_table[b])

    def mul(self, a, b):
        if self.is_prime:
            return (np.asarray(a, dtype=np.int64) * np.asarray(b, dtype=np.int64)) % self.p
        if self.mul_table is not None:
            return self.mul_table[a, b]
        return self._mul_raw(a, b)

    def inv(self, a):
        if np.any(np.asarray(a) == 0):
            raise ZeroDivisionError("inverse of zero in " + self.descriptor)
        return self.inv_table[a]

    def div(self, a, b):
        return self.mul(a, self.inv(b))

    def power(self, a, k: int):
        a = np.asarray(a, dtype=np.int64)
        n = self.q - 1
        if k == 0:
            return np.ones_like(a)
        la = self.log[a]
        out = self.exp[(la * k) % n]
        return np.where(a == 0, 0, out)

    def theta(self, a):
        if not self.theta_defined:
            raise FieldError(f"theta undefined on {self.descriptor} (odd degree)")
        return self.theta_table[a]

    def conj(self, a):
        """theta when defined, identity otherwise (the bilinear case)."""
        return self.theta_table[a] if self.theta_defined else a

    def is_square(self, a):
        """True for nonzero squares (and for every element in characteristic 2)."""
        a = np.asarray(a)
        if self.is_binary:
            return a != 0
        return (a != 0) & (self.log[a] % 2 == 0)

    def sqrt_char2(self, a):
        """The unique square root in characteristic 2."""
        return self.proot_table[a]

    def trace_to_prime(self, a):
        """Absolute trace F_q -> F_p, returned as an element of F_p."""
        a = np.asarray(a, dtype=np.int64)
        acc = a.copy()
        cur = a
        for _ in range(self.e - 1):
            cur = self.power(cur, self.p)
            acc = self.add(acc, cur)
        return acc

    def norm_one_elements(self) -> np.ndarray:
        """{u : u * theta(u) = 1}, the unitary determinant group."""
        a = np.arange(1, self.q, dtype=np.int64)
        return a[self.mul(a, self.theta(a)) == 1]

    def subfield_elements(self) -> np.ndarray:
        """Fixed points of theta, the subfield of size q0."""
        a = np.arange(self.q, dtype=np.int64)
        return a[self.theta(a) == a]

    # -- scalar fast paths for Python-level loops -----------------------------
    def sadd(self, a: int, b: int) -> int:
        if self.is_prime:
            return (a + b) % self.p
        if self.is_binary:
            return a ^ b
        if self.add_table is not None:
            return self._add_ll[a][b]
        return int(self._add_raw(a, b))

    def ssub(self, a: int, b: int) -> int:
        if self.is_prime:
            return (a - b) % self.p
        return self.sadd(a, self._neg_l[b])

    def sneg(self, a: int) -> int:
        return self._neg_l[a]

    def smul(self, a: int, b: int) -> int:
        if self.is_prime:
            return a * b % self.p
        if a == 0 or b == 0:
            return 0
        return self._exp_l[self._log_l[a] + self._log_l[b]]

    def sinv(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("inverse of zero in " + self.descriptor)
        return self._inv_l[a]

    def spow(self, a: int, k: int) -> int:
        if k == 0:
            return 1
        if a == 0:
            return 0
        return self._exp_l[(self._log_l[a] * k) % (self.q - 1)]

    def stheta(self, a: int) -> int:
        if not self.theta_defined:
            raise FieldError(f"theta undefined on {self.descriptor} (odd degree)")
        return self._theta_l[a]

    # -- encodings -------------------------------------------------------------
    @property
    def descriptor(self) -> str:
        return f"GF({self.p}^{self.e})"

    def from_digits(self, d) -> np.ndarray:
        return np.asarray(d, dtype=np.int64) @ self._powers

    def __repr__(self) -> str:
        return f"FieldCtx({self.descriptor}, modulus={self.modulus})"

    def __reduce__(self):
        return (make_field, (self.p, self.e))


@functools.lru_cache(maxsize=None)
def make_field(p: int, e: int = 1) -> FieldCtx:
    """Return the (cached) context for F_{p^e}."""
    if not isinstance(p, (int, np.integer)) or not _is_prime(int(p)):
        raise FieldError(f"characteristic {p!r} is not prime")
    if e < 1:
        raise FieldError(f"extension degree must be >= 1, got {e}")
    if p**e > MAX_FIELD_SIZE:
        raise FieldError(f"field size {p}^{e} exceeds {MAX_FIELD_SIZE}")
    return FieldCtx(int(p), int(e))


def field_of_size(q: int) -> FieldCtx:
    """make_field for a prime power given as q."""
    for p in range(2, q + 1):
        if q % p == 0:
            e, r = 0, q
            while r % p == 0:
                r //= p
                e += 1
            if r != 1:
                break
            return make_field(p, e)
    raise FieldError(f"{q} is not a prime power")


def frobenius_theta(ctx: FieldCtx, x):
    """x -> x^sqrt(q), the involutive automorphism of F_q for even degree."""
    return ctx.theta(x)


def parse_field(text: str) -> FieldCtx:
    """Parse "GF(p^e)" or "GF(q)"."""
    t = text.strip()
    if not (t.startswith("GF(") and t.endswith(")")):
        raise FieldError(f"field descriptor must look like GF(p^e), got {text!r}")
    body = t[3:-1]
    if "^" in body:
        p, e = body.split("^")
        return make_field(int(p), int(e))
    return field_of_size(int(body))
