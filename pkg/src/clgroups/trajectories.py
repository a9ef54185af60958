"""Query engine for words acting on vectors: known domains, free and forced queries,
coincidences, single and joint trajectories, and the one-coincidence classifier.

Steps are numbered t = 1..l; the letter applied at step t is the t-th letter
from the right of the written word. Joint queries run in (t, i) order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import forms as fm
from . import linalg as la
from . import polys
from .groups import GroupDesc
from .seeding import kernel_seed
from .words import Word, is_proper_power

__all__ = [
    "Query",
    "TrajectoryRecord",
    "run_joint_trajectory",
    "classify_one_coincidence",
    "simulate",
    "q_binomial",
    "invariant_subspace_bound",
    "estimate_invariant_subspace_prob",
    "estimate_small_support_prob",
    "wilson_interval",
]


class TrajectoryError(RuntimeError):
    pass


class _SemiEchelon:
    """Rows with distinct pivots, each zero at the pivots of earlier rows; optional partners."""

    def __init__(self, ctx, n: int):
        self.ctx = ctx
        self.n = n
        self.rows: list[np.ndarray] = []
        self.partners: list[np.ndarray] = []
        self.pivots: list[int] = []

    def __len__(self):
        return len(self.rows)

    def reduce(self, v):
        ctx = self.ctx
        v = la.as_array(v).copy()
        acc = np.zeros(self.n, dtype=np.int64)
        for row, part, piv in zip(self.rows, self.partners, self.pivots):
            c = int(v[piv])
            if c:
                v = ctx.sub(v, ctx.mul(row, c))
                acc = ctx.add(acc, ctx.mul(part, c))
        return v, acc

    def contains(self, v) -> bool:
        return not np.any(self.reduce(v)[0])

    def add(self, v, partner=None) -> bool:
        """Insert v (with partner image); False if v was already in the span."""
        ctx = self.ctx
        partner = np.zeros(self.n, dtype=np.int64) if partner is None else la.as_array(partner)
        res, acc = self.reduce(v)
        if not np.any(res):
            return False
        piv = int(np.flatnonzero(res)[0])
        s = ctx.sinv(int(res[piv]))
        self.rows.append(ctx.mul(res, s))
        self.partners.append(ctx.mul(ctx.sub(partner, acc), s))
        self.pivots.append(piv)
        return True

    def basis(self) -> np.ndarray:
        return np.array(self.rows) if self.rows else np.zeros((0, self.n), dtype=np.int64)


@dataclass(frozen=True)
class Query:
    t: int
    i: int
    letter: int
    input: tuple
    result: tuple
    free: bool
    coincidence: bool
    forced_closure: bool = False


@dataclass
class TrajectoryRecord:
    word: Word
    starts: np.ndarray  # (r, n)
    lattice: np.ndarray  # (r, l + 1, n); lattice[i, t] = v_i^t
    queries: list[Query]
    closed: tuple[bool, ...]
    honest: bool = True  # False when a final step was steered onto its start
    closure_weight: float | None = None  # P(final query closes | history), lazy mode only
    field_size: int = 0

    @property
    def r(self) -> int:
        return self.starts.shape[0]

    @property
    def length(self) -> int:
        return len(self.word)

    @property
    def is_closed(self) -> bool:
        return all(self.closed)

    def coincidences(self, i: int | None = None) -> list[tuple[int, int]]:
        return [(qq.t, qq.i) for qq in self.queries if qq.coincidence and (i is None or qq.i == i)]

    def to_json(self) -> str:
        return json.dumps(
            {
                "word": list(self.word.letters),
                "k": self.word.k,
                "q": self.field_size,
                "starts": self.starts.tolist(),
                "lattice": self.lattice.tolist(),
                "queries": [
                    {
                        "t": qq.t,
                        "i": qq.i,
                        "letter": qq.letter,
                        "input": list(qq.input),
                        "result": list(qq.result),
                        "free": qq.free,
                        "coincidence": qq.coincidence,
                    }
                    for qq in self.queries
                ],
                "closed": list(self.closed),
                "honest": self.honest,
                "closure_weight": self.closure_weight,
            },
            sort_keys=True,
        )


def _letter_at(word: Word, t: int) -> int:
    return word.letters[len(word.letters) - t]


def run_joint_trajectory(desc, word: Word, starts, elements=None, rng=None, reference=None,
                         forced_close: bool = False) -> TrajectoryRecord:
    """Joint trajectory of the rows of `starts` under w.

    With `elements` the results are matrix products; without them every free
    result is drawn from its exact conditional law given the earlier queries
    (lazy mode). The reference set defaults to the starts. With
    forced_close, a free final query is steered onto its start whenever that
    is an admissible result; such records are flagged not honest.
    """
    space = desc.space if isinstance(desc, GroupDesc) else desc
    ctx, n = space.ctx, space.n
    starts = la.as_array(starts).reshape(-1, n)
    r = starts.shape[0]
    ell = len(word)
    if elements is None and rng is None:
        raise TrajectoryError("lazy mode needs an rng")
    inverses: dict[int, np.ndarray] = {}
    fwd = {j: _SemiEchelon(ctx, n) for j in range(1, word.k + 1)}
    bwd = {j: _SemiEchelon(ctx, n) for j in range(1, word.k + 1)}
    pairs: dict[int, tuple[list, list]] = {j: ([], []) for j in range(1, word.k + 1)}
    ref = starts if reference is None else la.as_array(reference).reshape(-1, n)
    span_all = _SemiEchelon(ctx, n)
    ref_span = _SemiEchelon(ctx, n)
    for x in ref:
        span_all.add(x)
        ref_span.add(x)
    lattice = np.zeros((r, ell + 1, n), dtype=np.int64)
    lattice[:, 0] = starts
    queries: list[Query] = []
    honest = True
    weight = 1.0 if elements is None else None
    for t in range(1, ell + 1):
        letter = _letter_at(word, t)
        j = abs(letter)
        dom, img = (fwd[j], bwd[j]) if letter > 0 else (bwd[j], fwd[j])
        for i in range(r):
            v = lattice[i, t - 1]
            res, acc = dom.reduce(v)
            free = bool(np.any(res))
            last = t == ell and i == r - 1
            steered = False
            if not free:
                u = acc
                if elements is not None:
                    u = _apply(ctx, elements, inverses, letter, v)
                    if not np.array_equal(u, acc):
                        raise TrajectoryError("forced result disagrees with the explicit element")  # pragma: no cover
                if last and weight is not None:
                    weight *= float(np.array_equal(u, starts[i]))
            else:
                d_list, i_list = pairs[j] if letter > 0 else pairs[j][::-1]
                if weight is not None and last:
                    weight *= _closure_probability(space, d_list, i_list, v, starts[i])
                if forced_close and t == ell and _closure_probability(space, d_list, i_list, v, starts[i]) > 0:
                    u = starts[i].copy()
                    steered = True
                    honest = False
                elif elements is not None:
                    u = _apply(ctx, elements, inverses, letter, v)
                else:
                    u = fm.sample_image(space, list(d_list), list(i_list), v, rng)
                a, b = (v, u) if letter > 0 else (u, v)
                fwd[j].add(a, b)
                bwd[j].add(b, a)
                pairs[j][0].append(a)
                pairs[j][1].append(b)
            coincidence = False
            if free:
                coincidence = not span_all.add(u)
            queries.append(Query(t, i, letter, tuple(int(x) for x in v), tuple(int(x) for x in u), free, coincidence, steered))
            lattice[i, t] = u
            if weight is not None and t == ell and i < r - 1 and not np.array_equal(u, starts[i]):
                weight = 0.0
    closed = tuple(bool(np.array_equal(lattice[i, ell], starts[i])) for i in range(r))
    rec = TrajectoryRecord(word, starts, lattice, queries, closed, honest, weight, ctx.q)
    _check_coincidence_lemma(rec, ref_span)
    return rec


def _apply(ctx, elements, inverses, letter, v):
    j = abs(letter) - 1
    if letter > 0:
        m = elements[j]
    else:
        if j not in inverses:
            inverses[j] = la.inverse(ctx, elements[j])
        m = inverses[j]
    return la.matmul(ctx, m, v)


def _closure_probability(space, dom: list, img: list, v, target) -> float:
    """Conditional probability that a free query on v returns target."""
    ctx = space.ctx
    imgs = np.array(img) if img else np.zeros((0, space.n), dtype=np.int64)
    if imgs.shape[0] and la.in_span(ctx, imgs, target):
        return 0.0
    if not imgs.shape[0] and not np.any(target):
        return 0.0
    rows, rhs = fm._image_constraints(space, dom, img, v)
    if rows.shape[0] and not np.array_equal(la.matmul(ctx, rows, target), rhs):
        return 0.0
    qv = space.quad_value(v) if space.has_quadric else 0
    if space.has_quadric and space.quad_value(target) != qv:
        return 0.0
    sol = la.solve_affine(ctx, rows, rhs)
    total = fm.count_quadric_points(space, (sol.particular, sol.kernel), qv)
    pts = fm._span_points(ctx, imgs) if imgs.shape[0] else np.zeros((1, space.n), dtype=np.int64)
    ok = np.ones(pts.shape[0], dtype=bool)
    if rows.shape[0]:
        ok &= np.all(la.matmul(ctx, pts, rows.T) == rhs[None, :], axis=1)
    if space.has_quadric:
        ok &= space.quad_value(pts) == qv
    admissible = total - int(ok.sum())
    return 1.0 / admissible


def _check_coincidence_lemma(rec: TrajectoryRecord, ref_span: _SemiEchelon) -> None:
    """A strand from an independent start that ends in span R must contain a coincidence."""
    ctx_free = _SemiEchelon(ref_span.ctx, rec.starts.shape[1])
    for i in range(rec.r):
        independent = ctx_free.add(rec.starts[i])
        if independent and ref_span.contains(rec.lattice[i, -1]) and not rec.coincidences(i):
            raise TrajectoryError(f"strand {i} ends in span R without a coincidence")


# -- one-coincidence classification ---------------------------------------------------------

@dataclass(frozen=True)
class Verdict:
    period: int
    consistent: bool
    times: tuple[int, ...]
    at_end: bool
    poly: tuple | None = None  # f for r = 1, ascending coefficients
    divides: bool | None = None

    @property
    def violation(self) -> bool:
        return not self.consistent or self.divides is False


def classify_one_coincidence(rec: TrajectoryRecord, ctx=None) -> Verdict:
    """Check the period structure forced by a closed trajectory with one coincidence per strand."""
    w = rec.word
    if not rec.is_closed:
        raise TrajectoryError("record is not closed")
    if len(w) == 0 or not w.is_cyclically_reduced:
        raise TrajectoryError("word must be nontrivial and cyclically reduced")
    times = []
    for i in range(rec.r):
        cs = rec.coincidences(i)
        if len(cs) != 1:
            raise TrajectoryError(f"strand {i} has {len(cs)} coincidences, expected exactly one")
        times.append(cs[0][0])
    ell = len(w)
    d = ell
    for t in times:
        d = math.gcd(d, t)
    letters = w.letters
    consistent = all(letters[x] == letters[x % d] for x in range(ell))
    poly = divides = None
    if rec.r == 1 and ctx is not None:
        t = times[0]
        basis = rec.lattice[0, :t]
        coords = la.span_coords(ctx, basis, rec.lattice[0, t])
        if coords is None:
            raise TrajectoryError("coincidence vector outside the span of its predecessors")  # pragma: no cover
        poly = polys.trim([ctx.sneg(int(c)) for c in coords] + [1])
        x_ell_minus_1 = polys.trim([ctx.sneg(1)] + [0] * (ell - 1) + [1])
        divides = not polys.mod(ctx, x_ell_minus_1, poly)
        if t == ell:
            expected = tuple([1] + [0] * (ell - 1))
            if tuple(int(c) for c in coords) != expected:
                divides = False
    return Verdict(d, consistent, tuple(times), all(t == ell for t in times), poly, divides)


# -- compiled batch simulation ----------------------------------------------------------------

@dataclass
class BatchStats:
    trials: int
    closed_naive: int
    rb_sum: float
    rb_sumsq: float
    closed: int
    closed_single: int
    closed_single_at_end: int
    period_violations: int
    lemma_violations: int
    forced_applied: int
    ends_in_span: int
    closed_single_naive: int
    free_counts: np.ndarray = field(repr=False)
    coinc_counts: np.ndarray = field(repr=False)
    detail: dict | None = field(default=None, repr=False)

    def merge(self, other: "BatchStats") -> "BatchStats":
        vals = {}
        for name in _STAT_FIELDS:
            vals[name] = getattr(self, name) + getattr(other, name)
        det = None
        if self.detail is not None and other.detail is not None:
            det = {key: np.concatenate([self.detail[key], other.detail[key]]) for key in self.detail}
        return BatchStats(**vals, free_counts=self.free_counts + other.free_counts,
                          coinc_counts=self.coinc_counts + other.coinc_counts, detail=det)

    @property
    def rb_mean(self) -> float:
        return self.rb_sum / self.trials

    @property
    def rb_stderr(self) -> float:
        m = self.rb_mean
        var = max(self.rb_sumsq / self.trials - m * m, 0.0)
        return math.sqrt(var / max(self.trials - 1, 1))

    def summary(self) -> dict:
        out = {name: (float(getattr(self, name)) if "rb" in name else int(getattr(self, name))) for name in _STAT_FIELDS}
        out["rb_mean"] = self.rb_mean
        out["rb_stderr"] = self.rb_stderr
        return out


_STAT_FIELDS = (
    "trials", "closed_naive", "rb_sum", "rb_sumsq", "closed", "closed_single", "closed_single_at_end",
    "period_violations", "lemma_violations", "forced_applied", "ends_in_span", "closed_single_naive",
)


def kernel_supported(desc) -> bool:
    space = desc.space if isinstance(desc, GroupDesc) else desc
    return space.ctx.is_prime and space.kind in ("linear", "symplectic") and space is fm.standard_space(space.kind, space.n, space.ctx)


def simulate(desc, word: Word, starts, trials: int, seed: int, forced_close: bool = False,
             materialized: bool = False, detail: bool = False, chunk: int = 1 << 20) -> BatchStats:
    """Run many lazy (or explicit GL) joint trajectories in the compiled kernel.

    Chunks are seeded from the (seed, chunk index) stream, so results do not
    depend on how the work is split across processes.
    """
    from . import kernels as kn

    space = desc.space if isinstance(desc, GroupDesc) else desc
    if not kernel_supported(space):
        raise TrajectoryError(f"compiled kernel covers prime-field GL and Sp only, not {space.descriptor}")
    if materialized and space.kind != "linear":
        raise TrajectoryError("explicit-element kernel mode is implemented for GL only")
    ctx = space.ctx
    starts = la.as_array(starts).reshape(-1, space.n)
    app = np.array(word.letters[::-1], dtype=np.int64)
    written = np.array(word.letters, dtype=np.int64)
    kind = kn.KIND_LINEAR if space.kind == "linear" else kn.KIND_SYMPLECTIC
    inv = np.zeros(ctx.q, dtype=np.int64)
    inv[1:] = ctx.inv(np.arange(1, ctx.q))
    r, ell = starts.shape[0], len(word)
    total: BatchStats | None = None
    done = 0
    idx = 0
    while done < trials:
        m = min(chunk, trials - done)
        if detail:
            dc = np.zeros((m, r), dtype=np.bool_)
            dn = np.zeros((m, r), dtype=np.int64)
            dt = np.zeros((m, r), dtype=np.int64)
        else:
            dc = np.zeros((0, r), dtype=np.bool_)
            dn = np.zeros((0, r), dtype=np.int64)
            dt = np.zeros((0, r), dtype=np.int64)
        fc = np.zeros((ell, r), dtype=np.int64)
        cc = np.zeros((ell, r), dtype=np.int64)
        raw = kn.run_batch(kind, ctx.p, app, written, word.k, starts, space.gram.astype(np.int64), inv, m,
                           kernel_seed(seed, idx), forced_close, materialized, detail, dc, dn, dt, fc, cc)
        vals = {name: (float(x) if "rb" in name else int(x)) for name, x in zip(_STAT_FIELDS, raw)}
        part = BatchStats(**vals, free_counts=fc, coinc_counts=cc,
                          detail={"closed": dc, "ncoinc": dn, "tcoinc": dt} if detail else None)
        total = part if total is None else total.merge(part)
        done += m
        idx += 1
    return total


# -- subspace and support experiments ---------------------------------------------------------

def q_binomial(x, r: int, q: int):
    """Gaussian binomial; an int for integer x >= r >= 0, a Fraction otherwise."""
    if r < 0:
        return 0
    num = Fraction(1)
    for i in range(r):
        num *= Fraction(q**x - q**i) if isinstance(x, int) else Fraction(q) ** x - q**i
        num /= q**r - q**i
    if num.denominator == 1:
        return int(num)
    return num


def invariant_subspace_bound(n: int, q: int, ell: int, r: int) -> float:
    c = 1 + 1 / (1 - q ** (-r))
    denom = q ** (n - ell * r - 1) - q ** (ell * r) - q ** (n / 2)
    if denom <= 0:
        return float("inf")
    return (c * q ** (ell * r) / denom) ** r


def wilson_interval(hits: int, trials: int, z: float = 3.0) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    ph = hits / trials
    den = 1 + z * z / trials
    centre = (ph + z * z / (2 * trials)) / den
    half = z * math.sqrt(ph * (1 - ph) / trials + z * z / (4 * trials * trials)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


def estimate_invariant_subspace_prob(desc, w: Word, basis, trials: int, seed: int = 0) -> dict:
    """Monte Carlo P(w(x) U = U) via joint trajectories of a basis of U with R = basis."""
    if len(w) == 0:
        raise TrajectoryError("the word must be nontrivial")
    basis = la.as_array(basis)
    space = desc.space if isinstance(desc, GroupDesc) else desc
    r = basis.shape[0]
    if kernel_supported(space):
        st = simulate(space, w, basis, trials, seed)
        hits = st.ends_in_span
    else:
        from .seeding import seed_stream

        rng = seed_stream(seed, 0)
        hits = 0
        ref = _SemiEchelon(space.ctx, space.n)
        for x in basis:
            ref.add(x)
        for _ in range(trials):
            rec = run_joint_trajectory(space, w, basis, rng=rng)
            hits += all(ref.contains(rec.lattice[i, -1]) for i in range(r))
    lo, hi = wilson_interval(hits, trials)
    return {
        "hits": hits,
        "trials": trials,
        "frequency": hits / trials,
        "interval": (lo, hi),
        "bound": invariant_subspace_bound(space.n, space.ctx.q, len(w), r),
    }


def estimate_small_support_prob(desc: GroupDesc, w: Word, deltas, trials: int, seed: int = 0) -> dict:
    """Monte Carlo P(supp w(x) <= (1 - delta) n) for each delta, on one shared sample."""
    from .groups import sample_uniform
    from .seeding import seed_stream
    from .words import evaluate

    if len(w) == 0:
        raise TrajectoryError("the word must be nontrivial")
    rng = seed_stream(seed, 0)
    n = desc.n
    supports = []
    for _ in range(trials):
        xs = [sample_uniform(desc, rng) for _ in range(w.k)]
        supports.append(la.support_of(desc.ctx, evaluate(desc.ctx, w, xs)))
    supports = np.array(supports)
    out = {}
    for delta in deltas:
        hits = int(np.sum(supports <= (1 - delta) * n))
        out[float(delta)] = {"hits": hits, "trials": trials, "frequency": hits / trials, "interval": wilson_interval(hits, trials)}
    return out


def proper_power_check(w: Word) -> None:
    if len(w) == 0:
        raise TrajectoryError("the word must be nontrivial")
    if is_proper_power(w)[0]:
        raise TrajectoryError(f"{w} is a proper power")
