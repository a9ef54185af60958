import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import chi2_contingency

import oracles as O
from clgroups import snlab as sn
from clgroups.words import Word, parse_word


def brute_counts(n):
    return Counter(O.cycle_type_brute(p) for p in itertools.permutations(range(n)))


perms = st.integers(1, 12).flatmap(lambda n: st.permutations(list(range(n))))


# -- permutations -------------------------------------------------------------------------------------------

@given(perms, st.randoms())
def test_perm_algebra(p, rnd):
    n = len(p)
    a = sn.Perm(tuple(p))
    b = sn.Perm(tuple(rnd.sample(range(n), n)))
    c = sn.Perm(tuple(rnd.sample(range(n), n)))
    assert (a * b) * c == a * (b * c)
    assert (a * a.inverse()).images == tuple(range(n))
    assert a.cycle_type() == O.cycle_type_brute(p)
    assert sn.cycle_type(sn.compose(b.array, sn.compose(a.array, sn.perm_inverse(b.array)))) == a.cycle_type()
    e = rnd.randint(-5, 40)
    ref = np.arange(n)
    step = a.array if e >= 0 else sn.perm_inverse(a.array)
    for _ in range(abs(e)):
        ref = step[ref]
    assert np.array_equal(sn.perm_power(a.array, e), ref)
    assert sn.sign(a.cycle_type()) == (-1) ** sum(1 for i in range(n) for j in range(i + 1, n) if p[i] > p[j])


def test_perm_rejects_non_bijection():
    with pytest.raises(sn.SnError):
        sn.Perm((0, 0, 1))


def test_word_evaluation_order():
    x = np.array([1, 2, 0])
    y = np.array([0, 2, 1])
    got = sn.evaluate_perm_word(parse_word("x1 x2"), [x, y])
    assert np.array_equal(got, x[y])


# -- trajectories --------------------------------------------------------------------------------------------

def test_identity_gives_immediate_coincidence():
    rec = sn.run_trajectory_sn(parse_word("x1"), [3], 10, perms=[np.arange(10)])
    assert rec.queries[0].free and rec.queries[0].coincidence and rec.closed == (True,)


def test_closed_strands_have_coincidences():
    rng = np.random.default_rng(0)
    w = parse_word("x1 x2 x1^-1 x2 x2")
    for _ in range(3000):
        rec = sn.run_trajectory_sn(w, [0, 1], 12, rng=rng)
        for i, closed in enumerate(rec.closed):
            if closed:
                assert rec.coincidences(i)


def test_explicit_mode_follows_the_permutations():
    rng = np.random.default_rng(1)
    xs = [sn.random_perm(20, rng) for _ in range(2)]
    w = parse_word("x1 x2^-1 x1")
    rec = sn.run_trajectory_sn(w, [4, 7], 20, perms=xs)
    full = sn.evaluate_perm_word(w, xs)
    assert list(rec.lattice[:, -1]) == [full[4], full[7]]


@pytest.mark.parametrize("word", ["x1 x2", "x1 x2 x1^-1 x2", "x1 x1 x2"])
def test_lazy_and_explicit_agree_n30(word):
    w = parse_word(word)
    rng = np.random.default_rng(len(word))
    n = 30

    def pattern(rec):
        return rec.closed + tuple(q.coincidence for q in rec.queries)

    lazy = Counter(pattern(sn.run_trajectory_sn(w, [0], n, rng=rng)) for _ in range(30000))
    explicit = Counter(pattern(sn.run_trajectory_sn(w, [0], n, perms=[sn.random_perm(n, rng) for _ in range(w.k)]))
                       for _ in range(30000))
    keys = sorted(set(lazy) | set(explicit))
    table = np.array([[lazy.get(k, 0) for k in keys], [explicit.get(k, 0) for k in keys]])
    table = table[:, table.min(axis=0) >= 5]
    assert chi2_contingency(table)[1] > 1e-3


def test_lazy_coincidence_frequency_below_step_bound():
    n = 10**4
    w = parse_word("x1 x2 x1 x2^-1")
    rng = np.random.default_rng(3)
    trials = 100000
    free = np.zeros(4)
    hits = np.zeros(4)
    bounds = np.zeros(4)
    for _ in range(trials):
        for q in sn.run_trajectory_sn(w, [0], n, rng=rng).queries:
            if q.free:
                free[q.t - 1] += 1
                hits[q.t - 1] += q.coincidence
                bounds[q.t - 1] = max(bounds[q.t - 1], q.bound)
    for t in range(4):
        if free[t]:
            assert hits[t] / free[t] <= bounds[t] + 3 * math.sqrt(bounds[t] / free[t])


# -- fixed points ---------------------------------------------------------------------------------------------

def _bound_exact(n, ell, f):
    best = (1.0, 0)
    for r in range(1, f):
        if 2 * r >= f or r * ell >= n:
            break
        v = Fraction(math.comb(n, r)) * Fraction(r * ell * ell, n - r * ell) ** r / math.comb(f, r)
        if v < best[0]:
            best = (float(v), r)
    return best


@pytest.mark.parametrize("n,ell,f", [(10**4, 4, 400), (100, 1, 50), (1000, 3, 60), (50, 2, 10), (500, 5, 3)])
def test_fix_tail_bound_formula(n, ell, f):
    got, r = sn.fix_tail_bound(n, ell, f)
    want, wr = _bound_exact(n, ell, f)
    assert r == wr and got == pytest.approx(want, rel=1e-9)


def test_fix_tail_reference_value():
    bound, r = sn.fix_tail_bound(10**4, 4, 400)
    assert r == 9 and bound == pytest.approx(1.14e-4, rel=0.01)


def test_fix_tail_examples():
    rng = np.random.default_rng(0)
    rep = sn.estimate_fix_tail(parse_word("x1"), 100, 50, 100000, rng)
    assert rep.frequency < 1e-3
    counts = sn.fix_counts(parse_word("x1 x2"), 40, 4000, np.random.default_rng(1))
    assert np.count_nonzero(counts >= 0) == 4000
    tails = [np.count_nonzero(counts >= f) for f in range(8)]
    assert all(a >= b for a, b in zip(tails, tails[1:]))
    with pytest.raises(sn.SnError):
        sn.estimate_fix_tail(Word(1, ()), 10, 1, 10, rng)


def test_fixed_points_of_uniform_permutation_have_mean_one():
    counts = sn.fix_counts(parse_word("x1"), 50, 20000, np.random.default_rng(2))
    assert abs(counts.mean() - 1.0) < 4 * math.sqrt(1.0 / 20000)


def test_binomial_moments_respect_bound():
    rep = sn.estimate_fix_tail(parse_word("x1 x2 x1^-1 x2^-1"), 200, 10, 4000, np.random.default_rng(3))
    for r, (est, bound) in rep.moments.items():
        assert est <= bound + 0.5
    assert rep.to_json()["bound_r"] == rep.bound_r


# -- cycle-type classes ---------------------------------------------------------------------------------------

@pytest.mark.parametrize("n", range(1, 9))
def test_type_recursion_matches_enumeration(n):
    assert O.counts_by_type(n) == dict(brute_counts(n))


@pytest.mark.parametrize("n", range(1, 13))
def test_type_densities_against_exhaustive_counts(n):
    for t in O.counts_by_type(n):
        d, s = sn.types_density_and_sign([t])
        assert (d, s) == O.density_and_sign_from_counts(n, [t])


@pytest.mark.parametrize("n", range(6, 10))
def test_brute_force_density_routine(n):
    # alt1-shaped types from the non-strict bookkeeping where it exists, plus a fixed pair otherwise
    try:
        p = sn.alt_bookkeeping("alt1", n, strict=False)
        types = p.types
    except sn.SnError:
        types = [(3, 2, 1) + (1,) * (n - 6), (3, 3) + (1,) * (n - 6)]
    assert sn.brute_force_type_density(n, types) == O.density_and_sign_from_counts(n, types)


def test_no_strict_alt1_bookkeeping_up_to_twelve():
    for n in range(1, 13):
        with pytest.raises(sn.SnError):
            sn.alt_bookkeeping("alt1", n)
    assert sn.alt_bookkeeping("alt1", 14).n_prime == 5


def test_non_strict_small_n_breaks_the_sign_identity():
    # n = 10: n' = 1 merges with the fixed points and the two types no longer cancel
    p = sn.alt_bookkeeping("alt1", 10, strict=False)
    assert (p.r, p.n_prime) == (4, 1)
    assert O.density_and_sign_from_counts(10, p.types)[1] != 0


@pytest.mark.parametrize("n", [14, 16, 17, 19, 20, 23, 26, 30])
def test_alt1_density_and_sign_exact(n):
    res = sn.class_density_and_sign("alt1", n)
    p = sn.alt_bookkeeping("alt1", n)
    dens, sg = O.density_and_sign_from_counts(n, p.types)
    assert res["density"] == dens == res["closed_form"]
    assert res["sign_inner_product"] == sg == 0
    # 1/(3 r n') with r in {4, 5} and n - 10 <= n' <= n - 9
    assert Fraction(1, 15 * n) <= res["density"] <= Fraction(1, 12 * (n - 10))


@pytest.mark.parametrize("n", [200, 500, 1000])
def test_alt1_density_large_n(n):
    res = sn.class_density_and_sign("alt1", n)
    assert res["density"] == res["closed_form"] and res["sign_inner_product"] == 0
    assert 1 / 16 < float(res["density"]) * n < 1 / 11


@pytest.mark.parametrize("n", [302, 303, 400])
def test_alt2_density_and_sign_exact(n):
    res = sn.class_density_and_sign("alt2", n)
    assert res["density"] == res["closed_form"] == Fraction(1, 101 * res["n_prime"])
    assert res["sign_inner_product"] == 0
    with pytest.raises(sn.SnError):
        sn.alt_bookkeeping("alt2", 301)


@pytest.mark.parametrize("m", range(0, 9))
def test_signed_count(m):
    assert sn.signed_count(m) == sum((-1) ** (m - len(t)) * c for t, c in O.counts_by_type(m).items())


def _element_of_type(ctype, rng):
    n = sum(ctype)
    pts = rng.permutation(n)
    img = np.arange(n)
    pos = 0
    for c in ctype:
        cyc = pts[pos:pos + c]
        img[cyc] = np.roll(cyc, -1)
        pos += c
    return img


def test_power_to_small_cycle():
    rng = np.random.default_rng(0)
    p = sn.alt_bookkeeping("alt1", 40)
    for t in p.types:
        g = _element_of_type(t, rng)
        h, e = sn.power_to_small_cycle(g, p)
        assert e == 2 * p.r * p.n_prime
        assert O.cycle_type_brute(h) == (3,) + (1,) * 37
    q = sn.alt_bookkeeping("alt2", 310)
    g = _element_of_type((101, q.n_prime) + (2,) * (q.r // 2) + (1,) * (q.r % 2), rng)
    h, e = sn.power_to_small_cycle(g, q)
    assert e == math.factorial(q.r) * q.n_prime
    assert O.cycle_type_brute(h) == (101,) + (1,) * 209
    with pytest.raises(sn.SnError):
        sn.power_to_small_cycle(np.arange(40), p)


def test_planted_search_and_three_cycle_orbit():
    rng = np.random.default_rng(4)
    n = 40
    p = sn.alt_bookkeeping("alt1", n)
    g = _element_of_type(p.types[0], rng)
    y, z = sn.random_perm(n, rng), sn.random_perm(n, rng)
    x = sn.compose(g, sn.perm_inverse(y))
    u, hit, tested = sn.find_word_into_cycle_class([x, y, z], p, 3)
    assert len(u) <= 1 and sn.in_cycle_class(p, hit)
    base = Word(3, (1,) + tuple(a + (1 if a > 0 else -1) for a in u.letters))
    assert O.cycle_type_brute(sn.evaluate_perm_word(base, [x, y, z])) in p.types
    orbit, _ = sn.three_cycle_orbit([sn.random_perm(7, rng) for _ in range(3)])
    assert orbit.size == 2 * math.comb(7, 3)


def test_pipeline_small_n():
    rep = sn.sn_pipeline(30, seed=1)
    data = rep.to_json()
    assert rep.ok
    three = data["stages"]["three_cycle"]
    assert three["verified"] and three["word_length"] <= three["limit"]
    orbit = data["stages"]["orbit"]
    assert orbit["size"] == 2 * math.comb(30, 3)
    assert orbit["diameter"] <= 10 * math.log(orbit["size"])
    assert 0 < orbit["lambda"] < 1
