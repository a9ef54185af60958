"""The ten acceptance criteria, each at its stated tolerance.

Every test records one verdict line in RESULTS before asserting; conftest
prints the lines in the terminal summary. Run alone with

    pytest tests/test_acceptance.py -v -m acceptance
"""

import itertools
import json
import math
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

import oracles as O
from clgroups import forms as fm
from clgroups import linalg as la
from clgroups import normalsets as ns
from clgroups import snlab as sn
from clgroups.gf import field_of_size
from clgroups.groups import enumerate_small, group_order, make_group, parse_group, sample_uniform
from clgroups.harness import load_config, run_experiment
from clgroups.spectral import cayley_diameter_bfs, dense_lambda, estimate_lambda_power, orbit_bfs, random_generators
from clgroups.trajectories import simulate
from clgroups.words import cyclic_reduce, is_proper_power, parse_word

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"
GOLDEN = Path(__file__).resolve().parent / "golden"

RESULTS: dict[int, str] = {}


def record(number: int, title: str, ok: bool, detail: str) -> None:
    RESULTS[number] = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    print(RESULTS[number])


def _prime_powers(limit):
    import sympy

    return [q for q in range(2, limit + 1) if len(sympy.factorint(q)) == 1]


# 1 -------------------------------------------------------------------------------------------------

def test_quadric_counts_within_bound():
    rng = np.random.default_rng(1)
    spaces = cells = failures = sampled = mismatches = 0
    worst = 0.0
    for q in _prime_powers(3**8):
        ctx = field_of_size(q)
        n = 1
        while q**n <= 3**8:
            for kind in fm.KINDS:
                try:
                    sp = fm.standard_space(kind, n, ctx)
                except fm.FormError:
                    continue
                spaces += 1
                centre_den = O.q0(sp)
                slack = q ** (n / 2)
                for s, (lo, hi, c) in O.census_extremes(sp, 2).items():
                    centre = q ** (n - s) / centre_den
                    cells += c
                    failures += not (centre - slack <= lo and hi <= centre + slack)
                    worst = max(worst, max(centre - lo, hi - centre) / slack)
                # the library counter on random cosets, against the bound and (small cosets) brute force
                for _ in range(2):
                    s = int(rng.integers(0, min(2, n) + 1))
                    w = _random_full_rank(ctx, n - s, n, rng)
                    v0 = rng.integers(0, q, size=n)
                    tgt = int(rng.choice(O.targets(sp)))
                    got = fm.count_quadric_points(sp, (v0, w), tgt)
                    lo, hi = fm.quadric_bound(sp, s)
                    sampled += 1
                    failures += not (lo <= got <= hi)
                    if q ** (n - s) <= 729:
                        mismatches += got != O.count_on_coset(sp, v0, w, tgt)
            n += 1
    ok = failures == 0 and mismatches == 0
    record(1, "quadric counting", ok,
           f"{spaces} spaces, {cells} (coset, target) cells exhaustive, {sampled} library samples, "
           f"{failures} outside bound, {mismatches} library/brute mismatches, worst |dev|/q^(n/2) = {worst:.3f}")
    assert ok


def _random_full_rank(ctx, rows, n, rng):
    while True:
        w = rng.integers(0, ctx.q, size=(rows, n))
        if la.rank(ctx, w) == rows:
            return w


# 2 -------------------------------------------------------------------------------------------------

WITT_SPACES = [("linear", 6, 3), ("symplectic", 6, 3), ("orthogonal_plus", 6, 3), ("orthogonal_minus", 8, 2),
               ("orthogonal_odd", 5, 3), ("unitary", 4, 4)]


def test_witt_extension():
    per_kind = 10**4
    rows = []
    literal_ok = True
    nondegenerate_ok = True
    for kind, n, q in WITT_SPACES:
        sp = fm.standard_space(kind, n, field_of_size(q))
        ctx = sp.ctx
        group = make_group(sp, "G")
        ident = fm.invariant_identity(sp)
        rng = np.random.default_rng(2)
        verified = special_ok = impossible = certified = 0
        for i in range(per_kind):
            h = sample_uniform(group, rng)
            k = int(rng.integers(1, n - 1))  # k <= n - 2
            us = _random_independent(ctx, k, n, rng)
            pairs = [(u, la.matmul(ctx, h, u)) for u in us]
            g = fm.extend_isometry(sp, pairs, rng)
            good = sp.is_isometry(g) and all(np.array_equal(la.matmul(ctx, g, u), v) for u, v in pairs)
            if i % 50 == 0:
                good = good and O.preserves_form(sp, g)
            verified += good
            try:
                gs = fm.extend_isometry(sp, pairs, rng, special=True)
                special_ok += sp.is_isometry(gs) and fm.abelian_invariant(sp, gs) == ident and all(
                    np.array_equal(la.matmul(ctx, gs, u), v) for u, v in pairs)
            except fm.FormError:
                impossible += 1
                # the rejected sources span a degenerate subspace: h is itself an extension, and with
                # no room in the complement every extension shares h's invariant
                free = _free_dim(sp, us)
                certified += free < (2 if sp.is_orthogonal else 1) and (
                    free > 0 or fm.abelian_invariant(sp, h) != ident)
        rows.append(f"{kind}({n},{q}): {verified}/{per_kind} verified, {special_ok} special, "
                    f"{impossible} without SCl extension ({certified} certified degenerate)")
        literal_ok &= verified == per_kind and special_ok == per_kind
        nondegenerate_ok &= verified == per_kind and special_ok + impossible == per_kind and certified == impossible
    record(2, "Witt extension", literal_ok,
           "; ".join(rows) + ("" if literal_ok else
                              f". Every miss is a degenerate source span where no SCl extension exists "
                              f"({'all certified' if nondegenerate_ok else 'NOT all certified'})"))
    assert nondegenerate_ok
    assert literal_ok, "k <= n-2 does not guarantee an SCl extension when <u_i> is degenerate"


def _random_independent(ctx, k, n, rng):
    us = []
    while len(us) < k:
        u = rng.integers(0, ctx.q, size=n)
        if la.rank(ctx, np.array(us + [u])) == len(us) + 1:
            us.append(u)
    return np.array(us)


def _free_dim(sp, us):
    ctx = sp.ctx
    k = len(us)
    gram = sp.form(us, us)
    free = sp.n - k - (k - O.rank_field(ctx, gram))
    if sp.is_orthogonal and ctx.p == 2:
        for c in O.all_vecs(ctx.q, k):
            if c.any() and not la.matmul(ctx, gram, c).any() and O.q_value(sp, la.matmul(ctx, c, us)):
                return max(free, 2)
    return free


# 3 -------------------------------------------------------------------------------------------------

def test_centralizer_bound():
    rows = []
    ok = True
    for name, q, special in [("GL_2(2)", 2, False), ("GL_2(3)", 3, False), ("SL_2(3)", 3, True), ("Sp_2(3)", 3, True)]:
        elems = [np.array(m) for m in O.all_matrices_p(2, q) if O.det_p(m, q) != 0]
        if special:
            elems = [g for g in elems if O.det_p(g.tolist(), q) == 1]
        if name.startswith("Sp"):
            sp = fm.standard_space("symplectic", 2, field_of_size(q))
            elems = [g for g in elems if O.preserves_form(sp, g)]
        ctx = field_of_size(q)
        keys = [g.tobytes() for g in elems]
        worst = 0.0
        for g in elems:
            cent = sum(1 for h in elems if np.array_equal(la.matmul(ctx, g, h), la.matmul(ctx, h, g)))
            supp = la.support_of(ctx, g)
            scalar = g[0, 1] == 0 and g[1, 0] == 0 and g[0, 0] == g[1, 1]
            ok &= supp == (0 if scalar else 1)
            bound = q ** (2 * (2 - supp))
            ok &= cent <= bound
            worst = max(worst, cent / bound)
        ok &= len(set(keys)) == len(elems)
        rows.append(f"{name} |G|={len(elems)} max |C(g)|/bound={worst:.3f}")
    record(3, "centralizer bound", ok, "; ".join(rows))
    assert ok


# 4 -------------------------------------------------------------------------------------------------

SAMPLER_GROUPS = ["GL(2,5)", "Sp(4,2)", "GO-(4,2)", "GO(3,5)", "GU(3,4)"]


def test_sampler_exact():
    draws = 10**5
    rows = []
    ok = True
    for name in SAMPLER_GROUPS:
        desc = parse_group(name)
        elems = enumerate_small(desc)
        assert len(elems) == group_order(desc) <= 1000
        index = {g.tobytes(): i for i, g in enumerate(elems)}
        counts = np.zeros(len(elems), dtype=np.int64)
        rng = np.random.default_rng(4)
        outside = 0
        for _ in range(draws):
            j = index.get(sample_uniform(desc, rng).tobytes())
            if j is None:
                outside += 1
            else:
                counts[j] += 1
        pval = stats.chisquare(counts).pvalue
        ok &= outside == 0 and pval > 1e-3
        rows.append(f"{name} (|G|={len(elems)}) p={pval:.3f}")
    record(4, "sampler exactness", ok, "; ".join(rows) + f"; {draws} draws each")
    assert ok


# 5 -------------------------------------------------------------------------------------------------

COINCIDENCE_WORDS = ["x1 x2", "x1 x2^-1 x1", "x1 x2 x1^-1 x2^-1", "x1 x1 x2 x1^-1 x2",
                     "x1 x2 x1 x2^-1 x1^-1 x2^-1"]


def test_one_coincidence_structure():
    target = 10**6
    per = target // (2 * len(COINCIDENCE_WORDS))
    totals = dict(closed=0, single=0, at_end=0, period=0, lemma=0)
    for w in COINCIDENCE_WORDS:
        word = parse_word(w)
        assert len(word) <= 6 and len(cyclic_reduce(word)[0]) == len(word) and not is_proper_power(word)[0]
    for gi, name in enumerate(["GL(16,2)", "Sp(8,3)"]):
        desc = parse_group(name)
        start = np.zeros((1, desc.n), dtype=np.int64)
        start[0, 0] = 1
        for wi, w in enumerate(COINCIDENCE_WORDS):
            closed = 0
            chunk = 0
            while closed < per:
                st = simulate(desc, parse_word(w), start, 2 * (per - closed) + 1000, seed=1000 * gi + 10 * wi + chunk,
                              forced_close=True)
                chunk += 1
                closed += st.closed
                totals["closed"] += st.closed
                totals["single"] += st.closed_single
                totals["at_end"] += st.closed_single_at_end
                totals["period"] += st.period_violations
                totals["lemma"] += st.lemma_violations
    ok = (totals["closed"] >= target and totals["period"] == 0 and totals["lemma"] == 0
          and totals["single"] == totals["at_end"])
    record(5, "one-coincidence structure", ok,
           f"{totals['closed']} closed trajectories, {totals['single']} single-coincidence closures, "
           f"{totals['at_end']} with the coincidence at step l, {totals['period']} period violations, "
           f"{totals['lemma']} lemma violations")
    assert ok


# 6 -------------------------------------------------------------------------------------------------

def test_return_probability():
    gl = run_experiment(load_config(CONFIGS / "return_prob_gl16_2.json"))
    sp = run_experiment(load_config(CONFIGS / "return_prob_sp8_3.json"))
    rows = []
    ok = True
    for w, s in gl.summary.items():
        word = parse_word(w)
        good = (s["trials"] >= 10**8 and 0.9 <= s["N_freq"] <= 1.1 and 2 <= len(word) <= 4
                and abs(s["N_rb"] - 1) <= s["window"])
        ok &= good
        rows.append(f"GL_16(2) {w}: N*freq={s['N_freq']:.4f} (hits {s['hits']}), N*RB={s['N_rb']:.5f}")
    assert len(gl.summary) == 3
    for w, s in sp.summary.items():
        good = s["trials"] >= 10**8 and 0.8 <= s["N_rb"] <= 1.2
        ok &= good
        rows.append(f"Sp_8(3) r=2 {w}: N*RB={s['N_rb']:.4f}+-{s['N_rb_stderr']:.4f}, "
                    f"N*freq={s['N_freq']:.3f} (hits {s['hits']}, N={s['N']})")
    record(6, "return probability", ok, "; ".join(rows))
    assert ok


# 7 -------------------------------------------------------------------------------------------------

SMALL_ORBITS = [("GL(8,2)", 4), ("Sp(6,2)", 3), ("GO+(6,2)", 3), ("GO(5,3)", 3), ("GU(3,4)", 3), ("SL(3,3)", 3)]


def test_spectral_gap():
    gl = run_experiment(load_config(CONFIGS / "lambda_gl10_2.json"))
    cl = run_experiment(load_config(CONFIGS / "lambda_sl5_2_transvections.json"))
    gaps = [t["dense_gap"] for t in cl.tasks if "dense_gap" in t]
    rng = np.random.default_rng(7)
    for name, k in SMALL_ORBITS:
        desc = parse_group(name)
        for _ in range(3):
            base = np.zeros(desc.n, dtype=np.int64)
            base[0] = 1
            orbit = orbit_bfs(desc, random_generators(desc, k, rng), base)
            if orbit.size <= 500:
                rep = estimate_lambda_power(orbit, tol=1e-12, rng=rng)
                gaps.append(abs(rep.lam - dense_lambda(orbit)))
    # transvections of SL_n(q): (q^n - 1)(q^(n-1) - 1)/(q - 1), 465 for SL_5(2)
    n_transvections = (2**5 - 1) * (2**4 - 1)
    ok = (gl.summary["below_threshold"] >= 19 and all(t["orbit_size"] == 1023 for t in gl.tasks)
          and cl.summary["below_threshold"] >= 19 and all(t["orbit_size"] == n_transvections for t in cl.tasks)
          and max(gaps) <= 1e-6)
    floor = math.sqrt(2 * 8 - 1) / 8
    record(7, "spectral gap", ok,
           f"GL_10(2) vectors lambda<=0.9 in {gl.summary['below_threshold']}/20 (max {gl.summary['lambda_max']:.3f}, "
           f"floor {floor:.3f}); SL_5(2) transvections lambda<=0.95 in {cl.summary['below_threshold']}/20 "
           f"(class size {cl.tasks[0]['orbit_size']}) "
           f"(max {cl.summary['lambda_max']:.3f}); power vs dense max gap {max(gaps):.2e} on {len(gaps)} orbits")
    assert ok


# 8 -------------------------------------------------------------------------------------------------

CD_KINDS = [("GL(7,3)", 2), ("Sp(10,3)", 2), ("GO+(10,3)", 2), ("GO-(12,3)", 2), ("GO(11,3)", 2), ("GU(10,4)", 2),
            ("GO+(14,2)", 3)]


def test_reaching_minimal_degree_set():
    rec = run_experiment(load_config(CONFIGS / "xwz_gl20_2.json"))
    found = [t for t in rec.tasks if t["found"]]
    witnesses_ok = all(t["verified"] and t["witness_is_transvection"] for t in found)
    rows = [f"GL_20(2) d=6 L=8: found {len(found)}/20, witnesses re-verified {witnesses_ok}"]
    rng = np.random.default_rng(8)
    built_ok = True
    for name, d in CD_KINDS:
        desc = parse_group(name)
        ctx = desc.ctx
        s = 2 if desc.space.is_orthogonal else 1
        levels = sorted(desc.level)
        good = 0
        for i in range(100):
            spec = ns.make_spec(desc, d, levels[i % len(levels)])
            g = ns.build_cd_element(spec, ns.random_cd_parameters(spec, rng))
            h = la.mat_pow(ctx, g, spec.exponent)
            rep = ns.membership_report(spec, g)
            good += (rep["in_group"] and rep["power_in_M"]
                     and O.rank_field(ctx, ctx.sub(h, la.identity(desc.n))) == s)
        built_ok &= good == 100
        rows.append(f"{name} d={d}: {good}/100")
    ok = len(found) >= 18 and witnesses_ok and built_ok
    record(8, "reaching the minimal-degree set", ok, "; ".join(rows))
    assert ok


# 9 -------------------------------------------------------------------------------------------------

def test_sn_pipeline():
    rec = run_experiment(load_config(CONFIGS / "sn_pipeline_200.json"))
    successes = [t for t in rec.tasks if t["ok"]]
    longest = max((t["stages"]["three_cycle"]["word_length"] for t in successes), default=0)
    limit = 40 * 200 * math.log(200)
    pipeline_ok = len(successes) >= 18 and longest <= limit

    # exact cycle-type densities and signs, n <= 12, against independent counting
    dens_ok = True
    for n in range(1, 13):
        counts = O.counts_by_type(n)
        for t in counts:
            dens_ok &= sn.types_density_and_sign([t]) == O.density_and_sign_from_counts(n, [t])
        if n <= 9:
            brute = {}
            for p in itertools.permutations(range(n)):
                ct = O.cycle_type_brute(p)
                brute[ct] = brute.get(ct, 0) + 1
            dens_ok &= brute == counts
    valid_small = [(v, n) for v in ("alt1", "alt2") for n in range(1, 13) if _valid(v, n)]
    sign_ok = True
    checked = []
    for v, n in valid_small:
        res = sn.class_density_and_sign(v, n)
        p = sn.alt_bookkeeping(v, n)
        sign_ok &= (res["density"], res["sign_inner_product"]) == O.density_and_sign_from_counts(n, p.types)
        sign_ok &= res["sign_inner_product"] == 0
    # the first valid alt1 degrees, by exact class counting
    for n in (14, 16, 17, 19, 20):
        res = sn.class_density_and_sign("alt1", n)
        p = sn.alt_bookkeeping("alt1", n)
        sign_ok &= (res["density"], res["sign_inner_product"]) == O.density_and_sign_from_counts(n, p.types)
        sign_ok &= res["sign_inner_product"] == 0 and res["density"] == res["closed_form"]
        checked.append(n)

    tail = run_experiment(load_config(CONFIGS / "fix_tail_1e4.json"))
    tail_rows = []
    tail_ok = True
    for t in tail.tasks:
        assert (t["n"], t["f"]) == (10**4, 400) and len(parse_word(t["word"])) == 4
        tail_ok &= t["frequency"] <= 10 * t["bound"]
        tail_rows.append(f"{t['word']} freq {t['frequency']:.2e} vs 10*bound {10 * t['bound']:.2e}")

    ok = pipeline_ok and dens_ok and sign_ok and tail_ok
    record(9, "S_n pipeline", ok,
           f"3-cycle found in {len(successes)}/20 (longest word {longest}, limit {limit:.0f}); "
           f"densities exact for n<=12 ({dens_ok}); valid bookkeeping n<=12: {valid_small or 'none'}, "
           f"sign=0 at n={checked} ({sign_ok}); fixed-point tail: " + "; ".join(tail_rows))
    assert ok


def _valid(variant, n):
    try:
        sn.alt_bookkeeping(variant, n)
    except sn.SnError:
        return False
    return True


# 10 ------------------------------------------------------------------------------------------------

def test_exact_diameters():
    rows = []
    ok = True
    files = sorted(GOLDEN.glob("diameter_*.json"))
    for path in files:
        gold = json.loads(path.read_text())
        desc = parse_group(gold["group"])
        gens = [np.array(g, dtype=np.int64) for g in gold["generators"]]
        runs = [cayley_diameter_bfs(desc.ctx, gens, order=desc) for _ in range(2)]
        same = all(r.diameter == gold["diameter"] and list(r.spheres) == gold["spheres"] for r in runs)
        ok &= same and gold["order"] <= 10**5
        rows.append(f"{gold['group']} ({gold['order']}): {runs[0].diameter}")
    ok &= len(files) >= 3
    record(10, "exact diameters", ok, "; ".join(rows))
    assert ok
