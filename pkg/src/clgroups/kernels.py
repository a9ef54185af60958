"""Compiled trajectory kernels for prime fields, linear and symplectic kinds.

Vectors are int64 rows mod p. Each generator keeps two semi-echelon bases:
the forward one (rows span the known domain, partners are their images) and
the backward one (rows span the known image, partners are preimages).
Reducing a vector against a semi-echelon basis in insertion order leaves
zeros at every pivot, so membership is "residual == 0".

Statistics layout of the returned float64 vector (see STAT_NAMES).
"""

from __future__ import annotations

import numpy as np
from numba import njit

KIND_LINEAR = 0
KIND_SYMPLECTIC = 1

STAT_NAMES = (
    "trials",
    "closed_naive",
    "rb_sum",
    "rb_sumsq",
    "closed",
    "closed_single",
    "closed_single_at_end",
    "period_violations",
    "lemma_violations",
    "forced_applied",
    "ends_in_span",
    "closed_single_naive",
)
N_STATS = len(STAT_NAMES)


@njit(cache=True, inline="always")
def _barrett(p):
    return (1 << 32) // p + 1


@njit(cache=True, inline="always")
def _mod(t, p, m):
    """t mod p for 0 <= t < p * p (exact there since p * p < 2**32 / p)."""
    return t - p * ((t * m) >> 32)


@njit(cache=True, inline="always")
def _reduce(v, rows, partners, pivots, cnt, p, acc, track):
    n = v.shape[0]
    bm = _barrett(p)
    for m in range(cnt):
        c = v[pivots[m]]
        if c != 0:
            nc = p - c
            for x in range(n):
                v[x] = _mod(v[x] + nc * rows[m, x], p, bm)
            if track:
                for x in range(n):
                    acc[x] = _mod(acc[x] + c * partners[m, x], p, bm)
    for x in range(n):
        if v[x] != 0:
            return False
    return True


@njit(cache=True, inline="always")
def _insert(v, partner, rows, partners, pivots, cnt, p, inv):
    """Append residual v (nonzero, already reduced) with its partner; return new count."""
    n = v.shape[0]
    piv = -1
    for x in range(n):
        if v[x] != 0:
            piv = x
            break
    s = inv[v[piv]]
    bm = _barrett(p)
    for x in range(n):
        rows[cnt, x] = _mod(v[x] * s, p, bm)
        partners[cnt, x] = _mod(partner[x] * s, p, bm)
    pivots[cnt] = piv
    return cnt + 1


@njit(cache=True, inline="always")
def _in_span(v, rows, pivots, cnt, p, scratch):
    for x in range(v.shape[0]):
        scratch[x] = v[x]
    return _reduce(scratch, rows, rows, pivots, cnt, p, scratch, False)


@njit(cache=True, inline="always")
def _form(a, b, gram, p):
    n = a.shape[0]
    s = 0
    for x in range(n):
        if a[x] != 0:
            for y in range(n):
                s += a[x] * gram[x, y] * b[y]
    return s % p


@njit(cache=True, inline="always")
def _rref_aug(mat, m, ncol, p, inv, pivcols):
    """In-place RREF of the first m rows of mat (ncol columns + rhs column).

    Returns (rank, consistent)."""
    rank = 0
    for c in range(ncol):
        if rank == m:
            break
        pr = -1
        for r in range(rank, m):
            if mat[r, c] != 0:
                pr = r
                break
        if pr < 0:
            continue
        if pr != rank:
            for x in range(ncol + 1):
                tmp = mat[pr, x]
                mat[pr, x] = mat[rank, x]
                mat[rank, x] = tmp
        s = inv[mat[rank, c]]
        for x in range(ncol + 1):
            mat[rank, x] = (mat[rank, x] * s) % p
        for r in range(m):
            if r != rank and mat[r, c] != 0:
                f = mat[r, c]
                for x in range(ncol + 1):
                    mat[r, x] = (mat[r, x] - f * mat[rank, x]) % p
        pivcols[rank] = c
        rank += 1
    for r in range(rank, m):
        if mat[r, ncol] != 0:
            return rank, False
    return rank, True


@njit(cache=True, inline="always")
def _sample_free(kind, v, img_rows, img_part, img_piv, img_cnt, gram, p, inv, out, work, pivcols, isfree, scratch):
    """Uniform admissible result of a free query on v; writes into out."""
    n = v.shape[0]
    m = img_cnt if kind == KIND_SYMPLECTIC else 0
    rank = 0
    if m > 0:
        for r in range(m):
            # f(u, img_r) = f(v, dom_r), as a linear condition on u
            for x in range(n):
                s = 0
                for y in range(n):
                    s += gram[x, y] * img_rows[r, y]
                work[r, x] = s % p
            work[r, n] = _form(v, img_part[r], gram, p)
        rank, ok = _rref_aug(work, m, n, p, inv, pivcols)
    for x in range(n):
        isfree[x] = True
    for r in range(rank):
        isfree[pivcols[r]] = False
    # one 62-bit draw yields `per` uniform base-p digits
    per = 0
    top = 1
    while top <= ((1 << 62) - 1) // p:
        top *= p
        per += 1
    while True:
        left = 0
        buf = 0
        for x in range(n):
            if isfree[x]:
                if left == 0:
                    buf = np.random.randint(0, top)
                    left = per
                out[x] = buf % p
                buf //= p
                left -= 1
            else:
                out[x] = 0
        for r in range(rank):
            s = work[r, n]
            for x in range(n):
                if isfree[x] and work[r, x] != 0:
                    s -= work[r, x] * out[x]
            out[pivcols[r]] = s % p
        if not _in_span(out, img_rows, img_piv, img_cnt, p, scratch):
            return


@njit(cache=True, inline="always")
def _closure_weight(kind, v, target, img_rows, img_part, img_piv, img_cnt, gram, p, inv, work, pivcols, scratch):
    """P(result of the free query on v equals target | history)."""
    n = v.shape[0]
    if _in_span(target, img_rows, img_piv, img_cnt, p, scratch):
        return 0.0
    m = img_cnt
    if kind == KIND_LINEAR:
        return 1.0 / (float(p) ** n - float(p) ** m)
    for r in range(m):
        if _form(target, img_rows[r], gram, p) != _form(v, img_part[r], gram, p):
            return 0.0
    total = float(p) ** (n - m)
    # admissible-looking points inside span(img): coefficient system M c = rhs
    for kk in range(m):
        for ll in range(m):
            work[kk, ll] = _form(img_rows[ll], img_rows[kk], gram, p)
        work[kk, m] = _form(v, img_part[kk], gram, p)
    rank, ok = _rref_aug(work, m, m, p, inv, pivcols)
    inside = float(p) ** (m - rank) if ok else 0.0
    return 1.0 / (total - inside)


@njit(cache=True)
def _gcd(a, b):
    while b:
        a, b = b, a % b
    return a


@njit(cache=True)
def _has_period(letters, d):
    L = letters.shape[0]
    for i in range(L):
        if letters[i] != letters[i % d]:
            return False
    return True


@njit(cache=True)
def _random_invertible(n, p, inv, mat, work, pivcols):
    while True:
        for i in range(n):
            for j in range(n):
                mat[i, j] = np.random.randint(0, p)
                work[i, j] = mat[i, j]
            work[i, n] = 0
        rank, ok = _rref_aug(work, n, n, p, inv, pivcols)
        if rank == n:
            return


@njit(cache=True)
def _inverse(mat, n, p, inv, out, work):
    aug = np.zeros((n, 2 * n), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            aug[i, j] = mat[i, j]
        aug[i, n + i] = 1
    row = 0
    for c in range(n):
        pr = -1
        for r in range(row, n):
            if aug[r, c] != 0:
                pr = r
                break
        for x in range(2 * n):
            tmp = aug[pr, x]
            aug[pr, x] = aug[row, x]
            aug[row, x] = tmp
        s = inv[aug[row, c]]
        for x in range(2 * n):
            aug[row, x] = (aug[row, x] * s) % p
        for r in range(n):
            if r != row and aug[r, c] != 0:
                f = aug[r, c]
                for x in range(2 * n):
                    aug[r, x] = (aug[r, x] - f * aug[row, x]) % p
        row += 1
    for i in range(n):
        for j in range(n):
            out[i, j] = aug[i, n + j]


@njit(cache=True)
def run_batch(kind, p, app, written, k, starts, gram, inv, trials, seed, forced_close, materialized,
              detail, d_closed, d_ncoinc, d_tcoinc, free_counts, coinc_counts):
    """Simulate `trials` joint trajectories; app[t-1] is the letter applied at step t."""
    np.random.seed(seed)
    bm = _barrett(p)
    ell = app.shape[0]
    r, n = starts.shape
    stats = np.zeros(N_STATS, dtype=np.float64)
    frows = np.zeros((k, n, n), dtype=np.int64)
    fpart = np.zeros((k, n, n), dtype=np.int64)
    fpiv = np.zeros((k, n), dtype=np.int64)
    fcnt = np.zeros(k, dtype=np.int64)
    brows = np.zeros((k, n, n), dtype=np.int64)
    bpart = np.zeros((k, n, n), dtype=np.int64)
    bpiv = np.zeros((k, n), dtype=np.int64)
    bcnt = np.zeros(k, dtype=np.int64)
    hrows = np.zeros((n, n), dtype=np.int64)
    hpiv = np.zeros(n, dtype=np.int64)
    rrows = np.zeros((n, n), dtype=np.int64)
    rpiv = np.zeros(n, dtype=np.int64)
    cur = np.zeros((r, n), dtype=np.int64)
    v = np.zeros(n, dtype=np.int64)
    u = np.zeros(n, dtype=np.int64)
    acc = np.zeros(n, dtype=np.int64)
    res = np.zeros(n, dtype=np.int64)
    res2 = np.zeros(n, dtype=np.int64)
    scratch = np.zeros(n, dtype=np.int64)
    work = np.zeros((n + 1, 2 * n + 2), dtype=np.int64)
    pivcols = np.zeros(2 * n + 2, dtype=np.int64)
    isfree = np.zeros(n, dtype=np.bool_)
    mats = np.zeros((k, n, n), dtype=np.int64)
    imats = np.zeros((k, n, n), dtype=np.int64)
    ncoinc = np.zeros(r, dtype=np.int64)
    tcoinc = np.zeros(r, dtype=np.int64)
    # reference span R = span(starts)
    rcnt = 0
    for i in range(r):
        for x in range(n):
            res[x] = starts[i, x]
        if not _reduce(res, rrows, rrows, rpiv, rcnt, p, res, False):
            rcnt = _insert(res, res, rrows, rrows, rpiv, rcnt, p, inv)
    independent = rcnt == r

    for trial in range(trials):
        for j in range(k):
            fcnt[j] = 0
            bcnt[j] = 0
        hcnt = 0
        for x in range(rcnt):
            for y in range(n):
                hrows[x, y] = rrows[x, y]
            hpiv[x] = rpiv[x]
        hcnt = rcnt
        for i in range(r):
            ncoinc[i] = 0
            tcoinc[i] = 0
            for x in range(n):
                cur[i, x] = starts[i, x]
        if materialized:
            for j in range(k):
                _random_invertible(n, p, inv, mats[j], work, pivcols)
                _inverse(mats[j], n, p, inv, imats[j], work)
        weight = 1.0
        forced_used = False
        for t in range(1, ell + 1):
            letter = app[t - 1]
            j = abs(letter) - 1
            for i in range(r):
                for x in range(n):
                    v[x] = cur[i, x]
                    res[x] = v[x]
                    acc[x] = 0
                if letter > 0:
                    known = _reduce(res, frows[j], fpart[j], fpiv[j], fcnt[j], p, acc, True)
                else:
                    known = _reduce(res, brows[j], bpart[j], bpiv[j], bcnt[j], p, acc, True)
                last = t == ell and i == r - 1
                if known:
                    if materialized:
                        m_ = mats[j] if letter > 0 else imats[j]
                        for x in range(n):
                            s = 0
                            for y in range(n):
                                s += m_[x, y] * v[y]
                            u[x] = s % p
                    else:
                        for x in range(n):
                            u[x] = acc[x]
                    if last:
                        same = True
                        for x in range(n):
                            if u[x] != starts[i, x]:
                                same = False
                        weight = weight * (1.0 if same else 0.0)
                else:
                    free_counts[t - 1, i] += 1
                    if letter > 0:
                        irows, ipart, ipiv, icnt = brows[j], bpart[j], bpiv[j], bcnt[j]
                    else:
                        irows, ipart, ipiv, icnt = frows[j], fpart[j], fpiv[j], fcnt[j]
                    if last:
                        weight = weight * _closure_weight(kind, v, starts[i], irows, ipart, ipiv, icnt, gram, p, inv, work, pivcols, scratch)
                    did_force = False
                    if forced_close and t == ell and not materialized:
                        if _closure_weight(kind, v, starts[i], irows, ipart, ipiv, icnt, gram, p, inv, work, pivcols, scratch) > 0.0:
                            for x in range(n):
                                u[x] = starts[i, x]
                            did_force = True
                            forced_used = True
                    if not did_force:
                        if materialized:
                            m_ = mats[j] if letter > 0 else imats[j]
                            for x in range(n):
                                s = 0
                                for y in range(n):
                                    s += m_[x, y] * v[y]
                                u[x] = s % p
                        else:
                            _sample_free(kind, v, irows, ipart, ipiv, icnt, gram, p, inv, u, work, pivcols, isfree, scratch)
                    # record the new pair in both bases of generator j
                    if letter > 0:
                        a_ = v
                        b_ = u
                    else:
                        a_ = u
                        b_ = v
                    for x in range(n):
                        res[x] = a_[x]
                        acc[x] = 0
                    _reduce(res, frows[j], fpart[j], fpiv[j], fcnt[j], p, acc, True)
                    for x in range(n):
                        res2[x] = _mod(b_[x] + p - acc[x], p, bm)
                    fcnt[j] = _insert(res, res2, frows[j], fpart[j], fpiv[j], fcnt[j], p, inv)
                    for x in range(n):
                        res[x] = b_[x]
                        acc[x] = 0
                    _reduce(res, brows[j], bpart[j], bpiv[j], bcnt[j], p, acc, True)
                    for x in range(n):
                        res2[x] = _mod(a_[x] + p - acc[x], p, bm)
                    bcnt[j] = _insert(res, res2, brows[j], bpart[j], bpiv[j], bcnt[j], p, inv)
                    # coincidence: result inside span(R, all earlier vectors, v)
                    for x in range(n):
                        res[x] = u[x]
                    if _reduce(res, hrows, hrows, hpiv, hcnt, p, res, False):
                        coinc_counts[t - 1, i] += 1
                        ncoinc[i] += 1
                        if ncoinc[i] == 1:
                            tcoinc[i] = t
                    else:
                        hcnt = _insert(res, res, hrows, hrows, hpiv, hcnt, p, inv)
                if t == ell and i < r - 1:
                    for x in range(n):
                        if u[x] != starts[i, x]:
                            weight = 0.0
                            break
                for x in range(n):
                    cur[i, x] = u[x]
        # end of trial bookkeeping
        all_closed = True
        all_in_span = True
        single = True
        for i in range(r):
            closed_i = True
            for x in range(n):
                if cur[i, x] != starts[i, x]:
                    closed_i = False
            if not closed_i:
                all_closed = False
            for x in range(n):
                res[x] = cur[i, x]
            ins = _reduce(res, rrows, rrows, rpiv, rcnt, p, res, False)
            if not ins:
                all_in_span = False
            if ins and independent and ncoinc[i] == 0:
                stats[8] += 1
            if ncoinc[i] != 1:
                single = False
            if detail:
                d_closed[trial, i] = closed_i
                d_ncoinc[trial, i] = ncoinc[i]
                d_tcoinc[trial, i] = tcoinc[i]
        stats[0] += 1
        stats[2] += weight
        stats[3] += weight * weight
        if all_in_span:
            stats[10] += 1
        if forced_used:
            stats[9] += 1
        if all_closed:
            stats[4] += 1
            if not forced_used:
                stats[1] += 1
            if single and independent:
                stats[5] += 1
                if not forced_used:
                    stats[11] += 1
                d = ell
                at_end = True
                for i in range(r):
                    d = _gcd(d, tcoinc[i])
                    if tcoinc[i] != ell:
                        at_end = False
                if at_end:
                    stats[6] += 1
                if not _has_period(written, d):
                    stats[7] += 1
    return stats
