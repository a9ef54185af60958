"""Orbits, Schreier-graph spectra, return probabilities and exact diameters.

An orbit is stored as a bijective index (encoded point -> position) plus one
permutation array per letter: perms[2j] is generator j+1 and perms[2j+1] its
inverse. The normalized adjacency operator is then
    (A x)[w] = mean over letters s of x[s(w)],
which costs O(kN) per application and is symmetric because inverses are present.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from . import forms as fm
from . import linalg as la
from . import trajectories as tj
from .groups import GroupDesc, group_order
from .words import Word, cyclic_reduce, is_proper_power

__all__ = [
    "OrbitIndex",
    "SpectralReport",
    "orbit_bfs",
    "orbit_from_permutations",
    "witt_orbit_size",
    "estimate_lambda_power",
    "dense_spectrum",
    "estimate_return_prob",
    "trace_moment",
    "cayley_diameter_bfs",
    "schreier_diameter_on_class",
    "write_orbit",
    "read_orbit",
]

ORBIT_MAGIC = b"CLNORB1"
DEFAULT_BUDGET = 10**7


class SpectralError(RuntimeError):
    pass


class OrbitBudgetExceeded(SpectralError):
    pass


# -- point encodings --------------------------------------------------------------------------

class _Encoder:
    """Flattened arrays of field elements to hashable keys (int64 when it fits, bytes otherwise)."""

    def __init__(self, q: int, size: int):
        self.small = size * math.log2(q) < 62
        self.weights = (q ** np.arange(size, dtype=np.int64)) if self.small else None

    def keys(self, flat: np.ndarray):
        if self.small:
            return (flat @ self.weights).tolist()
        flat = np.ascontiguousarray(flat.astype(np.uint8 if flat.max(initial=0) < 256 else np.int64))
        return [row.tobytes() for row in flat]


@dataclass
class OrbitIndex:
    action: str  # "vectors" | "conjugation" | "abstract"
    base: np.ndarray | None
    points: np.ndarray | None  # (N, ...) point array in index order
    perms: np.ndarray  # (2k, N) int64
    index: dict = field(default_factory=dict, repr=False)
    predicted_size: int | None = None
    encoder: _Encoder | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return int(self.perms.shape[1])

    @property
    def k(self) -> int:
        return self.perms.shape[0] // 2

    def lookup(self, point) -> int:
        if self.encoder is None:
            raise SpectralError("abstract orbits have no point lookup")
        return self.index[self.encoder.keys(la.as_array(point).reshape(1, -1))[0]]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Normalized adjacency operator on a vector (or an (N, m) block)."""
        acc = np.zeros_like(x, dtype=np.float64)
        for perm in self.perms:
            acc += x[perm]
        return acc / self.perms.shape[0]

    def dense(self) -> np.ndarray:
        n = self.size
        a = np.zeros((n, n))
        rows = np.arange(n)
        for perm in self.perms:
            np.add.at(a, (rows, perm), 1.0)
        return a / self.perms.shape[0]

    def sparse(self) -> csr_matrix:
        n = self.size
        rows = np.tile(np.arange(n), self.perms.shape[0])
        cols = self.perms.reshape(-1)
        return csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))

    @property
    def connected(self) -> bool:
        return connected_components(self.sparse(), directed=False)[0] == 1


def _check_permutations(perms: np.ndarray) -> None:
    n = perms.shape[1]
    for j, perm in enumerate(perms):
        if np.bincount(perm, minlength=n).max(initial=0) != 1 or perm.min(initial=0) < 0:
            raise SpectralError(f"letter {j} does not act as a permutation of the orbit")
    for j in range(0, perms.shape[0], 2):
        if not np.array_equal(perms[j][perms[j + 1]], np.arange(n)):
            raise SpectralError(f"letters {j} and {j + 1} are not mutually inverse")


def orbit_from_permutations(perms) -> OrbitIndex:
    """Abstract orbit from forward permutations (inverses are added)."""
    fwd = [np.asarray(p, dtype=np.int64) for p in perms]
    full = []
    for p in fwd:
        full.extend([p, np.argsort(p)])
    arr = np.array(full, dtype=np.int64).reshape(len(full), -1)
    _check_permutations(arr)
    return OrbitIndex("abstract", None, None, arr)


def _act(ctx, action: str, g: np.ndarray, ginv: np.ndarray, pts: np.ndarray) -> np.ndarray:
    if action == "vectors":  # pts (m, r, n); each row vector v -> g v
        return la.matmul(ctx, pts, g.T[None])
    return la.matmul(ctx, la.matmul(ctx, g[None], pts), ginv[None])


def orbit_bfs(desc, generators, base, action: str = "vectors", budget: int = DEFAULT_BUDGET) -> OrbitIndex:
    """Orbit of `base` under the group generated by `generators`, with letter permutations.

    action "vectors": base is an (r, n) tuple of vectors, g acts on each;
    action "conjugation": base is a matrix, g acts by m -> g m g^{-1}.
    """
    space = desc.space if isinstance(desc, GroupDesc) else desc
    ctx = space.ctx
    gens = [la.as_array(g) for g in generators]
    invs = [la.inverse(ctx, g) for g in gens]
    base = la.as_array(base)
    if action == "vectors":
        base = base.reshape(-1, space.n)
    elif action != "conjugation":
        raise SpectralError(f"unknown action {action!r}")
    enc = _Encoder(ctx.q, base.size)
    index = {enc.keys(base.reshape(1, -1))[0]: 0}
    points = [base[None]]
    frontier = base[None]
    while frontier.shape[0]:
        new_pts = []
        for g, gi in zip(gens + invs, invs + gens):
            imgs = _act(ctx, action, g, gi, frontier)
            for key, img in zip(enc.keys(imgs.reshape(imgs.shape[0], -1)), imgs):
                if key not in index:
                    index[key] = len(index)
                    new_pts.append(img)
                    if len(index) > budget:
                        raise OrbitBudgetExceeded(f"orbit exceeds the budget of {budget} points")
        frontier = np.array(new_pts) if new_pts else np.zeros((0,) + base.shape, dtype=np.int64)
        if new_pts:
            points.append(frontier)
    pts = np.concatenate(points)
    flat = pts.reshape(pts.shape[0], -1)
    perms = np.zeros((2 * len(gens), pts.shape[0]), dtype=np.int64)
    for j, (g, gi) in enumerate(zip(gens, invs)):
        for slot, (a, b) in enumerate(((g, gi), (gi, g))):
            imgs = _act(ctx, action, a, b, pts)
            perms[2 * j + slot] = [index[key] for key in enc.keys(imgs.reshape(imgs.shape[0], -1))]
    _check_permutations(perms)
    predicted = witt_orbit_size(space, base) if action == "vectors" else None
    return OrbitIndex(action, base, pts, perms, index, predicted, enc)


def witt_orbit_size(space: fm.FormedSpace, base) -> int | None:
    """Size of the GCl-orbit of an independent tuple (Witt's lemma): count compatible tuples.

    Each new vector u_i must satisfy f(u_i, v_j) = f(v_i, v_j) for j < i,
    Q(u_i) = Q(v_i) and u_i outside the span of the earlier vectors. By
    Witt's lemma the count does not depend on the earlier choices, so the
    images can be pinned to the base itself.
    """
    ctx, n = space.ctx, space.n
    base = la.as_array(base).reshape(-1, n)
    r = base.shape[0]
    if la.rank(ctx, base) < r:
        return None
    total = 1
    for i in range(r):
        prev = base[:i]
        if space.kind == "linear" or i == 0:
            sol = la.AffineSolution(np.zeros(n, dtype=np.int64), la.identity(n))
        else:
            rows = np.array([space.form(la.identity(n), v) for v in prev]).reshape(i, n)
            rhs = np.array([space.form(base[i], v) for v in prev])
            sol = la.solve_affine(ctx, rows, rhs)
        target = int(space.quad_value(base[i])) if space.has_quadric else 0
        count = fm.count_quadric_points(space, (sol.particular, sol.kernel), target)
        # remove compatible vectors inside span(prev)
        if i:
            coeffs = fm.all_tuples(ctx.q, i)
            span = la.matmul(ctx, coeffs, prev)
        else:
            span = np.zeros((1, n), dtype=np.int64)
        ok = np.ones(span.shape[0], dtype=bool)
        for v in prev:
            ok &= space.form(span, v) == space.form(base[i], v)
        if space.has_quadric:
            ok &= space.quad_value(span) == target
        total *= count - int(ok.sum())
    return total


# -- spectra ------------------------------------------------------------------------------------

@dataclass
class SpectralReport:
    N: int
    lam: float
    lam2: float
    lam_min: float
    method: str
    iterations: int
    converged: bool
    tol: float
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "N": self.N,
            "lambda": self.lam,
            "lambda_2": self.lam2,
            "lambda_min": self.lam_min,
            "method": self.method,
            "iterations": self.iterations,
            "converged": self.converged,
            "tol": self.tol,
            "notes": list(self.notes),
        }


def _top_on_complement(op, n: int, tol: float, max_iters: int, rng) -> tuple[float, int, bool]:
    """Largest eigenvalue of a PSD operator on the complement of constants (power iteration)."""
    x = rng.standard_normal(n)
    x -= x.mean()
    nrm = np.linalg.norm(x)
    if nrm == 0:
        return 0.0, 0, True
    x /= nrm
    prev = None
    for it in range(1, max_iters + 1):
        y = op(x)
        y -= y.mean()
        rq = float(x @ y)
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return 0.0, it, True
        x = y / nrm
        if prev is not None and abs(rq - prev) < tol:
            return rq, it, True
        prev = rq
    return prev, max_iters, False


def estimate_lambda_power(orbit: OrbitIndex, tol: float = 1e-12, max_iters: int = 200_000, rng=None) -> SpectralReport:
    """max(lambda_2, -lambda_N) by power iteration on (I + A)/2 and (I - A)/2 with mean deflation."""
    rng = np.random.default_rng(0) if rng is None else rng
    n = orbit.size
    notes = []
    if n == 1:
        return SpectralReport(1, 0.0, 0.0, 0.0, "power-iteration", 0, True, tol, ["single point"])
    if not orbit.connected:
        notes.append("disconnected: lambda_2 = 1")
    up, it1, ok1 = _top_on_complement(lambda v: 0.5 * (v + orbit.apply(v)), n, tol, max_iters, rng)
    down, it2, ok2 = _top_on_complement(lambda v: 0.5 * (v - orbit.apply(v)), n, tol, max_iters, rng)
    lam2 = 2 * up - 1
    lam_min = 1 - 2 * down
    if lam_min <= -1 + 1e-9:
        notes.append("bipartite: lambda_N = -1")
    if not (ok1 and ok2):
        notes.append("power iteration hit max_iters")
    lam = max(lam2, -lam_min)
    return SpectralReport(n, min(max(lam, 0.0), 1.0), lam2, lam_min, "power-iteration", it1 + it2, ok1 and ok2, tol, notes)


def dense_spectrum(orbit: OrbitIndex) -> np.ndarray:
    """All eigenvalues of A in increasing order (oracle for small orbits)."""
    if orbit.size > 5000:
        raise SpectralError("dense eigensolve limited to 5000 points")
    return np.linalg.eigvalsh(orbit.dense())


def dense_lambda(orbit: OrbitIndex) -> float:
    ev = dense_spectrum(orbit)
    if ev.size == 1:
        return 0.0
    return float(max(ev[-2], -ev[0]))


# -- trace moments ------------------------------------------------------------------------------

@dataclass
class TraceMoment:
    ell: int
    samples: int
    mean: float
    stderr: float

    @property
    def lambda_bound(self) -> float:
        """(E tr A^l - 1)^{1/l}, an upper bound for lambda when the orbit is connected."""
        if self.ell == 0:
            return float("nan")
        return max(self.mean - 1.0, 0.0) ** (1.0 / self.ell)

    def to_json(self) -> dict:
        return {"ell": self.ell, "samples": self.samples, "mean": self.mean, "stderr": self.stderr,
                "lambda_bound": self.lambda_bound}


def trace_moment(orbit: OrbitIndex, ell: int, samples: int, rng) -> TraceMoment:
    """E over random-walk words of length l of the number of fixed points (= tr A^l)."""
    if ell < 0 or ell % 2:
        raise SpectralError("trace moments use even word lengths")
    n = orbit.size
    if ell == 0:
        return TraceMoment(0, samples, float(n), 0.0)
    ident = np.arange(n)
    counts = np.empty(samples, dtype=np.float64)
    letters = rng.integers(0, orbit.perms.shape[0], size=(samples, ell))
    for s in range(samples):
        idx = ident
        for a in letters[s]:
            idx = orbit.perms[a][idx]
        counts[s] = np.count_nonzero(idx == ident)
    sd = counts.std(ddof=1) if samples > 1 else 0.0
    return TraceMoment(ell, samples, float(counts.mean()), float(sd / math.sqrt(samples)))


# -- return probabilities -----------------------------------------------------------------------

@dataclass
class ReturnProbReport:
    group: str
    word: str
    r: int
    N: int
    trials: int
    hits: int
    rb_mean: float
    rb_stderr: float
    window: float

    @property
    def n_freq(self) -> float:
        return self.N * self.hits / self.trials

    @property
    def n_rb(self) -> float:
        return self.N * self.rb_mean

    def wilson(self, z: float = 3.0) -> tuple[float, float]:
        lo, hi = tj.wilson_interval(self.hits, self.trials, z)
        return self.N * lo, self.N * hi

    def to_json(self) -> dict:
        lo, hi = self.wilson()
        return {
            "group": self.group, "word": self.word, "r": self.r, "N": self.N, "trials": self.trials,
            "hits": self.hits, "N_freq": self.n_freq, "N_freq_ci3": [lo, hi],
            "N_rb": self.n_rb, "N_rb_stderr": self.N * self.rb_stderr,
            "window": self.window, "deviation": self.n_rb - 1.0,
        }


def default_starts(space: fm.FormedSpace, r: int) -> np.ndarray:
    """e_1, ..., e_r (a hyperbolic pair when r = 2 in a formed space)."""
    starts = np.zeros((r, space.n), dtype=np.int64)
    for i in range(r):
        starts[i, i] = 1
    return starts


def estimate_return_prob(desc: GroupDesc, w: Word, r: int, trials: int, seed: int, starts=None) -> ReturnProbReport:
    """P(the joint trajectory of r start vectors under w closes), lazily simulated.

    Both the raw closure frequency and the conditional (Rao-Blackwell)
    estimate are returned; the reference value is 1/N.
    """
    core, _ = cyclic_reduce(w)
    if not core.letters:
        raise SpectralError("the word reduces to the identity")
    power, root, m = is_proper_power(core)
    if power:
        raise SpectralError(f"{w} is a proper power ({root})^{m}")
    space = desc.space
    starts = default_starts(space, r) if starts is None else la.as_array(starts).reshape(r, space.n)
    N = witt_orbit_size(space, starts)
    if tj.kernel_supported(space):
        st = tj.simulate(desc, w, starts, trials, seed)
        hits, rb_mean, rb_err = st.closed_naive, st.rb_mean, st.rb_stderr
    else:
        from .seeding import seed_stream

        rng = seed_stream(seed, 0)
        hits = 0
        ws = []
        for _ in range(trials):
            rec = tj.run_joint_trajectory(desc, w, starts, rng=rng)
            hits += rec.is_closed
            ws.append(rec.closure_weight)
        arr = np.array(ws)
        rb_mean = float(arr.mean())
        rb_err = float(arr.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    q, n, ell = desc.ctx.q, desc.n, len(w)
    window = 10.0 * q ** (2 * ell * r - n / 2)
    return ReturnProbReport(desc.descriptor, str(w), r, N, trials, int(hits), rb_mean, rb_err, window)


# -- diameters ----------------------------------------------------------------------------------

@dataclass
class DiameterResult:
    diameter: int | None
    reached: int
    order: int | None
    spheres: list[int]

    @property
    def generates(self) -> bool:
        return self.order is None or self.reached == self.order

    def to_json(self) -> dict:
        return {"diameter": self.diameter, "reached": self.reached, "order": self.order, "spheres": self.spheres}


def cayley_diameter_bfs(ctx, generators, order: int | None = None, budget: int = DEFAULT_BUDGET) -> DiameterResult:
    """Exact diameter of Cay(<S>, S u S^{-1}) by BFS from the identity.

    `order` is the order of the ambient group (a GroupDesc works too); if S
    generates less, the reached size is reported and the diameter is None.
    """
    if isinstance(order, GroupDesc):
        order = group_order(order)
    gens = [la.as_array(g) for g in generators]
    n = gens[0].shape[0]
    sym = gens + [la.inverse(ctx, g) for g in gens]
    enc = _Encoder(ctx.q, n * n)
    eye = la.identity(n)
    seen = {enc.keys(eye.reshape(1, -1))[0]}
    frontier = eye[None]
    spheres = [1]
    while True:
        new = []
        for g in sym:
            imgs = la.matmul(ctx, frontier, g[None])
            for key, img in zip(enc.keys(imgs.reshape(imgs.shape[0], -1)), imgs):
                if key not in seen:
                    seen.add(key)
                    new.append(img)
        if len(seen) > budget:
            raise OrbitBudgetExceeded(f"group exceeds the budget of {budget} elements")
        if not new:
            break
        spheres.append(len(new))
        frontier = np.array(new)
    reached = len(seen)
    diam = len(spheres) - 1
    if order is not None and reached != order:
        return DiameterResult(None, reached, order, spheres)
    return DiameterResult(diam, reached, order, spheres)


def graph_diameter(orbit: OrbitIndex, chunk: int = 256) -> int:
    """Max eccentricity over all points (all-pairs BFS in chunks)."""
    graph = orbit.sparse()
    best = 0
    n = orbit.size
    for start in range(0, n, chunk):
        dist = shortest_path(graph, directed=False, unweighted=True, indices=np.arange(start, min(n, start + chunk)))
        if np.isinf(dist).any():
            raise SpectralError("the Schreier graph is disconnected")
        best = max(best, int(dist.max()))
    return best


def eccentricity(orbit: OrbitIndex, vertex: int) -> int:
    dist = shortest_path(orbit.sparse(), directed=False, unweighted=True, indices=[vertex])
    return int(dist.max())


def schreier_diameter_on_class(desc: GroupDesc, generators, g0, budget: int = 10**6) -> int:
    """Exact diameter of the conjugation Schreier graph on the class of g0."""
    orbit = orbit_bfs(desc, generators, g0, action="conjugation", budget=budget)
    if orbit.size == 1:
        return 0
    return graph_diameter(orbit)


# -- binary orbit dumps -------------------------------------------------------------------------

def write_orbit(path, orbit: OrbitIndex) -> None:
    """Magic, u32 N, u32 letter count, then the letter permutations as little-endian u32."""
    with open(path, "wb") as fh:
        fh.write(ORBIT_MAGIC)
        fh.write(struct.pack("<II", orbit.size, orbit.perms.shape[0]))
        fh.write(orbit.perms.astype("<u4").tobytes())


def read_orbit(path) -> OrbitIndex:
    with open(path, "rb") as fh:
        magic = fh.read(len(ORBIT_MAGIC))
        if magic != ORBIT_MAGIC:
            raise SpectralError(f"{path}: not an orbit dump (bad magic {magic!r})")
        n, letters = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(4 * n * letters), dtype="<u4")
    if data.size != n * letters:
        raise SpectralError(f"{path}: truncated orbit dump")
    perms = data.reshape(letters, n).astype(np.int64)
    _check_permutations(perms)
    return OrbitIndex("abstract", None, None, perms)


def random_generators(desc: GroupDesc, k: int, rng) -> list[np.ndarray]:
    from .groups import sample_uniform

    return [sample_uniform(desc, rng) for _ in range(k)]


def disconnected_warning(report: SpectralReport) -> None:
    for note in report.notes:
        warnings.warn(note, stacklevel=2)
