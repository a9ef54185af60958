"""Experiment configuration, orchestration and result persistence.

A config is one JSON document. Every experiment splits into numbered tasks;
task i draws randomness only from seed_stream(config.seed, i), so the merged
result is identical whether tasks run serially or in a process pool.

Outputs go under $CLGROUPS_OUT (default ./results):
  <id>-<hash>.jsonl      one line per task, deterministic bytes
  <id>-<hash>.csv        scalar fields of each task, one row per task
  <id>-<hash>.meta.json  summary, wall-clock and version (not byte-stable)
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import __version__
from .groups import GroupError, parse_group
from .seeding import kernel_seed, seed_stream
from .words import WordError, parse_word

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "ExperimentParams",
    "ResultRecord",
    "ConfigError",
    "load_config",
    "dump_config",
    "config_hash",
    "run_experiment",
    "seed_stream",
]

EXPERIMENTS = (
    "return-prob",
    "lambda",
    "xwz-search",
    "cd-density",
    "supp-tail",
    "sn-pipeline",
    "diameter-bfs",
    "witt-count-check",
)
OUT_ENV = "CLGROUPS_OUT"


class ConfigError(ValueError):
    pass


class ExperimentParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    r: int = Field(1, ge=1)
    d: int | None = Field(None, ge=2)
    k: int = Field(2, ge=1)
    trials: int = Field(1000, ge=1)
    seeds: int = Field(1, ge=1, description="number of independent seed tasks")
    parts: int = Field(1, ge=1, description="trial chunks per word (return-prob)")
    max_len: int = Field(8, ge=0)
    n: int | None = Field(None, ge=2, description="degree for symmetric-group experiments")
    f: int | None = Field(None, ge=0)
    deltas: list[float] = Field(default_factory=lambda: [0.5])
    action: Literal["vectors", "conjugation"] = "vectors"
    tol: float = Field(1e-12, gt=0)
    dense_limit: int = 500
    threshold: float | None = None
    max_codim: int = Field(2, ge=0)
    budget: int = Field(10**7, ge=1)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str = Field(pattern=r"^[A-Za-z0-9_.-]+$")
    experiment: Literal[EXPERIMENTS]  # type: ignore[valid-type]
    group: str | None = None
    words: list[str] = Field(default_factory=list)
    seed: int = 0
    params: ExperimentParams = Field(default_factory=ExperimentParams)
    output: str | None = None

    @field_validator("group")
    @classmethod
    def _group_parses(cls, v):
        if v is not None:
            try:
                parse_group(v)
            except GroupError as exc:
                raise ValueError(str(exc)) from exc
        return v

    @field_validator("words")
    @classmethod
    def _words_parse(cls, v):
        for text in v:
            try:
                parse_word(text)
            except WordError as exc:
                raise ValueError(f"word {text!r}: {exc}") from exc
        return v


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    return parse_config(text)


def parse_config(text: str) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate_json(text)
    except ValidationError as exc:
        lines = [f"{'.'.join(str(x) for x in e['loc']) or '<root>'}: {e['msg']}" for e in exc.errors()]
        raise ConfigError("invalid experiment config:\n  " + "\n  ".join(lines)) from None


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    # the output location does not change what is computed
    canon = json.dumps(cfg.model_dump(mode="json", exclude={"output"}), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


@dataclass
class ResultRecord:
    config: ExperimentConfig
    config_hash: str
    tasks: list[dict]
    summary: dict
    wall_clock: float = 0.0
    version: str = __version__
    paths: dict = field(default_factory=dict)

    def jsonl(self) -> str:
        return "".join(
            json.dumps({"config_hash": self.config_hash, "task": i, **out}, sort_keys=True, default=_jsonable) + "\n"
            for i, out in enumerate(self.tasks)
        )

    def meta(self) -> dict:
        return {
            "id": self.config.id,
            "experiment": self.config.experiment,
            "config_hash": self.config_hash,
            "config": self.config.model_dump(mode="json"),
            "summary": self.summary,
            "wall_clock": self.wall_clock,
            "version": self.version,
        }


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (tuple, set, frozenset)):
        return list(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


# -- task planning ----------------------------------------------------------------------------

def _require(cfg: ExperimentConfig, *names):
    for name in names:
        if name == "group" and cfg.group is None:
            raise ConfigError(f"{cfg.experiment} needs a group descriptor")
        if name == "words" and not cfg.words:
            raise ConfigError(f"{cfg.experiment} needs at least one word")
        if name == "n" and cfg.params.n is None:
            raise ConfigError(f"{cfg.experiment} needs params.n")


def plan_tasks(cfg: ExperimentConfig) -> list[dict]:
    """Task payloads, in index order."""
    p = cfg.params
    kind = cfg.experiment
    if kind == "return-prob":
        _require(cfg, "group", "words")
        return [{"word": w, "part": j} for w in cfg.words for j in range(p.parts)]
    if kind in ("lambda", "xwz-search", "diameter-bfs"):
        _require(cfg, "group")
        return [{"seed_index": s} for s in range(p.seeds)]
    if kind == "cd-density":
        _require(cfg, "group")
        return [{"seed_index": s} for s in range(p.seeds)]
    if kind == "supp-tail":
        _require(cfg, "words")
        if cfg.group is None:
            _require(cfg, "n")
            if p.f is None:
                raise ConfigError("supp-tail on S_n needs params.f")
        return [{"word": w} for w in cfg.words]
    if kind == "sn-pipeline":
        _require(cfg, "n")
        return [{"seed_index": s} for s in range(p.seeds)]
    if kind == "witt-count-check":
        _require(cfg, "group")
        return [{"codim": s} for s in range(p.max_codim + 1)] + [{"witt": True}]
    raise ConfigError(f"unknown experiment {kind!r}")  # pragma: no cover


# -- task runners -----------------------------------------------------------------------------

def _task_return_prob(cfg, index, payload):
    from .spectral import estimate_return_prob

    desc = parse_group(cfg.group)
    p = cfg.params
    trials = p.trials // p.parts + (1 if payload["part"] < p.trials % p.parts else 0)
    rep = estimate_return_prob(desc, parse_word(payload["word"]), p.r, trials, kernel_seed(cfg.seed, index))
    return {**rep.to_json(), "part": payload["part"], "rb_sum": rep.rb_mean * trials,
            "rb_sumsq": (rep.rb_stderr**2 * max(trials - 1, 1) + rep.rb_mean**2) * trials}


def _transvection(desc):
    from . import linalg as la

    n = desc.n
    g = la.identity(n)
    if desc.kind == "linear":
        g[0, 1] = 1
        return g
    if desc.kind == "symplectic":
        # v -> v + f(v, e_1) e_1 with f(e_2, e_1) = -1
        g[0, 1] = desc.ctx.sneg(1)
        return g
    raise ConfigError("conjugation action is set up for linear and symplectic groups")


def _task_lambda(cfg, index, payload):
    from .spectral import dense_lambda, estimate_lambda_power, orbit_bfs, random_generators

    desc = parse_group(cfg.group)
    p = cfg.params
    rng = seed_stream(cfg.seed, index)
    gens = random_generators(desc, p.k, rng)
    if p.action == "vectors":
        base = np.zeros(desc.n, dtype=np.int64)
        base[0] = 1
    else:
        base = _transvection(desc)
    orbit = orbit_bfs(desc, gens, base, action=p.action, budget=p.budget)
    rep = estimate_lambda_power(orbit, tol=p.tol, rng=seed_stream(cfg.seed, index + (1 << 32)))
    out = {"orbit_size": orbit.size, "connected": bool(orbit.connected), **rep.to_json()}
    if orbit.size <= p.dense_limit:
        out["lambda_dense"] = dense_lambda(orbit)
        out["dense_gap"] = abs(out["lambda_dense"] - rep.lam)
    return out


def _task_xwz(cfg, index, payload):
    from . import linalg as la
    from .groups import sample_uniform
    from .normalsets import in_minimal_degree_set, is_transvection, search_word_into_M
    from .words import Word, evaluate

    desc = parse_group(cfg.group)
    p = cfg.params
    rng = seed_stream(cfg.seed, index)
    xs = [sample_uniform(desc, rng) for _ in range(p.k + 1)]
    res = search_word_into_M(desc, xs, p.max_len, p.d)
    if res is None:
        return {"found": False, "max_len": p.max_len}
    # re-derive the witness from the word alone
    info = res.to_json()
    base = Word(p.k + 1, tuple(info["word_base"]))
    g = la.mat_pow(desc.ctx, evaluate(desc.ctx, base, xs), res.exponent)
    ok = bool(np.array_equal(g, res.witness)) and in_minimal_degree_set(desc, g)
    info.pop("witness")
    out = {"found": True, "verified": ok, **info}
    out["witness_is_transvection"] = None if desc.space.is_orthogonal else bool(is_transvection(desc.ctx, g))
    return out


def _task_cd_density(cfg, index, payload):
    from .normalsets import estimate_cd_density

    desc = parse_group(cfg.group)
    rep = estimate_cd_density(desc, cfg.params.d, cfg.params.trials, seed_stream(cfg.seed, index))
    return rep.summary()


def _task_supp_tail(cfg, index, payload):
    p = cfg.params
    w = parse_word(payload["word"])
    if cfg.group is None:
        from .snlab import estimate_fix_tail

        rep = estimate_fix_tail(w, p.n, p.f, p.trials, seed_stream(cfg.seed, index))
        return {"mode": "fixed-points", **rep.to_json()}
    from .trajectories import estimate_small_support_prob

    desc = parse_group(cfg.group)
    res = estimate_small_support_prob(desc, w, p.deltas, p.trials, kernel_seed(cfg.seed, index))
    return {"mode": "support", "word": str(w), "deltas": {str(k): v for k, v in res.items()}}


def _task_sn_pipeline(cfg, index, payload):
    from .snlab import sn_pipeline

    rep = sn_pipeline(cfg.params.n, kernel_seed(cfg.seed, index), max_len=cfg.params.max_len)
    return rep.to_json()


def _task_diameter(cfg, index, payload):
    from .spectral import cayley_diameter_bfs, random_generators

    desc = parse_group(cfg.group)
    gens = random_generators(desc, cfg.params.k, seed_stream(cfg.seed, index))
    res = cayley_diameter_bfs(desc.ctx, gens, order=desc, budget=cfg.params.budget)
    return {"generators": [g.tolist() for g in gens], **res.to_json()}


def _task_witt(cfg, index, payload):
    from . import forms as fm

    desc = parse_group(cfg.group)
    space = desc.space
    q, n = space.ctx.q, space.n
    if payload.get("witt"):
        from .spectral import default_starts, witt_orbit_size

        e1 = default_starts(space, 1)
        size = witt_orbit_size(space, e1)
        target = space.quad_value(e1[0])
        zero = np.zeros(n, dtype=np.int64)
        same_q = fm.count_quadric_points(space, (zero, np.eye(n, dtype=np.int64)), target) - (1 if target == 0 else 0)
        lo, hi = fm.quadric_bound(space, 0)
        return {"check": "witt-orbit", "orbit_size": size, "same_Q_nonzero": same_q,
                "pass": bool(size == same_q and lo - 1 <= size <= hi)}
    s = payload["codim"]
    lo, hi = fm.quadric_bound(space, s)
    centre = q ** (n - s) / space.q0
    checked = fails = 0
    worst = 0.0
    for codim, v0, w in fm.enumerate_cosets(space, s):
        if codim != s:
            continue
        for t in fm.quadric_targets(space):
            c = fm.count_quadric_points(space, (v0, w), int(t))
            checked += 1
            fails += not (lo <= c <= hi)
            worst = max(worst, abs(c - centre) / q ** (n / 2))
    return {"check": "quadric", "codim": s, "cosets_x_targets": checked, "failures": fails,
            "worst_ratio": worst, "bound": [lo, hi], "pass": fails == 0}


_RUNNERS = {
    "return-prob": _task_return_prob,
    "lambda": _task_lambda,
    "xwz-search": _task_xwz,
    "cd-density": _task_cd_density,
    "supp-tail": _task_supp_tail,
    "sn-pipeline": _task_sn_pipeline,
    "diameter-bfs": _task_diameter,
    "witt-count-check": _task_witt,
}


def _run_task(cfg_json: str, index: int, payload: dict) -> dict:
    cfg = ExperimentConfig.model_validate_json(cfg_json)
    return _RUNNERS[cfg.experiment](cfg, index, payload)


# -- summaries ----------------------------------------------------------------------------------

def summarize(cfg: ExperimentConfig, tasks: list[dict]) -> dict:
    kind = cfg.experiment
    if kind == "return-prob":
        out = {}
        for w in cfg.words:
            parts = [t for t in tasks if t["word"] == str(parse_word(w))]
            trials = sum(t["trials"] for t in parts)
            hits = sum(t["hits"] for t in parts)
            rb_sum = sum(t["rb_sum"] for t in parts)
            rb_sumsq = sum(t["rb_sumsq"] for t in parts)
            mean = rb_sum / trials
            var = max(rb_sumsq / trials - mean * mean, 0.0)
            N = parts[0]["N"]
            out[w] = {"N": N, "trials": trials, "hits": hits, "N_freq": N * hits / trials, "N_rb": N * mean,
                      "N_rb_stderr": N * math.sqrt(var / max(trials - 1, 1)), "window": parts[0]["window"]}
        return out
    if kind == "lambda":
        lams = [t["lambda"] for t in tasks]
        thr = cfg.params.threshold
        out = {"seeds": len(lams), "lambda_max": max(lams), "lambda_median": float(np.median(lams))}
        if thr is not None:
            out["below_threshold"] = sum(x <= thr for x in lams)
        gaps = [t["dense_gap"] for t in tasks if "dense_gap" in t]
        if gaps:
            out["max_dense_gap"] = max(gaps)
        return out
    if kind == "xwz-search":
        return {"seeds": len(tasks), "found": sum(t["found"] for t in tasks),
                "verified": sum(bool(t.get("verified")) for t in tasks)}
    if kind == "cd-density":
        hits = sum(t["hits"] for t in tasks)
        trials = sum(t["trials"] for t in tasks)
        return {"trials": trials, "hits": hits, "frequency": hits / trials}
    if kind == "supp-tail":
        return {t["word"]: (t.get("frequency") if t["mode"] == "fixed-points" else t["deltas"]) for t in tasks}
    if kind == "sn-pipeline":
        return {"seeds": len(tasks), "ok": sum(t["ok"] for t in tasks)}
    if kind == "diameter-bfs":
        return {"diameters": [t["diameter"] for t in tasks]}
    if kind == "witt-count-check":
        return {"pass": all(t["pass"] for t in tasks),
                "table": [{k: t[k] for k in t if k in ("check", "codim", "cosets_x_targets", "failures", "pass")}
                          for t in tasks]}
    return {}  # pragma: no cover


# -- orchestration ------------------------------------------------------------------------------

def output_root(cfg: ExperimentConfig | None = None) -> Path:
    if cfg is not None and cfg.output:
        return Path(cfg.output)
    return Path(os.environ.get(OUT_ENV, "results"))


def run_experiment(cfg: ExperimentConfig, threads: int = 1, persist: bool = True) -> ResultRecord:
    """Run every task (in a process pool when threads > 1), merge by task index, persist."""
    t0 = time.perf_counter()
    payloads = plan_tasks(cfg)
    cfg_json = cfg.model_dump_json()
    if threads > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_task, cfg_json, i, pl) for i, pl in enumerate(payloads)]
            tasks = [f.result() for f in futures]
    else:
        tasks = [_run_task(cfg_json, i, pl) for i, pl in enumerate(payloads)]
    # round-trip through JSON so in-memory and persisted records agree
    tasks = [json.loads(json.dumps(t, sort_keys=True, default=_jsonable)) for t in tasks]
    rec = ResultRecord(cfg, config_hash(cfg), tasks, summarize(cfg, tasks))
    rec.wall_clock = time.perf_counter() - t0
    if persist:
        write_record(rec)
    return rec


def _scalar_items(d: dict, prefix: str = "") -> dict:
    out = {}
    for key, val in d.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            out.update(_scalar_items(val, name + "."))
        elif isinstance(val, (int, float, str, bool)) or val is None:
            out[name] = val
    return out


def write_record(rec: ResultRecord) -> dict:
    root = output_root(rec.config)
    root.mkdir(parents=True, exist_ok=True)
    stem = root / f"{rec.config.id}-{rec.config_hash}"
    paths = {"jsonl": str(stem) + ".jsonl", "csv": str(stem) + ".csv", "meta": str(stem) + ".meta.json"}
    Path(paths["jsonl"]).write_text(rec.jsonl())
    rows = [{"task": i, **_scalar_items(t)} for i, t in enumerate(rec.tasks)]
    cols = []
    for row in rows:
        cols += [c for c in row if c not in cols]
    with open(paths["csv"], "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=cols)
        wr.writeheader()
        wr.writerows(rows)
    Path(paths["meta"]).write_text(json.dumps(rec.meta(), indent=2, sort_keys=True, default=_jsonable) + "\n")
    rec.paths = paths
    return paths
