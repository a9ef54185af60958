"""Command-line entry point: clgroups <command> ..."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__


def _print_json(obj) -> None:
    from .harness import _jsonable

    print(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable))


def cmd_field(args) -> int:
    from . import polys
    from .gf import field_of_size, parse_field

    text = args.field.strip()
    ctx = field_of_size(int(text)) if text.isdigit() else parse_field(text)
    info = {
        "q": ctx.q,
        "p": ctx.p,
        "e": ctx.e,
        "modulus": polys.pretty(ctx.modulus, "x"),
        "generator": int(ctx.gen),
        "subfield_size": ctx.q0,
    }
    if args.tables and ctx.q <= 16:
        a = np.arange(ctx.q)
        info["add"] = ctx.add(a[:, None], a[None, :])
        info["mul"] = ctx.mul(a[:, None], a[None, :])
    _print_json(info)
    return 0


def cmd_group_sample(args) -> int:
    from . import linalg as la
    from .groups import group_order, parse_group, sample_uniform
    from .seeding import seed_stream

    desc = parse_group(args.group)
    rng = seed_stream(args.seed, 0)
    print(f"# {desc.descriptor}, order {group_order(desc)}")
    for i in range(args.count):
        g = sample_uniform(desc, rng)
        print(f"# sample {i}")
        print(la.format_matrix(g))
    return 0


def cmd_trajectory_run(args) -> int:
    from .groups import parse_group
    from .spectral import estimate_return_prob
    from .words import parse_word

    desc = parse_group(args.group)
    w = parse_word(args.word)
    rep = estimate_return_prob(desc, w, args.r, args.trials, args.seed)
    _print_json(rep.to_json())
    return 0


def cmd_experiment_run(args) -> int:
    from .harness import ConfigError, load_config, run_experiment

    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.trials is not None:
        cfg = cfg.model_copy(update={"params": cfg.params.model_copy(update={"trials": args.trials})})
    if updates:
        cfg = cfg.model_copy(update=updates)
    rec = run_experiment(cfg, threads=args.threads)
    _print_json({"config_hash": rec.config_hash, "summary": rec.summary, "paths": rec.paths,
                 "wall_clock": round(rec.wall_clock, 3)})
    return 0


def cmd_diameter_bfs(args) -> int:
    from . import linalg as la
    from .groups import parse_group
    from .seeding import seed_stream
    from .spectral import cayley_diameter_bfs, random_generators

    desc = parse_group(args.group)
    if args.gens:
        gens = [la.parse_matrix(block) for block in open(args.gens).read().split("\n\n") if block.strip()]
    else:
        gens = random_generators(desc, args.k, seed_stream(args.seed, 0))
    res = cayley_diameter_bfs(desc.ctx, gens, order=desc, budget=args.budget)
    _print_json({"group": desc.descriptor, "generators": [g.tolist() for g in gens], **res.to_json()})
    return 0


def cmd_sn_pipeline(args) -> int:
    from .snlab import sn_pipeline

    reports = [sn_pipeline(args.n, args.seed + i, max_len=args.max_len).to_json() for i in range(args.runs)]
    _print_json(reports if args.runs > 1 else reports[0])
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clgroups", description="Random words and expansion in finite classical groups.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("field", help="describe F_q")
    p.add_argument("field", help='field size or "GF(q)"')
    p.add_argument("--tables", action="store_true", help="print add/mul tables (q <= 16)")
    p.set_defaults(func=cmd_field)

    g = sub.add_parser("group", help="group utilities").add_subparsers(dest="action", required=True)
    p = g.add_parser("sample", help="uniform random elements")
    p.add_argument("group")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_group_sample)

    t = sub.add_parser("trajectory", help="lazy trajectory simulation").add_subparsers(dest="action", required=True)
    p = t.add_parser("run", help="return probability of a word")
    p.add_argument("group")
    p.add_argument("--word", required=True, help='e.g. "x1 x2^-1"')
    p.add_argument("--r", type=int, default=1)
    p.add_argument("--trials", type=int, default=10**5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_trajectory_run)

    e = sub.add_parser("experiment", help="configured experiments").add_subparsers(dest="action", required=True)
    p = e.add_parser("run", help="run a JSON experiment config")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--trials", type=int, default=None, help="override params.trials")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_experiment_run)

    d = sub.add_parser("diameter", help="exact diameters").add_subparsers(dest="action", required=True)
    p = d.add_parser("bfs", help="Cayley graph diameter by BFS")
    p.add_argument("group")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--gens", help="file of blank-line separated matrices")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=10**7)
    p.set_defaults(func=cmd_diameter_bfs)

    s = sub.add_parser("sn", help="symmetric-group lab").add_subparsers(dest="action", required=True)
    p = s.add_parser("pipeline", help="x, y, z -> explicit 3-cycle")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--max-len", type=int, default=12)
    p.set_defaults(func=cmd_sn_pipeline)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
