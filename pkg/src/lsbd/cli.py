"""Command-line front end: ``lsbd gen | metric | learn | replay``.

Exit codes: 0 success, 2 usage or parse error, 3 unsupported input,
4 disconnected constraint graph. Results go to files; stdout carries one
scalar summary on its last line.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .errors import (
    DegenerateProjectionError,
    IncompleteGridError,
    InvalidInputError,
    ParseError,
    TrainingError,
    UnsupportedSpecError,
)
from .groups import GroupGrid
from .learner import TrainConfig, bridge_batches, constraint_components, make_pairs, make_paths, train
from .metric import NORMALIZATIONS, d_lsbd, d_lsbd_collection
from .synth import ORACLE_KINDS, OracleSpec, generate, random_orthogonal, read_collection, read_csv, write_csv

log = logging.getLogger("lsbd")

EXIT_OK, EXIT_USAGE, EXIT_UNSUPPORTED, EXIT_DISCONNECTED = 0, 2, 3, 4


class CLIError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    return values


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(text: str) -> GroupGrid:
    sizes = _int_list(text)
    if any(n < 1 for n in sizes):
        raise argparse.ArgumentTypeError(f"grid sizes must be positive, got {text!r}")
    return GroupGrid.from_sizes(sizes)


def _omega_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"omega range must look like a:b, got {text!r}") from None
    if lo > hi:
        raise argparse.ArgumentTypeError(f"empty omega range {text!r}")
    return lo, hi


def _join_negative_values(argv: Sequence[str]) -> list[str]:
    # argparse reads "-10:10" as an option; glue it onto its flag.
    out = []
    it = iter(argv)
    for tok in it:
        if tok == "--omega-range":
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def _default_seed() -> int:
    env = os.environ.get("LSBD_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise CLIError(f"LSBD_SEED must be an integer, got {env!r}") from None


def _add_metric_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--omega-range", type=_omega_range, default=(-10, 10), help="inclusive a:b (default -10:10)")
    p.add_argument("--normalize", choices=NORMALIZATIONS, default="off")
    p.add_argument("--threads", type=int, default=None, help="worker cap; results do not depend on it")
    p.add_argument("--pretty", action="store_true", help="also print a per-subgroup table")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsbd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic embedding dataset")
    g.add_argument("--grid", type=_grid, required=True, help="subgroup sizes, e.g. 64,64")
    g.add_argument("--oracle", choices=ORACLE_KINDS, required=True)
    g.add_argument("--omega", type=_int_list, default=None, help="frequencies per subgroup (default all 1)")
    g.add_argument("--radius", type=_float_list, default=None)
    g.add_argument("--phase", type=_float_list, default=None)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--dim", type=int, default=None)
    g.add_argument("--mix", default=None, help="text file with the D x D mixing matrix (entangled_linear)")
    g.add_argument("--mix-random", choices=("orthogonal", "gaussian"), default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)

    m = sub.add_parser("metric", help="score a dataset")
    src = m.add_mutually_exclusive_group(required=True)
    src.add_argument("input", nargs="?", help="dataset CSV")
    src.add_argument("--collection", help="directory of per-object CSVs sharing one grid")
    _add_metric_flags(m)
    m.add_argument("--out", required=True, help="report JSON path")

    t = sub.add_parser("learn", help="learn torus embeddings from labelled pairs or paths")
    t.add_argument("--grid", type=_grid, required=True)
    mode = t.add_mutually_exclusive_group(required=True)
    mode.add_argument("--pairs", type=int, help="number L of disjoint labelled pairs")
    mode.add_argument("--paths", type=int, help="number of random-walk paths (e.g. 50)")
    t.add_argument("--path-len", type=int, default=100)
    t.add_argument("--step", type=int, default=3, help="grid positions per walk step")
    t.add_argument("--split-pairs", action="store_true", help="feed paths as consecutive pairs")
    t.add_argument(
        "--bridge", action=argparse.BooleanOptionalAction, default=None,
        help="join disconnected components with labelled pairs (default: on for paths, off for pairs)",
    )
    t.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    t.add_argument("--lr", type=float, default=TrainConfig.learning_rate)
    t.add_argument("--momentum", type=float, default=TrainConfig.momentum)
    t.add_argument("--seed", type=int, default=None)
    _add_metric_flags(t)
    t.add_argument("--out-dir", required=True)

    r = sub.add_parser("replay", help="re-run a command from its manifest")
    r.add_argument("manifest")
    return parser


def _write_manifest(path, command, argv, params, inputs, outputs, started) -> None:
    manifest = {
        "command": command,
        "argv": list(argv),
        "params": params,
        "seed": params.get("seed"),
        "version": __version__,
        "inputs": inputs,
        "outputs": outputs,
        "duration_s": time.perf_counter() - started,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


def _with_seed(argv: Sequence[str], seed: int) -> list[str]:
    out = [a for a in argv]
    if "--seed" in out:
        out[out.index("--seed") + 1] = str(seed)
    elif not any(a.startswith("--seed=") for a in out):
        out += ["--seed", str(seed)]
    return out


def _pretty(report) -> str:
    lines = [f"{'k':>3} {'omega*':>7} {'d_k':>12} {'explained':>10} {'degenerate':>10}"]
    for s in report.per_subgroup:
        om = "-" if s.omega_star is None else str(s.omega_star)
        ex = "-" if s.explained_fraction is None else f"{s.explained_fraction:.4f}"
        lines.append(f"{s.k:>3} {om:>7} {s.d_k:>12.6g} {ex:>10} {str(s.degenerate):>10}")
    lines.append(f"d_lsbd = {report.d_lsbd:.6g} (normalization {report.normalization})")
    return "\n".join(lines)


def cmd_gen(args, argv) -> int:
    started = time.perf_counter()
    seed = args.seed if args.seed is not None else _default_seed()
    K = args.grid.K
    omegas = args.omega if args.omega is not None else [1] * K
    if len(omegas) != K:
        raise CLIError(f"--omega has {len(omegas)} entries but the grid has K={K}")
    if args.oracle == "sum_coupled" and K != 2:
        raise CLIError(f"sum_coupled requires K=2, got K={K}")
    mix = None
    if args.mix is not None:
        mix = np.loadtxt(args.mix, delimiter=",", ndmin=2)
    elif args.mix_random is not None:
        dim = args.dim or 2 * K
        mix_rng = np.random.default_rng([seed, 1])
        mix = random_orthogonal(dim, mix_rng) if args.mix_random == "orthogonal" else mix_rng.standard_normal((dim, dim))
    spec = OracleSpec(
        args.oracle, tuple(omegas), radius=args.radius, phases=args.phase,
        noise_sigma=args.noise, mix=mix, seed=seed, dim=args.dim,
    )
    es = generate(spec, args.grid)
    write_csv(es, args.out)
    params = {
        "grid": list(args.grid.sizes), "oracle": args.oracle, "omega": omegas, "radius": args.radius,
        "phase": args.phase, "noise": args.noise, "dim": es.dim, "mix": args.mix,
        "mix_random": args.mix_random, "seed": seed,
    }
    inputs = [args.mix] if args.mix else []
    _write_manifest(args.out + ".manifest.json", "gen", _with_seed(argv, seed), params, inputs, [args.out], started)
    print(f"{es.grid.order} rows, dim {es.dim} -> {args.out}")
    return EXIT_OK


def cmd_metric(args, argv) -> int:
    started = time.perf_counter()
    if args.collection:
        named = read_collection(args.collection)
        value, reports = d_lsbd_collection([s for _, s in named], args.omega_range, args.normalize, args.threads)
        payload = {
            "d_lsbd": value,
            "normalization": args.normalize,
            "omega_range": list(args.omega_range),
            "objects": [dict(name=n, **r.to_dict()) for (n, _), r in zip(named, reports)],
        }
        text = json.dumps(payload, indent=2) + "\n"
        inputs = [os.path.join(args.collection, n) for n, _ in named]
        if args.pretty:
            for (n, _), r in zip(named, reports):
                print(n)
                print(_pretty(r))
    else:
        report = d_lsbd(read_csv(args.input), args.omega_range, args.normalize, args.threads)
        value, text, inputs = report.d_lsbd, report.to_json(), [args.input]
        if args.pretty:
            print(_pretty(report))
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(text)
    params = {
        "input": args.input, "collection": args.collection, "omega_range": list(args.omega_range),
        "normalize": args.normalize, "threads": args.threads,
    }
    _write_manifest(args.out + ".manifest.json", "metric", argv, params, inputs, [args.out], started)
    print(repr(value))
    return EXIT_OK


def cmd_learn(args, argv) -> int:
    started = time.perf_counter()
    seed = args.seed if args.seed is not None else _default_seed()
    grid = args.grid
    if args.pairs is not None:
        if args.pairs <= 0:
            raise CLIError("no constraints: --pairs must be at least 1")
        batches = make_pairs(grid, args.pairs, seed)
        if args.bridge:
            batches += bridge_batches(grid, batches)
    else:
        if args.paths <= 0:
            raise CLIError("no constraints: --paths must be at least 1")
        batches = make_paths(
            grid, args.paths, args.path_len, args.step, seed,
            split_pairs=args.split_pairs, bridge=args.bridge is not False,
        )

    n_components, _ = constraint_components(grid.order, batches)
    if n_components > 1:
        if args.paths is not None:
            raise CLIError(
                f"constraint graph is disconnected: {n_components} components (drop --no-bridge)",
                EXIT_DISCONNECTED,
            )
        log.warning(
            "constraint graph has %d components; points outside labelled pairs stay unconstrained",
            n_components,
        )

    config = TrainConfig(learning_rate=args.lr, momentum=args.momentum, epochs=args.epochs, seed=seed)
    result = train(grid, batches, config)
    report = d_lsbd(result.embeddings, args.omega_range, args.normalize, args.threads)

    os.makedirs(args.out_dir, exist_ok=True)
    paths = {name: os.path.join(args.out_dir, name) for name in ("embeddings.csv", "train_log.jsonl", "metric.json")}
    write_csv(result.embeddings, paths["embeddings.csv"])
    with open(paths["train_log.jsonl"], "w", encoding="utf-8") as f:
        for entry in result.log:
            f.write(json.dumps(entry) + "\n")
    summary = report.to_dict()
    summary["final_loss"] = result.final_loss
    summary["n_components"] = result.n_components
    summary["skipped_steps"] = result.skipped_steps
    with open(paths["metric.json"], "w", encoding="utf-8") as f:
        f.write(json.dumps(summary, indent=2) + "\n")

    params = {
        "grid": list(grid.sizes), "pairs": args.pairs, "paths": args.paths, "path_len": args.path_len,
        "step": args.step, "split_pairs": args.split_pairs, "bridge": args.bridge, "epochs": args.epochs,
        "lr": args.lr, "momentum": args.momentum, "seed": seed, "omega_range": list(args.omega_range),
        "normalize": args.normalize, "threads": args.threads,
    }
    _write_manifest(
        os.path.join(args.out_dir, "manifest.json"), "learn", _with_seed(argv, seed), params, [],
        list(paths.values()), started,
    )
    if args.pretty:
        print(_pretty(report))
    print(f"final loss {result.final_loss:.6g}, {result.n_components} component(s)")
    print(repr(report.d_lsbd))
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    with open(args.manifest, encoding="utf-8") as f:
        manifest = json.load(f)
    return main(manifest["argv"])


COMMANDS = {"gen": cmd_gen, "metric": cmd_metric, "learn": cmd_learn, "replay": cmd_replay}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(_join_negative_values(argv))
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return COMMANDS[args.command](args, argv)
    except CLIError as e:
        print(f"lsbd: error: {e}", file=sys.stderr)
        return e.code
    except IncompleteGridError as e:
        print(f"lsbd: error: {e}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (ParseError, UnsupportedSpecError, OSError) as e:
        print(f"lsbd: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidInputError, DegenerateProjectionError, TrainingError) as e:
        print(f"lsbd: error: {e}", file=sys.stderr)
        return EXIT_UNSUPPORTED


if __name__ == "__main__":
    sys.exit(main())
