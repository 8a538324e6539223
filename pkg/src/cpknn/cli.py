"""Command-line entry point: ingestion, injection, queries, cleaning runs,
experiments, and the session server.

Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.  All
randomness flows through explicit --seed flags; logs go to stderr, data to
files or stdout.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .cleaning import cpclean_run, simulated_oracle, trace_to_jsonl
from .dataset import (CandidatePolicy, TableEncoder, TableSchema,
                      feature_importance, generate_candidates, inject_missing, load_csv,
                      save_csv, split)
from .engine import BinaryLabelsRequired, BruteForceLimitExceeded, q1_mm, q2
from .experiments import ExperimentConfig, force_include_truth, random_clean, run_experiment
from .validation import check_dataset_payload, check_points


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _auto_importances(table, k: int, seed: int) -> np.ndarray:
    if table.missing_cells():
        raise ValueError("--importances auto needs a complete table")
    holdout = max(10, min(200, len(table) // 5))
    train, val, _ = split(table, holdout, 0, seed)
    encoder = TableEncoder(table.schema).fit(table)
    imp = feature_importance(encoder.encode_table(train), encoder.encode_table(val), k)
    return imp if imp.sum() > 0 else np.ones_like(imp)


def cmd_inject(args) -> int:
    schema = TableSchema.load(args.schema)
    table = load_csv(args.input, schema)
    if args.importances == "auto":
        importances = _auto_importances(table, args.k, args.seed)
    else:
        importances = np.asarray([float(x) for x in args.importances.split(",")])
    out = inject_missing(table, args.rate, importances, args.seed, args.cell_level)
    save_csv(out, args.output)
    print(f"wrote {args.output}: {len(out.missing_cells())} missing cells "
          f"across {len(out.dirty_row_indices())} rows", file=sys.stderr)
    return 0


def cmd_ingest(args) -> int:
    schema = TableSchema.load(args.schema)
    table = load_csv(args.input, schema)
    policy = CandidatePolicy(cap=args.cap)
    encoder = TableEncoder(schema).fit(table)
    dataset = generate_candidates(table, policy, encoder)
    if args.truth_csv:
        truth_table = load_csv(args.truth_csv, schema)
        truth, _ = encoder.encode_table(truth_table)
        dataset = force_include_truth(dataset, truth)
        if args.truth_out:
            _dump_json({"X": truth.tolist()}, args.truth_out)
    _dump_json(dataset.to_json(), args.output)
    print(f"wrote {args.output}: {len(dataset.rows)} rows, "
          f"{dataset.world_count()} possible worlds", file=sys.stderr)
    return 0


def cmd_query(args) -> int:
    dataset = check_dataset_payload(_load_json(args.dataset))
    points = _load_json(args.points)
    if isinstance(points, dict):
        points = points.get("points", points.get("X"))
    X = check_points(points, dataset.dimension, "points")
    answers = []
    for t in X:
        if args.engine == "mm":
            flags = q1_mm(dataset, t, args.k, args.kernel)
            answers.append({"q1": flags})
        else:
            answer = q2(dataset, t, args.k, args.kernel, args.mode, args.engine)
            item = {"per_label": answer.per_label if args.mode == "normalized"
                    else [int(c) for c in answer.per_label],
                    "total_worlds": answer.total_worlds}
            if args.mode == "exact":
                item["q1"] = [c == answer.total_worlds for c in answer.per_label]
            answers.append(item)
    json.dump({"engine": args.engine, "k": args.k, "mode": args.mode,
               "answers": answers}, sys.stdout, indent=2)
    print()
    return 0


def cmd_clean(args) -> int:
    dataset = check_dataset_payload(_load_json(args.dataset))
    truth = np.asarray(_load_json(args.truth)["X"], dtype=float)
    val = check_points(_load_json(args.val), dataset.dimension, "val")
    oracle = simulated_oracle(truth)
    if args.strategy == "random":
        result = random_clean(dataset, val, oracle, args.seed, args.k, args.kernel,
                              args.engine, args.budget, not args.no_entropy)
    else:
        result = cpclean_run(dataset, val, oracle, args.k, args.kernel, args.engine,
                             args.budget, not args.no_entropy)
    with open(args.trace, "w") as fh:
        fh.write(trace_to_jsonl(result.strategy.records))
    _dump_json(result.dataset.to_json(), args.output)
    print(f"{args.strategy}: {result.status} after {len(result.strategy.order)} cleanings",
          file=sys.stderr)
    return 0


def cmd_experiment(args) -> int:
    config = ExperimentConfig.from_json(_load_json(args.config))
    if args.sweep_val:
        config.val_sweep = tuple(int(x) for x in args.sweep_val.split(","))
    report = run_experiment(config)
    _dump_json(report.to_json(), f"{args.outdir}/report.json")
    with open(f"{args.outdir}/curves.csv", "w") as fh:
        fh.write(report.curves_csv())
    print(f"wrote {args.outdir}/report.json and curves.csv", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app
    uvicorn.run(create_app(args.store), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpknn", description=__doc__)
    parser.add_argument("--version", action="version", version=f"cpknn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    engines = ["ss", "ss-dc", "ss-dc-mc", "brute"]

    p = sub.add_parser("inject", help="inject MNAR missing values into a CSV")
    p.add_argument("input"), p.add_argument("schema"), p.add_argument("output")
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--importances", default="auto",
                   help='"auto" or comma-separated per-feature weights')
    p.add_argument("--cell-level", action="store_true")
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("ingest", help="expand a dirty CSV into an incomplete-dataset JSON")
    p.add_argument("input"), p.add_argument("schema"), p.add_argument("output")
    p.add_argument("--cap", type=int, default=32)
    p.add_argument("--truth-csv", help="complete CSV; forces the truth into candidate sets")
    p.add_argument("--truth-out", help="write the encoded truth matrix JSON here")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("query", help="answer Q1/Q2 for test points")
    p.add_argument("dataset"), p.add_argument("points")
    p.add_argument("--engine", choices=engines + ["mm"], default="ss-dc")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--kernel", default="negative_euclidean")
    p.add_argument("--mode", choices=["exact", "normalized"], default="exact")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("clean", help="run a simulated cleaning session")
    p.add_argument("dataset")
    p.add_argument("--truth", required=True, help='JSON {"X": [[...]]} of encoded true rows')
    p.add_argument("--val", required=True, help="JSON list of validation vectors")
    p.add_argument("--trace", required=True, help="output JSONL trace path")
    p.add_argument("--output", required=True, help="output cleaned-dataset JSON path")
    p.add_argument("--strategy", choices=["cpclean", "random"], default="cpclean")
    p.add_argument("--engine", choices=engines, default="ss-dc")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--kernel", default="negative_euclidean")
    p.add_argument("--budget", type=int)
    p.add_argument("--no-entropy", action="store_true")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("experiment", help="run the evaluation harness")
    p.add_argument("config"), p.add_argument("outdir")
    p.add_argument("--sweep-val", help="comma-separated validation-set sizes")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser(
        "serve", help="start the cleaning-session server",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=("endpoints:\n"
                "  POST /sessions\n"
                "  GET  /sessions/{id}/suggestion\n"
                "  POST /sessions/{id}/answer\n"
                "  GET  /sessions/{id}/status\n"
                "  GET  /sessions/{id}/export"))
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--store", help="journal directory for session recovery")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (BruteForceLimitExceeded, BinaryLabelsRequired) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failures -> exit 1, usage already exits 2
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
