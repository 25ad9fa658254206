"""Command line interface.

    covebo run --task clustered --k 3 --budget 2000 --mode mocobo --reps 10 --out results
    covebo defaults
    covebo tasks list
    covebo cover --k 2 --input matrix.csv

Exit codes: 0 success, 1 configuration or input error, 2 some replications failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .coverage import ObjectiveMatrix, brute_force_cover, greedy_cover
from .harness import ExperimentSpec, compare_modes, run_experiment
from .optimizer import MODES, RunConfig
from .tasks import REGISTRY, list_tasks, make_task
from .trust_region import TrustRegionConfig

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2

DEFAULT_REPS = 10
DEFAULT_STRIDE = 100


def defaults() -> dict:
    cfg = RunConfig()
    out = cfg.to_dict()
    out["trust_region"] = asdict(TrustRegionConfig())
    out["trust_region"]["failure_tolerance"] = "max(4, ceil(d / batch_size))"
    out["replications"] = DEFAULT_REPS
    out["stride"] = DEFAULT_STRIDE
    out["tasks"] = {k: v.defaults for k, v in REGISTRY.items()}
    return out


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _build_parser():
    parser = argparse.ArgumentParser(prog="covebo", description="Coverage Bayesian optimization")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run replicated experiments")
    p.add_argument("--task", default="clustered", choices=sorted(REGISTRY))
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--mode", default="mocobo",
                   help=f"one of {', '.join(MODES)}, or a comma-separated list")
    p.add_argument("--seed", type=int, default=0, help="base seed; replication r uses seed + r")
    p.add_argument("--reps", type=int, default=DEFAULT_REPS)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file; its keys override the flags")
    p.add_argument("--stride", type=int, default=DEFAULT_STRIDE)
    p.add_argument("--n-init", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--candidates", type=int, default=None)
    p.add_argument("--task-param", action="append", default=[], metavar="KEY=VALUE")

    sub.add_parser("defaults", help="print every default setting as JSON")

    t = sub.add_parser("tasks", help="task registry")
    t.add_argument("action", choices=["list"])

    c = sub.add_parser("cover", help="covering set of an objective matrix CSV")
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--input", required=True)
    c.add_argument("--exact", action="store_true", help="exhaustive search instead of greedy")
    return parser


def _experiment_specs(args):
    base = RunConfig().to_dict()
    flags = {"task": args.task, "seed": args.seed}
    if args.k is not None:
        flags["K"] = args.k
    if args.budget is not None:
        flags["evaluation_budget"] = args.budget
    if args.n_init is not None:
        flags["n_init"] = args.n_init
    task_params = {}
    for item in args.task_param:
        if "=" not in item:
            raise ValueError(f"--task-param expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        task_params[key] = _parse_value(value)
    flags["task_params"] = task_params
    acq = dict(base["acquisition"])
    if args.batch_size is not None:
        acq["batch_size"] = args.batch_size
    if args.candidates is not None:
        acq["num_candidates"] = args.candidates
    flags["acquisition"] = acq
    modes = args.mode
    reps, stride = args.reps, args.stride

    if args.config:
        doc = json.loads(Path(args.config).read_text())
        if not isinstance(doc, dict):
            raise ValueError("config file must hold a JSON object")
        reps = doc.pop("replications", reps)
        stride = doc.pop("stride", stride)
        modes = doc.pop("mode", modes)
        if "acquisition" in doc:
            doc["acquisition"] = {**acq, **doc["acquisition"]}
        flags.update(doc)

    mode_list = modes if isinstance(modes, list) else [m.strip() for m in str(modes).split(",")]
    if not mode_list or any(m not in MODES for m in mode_list):
        raise ValueError(f"modes must come from {MODES}, got {modes!r}")
    seed = flags.pop("seed")
    config = RunConfig.from_dict({**base, **flags, "mode": mode_list[0], "seed": seed})
    task = make_task(config.task, **config.task_params)
    config = config.replace(T=task.n_objectives)
    out = Path(args.out)
    specs = []
    for mode in mode_list:
        cfg = config.replace(mode=mode)
        target = out if len(mode_list) == 1 else out / mode
        specs.append(ExperimentSpec(cfg, replications=reps, base_seed=seed, out_dir=str(target),
                                    stride=stride))
    return specs


def _cmd_run(args) -> int:
    try:
        specs = _experiment_specs(args)
    except (ValueError, TypeError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    summaries = []
    try:
        for spec in specs:
            summary = run_experiment(spec)
            summaries.append(summary)
            print(f"{spec.config.mode}: final mean {summary.final_mean:.6g} "
                  f"(stderr {summary.final_stderr:.3g}, {summary.n_completed}/{spec.replications} runs)"
                  f" -> {summary.out_dir}")
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    if len(summaries) > 1:
        table = compare_modes(summaries)
        Path(args.out).mkdir(parents=True, exist_ok=True)
        table.to_csv(Path(args.out) / "comparison.csv")
    if any(s.failures for s in summaries):
        return EXIT_PARTIAL
    return EXIT_OK


def _cmd_cover(args) -> int:
    try:
        matrix = ObjectiveMatrix.from_csv(args.input)
        cover = brute_force_cover(matrix, args.k) if args.exact else greedy_cover(matrix, args.k)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps({
        "members": list(cover.members),
        "score": cover.score,
        "incumbent_values": [float(v) for v in cover.incumbent_values],
    }))
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "defaults":
        print(json.dumps(defaults(), indent=2))
        return EXIT_OK
    if args.command == "tasks":
        for row in list_tasks():
            print(f"{row['id']}\tdim={row['dim']}\tT={row['T']}\t{row['summary']}")
        return EXIT_OK
    if args.command == "cover":
        return _cmd_cover(args)
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

