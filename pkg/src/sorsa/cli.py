"""Command-line entry points.

Subcommands:
  train    one method on one task, traces + checkpoint to --out
  twin     paired regularized/unregularized run with per-step analysis CSVs
  compare  several methods on byte-identical task data
  verify   acceptance suites (svd | grad | weyl | rate | drift), exit 0/1
  analyze  drift metrics between two saved weight CSVs

Task and train configs are JSON files whose keys mirror the TaskSpec and
TrainConfig fields; unknown keys are rejected.  When omitted, the desk
defaults are used (teacher-student 16x12, 500 steps).
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import (
    METHODS,
    compare_methods,
    desk_config,
    drift_between,
    load_task_spec,
    load_train_config,
    run_method,
    run_twin,
)
from .linalg import load_matrix_csv
from .tasks import TaskSpec, make_task
from .verify import SUITES, run_suite


def _resolve(args) -> tuple:
    spec = load_task_spec(args.task) if args.task else TaskSpec()
    cfg = load_train_config(args.config) if args.config else desk_config()
    return make_task(spec), cfg


def _cmd_train(args) -> int:
    task, cfg = _resolve(args)
    result, _, _ = run_method(args.method, task, cfg, out_dir=args.out)
    print(
        json.dumps(
            {
                "method": result.method,
                "final_train_loss": result.final_train_loss,
                "final_kappa": result.final_kappa,
                "final_delta_sigma": result.final_delta_sigma,
                "final_delta_d": result.final_delta_d,
                "trace": result.trace_path,
            },
            sort_keys=True,
        )
    )
    return 0


def _cmd_twin(args) -> int:
    task, cfg = _resolve(args)
    result = run_twin(task, cfg, out_dir=args.out)
    violations = sum(not check.satisfied for check in result.weyl_checks)
    print(
        json.dumps(
            {
                "final_kappa_regularized": result.trace_reg.kappas[-1],
                "final_kappa_unregularized": result.trace_unreg.kappas[-1],
                "weyl_violations": violations,
                "final_loss_regularized": result.final_loss_reg,
                "final_loss_unregularized": result.final_loss_unreg,
            },
            sort_keys=True,
        )
    )
    return 0


def _cmd_compare(args) -> int:
    task, cfg = _resolve(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    results = compare_methods(task, cfg, methods, out_dir=args.out)
    for result in results:
        print(
            json.dumps(
                {
                    "method": result.method,
                    "final_train_loss": result.final_train_loss,
                    "final_kappa": result.final_kappa,
                    "final_delta_d": result.final_delta_d,
                },
                sort_keys=True,
            )
        )
    return 0


def _cmd_verify(args) -> int:
    results = run_suite(args.suite)
    failed = 0
    for check in results:
        status = "PASS" if check.passed else "FAIL"
        print(f"[{status}] {check.name}: {check.detail}")
        failed += not check.passed
    return 1 if failed else 0


def _cmd_analyze(args) -> int:
    w0 = load_matrix_csv(args.checkpoint0)
    wt = load_matrix_csv(args.checkpointT)
    print(json.dumps(drift_between(w0, wt), sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sorsa", description="SVD-split adapter training and analysis harness"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one method on one task")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--task", help="task spec JSON file")
    p.add_argument("--config", help="train config JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("twin", help="paired regularized/unregularized run")
    p.add_argument("--task", help="task spec JSON file")
    p.add_argument("--config", help="train config JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_twin)

    p = sub.add_parser("compare", help="train several methods on shared data")
    p.add_argument("--methods", required=True, help="comma-separated method names")
    p.add_argument("--task", help="task spec JSON file")
    p.add_argument("--config", help="train config JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("verify", help="run an acceptance suite")
    p.add_argument("--suite", required=True, choices=sorted(SUITES))
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("analyze", help="drift metrics between two weight CSVs")
    p.add_argument("--checkpoint0", required=True, help="reference weight CSV")
    p.add_argument("--checkpointT", required=True, help="tuned weight CSV")
    p.set_defaults(func=_cmd_analyze)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
