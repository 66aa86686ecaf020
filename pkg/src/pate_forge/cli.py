"""``pate-forge`` command line.

Exit codes: 0 success, 2 config error, 3 missing or stale artifact,
4 budget violation, 5 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import PROFILES, ExperimentConfig
from .errors import PateForgeError
from .pipeline import STAGES, all_budgets_pass, run_all, run_stage


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pate-forge", description="PATE with an adversarial-autoencoder generator")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON experiment config ('{}' uses profile defaults)")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=_u64, help="master seed (overrides seed)")
    common.add_argument("--profile", choices=sorted(PROFILES), help="default profile (toy or paper)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        sub.add_parser(name, parents=[common], help=f"run the {name} stage")
    sub.add_parser("run-all", parents=[common], help="run the full epsilon sweep over all trials")
    return parser


def _print_summary(results: dict) -> None:
    for row in results["summary"]:
        verdict = "pass" if all(v == "pass" for v in row["verdicts"]) else "FAIL"
        print(
            f"epsilon={row['epsilon']:<8g} accuracy={row['mean_accuracy']:.4f}±{row['std']:.4f} "
            f"agreement={row['label_agreement_mean']:.4f} fid={row['fid_mean']:.3f} budget={verdict}"
        )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config, profile=args.profile, seed=args.seed, output_dir=args.out)
        if args.command == "run-all":
            results = run_all(cfg)
            _print_summary(results)
            if not all_budgets_pass(results):
                print("error: budget assertion failed", file=sys.stderr)
                return 4
            return 0
        out = run_stage(cfg, args.command)
        if args.command == "label" and not all(r.passed for r in out):
            for r in out:
                for problem in r.problems:
                    print(f"error: {problem}", file=sys.stderr)
            return 4
        if args.command == "evaluate":
            _print_summary(out)
        return 0
    except PateForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
