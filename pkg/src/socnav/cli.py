"""Command line entry point.

Five run modes, one config file format:

  socnav pretrain       --config c.yaml --out runs/pre
  socnav collect-offline --config c.yaml --out runs/data
  socnav train-online   --config c.yaml --method ours --seed 3 --out runs/s3
  socnav eval           --config c.yaml --method planner --laps 5 --out runs/ev
  socnav plan-demo      --config c.yaml --out runs/demo

Flags override the corresponding config fields.  --deterministic switches
exploration noise off; everything else is already a pure function of the
config and seed.  Exit codes: 0 on success, 1 when a run fails, 2 for
configuration mistakes (including unknown flags).
"""

from __future__ import annotations

import argparse
import sys

from .experiment import (
    ConfigError,
    collect_offline,
    load_experiment_config,
    plan_demo,
    pretrain_only,
    run_experiment,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="socnav", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run config, YAML")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--method", default=None, help="override the config method")
    common.add_argument("--laps", type=int, default=None, help="override the lap budget")
    common.add_argument(
        "--deterministic", action="store_true", help="no exploration noise on executed plans"
    )

    sub.add_parser("pretrain", parents=[common], help="amortize the plan objective into an actor")
    sub.add_parser("collect-offline", parents=[common], help="drive the expert and save the dataset")
    sub.add_parser("train-online", parents=[common], help="full online fine-tuning run")
    sub.add_parser("eval", parents=[common], help="laps with a frozen policy, no training")
    sub.add_parser("plan-demo", parents=[common], help="score the planner primitives at the start pose")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    out = {}
    for name in ("seed", "method", "laps"):
        value = getattr(args, name)
        if value is not None:
            out[name] = value
    if args.deterministic:
        out["explore"] = False
    if args.command == "eval":
        out["explore"] = False
        out["train"] = False
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_experiment_config(args.config, _overrides(args))
        if args.command == "pretrain":
            result = pretrain_only(cfg, args.out)
            print(f"pretrained actor saved to {args.out} (mean plan score {result['mean_plan_score']:.3f})")
        elif args.command == "collect-offline":
            result = collect_offline(cfg, args.out)
            print(f"{result['steps']} transitions saved to {args.out} (mean reward {result['mean_reward']:.3f})")
        elif args.command == "plan-demo":
            result = plan_demo(cfg, args.out)
            v, omega = result["action"]
            print(f"chose primitive {result['index']}: v={v:.2f} omega={omega:.2f} (boxed_in={result['boxed_in']})")
        else:
            summary = run_experiment(cfg, args.out)
            laps = summary["laps"].get("laps", 0)
            print(
                f"{cfg.method}: {laps} laps, {summary['interventions_total']} interventions, "
                f"{summary['env_steps']} env steps, {summary['trainer_steps']} trainer steps -> {args.out}"
            )
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure: divergence, I/O, bad data
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
