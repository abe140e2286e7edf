"""Command-line entry point: train / eval / metrics / plot."""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .configs import (
    ConfigError,
    ExperimentConfig,
    config_fingerprint,
    load_config,
)


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.train.seed = args.seed
    if getattr(args, "policy", None):
        cfg.policy = args.policy
    if getattr(args, "episodes", None):
        if args.command == "train":
            cfg.train.episodes = args.episodes
        else:
            cfg.eval.n_episodes = args.episodes
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    from .runner import run_training

    cfg = _load(args)
    run = run_training(cfg, args.out, resume_from=args.checkpoint)
    print(f"trained to episode {run.episode}; checkpoint in {args.out}")
    return 0


def cmd_eval(args) -> int:
    from .runner import run_evaluation

    cfg = _load(args)
    report, _ = run_evaluation(cfg, args.out, checkpoint_path=args.checkpoint)
    print(report.to_json())
    return 0


def cmd_metrics(args) -> int:
    from .metrics import compute_metrics

    fingerprint = ""
    if args.config:
        fingerprint = config_fingerprint(load_config(args.config))
    report = compute_metrics(args.log, fingerprint)
    text = report.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def cmd_plot(args) -> int:
    from .plots import emit_plots

    written = emit_plots(args.log, args.out, max_episodes=args.episodes)
    print(f"wrote {len(written)} plot(s) to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="social-nav",
        description="Multi-robot social-aware cooperative navigation harness")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run the training loop")
    train.add_argument("--config", help="experiment config YAML")
    train.add_argument("--out", required=True, help="output directory")
    train.add_argument("--seed", type=int)
    train.add_argument("--policy", choices=["msa3c", "msa3c_pred"])
    train.add_argument("--episodes", type=int)
    train.add_argument("--checkpoint", help="resume from this checkpoint")
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="run a seeded evaluation battery")
    ev.add_argument("--config", help="experiment config YAML")
    ev.add_argument("--out", required=True, help="output directory")
    ev.add_argument("--seed", type=int)
    ev.add_argument("--policy",
                    choices=["msa3c", "msa3c_pred", "orca", "sf", "random"])
    ev.add_argument("--episodes", type=int)
    ev.add_argument("--checkpoint", help="learned-policy checkpoint")
    ev.set_defaults(func=cmd_eval)

    met = sub.add_parser("metrics", help="recompute metrics from a trajectory log")
    met.add_argument("--log", required=True, help="trajectory log (JSONL)")
    met.add_argument("--out", help="write the report JSON here")
    met.add_argument("--config", help="config YAML for the fingerprint")
    met.set_defaults(func=cmd_metrics)

    plot = sub.add_parser("plot", help="render per-episode trajectory plots")
    plot.add_argument("--log", required=True, help="trajectory log (JSONL)")
    plot.add_argument("--out", required=True, help="output directory")
    plot.add_argument("--episodes", type=int, help="cap the number of plots")
    plot.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
