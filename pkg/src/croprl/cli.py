"""Command-line entry point.

Subcommands: train, evaluate, noise, ablate, oracle-check, report. All of
the I/O in the package happens here and in the checkpoint/report writers;
the underlying modules stay pure functions of their inputs.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .agents import MlpAgent, TransformerAgent, build_agent
from .config import RawConfig, RunConfig, load_run_config
from .dqn import run_chain_oracle, train
from .env import REWARD_PRESETS, CropEnv
from .errors import ConfigurationError, CropRLError
from .evaluation import (
    GreedyPolicy,
    SchedulePolicy,
    ablate_architecture,
    ablate_separate,
    baseline_for,
    evaluate_policies,
    evaluate_policy,
    noise_robustness,
)
from .nn.gradcheck import check_gradients
from .nn import mean
from .nn.params import load_checkpoint
from .reports import (
    checkpoint_id,
    write_architecture_report,
    write_eval_report,
    write_learning_curve,
    write_manifest,
    write_noise_report,
)
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="croprl",
        description="Train and evaluate daily crop-management policies.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run config file (merged over defaults)")
        p.add_argument("--out", help="output directory (default: $CROPRL_OUT or ./runs)")
        p.add_argument("--seed", type=int, help="override the training seed")
        p.add_argument("--workers", type=int, help="evaluation worker processes")

    p = sub.add_parser("train", help="train one agent, write checkpoint + log")
    common(p)
    p.add_argument("--episodes", type=int, help="override training episode count")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="baseline vs trained policy table")
    common(p)
    p.add_argument("--checkpoint", help="trained agent checkpoint")
    p.add_argument("--baseline-only", action="store_true",
                   help="report only the calendar baseline")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("noise", help="measurement-noise robustness table")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--runs", type=int, help="episodes per noise row")
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("ablate", help="joint-vs-separate or architecture table")
    common(p)
    p.add_argument("--mode", choices=("separate", "architecture"),
                   default="separate")
    p.add_argument("--episodes", type=int, help="override training episode count")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("oracle-check",
                       help="gradient checks and the tabular Q-learning oracle")
    p.add_argument("--quick", action="store_true",
                   help="gradient checks only (skip the chain oracle)")
    p.add_argument("--perturb-gradients", action="store_true",
                   help="failure-injection hook: tamper with analytic "
                        "gradients to prove the check can fail")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("report", help="re-render artifacts from a training log")
    p.add_argument("--log", required=True, help="train_log.jsonl from a run")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_report)

    return parser


def _overrides(args) -> RawConfig:
    overrides: RawConfig = {}

    def put(section, key, value):
        overrides.setdefault(section, {})[key] = str(value)

    if getattr(args, "seed", None) is not None:
        put("train", "seed", args.seed)
    if getattr(args, "episodes", None) is not None:
        put("train", "episodes", args.episodes)
    if getattr(args, "out", None) is not None:
        put("run", "out", args.out)
    if getattr(args, "workers", None) is not None:
        put("run", "workers", args.workers)
    if getattr(args, "runs", None) is not None:
        put("noise", "runs", args.runs)
    return overrides


def _load(args) -> RunConfig:
    return load_run_config(args.config, _overrides(args))


def _outdir(rc: RunConfig) -> Path:
    out = Path(rc.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _restore_agent(path, rc: RunConfig):
    params, meta, _ = load_checkpoint(path)
    kind = meta.get("agent", "<unknown>")
    if kind != rc.agent.kind:
        raise ConfigurationError(
            f"checkpoint {path} holds a {kind!r} agent but the config "
            f"requests {rc.agent.kind!r}"
        )
    agent = build_agent(rc.agent, rc.ranges, seed=rc.train.seed)
    agent.params.copy_from(params)
    return agent


def cmd_train(args) -> int:
    rc = _load(args)
    out = _outdir(rc)
    agent = build_agent(rc.agent, rc.ranges, seed=rc.train.seed)

    def env_factory():
        return CropEnv(rc.profile, rc.train.seed, rc.weights, noise=rc.noise)

    log_path = out / "train_log.jsonl"
    ckpt_path = out / "checkpoint.ckpt"
    with open(log_path, "w", encoding="utf-8") as log:
        def on_episode(stats):
            log.write(json.dumps({
                "episode": stats.episode,
                "reward": stats.reward,
                "steps": stats.steps,
                "epsilon": stats.epsilon,
                "mean_loss": None if np.isnan(stats.mean_loss) else stats.mean_loss,
                "grad_steps": stats.grad_steps,
            }, sort_keys=True) + "\n")

        result = train(env_factory, agent, rc.train, on_episode=on_episode,
                       checkpoint_path=ckpt_path)

    curve_path = out / "learning_curve.svg"
    write_learning_curve(
        result.rewards, curve_path,
        title=f"training return, {rc.profile.name}, {rc.weights.label}, "
              f"seed {rc.train.seed}",
    )
    write_manifest(
        out / "manifest.json", rc.raw, seeds=[rc.train.seed],
        checkpoints={"agent": checkpoint_id(ckpt_path)},
        outputs=[p.name for p in (ckpt_path, log_path, curve_path)],
        version=__version__,
    )
    last = result.rewards[-1] if result.rewards else float("nan")
    best = result.best_return
    summary = f"trained {rc.agent.kind} for {rc.train.episodes} episodes"
    summary += f", final return {last:.2f}"
    if best is not None:
        summary += f", best eval return {best:.2f} (episode {result.best_episode})"
    print(summary)
    print(f"wrote {ckpt_path}, {log_path}, {curve_path}")
    return 0


def cmd_evaluate(args) -> int:
    rc = _load(args)
    out = _outdir(rc)
    schedule = baseline_for(rc.profile.name)
    policies = [SchedulePolicy(schedule)]
    checkpoints = {}
    if not args.baseline_only:
        if not args.checkpoint:
            raise ConfigurationError(
                "evaluate needs --checkpoint (or --baseline-only)")
        agent = _restore_agent(args.checkpoint, rc)
        policies.append(GreedyPolicy(agent))
        checkpoints["agent"] = checkpoint_id(args.checkpoint)

    report = evaluate_policies(policies, rc.profile, rc.seeds,
                               workers=rc.workers)
    report_path = out / "eval_report.csv"
    write_eval_report(report, report_path)
    write_manifest(out / "manifest.json", rc.raw, seeds=rc.seeds,
                   checkpoints=checkpoints, outputs=[report_path.name],
                   version=__version__)
    for row in report.rows:
        print(f"{row.label}: N {row.n_total:.0f} kg/ha, water "
              f"{row.irrigation_total:.0f} L/m2, yield {row.yield_mean:.0f} "
              f"kg/ha, {rc.weights.label} {row.rf[rc.weights.label]:.2f} $")
    print(f"wrote {report_path}")
    return 0


def cmd_noise(args) -> int:
    rc = _load(args)
    out = _outdir(rc)
    agent = _restore_agent(args.checkpoint, rc)
    schedule = baseline_for(rc.profile.name)
    report = noise_robustness(
        GreedyPolicy(agent), rc.profile, runs=rc.noise_runs,
        weather_seed=rc.noise_weather_seed, baseline=schedule,
        workers=rc.workers,
    )
    report_path = out / "noise_report.csv"
    write_noise_report(report, report_path)
    write_manifest(out / "manifest.json", rc.raw,
                   seeds=[rc.noise_weather_seed],
                   checkpoints={"agent": checkpoint_id(args.checkpoint)},
                   outputs=[report_path.name], version=__version__)
    worst = max(report.rows, key=lambda r: r.decrease_pct)
    print(f"{len(report.rows)} noise rows over {report.runs} runs each; "
          f"largest decrease {worst.decrease_pct:.1f}% ({worst.label} {worst.level})")
    print(f"wrote {report_path}")
    return 0


def cmd_ablate(args) -> int:
    rc = _load(args)
    out = _outdir(rc)
    report_path = out / "ablation_report.csv"
    if args.mode == "separate":
        report = ablate_separate(rc.profile, rc.weights, rc.train,
                                 agent_config=rc.agent,
                                 eval_seeds=rc.eval_seeds, workers=rc.workers)
        write_eval_report(report, report_path)
        for row in report.rows:
            print(f"{row.label}: {rc.weights.label} {row.rf[rc.weights.label]:.2f} $")
    else:
        rows = ablate_architecture(
            rc.profile, rc.weights, kinds=rc.architectures, config=rc.train,
            train_seeds=rc.seeds, eval_seeds=rc.eval_seeds, workers=rc.workers,
        )
        write_architecture_report(rows, report_path)
        for row in rows:
            print(f"{row.kind}: {row.param_count} parameters, "
                  f"mean {rc.weights.label} {row.rf1_mean:.2f} $")
    write_manifest(out / "manifest.json", rc.raw, seeds=rc.seeds,
                   outputs=[report_path.name], version=__version__)
    print(f"wrote {report_path}")
    return 0


def _gradient_suite(tamper: float) -> float:
    """Gradcheck small instances of both architectures; returns max error."""
    from .agents import AgentConfig
    from .simulator import florida_like

    rng = np.random.default_rng(0)
    worst = 0.0
    env = CropEnv(florida_like(), seed=3, weights=REWARD_PRESETS["RF1"])
    obs = env.reset()
    for _ in range(30):
        obs, _, _, _ = env.step(7)
    transformer = TransformerAgent(
        AgentConfig(kind="transformer", encoder_dim=16, encoder_layers=1,
                    heads=2, ff_dim=24, head_dims=(20, 12)),
        seed=0,
    )
    tokens = transformer.encode(obs)[np.newaxis, :]
    err, _ = check_gradients(
        lambda: mean(transformer.q_batch(tokens)),
        dict(transformer.params.items()),
        rng=rng, max_coords=3, tamper=tamper,
    )
    worst = max(worst, err)
    mlp = MlpAgent(AgentConfig(kind="mlp3", mlp_hidden=24), seed=0)
    features = mlp.encode(obs)[np.newaxis, :]
    err, _ = check_gradients(
        lambda: mean(mlp.q_batch(features)),
        dict(mlp.params.items()),
        rng=rng, max_coords=4, tamper=tamper,
    )
    return max(worst, err)


def cmd_oracle_check(args) -> int:
    tamper = 1e-2 if args.perturb_gradients else 0.0
    grad_err = _gradient_suite(tamper)
    grad_ok = grad_err < 1e-4
    print(f"gradient check: max relative error {grad_err:.3e} "
          f"({'ok' if grad_ok else 'FAIL'})")
    ok = grad_ok

    if not args.quick:
        oracle = run_chain_oracle()
        match = oracle.pooled_match_fraction
        gap = oracle.worst_q_error
        chain_ok = match >= 0.95 and gap < 0.1
        print(f"chain oracle: policy match {match:.0%} over "
              f"{len(oracle.per_seed)} seeds, max |Q - Q*| {gap:.4f} "
              f"({'ok' if chain_ok else 'FAIL'})")
        ok = ok and chain_ok

    return 0 if ok else 1


def cmd_report(args) -> int:
    log_path = Path(args.log)
    if not log_path.exists():
        raise ConfigurationError(f"training log not found: {log_path}")
    rewards = []
    with open(log_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rewards.append(float(json.loads(line)["reward"]))
            except (json.JSONDecodeError, KeyError, TypeError) as err:
                raise ConfigurationError(
                    f"{log_path}:{lineno}: not a training log line ({err})"
                ) from None
    out = Path(args.out) if args.out else log_path.parent
    out.mkdir(parents=True, exist_ok=True)
    curve_path = out / "learning_curve.svg"
    write_learning_curve(rewards, curve_path,
                         title=f"training return, {log_path.name}")
    print(f"{len(rewards)} episodes, final return {rewards[-1]:.2f}")
    print(f"wrote {curve_path}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CropRLError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
