"""Command line entry point: ``harvestplan <command> ...``.

Exit codes: 0 success, 2 bad configuration or arguments, 3 missing file.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .env import EnvConfig
from .errors import MissingArtifact
from .workspace import WorkspaceConfig

EXIT_OK, EXIT_CONFIG, EXIT_MISSING = 0, 2, 3

log = logging.getLogger("harvestplan")


class _ConfigError(Exception):
    pass


def _read_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise MissingArtifact(f"file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise _ConfigError(f"{p}: invalid JSON ({e})") from e


def _workspace(path) -> WorkspaceConfig:
    return WorkspaceConfig.from_dict(_read_json(path)) if path else WorkspaceConfig()


def _env_config(path) -> EnvConfig:
    return EnvConfig.from_dict(_read_json(path)) if path else EnvConfig()


def cmd_generate(args) -> int:
    from .layouts import PRESETS, LayoutSpec, generate

    if args.spec:
        spec = LayoutSpec.from_dict(_read_json(args.spec))
    else:
        if args.preset not in PRESETS:
            raise _ConfigError(f"unknown preset {args.preset!r}; choose from {', '.join(PRESETS)}")
        spec = PRESETS[args.preset]
    lay = generate(spec, _workspace(args.workspace))
    lay.save(args.out)
    counts = [lay.required_attempts.count(k) for k in (1, 2, 3)]
    print(f"wrote {args.out}: {lay.n} fruits, required attempts 1/2/3 = {counts[0]}/{counts[1]}/{counts[2]}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .ppo import DESK_ENV_CONFIG, TrainConfig, desk_curriculum, train

    conf = _read_json(args.config) if args.config else {}
    unknown = set(conf) - {"train", "env", "curriculum", "workspace"}
    if unknown:
        raise _ConfigError(f"unknown config sections: {sorted(unknown)}")
    tcfg = TrainConfig.from_dict(conf.get("train", {}))
    ecfg = EnvConfig.from_dict(DESK_ENV_CONFIG.to_dict() | conf.get("env", {}))
    ws = WorkspaceConfig.from_dict(conf["workspace"]) if "workspace" in conf else WorkspaceConfig()
    cur = {"n_fruits": 10, "steps": [50_000, 50_000, 100_000]} | conf.get("curriculum", {})
    if cur["n_fruits"] > ecfg.n_max:
        raise _ConfigError(f"curriculum n_fruits={cur['n_fruits']} exceeds env n_max={ecfg.n_max}")
    stages = desk_curriculum(cur["n_fruits"], tuple(cur["steps"]), ws, seed=tcfg.seed)
    res = train(stages, tcfg, ecfg, ws, out_dir=args.out)
    for step_, path, metrics in res.checkpoints:
        print(f"step {step_}: {path} makespan {metrics['makespan_mean']:.2f} s")
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .oracle import optimal_makespan
    from .types import FruitLayout

    lay = FruitLayout.from_dict(_read_json(args.layout))
    ms, seq = optimal_makespan(lay, _workspace(args.workspace), _env_config(args.env_config), with_failures=args.with_failures)
    print(json.dumps({"makespan": ms, "sequence": [[a.to_list() for a in joint] for joint in seq]}))
    return EXIT_OK


def cmd_run(args) -> int:
    from .experiment import run_experiment

    planners = [p for item in args.planner for p in item.split(",") if p]
    layouts = [x for item in args.layout for x in item.split(",") if x]
    res = run_experiment(
        planners,
        layouts,
        reps=args.reps,
        seed=args.seed,
        out_dir=args.out,
        ws=_workspace(args.workspace),
        cfg=_env_config(args.env_config),
        trajectories=not args.no_trajectories,
    )
    print(f"wrote {len(res.rows)} rows to {res.csv_path}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .experiment import format_summary, report

    summary, skipped = report(args.results, args.json)
    if skipped:
        print(f"warning: skipped {skipped} malformed row(s)", file=sys.stderr)
    if not summary:
        print("warning: no results to summarize", file=sys.stderr)
        return EXIT_OK
    print(format_summary(summary))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    # argparse exits with status 2 on usage errors, matching the config-error code.
    p = argparse.ArgumentParser(prog="harvestplan", description="Four-arm harvesting task planner: simulate, train, evaluate.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a fruit layout JSON")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="layout spec JSON")
    src.add_argument("--preset", help="30-A, 30-B, 60-A or 60-B")
    g.add_argument("--out", required=True)
    g.add_argument("--workspace")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a PPO policy with the desk-scale curriculum")
    t.add_argument("--config", help="JSON with optional sections train, env, curriculum, workspace")
    t.add_argument("--out", required=True, help="checkpoint directory")
    t.set_defaults(func=cmd_train)

    o = sub.add_parser("oracle", help="exact minimum makespan for a tiny layout")
    o.add_argument("--layout", required=True)
    o.add_argument("--with-failures", action="store_true")
    o.add_argument("--workspace")
    o.add_argument("--env-config")
    o.set_defaults(func=cmd_oracle)

    r = sub.add_parser("run", help="run a planner x layout x repetition grid")
    r.add_argument("--planner", action="append", required=True, help="random|greedy|static|ppo:<checkpoint>; repeat or comma-separate")
    r.add_argument("--layout", action="append", required=True, help="preset name or layout/spec JSON; repeat or comma-separate")
    r.add_argument("--reps", type=int, default=5)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--workspace")
    r.add_argument("--env-config")
    r.add_argument("--out", default="results")
    r.add_argument("--no-trajectories", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("report", help="summarize a results CSV or JSONL")
    s.add_argument("results")
    s.add_argument("--json", help="also write the summary here")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except MissingArtifact as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING
    except (_ConfigError, ValueError, TypeError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
