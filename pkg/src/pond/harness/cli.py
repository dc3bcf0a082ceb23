"""Command line entry point: ``pond {solve-lp,run,sweep,replay}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..stochastic import StreamSeed
from .config import ConfigError, ExperimentConfig, load_config, resolve_params
from .replay import ReplayError, load_logged_csv, replay_logged
from .sweep import cells, lp_summary, run_sweep


def _overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    upd = {}
    if args.seed is not None:
        upd["master_seed"] = args.seed
    if args.out_dir is not None:
        upd["output_dir"] = args.out_dir
    if args.threads is not None:
        upd["threads"] = args.threads
    return cfg.model_copy(update=upd) if upd else cfg


def cmd_solve_lp(cfg, inst, report, args) -> dict:
    out = lp_summary(inst)
    out["validation"] = report.lines()
    return out


def cmd_run(cfg, inst, report, args) -> dict:
    todo = cells(cfg)
    if args.algorithm:
        todo = [c for c in todo if c.algorithm.label == args.algorithm]
    if args.epsilon_mode:
        todo = [c for c in todo if c.eps_label == args.epsilon_mode]
    if args.horizon:
        todo = [c for c in todo if c.horizon == args.horizon]
    if not todo:
        raise ConfigError("no cell matches the requested algorithm / epsilon mode / horizon")
    paths = run_sweep(cfg, inst, only=todo[:1])
    return {"cell": list(todo[0].key), "outputs": {k: str(v) for k, v in paths.items()}}


def cmd_sweep(cfg, inst, report, args) -> dict:
    paths = run_sweep(cfg, inst)
    return {"outputs": {k: str(v) for k, v in paths.items()}}


def cmd_replay(cfg, inst, report, args) -> dict:
    if cfg.replay is None:
        raise ConfigError("config has no 'replay' section")
    ds = load_logged_csv(args.dataset, inst.n_types, inst.n_servers)
    T = cfg.replay.horizon
    results = []
    for alg in cfg.algorithms:
        modes = [None] if alg.name == "etc" else cfg.epsilon_modes
        for mode in modes:
            params = None if mode is None else resolve_params(cfg, inst, mode, T, alg.learner)
            for k in range(cfg.replay.trials):
                seed = StreamSeed(cfg.master_seed, (("replay", 0), (f"algorithm:{alg.label}", 0),
                                                    (f"epsilon:{mode.label if mode else 'none'}", 0), ("trial", k)))
                res = replay_logged(ds, inst, alg.name, T, seed, params, cfg.replay.max_draws_per_slot)
                row = res.to_json()
                row.update(algorithm=alg.label, epsilon_mode=mode.label if mode else "none", trial=k)
                results.append(row)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "replay.json").write_text(json.dumps(results, indent=2) + "\n")
    return {"outputs": {"replay": str(out / "replay.json")}, "dataset_mean_reward": ds.mean_reward}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pond", description="Constrained online dispatching simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="experiment config JSON")
        sp.add_argument("--seed", type=int, default=None, help="override master_seed")
        sp.add_argument("--out-dir", default=None, help="override output_dir")
        sp.add_argument("--threads", type=int, default=None, help="worker processes for trials")
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    common(sub.add_parser("solve-lp", help="solve the fluid LP and print JSON")).set_defaults(fn=cmd_solve_lp)
    run = common(sub.add_parser("run", help="run a single cell"))
    run.add_argument("--algorithm", default=None, help="e.g. pond-ucb or etc")
    run.add_argument("--epsilon-mode", default=None, help="e.g. zero, 0.5/sqrtT")
    run.add_argument("--horizon", type=int, default=None)
    run.set_defaults(fn=cmd_run)
    common(sub.add_parser("sweep", help="run every cell")).set_defaults(fn=cmd_sweep)
    rp = common(sub.add_parser("replay", help="reject-sampling replay on logged data"))
    rp.add_argument("dataset", help="CSV with header context_type,logged_arm,reward")
    rp.set_defaults(fn=cmd_replay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg, inst, report = load_config(args.config)
        cfg = _overrides(cfg, args)
        result = args.fn(cfg, inst, report, args)
    except (ConfigError, ReplayError, OSError, RuntimeError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    print(json.dumps(result, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
