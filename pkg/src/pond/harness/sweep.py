"""Sweep orchestration: cells of (algorithm, epsilon mode, horizon) x trials."""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..baselines import run_etc_trial
from ..dispatch import PondParams, run_pond_trial
from ..fluid_lp import FluidProblem, LpStatus, slater_margin, solve_fluid_lp
from ..instance import Instance
from ..metrics import compute_metrics, summarize
from ..stochastic import StreamSeed
from .config import AlgorithmConfig, EpsilonMode, ExperimentConfig, resolve_params

log = logging.getLogger(__name__)

ETC_EPS_LABEL = "none"


@dataclass(frozen=True)
class Cell:
    algorithm: AlgorithmConfig
    eps_mode: EpsilonMode | None
    horizon: int

    @property
    def eps_label(self) -> str:
        return ETC_EPS_LABEL if self.eps_mode is None else self.eps_mode.label

    @property
    def key(self) -> tuple[str, str, int]:
        return self.algorithm.label, self.eps_label, self.horizon


def cells(cfg: ExperimentConfig) -> list[Cell]:
    """All cells, sorted; ETC ignores the epsilon modes and gets one cell per horizon."""
    out = []
    for alg in cfg.algorithms:
        modes = [None] if alg.name == "etc" else cfg.epsilon_modes
        for mode in modes:
            for T in cfg.horizons:
                out.append(Cell(alg, mode, T))
    return sorted(set(out), key=lambda c: c.key)


def trial_seed(master_seed: int, cell: Cell, trial: int) -> StreamSeed:
    return StreamSeed(master_seed, (
        (f"algorithm:{cell.algorithm.label}", 0),
        (f"epsilon:{cell.eps_label}", 0),
        ("T", cell.horizon),
        ("trial", trial),
    ))


def _one_trial(inst: Instance, cell: Cell, params: PondParams | None, seed: StreamSeed, opt: float) -> dict:
    if cell.algorithm.name == "etc":
        rec = run_etc_trial(inst, cell.horizon, seed)
    else:
        rec = run_pond_trial(inst, params, cell.horizon, seed)
    m = compute_metrics(rec, inst.reward_means, opt, inst.family_names)
    return {
        "final_regret": m.final_regret,
        "final_violation": m.final_violation,
        "realized_reward": float(m.realized_reward[-1]),
        "flags": ";".join(rec.flags),
    }


def _run_chunk(args):
    inst, cell, params, seeds, opt = args
    return [_one_trial(inst, cell, params, s, opt) for s in seeds]


class _FinalOnly:
    """Just enough of TrialMetrics for ``summarize``."""

    def __init__(self, res: dict, names):
        self.final_regret = res["final_regret"]
        self.final_violation = res["final_violation"]
        self.family_names = names


def run_cell(cfg: ExperimentConfig, inst: Instance, cell: Cell, opt: float,
             trials: int | None = None, pool: ProcessPoolExecutor | None = None) -> tuple[dict, list[dict]]:
    """Run one cell; returns (aggregate row, per-trial rows)."""
    n_trials = cfg.trials if trials is None else trials
    params = None
    if cell.algorithm.name == "pond":
        params = resolve_params(cfg, inst, cell.eps_mode, cell.horizon, cell.algorithm.learner)
    seeds = [trial_seed(cfg.master_seed, cell, k) for k in range(n_trials)]
    if pool is None:
        results = _run_chunk((inst, cell, params, seeds, opt))
    else:
        chunk = max(1, n_trials // (4 * cfg.threads))
        parts = [seeds[i:i + chunk] for i in range(0, n_trials, chunk)]
        results = [r for part in pool.map(_run_chunk, [(inst, cell, params, p, opt) for p in parts]) for r in part]

    names = inst.family_names
    row = {"algorithm": cell.algorithm.label, "epsilon_mode": cell.eps_label, "T": cell.horizon,
           "V": params.v if params else "", "epsilon": params.epsilon if params else ""}
    row.update(summarize([_FinalOnly(r, names) for r in results]))
    per_trial = []
    for k, r in enumerate(results):
        t_row = {"algorithm": cell.algorithm.label, "epsilon_mode": cell.eps_label, "T": cell.horizon,
                 "trial": k, "regret": r["final_regret"], "realized_reward": r["realized_reward"]}
        for j, name in enumerate(names):
            t_row[f"{name}_violation_max_signed"] = float(np.max(r["final_violation"][:, j]))
        t_row["flags"] = r["flags"]
        per_trial.append(t_row)
    return row, per_trial


def aggregate_header(family_names) -> list[str]:
    head = ["algorithm", "epsilon_mode", "T", "V", "epsilon", "regret_mean", "regret_sem"]
    for name in family_names:
        head += [f"{name}_violation_max_signed", f"{name}_violation_pospart"]
    return head + ["n_trials", "status", "error"]


def lp_summary(inst: Instance) -> dict:
    prob = FluidProblem.from_instance(inst)
    sol = solve_fluid_lp(prob)
    sl = slater_margin(prob)
    out = sol.to_json()
    out["delta"] = sl.delta if sl.status is LpStatus.OPTIMAL else None
    out["family_names"] = inst.family_names
    return out


def _write_csv(path: Path, header: list[str], rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def run_sweep(cfg: ExperimentConfig, inst: Instance, out_dir: str | Path | None = None,
              only: list[Cell] | None = None) -> dict[str, Path]:
    """Run every cell and write aggregate.csv, lp.json and optionally trials.csv."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    lp = lp_summary(inst)
    (out / "lp.json").write_text(json.dumps(lp, indent=2, sort_keys=True) + "\n")
    if lp["status"] != LpStatus.OPTIMAL.value:
        raise RuntimeError("fluid LP of the configured instance is infeasible; regret is undefined")
    opt = lp["objective"]

    todo = only if only is not None else cells(cfg)
    pool = ProcessPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    rows, trial_rows = [], []
    try:
        for cell in todo:
            log.info("cell %s", cell.key)
            try:
                row, per_trial = run_cell(cfg, inst, cell, opt, pool=pool)
                row.update(status="ok", error="")
            except Exception as exc:  # recorded as a failure row
                row = {"algorithm": cell.algorithm.label, "epsilon_mode": cell.eps_label, "T": cell.horizon,
                       "status": "failed", "error": f"{type(exc).__name__}: {exc}"}
                per_trial = []
            rows.append(row)
            trial_rows.extend(per_trial)
    finally:
        if pool is not None:
            pool.shutdown()

    paths = {"lp": out / "lp.json", "aggregate": out / "aggregate.csv"}
    _write_csv(paths["aggregate"], aggregate_header(inst.family_names), rows)
    if cfg.write_trials:
        head = ["algorithm", "epsilon_mode", "T", "trial", "regret", "realized_reward"]
        head += [f"{n}_violation_max_signed" for n in inst.family_names] + ["flags"]
        paths["trials"] = out / "trials.csv"
        _write_csv(paths["trials"], head, trial_rows)
    return paths
