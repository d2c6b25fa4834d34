#!/usr/bin/env python3
"""
Subcommand implementations
Each *_impl builds what it needs through the asset manager, writes its artifacts and returns a status line
"""

import json
import logging
from pathlib import Path
from typing import Optional, List

import numpy as np
import pandas as pd

from assets import ExampleAssets, asset_manager
from config import ExperimentConfig
from figures import write_figure
from simulate import sres_initial_states, sres_sweep, table1_experiment

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"


def example_dir(config: ExperimentConfig, out: str) -> Path:
    path = Path(out) / config.name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, data):
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_assets(config: ExperimentConfig, jobs: int = 1, use_cache: bool = True,
                persist: bool = True) -> ExampleAssets:
    assets, cached = asset_manager.get(config, jobs=jobs, use_cache=use_cache, persist=persist)
    print(f"{'♻️ ' if cached else '🔧'} {config.name}: sets {'loaded from cache' if cached else 'built'}")
    return assets


def build_sets_impl(config: ExperimentConfig, out: str, jobs: int = 1, use_cache: bool = True,
                    persist: bool = True) -> str:
    """Write the PCLF, terminal ingredients and N-step set as JSON"""
    assets = load_assets(config, jobs, use_cache, persist)
    target = example_dir(config, out)
    _write_json(target / "pclf.json", assets.pclf.to_dict())
    _write_json(target / "riccati.json", assets.riccati.to_dict())
    _write_json(target / "terminal.json", assets.terminal.to_dict())
    _write_json(target / "terminal_polytope.json", assets.terminal_polytope.to_dict())
    _write_json(target / "controllable_set.json", assets.controllable.to_dict())
    return (f"✅ {config.name}: PCLF with {assets.pclf.r} rows "
            f"({assets.pclf.iterations} iterations, converged={assets.pclf.converged}), "
            f"𝕏_f alpha={assets.terminal.alpha:.6g}, 𝒳_{config.horizon} with {assets.controllable.rows} rows "
            f"→ {target}")


def certify_impl(config: ExperimentConfig, out: str, jobs: int = 1, use_cache: bool = True,
                 persist: bool = True) -> str:
    """Write the certificate constants and the β*(s) level table"""
    assets = load_assets(config, jobs, use_cache, persist)
    cert = assets.cert
    target = example_dir(config, out)
    _write_json(target / "certificate.json", {**cert.to_dict(), "gain_audit": assets.gain_audit})
    table = pd.DataFrame([{"level": e.level, "lambda_star": e.lambda_star, "beta_star": e.beta_star}
                          for e in cert.level_table])
    table.to_csv(target / "level_table.csv", index=False, float_format=FLOAT_FORMAT)
    return (f"✅ {config.name}: alpha1={cert.alpha1:.4g} alpha2={cert.alpha2:.4g} c={cert.c:.4g} "
            f"beta*={cert.beta_star:.4g} (levels {cert.level_table[0].beta_star:.4g}"
            f"..{cert.level_table[-1].beta_star:.4g}), decay rate {cert.decay_rate:.6g}")


def table1_impl(config: ExperimentConfig, out: str, seed: Optional[int] = None, jobs: int = 1,
                use_cache: bool = True, persist: bool = True) -> str:
    """Mean closed-loop cost ratios (summary CSV) plus per-run detail"""
    assets = load_assets(config, jobs, use_cache, persist)
    seed = config.seed if seed is None else seed
    result = table1_experiment(assets, runs=config.runs, seed=seed, jobs=jobs)
    target = example_dir(config, out)
    result.summary.to_csv(target / "table1.csv", index=False, float_format=FLOAT_FORMAT)
    result.detail.to_csv(target / "table1_runs.csv", index=False, float_format=FLOAT_FORMAT)
    ratios = ", ".join(f"{k} {v:.3f}" for k, v in result.mean_ratios().items())
    return f"✅ {config.name}: cost ratios over {config.runs} runs: {ratios}"


def figures_impl(config: ExperimentConfig, out: str, jobs: int = 1, use_cache: bool = True,
                 persist: bool = True) -> str:
    assets = load_assets(config, jobs, use_cache, persist)
    path = example_dir(config, out) / "sets.svg"
    regions = write_figure(assets, path, config.grid, jobs)
    return f"✅ {config.name}: figure with {len(regions.tilde)} 𝒳̃_{config.horizon} grid points → {path}"


def sres_impl(config: ExperimentConfig, out: str, seed: Optional[int] = None, jobs: int = 1,
              use_cache: bool = True, persist: bool = True) -> str:
    """Perturbed MPC 1 closed loops over the configured δ grid"""
    assets = load_assets(config, jobs, use_cache, persist)
    seed = config.seed if seed is None else seed
    starts = sres_initial_states(assets.pclf, config.sres_scale, config.sres_runs, seed)
    report = sres_sweep(assets.controller("mpc1"), starts, config.sres_deltas,
                        config.sres_steps or config.steps, config.sres_runs, seed=seed, jobs=jobs)
    lower, upper = np.min(assets.pclf.vertices.vertices, axis=1), np.max(assets.pclf.vertices.vertices, axis=1)
    report["diameter"] = float(np.linalg.norm(upper - lower))
    report.to_csv(example_dir(config, out) / "sres.csv", index=False, float_format=FLOAT_FORMAT)
    best = report[report["feasibility_rate"] == 1.0]
    summary = (f"smallest fully feasible δ {best['delta'].min():.3g}" if not best.empty
               else "no δ with full feasibility")
    return f"✅ {config.name}: SRES sweep over {len(report)} bounds, {summary}"


def all_impl(config: ExperimentConfig, out: str, seed: Optional[int] = None, jobs: int = 1,
             use_cache: bool = True, persist: bool = True) -> List[str]:
    lines = [build_sets_impl(config, out, jobs, use_cache, persist),
             certify_impl(config, out, jobs, True, persist),
             table1_impl(config, out, seed, jobs, True, persist),
             figures_impl(config, out, jobs, True, persist),
             sres_impl(config, out, seed, jobs, True, persist)]
    return lines
