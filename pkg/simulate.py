#!/usr/bin/env python3
"""
Closed-loop simulation
Nominal and perturbed runs, cost accounting, the Table-1 cost-ratio experiment and robustness sweeps
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, List, Dict, Any, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import PclfError, Infeasible
from geometry import HPolytope, sample, scale
from mpc import MpcProblem, StandardController, solve_fhocp
from pclf import Pclf, eval_vp_first_order

logger = logging.getLogger(__name__)

DISTRIBUTIONS = ("uniform-box", "worst-corner-random-sign")
TAIL_FRACTION = 0.2
MAX_REJECTIONS = 200


@dataclass(frozen=True)
class PerturbationSpec:
    """∞-norm bounds on the additive disturbance d and the measurement noise e"""
    delta_d: float = 0.0
    delta_e: float = 0.0
    distribution: str = "uniform-box"
    seed: Optional[int] = None

    def __post_init__(self):
        for name in ("delta_d", "delta_e"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution '{self.distribution}', expected one of {DISTRIBUTIONS}")

    def draw(self, rng: np.random.Generator, n: int) -> Tuple[np.ndarray, np.ndarray]:
        if self.distribution == "uniform-box":
            d = rng.uniform(-self.delta_d, self.delta_d, n)
            e = rng.uniform(-self.delta_e, self.delta_e, n)
        else:
            d = self.delta_d * rng.choice([-1.0, 1.0], n)
            e = self.delta_e * rng.choice([-1.0, 1.0], n)
        return d, e


@dataclass
class Trajectory:
    """One closed-loop run.

    states has one row more than inputs. feasible holds one flag per attempted
    step; a run that hit a solver failure ends with a False flag and no input
    for that step.
    """
    states: np.ndarray
    inputs: np.ndarray
    disturbances: np.ndarray
    measured: Optional[np.ndarray]
    stage_costs: np.ndarray
    feasible: np.ndarray
    branches: List[Optional[str]] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def steps(self) -> int:
        return self.inputs.shape[0]

    @property
    def cumulative_cost(self) -> float:
        return float(np.sum(self.stage_costs))

    @property
    def completed(self) -> bool:
        return bool(np.all(self.feasible))


def closed_loop(controller, x0, steps: int, perturbation: Optional[PerturbationSpec] = None,
                warm_start: bool = True) -> Trajectory:
    """Apply the first input of each solve for `steps` steps.

    Solver failures are recorded in the trajectory rather than raised.
    """
    problem: MpcProblem = controller.problem
    sys = problem.sys
    rng = np.random.default_rng(perturbation.seed if perturbation is not None else None)
    x = np.asarray(x0, dtype=float).reshape(-1)
    states, inputs, dist, measured, costs, flags, branches = [x], [], [], [], [], [], []
    previous = None
    error = None
    for k in range(steps):
        if perturbation is not None:
            d, e = perturbation.draw(rng, sys.n)
        else:
            d, e = np.zeros(sys.n), np.zeros(sys.n)
        x_m = x + e
        try:
            result = controller.solve(x_m, warm_start=previous if warm_start else None)
        except PclfError as exc:
            logger.info("closed loop stopped at step %d: %s", k, exc)
            flags.append(False)
            error = f"{exc.code}: {exc}"
            break
        u = result.first_input
        x_next = sys.step(x, u) + d
        inputs.append(u)
        dist.append(d)
        measured.append(x_m)
        costs.append(problem.stage_cost(x, u))
        flags.append(True)
        branches.append(result.branch)
        previous = result.inputs
        x = x_next
        states.append(x)
    return Trajectory(
        states=np.array(states),
        inputs=np.array(inputs).reshape(-1, sys.m),
        disturbances=np.array(dist).reshape(-1, sys.n),
        measured=np.array(measured).reshape(-1, sys.n) if perturbation is not None else None,
        stage_costs=np.array(costs, dtype=float),
        feasible=np.array(flags, dtype=bool),
        branches=branches,
        error=error,
    )


def performance_cost(traj: Trajectory, Q, R) -> float:
    """Σ x(k)ᵀQx(k) + u(k)ᵀRu(k) over the applied inputs"""
    Q = np.atleast_2d(Q)
    R = np.atleast_2d(R)
    X = traj.states[:traj.steps]
    U = traj.inputs
    return float(np.einsum("ki,ij,kj->", X, Q, X) + np.einsum("ki,ij,kj->", U, R, U))


def reference_cost(problem: MpcProblem, P: np.ndarray, terminal_polytope: HPolytope, x0,
                   horizon: Optional[int] = None, guess: Optional[np.ndarray] = None) -> float:
    """Optimal value of the long-horizon baseline problem at x0.

    `guess` is a full input sequence (for instance the inputs of a closed-loop
    run) used as the starting point of the QP when it is feasible.
    """
    if horizon is not None:
        problem = problem.with_horizon(horizon)
    controller = StandardController(problem, P, terminal_polytope)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if not np.any(x0):
        return 0.0
    return solve_fhocp(controller.spec, x0, warm_start=guess, shift=False).objective


def decay_violation(traj: Trajectory, pclf: Pclf, lam: float) -> float:
    """Largest excess of max(Fψ(k)) over lam^k·max(Fψ(0)); ≤ 0 when the envelope holds"""
    levels = eval_vp_first_order(pclf, traj.states)
    envelope = lam ** np.arange(len(levels)) * levels[0]
    return float(np.max(levels - envelope))


def trajectory_frame(traj: Trajectory, pclf: Optional[Pclf] = None) -> pd.DataFrame:
    """Columns: step, x1..xn, u1..um, stage_cost, feasible, max_Fx"""
    n = traj.states.shape[1]
    m = traj.inputs.shape[1]
    rows = traj.states.shape[0]
    data: Dict[str, Any] = {"step": np.arange(rows)}
    for i in range(n):
        data[f"x{i + 1}"] = traj.states[:, i]
    for j in range(m):
        column = np.full(rows, np.nan)
        column[:traj.steps] = traj.inputs[:, j]
        data[f"u{j + 1}"] = column
    cost = np.full(rows, np.nan)
    cost[:traj.steps] = traj.stage_costs
    data["stage_cost"] = cost
    flags = np.ones(rows, dtype=bool)
    flags[:len(traj.feasible)] = traj.feasible
    data["feasible"] = flags
    if pclf is not None:
        data["max_Fx"] = eval_vp_first_order(pclf, traj.states)
    return pd.DataFrame(data)


def write_trajectory_csv(traj: Trajectory, path, pclf: Optional[Pclf] = None):
    trajectory_frame(traj, pclf).to_csv(path, index=False, float_format="%.12g")


# ---------------------------------------------------------------------------
# Table 1: closed-loop cost over the optimal long-horizon cost
# ---------------------------------------------------------------------------

@dataclass
class Table1Result:
    detail: pd.DataFrame
    summary: pd.DataFrame

    def mean_ratios(self) -> Dict[str, float]:
        return {k: float(v) for k, v in self.summary.iloc[0].items() if k != "example"}


def _table1_run(args) -> Dict[str, Any]:
    """One Table-1 row. A controller failure is recorded as a NaN cost with its
    error text; only an infeasible reference problem draws a new initial state."""
    assets, controllers, run, child_seed, steps = args
    rng = np.random.default_rng(child_seed)
    problem = assets.problem
    for attempt in range(MAX_REJECTIONS):
        x0 = sample(assets.pclf.polytope, "boundary-near", 1, seed=int(rng.integers(2 ** 32)))[0]
        costs, errors, best = {}, {}, None
        for name in controllers:
            traj = closed_loop(assets.controller(name), x0, steps)
            if not traj.completed:
                logger.warning("run %d: %s failed after %d steps from %s (%s)",
                               run, name, traj.steps, x0, traj.error)
                costs[name], errors[name] = np.nan, traj.error
                continue
            costs[name], errors[name] = performance_cost(traj, problem.Q, problem.R), ""
            if best is None or costs[name] < best[0]:
                best = (costs[name], traj.inputs)
        try:
            ref = reference_cost(problem, assets.riccati.P, assets.terminal_polytope, x0,
                                 horizon=steps, guess=best[1] if best is not None else None)
        except Infeasible:
            logger.info("run %d: reference problem infeasible at %s, resampling", run, x0)
            continue
        row = {"run": run, "attempts": attempt + 1}
        row.update({f"x0_{i + 1}": float(v) for i, v in enumerate(x0)})
        row["reference_cost"] = ref
        for name in controllers:
            row[f"cost_{name}"] = costs[name]
            row[f"ratio_{name}"] = costs[name] / ref if ref > 0 else (1.0 if np.isfinite(costs[name]) else np.nan)
            row[f"error_{name}"] = errors[name]
        if "mpc1" in costs and "mpc1b" in costs:
            both = np.isfinite(costs["mpc1"]) and np.isfinite(costs["mpc1b"])
            row["mpc1b_le_mpc1"] = bool(costs["mpc1b"] <= costs["mpc1"] + 1e-9) if both else np.nan
        return row
    raise Infeasible(f"run {run}: no admissible initial state after {MAX_REJECTIONS} samples")


def table1_experiment(assets, runs: int = 20, seed: int = 0, controllers: Sequence[str] = None,
                      steps: Optional[int] = None, jobs: int = 1) -> Table1Result:
    """Mean closed-loop cost ratios over boundary-near initial states.

    Each run draws from its own child of SeedSequence(seed), so results do not
    depend on `jobs`.
    """
    controllers = list(controllers or assets.config.table_controllers)
    steps = steps or assets.config.steps
    children = np.random.SeedSequence(seed).spawn(runs)
    tasks = [(assets, controllers, run, child, steps) for run, child in enumerate(children)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_table1_run, tasks))
    else:
        rows = [_table1_run(t) for t in tasks]
    detail = pd.DataFrame(rows)
    summary = {"example": assets.config.name}
    summary.update({name: float(detail[f"ratio_{name}"].mean()) for name in controllers})
    for name in controllers:
        failed = int(detail[f"cost_{name}"].isna().sum())
        if failed:
            logger.warning("%s failed in %d of %d runs; its mean ratio covers the rest", name, failed, runs)
    if "mpc1b_le_mpc1" in detail:
        for run in detail.loc[~detail["mpc1b_le_mpc1"].astype(bool), "run"]:
            logger.warning("run %d: MPC 1b closed-loop cost above MPC 1", int(run))
    return Table1Result(detail=detail, summary=pd.DataFrame([summary]))


# ---------------------------------------------------------------------------
# Robustness sweep
# ---------------------------------------------------------------------------

def sres_initial_states(pclf: Pclf, factor: float, count: int, seed: int) -> np.ndarray:
    """Uniform samples of the `factor`-scaled sublevel set of max(Fx)"""
    return sample(scale(pclf.polytope, factor), "interior-uniform-rejection", count, seed)


def _sres_run(args) -> Tuple[bool, float]:
    controller, x0, delta, child_seed, steps, distribution = args
    perturbation = PerturbationSpec(delta, delta, distribution, int(np.random.default_rng(child_seed).integers(2 ** 32)))
    traj = closed_loop(controller, x0, steps, perturbation)
    if not traj.completed:
        return False, np.inf
    tail = traj.states[int((1.0 - TAIL_FRACTION) * steps):]
    return True, float(np.max(np.linalg.norm(tail, axis=1)))


def sres_sweep(controller, initial_states: np.ndarray, deltas: Sequence[float], steps: int,
               runs: int, seed: int = 0, distribution: str = "uniform-box", jobs: int = 1) -> pd.DataFrame:
    """Perturbed closed loops per δ (largest first).

    Columns: delta, runs, feasible_runs, feasibility_rate, tail_radius; the tail
    radius is the largest ‖ψ(k)‖ over the last fifth of the feasible runs.
    """
    initial_states = np.atleast_2d(initial_states)
    rows = []
    for i, delta in enumerate(sorted(deltas, reverse=True)):
        children = np.random.SeedSequence([seed, i]).spawn(runs)
        tasks = [(controller, initial_states[r % len(initial_states)], float(delta), children[r], steps, distribution)
                 for r in range(runs)]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(_sres_run, tasks))
        else:
            outcomes = [_sres_run(t) for t in tasks]
        feasible = [radius for ok, radius in outcomes if ok]
        rows.append({
            "delta": float(delta),
            "runs": runs,
            "feasible_runs": len(feasible),
            "feasibility_rate": len(feasible) / runs,
            "tail_radius": max(feasible) if feasible else np.inf,
        })
        logger.info("sres delta=%.3g: %d/%d feasible", delta, len(feasible), runs)
    return pd.DataFrame(rows)
