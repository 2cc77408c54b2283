"""Experiment drivers behind the ``gap``, ``bounds``, ``sweep`` and ``sample`` commands.

Each driver takes a validated configuration and returns ``(results, checks,
columns, rows, extras)``: tagged result fields, named boolean checks, the
CSV table, and optional extra files (trajectory dumps).
"""

from __future__ import annotations

import copy
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import bounds as bd
from .. import simulate as sim
from ..errors import ConfigError, TemperlabError
from ..kernel import ExactKernel, Partition, spectral_gap
from ..models.ising import (
    IsingModel,
    ising_components,
    ising_levels,
    ising_lumped_density,
    magnetizations,
    mode_partition,
    single_site_proposal,
)
from ..models.mixture import (
    Grid1D,
    ball_proposal_1d,
    NormalMixtureModel,
    delta_weighted_bound,
    gamma_weighted_bound,
    grid_mode_partition,
    mc_block_overlap,
    minimal_c,
    mixture_grid_components,
    mixture_grid_levels,
    mixture_level_mass,
    geometric_overlap_floor,
)
from ..tempering import (
    LevelDensities,
    TemperatureLadder,
    geometric_ladder,
    linear_ladder,
    simulated_tempering_chain,
    swapping_chain,
    union_ladder,
)
from .io import exact, formula, monte_carlo


def ladder_size(cfg: dict) -> int:
    lad, model = cfg["ladder"], cfg["model"]
    if lad["M"] is not None:
        return lad["M"]
    return model["M"] if model["kind"] == "ising" else model["dim"]


def build_ladder(cfg: dict) -> TemperatureLadder:
    kind = cfg["ladder"]["kind"]
    if kind == "explicit":
        return TemperatureLadder(cfg["ladder"]["betas"])
    if kind == "none":
        return TemperatureLadder([1.0])
    M = ladder_size(cfg)
    return {"linear": linear_ladder, "geometric": geometric_ladder,
            "union": union_ladder}[kind](M)


def _ising(cfg) -> IsingModel:
    return IsingModel(cfg["model"]["M"], cfg["model"]["alpha"])


def _mixture(cfg) -> NormalMixtureModel:
    m = cfg["model"]
    return NormalMixtureModel(m["dim"], m["b"], m["a"], m["truncated"])


def _grid(cfg) -> Grid1D:
    g, b = cfg["model"]["grid"], cfg["model"]["b"]
    half = g["half_width"] if g["half_width"] is not None else b + 10.0
    return Grid1D(half, g["cells"])


@dataclass
class FiniteSetup:
    ladder: TemperatureLadder
    levels: LevelDensities
    components: list[ExactKernel]
    partition: Partition
    proposal: np.ndarray


def finite_setup(cfg: dict) -> FiniteSetup:
    """Exact level densities, component kernels and partition for a finite model."""
    ladder = build_ladder(cfg)
    cap = cfg["caps"]["states"]
    m = cfg["model"]
    if m["kind"] == "ising":
        model = _ising(cfg)
        levels = ising_levels(model, ladder, lumped=m["lumped"], cap=cap)
        components = ising_components(model, levels, lumped=m["lumped"], cap=cap)
        partition = mode_partition(model.M, lumped=m["lumped"], cap=cap)
        proposal = single_site_proposal(model.M, lumped=m["lumped"], cap=cap)
    elif m["dim"] == 1:
        model, grid = _mixture(cfg), _grid(cfg)
        levels = mixture_grid_levels(model, ladder, grid)
        components = mixture_grid_components(levels, grid, m["radius"])
        partition = grid_mode_partition(grid)
        proposal = ball_proposal_1d(m["radius"], grid)
    else:
        raise ConfigError("exact computations need a finite model (Ising or a 1-D mixture grid)")
    if cfg["partition"]["kind"] == "explicit":
        labels = cfg["partition"]["labels"]
        if len(labels) != levels.n:
            raise ConfigError(f"partition has {len(labels)} labels for {levels.n} states")
        partition = Partition(labels)
    return FiniteSetup(ladder, levels, components, partition, proposal)


def _table(results: dict) -> tuple[list, list]:
    rows = []
    for key, v in results.items():
        if isinstance(v, dict) and "kind" in v:
            rows.append({"quantity": key, "value": v["value"], "kind": v["kind"],
                         "se": v.get("se")})
    return ["quantity", "value", "kind", "se"], rows


# -- gap ---------------------------------------------------------------------


def cmd_gap(cfg: dict):
    s = finite_setup(cfg)
    cap, dl = cfg["caps"]["states"], cfg["caps"]["dense_limit"]
    chains = cfg["run"]["chains"]
    res = {"n_states": exact(s.levels.n), "n_levels": exact(s.levels.N + 1)}
    if "mh" in chains:
        res["gap_mh"] = exact(spectral_gap(s.components[-1], dense_limit=dl))
    if "sc" in chains:
        P = swapping_chain(s.levels, s.components, cap=cap, dense_limit=dl)
        res["states_sc"] = exact(P.n)
        res["gap_sc"] = exact(spectral_gap(P, dense_limit=dl))
    if "st" in chains:
        P = simulated_tempering_chain(s.levels, s.components, cap=cap, dense_limit=dl)
        res["states_st"] = exact(P.n)
        res["gap_st"] = exact(spectral_gap(P, dense_limit=dl))
    cols, rows = _table(res)
    return res, {}, cols, rows, {}


# -- bounds ------------------------------------------------------------------


def _mc_delta(model: NormalMixtureModel, ladder: TemperatureLadder, n: int, rng):
    """Smallest Monte Carlo block overlap over ordered adjacent pairs, with its SE."""
    best = (1.0, 0.0)
    b = ladder.betas
    for k in range(ladder.N):
        for first, second in ((k, k + 1), (k + 1, k)):
            for block in (0, 1):
                est, se = mc_block_overlap(model, b[first], b[second], block, n, rng)
                if est < best[0]:
                    best = (est, se)
    return best


def _floor_checks(cfg: dict, ladder: TemperatureLadder, delta: float, delta_se: float,
                  gamma: float, res: dict, checks: dict) -> None:
    m = cfg["model"]
    lower = delta - 3.0 * delta_se
    L = ladder_size(cfg)
    if m["kind"] == "ising":
        if m["M"] % 2 == 1 and ladder.betas[0] == 0.0:
            floor = float(np.exp(-m["alpha"] / 2.0))
            res["delta_floor"] = formula(floor)
            checks["delta_ge_exp_minus_alpha_half"] = lower >= floor - cfg["tolerances"]["inequality"]
            checks["gamma_equals_one"] = gamma == 1.0
        return
    model = _mixture(cfg)
    kind = cfg["ladder"]["kind"]
    if model.a >= 0.5:
        res["gamma_closed_form"] = formula(gamma_weighted_bound(model, ladder))
        checks["gamma_ge_half"] = gamma >= 0.5
    if kind == "geometric" and model.a == 0.5:
        floor = geometric_overlap_floor(L)
    elif kind == "union" and model.a >= 0.5:
        c = minimal_c(model, L)
        res["c"] = formula(c)
        floor = delta_weighted_bound(c, L)
    else:
        return
    res["delta_floor"] = formula(floor)
    checks["delta_ge_floor"] = lower >= floor - cfg["tolerances"]["inequality"]


def cmd_bounds(cfg: dict):
    res: dict = {}
    checks: dict = {}
    m = cfg["model"]
    if m["kind"] == "mixture" and m["dim"] > 1:
        model, ladder = _mixture(cfg), build_ladder(cfg)
        rng = sim.make_rng(cfg["run"]["seed"])
        delta, se = _mc_delta(model, ladder, cfg["run"]["mc_samples"], rng)
        masses = np.array([mixture_level_mass(model, b) for b in ladder.betas])
        ratios = np.minimum(1.0, masses[:-1] / masses[1:])
        gamma = float(np.min(np.prod(ratios, axis=0))) if ladder.N else 1.0
        res.update(delta=monte_carlo(delta, se), gamma=formula(gamma),
                   J=exact(2), N=exact(ladder.N))
        _floor_checks(cfg, ladder, delta, se, gamma, res, checks)
    else:
        s = finite_setup(cfg)
        chains = cfg["run"]["chains"]
        report = bd.full_bound_report(
            s.levels, s.components, s.partition,
            exact=bool({"sc", "st"} & set(chains)), cap=cfg["caps"]["states"],
            raise_on_violation=False)
        res.update(
            delta=exact(report.delta), gamma=exact(report.gamma),
            gap_T0_bar=exact(report.gap_T0_bar),
            min_restricted_gap=exact(report.min_restricted_gap),
            J=exact(report.J), N=exact(report.N),
            swapping_bound=formula(report.swapping_bound), tempering_bound=formula(report.tempering_bound),
            madras_randall_overlap=exact(report.madras_randall_overlap),
            exact_gap_sc=exact(report.exact_gap_sc), exact_gap_st=exact(report.exact_gap_st),
        )
        slack = cfg["tolerances"]["inequality"]
        if report.exact_gap_sc is not None:
            checks["swapping_bound_le_exact_gap_sc"] = report.swapping_bound <= report.exact_gap_sc + slack
        if report.exact_gap_st is not None:
            checks["tempering_bound_le_exact_gap_st"] = report.tempering_bound <= report.exact_gap_st + slack
        checks["delta_le_madras_randall"] = report.delta <= report.madras_randall_overlap + slack
        _floor_checks(cfg, s.ladder, report.delta, 0.0, report.gamma, res, checks)
    cols, rows = _table(res)
    return res, checks, cols, rows, {}


# -- sweep -------------------------------------------------------------------

SWEEP_COLUMNS = ["M", "status", "n_levels", "states_sc", "gap_mh", "min_restricted_gap",
                 "gap_sc", "gap_st", "delta", "gamma", "swapping_bound", "tempering_bound", "error"]
_FIT_COLUMNS = ["gap_mh", "min_restricted_gap", "gap_sc", "gap_st", "swapping_bound", "tempering_bound"]


def cell_config(cfg: dict, M: int) -> dict:
    c = copy.deepcopy(cfg)
    if c["model"]["kind"] == "ising":
        c["model"]["M"] = M
    c["ladder"]["M"] = M
    c["sweep"]["M"] = []
    return c


def sweep_cell(cfg: dict) -> dict:
    """Exact quantities for one sweep cell; failures are captured in the row."""
    M = cfg["ladder"]["M"]
    row = {"M": M}
    try:
        s = finite_setup(cfg)
        cap = cfg["caps"]["states"]
        row["n_levels"] = s.levels.N + 1
        row["gap_mh"] = spectral_gap(s.components[-1])
        row["min_restricted_gap"] = float(bd.restricted_gaps(s.components, s.partition).min())
        size = s.levels.n ** (s.levels.N + 1)
        row["states_sc"] = size
        ing = bd.bound_ingredients(s.levels, s.components, s.partition)
        row["delta"], row["gamma"] = ing["delta"], ing["gamma"]
        row["swapping_bound"] = bd.swapping_gap_bound(**ing)
        row["tempering_bound"] = bd.tempering_gap_bound(**ing)
        if size <= cap:
            row["gap_sc"] = spectral_gap(swapping_chain(s.levels, s.components, cap=cap))
            row["gap_st"] = spectral_gap(simulated_tempering_chain(s.levels, s.components, cap=cap))
            row["status"] = "ok"
        else:
            row["status"] = "ok_tempered_gaps_skipped_cap"
    except (TemperlabError, ValueError) as exc:
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def fit_log_linear(x, y) -> tuple[float, float]:
    """Least-squares slope and R^2 of ``log y`` against ``x``."""
    x, ly = np.asarray(x, float), np.log(np.asarray(y, float))
    slope, icept = np.polyfit(x, ly, 1)
    resid = ly - (slope * x + icept)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)


def sweep_summary(rows: list[dict]) -> list[dict]:
    """Rows ``slope_vs_M``, ``r2_vs_M``, ``slope_vs_logM``, ``r2_vs_logM``."""
    out = {name: {"M": name, "status": "summary"} for name in
           ("slope_vs_M", "r2_vs_M", "slope_vs_logM", "r2_vs_logM")}
    for col in _FIT_COLUMNS:
        pts = [(r["M"], r[col]) for r in rows if r.get(col) is not None and r[col] > 0]
        if len(pts) < 2:
            continue
        Ms, ys = zip(*pts)
        out["slope_vs_M"][col], out["r2_vs_M"][col] = fit_log_linear(Ms, ys)
        out["slope_vs_logM"][col], out["r2_vs_logM"][col] = fit_log_linear(np.log(Ms), ys)
    return list(out.values())


def cmd_sweep(cfg: dict):
    Ms = sorted(cfg["sweep"]["M"])
    if not Ms:
        raise ConfigError("a sweep needs a non-empty 'sweep.M' list")
    if cfg["model"]["kind"] == "mixture" and cfg["model"]["dim"] > 1:
        raise ConfigError("sweeps need a finite model (Ising or a 1-D mixture grid)")
    cells = [cell_config(cfg, M) for M in Ms]
    workers = cfg["sweep"]["workers"]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(sweep_cell, cells))
    else:
        rows = [sweep_cell(c) for c in cells]
    summary = sweep_summary(rows)
    failed = [r["M"] for r in rows if r["status"] == "failed"]
    res = {
        "rows": [{k: r.get(k) for k in SWEEP_COLUMNS} for r in rows],
        "summary": summary,
        "failed_cells": failed,
    }
    return res, {"all_cells_ok": not failed}, SWEEP_COLUMNS, rows + summary, {}


# -- sample ------------------------------------------------------------------


def sampler_setup(cfg: dict):
    """Level model, initial point (all levels in the negative mode) and reference masses."""
    m = cfg["model"]
    ladder = build_ladder(cfg)
    if m["kind"] == "ising":
        model = _ising(cfg)
        lumped = ising_lumped_density(model, 1.0)
        ref = np.array([lumped[magnetizations(model.M) < 0].sum(),
                        lumped[magnetizations(model.M) >= 0].sum()])
        if m["lumped"]:
            levels = ising_levels(model, ladder, lumped=True)
            sampler = sim.DiscreteLevels(levels, single_site_proposal(model.M, lumped=True),
                                         mode_partition(model.M).block_of)
            start = np.array(0)
            delta = bd.overlap_delta(levels, mode_partition(model.M))
        else:
            sampler = sim.SpinIsingLevels(model, ladder)
            start = -np.ones(model.M, dtype=np.int8)
            levels = ising_levels(model, ladder, lumped=True)
            delta = bd.overlap_delta(levels, mode_partition(model.M))
        return sampler, start, ref, (delta, 0.0)
    model = _mixture(cfg)
    sampler = sim.MixtureLevels(model, ladder, m["radius"])
    start = np.full(model.dim, -model.b)
    ref = np.array(mixture_level_mass(model, 1.0))
    rng = sim.make_rng(cfg["run"]["seed"], 3)
    delta = _mc_delta(model, ladder, cfg["run"]["mc_samples"], rng) if ladder.N else (1.0, 0.0)
    return sampler, start, ref, delta


def _tile(start, R, copies=None):
    shape = (R,) if copies is None else (R, copies)
    return np.broadcast_to(start, shape + start.shape).copy()


def cmd_sample(cfg: dict):
    run = cfg["run"]
    sampler, start, ref, (delta, delta_se) = sampler_setup(cfg)
    N, R, steps, seed = sampler.N, run["replicas"], run["steps"], run["seed"]
    burn = run["burn_in"]
    res: dict = {"steps": exact(steps), "replicas": exact(R), "delta": (
        monte_carlo(delta, delta_se) if delta_se else exact(delta))}
    checks: dict = {}
    extras: dict = {}
    long_enough = steps > 0 and int(np.floor(burn * steps)) < steps

    if "sc" in run["chains"]:
        traj = sim.run_swapping(sampler, _tile(start, R, N + 1), steps,
                                sim.make_rng(seed, 0), seed=seed)
        res["sc_crossings_top_level"] = monte_carlo(
            sum(sim.mode_crossing_count(traj, N, r) for r in range(R)))
        res["sc_occupancy_tv_top_level"] = monte_carlo(
            sim.occupancy_tv(traj, N, ref, burn) if long_enough else None)
        rates = sim.swap_acceptance_rates(traj)
        props = traj.swap_proposed.sum(axis=0) if N else np.zeros(0)
        floor = delta ** 2
        floor_se = 2 * delta * delta_se
        acc = []
        for k, (p, n_prop) in enumerate(zip(rates, props)):
            se = float(np.sqrt(p * (1 - p) / n_prop)) if n_prop > 0 else None
            acc.append(monte_carlo(p, se))
            if n_prop > 0:
                checks[f"swap_acceptance_pair_{k}_above_floor"] = bool(
                    p + 3 * se >= floor - 3 * floor_se)
        res["sc_swap_acceptance"] = acc
        res["swap_acceptance_floor"] = monte_carlo(floor, floor_se) if delta_se else formula(floor)
        if run["dump"]:
            extras["trajectory_sc.txt"] = traj
    if "st" in run["chains"]:
        lev0 = np.zeros(R, dtype=np.int64)
        traj = sim.run_simulated_tempering(sampler, lev0, _tile(start, R), steps,
                                           sim.make_rng(seed, 1), seed=seed)
        rate, defined = sim.round_trip_rate(traj)
        res["st_round_trip_rate"] = monte_carlo(rate)
        res["st_round_trip_defined"] = defined
        res["st_crossings_top_level"] = monte_carlo(
            sum(sim.mode_crossing_count(traj, N, r) for r in range(R)))
        if long_enough:
            occ = sim.occupancy(traj, N, burn)
            tv = None if np.isnan(occ).any() else float(0.5 * np.abs(occ - ref).sum())
        else:
            tv = None
        res["st_occupancy_tv_top_level"] = monte_carlo(tv)
        if steps:
            counts = np.bincount(traj.levels.ravel(), minlength=N + 1)
            res["st_level_occupancy"] = [monte_carlo(c / counts.sum()) for c in counts]
        else:
            res["st_level_occupancy"] = []
        if run["dump"]:
            extras["trajectory_st.txt"] = traj
    if "mh" in run["chains"]:
        traj = sim.run_untempered(sampler, _tile(start, R), steps, sim.make_rng(seed, 2),
                                  seed=seed)
        res["mh_crossings"] = monte_carlo(
            sum(sim.mode_crossing_count(traj, 0, r) for r in range(R)))
        res["mh_occupancy_tv"] = monte_carlo(
            sim.occupancy_tv(traj, 0, ref, burn) if long_enough else None)
        if run["dump"]:
            extras["trajectory_mh.txt"] = traj
    cols, rows = _table(res)
    return res, checks, cols, rows, extras


COMMANDS = {"gap": cmd_gap, "bounds": cmd_bounds, "sweep": cmd_sweep, "sample": cmd_sample}


def run_command(name: str, cfg: dict):
    t0 = time.perf_counter()
    out = COMMANDS[name](cfg)
    return out + (time.perf_counter() - t0,)
