"""Experiment runners behind the CLI subcommands.

Each runner takes a validated :class:`ExperimentConfig`, writes its manifest
before any data row, and returns a small summary dict.
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from rddlab.agents import PpoAgent, PpoConfig, PpoRunner, QTable, run_qlearning
from rddlab.agents.rollout import greedy_episode_return
from rddlab.baselines import DrndEstimator, RndEstimator, make_estimator
from rddlab.envs import ChainEnv, GridEnv, MountainCarEnv, xpos_density
from rddlab.harness import io
from rddlab.harness.config import ExperimentConfig
from rddlab.harness.mc import mc_oracle, visit_mean_sampler, y_values, z_values
from rddlab.rdd import RddEstimator, RunningMeanOracle, TargetSpec
from rddlab.rng import derive_seed, make_rng
from rddlab.stats import closed_form_var_y, closed_form_var_z, concentration_epsilon

log = logging.getLogger("rddlab")

# short tags for the documented design decisions, copied into every manifest
DEVIATIONS = [
    "tabular Q-learning bootstraps directly (no soft-updated target table)",
    "PPO combines advantages A_E + beta*A_I rather than returns",
    "intrinsic rewards divided by running std only (mean not subtracted)",
    "intrinsic returns are episodic (cut at done)",
    "8 logical parallel environments stepped round-robin",
    "synthetic 2-D Gaussian-mixture points replace embedded replay-buffer states",
]

EPSILON_REFERENCE = 0.26133  # epsilon(10, 0.1) to 4 decimals


def workers() -> int:
    """Bounded pool size from ``RDD_WORKERS`` (default: logical cores)."""
    raw = os.environ.get("RDD_WORKERS")
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


def run_tasks(fn, tasks: list, n_workers: int | None = None) -> list:
    """Run independent tasks, results returned in task order."""
    n = workers() if n_workers is None else n_workers
    if n <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(n, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


# --------------------------------------------------------------------------
# verify-stats

def _row(check, n, mu, sigma, d, trials, value, se, closed, tol, passed, delta=None):
    gap = abs(value - closed)
    return {"check": check, "n": n, "mu": mu, "sigma": sigma, "d": d, "delta": delta, "trials": trials,
            "mc_value": value, "mc_se": se, "closed_form": closed, "abs_gap": gap,
            "rel_gap": gap / abs(closed) if closed else math.inf if gap else 0.0, "tolerance": tol,
            "passed": bool(passed)}


def verify_stats_rows(cfg: ExperimentConfig, seed: int = 0) -> list[dict]:
    """Monte-Carlo checks of the visitation statistics against their closed forms."""
    trials = cfg.trials
    if trials < 1000:
        log.warning("only %d Monte-Carlo trials; tolerances assume >= 1000", trials)
    rows = []
    sigma = cfg.sigmas[0]
    for mu in cfg.mus:
        for n in cfg.ns:
            sampler = visit_mean_sampler(n, mu, sigma, 1)
            tag = derive_seed(seed, "verify", n, repr(mu))
            z = mc_oracle(sampler, z_values(mu, sigma), trials, seed=tag)
            y = mc_oracle(sampler, y_values(mu, sigma), trials, seed=tag)
            vz, vy = closed_form_var_z(n), closed_form_var_y(n, mu, sigma)
            rows.append(_row("mean_z", n, mu, sigma, 1, trials, z.mean, z.se, 1 / n, "3se",
                             abs(z.mean - 1 / n) <= 3 * z.se))
            rows.append(_row("var_z", n, mu, sigma, 1, trials, z.variance, math.nan, vz, "3%",
                             abs(z.variance - vz) <= 0.03 * vz))
            rows.append(_row("mean_y", n, mu, sigma, 1, trials, y.mean, y.se, 1 / n, "3se",
                             abs(y.mean - 1 / n) <= 3 * y.se))
            rows.append(_row("var_y", n, mu, sigma, 1, trials, y.variance, math.nan, vy, "5%",
                             abs(y.variance - vy) <= 0.05 * vy))
            if mu == 0:
                ok = abs(y.variance - z.variance) <= 0.05 * z.variance
                rows.append(_row("var_y_equals_var_z", n, mu, sigma, 1, trials, y.variance, math.nan,
                                 z.variance, "5%", ok))
            else:
                rows.append(_row("var_y_ge_var_z", n, mu, sigma, 1, trials, y.variance, math.nan, z.variance,
                                 ">=", y.variance >= z.variance))
    mu = cfg.mus[0]
    n = 5
    base = mc_oracle(visit_mean_sampler(n, mu, sigma, 1), z_values(mu, sigma), trials,
                     seed=derive_seed(seed, "dim", 1))
    for d in cfg.dims:
        if d == 1:
            continue
        res = mc_oracle(visit_mean_sampler(n, mu, sigma, d), z_values(mu, sigma), trials,
                        seed=derive_seed(seed, "dim", d))
        ratio = res.variance / base.variance
        rows.append(_row("dim_var_ratio", n, mu, sigma, d, trials, ratio, math.nan, 1 / d, "[0.9,1.1]/d",
                         0.9 / d <= ratio <= 1.1 / d))
    for n in cfg.ns:
        for delta in cfg.deltas:
            eps = concentration_epsilon(n, delta)
            exceed = mc_oracle(visit_mean_sampler(n, mu, sigma, 1),
                               lambda m, n=n, eps=eps: np.abs(z_values(mu, sigma)(m) - 1 / n) >= eps,
                               trials, seed=derive_seed(seed, "conc", n, repr(delta)))
            rows.append(_row("concentration", n, mu, sigma, 1, trials, exceed.mean, exceed.se, 2 * delta,
                             "<=2delta", exceed.mean <= 2 * delta, delta=delta))
    eps = concentration_epsilon(10, 0.1)
    rows.append(_row("epsilon_closed_form", 10, mu, sigma, 1, 0, eps, 0.0, EPSILON_REFERENCE, "1e-4",
                     abs(eps - EPSILON_REFERENCE) <= 1e-4, delta=0.1))
    return rows


def cmd_verify_stats(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.out)
    path = io.table_path(out, "verify_stats", cfg.format)
    io.write_manifest(out, "verify_stats", cfg.to_dict(), cfg.seed, "none", DEVIATIONS, [str(path)])
    rows = verify_stats_rows(cfg, cfg.seed)
    io.write_table(path, "verify_stats", rows, cfg.format)
    failed = [r for r in rows if not r["passed"]]
    return {"path": str(path), "rows": len(rows), "failed": len(failed), "passed": not failed}


# --------------------------------------------------------------------------
# toy experiments on synthetic 2-D points

def mixture_points(n: int, seed: int) -> np.ndarray:
    """``n`` points from a seeded mixture of 4 Gaussians, squashed into [-1, 1]^2."""
    rng = make_rng(derive_seed(seed, "points"))
    centers = rng.uniform(-0.6, 0.6, size=(4, 2))
    comp = rng.integers(4, size=n)
    return np.tanh(centers[comp] + 0.15 * rng.standard_normal((n, 2)))


def decay_traces(seed: int, n_points: int = 5, visits: int = 50, d: int = 256, mu: float = 1.0,
                 sigma: float = 1.0, hidden: int = 64, lr: float = 3e-4, drnd_n: int = 10,
                 with_predictors: bool = True) -> list[dict]:
    """Present each point ``visits`` times (round robin) and trace every estimator's bonus.

    ``z_exact`` and ``y_exact`` use an exact running mean of the sampled
    targets; the ``*_pred`` traces come from trained predictors.
    """
    pts = mixture_points(n_points, seed)
    spec = TargetSpec(mu=mu, sigma=sigma, d=d, seed=seed)
    rdd = RddEstimator(2, spec, hidden=hidden, lr=lr)
    rnd = RndEstimator(2, d=d, hidden=hidden, lr=lr, seed=seed) if with_predictors else None
    drnd = DrndEstimator(2, n_targets=drnd_n, d=d, hidden=hidden, lr=lr, seed=seed) if with_predictors else None
    oracle = RunningMeanOracle()
    sample_rng = make_rng(derive_seed(seed, "toy-samples"))
    rows = []
    step = 0
    for visit in range(1, visits + 1):
        for i, x in enumerate(pts):
            # bonuses are read before this presentation's update, counts after it
            draw = sample_rng.normal(mu, sigma, d) if sigma > 0 else np.full(d, mu)
            oracle.ingest(i, draw)
            m = oracle.mean(i)
            row = {"mode": "decay", "seed": seed, "state": i, "step": step, "visit": visit, "count": 1 / visit,
                   "z_exact": float(np.mean((m - mu) ** 2)) / sigma**2 if sigma > 0 else math.nan,
                   "y_exact": float(np.mean(m**2 - mu**2)) / sigma**2 if sigma > 0 else math.nan}
            if with_predictors:
                rdd.train(x[None])
                drnd.train(x[None])
                rnd.train(x[None])
                row["z_pred"] = rdd.bonus(x) / sigma**2 if sigma > 0 else math.nan
                row["y_pred"] = drnd.y_squared(x)
                row["drnd_bonus"] = drnd.bonus(x)
                row["rnd"] = rnd.bonus(x)
            rows.append(row)
            step += 1
    return rows


def rnd_initial_bonuses(seed: int, n_points: int = 5, d: int = 256, hidden: int = 64) -> np.ndarray:
    """RND bonuses on the toy points before any training."""
    return RndEstimator(2, d=d, hidden=hidden, seed=seed).bonus(mixture_points(n_points, seed))


def _walk_schedule(pts: np.ndarray, steps: int, per_step: int, rng: np.random.Generator,
                   k: int = 5) -> list[np.ndarray]:
    """Random walk over the k-nearest-neighbour graph; each step samples ``per_step`` states near the walker."""
    dist = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    nbrs = np.argsort(dist, axis=1)[:, :k]  # includes the point itself
    pos = int(rng.integers(len(pts)))
    schedule = []
    for _ in range(steps):
        pos = int(nbrs[pos, rng.integers(k)])
        schedule.append(nbrs[pos, rng.integers(k, size=per_step)])
    return schedule


def walk_tracker_mse(seed: int, n_targets: list[int], n_points: int = 100, steps: int = 200,
                     per_step: int = 5, d: int = 64, mu: float = 0.0, sigma: float = 1.0) -> dict:
    """MSE to ``1/n`` of exact-mean trackers over one scripted walk.

    ``rdd``: z statistic of the running mean of N(mu, sigma^2) draws.
    ``drnd_N``: un-rooted DRND ratio of the running mean of uniformly chosen
    outputs among N fixed per-state Gaussian targets, using their empirical
    moments. All trackers see the same visit schedule.
    """
    pts = mixture_points(n_points, seed)
    rng = make_rng(derive_seed(seed, "walk"))
    schedule = _walk_schedule(pts, steps, per_step, rng)
    counts = np.zeros(n_points, dtype=np.int64)
    rdd_sum = np.zeros((n_points, d))
    draw_rng = make_rng(derive_seed(seed, "walk-draws"))
    targets = {}
    sums = {}
    moments = {}
    pick_rng = {}
    for N in n_targets:
        trng = make_rng(derive_seed(seed, "walk-targets", N))
        t = trng.normal(mu, sigma, size=(n_points, N, d))
        targets[N] = t
        mean = t.mean(axis=1)
        moments[N] = (mean, np.maximum((t * t).mean(axis=1) - mean * mean, 1e-8))
        sums[N] = np.zeros((n_points, d))
        pick_rng[N] = make_rng(derive_seed(seed, "walk-picks", N))
    err = {"rdd": 0.0, **{f"drnd_{N}": 0.0 for N in n_targets}}
    visits = 0
    for batch in schedule:
        for s in batch:
            counts[s] += 1
            n = counts[s]
            inv = 1.0 / n
            rdd_sum[s] += draw_rng.normal(mu, sigma, d)
            z = float(np.mean((rdd_sum[s] / n - mu) ** 2)) / sigma**2
            err["rdd"] += (z - inv) ** 2
            for N in n_targets:
                sums[N][s] += targets[N][s, pick_rng[N].integers(N)]
                f = sums[N][s] / n
                mean, var = moments[N]
                y = float(np.mean((f * f - mean[s] ** 2) / var[s]))
                err[f"drnd_{N}"] += (y - inv) ** 2
            visits += 1
    return {k: v / visits for k, v in err.items()}


def walk_traces(seed: int, n_points: int = 100, steps: int = 200, per_step: int = 5, d: int = 64,
                mu: float = 1.0, sigma: float = 1.0, hidden: int = 64, lr: float = 3e-4,
                drnd_n: int = 10) -> list[dict]:
    """Scripted walk with trained RDD/DRND/RND predictors; one row per visit."""
    pts = mixture_points(n_points, seed)
    rng = make_rng(derive_seed(seed, "walk"))
    schedule = _walk_schedule(pts, steps, per_step, rng)
    rdd = RddEstimator(2, TargetSpec(mu=mu, sigma=sigma, d=d, seed=seed), hidden=hidden, lr=lr)
    drnd = DrndEstimator(2, n_targets=drnd_n, d=d, hidden=hidden, lr=lr, seed=seed)
    rnd = RndEstimator(2, d=d, hidden=hidden, lr=lr, seed=seed)
    oracle = RunningMeanOracle()
    draw_rng = make_rng(derive_seed(seed, "walk-draws"))
    counts = np.zeros(n_points, dtype=np.int64)
    rows = []
    for step, batch in enumerate(schedule):
        xs = pts[batch]
        rdd.train(xs)
        drnd.train(xs)
        rnd.train(xs)
        for s in batch:
            counts[s] += 1
            oracle.ingest(int(s), draw_rng.normal(mu, sigma, d))
            m = oracle.mean(int(s))
            x = pts[s]
            rows.append({"mode": "walk", "seed": seed, "state": int(s), "step": step, "visit": int(counts[s]),
                         "count": 1 / counts[s],
                         "z_exact": float(np.mean((m - mu) ** 2)) / sigma**2,
                         "y_exact": float(np.mean(m**2 - mu**2)) / sigma**2,
                         "z_pred": rdd.bonus(x) / sigma**2, "y_pred": drnd.y_squared(x),
                         "drnd_bonus": drnd.bonus(x), "rnd": rnd.bonus(x)})
    return rows


def trace_mse(rows: list[dict], key: str) -> float:
    return float(np.mean([(r[key] - r["count"]) ** 2 for r in rows]))


def cmd_toy(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.out)
    path = io.table_path(out, f"toy_{cfg.mode}", cfg.format)
    io.write_manifest(out, f"toy_{cfg.mode}", cfg.to_dict(), cfg.seed, "rdd,drnd,rnd", DEVIATIONS, [str(path)])
    rows = []
    for seed in cfg.seed_list:
        if cfg.mode == "decay":
            rows += decay_traces(seed, cfg.points, cfg.visits, cfg.dim, cfg.mu, cfg.sigma, cfg.hidden, cfg.lr,
                                 cfg.drnd_n)
        else:
            rows += walk_traces(seed, max(cfg.points, 2), cfg.walk_steps, cfg.samples_per_step, cfg.dim, cfg.mu,
                                cfg.sigma, cfg.hidden, cfg.lr, cfg.drnd_n)
    io.write_table(path, "toy", rows, cfg.format)
    return {"path": str(path), "rows": len(rows)}


# --------------------------------------------------------------------------
# agent training

def build_env(cfg: ExperimentConfig, seed: int, index: int = 0):
    if cfg.env == "chain":
        return ChainEnv(cfg.chain_length, obs=cfg.obs)
    if cfg.env == "grid":
        return GridEnv(obs=cfg.obs)
    return MountainCarEnv(seed=derive_seed(seed, "env", index))


def build_estimator(cfg: ExperimentConfig, obs_dim: int, seed: int, bonus: str | None = None):
    return make_estimator(bonus or cfg.bonus, obs_dim, seed=derive_seed(seed, "estimator"), mu=cfg.mu,
                          sigma=cfg.sigma, d=cfg.dim, hidden=cfg.hidden, lr=cfg.lr, drnd_n=cfg.drnd_n,
                          count_sqrt=cfg.count_sqrt, count_bins=cfg.count_bins, mean_mode=cfg.mean_mode)


def probe_states(env) -> np.ndarray:
    """A handful of fixed observations spanning the env, for bonus snapshots."""
    if isinstance(env, ChainEnv):
        L = env.length
        obs = []
        for p in (0, L // 4, L // 2, (3 * L) // 4, L - 1):
            env.position = p
            obs.append(env.observe())
        env.reset()
        return np.array(obs)
    if isinstance(env, GridEnv):
        obs = []
        for cell in ((0, 0), (env.width // 2, env.height // 4), env.goal):
            env.cell = cell
            obs.append(env.observe())
        env.reset()
        return np.array(obs)
    return np.array([[-1.0, 0.0], [-1 / 3, 0.0], [0.0, 0.0], [1.0, 0.0]])


def run_id_for(cfg: ExperimentConfig, seed: int, bonus: str | None = None) -> str:
    return f"{cfg.env}-{cfg.agent}-{bonus or cfg.bonus}-s{seed}"


def train_run(cfg: ExperimentConfig, seed: int, out_dir=None, bonus: str | None = None,
              manifest_extra: dict | None = None) -> dict:
    """One (env, agent, estimator, seed) run; streams metrics rows when ``out_dir`` is set."""
    bonus = bonus or cfg.bonus
    run_id = run_id_for(cfg, seed, bonus)
    env = build_env(cfg, seed)
    est = build_estimator(cfg, env.obs_dim, seed, bonus)
    probes = probe_states(env)
    writer = None
    if out_dir is not None:
        path = io.table_path(out_dir, run_id, cfg.format)
        io.write_manifest(out_dir, run_id, cfg.to_dict(), seed, bonus, DEVIATIONS, [str(path)],
                          extra={"estimator_config": est.describe(), **(manifest_extra or {})})
        writer = io.TableWriter(path, "metrics", cfg.format)
    t0 = time.perf_counter()
    first_success = None
    last_eval = None
    episodes = 0

    def emit(rec):
        nonlocal first_success, last_eval, episodes
        episodes += 1
        if rec.success and first_success is None:
            first_success = rec.episode_index
        if rec.eval_return is not None:
            last_eval = rec.eval_return
        if writer is not None:
            writer.write({"run_id": run_id, "seed": seed, "global_step": rec.global_step,
                          "episode_index": rec.episode_index, "episode_return_ext": rec.episode_return_ext,
                          "mean_bonus": rec.mean_bonus,
                          "bonus_for_probe_states": [float(b) for b in np.atleast_1d(est.bonus(probes))],
                          "visited_state_count": rec.visited_state_count, "eval_return": rec.eval_return,
                          "wall_ms": round((time.perf_counter() - t0) * 1000.0, 3)})

    try:
        if cfg.agent == "qlearn":
            table = QTable(env.n_states, env.n_actions, alpha=cfg.alpha, gamma=cfg.gamma, epsilon=cfg.epsilon,
                           lam=cfg.lam)
            run_qlearning(env, table, est, cfg.episodes, seed=seed, eval_every=cfg.eval_every, on_episode=emit)
            final_return = greedy_episode_return(env, table)
        else:
            final_return = _train_ppo(cfg, seed, est, emit)
    finally:
        if writer is not None:
            writer.close()
    return {"run_id": run_id, "seed": seed, "bonus": bonus, "first_success": first_success,
            "success": first_success is not None, "final_return": final_return, "episodes": episodes,
            "last_eval": last_eval}


def _ppo_config(cfg: ExperimentConfig) -> PpoConfig:
    return PpoConfig(hidden=cfg.hidden, clip=cfg.clip, epochs=cfg.epochs, gamma=cfg.gamma,
                     gae_lambda=cfg.gae_lambda, beta=cfg.lam)


def _train_ppo(cfg: ExperimentConfig, seed: int, est, emit, record_positions: bool = False):
    envs = [build_env(cfg, seed, i) for i in range(cfg.n_envs)]
    agent = PpoAgent(envs[0].obs_dim, envs[0].n_actions, _ppo_config(cfg), seed=derive_seed(seed, "agent"))
    runner = PpoRunner(agent, envs, est, seed=seed, record_positions=record_positions)
    budget = cfg.steps or cfg.episodes * getattr(envs[0], "horizon", 200)
    while runner.global_step < budget:
        traj, recs = runner.collect(min(cfg.rollout_len, max(1, -(-(budget - runner.global_step) // cfg.n_envs))))
        runner.update(traj)
        for rec in recs:
            emit(rec)
    if record_positions:
        return runner
    return _greedy_return(agent, build_env(cfg, derive_seed(seed, "eval")))


def _greedy_return(agent: PpoAgent, env) -> float:
    obs = env.reset()
    ret, done = 0.0, False
    while not done:
        obs, r, done = env.step(int(agent.greedy(obs[None])[0]))
        ret += r
    return ret


def cmd_train(cfg: ExperimentConfig) -> dict:
    results = run_tasks(_train_task, [(cfg, s) for s in cfg.seed_list])
    return {"runs": results, "successes": sum(r["success"] for r in results)}


def _train_task(args):
    cfg, seed = args
    return train_run(cfg, seed, cfg.out)


# --------------------------------------------------------------------------
# pilot calibration of agent budgets

def calibrate_budget(first_successes: list, default_budget: int) -> tuple[int, float]:
    """20th-percentile first-success episode (failures count as never) times 1.5.

    Returns ``(budget, p20)``; if fewer than 20% of pilot seeds succeed the
    percentile is undefined and the default budget is kept.
    """
    vals = np.array([math.inf if f is None else f + 1 for f in first_successes], dtype=float)
    p20 = float(np.percentile(vals, 20, method="inverted_cdf"))
    if not math.isfinite(p20):
        return default_budget, p20
    return int(math.ceil(1.5 * p20)), p20


def calibrate(cfg: ExperimentConfig, bonuses: list[str], pilot_seeds: list[int]) -> list[dict]:
    rows = []
    for bonus in bonuses:
        results = run_tasks(_pilot_task, [(cfg, s, bonus) for s in pilot_seeds])
        firsts = [r["first_success"] for r in results]
        budget, p20 = calibrate_budget(firsts, cfg.episodes)
        rows.append({"bonus": bonus, "seeds": len(pilot_seeds), "budget": budget, "p20_success_episode": p20,
                     "successes": sum(f is not None for f in firsts)})
    return rows


def _pilot_task(args):
    cfg, seed, bonus = args
    return train_run(cfg, seed, None, bonus)


# --------------------------------------------------------------------------
# MountainCar state-density study

def density_run(cfg: ExperimentConfig, seed: int, bonus: str) -> dict:
    est = build_estimator(cfg, MountainCarEnv.obs_dim, seed, bonus)
    runner = _train_ppo(replace(cfg, env="mountaincar", agent="ppo"), seed, est, lambda rec: None,
                        record_positions=True)
    pos = np.asarray(runner.positions)
    dens, edges = xpos_density(pos, bins=cfg.bins, window=cfg.window)
    goal = [float(np.mean(pos[i:i + cfg.window] >= MountainCarEnv.goal_position))
            for i in range(0, pos.size, cfg.window)]
    return {"bonus": bonus, "seed": seed, "density": dens, "edges": edges, "goal_mass": goal,
            "occupied": (dens > 0).sum(axis=1).tolist(), "steps": pos.size}


def cmd_density(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.out)
    dpath = io.table_path(out, "density", cfg.format)
    spath = io.table_path(out, "density_summary", cfg.format)
    io.write_manifest(out, "density", cfg.to_dict(), cfg.seed, ",".join(cfg.bonuses), DEVIATIONS,
                      [str(dpath), str(spath)])
    tasks = [(cfg, s, b) for s in cfg.seed_list for b in cfg.bonuses]
    results = run_tasks(_density_task, tasks)
    with io.TableWriter(dpath, "density", cfg.format) as dw, io.TableWriter(spath, "density_summary",
                                                                             cfg.format) as sw:
        for res in results:
            run_id = f"mountaincar-ppo-{res['bonus']}-s{res['seed']}"
            edges = res["edges"]
            # the same bins on a [0, 1] axis, for comparison with plots drawn on a rescaled track
            unit = (edges - MountainCarEnv.min_position) / (MountainCarEnv.max_position - MountainCarEnv.min_position)
            for w, row in enumerate(res["density"]):
                for b, val in enumerate(row):
                    dw.write({"run_id": run_id, "bonus": res["bonus"], "seed": res["seed"], "window": w, "bin": b,
                              "bin_low": float(edges[b]), "bin_high": float(edges[b + 1]), "unit_low": float(unit[b]),
                              "unit_high": float(unit[b + 1]), "density": float(val)})
                sw.write({"run_id": run_id, "bonus": res["bonus"], "seed": res["seed"], "window": w,
                          "steps": min(cfg.window, res["steps"] - w * cfg.window),
                          "occupied_bins": int(res["occupied"][w]), "goal_mass": res["goal_mass"][w]})
    return {"paths": [str(dpath), str(spath)], "runs": [{k: r[k] for k in ("bonus", "seed", "occupied", "goal_mass")}
                                                        for r in results]}


def _density_task(args):
    cfg, seed, bonus = args
    return density_run(cfg, seed, bonus)


# --------------------------------------------------------------------------
# ablations over mu, sigma and output dimension

def cold_start_bonus(cfg: ExperimentConfig, seed: int, zero_output: bool = False) -> float:
    """RDD bonus at the env's start state before any training."""
    env = build_env(cfg, seed)
    est = build_estimator(cfg, env.obs_dim, seed, "rdd")
    if zero_output:
        last = est.predictor.layers[-1]
        last.weight[...] = 0.0
        last.bias[...] = 0.0
    return float(est.bonus(env.reset()))


def ablate_rows(cfg: ExperimentConfig) -> tuple[list[dict], list[dict]]:
    rows = []
    tasks = []
    for value in cfg.values:
        v = int(value) if cfg.param == "dim" else float(value)
        sub = replace(cfg, **{cfg.param: v}, bonus="rdd")
        tasks += [(sub, s) for s in cfg.seed_list]
    results = run_tasks(_pilot_task, [(c, s, "rdd") for c, s in tasks])
    for (sub, seed), res in zip(tasks, results):
        rows.append({"param": cfg.param, "value": getattr(sub, cfg.param), "seed": seed,
                     "final_return": res["final_return"], "success": res["success"],
                     "first_success_episode": res["first_success"],
                     "cold_start_bonus": cold_start_bonus(sub, seed)})
    summary = []
    for value in cfg.values:
        v = int(value) if cfg.param == "dim" else float(value)
        sel = [r for r in rows if r["value"] == v]
        finals = np.array([r["final_return"] for r in sel], dtype=float)
        q1, med, q3 = np.percentile(finals, [25, 50, 75])
        summary.append({"param": cfg.param, "value": v, "seeds": len(sel), "median_final_return": float(med),
                        "iqr_final_return": float(q3 - q1),
                        "success_rate": float(np.mean([r["success"] for r in sel]))})
    return rows, summary


def cmd_ablate(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.out)
    path = io.table_path(out, f"ablate_{cfg.param}", cfg.format)
    spath = io.table_path(out, f"ablate_{cfg.param}_summary", cfg.format)
    io.write_manifest(out, f"ablate_{cfg.param}", cfg.to_dict(), cfg.seed, "rdd", DEVIATIONS,
                      [str(path), str(spath)])
    rows, summary = ablate_rows(cfg)
    io.write_table(path, "ablate", rows, cfg.format)
    io.write_table(spath, "ablate_summary", summary, cfg.format)
    return {"paths": [str(path), str(spath)], "summary": summary}


COMMAND_RUNNERS = {
    "verify-stats": cmd_verify_stats,
    "toy": cmd_toy,
    "train": cmd_train,
    "density": cmd_density,
    "ablate": cmd_ablate,
}
