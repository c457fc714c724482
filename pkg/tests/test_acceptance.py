"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line (repeated in the terminal summary)
and then asserts on the same condition.  The training criteria are slow:
roughly five minutes for the single-agent run and up to half an hour for the
IPPO seeds on one core.
"""

import math
import time

import numpy as np

from invrl.baselines import baseline_controller, safety_stock
from invrl.cli import main
from invrl.env import ClusterEnv, ClusterSpec, InventoryEnv, ItemEnv, default_reward_scale
from invrl.evaluate import ExperimentConfig, evaluate
from invrl.ippo import baseline_reward_lines, ippo_train
from invrl.ppo import PolicyController, preset, train_single
from invrl.ppo.losses import Trajectory, _upstream, compute_gae, loss_components, LossSettings
from invrl.ppo.trainer import CURVE_FIELDS
from invrl.stochastic import (RngStream, fit_demand_mle, fit_lead_time_mle, normal_cdf,
                              sample_demand, sample_lead_time)

from conftest import bisect_ppf
from gradcheck import COMPONENTS, numeric_grads, random_case, rel_error

FIRST_CLUSTER = range(5)


def test_dynamics_safety(catalog, verdict):
    cluster = ClusterSpec.from_items(catalog.items(FIRST_CLUSTER))
    env = InventoryEnv(cluster)
    rng = np.random.default_rng(0)
    actions = rng.integers(0, cluster.capacity + 1, size=(100_000, len(cluster))).tolist()
    volumes = cluster.volumes
    worst_fill, worst_used, overflows = 0.0, -math.inf, 0
    start = time.perf_counter()
    for k, a in enumerate(actions):
        if k % 240 == 0:
            env.reset(0, k // 240)
        out = env.step(a)
        if out.overflow:
            overflows += 1
            filled = sum(w * r * v for w, r, v in zip(out.weights, out.arrivals, volumes))
            worst_fill = max(worst_fill, abs(filled - out.space))
        used = sum(x * v for x, v in zip(env.state.levels, volumes))
        worst_used = max(worst_used, used - cluster.capacity)
    elapsed = time.perf_counter() - start
    ok = worst_used <= 0 and worst_fill <= 1e-9 and elapsed < 10
    verdict(1, ok, f"max(sum x*v - cap)={worst_used:g}, {overflows} overflows, "
                   f"max |sum w*rho - space|={worst_fill:.2e}, {elapsed:.1f}s")
    assert overflows > 0 and ok


def test_estimator_oracle(catalog, verdict):
    n = 10_000
    start = time.perf_counter()
    misses = []
    worst = 0.0
    for rec in catalog:
        d = sample_demand(rec.to_item().demand, RngStream(0, rec.id, 1), size=n)
        tau = sample_lead_time(rec.to_item().lead, RngStream(0, rec.id, 2), size=n)
        dm, lm = fit_demand_mle(d), fit_lead_time_mle(tau)
        n_pos = int(np.count_nonzero(d))
        se = {"b": math.sqrt(rec.b * (1 - rec.b) / n), "mu": math.sqrt(rec.mu / n_pos),
              "p": rec.p * math.sqrt((1 - rec.p) / n)}
        got = {"b": dm.b, "mu": dm.mu, "p": lm.p}
        true = {"b": rec.b, "mu": rec.mu, "p": rec.p}
        for k in se:
            z = abs(got[k] - true[k]) / se[k]
            worst = max(worst, z)
            if z > 3:
                misses.append((rec.id, k, round(z, 2)))
    hand = fit_demand_mle([0, 3, 0, 5]), fit_lead_time_mle([2, 4, 6])
    hand_ok = (hand[0].b, hand[0].mu, hand[1].p) == (0.5, 4.0, 0.25)
    elapsed = time.perf_counter() - start
    ok = not misses and hand_ok and elapsed < 30
    verdict(2, ok, f"{len(catalog)} rows, worst |error|/se={worst:.2f}, misses={misses}, "
                   f"hand cases {'exact' if hand_ok else 'wrong'}, {elapsed:.1f}s")
    assert ok


def test_safety_stock_value(verdict):
    kappa = safety_stock(0.90, mu_d=3.0, sd_d=2.0, mu_t=4.0, sd_t=1.0)
    z = bisect_ppf(0.90, lambda x: 0.5 * math.erfc(-x / math.sqrt(2)))
    oracle = z * math.sqrt(4.0 * 2.0 ** 2 + 3.0 ** 2 * 1.0 ** 2)
    ok = abs(kappa - oracle) < 1e-3 and abs(kappa - 6.4078) < 1e-3
    verdict(3, ok, f"kappa={kappa:.6f}, bisection oracle={oracle:.6f}, published 6.4078")
    assert ok
    assert abs(normal_cdf(z) - 0.90) < 1e-12


def test_gradient_correctness(verdict):
    settings = LossSettings(clip_eps=0.2, vf_clip=0.5)
    start = time.perf_counter()
    worst = {}
    for head in ("discrete", "gaussian"):
        for seed in range(20):
            net, params, batch = random_case(1000 + seed, head, share=seed % 2 == 1,
                                             activation="tanh" if seed % 4 < 2 else "relu",
                                             hidden=(6 + seed % 3, 5))
            analytic = loss_components(net, params, batch, settings)

            def values(p):
                comps = _upstream(net, p, batch, settings.clip_eps, settings.vf_clip)[0]
                return {k: comps[k][0] for k in COMPONENTS}

            numeric = numeric_grads(values, params, COMPONENTS)
            for name in COMPONENTS:
                err = rel_error(analytic[name][1], numeric[name])
                worst[head, name] = max(worst.get((head, name), 0.0), err)
    elapsed = time.perf_counter() - start
    top = max(worst.values())
    ok = top < 1e-4 and elapsed < 60
    verdict(4, ok, f"40 networks x 4 components, worst rel. error={top:.2e}, {elapsed:.1f}s")
    assert ok


def test_gae_identity(verdict):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 80))
        gamma = float(rng.uniform(0.8, 1.0))
        r, v = rng.standard_normal(n) * 10, rng.standard_normal(n) * 10
        boot = float(rng.standard_normal()) if rng.random() < 0.5 else 0.0
        traj = Trajectory(np.zeros((n, 4)), np.zeros(n), np.zeros(n), np.zeros((n, 2)), v, r, boot)
        adv, _ = compute_gae(traj, gamma, 1.0)
        brute = np.array([sum(gamma ** (k - t) * r[k] for k in range(t, n))
                          + gamma ** (n - t) * boot - v[t] for t in range(n)])
        worst = max(worst, float(np.max(np.abs(adv - brute))))
    ok = worst < 1e-10
    verdict(5, ok, f"100 trajectories, max |A - (G - V)|={worst:.2e}")
    assert ok


def test_baseline_ordering(verdict):
    start = time.perf_counter()
    cfg = ExperimentConfig(clusters=[[i] for i in FIRST_CLUSTER], horizon=240, replications=100,
                           seed=0)
    costs = {}
    for name in ("minmax", "oracle"):
        report = evaluate(cfg, lambda c, k, name=name: baseline_controller(name, c),
                          policy_name=name)
        costs[name] = {int(r.id): r.mean_cost for r in report.item_rows()}
    ratios = {i: costs["minmax"][i] / costs["oracle"][i] for i in FIRST_CLUSTER}
    elapsed = time.perf_counter() - start
    ok = all(r > 2 for r in ratios.values()) and elapsed < 120
    verdict(6, ok, "MinMax/Oracle ratios "
            + ", ".join(f"item {i}: {r:.2f}" for i, r in ratios.items()) + f", {elapsed:.0f}s")
    assert ok


def test_single_agent_training_beats_oracle(catalog, verdict):
    start = time.perf_counter()
    cluster = ClusterSpec.from_items([catalog[0].to_item()])
    cfg = preset("ppo_c", "desk")
    scale = default_reward_scale(cluster)
    _, _, result = train_single(lambda: ItemEnv(cluster, cfg.horizon, scale), cfg, 0, 1_000_000)
    ecfg = ExperimentConfig(clusters=[[0]], horizon=240, replications=20, seed=0)
    ppo = evaluate(ecfg, lambda c, k: PolicyController(result.arch, result.params,
                                                       result.action_map, c),
                   policy_name="ppo").row(0)
    oracle = evaluate(ecfg, lambda c, k: baseline_controller("oracle", c)).row(0)
    elapsed = time.perf_counter() - start
    ok = ppo.mean_cost < oracle.mean_cost and ppo.mean_shortages <= 2 and elapsed <= 1800
    verdict(7, ok, f"PPO-C cost {ppo.mean_cost:.4g} vs Oracle {oracle.mean_cost:.4g}, "
                   f"shortage events {ppo.mean_shortages:.2f}, {elapsed:.0f}s")
    assert ok


IPPO_BUDGET = 700_000
SMOOTHING = 5


def test_ippo_crosses_minmax_line(catalog, verdict):
    cluster = ClusterSpec.from_items(catalog.items(FIRST_CLUSTER))
    cfg = preset("ppo_c", "desk", lr=3e-4)
    start = time.perf_counter()
    crossings = {}
    for seed in range(3):
        lines = baseline_reward_lines(cluster, ("minmax",), 20, seed, cfg.horizon)
        found = []

        def stop_on_cross(row, result, found=found):
            tail = [r["normalized_reward"] for r in result.curve[-SMOOTHING:]]
            if len(tail) == SMOOTHING and np.mean(tail) > lines["minmax"]:
                found.append(row["timesteps"])
                return True
            return False

        ippo_train(cluster, cfg, seed, IPPO_BUDGET, normalizer=lines["_normalizer"],
                   callback=stop_on_cross)
        crossings[seed] = found[0] if found else None
    elapsed = time.perf_counter() - start
    hits = sum(c is not None for c in crossings.values())
    ok = hits >= 2 and elapsed <= 3600
    verdict(8, ok, f"crossed on {hits}/3 seeds at {crossings} steps "
                   f"({SMOOTHING}-iteration mean), {elapsed:.0f}s")
    assert ok


def test_reductions(catalog, verdict):
    cluster = ClusterSpec.from_items([catalog[4].to_item()])
    cfg = preset("ppo_c", "desk", train_batch_size=800, sgd_minibatch_size=100, num_sgd_iter=4,
                 num_workers=4)
    scale = default_reward_scale(cluster)
    agents, curve, _ = ippo_train(cluster, cfg, 5, 2400, normalizer=1.0)
    params, ref, _ = train_single(lambda: ItemEnv(cluster, cfg.horizon, scale), cfg, 5, 2400)
    same_train = (np.array_equal(agents.params[0], params)
                  and [{k: r[k] for k in CURVE_FIELDS} for r in curve] == ref)

    env, cenv = InventoryEnv(cluster), ClusterEnv(cluster, horizon=240)
    env.reset(9)
    cenv.reset(9)
    rng = np.random.default_rng(9)
    same_reward = True
    for _ in range(240):
        a = int(rng.integers(0, cluster.capacity + 1))
        out = env.step([a])
        _, rew, _, _ = cenv.step([a])
        same_reward &= out.cluster_reward == out.rewards[0] == rew[0]
    ok = same_train and same_reward
    verdict(9, ok, f"1-agent IPPO == single PPO: {same_train}; singleton cluster reward == "
                   f"item reward: {same_reward}")
    assert ok


def test_cli_determinism(tmp_path, verdict):
    def run(tag):
        out = tmp_path / tag
        for pol in ("minmax", "oracle"):
            assert main(["eval", "--items", "0", "1", "2", "--shared", "--policy", pol,
                         "--horizon", "60", "--reps", "10", "--seed", "4", "--threads", "1",
                         "--out", str(out / f"{pol}.csv")]) == 0
        assert main(["train", "--items", "0", "1", "--shared", "--timesteps", "1600", "--seed",
                     "4", "--workers", "2", "--set", "train_batch_size=800",
                     "--set", "num_sgd_iter=2", "--baseline-reps", "2",
                     "--out-dir", str(out / "run")]) == 0
        assert main(["replay", "--checkpoint", str(out / "run" / "manifest.json"), "--horizon",
                     "60", "--reps", "5", "--seed", "4", "--out", str(out / "replay.csv")]) == 0
        return {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}

    first, second = run("a"), run("b")
    differ = [str(p) for p in first if first[p] != second.get(p)]
    ok = set(first) == set(second) and not differ
    verdict(10, ok, f"{len(first)} output files compared byte for byte, differing: {differ}")
    assert ok
