import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rddlab.agents import (
    PpoAgent,
    PpoConfig,
    PpoRunner,
    QTable,
    RunningNormalizer,
    gae,
    q_update,
    run_qlearning,
    value_iteration,
)
from rddlab.agents.ppo import log_softmax, softmax
from rddlab.baselines import CountEstimator, make_estimator
from rddlab.envs import ChainEnv, MountainCarEnv
from rddlab.estimator import NoBonus
from rddlab.rng import make_rng


def brute_force_gae(r, v, d, gamma, lam):
    """Double loop over sum_k (gamma*lam)^k delta_{t+k}, cut at the first done."""
    T = len(r)
    delta = [r[t] + gamma * v[t + 1] * (1 - d[t]) - v[t] for t in range(T)]
    adv = []
    for t in range(T):
        total, w = 0.0, 1.0
        for k in range(t, T):
            total += w * delta[k]
            if d[k]:
                break
            w *= gamma * lam
        adv.append(total)
    return np.array(adv)


# --- Q-learning -----------------------------------------------------------

def test_q_update_terminal_reward():
    t = QTable(2, 2, alpha=1.0, gamma=0.0)
    q_update(t, 0, 1, 1.0, 1, False)
    assert t.q[0, 1] == 1.0


def test_q_update_bonus_scale():
    t = QTable(2, 2, alpha=1.0, gamma=0.0, lam=2.0)
    q_update(t, 0, 0, 0.0, 1, False, bonus=1.0)
    assert t.q[0, 0] == 2.0


def test_q_update_done_cuts_bootstrap():
    t = QTable(2, 1, alpha=1.0, gamma=0.9)
    t.q[1, 0] = 5.0
    q_update(t, 0, 0, 0.0, 1, True)
    assert t.q[0, 0] == 0.0


def test_greedy_ties_lowest_index():
    t = QTable(1, 3)
    t.q[0] = [1.0, 2.0, 2.0]
    assert t.greedy(0) == 1


def test_q_learning_matches_value_iteration():
    # states 0 -> 1 -> 2 (terminal reward 1 on entering 2); action 0 stays, 1 advances
    nxt = [[0, 1], [1, 2], [2, 2]]
    rew = [[0.0, 0.0], [0.0, 1.0], [0.0, 0.0]]
    term = [[False, False], [False, True], [True, True]]
    gamma = 0.9
    oracle = value_iteration(nxt, rew, gamma, terminal=term)
    t = QTable(3, 2, alpha=0.5, gamma=gamma)
    for _ in range(2000):
        for s in range(2):
            for a in range(2):
                q_update(t, s, a, rew[s][a], nxt[s][a], term[s][a])
    np.testing.assert_allclose(t.q[:2], oracle[:2], atol=1e-6)
    assert oracle[1, 1] == 1.0 and oracle[0, 1] == pytest.approx(0.9)


def test_count_bonus_solves_short_chain():
    wins = 0
    for seed in range(5):
        env = ChainEnv(10)
        recs = run_qlearning(env, QTable(10, 2), CountEstimator(), 500, seed=seed)
        wins += any(r.success for r in recs)
    assert wins >= 4


def test_qlearning_lambda_zero_matches_no_bonus():
    def run(est, lam):
        env = ChainEnv(8)
        t = QTable(8, 2, lam=lam)
        recs = run_qlearning(env, t, est, 30, seed=2)
        return t.q.tobytes(), [(r.global_step, r.episode_return_ext) for r in recs]

    assert run(make_estimator("rdd", 1, seed=1, d=8), 0.0) == run(NoBonus(), 0.0)


def test_qlearning_deterministic():
    def run():
        t = QTable(10, 2)
        run_qlearning(ChainEnv(10), t, make_estimator("rdd", 1, seed=4, d=8), 20, seed=4)
        return t.q.tobytes()

    assert run() == run()


# --- GAE ------------------------------------------------------------------

def test_gae_single_terminal_step():
    adv, ret = gae([1.0], [0.0, 0.0], [1.0])
    assert adv[0] == 1.0 and ret[0] == 1.0


def test_gae_lambda_zero_is_td_error():
    rng = make_rng(0)
    r, v = rng.standard_normal(6), rng.standard_normal(7)
    d = np.array([0, 0, 1, 0, 0, 0.0])
    adv, _ = gae(r, v, d, gamma=0.9, lam=0.0)
    delta = r + 0.9 * v[1:] * (1 - d) - v[:-1]
    np.testing.assert_array_equal(adv, delta)


def test_gae_length_mismatch():
    with pytest.raises(ValueError, match="length mismatch"):
        gae([1.0, 2.0], [0.0, 0.0], [0.0, 0.0])


def test_gae_length_five_brute_force():
    r = [0.0, 0.5, -1.0, 2.0, 1.0]
    v = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]
    d = [0, 0, 0, 0, 1]
    adv, ret = gae(r, v, d, 0.99, 0.95)
    np.testing.assert_allclose(adv, brute_force_gae(r, v, d, 0.99, 0.95), rtol=0, atol=1e-12)
    np.testing.assert_allclose(ret, adv + np.array(v[:-1]), atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), T=st.integers(1, 32),
       gamma=st.floats(0.0, 1.0), lam=st.floats(0.0, 1.0))
def test_gae_brute_force_property(seed, T, gamma, lam):
    rng = make_rng(seed)
    r, v = rng.standard_normal(T), rng.standard_normal(T + 1)
    d = (rng.random(T) < 0.2).astype(float)
    adv, _ = gae(r, v, d, gamma, lam)
    np.testing.assert_allclose(adv, brute_force_gae(r, v, d, gamma, lam), rtol=0, atol=1e-12)


# --- running normaliser ----------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(chunks=st.lists(st.lists(st.floats(-1e3, 1e3), min_size=0, max_size=20), min_size=1, max_size=10))
def test_normalizer_matches_two_pass(chunks):
    norm = RunningNormalizer()
    for c in chunks:
        norm.update(c)
    allv = np.concatenate([np.asarray(c, dtype=float) for c in chunks])
    if allv.size == 0:
        assert norm.count == 0
        return
    assert norm.count == allv.size
    assert norm.mean == pytest.approx(allv.mean(), rel=1e-9, abs=1e-9)
    assert norm.var == pytest.approx(allv.var(), rel=1e-9, abs=1e-9)


def test_normalizer_divides_by_std_only():
    norm = RunningNormalizer().update([1.0, 3.0])
    np.testing.assert_allclose(norm.normalize([2.0]), [2.0])


# --- PPO ------------------------------------------------------------------

def test_softmax_is_distribution():
    p = softmax(np.array([[1000.0, 0.0, -1000.0], [0.1, 0.2, 0.3]]))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(p >= 0)
    np.testing.assert_allclose(np.exp(log_softmax(np.array([0.1, 0.2, 0.3]))), p[1])


def _batch(n=32, obs_dim=2, seed=0):
    rng = make_rng(seed)
    return rng.uniform(-1, 1, (n, obs_dim)), rng.integers(2, size=n)


def test_zero_advantages_leave_policy():
    agent = PpoAgent(2, 2, seed=1)
    before = agent.policy.flat.copy()
    obs, act = _batch()
    agent.update(obs, act, np.zeros(32), np.zeros(32), np.zeros(32), make_rng(0))
    np.testing.assert_array_equal(agent.policy.flat, before)


def test_first_epoch_ratios_one_and_surrogate_mean_adv():
    agent = PpoAgent(2, 2, seed=2)
    obs, act = _batch(seed=3)
    adv = make_rng(4).standard_normal(32)
    stats = agent.update(obs, act, adv, np.zeros(32), np.zeros(32), make_rng(5))
    assert np.all(stats["first_minibatch_ratios"] == 1.0)
    std_adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    # first minibatch is the first quarter of the epoch-0 permutation
    idx = np.array_split(make_rng(5).permutation(32), 4)[0]
    assert stats["first_surrogate"] == pytest.approx(std_adv[idx].mean(), abs=1e-12)


def test_bandit_probability_increases():
    agent = PpoAgent(1, 2, PpoConfig(epochs=1, n_minibatches=1), seed=0)
    obs = np.zeros((16, 1))
    act = np.array([0, 1] * 8)
    adv = np.where(act == 0, 1.0, -1.0)
    before = agent.probs(np.zeros(1))[0]
    agent.update(obs, act, adv, np.zeros(16), np.zeros(16), make_rng(0))
    after = agent.probs(np.zeros(1))
    assert after[0] > before
    assert after.sum() == pytest.approx(1.0, abs=1e-9)


def test_value_heads_regress_to_returns():
    agent = PpoAgent(1, 2, PpoConfig(epochs=400, n_minibatches=1, lr_critic=1e-2), seed=0)
    obs = np.zeros((8, 1))
    ve0, vi0 = agent.values(np.zeros((1, 1)))
    stats = agent.update(obs, np.zeros(8, dtype=int), np.zeros(8), np.full(8, 2.0), np.full(8, -1.0), make_rng(0))
    ve, vi = agent.values(np.zeros((1, 1)))
    assert abs(ve[0] - 2.0) < 0.1 * abs(ve0[0] - 2.0)
    assert abs(vi[0] + 1.0) < 0.1 * abs(vi0[0] + 1.0)
    assert stats["v_ext_loss"] > 0


def _runner(estimator, beta=1.0, seed=0):
    envs = [MountainCarEnv(seed=seed * 100 + i) for i in range(2)]
    return PpoRunner(PpoAgent(2, 3, seed=seed), envs, estimator, seed=seed, beta=beta)


def test_no_estimator_zero_intrinsic():
    runner = _runner(NoBonus())
    traj, _ = runner.collect(16)
    assert np.all(traj.r_int == 0)
    adv, ret_e, ret_i = runner.advantages(traj)
    adv_e, _ = runner._gae_stream(traj.r_ext, traj.v_ext, traj.last_v_ext, traj.dones, 0.99)
    np.testing.assert_array_equal(adv, adv_e)


def test_ppo_beta_zero_matches_no_bonus():
    def run(est, beta):
        runner = _runner(est, beta=beta, seed=3)
        out = []
        for _ in range(2):
            traj, _ = runner.collect(32)
            runner.update(traj)
            out.append((traj.actions.tobytes(), traj.r_ext.tobytes()))
        return out, runner.agent.policy.flat.tobytes()

    assert run(make_estimator("rdd", 2, seed=7, d=8), 0.0) == run(NoBonus(), 0.0)


def test_ppo_deterministic():
    def run():
        runner = _runner(make_estimator("rdd", 2, seed=1, d=8), seed=5)
        traj, _ = runner.collect(32)
        stats = runner.update(traj)
        return traj.r_int.tobytes(), runner.agent.policy.flat.tobytes(), stats["policy_loss"]

    assert run() == run()


def test_trajectory_done_only_at_episode_end():
    env = MountainCarEnv(seed=0, horizon=5)
    runner = PpoRunner(PpoAgent(2, 3, seed=0), [env], NoBonus())
    traj, recs = runner.collect(12)
    np.testing.assert_array_equal(np.nonzero(traj.dones[0])[0], [4, 9])
    assert len(recs) == 2


def test_policy_normalised_after_updates():
    runner = _runner(make_estimator("count", 2))
    for _ in range(3):
        traj, _ = runner.collect(16)
        runner.update(traj)
        p = runner.agent.probs(traj.obs.reshape(-1, 2))
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(p >= 0)
