import numpy as np
import pytest
from scipy import stats as sps

from rddlab import snapshot
from rddlab.baselines import (
    CountEstimator,
    DrndEstimator,
    RndEstimator,
    count_bonus,
    drnd_y_empirical,
    make_estimator,
    rnd_bonus,
    train_step,
)
from rddlab.estimator import NoBonus, state_key
from rddlab.nn import DenseNet, Layer
from rddlab.rdd import RddEstimator, RunningMeanOracle, TargetSpec, ingest_oracle, sample_target
from rddlab.rng import make_rng


def constant_output_predictor(est, value):
    """Zero the last layer so the predictor outputs ``value`` everywhere."""
    last = est.predictor.layers[-1]
    last.weight[...] = 0.0
    last.bias[...] = value


# --- target sampling -------------------------------------------------------

def test_sigma_zero_returns_mean():
    spec = TargetSpec(mu=1.0, sigma=0.0, d=3)
    np.testing.assert_array_equal(sample_target(spec, make_rng(0)), [1.0, 1.0, 1.0])


def test_samples_match_gaussian_moments():
    est = RddEstimator(2, TargetSpec(mu=1.0, sigma=1.0, d=1, seed=3))
    draws = np.array([est.sample_target(np.zeros(2))[0] for _ in range(100_000)])
    assert abs(draws.mean() - 1.0) <= 3 / np.sqrt(100_000)


def test_equal_seeds_equal_samples():
    a = RddEstimator(2, TargetSpec(seed=9, d=4))
    b = RddEstimator(2, TargetSpec(seed=9, d=4))
    for _ in range(5):
        np.testing.assert_array_equal(a.sample_target(np.zeros(2)), b.sample_target(np.zeros(2)))


def test_spec_validation():
    with pytest.raises(ValueError):
        TargetSpec(sigma=-1.0)
    with pytest.raises(ValueError):
        TargetSpec(d=0)
    with pytest.raises(ValueError):
        TargetSpec(mean_mode="learned")


# --- RDD distillation and bonus ---------------------------------------------

def test_distill_zero_loss_when_fit_and_sigma_zero():
    est = RddEstimator(3, TargetSpec(mu=1.0, sigma=0.0, d=4))
    constant_output_predictor(est, 1.0)
    before = est.predictor.flat.copy()
    loss = est.train(np.ones((2, 3)))
    assert loss == 0.0
    np.testing.assert_array_equal(est.predictor.flat, before)


def test_distill_fixed_state_converges():
    est = RddEstimator(2, TargetSpec(mu=1.0, sigma=0.0, d=8, seed=1), lr=3e-4)
    x = np.array([[0.3, -0.4]])
    for step in range(5000):
        loss = est.train(x)
        if loss < 1e-6:
            break
    assert loss < 1e-6
    assert step < 5000


def test_distill_empty_batch():
    est = RddEstimator(2, TargetSpec(d=2))
    with pytest.raises(ValueError):
        est.train(np.zeros((0, 2)))


def test_bonus_zero_at_mean():
    est = RddEstimator(2, TargetSpec(mu=1.0, d=5))
    constant_output_predictor(est, 1.0)
    assert est.bonus(np.array([0.2, 0.1])) == 0.0


def test_bonus_direct_values():
    est = RddEstimator(2, TargetSpec(mu=1.0, d=1))
    constant_output_predictor(est, 0.3)
    assert est.bonus(np.zeros(2)) == pytest.approx(0.49)
    est2 = RddEstimator(2, TargetSpec(mu=1.0, d=2))
    est2.predictor.layers[-1].weight[...] = 0.0
    est2.predictor.layers[-1].bias[...] = [0.0, 2.0]
    assert est2.bonus(np.zeros(2)) == pytest.approx(1.0)


def test_bonus_does_not_consume_samples():
    est = RddEstimator(2, TargetSpec(seed=4, d=3))
    ref = RddEstimator(2, TargetSpec(seed=4, d=3))
    est.bonus(np.zeros((5, 2)))
    np.testing.assert_array_equal(est.sample_target(np.zeros(2)), ref.sample_target(np.zeros(2)))


def test_random_net_mean_is_broadcast_scalar():
    est = RddEstimator(3, TargetSpec(d=6, mean_mode="random_net", seed=2))
    m = est.target_mean(np.array([[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]]))
    assert m.shape == (2, 6)
    assert np.all(m == m[:, :1])
    assert m[0, 0] != m[1, 0]


def test_visit_estimate_undefined_at_sigma_zero():
    est = RddEstimator(2, TargetSpec(sigma=0.0, d=2))
    with pytest.raises(ValueError):
        est.visit_estimate(np.zeros(2))


# --- running-mean oracle --------------------------------------------------

def test_oracle_first_and_two():
    o = RunningMeanOracle()
    ingest_oracle(o, "s", [0.0])
    assert o.count("s") == 1 and o.mean("s")[0] == 0.0
    ingest_oracle(o, "s", [2.0])
    assert o.count("s") == 2 and o.mean("s")[0] == 1.0


def test_oracle_matches_batch_mean():
    rng = make_rng(0)
    samples = rng.normal(1.0, 1.0, size=(1000, 4))
    o = RunningMeanOracle()
    for s in samples:
        o.ingest(7, s)
    np.testing.assert_allclose(o.mean(7), samples.mean(axis=0), rtol=0, atol=1e-12)


# --- RND -----------------------------------------------------------------

def test_rnd_zero_when_predictor_is_target():
    est = RndEstimator(3, d=4, seed=1)
    est.predictor.load_params(est.target.params())
    assert rnd_bonus(est, np.array([0.1, 0.2, 0.3])) == 0.0


def test_rnd_direct_value():
    target = DenseNet([Layer(np.zeros((2, 1)), [2.0])])
    est = RndEstimator(2, d=1, target=target)
    constant_output_predictor(est, 0.0)
    assert rnd_bonus(est, np.zeros(2)) == pytest.approx(4.0)


def test_rnd_bonus_decreases_with_training():
    est = RndEstimator(2, d=16, seed=3)
    x = np.array([0.5, -0.5])
    before = est.bonus(x)
    for _ in range(100):
        est.train(x[None])
    assert est.bonus(x) < before


def test_rnd_untrained_loss_positive():
    x = np.array([[0.2, 0.7]])
    assert all(RndEstimator(2, d=8, seed=s).train(x) > 0 for s in range(100))


def test_rnd_target_frozen():
    est = RndEstimator(2, d=4, seed=0)
    before = est.target.flat.copy()
    est.train(make_rng(1).standard_normal((20, 2)))
    np.testing.assert_array_equal(est.target.flat, before)


# --- RDD -> RND limit -----------------------------------------------------

def test_rdd_sigma_zero_equals_rnd_bit_for_bit():
    spec = TargetSpec(mu=1.0, sigma=0.0, d=8, seed=21)
    rdd = RddEstimator(2, spec)
    rnd = RndEstimator(2, d=8, seed=21, target=rdd.target_mean)
    states = make_rng(5).uniform(-1, 1, size=(50, 2))
    for s in states:
        assert rdd.train(s[None]) == rnd.train(s[None])
        assert rdd.bonus(s) == rnd.bonus(s)


# --- DRND -----------------------------------------------------------------

def test_drnd_requires_two_targets():
    with pytest.raises(ValueError):
        DrndEstimator(2, n_targets=1)


def test_drnd_y_zero_at_mean():
    est = DrndEstimator(2, n_targets=10, d=4, seed=0)
    x = np.array([0.3, 0.1])
    mean, second = est.moments(x)
    # numerator clamps to 1e-8, so the rooted ratio sits at the clamp floor
    floor = np.mean(np.sqrt(1e-8 / (second - mean**2)))
    assert drnd_y_empirical(est, x, f=mean) == pytest.approx(floor, rel=1e-9)
    assert est.y_squared(x, f=mean) == 0.0


def test_drnd_second_moment_dominates():
    for mode in ("random_net", "gaussian"):
        est = DrndEstimator(3, n_targets=7, d=5, seed=2, target_mode=mode)
        mean, second = est.moments(make_rng(3).standard_normal((10, 3)))
        assert np.all(second >= mean**2 - 1e-9)


def test_drnd_target_choice_uniform():
    est = DrndEstimator(1, n_targets=10, d=2, seed=4)
    for _ in range(10_000):
        est.choose_target()
    counts = est.choice_counts
    assert counts.sum() == 10_000
    assert sps.chisquare(counts).pvalue > 0.01


def test_drnd_train_uses_choices():
    est = DrndEstimator(2, n_targets=5, d=3, seed=1)
    est.train(np.zeros((7, 2)))
    assert est.choice_counts.sum() == 7


def test_drnd_gaussian_targets_deterministic_per_state():
    a = DrndEstimator(2, n_targets=4, d=3, seed=5, target_mode="gaussian")
    b = DrndEstimator(2, n_targets=4, d=3, seed=5, target_mode="gaussian")
    x = np.array([0.25, -0.5])
    np.testing.assert_array_equal(a.target_outputs(x), b.target_outputs(x))
    assert not np.array_equal(a.target_outputs(x), a.target_outputs(x + 1))


def test_drnd_squared_statistic_unbiased_for_any_n_targets():
    est = DrndEstimator(1, n_targets=10, d=1, seed=0, target_mode="gaussian")
    x = np.array([0.0])
    outs = est.target_outputs(x)[:, 0]
    rng = make_rng(1)
    n = 4
    picks = outs[rng.integers(10, size=(200_000, n))].mean(axis=1)
    mean, second = est.moments(x)
    y = (picks**2 - mean[0] ** 2) / (second[0] - mean[0] ** 2)
    assert abs(y.mean() - 1 / n) <= 3 * y.std() / np.sqrt(y.size)
    assert est.y_squared(x, f=np.array([picks[0]])) == pytest.approx(y[0])


# --- counts ---------------------------------------------------------------

def test_count_unseen_is_one():
    assert count_bonus(CountEstimator(), np.array([0.1])) == 1.0


def test_count_after_four_visits():
    est = CountEstimator()
    x = np.array([0.3, 0.3])
    for _ in range(4):
        est.train(x[None])
    assert count_bonus(est, x) == 0.25


def test_count_exact_reciprocal():
    est = CountEstimator(exact_keys=True)
    x = np.array([[1.0]])
    for k in range(1, 2001):
        est.train(x)
        assert est.bonus(x[0]) == 1.0 / k


def test_count_sqrt_form():
    est = CountEstimator(sqrt=True)
    for _ in range(9):
        est.train(np.zeros((1, 1)))
    assert est.bonus(np.zeros(1)) == pytest.approx(1 / 3)


def test_count_train_on_new_states():
    est = CountEstimator()
    batch = np.array([[-0.9], [0.0], [0.9]])
    assert train_step(est, batch) == 0.0
    assert [est.count(x) for x in batch] == [1, 1, 1]


def test_empty_batches_rejected():
    for est in (CountEstimator(), NoBonus(), RndEstimator(2, d=2), DrndEstimator(2, n_targets=2, d=2)):
        with pytest.raises(ValueError):
            est.train(np.zeros((0, 2)))


def test_state_key_grid():
    assert state_key([-1.0, 1.0], bins=64) == (0, 63)
    assert state_key([0.0], bins=64) == (32,)


# --- common interface -----------------------------------------------------

@pytest.mark.parametrize("kind", ["rdd", "rnd", "drnd", "count", "none"])
def test_bonus_nonnegative_and_stable(kind):
    est = make_estimator(kind, 2, seed=3, d=8, drnd_n=4)
    xs = make_rng(0).uniform(-1, 1, size=(16, 2))
    b1 = est.bonus(xs)
    b2 = est.bonus(xs)
    np.testing.assert_array_equal(b1, b2)
    assert np.all(b1 >= 0)
    est.train(xs)
    assert np.all(est.bonus(xs) >= 0)


def test_unknown_estimator_lists_options():
    with pytest.raises(ValueError, match="rdd, rnd, drnd, count, none"):
        make_estimator("cfn", 2)


@pytest.mark.parametrize("kind", ["rdd", "rnd", "drnd", "count", "none"])
def test_snapshot_roundtrip_resumes_identically(kind, tmp_path):
    xs = make_rng(1).uniform(-1, 1, size=(12, 2))
    a = make_estimator(kind, 2, seed=5, d=8, drnd_n=4)
    a.train(xs[:6])
    path = snapshot.save(a, tmp_path / "est.snap")
    b = snapshot.load(make_estimator(kind, 2, seed=5, d=8, drnd_n=4), path)
    assert a.train(xs[6:]) == b.train(xs[6:])
    np.testing.assert_array_equal(a.bonus(xs), b.bonus(xs))


def test_snapshot_header_and_type_tag(tmp_path):
    est = make_estimator("rdd", 2, d=4)
    data = snapshot.dumps(est)
    assert data[:8] == b"RDDSNAP\x00"
    assert int.from_bytes(data[8:10], "little") == snapshot.VERSION
    assert data[10] == snapshot.TAGS["rdd"]
    with pytest.raises(ValueError, match="cannot load"):
        snapshot.loads(make_estimator("rnd", 2, d=4), data)
