import numpy as np
import pytest

from timemoe.distributions import SequenceBundle
from timemoe.synthetic import PlantSpec, generate
from timemoe.temporal import (
    EstimationError,
    RusTrajectory,
    aggregate_uniqueness,
    compute_trajectory,
    decompose_lag,
    directed_information,
)


def iid_bundle(rng, n):
    return SequenceBundle(
        {"m1": rng.integers(0, 2, n), "m2": rng.integers(0, 2, n)},
        rng.integers(0, 2, n))


def copy_spec(**kw):
    base = dict(modalities=["m1", "m2"], rule="lagged-copy", source="m1",
                lag=1, length=10000, seed=0)
    base.update(kw)
    return PlantSpec(**base)


def test_di_independent_near_zero():
    bundle = iid_bundle(np.random.default_rng(0), 10000)
    di = directed_information(bundle, ("m1", "m2"), tau=1, k=0)
    assert di < 0.05


def test_di_copy_channel_per_step_and_cumulative():
    bundle = generate(copy_spec())
    per_step = directed_information(bundle, ("m1", "m2"), tau=1, k=0)
    assert abs(per_step - 1.0) < 0.01
    cumulative = directed_information(bundle, ("m1", "m2"), tau=1, k=0,
                                      normalized=False)
    assert abs(cumulative - (len(bundle) - 1) * per_step) < 1e-9


def test_di_lag_two_copy():
    bundle = generate(copy_spec(lag=2))
    assert directed_information(bundle, ("m1", "m2"), tau=1, k=0) < 0.01
    assert abs(directed_information(bundle, ("m1", "m2"), tau=2, k=0) - 1.0) < 0.01


def test_di_insufficient_samples():
    bundle = iid_bundle(np.random.default_rng(1), 5)
    with pytest.raises(EstimationError):
        directed_information(bundle, ("m1", "m2"), tau=2, k=0)


def test_decompose_lag_copy_is_unique():
    bundle = generate(copy_spec())
    r, u1, u2, s = decompose_lag(bundle, ("m1", "m2"), tau=1, k=0)
    di = directed_information(bundle, ("m1", "m2"), tau=1, k=0)
    assert abs(u1 - di) < 0.01
    assert max(r, u2, s) < 0.01


def test_decompose_lag_redundant():
    spec = PlantSpec(modalities=["m1", "m2"], rule="lagged-redundant",
                     pair=["m1", "m2"], lag=1, length=10000, seed=1)
    bundle = generate(spec)
    r, u1, u2, s = decompose_lag(bundle, ("m1", "m2"), tau=1, k=0)
    di = directed_information(bundle, ("m1", "m2"), tau=1, k=0)
    assert abs(r - di) < 0.01
    assert max(u1, u2, s) < 0.01


def test_decompose_lag_xor():
    spec = PlantSpec(modalities=["m1", "m2"], rule="lagged-xor",
                     pair=["m1", "m2"], lag=1, length=10000, seed=2)
    bundle = generate(spec)
    r, u1, u2, s = decompose_lag(bundle, ("m1", "m2"), tau=1, k=0)
    assert abs(s - 1.0) < 0.02
    assert max(r, u1, u2) < 0.02


def test_trajectory_sum_identity_and_peak():
    bundle = generate(copy_spec(lag=2, length=8000))
    traj = compute_trajectory(bundle, ("m1", "m2"), max_lag=4, k=1)
    for i in range(len(traj.lags)):
        total = (traj.redundancy[i] + traj.unique_x1[i] + traj.unique_x2[i]
                 + traj.synergy[i])
        assert abs(total - traj.di[i]) < 1e-9
    assert traj.lags[int(np.argmax(traj.unique_x1))] == 2


def test_trajectory_constant_target_zero():
    rng = np.random.default_rng(3)
    bundle = SequenceBundle(
        {"m1": rng.integers(0, 2, 3000), "m2": rng.integers(0, 2, 3000)},
        np.zeros(3000, dtype=np.int64))
    traj = compute_trajectory(bundle, ("m1", "m2"), max_lag=3, k=0)
    assert max(traj.di) < 1e-9


def test_trajectory_single_lag_matches_decompose_lag():
    bundle = generate(copy_spec(length=4000))
    traj = compute_trajectory(bundle, ("m1", "m2"), max_lag=1, k=0)
    single = decompose_lag(bundle, ("m1", "m2"), tau=1, k=0)
    assert np.allclose(
        [traj.redundancy[0], traj.unique_x1[0], traj.unique_x2[0], traj.synergy[0]],
        single, atol=1e-12)


def test_static_consistency_with_memoryless_gate():
    import oracles
    from timemoe.pid import decompose as pid_decompose

    spec = PlantSpec(modalities=["m1", "m2"], rule="lagged-xor",
                     pair=["m1", "m2"], lag=1, length=10000, seed=4)
    bundle = generate(spec)
    per_step = decompose_lag(bundle, ("m1", "m2"), tau=1, k=0)
    exact = pid_decompose(oracles.xor_gate()).as_tuple()
    assert np.abs(np.array(per_step) - np.array(exact)).max() < 0.02


def test_markov_conditioning_keeps_planted_value():
    bundle = generate(copy_spec(length=12000, noise=0.1, seed=5))
    r, u1, u2, s = decompose_lag(bundle, ("m1", "m2"), tau=1, k=1)
    from timemoe.synthetic import binary_entropy
    assert abs(u1 - (1.0 - binary_entropy(0.1))) < 0.03


def test_json_roundtrip(tmp_path):
    bundle = generate(copy_spec(length=3000))
    traj = compute_trajectory(bundle, ("m1", "m2"), max_lag=2, k=1)
    path = tmp_path / "traj.json"
    traj.save(path)
    back = RusTrajectory.load(path)
    assert back.pair == traj.pair
    assert back.lags == traj.lags
    assert np.allclose(back.unique_x1, traj.unique_x1)
    assert back.markov_order == 1 and back.normalized is True
    import json
    doc = json.loads(path.read_text())
    assert set(doc) == {"pair", "lags", "R", "U1", "U2", "S", "DI", "normalized", "k"}


def test_aggregate_uniqueness_mean_over_pairs():
    t12 = RusTrajectory(pair=("a", "b"), lags=[1], redundancy=[0.0],
                        unique_x1=[0.4], unique_x2=[0.2], synergy=[0.0],
                        di=[0.6], normalized=True, markov_order=0)
    t13 = RusTrajectory(pair=("a", "c"), lags=[1], redundancy=[0.0],
                        unique_x1=[0.8], unique_x2=[0.0], synergy=[0.0],
                        di=[0.8], normalized=True, markov_order=0)
    agg = aggregate_uniqueness([t12, t13])
    assert np.isclose(agg["a"][0], 0.6)
    assert np.isclose(agg["b"][0], 0.2)
    assert np.isclose(agg["c"][0], 0.0)
