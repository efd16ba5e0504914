import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from milqt import diffcore as dc
from milqt.diffcore import Tensor, check_gradients
from milqt.interaction import (
    InteractionWeights,
    averaging_baseline,
    correlation_readout,
    mix,
    readout_csv,
)
from milqt.prior import PriorMatrix


def random_prior(rng, P, A):
    c = rng.integers(1, 6, size=(P, A))
    return PriorMatrix(c / c.sum(axis=0), [f"t{p}" for p in range(P)], [f"a{a}" for a in range(A)])


def weights(arr):
    return InteractionWeights(Tensor(np.asarray(arr, dtype=float), requires_grad=True))


def test_mix_worked_example():
    prior = PriorMatrix(np.eye(2), ["t0", "t1"], ["a0", "a1"])
    rho = mix(Tensor([[0.8, 0.2], [0.1, 0.9]]), weights(np.eye(2)), prior)
    np.testing.assert_allclose(rho.values, [0.8, 0.9], atol=1e-15)


def test_single_hypothesis_with_unit_gate_is_identity():
    rng = np.random.default_rng(0)
    prior = random_prior(rng, 3, 5)
    g = rng.normal(size=(5, 1))
    rho = mix(Tensor(g), weights(np.ones((3, 1))), prior)
    np.testing.assert_allclose(rho.values, g[:, 0], rtol=1e-15, atol=1e-15)


def test_zero_predictions_give_zero():
    rng = np.random.default_rng(1)
    prior = random_prior(rng, 3, 5)
    assert not mix(Tensor(np.zeros((5, 2))), weights(rng.normal(size=(3, 2))), prior).values.any()


def test_mix_batched_matches_unbatched():
    rng = np.random.default_rng(2)
    prior = random_prior(rng, 3, 5)
    w = weights(rng.normal(size=(3, 2)))
    g = rng.normal(size=(4, 5, 2))
    batched = mix(Tensor(g), w, prior).values
    for b in range(4):
        np.testing.assert_allclose(batched[b], mix(Tensor(g[b]), w, prior).values, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.floats(-5, 5))
def test_mix_is_linear_in_g(seed, alpha):
    rng = np.random.default_rng(seed)
    prior = random_prior(rng, 3, 5)
    w = weights(rng.normal(size=(3, 2)))
    g = rng.normal(size=(5, 2))
    np.testing.assert_allclose(mix(Tensor(alpha * g), w, prior).values,
                               alpha * mix(Tensor(g), w, prior).values, rtol=1e-12, atol=1e-12)


def test_uniform_prior_with_per_hypothesis_constants_is_weighted_sum():
    rng = np.random.default_rng(3)
    prior = PriorMatrix.uniform(["a", "b", "c"], [str(i) for i in range(5)])
    c = np.array([0.3, -1.2])
    g = rng.normal(size=(5, 2))
    rho = mix(Tensor(g), weights(np.tile(c, (3, 1))), prior)
    np.testing.assert_allclose(rho.values, g @ c, atol=1e-14)


def test_mix_gradcheck():
    rng = np.random.default_rng(4)
    prior = random_prior(rng, 3, 5)
    w = weights(rng.normal(size=(3, 2)))
    g = Tensor(rng.normal(size=(5, 2)), requires_grad=True)
    t = Tensor(rng.normal(size=5))
    res = check_gradients(lambda: dc.reduce_sum(dc.mul(dc.tanh(mix(g, w, prior)), t)), {"g": g, "w": w.w_mil})
    assert res.max_rel_error < 1e-4


def test_softmax_variant_starts_at_average():
    rng = np.random.default_rng(5)
    prior = random_prior(rng, 3, 5)
    w = InteractionWeights.init(3, 2, softmax_over_j=True)
    g = Tensor(rng.normal(size=(5, 2)))
    np.testing.assert_allclose(mix(g, w, prior).values, averaging_baseline(g).values, atol=1e-15)


def test_averaging_baseline():
    np.testing.assert_allclose(averaging_baseline(Tensor([[0.8, 0.2], [0.1, 0.9]])).values, [0.5, 0.5])
    g = np.arange(4.0).reshape(4, 1)
    np.testing.assert_array_equal(averaging_baseline(Tensor(g)).values, g[:, 0])
    np.testing.assert_array_equal(averaging_baseline(Tensor(np.full((3, 4), 0.7))).values, np.full(3, 0.7))


def test_default_init_equals_averaging():
    rng = np.random.default_rng(6)
    prior = random_prior(rng, 3, 5)
    g = Tensor(rng.normal(size=(5, 3)))
    np.testing.assert_allclose(mix(g, InteractionWeights.init(3, 3), prior).values,
                               averaging_baseline(g).values, atol=1e-15)


def test_readout_layout():
    w = InteractionWeights.init(3, 3)
    table = correlation_readout(w, ["yes/no", "number", "other"], ["h0", "h1", "h2"])
    assert list(table) == ["yes/no", "number", "other"]
    assert all(v == 1 / 3 for row in table.values() for v in row.values())
    csv = readout_csv(table)
    assert csv.splitlines()[0] == "qtype,h0,h1,h2"
    assert len(csv.splitlines()) == 4
