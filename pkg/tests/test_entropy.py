import io

import numpy as np
import pytest
from scipy.integrate import quad

from helpers import central_difference, relative_gradient_error
from migate import entropy
from migate.nn import TrainConfig


def unit_gaussian_2d():
    return entropy.GmmEntropyModel.from_scales(
        logits=[0.0], means=[[0.0, 0.0]], scales=[np.eye(2)])


def test_softplus_inverse_round_trip():
    y = np.array([1e-3, 0.05, 1.0, 30.0])
    assert np.allclose(entropy.softplus(entropy.inv_softplus(y)), y, rtol=1e-12)


def test_standard_normal_density_at_origin():
    model = unit_gaussian_2d()
    assert np.isclose(entropy.log_density(model, np.zeros(2)),
                      -np.log(2.0 * np.pi), atol=1e-9)
    h = entropy.pointwise_entropy(model, np.zeros(2))
    assert np.isclose(h, np.log(2.0 * np.pi), atol=1e-9)


def test_density_quadratic_falloff():
    model = unit_gaussian_2d()
    x = np.array([1.0, -2.0])
    expected = -np.log(2.0 * np.pi) - 0.5 * (1.0 + 4.0)
    assert np.isclose(entropy.log_density(model, x), expected, atol=1e-9)


def test_from_scales_round_trip():
    rng = np.random.default_rng(0)
    scales = np.tril(rng.uniform(0.2, 1.5, size=(3, 2, 2)))
    model = entropy.GmmEntropyModel.from_scales(
        rng.standard_normal(3), rng.standard_normal((3, 2)), scales)
    assert np.allclose(model.scale_factors(), scales, atol=1e-10)


def test_translation_invariance():
    rng = np.random.default_rng(1)
    scales = np.tril(rng.uniform(0.3, 1.2, size=(2, 3, 3)))
    means = rng.standard_normal((2, 3))
    model = entropy.GmmEntropyModel.from_scales([0.1, -0.2], means, scales)
    shifted = entropy.GmmEntropyModel.from_scales(
        [0.1, -0.2], means + 7.25, scales)
    x = rng.standard_normal((20, 3))
    assert np.allclose(entropy.log_density(model, x),
                       entropy.log_density(shifted, x + 7.25), atol=1e-10)


def test_weights_normalize():
    model = entropy.GmmEntropyModel.from_scales(
        [3.0, 3.0, 3.0], np.zeros((3, 1)), np.ones((3, 1, 1)))
    assert np.allclose(model.weights(), 1.0 / 3.0)


def test_density_integrates_to_one():
    # Monte Carlo check over a box that holds essentially all the mass
    rng = np.random.default_rng(2)
    model = entropy.GmmEntropyModel.from_scales(
        [0.0, 0.7],
        [[-1.0, 0.5], [1.2, -0.8]],
        np.stack([0.6 * np.eye(2), np.tril([[0.8, 0.0], [0.3, 0.5]])]),
    )
    pts = rng.uniform(-5.0, 5.0, size=(200_000, 2))
    q = np.exp(entropy.log_density(model, pts))
    integral = q.mean() * 100.0
    assert abs(integral - 1.0) < 0.05


def test_mixture_entropy_matches_quadrature():
    # two well-separated 1-D components; oracle via numeric integration
    model = entropy.GmmEntropyModel.from_scales(
        [0.0, 0.0], [[-3.0], [3.0]], np.ones((2, 1, 1)))

    def q(x):
        return np.exp(entropy.log_density(model, np.array([x])))

    oracle, err = quad(lambda x: -q(x) * entropy.log_density(
        model, np.array([x])), -30.0, 30.0, limit=200)
    assert err < 1e-6

    rng = np.random.default_rng(3)
    comp = rng.integers(0, 2, size=200_000)
    draws = np.where(comp == 0, -3.0, 3.0) + rng.standard_normal(200_000)
    mc = entropy.pointwise_entropy(model, draws[:, None]).mean()
    assert abs(mc - oracle) < 0.02


def test_log_density_rejects_dim_mismatch():
    with pytest.raises(ValueError):
        entropy.log_density(unit_gaussian_2d(), np.zeros(3))


def test_init_covers_separated_clusters():
    rng = np.random.default_rng(4)
    sigma = 0.05
    a = np.array([-5.0, -5.0]) + sigma * rng.standard_normal((200, 2))
    b = np.array([5.0, 5.0]) + sigma * rng.standard_normal((200, 2))
    samples = np.concatenate([a, b])
    model = entropy.init_gmm(samples, 2, np.random.default_rng(7))
    dist_a = np.min(np.linalg.norm(model.means - [-5.0, -5.0], axis=1))
    dist_b = np.min(np.linalg.norm(model.means - [5.0, 5.0], axis=1))
    assert dist_a < 1.0 and dist_b < 1.0
    # initial scale tracks within-cluster spread, not the 10-unit separation
    diag = np.diagonal(model.scale_factors(), axis1=1, axis2=2)
    assert np.all(diag > sigma / 3.0)
    assert np.all(diag < 3.0 * sigma)


def test_init_degenerate_data_warns_and_clamps():
    x = np.ones((50, 2))
    with pytest.warns(RuntimeWarning, match="degenerate"):
        model = entropy.init_gmm(x, 1, np.random.default_rng(0))
    h = entropy.pointwise_entropy(model, np.ones(2))
    assert np.isclose(h, np.log(2.0 * np.pi) + 2.0 * np.log(1e-3), atol=1e-9)


def test_init_needs_enough_samples():
    with pytest.raises(ValueError):
        entropy.init_gmm(np.zeros((3, 2)), 4, np.random.default_rng(0))


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_nll_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    model = entropy.GmmEntropyModel(
        rng.standard_normal(2) * 0.3,
        rng.standard_normal((2, 2)),
        np.tril(rng.standard_normal((2, 2, 2)) * 0.4),
    )
    x = rng.standard_normal((8, 2))
    _, analytic = entropy.nll_loss(model, (x,))
    numeric = central_difference(
        lambda: entropy.nll_loss(model, (x,), grads=False)[0],
        model.parameters())
    # upper triangle of raw_scales is unused; finite differences see that too
    assert relative_gradient_error(analytic, numeric) < 1e-3


def test_nll_loss_value_matches_density():
    rng = np.random.default_rng(5)
    model = unit_gaussian_2d()
    x = rng.standard_normal((16, 2))
    loss, _ = entropy.nll_loss(model, (x,), grads=False)
    assert np.isclose(loss, -entropy.log_density(model, x).mean(), atol=1e-12)


def test_fit_is_deterministic():
    rng = np.random.default_rng(6)
    samples = rng.standard_normal((400, 2))
    cfg = TrainConfig(max_epochs=3, seed=11)
    m1 = entropy.fit(samples, cfg, k=3)
    m2 = entropy.fit(samples, cfg, k=3)
    for a, b in zip(m1.parameters(), m2.parameters()):
        assert np.array_equal(a, b)


def test_fit_recovers_standard_normal_entropy():
    rng = np.random.default_rng(7)
    samples = rng.standard_normal((4000, 1))
    model = entropy.fit(samples, TrainConfig(max_epochs=40, seed=0), k=6)
    probe = np.random.default_rng(8).standard_normal((20000, 1))
    est = entropy.pointwise_entropy(model, probe).mean()
    assert abs(est - 1.4189) < 0.1


def test_checkpoint_round_trip():
    rng = np.random.default_rng(9)
    model = entropy.GmmEntropyModel(
        rng.standard_normal(4), rng.standard_normal((4, 3)),
        np.tril(rng.standard_normal((4, 3, 3))))
    buf = io.BytesIO()
    entropy.save_gmm(model, buf)
    buf.seek(0)
    back = entropy.load_gmm(buf)
    assert back.k == 4 and back.dim == 3
    for a, b in zip(model.parameters(), back.parameters()):
        assert np.allclose(a, b, atol=1e-6)
    buf2 = io.BytesIO()
    entropy.save_gmm(back, buf2)
    assert buf.getvalue() == buf2.getvalue()


def test_checkpoint_bad_magic():
    with pytest.raises(ValueError, match="magic"):
        entropy.load_gmm(io.BytesIO(b"NOPE" + b"\x00" * 10))
