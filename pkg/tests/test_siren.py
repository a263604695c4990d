import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sirenpet.siren import (
    SirenConfig,
    SirenParams,
    coord_grid,
    init_siren,
    load_checkpoint,
    render_image,
    save_checkpoint,
    siren_backward,
    siren_forward,
)


def perturbed(config, scale=0.3, seed=1):
    """Initialized params plus random biases, so no gradient vanishes by symmetry."""
    p = init_siren(config)
    rng = np.random.default_rng(seed)
    return p.from_vector(p.to_vector() + scale * rng.standard_normal(p.n_params) * (p.to_vector() != 0)
                         + 0.1 * rng.standard_normal(p.n_params) * (p.to_vector() == 0))


def test_init_bounds_and_moments():
    p = init_siren(SirenConfig(hidden_layers=2, features=256, omega0=25.0, seed=0))
    bound = math.sqrt(6 / 256) / 25
    assert bound == pytest.approx(0.006124, abs=1e-6)
    hidden = p.weights[1]
    assert hidden.shape == (256, 256)
    assert np.abs(hidden).max() <= bound
    assert hidden.std() == pytest.approx(bound / math.sqrt(3), rel=0.05)
    assert np.abs(p.weights[0]).max() <= 0.5
    assert all(not b.any() for b in p.biases)


def test_init_is_seeded():
    a = init_siren(SirenConfig(features=32, seed=4)).to_vector()
    b = init_siren(SirenConfig(features=32, seed=4)).to_vector()
    c = init_siren(SirenConfig(features=32, seed=5)).to_vector()
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_param_count_default():
    # 2*256+256 + 3*(256*256+256) + 256+1
    assert init_siren(SirenConfig()).n_params == 198_401


def test_zero_params_give_ln2():
    p = init_siren(SirenConfig(features=16)).zeros_like()
    img = render_image(p, (5, 7))
    assert np.allclose(img.values, math.log(2), rtol=0, atol=1e-15)


def test_omega0_folds_into_first_layer():
    p = perturbed(SirenConfig(hidden_layers=1, features=16))
    coords = coord_grid(6)
    base, _ = siren_forward(p, coords)
    k = 3.0
    weights = [w.copy() for w in p.weights]
    biases = [b.copy() for b in p.biases]
    weights[0] /= k
    biases[0] /= k
    # with one sine layer the frequency only enters through the first affine map
    alt, _ = siren_forward(SirenParams(weights, biases, p.omega0 * k), coords)
    assert np.allclose(base, alt, rtol=1e-12, atol=0)


def test_scalar_oracle():
    p = perturbed(SirenConfig(hidden_layers=3, features=8, omega0=25.0, seed=3))
    xy = (0.3, -0.7)
    got, _ = siren_forward(p, np.array([xy]))

    h = list(xy)
    n = len(p.weights)
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        z = [sum(h[j] * w[j, k] for j in range(len(h))) + b[k] for k in range(w.shape[1])]
        h = [math.sin(p.omega0 * v) for v in z] if i < n - 1 else z
    expected = math.log1p(math.exp(h[0]))
    assert got[0] == pytest.approx(expected, rel=1e-12)


def test_zero_output_grad():
    p = perturbed(SirenConfig(hidden_layers=2, features=8))
    _, cache = siren_forward(p, coord_grid(4))
    g = siren_backward(p, cache, np.zeros(16))
    assert not g.to_vector().any()


def test_backward_matches_finite_differences():
    p = perturbed(SirenConfig(hidden_layers=2, features=16, seed=2))
    coords = np.array([[0.25, -0.5]])
    _, cache = siren_forward(p, coords)
    grad = siren_backward(p, cache, np.ones(1)).to_vector()
    theta = p.to_vector()
    rng = np.random.default_rng(0)
    idx = rng.choice(theta.size, 20, replace=False)
    h = 1e-5
    for i in idx:
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        fd = (siren_forward(p.from_vector(tp), coords)[0][0] - siren_forward(p.from_vector(tm), coords)[0][0]) / (2 * h)
        assert abs(grad[i] - fd) <= 1e-6 * max(abs(grad[i]), abs(fd), 1e-3)


def test_batch_gradient_is_sum_of_samples():
    p = perturbed(SirenConfig(hidden_layers=2, features=8))
    coords = coord_grid(3)
    w = np.random.default_rng(5).standard_normal(9)
    _, cache = siren_forward(p, coords)
    total = siren_backward(p, cache, w).to_vector()
    parts = np.zeros_like(total)
    for i in range(9):
        _, c = siren_forward(p, coords[i:i + 1])
        parts += siren_backward(p, c, w[i:i + 1]).to_vector()
    assert np.allclose(total, parts, rtol=1e-12, atol=1e-12 * np.abs(total).max())


def test_render_degenerate_and_pure():
    assert np.array_equal(coord_grid(1), np.zeros((1, 2)))
    c = coord_grid(3, 5)
    assert c[0].tolist() == [-1.0, -1.0] and c[-1].tolist() == [1.0, 1.0]
    assert c[1].tolist() == [-0.5, -1.0]  # row-major: x runs fastest
    p = perturbed(SirenConfig(features=16))
    assert np.array_equal(render_image(p, (4, 4)).values, render_image(p, (4, 4)).values)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.0, 50.0))
def test_render_positive(seed, scale):
    p = init_siren(SirenConfig(hidden_layers=2, features=8, seed=seed))
    q = p.from_vector(p.to_vector() * scale)
    assert np.all(render_image(q, (6, 6)).values > 0)


def test_variance_propagation():
    p = init_siren(SirenConfig(hidden_layers=4, features=256, seed=0))
    coords = np.random.default_rng(1).uniform(-1, 1, size=(4096, 2))
    _, cache = siren_forward(p, coords)
    for i in range(1, len(p.weights)):
        # the input of layer i is the post-activation of hidden layer i-1
        std = cache.inputs[i].std()
        assert 0.5 <= std <= 0.9, (i, std)


def test_non_finite_params():
    p = init_siren(SirenConfig(features=4))
    theta = p.to_vector()
    theta[3] = np.nan
    with pytest.raises(FloatingPointError):
        siren_forward(p.from_vector(theta), coord_grid(2))


def test_backward_shape_mismatch():
    p = init_siren(SirenConfig(features=4))
    _, cache = siren_forward(p, coord_grid(2))
    with pytest.raises(ValueError):
        siren_backward(p, cache, np.ones(5))


def test_checkpoint_round_trip(tmp_path):
    p = perturbed(SirenConfig(hidden_layers=3, features=12))
    save_checkpoint(tmp_path / "w.ipw", p)
    q = load_checkpoint(tmp_path / "w.ipw")
    assert q.dims == p.dims and q.omega0 == p.omega0
    assert np.array_equal(q.to_vector(), p.to_vector())
    data = (tmp_path / "w.ipw").read_bytes()
    (tmp_path / "short.ipw").write_bytes(data[:-8])
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "short.ipw")
    (tmp_path / "bad.ipw").write_bytes(b"XXXX" + data[4:])
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "bad.ipw")


def test_config_validation():
    for kwargs in ({"hidden_layers": 0}, {"features": 0}, {"omega0": 0.0}):
        with pytest.raises(ValueError):
            SirenConfig(**kwargs)
