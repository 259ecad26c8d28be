import json

import numpy as np
import pytest

from gabor_inr import activations as act
from gabor_inr import autodiff as ad
from gabor_inr.activations import Activation
from gabor_inr.model import (CheckpointError, build, forward, hidden_activations, init_bound,
                             init_weights, load_checkpoint, parity_width, save_checkpoint)
from gabor_inr.signals import make_grid

ALL_KINDS = [Activation.wire(), Activation.wire_real_kind(), Activation.wire2d(),
             Activation.constant_q(200.0, 20.0), Activation.siren_kind(),
             Activation.gauss_kind(), Activation.relu_pe(4)]


def test_parity_widths():
    assert parity_width(256, Activation.wire()) == 181
    assert parity_width(300, Activation.wire()) == 212
    assert parity_width(256, Activation.wire2d()) == 128
    assert parity_width(256, Activation.gauss_kind()) == 256


def test_parameter_count_example():
    m = build(2, 1, 2, 128, Activation.gauss_kind())
    assert m.parameter_count() == 2 * 128 + 128 + 128 * 128 + 128 + 128 * 1 + 1


def test_layer_shapes_chain():
    for a in ALL_KINDS:
        m = build(3, 2, 3, 8, a)
        assert len(m.layers) == 4
        for prev, cur in zip(m.layers, m.layers[1:]):
            assert cur.in_features == prev.out_features
        assert m.layers[0].in_features == m.encoded_dim
        assert m.layers[-1].out_features == 2


def test_wire2d_carries_window_sets():
    m = build(2, 1, 2, 8, Activation.wire2d(windows=3))
    assert [len(l.weights) for l in m.layers] == [3, 3, 1]


def test_complex_weights_flag():
    for a in ALL_KINDS:
        m = build(2, 1, 1, 4, a)
        assert m.complex_weights == (a.kind in act.COMPLEX_KINDS)
        assert all(np.iscomplexobj(p.data) == m.complex_weights for p in m.parameters())


def test_same_seed_same_parameters():
    a = build(2, 1, 2, 16, Activation.wire(), seed=3)
    b = build(2, 1, 2, 16, Activation.wire(), seed=3)
    c = build(2, 1, 2, 16, Activation.wire(), seed=4)
    assert all(np.array_equal(x, y) for x, y in zip(a.state(), b.state()))
    assert not all(np.array_equal(x, y) for x, y in zip(a.state(), c.state()))


def test_invalid_widths_rejected():
    with pytest.raises(ValueError):
        build(2, 1, 2, 0, Activation.wire())
    with pytest.raises(ValueError):
        build(2, 1, -1, 4, Activation.wire())
    with pytest.raises(ValueError):
        Activation.wire2d(windows=1)


def test_standard_init_bound():
    m = build(256, 1, 1, 256, Activation.wire(), init="standard")
    w = m.layers[0].weights[0].data
    assert np.max(np.abs(w.real)) <= 1 / 16 and np.max(np.abs(w.imag)) <= 1 / 16


def test_siren_init_bounds():
    m = build(2, 1, 2, 64, Activation.siren_kind(30.0), init="siren", seed=1)
    assert np.max(np.abs(m.layers[0].weights[0].data)) <= 0.5
    c = np.sqrt(6 / (30.0 * 64))
    assert np.max(np.abs(m.layers[1].weights[0].data)) <= c
    assert np.max(np.abs(m.layers[1].biases[0].data)) <= c


def test_siren_init_needs_frequency():
    with pytest.raises(ValueError):
        init_bound("siren", 1, 8, 0.0)
    with pytest.raises(ValueError):
        build(2, 1, 1, 4, Activation.gauss_kind(), init="siren")


def test_init_variance_matches_uniform_law():
    m = build(1000, 1, 1, 100, Activation.wire(), init="standard", seed=0)
    w = m.layers[0].weights[0].data
    c = 1 / np.sqrt(1000)
    for part in (w.real, w.imag):
        assert abs(part.var() / (c * c / 3) - 1) < 0.05
    # independent re/im draws
    assert abs(np.corrcoef(w.real.ravel(), w.imag.ravel())[0, 1]) < 0.02


def test_init_weights_is_deterministic():
    m = build(2, 1, 2, 8, Activation.wire(), seed=0)
    before = m.state()
    init_weights(m, "standard", 9)
    init_weights(m, "standard", 0)
    assert all(np.array_equal(x, y) for x, y in zip(before, m.state()))


def test_zero_weight_model_outputs_bias():
    m = build(2, 3, 2, 8, Activation.wire())
    for p in m.parameters():
        p.data = np.zeros_like(p.data)
    m.layers[-1].biases[0].data = np.array([0.5 + 2j, -1.0, 3.0 - 1j])
    out = forward(m, np.random.default_rng(0).uniform(-1, 1, (7, 2)))
    np.testing.assert_array_equal(out, np.tile([0.5, -1.0, 3.0], (7, 1)))


def test_one_unit_wire_scalar_oracle():
    m = build(1, 1, 1, 1, Activation.wire(20.0, 10.0))
    w1, b1, w2, b2 = 0.3 - 0.1j, 0.05 + 0.02j, 1.5 + 0.5j, -0.25 + 0.7j
    m.layers[0].weights[0].data = np.array([[w1]])
    m.layers[0].biases[0].data = np.array([b1])
    m.layers[1].weights[0].data = np.array([[w2]])
    m.layers[1].biases[0].data = np.array([b2])
    for x in (-0.7, 0.0, 0.4):
        z = w1 * x + b1
        psi = np.exp(1j * 20 * z) * np.exp(-abs(10 * z) ** 2)
        expected = (psi * w2 + b2).real
        assert abs(forward(m, np.array([[x]]))[0, 0] - expected) < 1e-14


@pytest.mark.parametrize("a", ALL_KINDS, ids=lambda a: a.kind)
def test_batching_invariance(a):
    m = build(2, 2, 2, 16, a, seed=2)
    x = np.random.default_rng(1).uniform(-1, 1, (9, 2))
    full = forward(m, x)
    parts = np.concatenate([forward(m, x[:4]), forward(m, x[4:])])
    single = np.concatenate([forward(m, x[i:i + 1]) for i in range(9)])
    np.testing.assert_allclose(full, parts, rtol=0, atol=1e-13)
    np.testing.assert_allclose(full, single, rtol=0, atol=1e-13)


@pytest.mark.parametrize("a", ALL_KINDS, ids=lambda a: a.kind)
def test_forward_is_finite_and_real(a):
    m = build(2, 1, 2, 16, a)
    out = forward(m, make_grid([8, 8]))
    assert out.shape == (64, 1) and out.dtype == np.float64 and np.all(np.isfinite(out))


def test_real_models_have_real_hidden_values():
    for a in (Activation.siren_kind(), Activation.gauss_kind(), Activation.relu_pe()):
        hs = hidden_activations(build(2, 1, 2, 8, a), make_grid([4, 4]))
        assert all(not np.iscomplexobj(h) for h in hs)


def test_coordinate_dimension_mismatch():
    m = build(2, 1, 1, 4, Activation.wire())
    with pytest.raises(ad.ShapeError):
        forward(m, np.zeros((3, 3)))


def test_hidden_activation_count_and_zero_row():
    m = build(2, 1, 3, 8, Activation.wire(), seed=5)
    hs = hidden_activations(m, np.zeros((1, 2)))
    assert len(hs) == 3
    b = m.layers[0].biases[0].data
    np.testing.assert_allclose(hs[0][0], act.gabor(b, 20.0, 10.0), rtol=0, atol=1e-15)


def test_first_layer_atoms_match_direct_gabor():
    m = build(1, 1, 2, 6, Activation.wire(), seed=7)
    x = np.linspace(-1, 1, 200)[:, None]
    w = m.layers[0].weights[0].data
    b = m.layers[0].biases[0].data
    expected = act.gabor(x @ w.T + b, 20.0, 10.0)
    np.testing.assert_allclose(hidden_activations(m, x)[0], expected, rtol=0, atol=1e-14)


@pytest.mark.parametrize("a", ALL_KINDS, ids=lambda a: a.kind)
def test_checkpoint_round_trip(tmp_path, a):
    m = build(2, 3, 2, 5, a, seed=11)
    path = tmp_path / "m.json"
    save_checkpoint(m, path)
    back = load_checkpoint(path)
    assert back.spec() == m.spec()
    assert all(np.array_equal(x, y) for x, y in zip(m.state(), back.state()))
    x = make_grid([4, 4])
    np.testing.assert_array_equal(forward(m, x), forward(back, x))


def test_single_precision_checkpoint_round_trip(tmp_path):
    m = build(2, 1, 1, 5, Activation.wire(), precision="single")
    save_checkpoint(m, tmp_path / "m.json")
    back = load_checkpoint(tmp_path / "m.json")
    assert back.precision == "single"
    assert all(x.dtype == y.dtype and np.array_equal(x, y) for x, y in zip(m.state(), back.state()))


def test_checkpoint_errors(tmp_path):
    m = build(2, 1, 1, 5, Activation.wire())
    path = tmp_path / "m.json"
    save_checkpoint(m, path)
    doc = json.loads(path.read_text())
    bad = dict(doc, version=99)
    (tmp_path / "v.json").write_text(json.dumps(bad))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "v.json")
    doc["parameters"][0]["shape"] = [1, 1]
    (tmp_path / "s.json").write_text(json.dumps(doc))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "s.json")
