import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gabor_inr import autodiff as ad
from gabor_inr import activations as act
from gabor_inr.activations import Activation
from gabor_inr.model import wire2d_layer


def test_gabor_at_origin_is_one():
    for w0, s0 in [(0, 0), (20, 10), (3.5, 0.2)]:
        assert act.gabor(np.array([0j]), w0, s0)[0] == 1 + 0j


def test_gabor_without_spread_is_unit_phasor():
    x = np.linspace(-1, 1, 101)
    np.testing.assert_allclose(act.gabor(x, 7.0, 0.0), np.exp(1j * 7.0 * x), atol=1e-15)


def test_gabor_scalar_oracle():
    # direct evaluation of exp(j w0 z) exp(-|s0 z|^2) with cmath
    for z in [1 + 0j, 0.3 - 0.2j, -0.05 + 0.4j]:
        expected = cmath.exp(1j * 20 * z) * math.exp(-abs(10 * z) ** 2)
        got = act.gabor(np.array([z]), 20.0, 10.0)[0]
        assert abs(got - expected) <= 1e-15 * max(1.0, abs(expected))


def test_gabor_magnitude_bound():
    rng = np.random.default_rng(0)
    z = rng.uniform(-1, 1, 500) + 1j * rng.uniform(-1, 1, 500)
    bound = np.exp(-3.0 * z.imag) * np.exp(-(2.0 ** 2) * np.abs(z) ** 2)
    assert np.all(np.abs(act.gabor(z, 3.0, 2.0)) <= bound * (1 + 1e-12))


def test_envelope_flushes_and_handles_scalars():
    assert act.envelope(-1000.0) == 0.0
    assert act.envelope(0.0) == 1.0
    out = act.envelope(np.array([-1.0, -80.0]))
    assert out[0] == math.exp(-1.0) and out[1] == 0.0


def test_wire_real_examples():
    x = np.linspace(-1, 1, 41)
    np.testing.assert_array_equal(act.wire_real(x, 9.0, 0.0), np.sin(9.0 * x))
    assert act.wire_real(np.array(0.0), 20.0, 10.0) == 0.0
    w0, s0 = 20.0, 10.0
    v = act.wire_real(np.array(math.pi / (2 * w0)), w0, s0)
    assert v == pytest.approx(math.exp(-(s0 * math.pi / (2 * w0)) ** 2), rel=1e-14)
    with pytest.raises(TypeError):
        act.wire_real(np.array([1j]), 1.0, 1.0)


def test_baseline_examples():
    assert act.siren(np.array(0.0), 40.0) == 0.0
    assert act.gauss(np.array(0.0), 30.0) == 1.0
    assert act.relu(np.array(-1.0)) == 0.0
    assert act.gauss(np.array(1 / 30.0), 30.0) == pytest.approx(math.exp(-1), rel=1e-15)
    assert act.siren(np.array(math.pi / 80.0), 40.0) == pytest.approx(1.0, abs=1e-15)


def test_degeneracies():
    x = np.random.default_rng(1).uniform(-1, 1, 10_000)
    assert np.max(np.abs(act.wire_real(x, 25.0, 0.0) - act.siren(x, 25.0))) < 1e-12
    # the Gaussian factor of the omega0 = 0 Gabor on reals is exactly the Gauss map
    np.testing.assert_array_equal(act.gabor(x, 0.0, 30.0).real, act.gauss(x, 30.0))
    assert np.max(np.abs(np.abs(act.gabor(x, 20.0, 10.0)) - np.exp(-(10.0 * x) ** 2))) < 1e-12
    cq, w = Activation.constant_q(q=60.0, omega0=15.0), Activation.wire(15.0, 4.0)
    z = x[:100] + 0.3j * x[100:200]
    assert cq(z).tobytes() == w(z).tobytes()


@settings(max_examples=20, deadline=None)
@given(st.floats(-2, 2), st.floats(0, 50), st.floats(0, 20))
def test_gabor_magnitude_on_reals(x, w0, s0):
    assert abs(abs(act.gabor(np.array([x]), w0, s0)[0]) - math.exp(-(s0 * x) ** 2)) < 1e-12


def test_positional_encoding_examples():
    out = act.positional_encoding(np.zeros((1, 2)), 6)
    assert out.shape == (1, 24)
    assert np.all(out[:, 0::2] == 0) and np.all(out[:, 1::2] == 1)
    one = act.positional_encoding(np.array([[1.0]]), 1)
    np.testing.assert_allclose(one, [[0.0, -1.0]], atol=1e-15)


def test_positional_encoding_layout():
    coords = np.array([[0.25, -0.5]])
    out = act.positional_encoding(coords, 3)
    for level in range(3):
        for d in range(2):
            col = 2 * (level * 2 + d)
            assert out[0, col] == math.sin(2 ** level * math.pi * coords[0, d])
            assert out[0, col + 1] == math.cos(2 ** level * math.pi * coords[0, d])


def test_activation_validation():
    with pytest.raises(ValueError):
        Activation("wire2d", omega0=1, s0=1, windows=1)
    with pytest.raises(ValueError):
        Activation("wire", omega0=-1)
    with pytest.raises(ValueError):
        Activation("constant_q", omega0=10.0)
    with pytest.raises(ValueError):
        Activation("tanh")
    assert Activation.constant_q(q=30.0, omega0=10.0).spread == 3.0
    a = Activation.wire2d(12.0, 4.0, windows=3)
    assert Activation.from_dict(a.to_dict()) == a


def test_sweep_alias_cells():
    assert Activation.gauss_kind(30.0) == act.sweep_alias(0.0, 30.0)
    assert Activation.siren_kind(40.0) == act.sweep_alias(40.0, 0.0)
    assert act.sweep_alias(0.0, 0.0).kind == "relu_pe"
    assert act.sweep_alias(0.0, 0.0).frequencies == 0
    assert act.sweep_alias(10.0, 5.0) == Activation.wire(10.0, 5.0)


def _complex_leaf(rng, *shape):
    return ad.Tensor(rng.uniform(-1, 1, shape) + 1j * rng.uniform(-1, 1, shape))


def test_wire2d_with_zero_windows_equals_wire_layer():
    rng = np.random.default_rng(2)
    x = ad.Tensor(rng.uniform(-1, 1, (7, 3)))
    w, b = _complex_leaf(rng, 5, 3), _complex_leaf(rng, 5)
    zw, zb = ad.Tensor(np.zeros((5, 3), complex)), ad.Tensor(np.zeros(5, complex))
    two = wire2d_layer(x, [w, zw], [b, zb], 20.0, 10.0).data
    one = ad.elementwise(ad.linear(x, w, b), "gabor", omega0=20.0, s0=10.0).data
    assert two.tobytes() == one.tobytes()


def test_wire2d_all_zero_preactivations_give_ones():
    x = ad.Tensor(np.zeros((4, 2)))
    zeros = [ad.Tensor(np.zeros((3, 2), complex)) for _ in range(3)]
    zb = [ad.Tensor(np.zeros(3, complex)) for _ in range(3)]
    np.testing.assert_array_equal(wire2d_layer(x, zeros, zb, 20.0, 10.0).data, np.ones((4, 3)))


def test_wire2d_matches_term_by_term_oracle():
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1, (6, 2))
    ws = [rng.uniform(-0.5, 0.5, (4, 2)) + 1j * rng.uniform(-0.5, 0.5, (4, 2)) for _ in range(3)]
    bs = [rng.uniform(-0.5, 0.5, 4) + 1j * rng.uniform(-0.5, 0.5, 4) for _ in range(3)]
    got = wire2d_layer(ad.Tensor(x), [ad.Tensor(w) for w in ws], [ad.Tensor(b) for b in bs], 5.0, 2.0).data
    for n in range(6):
        for u in range(4):
            pre = [sum(ws[k][u, i] * x[n, i] for i in range(2)) + bs[k][u] for k in range(3)]
            expected = cmath.exp(1j * 5.0 * pre[0]) * math.exp(-abs(2.0 * pre[0]) ** 2)
            for p in pre[1:]:
                expected *= math.exp(-abs(2.0 * p) ** 2)
            assert abs(got[n, u] - expected) < 1e-14


def test_wire2d_rejects_mismatched_windows():
    rng = np.random.default_rng(4)
    x = ad.Tensor(rng.uniform(-1, 1, (2, 2)))
    with pytest.raises(ad.ShapeError):
        wire2d_layer(x, [_complex_leaf(rng, 3, 2), _complex_leaf(rng, 4, 2)],
                     [_complex_leaf(rng, 3), _complex_leaf(rng, 4)], 1.0, 1.0)
