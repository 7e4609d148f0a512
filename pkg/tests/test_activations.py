import numpy as np
import pytest

from taylorbc.activations import (
    MAX_DERIVATIVE_ORDER,
    Gelu,
    Identity,
    SoftClip,
    Tanh,
    activation_from_name,
)

ALL_KINDS = (Identity(), Tanh(), Gelu(), SoftClip(10.0), SoftClip(2.5))


def _stencil(f, x, order, h):
    if order == 1:
        return (f(x + h) - f(x - h)) / (2 * h)
    if order == 2:
        return (f(x + h) - 2 * f(x) + f(x - h)) / h**2
    return (f(x + 2 * h) - 2 * f(x + h) + 2 * f(x - h) - f(x - 2 * h)) / (2 * h**3)


def _richardson(f, x, order, h):
    # two Richardson levels: O(h^2) stencils pushed to O(h^6), needed for
    # third derivatives at 1e-6 relative
    d1 = _stencil(f, x, order, h)
    d2 = _stencil(f, x, order, h / 2)
    d3 = _stencil(f, x, order, h / 4)
    r1 = (4 * d2 - d1) / 3
    r2 = (4 * d3 - d2) / 3
    return (16 * r2 - r1) / 15


STEP = {1: 1e-3, 2: 1e-2, 3: 4e-2}


def test_derivatives_match_finite_differences():
    rng = np.random.default_rng(0)
    xs = rng.uniform(-5.0, 5.0, 10000)
    for act in ALL_KINDS:
        for order in (1, 2, 3):
            analytic = act.derivative(xs, order)
            oracle = _richardson(act.value, xs, order, STEP[order])
            scale = max(np.abs(oracle).max(), 1.0)
            err = np.abs(analytic - oracle).max() / scale
            assert err < 1e-6, f"{act.descriptor()} order {order}: {err:.3e}"


def test_identity_derivatives():
    xs = np.linspace(-3, 3, 7)
    act = Identity()
    assert np.array_equal(act.value(xs), xs)
    assert np.all(act.derivative(xs, 1) == 1.0)
    assert np.all(act.derivative(xs, 2) == 0.0)
    assert np.all(act.derivative(xs, 3) == 0.0)


def test_tanh_at_zero():
    act = Tanh()
    assert act.value(np.array(0.0)) == 0.0
    assert act.derivative(np.array(0.0), 1) == 1.0
    assert act.derivative(np.array(0.0), 2) == 0.0
    # third derivative of tanh at 0 is -2
    assert abs(act.derivative(np.array(0.0), 3) - (-2.0)) < 1e-15


def test_gelu_first_derivative_at_zero_is_half():
    assert abs(Gelu().derivative(np.array(0.0), 1) - 0.5) < 1e-15


def test_gelu_value_large_inputs():
    act = Gelu()
    assert abs(act.value(np.array(10.0)) - 10.0) < 1e-10
    assert abs(act.value(np.array(-10.0))) < 1e-10


def test_softclip_bounded():
    # strictly below the clip where tanh is representably below 1, and never
    # above it even at float saturation
    for a in (1.0, 2.5, 10.0):
        act = SoftClip(a)
        zs = np.linspace(-8.0 * a, 8.0 * a, 10001)
        assert np.all(np.abs(act.value(zs)) < a)
        huge = np.array([-1e8, 1e8])
        assert np.all(np.abs(act.value(huge)) <= a)


def test_softclip_near_identity_at_origin():
    act = SoftClip(10.0)
    zs = np.linspace(-0.1, 0.1, 101)
    assert np.abs(act.value(zs) - zs).max() < 1e-4
    assert abs(act.derivative(np.array(0.0), 1) - 1.0) < 1e-15


def test_softclip_requires_positive_scale():
    with pytest.raises(ValueError):
        SoftClip(0.0)
    with pytest.raises(ValueError):
        SoftClip(-1.0)


def test_derivatives_helper_stacks_orders():
    act = Tanh()
    xs = np.linspace(-2, 2, 5)
    ds = act.derivatives(xs, 3)
    assert len(ds) == 3
    for order, d in enumerate(ds, start=1):
        assert np.array_equal(d, act.derivative(xs, order))


def test_derivative_order_bounds():
    act = Gelu()
    xs = np.zeros(3)
    with pytest.raises(ValueError):
        act.derivative(xs, 0)
    with pytest.raises(ValueError):
        act.derivative(xs, MAX_DERIVATIVE_ORDER + 1)


def test_descriptor_round_trip():
    for act in ALL_KINDS:
        rebuilt = activation_from_name(**act.descriptor())
        xs = np.linspace(-3, 3, 11)
        assert np.array_equal(rebuilt.value(xs), act.value(xs))


def test_unknown_descriptor_rejected():
    with pytest.raises(ValueError):
        activation_from_name("swish")
