import numpy as np
import pytest

from cider import autodiff as ad
from cider import generator as gen
from cider import losses
from cider import tensor as tc
from cider.errors import ContractError, ShapeError

import gradsuite


@pytest.mark.parametrize("name,make", gradsuite.CASES, ids=[c[0] for c in gradsuite.CASES])
def test_primitive_matches_finite_differences(name, make):
    for seed in range(10):
        report = gradsuite.run_case(make, seed)
        assert report.max_error <= 1e-3, f"{name} seed {seed}\n{report}"


def test_sigmoid_at_zero():
    out = ad.sigmoid(np.zeros((1, 3, 3)))
    assert np.all(out.value == 0.5)


def test_leaky_relu_values():
    out = ad.leaky_relu(np.array([[[-1.0, 2.0]]]), 0.1)
    assert np.allclose(out.value, [[[-0.1, 2.0]]])


def test_instance_norm_constant_map():
    x = np.full((2, 4, 4), 3.0)
    out = ad.instance_norm(x, eps=1e-5).value
    # (x - mu) / sqrt(var + eps) with x - mu = 0
    assert np.array_equal(out, np.zeros_like(x))


def test_instance_norm_hand_formula():
    x = np.arange(4.0).reshape(1, 2, 2)
    mu, var = 1.5, 1.25
    expected = (x - mu) / np.sqrt(var + 1e-5)
    assert np.allclose(ad.instance_norm(x).value, expected, atol=1e-12)


def test_linear_gradient_exact():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 3, 3))
    w = ad.parameter(rng.normal(size=(2, 3, 3)))
    ad.backward(ad.sum_(ad.mul(w, ad.constant(x))))
    assert np.array_equal(w.grad, x)


def test_sigmoid_gradient_at_zero():
    w = ad.parameter(np.zeros((1, 2, 2)))
    ad.backward(ad.sum_(ad.sigmoid(w)))
    assert np.allclose(w.grad, 0.25)


def test_shared_node_accumulates():
    w = ad.parameter(np.full((1, 1, 2), 3.0))
    ad.backward(ad.sum_(ad.mul(w, w)))
    assert np.allclose(w.grad, 6.0)


def test_backward_twice_recomputes_intermediates():
    w = ad.parameter(np.ones((1, 2, 2)))
    loss = ad.sum_(ad.scalar_mul(w, 2.0))
    ad.backward(loss)
    ad.backward(loss)
    # leaves accumulate, intermediates are recomputed
    assert np.allclose(w.grad, 4.0)


def test_backward_requires_scalar():
    w = ad.parameter(np.ones((1, 2, 2)))
    with pytest.raises(ContractError):
        ad.backward(ad.scalar_mul(w, 2.0))


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        ad.add(np.zeros((1, 2, 2)), np.zeros((1, 2, 3)))
    with pytest.raises(ShapeError):
        ad.learnable_conv2d(np.zeros((2, 4, 4)), np.zeros((3, 1, 3, 3)))


def test_tape_records_each_primitive_once():
    with ad.Tape() as tape:
        a = ad.parameter(np.ones((1, 2, 2)))
        b = ad.sigmoid(ad.scalar_mul(a, 2.0))
        ad.sum_(ad.add(b, b))
    assert len(tape) == 4
    assert [n.op for n in tape.nodes] == ["scalar_mul", "sigmoid", "add", "sum"]


def test_float64_graph_stays_float64():
    w = ad.parameter(np.ones((1, 3, 3), dtype=np.float64))
    out = ad.instance_norm(ad.leaky_relu(ad.filter2d(w, np.ones((3, 3)) / 9)))
    assert out.dtype == np.float64


def test_quadratic_grad_check():
    p = ad.ParamSet({"w": np.array([[[0.3, -1.2, 2.0]]])})
    report = ad.grad_check(lambda ps: ad.sum_(ad.square(ps["w"])), p)
    assert report.max_error <= 1e-6


def test_grad_check_catches_corrupted_rule():
    def bad_square(a):
        a = ad._node(a)
        av = a.value
        # derivative off by a factor of three
        return ad._record(av * av, (a,), lambda g: (6 * g * av,), "bad_square")

    rng = np.random.default_rng(1)
    p = ad.ParamSet({"w": rng.normal(size=(1, 4, 4))})
    report = ad.grad_check(lambda ps: ad.sum_(bad_square(ps["w"])), p)
    assert report.max_error > 1e-1


def test_grad_check_needs_parameters():
    with pytest.raises(ContractError):
        ad.grad_check(lambda ps: ad.constant(np.zeros((1, 1, 1))), ad.ParamSet())


def test_grad_check_flags_kink_crossings():
    p = ad.ParamSet({"w": np.array([[[0.0004, -0.5, 0.7]]])})
    report = ad.grad_check(lambda ps: ad.sum_(ad.abs_(ps["w"])), p, skip_kinks=True)
    assert report.skipped["w"] == 1 and report.checked["w"] == 2
    assert report.max_error <= 1e-9


def test_param_set_order_and_count():
    p = ad.ParamSet({"b": np.zeros(3), "a": np.zeros((2, 2))})
    assert p.names() == ["a", "b"]
    assert p.param_count() == 7
    assert ad.ParamSet().param_count() == 0
    with pytest.raises(ContractError):
        p.add("a", np.zeros(1))


def _generator_fixture(seed, n):
    rng = np.random.default_rng(seed)
    cfg = gen.GeneratorConfig(channels=(8, 12, 16), skip_channels=2, seed=seed)
    net = gen.init(cfg)
    feats = rng.random((16, n, n))
    y = rng.random((n, n))
    k = tc.gaussian_kernel(3, 0.8)
    w = losses.LossWeights(1.0, 1e-3, 0.0)
    return net, lambda ps: losses.total_loss(gen.forward(net, feats, ps), k, y, w)


@pytest.mark.parametrize("seed", range(3))
def test_generator_loss_gradients_small_step(seed):
    net, build = _generator_fixture(seed, 16)
    report = ad.grad_check(build, net.params, seed=seed, h=1e-5, max_elements=3, skip_kinks=True)
    assert report.max_error <= 1e-3, str(report)
    checked, skipped = sum(report.checked.values()), sum(report.skipped.values())
    assert checked >= 9 * skipped, str(report)


@pytest.mark.xfail(strict=True, reason=(
    "a 1e-3 step moves some LeakyReLU and |.| inputs across zero, so the central "
    "difference straddles a kink; away from kinks gradients agree at h=1e-5"))
def test_generator_loss_gradients_h1e3():
    worst = 0.0
    for seed in range(3):
        net, build = _generator_fixture(seed, 16)
        worst = max(worst, ad.grad_check(build, net.params, seed=seed, h=1e-3, max_elements=3).max_error)
    assert worst <= 1e-3
