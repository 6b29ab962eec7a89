#!/usr/bin/env python3
"""
Tests for the bidirectional LSTM stack: forward values, exact gradients and
parameter initialization.
"""

import numpy as np
import pytest

from separation.dsp_core import Domain, FeatureMatrix
from separation.errors import NumericalOverflowError, SeparationError, ShapeMismatchError
from separation.neural import (
    FORGET_BIAS,
    LARGE_SCALE,
    HeadKind,
    backward,
    forward,
    forward_pass,
    from_tensors,
    init_parameters,
    softplus,
    swap_directions,
    tensor_shapes,
)
from separation.normalization import identity_normalizer
from separation.targets import Objective, TrainingPair, get_method
from separation.training import objective_loss
from tests.gradient_check import numerical_gradient, relative_error

GRADIENT_TOLERANCE = 1e-4


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def reference_direction(W, U, b, xs):
    """Step-by-step LSTM recurrence with each gate computed separately."""
    H = U.shape[1]
    h, c = np.zeros(H), np.zeros(H)
    hs = []
    for x in xs:
        i = _sigmoid(W[0:H] @ x + U[0:H] @ h + b[0:H])
        f = _sigmoid(W[H:2 * H] @ x + U[H:2 * H] @ h + b[H:2 * H])
        g = np.tanh(W[2 * H:3 * H] @ x + U[2 * H:3 * H] @ h + b[2 * H:3 * H])
        o = _sigmoid(W[3 * H:] @ x + U[3 * H:] @ h + b[3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        hs.append(h)
    return np.array(hs)


def reference_forward(params, head, xs):
    layer_input = xs
    for layer in range(params.layer_count):
        fwd = params.forward_weights[layer]
        bwd = params.backward_weights[layer]
        h_fwd = reference_direction(fwd.W, fwd.U, fwd.b, layer_input)
        h_bwd = reference_direction(bwd.W, bwd.U, bwd.b, layer_input[::-1])[::-1]
        layer_input = np.concatenate([h_fwd, h_bwd], axis=1)
    pre = layer_input @ params.head_W.T + params.head_b
    return _sigmoid(pre) if head is HeadKind.SIGMOID else np.log1p(np.exp(pre))


# =============================================================================
# FORWARD
# =============================================================================

def test_zero_network_outputs_constants(rng):
    params = init_parameters(2, 4, 6, 3).zeros_like()
    x = rng.standard_normal((7, 6))
    assert np.all(forward(params, HeadKind.SIGMOID, x) == 0.5)
    np.testing.assert_allclose(forward(params, HeadKind.SOFTPLUS, x), np.log(2.0), rtol=0, atol=1e-15)


def test_forward_matches_reference_recurrence(rng):
    params = init_parameters(2, 4, 6, 3, seed=7)
    x = rng.standard_normal((9, 6))
    for head in HeadKind:
        np.testing.assert_allclose(forward(params, head, x), reference_forward(params, head, x),
                                   atol=1e-9, rtol=0)


def test_forward_is_deterministic(rng):
    params = init_parameters(2, 4, 6, 3, seed=1)
    x = rng.standard_normal((5, 6))
    first = forward(params, HeadKind.SIGMOID, x)
    second = forward(params, HeadKind.SIGMOID, x)
    assert np.array_equal(first, second)


def test_forward_keeps_feature_metadata(rng):
    params = init_parameters(1, 4, 40, 40)
    features = FeatureMatrix(rng.standard_normal((5, 40)), Domain.LOG_FBANK)
    output = forward(params, HeadKind.SIGMOID, features, domain=Domain.FBANK)
    assert isinstance(output, FeatureMatrix)
    assert output.domain is Domain.FBANK and output.frames == 5


def test_initialized_net_stays_in_head_range(rng):
    params = init_parameters(2, 8, 10, 5, seed=3)
    x = rng.standard_normal((20, 10)) * 3.0
    cache = forward_pass(params, HeadKind.SIGMOID, x)
    for direction in cache.forward_caches + cache.backward_caches:
        assert np.all(np.isfinite(direction.h)) and np.all(np.isfinite(direction.c))
    assert np.all((cache.output > 0) & (cache.output < 1))
    assert np.all(forward(params, HeadKind.SOFTPLUS, x) > 0)


def test_forward_errors(rng):
    params = init_parameters(1, 4, 6, 3)
    with pytest.raises(ShapeMismatchError):
        forward(params, HeadKind.SIGMOID, rng.standard_normal((5, 7)))
    bad = rng.standard_normal((5, 6))
    bad[2, 3] = np.inf
    with pytest.raises(NumericalOverflowError, match="numerical overflow"):
        forward(params, HeadKind.SIGMOID, bad)


def test_softplus_is_stable():
    values = softplus(np.array([-1000.0, 0.0, 1000.0]))
    assert values[0] == 0.0
    assert values[1] == pytest.approx(np.log(2.0))
    assert values[2] == 1000.0


def test_heads_stay_inside_their_open_ranges_at_extreme_inputs(rng):
    params = init_parameters(1, 4, 6, 3, seed=8)
    params.head_b[...] = [1e4, -1e4, 0.0]
    x = rng.standard_normal((5, 6))
    masks = forward(params, HeadKind.SIGMOID, x)
    assert np.all((masks > 0.0) & (masks < 1.0))
    assert np.all(masks[:, 0] > 0.5) and np.all(masks[:, 1] < 0.5)
    spectra = forward(params, HeadKind.SOFTPLUS, x)
    assert np.all(spectra > 0.0)
    assert np.all(np.isfinite(spectra))
    for head in HeadKind:
        grads = backward(params, head, x, np.ones((5, 3)))
        assert all(np.all(np.isfinite(t)) for t in grads.tensors())


def test_swapped_directions_on_reversed_input(rng):
    params = init_parameters(3, 4, 6, 3, seed=5)
    x = rng.standard_normal((8, 6))
    original = forward(params, HeadKind.SIGMOID, x)
    swapped = forward(swap_directions(params), HeadKind.SIGMOID, x[::-1])
    np.testing.assert_allclose(swapped[::-1], original, atol=1e-12)


# =============================================================================
# BACKWARD
# =============================================================================

@pytest.mark.parametrize("head", list(HeadKind))
def test_backward_matches_finite_differences(rng, head):
    params = init_parameters(2, 4, 6, 3, seed=11)
    x = rng.standard_normal((5, 6))
    weights = rng.standard_normal((5, 3))

    def loss():
        return float(np.sum(forward(params, head, x) * weights))

    grads = backward(params, head, x, weights)
    for (name, tensor), (_, grad) in zip(params.named_tensors(), grads.named_tensors()):
        numeric = numerical_gradient(loss, tensor)
        assert relative_error(grad, numeric) < GRADIENT_TOLERANCE, name


def _gradient_pair(method_name, rng, dims=6, frames=5):
    method = get_method(method_name)
    noisy = FeatureMatrix(rng.uniform(-3, 1, (frames, dims)), Domain.LOG_FBANK)
    if method.objective is Objective.MASKING:
        target_values = rng.uniform(0, 1, (frames, dims))
    else:
        target_values = rng.uniform(-3, 1, (frames, dims))
    target = FeatureMatrix(target_values, Domain.LOG_FBANK)
    return method, TrainingPair(input=noisy, target=target, config=method, noisy_output=noisy)


@pytest.mark.parametrize("method_name", ["log-fbank masking", "log-fbank mapping", "log-fbank SA"])
def test_objective_gradients_end_to_end(rng, method_name):
    method, pair = _gradient_pair(method_name, rng)
    params = init_parameters(2, 4, 6, 6, seed=2)
    normalizer = identity_normalizer(6, 6 if not method.uses_mask else None)
    x = pair.input.values

    def loss():
        output = forward_pass(params, method.head_kind, x).output
        return objective_loss(method, output, pair, normalizer)[0]

    cache = forward_pass(params, method.head_kind, x)
    _, grad_output = objective_loss(method, cache.output, pair, normalizer)
    grads = backward(params, method.head_kind, x, grad_output, cache=cache)
    for (name, tensor), (_, grad) in zip(params.named_tensors(), grads.named_tensors()):
        numeric = numerical_gradient(loss, tensor)
        assert relative_error(grad, numeric) < GRADIENT_TOLERANCE, f"{method_name}: {name}"


def test_zero_upstream_gradient_gives_zero_gradients(rng):
    params = init_parameters(2, 4, 6, 3)
    x = rng.standard_normal((5, 6))
    grads = backward(params, HeadKind.SOFTPLUS, x, np.zeros((5, 3)))
    assert all(np.all(g == 0) for g in grads.tensors())


def test_gradients_are_linear_in_upstream_gradient(rng):
    params = init_parameters(2, 4, 6, 3, seed=4)
    x = rng.standard_normal((5, 6))
    upstream = rng.standard_normal((5, 3))
    single = backward(params, HeadKind.SIGMOID, x, upstream)
    double = backward(params, HeadKind.SIGMOID, x, 2.0 * upstream)
    for a, b in zip(single.tensors(), double.tensors()):
        np.testing.assert_allclose(b, 2.0 * a, rtol=1e-12, atol=1e-15)


def test_backward_shape_mismatch(rng):
    params = init_parameters(1, 4, 6, 3)
    with pytest.raises(ShapeMismatchError):
        backward(params, HeadKind.SIGMOID, rng.standard_normal((5, 6)), np.zeros((5, 4)))


# =============================================================================
# PARAMETERS
# =============================================================================

def test_init_is_deterministic_per_seed():
    a = init_parameters(2, 4, 6, 3, seed=9)
    b = init_parameters(2, 4, 6, 3, seed=9)
    c = init_parameters(2, 4, 6, 3, seed=10)
    assert all(np.array_equal(x, y) for x, y in zip(a.tensors(), b.tensors()))
    assert not all(np.array_equal(x, y) for x, y in zip(a.tensors(), c.tensors()))


def test_init_ranges_and_biases():
    params = init_parameters(2, 4, 6, 3)
    for name, tensor in params.named_tensors():
        if tensor.ndim == 2:
            assert np.all(np.abs(tensor) <= 1.0 / np.sqrt(tensor.shape[1]))
    for weights in params.forward_weights + params.backward_weights:
        assert np.all(weights.b[4:8] == FORGET_BIAS)
        assert np.all(weights.b[:4] == 0) and np.all(weights.b[8:] == 0)
    assert np.all(params.head_b == 0)


def test_init_rejects_bad_dimensions():
    with pytest.raises(SeparationError):
        init_parameters(0, 4, 6, 3)
    with pytest.raises(SeparationError):
        init_parameters(2, -1, 6, 3)


def test_tensor_order_and_rebuild():
    params = init_parameters(2, 4, 6, 3, seed=1)
    names = [name for name, _ in params.named_tensors()]
    assert names[:6] == ["layer0.fwd.W", "layer0.fwd.U", "layer0.fwd.b",
                         "layer0.bwd.W", "layer0.bwd.U", "layer0.bwd.b"]
    assert names[-2:] == ["head.W", "head.b"]
    assert [shape for _, shape in tensor_shapes(2, 4, 6, 3)][6] == (16, 8)
    rebuilt = from_tensors(2, 4, 6, 3, params.tensors())
    assert all(np.array_equal(x, y) for x, y in zip(rebuilt.tensors(), params.tensors()))
    with pytest.raises(ShapeMismatchError):
        from_tensors(2, 4, 6, 3, params.tensors()[:-1])


@pytest.mark.slow
def test_full_scale_network_constructs_and_runs(rng):
    layers, cells = LARGE_SCALE
    params = init_parameters(layers, cells, 40, 40, seed=0)
    expected = sum(int(np.prod(shape)) for _, shape in tensor_shapes(layers, cells, 40, 40))
    assert params.parameter_count == expected
    assert params.forward_weights[1].W.shape == (4 * cells, 2 * cells)
    output = forward(params, HeadKind.SIGMOID, rng.standard_normal((4, 40)))
    assert output.shape == (4, 40)
    assert np.all(np.isfinite(output))
