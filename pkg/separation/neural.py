"""
Neural Module
=============

Bidirectional LSTM stack with a dense output head, written directly in numpy.

Forward evaluation keeps a cache of every gate activation so that ``backward``
can run exact backpropagation through time in both directions. Gate order
inside every 4H block is (input, forget, cell candidate, output).
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from .dsp_core import Domain, FeatureMatrix
from .errors import NumericalOverflowError, SeparationError, ShapeMismatchError

logger = logging.getLogger(__name__)

FORGET_BIAS = 1.0

# Desk-scale and full-scale architectures (layers, cells per direction)
DESK_SCALE = (2, 64)
LARGE_SCALE = (4, 512)

_EPS = np.finfo(np.float64).eps
_TINY = np.finfo(np.float64).tiny


class HeadKind(Enum):
    """Output nonlinearity of the dense head"""
    SIGMOID = "sigmoid"
    SOFTPLUS = "softplus"


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def softplus(x: np.ndarray) -> np.ndarray:
    """max(x, 0) + ln(1 + exp(-|x|)), finite for any finite x."""
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def head_activation(head: HeadKind, pre: np.ndarray) -> np.ndarray:
    """Head nonlinearity held inside the open interval (0, 1) for sigmoid, (0, inf) for softplus."""
    if head is HeadKind.SIGMOID:
        return np.clip(sigmoid(pre), _EPS, 1.0 - _EPS)
    return np.maximum(softplus(pre), _TINY)


@dataclass
class LSTMWeights:
    """One LSTM direction: W (4H x D), U (4H x H), b (4H)."""
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    @property
    def cell_count(self) -> int:
        return int(self.U.shape[1])

    def copy(self) -> "LSTMWeights":
        return LSTMWeights(self.W.copy(), self.U.copy(), self.b.copy())


@dataclass
class ModelParameters:
    """
    All weights of the bidirectional stack plus the output head.

    ``forward_weights[l]`` / ``backward_weights[l]`` hold layer ``l``; the head
    maps the top layer's concatenated [forward, backward] hidden state
    (2 x cell_count) to ``output_dim``.
    """
    layer_count: int
    cell_count: int
    input_dim: int
    output_dim: int
    forward_weights: List[LSTMWeights]
    backward_weights: List[LSTMWeights]
    head_W: np.ndarray
    head_b: np.ndarray

    def __post_init__(self):
        expected = dict(tensor_shapes(self.layer_count, self.cell_count, self.input_dim, self.output_dim))
        for name, tensor in self.named_tensors():
            if tensor.shape != expected[name]:
                raise ShapeMismatchError(expected[name], tensor.shape, f"{name} shape")
            if not np.all(np.isfinite(tensor)):
                raise NumericalOverflowError(f"parameter {name}")

    def named_tensors(self) -> List[Tuple[str, np.ndarray]]:
        """Every tensor in the fixed checkpoint order (references, not copies)."""
        tensors = []
        for layer in range(self.layer_count):
            for tag, weights in (("fwd", self.forward_weights[layer]), ("bwd", self.backward_weights[layer])):
                tensors.append((f"layer{layer}.{tag}.W", weights.W))
                tensors.append((f"layer{layer}.{tag}.U", weights.U))
                tensors.append((f"layer{layer}.{tag}.b", weights.b))
        tensors.append(("head.W", self.head_W))
        tensors.append(("head.b", self.head_b))
        return tensors

    def tensors(self) -> List[np.ndarray]:
        return [tensor for _, tensor in self.named_tensors()]

    @property
    def parameter_count(self) -> int:
        return int(sum(tensor.size for tensor in self.tensors()))

    def copy(self) -> "ModelParameters":
        return from_tensors(self.layer_count, self.cell_count, self.input_dim, self.output_dim,
                            [tensor.copy() for tensor in self.tensors()])

    def zeros_like(self) -> "ModelParameters":
        return from_tensors(self.layer_count, self.cell_count, self.input_dim, self.output_dim,
                            [np.zeros_like(tensor) for tensor in self.tensors()])


def tensor_shapes(layer_count: int, cell_count: int, input_dim: int,
                  output_dim: int) -> List[Tuple[str, Tuple[int, ...]]]:
    """Names and shapes of every parameter tensor, in checkpoint order."""
    shapes = []
    for layer in range(layer_count):
        layer_input = input_dim if layer == 0 else 2 * cell_count
        for tag in ("fwd", "bwd"):
            shapes.append((f"layer{layer}.{tag}.W", (4 * cell_count, layer_input)))
            shapes.append((f"layer{layer}.{tag}.U", (4 * cell_count, cell_count)))
            shapes.append((f"layer{layer}.{tag}.b", (4 * cell_count,)))
    shapes.append(("head.W", (output_dim, 2 * cell_count)))
    shapes.append(("head.b", (output_dim,)))
    return shapes


def from_tensors(layer_count: int, cell_count: int, input_dim: int, output_dim: int,
                 tensors: Sequence[np.ndarray]) -> ModelParameters:
    """Rebuild ModelParameters from a flat tensor list in ``tensor_shapes`` order."""
    shapes = tensor_shapes(layer_count, cell_count, input_dim, output_dim)
    if len(tensors) != len(shapes):
        raise ShapeMismatchError(len(shapes), len(tensors), "tensor count")
    arrays = [np.asarray(t, dtype=np.float64).reshape(shape) for t, (_, shape) in zip(tensors, shapes)]

    forward_weights, backward_weights = [], []
    cursor = 0
    for _ in range(layer_count):
        forward_weights.append(LSTMWeights(*arrays[cursor:cursor + 3]))
        backward_weights.append(LSTMWeights(*arrays[cursor + 3:cursor + 6]))
        cursor += 6
    return ModelParameters(layer_count, cell_count, input_dim, output_dim,
                           forward_weights, backward_weights, arrays[cursor], arrays[cursor + 1])


def init_parameters(layer_count: int, cell_count: int, input_dim: int, output_dim: int,
                    seed: int = 0) -> ModelParameters:
    """
    Draw a fresh parameter set.

    Every weight matrix is uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; biases
    are zero except the forget-gate block, which is set to 1.0.

    Args:
        layer_count: Number of bidirectional layers
        cell_count: LSTM cells per direction
        input_dim: Input feature dimension
        output_dim: Output dimension of the head
        seed: Random seed

    Returns:
        ModelParameters, bit-identical for identical arguments
    """
    for name, value in (("layer_count", layer_count), ("cell_count", cell_count),
                        ("input_dim", input_dim), ("output_dim", output_dim)):
        if int(value) <= 0:
            raise SeparationError(f"{name} must be positive, got {value}")

    rng = np.random.default_rng(seed)
    tensors = []
    for name, shape in tensor_shapes(layer_count, cell_count, input_dim, output_dim):
        if len(shape) == 2:
            bound = 1.0 / np.sqrt(shape[1])
            tensors.append(rng.uniform(-bound, bound, size=shape))
        else:
            bias = np.zeros(shape)
            if not name.startswith("head"):
                bias[cell_count:2 * cell_count] = FORGET_BIAS
            tensors.append(bias)

    params = from_tensors(layer_count, cell_count, input_dim, output_dim, tensors)
    logger.debug(f"Initialized {layer_count}x{cell_count} BiLSTM ({params.parameter_count} parameters, seed={seed})")
    return params


def swap_directions(params: ModelParameters) -> ModelParameters:
    """
    Exchange forward and backward weight sets.

    Input columns of every layer above the first, and of the head, are permuted
    so the swapped model applied to time-reversed input yields the time-reversed
    output of the original model.
    """
    H = params.cell_count

    def permute_columns(matrix: np.ndarray) -> np.ndarray:
        return np.concatenate([matrix[:, H:], matrix[:, :H]], axis=1)

    forward_weights, backward_weights = [], []
    for layer in range(params.layer_count):
        fwd, bwd = params.backward_weights[layer].copy(), params.forward_weights[layer].copy()
        if layer > 0:
            fwd.W = permute_columns(fwd.W)
            bwd.W = permute_columns(bwd.W)
        forward_weights.append(fwd)
        backward_weights.append(bwd)
    return ModelParameters(params.layer_count, params.cell_count, params.input_dim, params.output_dim,
                           forward_weights, backward_weights, permute_columns(params.head_W),
                           params.head_b.copy())


# =============================================================================
# FORWARD PASS
# =============================================================================

@dataclass
class DirectionCache:
    """Activations of one direction of one layer, in processing order."""
    x: np.ndarray
    gates: np.ndarray
    c: np.ndarray
    h: np.ndarray


@dataclass
class ForwardCache:
    """Everything ``backward`` needs from a forward pass."""
    input: np.ndarray
    forward_caches: List[DirectionCache] = field(default_factory=list)
    backward_caches: List[DirectionCache] = field(default_factory=list)
    hidden: Optional[np.ndarray] = None
    pre_head: Optional[np.ndarray] = None
    output: Optional[np.ndarray] = None


def _run_direction(weights: LSTMWeights, x: np.ndarray) -> DirectionCache:
    T, H = x.shape[0], weights.cell_count
    z_in = x @ weights.W.T + weights.b
    gates = np.empty((T, 4 * H))
    c = np.empty((T, H))
    h = np.empty((T, H))
    h_prev = np.zeros(H)
    c_prev = np.zeros(H)
    for t in range(T):
        z = z_in[t] + weights.U @ h_prev
        i = expit(z[:H])
        f = expit(z[H:2 * H])
        g = np.tanh(z[2 * H:3 * H])
        o = expit(z[3 * H:])
        c_prev = f * c_prev + i * g
        h_prev = o * np.tanh(c_prev)
        gates[t, :H], gates[t, H:2 * H], gates[t, 2 * H:3 * H], gates[t, 3 * H:] = i, f, g, o
        c[t] = c_prev
        h[t] = h_prev
    return DirectionCache(x=x, gates=gates, c=c, h=h)


def _as_array(input: Union[FeatureMatrix, np.ndarray]) -> np.ndarray:
    values = input.values if isinstance(input, FeatureMatrix) else np.asarray(input, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeMismatchError("2-D (frames, dims)", values.shape, "network input shape")
    return values


def forward_pass(params: ModelParameters, head: HeadKind, input: Union[FeatureMatrix, np.ndarray]) -> ForwardCache:
    """
    Evaluate the network and keep the activations for ``backward``.

    Args:
        params: Model parameters (read only)
        head: Output nonlinearity
        input: frames x input_dim features

    Returns:
        ForwardCache whose ``output`` is frames x output_dim
    """
    x = _as_array(input)
    if x.shape[1] != params.input_dim:
        raise ShapeMismatchError(params.input_dim, x.shape[1], "input dims")
    if not np.all(np.isfinite(x)):
        raise NumericalOverflowError("network input")

    cache = ForwardCache(input=x)
    layer_input = x
    with np.errstate(over="raise", invalid="raise"):
        try:
            for layer in range(params.layer_count):
                fwd = _run_direction(params.forward_weights[layer], layer_input)
                bwd = _run_direction(params.backward_weights[layer], layer_input[::-1])
                cache.forward_caches.append(fwd)
                cache.backward_caches.append(bwd)
                layer_input = np.concatenate([fwd.h, bwd.h[::-1]], axis=1)
            cache.hidden = layer_input
            cache.pre_head = layer_input @ params.head_W.T + params.head_b
        except FloatingPointError as exc:
            raise NumericalOverflowError(f"forward pass ({exc})") from exc

    cache.output = head_activation(head, cache.pre_head)
    if not np.all(np.isfinite(cache.output)):
        raise NumericalOverflowError("forward pass output")
    return cache


def forward(params: ModelParameters, head: HeadKind, input: Union[FeatureMatrix, np.ndarray],
            domain: Optional[Domain] = None) -> Union[FeatureMatrix, np.ndarray]:
    """
    Per-frame network outputs.

    A FeatureMatrix input yields a FeatureMatrix tagged with ``domain`` (default:
    the input's domain); an array input yields an array.
    """
    output = forward_pass(params, head, input).output
    if isinstance(input, FeatureMatrix):
        tag = domain or input.domain
        return FeatureMatrix(output, tag, frame_hop=input.frame_hop, window_len=input.window_len,
                             sample_rate=input.sample_rate)
    return output


def hidden_sequence(params: ModelParameters, input: Union[FeatureMatrix, np.ndarray]) -> np.ndarray:
    """Top-layer [forward, backward] hidden states, frames x 2H."""
    return forward_pass(params, HeadKind.SIGMOID, input).hidden


# =============================================================================
# BACKWARD PASS
# =============================================================================

def _backprop_direction(weights: LSTMWeights, cache: DirectionCache,
                        dh_ext: np.ndarray) -> Tuple[LSTMWeights, np.ndarray]:
    T, H = cache.h.shape
    gates = cache.gates
    i, f, g, o = gates[:, :H], gates[:, H:2 * H], gates[:, 2 * H:3 * H], gates[:, 3 * H:]
    tc = np.tanh(cache.c)
    c_prev = np.vstack([np.zeros((1, H)), cache.c[:-1]])
    h_prev = np.vstack([np.zeros((1, H)), cache.h[:-1]])

    dZ = np.empty((T, 4 * H))
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        dh = dh_ext[t] + dh_next
        dc = dh * o[t] * (1.0 - tc[t] ** 2) + dc_next
        dZ[t, :H] = dc * g[t] * i[t] * (1.0 - i[t])
        dZ[t, H:2 * H] = dc * c_prev[t] * f[t] * (1.0 - f[t])
        dZ[t, 2 * H:3 * H] = dc * i[t] * (1.0 - g[t] ** 2)
        dZ[t, 3 * H:] = dh * tc[t] * o[t] * (1.0 - o[t])
        dc_next = dc * f[t]
        dh_next = weights.U.T @ dZ[t]

    grads = LSTMWeights(W=dZ.T @ cache.x, U=dZ.T @ h_prev, b=dZ.sum(axis=0))
    return grads, dZ @ weights.W


def backward(params: ModelParameters, head: HeadKind, input: Union[FeatureMatrix, np.ndarray],
             grad_output: np.ndarray, cache: Optional[ForwardCache] = None) -> ModelParameters:
    """
    Exact gradient of a scalar loss with respect to every parameter.

    Args:
        params: Model parameters used in the forward pass
        head: Output nonlinearity
        input: Network input (ignored when ``cache`` is given)
        grad_output: dLoss/dOutput, frames x output_dim
        cache: Forward cache to reuse; recomputed when omitted

    Returns:
        ModelParameters holding the gradients, same layout as ``params``
    """
    if cache is None:
        cache = forward_pass(params, head, input)
    grad_output = np.asarray(grad_output, dtype=np.float64)
    if grad_output.shape != cache.output.shape:
        raise ShapeMismatchError(cache.output.shape, grad_output.shape, "output gradient shape")

    if head is HeadKind.SIGMOID:
        d_pre = grad_output * cache.output * (1.0 - cache.output)
    else:
        d_pre = grad_output * expit(cache.pre_head)

    grads = params.zeros_like()
    grads.head_W[...] = d_pre.T @ cache.hidden
    grads.head_b[...] = d_pre.sum(axis=0)

    H = params.cell_count
    d_layer = d_pre @ params.head_W
    for layer in range(params.layer_count - 1, -1, -1):
        fwd_grads, dx_fwd = _backprop_direction(params.forward_weights[layer],
                                                cache.forward_caches[layer], d_layer[:, :H])
        bwd_grads, dx_bwd_rev = _backprop_direction(params.backward_weights[layer],
                                                    cache.backward_caches[layer], d_layer[::-1, H:])
        grads.forward_weights[layer] = fwd_grads
        grads.backward_weights[layer] = bwd_grads
        d_layer = dx_fwd + dx_bwd_rev[::-1]
    return grads
