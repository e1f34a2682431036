"""Conversion of 1-D convolutional networks into Volterra operators.

Activations are replaced by truncated Taylor polynomials.  A polynomial
activation is itself a Volterra operator with kernels ``a_k * ones((1,)*k)``,
so every layer becomes an operator and the stack is fused with
``combine_nm``.
"""
import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .algebra import combine_nm, composed_geometry
from .conv import ConvGeometry, VolterraOperator, conv1
from .outer import oconv_diag, outer_conv, outer_conv_marginal
from .tensor import as_tensor, diag_embed, read_vten

MAX_TAYLOR_ORDER = 9
ACTIVATIONS = ("sigmoid", "tanh", "softplus_relu")


# --- Taylor coefficients -----------------------------------------------------

def _poly_deriv(p):
    return [k * c for k, c in enumerate(p)][1:] or [Fraction(0)]


def _poly_mul(p, q):
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] += a * b
    return out


def _poly_eval(p, v):
    acc = 0
    for c in reversed(p):
        acc = acc * v + c
    return acc


def _derivative_polys(seed, chain, count):
    """Polynomials P_k with f^(k) = P_k(f) when f' = chain(f)."""
    polys = [seed]
    for _ in range(count):
        polys.append(_poly_mul(_poly_deriv(polys[-1]), chain))
    return polys


_SIGMOID = ([Fraction(0), Fraction(1)], [Fraction(0), Fraction(1), Fraction(-1)])
_TANH = ([Fraction(0), Fraction(1)], [Fraction(1), Fraction(0), Fraction(-1)])


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(t, dtype=np.float64)))


@dataclass(frozen=True)
class ActivationTaylor:
    """Truncated Taylor expansion of an activation about ``center``.

    ``coefficients[k]`` multiplies (t - center)**k.
    """

    kind: str
    center: float
    coefficients: tuple
    alpha_relu: float = 10.0

    @property
    def order(self):
        return len(self.coefficients) - 1

    def function(self, t):
        """The activation itself."""
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "sigmoid":
            return _sigmoid(t)
        if self.kind == "tanh":
            return np.tanh(t)
        b = self.alpha_relu
        return np.logaddexp(0.0, b * t) / b

    def taylor(self, t):
        d = np.asarray(t, dtype=np.float64) - self.center
        return sum(c * d ** k for k, c in enumerate(self.coefficients))

    def power_coefficients(self):
        """Coefficients of the same polynomial in powers of t."""
        a = -self.center
        return tuple(
            sum(c * math.comb(k, j) * a ** (k - j)
                for k, c in enumerate(self.coefficients) if k >= j)
            for j in range(self.order + 1))


def activation_taylor(kind, center=0.0, order=5, alpha_relu=10.0):
    """Taylor coefficients c_0..c_order of an activation about ``center``.

    Derivatives come from exact polynomial recurrences (sigma' = s(1-s),
    tanh' = 1-T^2); at centre 0 the arithmetic is exact rationals.
    ``softplus_relu`` is log(1+exp(beta t))/beta with beta = alpha_relu.
    """
    if kind not in ACTIVATIONS:
        raise ValueError(f"unknown activation {kind!r}; have {ACTIVATIONS}")
    if not 1 <= order <= MAX_TAYLOR_ORDER:
        raise ValueError(f"Taylor order must be in 1..{MAX_TAYLOR_ORDER}")
    center = float(center)
    if kind == "sigmoid":
        s = Fraction(1, 2) if center == 0 else float(_sigmoid(center))
        polys = _derivative_polys(*_SIGMOID, order)
        derivs = [_poly_eval(p, s) for p in polys]
    elif kind == "tanh":
        T = Fraction(0) if center == 0 else math.tanh(center)
        polys = _derivative_polys(*_TANH, order)
        derivs = [_poly_eval(p, T) for p in polys]
    else:
        b = float(alpha_relu)
        if b <= 0:
            raise ValueError("alpha_relu must be positive")
        s = Fraction(1, 2) if center == 0 else float(_sigmoid(b * center))
        polys = _derivative_polys(*_SIGMOID, max(order - 1, 0))
        derivs = [float(np.logaddexp(0.0, b * center) / b)]
        derivs += [b ** (k - 1) * _poly_eval(polys[k - 1], s) for k in range(1, order + 1)]
    coeffs = tuple(float(d / math.factorial(k)) for k, d in enumerate(derivs))
    return ActivationTaylor(kind, center, coeffs, float(alpha_relu))


def activation_operator(act):
    """Pointwise polynomial as a Volterra operator of extent 1."""
    a = act.power_coefficients()
    return VolterraOperator([np.asarray(a[0])] + [c * np.ones((1,) * k)
                                                  for k, c in enumerate(a) if k])


# --- single blocks -----------------------------------------------------------

def _resolved(z, geometry):
    geometry = geometry or ConvGeometry()
    return z, geometry.stride, geometry.pads((z,))[0]


def conv_act_conv(g, h, act, order=None, h_geometry=None, g_geometry=None):
    """Volterra operator of ``g * act(h * x)`` with the activation truncated.

    Order-k kernel: sum_{n>=k} c_n C(n,k) (-center)^(n-k) times the
    outer convolution of diag(n, g) with k copies of h, the remaining
    n-k constant slots summed out.
    """
    g, h = as_tensor(g), as_tensor(h)
    if g.ndim != 1 or h.ndim != 1:
        raise ValueError("conv_act_conv takes 1-D kernels")
    N = act.order if order is None else int(order)
    cap = 5 if act.center == 0 else 4
    if not 0 <= N <= min(cap, act.order):
        raise ValueError(f"order {N} outside 0..{min(cap, act.order)} for centre {act.center}")
    zh, sh, ph = _resolved(h.shape[0], h_geometry)
    zg, sg, pg = _resolved(g.shape[0], g_geometry)
    z, s, p = composed_geometry([(zh, sh, ph), (zg, sg, pg)])
    c = act.coefficients
    shift = -act.center
    kernels = [np.asarray(sum(c[n] * shift ** n for n in range(N + 1)) * g.sum())]
    for k in range(1, N + 1):
        acc = np.zeros((z,) * k)
        for n in range(k, N + 1):
            if c[n] == 0:
                continue
            if n == k:
                term = oconv_diag(g, [h] * k, stride=sh)
            else:
                term = outer_conv_marginal(diag_embed(n, g), [h] * k + [shift] * (n - k), sh)
            acc += c[n] * math.comb(n, k) * term
        kernels.append(acc)
    return VolterraOperator(kernels, ConvGeometry(stride=s, padding=p))


def _shift_embed(op, extent, offset):
    """Re-express ``op`` in a wider extent, taps moved by ``offset``."""
    kernels = [op.kernels[0]]
    for n in range(1, op.order + 1):
        out = np.zeros((extent,) * n)
        out[tuple(slice(offset, offset + op.extent[0]) for _ in range(n))] = op.kernels[n]
        kernels.append(out)
    return kernels


def _add_kernels(a, b):
    n = max(len(a), len(b))
    out = []
    for k in range(n):
        if k >= len(a):
            out.append(b[k])
        elif k >= len(b):
            out.append(a[k])
        else:
            out.append(a[k] + b[k])
    return out


def residual_adjust(op):
    """Operator of ``x -> op(x) + x``.

    The identity is placed at tap z-1-p of the order-one kernel on every
    axis, the tap that reads x at s*t; with stride 1 and p = (z-1)/2 the
    output is aligned with the input.
    """
    z = op.extent
    pads = op.geometry.pads(z)
    origin = tuple(e - 1 - p for e, p in zip(z, pads))
    if any(o < 0 for o in origin):
        raise ValueError("padding exceeds kernel extent - 1; no tap reads x at s*t")
    kernels = list(op.kernels) if op.order >= 1 else [op.kernels[0], np.zeros(z)]
    h1 = kernels[1].copy()
    h1[origin] += 1.0
    kernels[1] = h1
    return VolterraOperator(kernels, op.geometry, op.signal_dim)


def _centre_pad(h, extent):
    extra = extent - h.shape[0]
    if extra % 2:
        raise ValueError("branch extents must share parity to align at the centre")
    return np.pad(h, (extra // 2, extra // 2))


def inception_merge(g, branches):
    """Kernel of ``g * (sum_i h_i * x)`` for parallel branches.

    Branches are zero-padded to the longest extent, aligned at their centre
    (the alignment of same-padded branches with p_i = (z_i - 1)/2), summed,
    and composed with g.  The merged branch layer has padding (Z-1)/2.
    """
    branches = [as_tensor(h) for h in branches]
    if not branches or any(h.ndim != 1 for h in branches):
        raise ValueError("need at least one 1-D branch kernel")
    Z = max(h.shape[0] for h in branches)
    merged = sum(_centre_pad(h, Z) for h in branches)
    return outer_conv(as_tensor(g), [merged])


def fc_as_conv(W, bias=None):
    """Fully connected layer as one valid convolution per output row.

    Row i becomes the flipped kernel W[i, ::-1]; convolving it over an input
    of length len(W[i]) yields the single value W[i] @ x (+ bias[i]).
    """
    W = as_tensor(W)
    if W.ndim != 2:
        raise ValueError("W must be a matrix")
    b = np.zeros(W.shape[0]) if bias is None else np.broadcast_to(as_tensor(bias), W.shape[:1])
    return [(W[i, ::-1].copy(), float(b[i])) for i in range(W.shape[0])]


# --- networks ----------------------------------------------------------------

@dataclass
class Conv1D:
    kernel: np.ndarray  # (out_channels, in_channels, extent)
    stride: int = 1
    padding: int = 0
    bias: np.ndarray = None

    def __post_init__(self):
        k = as_tensor(self.kernel)
        if k.ndim == 1:
            k = k[None, None]
        if k.ndim != 3:
            raise ValueError("conv kernel must be (z,) or (out, in, z)")
        self.kernel = k
        self.bias = np.zeros(k.shape[0]) if self.bias is None else \
            np.broadcast_to(as_tensor(self.bias), k.shape[:1]).copy()


@dataclass
class Activation:
    taylor: ActivationTaylor


@dataclass
class Residual:
    layers: list


@dataclass
class Inception:
    g: np.ndarray
    branches: list
    stride: int = 1
    padding: int = 0


@dataclass
class FullyConnected:
    weights: np.ndarray
    bias: np.ndarray = None


@dataclass
class Network:
    layers: list = field(default_factory=list)
    in_channels: int = 1


def _forward(layers, x):
    for layer in layers:
        if isinstance(layer, Conv1D):
            geo = ConvGeometry(layer.stride, layer.padding)
            x = np.stack([
                sum(conv1(layer.kernel[o, u], x[u], geo) for u in range(x.shape[0]))
                + layer.bias[o] for o in range(layer.kernel.shape[0])])
        elif isinstance(layer, Activation):
            x = layer.taylor.function(x)
        elif isinstance(layer, Residual):
            y = _forward(layer.layers, x)
            if y.shape != x.shape:
                raise ValueError("residual branch changes the signal shape")
            x = y + x
        elif isinstance(layer, Inception):
            if x.shape[0] != 1:
                raise ValueError("inception blocks take a single channel")
            u = sum(conv1(h, x[0], ConvGeometry(padding=(len(h) - 1) // 2))
                    for h in layer.branches)
            x = conv1(layer.g, u, ConvGeometry(layer.stride, layer.padding))[None]
        elif isinstance(layer, FullyConnected):
            W = as_tensor(layer.weights)
            b = 0.0 if layer.bias is None else as_tensor(layer.bias)
            x = (W @ x.reshape(-1) + b)[:, None]
        else:
            raise TypeError(f"unsupported layer {type(layer).__name__}")
    return x


def forward(net, x):
    """Run the exact network; returns (channels, length)."""
    x = as_tensor(x)
    if x.ndim == 1:
        x = x[None]
    if x.shape[0] != net.in_channels:
        raise ValueError(f"expected {net.in_channels} input channels")
    return _forward(net.layers, x)


def _linear_op(kernel, bias, stride, padding):
    return VolterraOperator([np.asarray(float(bias)), as_tensor(kernel)],
                            ConvGeometry(stride=stride, padding=padding))


def _sum_ops(ops):
    kernels = ops[0].kernels
    for op in ops[1:]:
        if op.geometry != ops[0].geometry or op.extent != ops[0].extent:
            raise ValueError("cannot add operators with different geometry")
        kernels = _add_kernels(kernels, op.kernels)
    return VolterraOperator(kernels, ops[0].geometry)


def _apply_linear(state, kernels_by_input, biases, stride, padding, order):
    out = []
    for o, row in enumerate(kernels_by_input):
        parts = [combine_nm(_linear_op(k, biases[o] if u == 0 else 0.0, stride, padding),
                            state[u], order) for u, k in enumerate(row)]
        out.append(_sum_ops(parts))
    return out


def _geometry(op):
    return op.extent[0], op.geometry.stride, op.geometry.pads(op.extent)[0]


def _convert(layers, state, order, input_length):
    for layer in layers:
        if isinstance(layer, Conv1D):
            if layer.kernel.shape[1] != len(state):
                raise ValueError("conv input channels do not match the network")
            state = _apply_linear(state, layer.kernel, layer.bias,
                                  layer.stride, layer.padding, order)
        elif isinstance(layer, Activation):
            act = activation_operator(layer.taylor)
            state = [combine_nm(act, op, order) for op in state]
        elif isinstance(layer, Residual):
            inner = _convert(layer.layers, state, order, input_length)
            if len(inner) != len(state):
                raise ValueError("residual branch changes the channel count")
            zv, sv, pv = _geometry(state[0])
            Z, S, P = _geometry(inner[0])
            s_in, z_in, p_in = S // sv, (Z - zv) // sv + 1, (P - pv) // sv
            if s_in != 1 or 2 * p_in != z_in - 1:
                raise ValueError("residual branch must preserve length (stride 1, same padding)")
            offset = sv * (z_in - 1 - p_in)
            state = [VolterraOperator(_add_kernels(i.kernels, _shift_embed(v, Z, offset)),
                                      i.geometry) for i, v in zip(inner, state)]
        elif isinstance(layer, Inception):
            if len(state) != 1:
                raise ValueError("inception blocks take a single channel")
            K = inception_merge(layer.g, layer.branches)
            Zh = max(len(h) for h in layer.branches)
            _, s, p = composed_geometry([(Zh, 1, (Zh - 1) // 2),
                                         (len(layer.g), layer.stride, layer.padding)])
            state = [combine_nm(_linear_op(K, 0.0, s, p), state[0], order)]
        elif isinstance(layer, FullyConnected):
            if input_length is None:
                raise ValueError("a fully connected layer needs input_length")
            L = state[0].output_shape((input_length,))[0]
            W = as_tensor(layer.weights)
            if W.shape[1] != L * len(state):
                raise ValueError(f"FC expects {W.shape[1]} inputs, network gives {L * len(state)}")
            rows = [[W[i, c * L:(c + 1) * L][::-1] for c in range(len(state))]
                    for i in range(W.shape[0])]
            bias = np.zeros(W.shape[0]) if layer.bias is None else \
                np.broadcast_to(as_tensor(layer.bias), W.shape[:1])
            state = _apply_linear(state, rows, bias, 1, 0, order)
        else:
            raise TypeError(f"unsupported layer {type(layer).__name__}")
    return state


def network_to_volterra_channels(net, order, input_length=None):
    """One Volterra operator per output channel, truncated at ``order``."""
    if order < 0:
        raise ValueError("order must be non-negative")
    _check_fc_last(net.layers)
    identity = VolterraOperator([np.asarray(0.0), np.ones(1)])
    return _convert(net.layers, [identity] * net.in_channels, order, input_length)


def network_to_volterra(net, order, input_length=None):
    """Volterra operator of a single-output-channel network."""
    ops = network_to_volterra_channels(net, order, input_length)
    if len(ops) != 1:
        raise ValueError(f"network has {len(ops)} output channels; "
                         "use network_to_volterra_channels")
    return ops[0]


# --- JSON --------------------------------------------------------------------

def _array(value, root):
    if isinstance(value, str):
        if not value.startswith("@"):
            raise ValueError(f"tensor reference must start with '@': {value!r}")
        return read_vten(os.path.join(root, value[1:]))
    return as_tensor(value)


_DYNAMIC = ("batchnorm", "batch_norm", "maxpool", "max_pool")


def _first(spec, *keys):
    for k in keys:
        if k in spec:
            return spec[k]
    raise KeyError(f"layer needs one of {keys}")


def _layer(spec, root):
    kind = spec.get("type")
    if kind in _DYNAMIC:
        raise ValueError(f"{kind} layers need input-dependent (dynamic) Volterra kernels, "
                         "which a fixed-kernel operator cannot represent")
    if kind == "conv1d":
        return Conv1D(_array(spec["kernel"], root), int(spec.get("stride", 1)),
                      int(spec.get("pad", spec.get("padding", 0))),
                      None if "bias" not in spec else _array(spec["bias"], root))
    if kind == "activation":
        return Activation(activation_taylor(spec["kind"], spec.get("center", 0.0),
                                            int(spec.get("order", 5)),
                                            spec.get("alpha_relu", 10.0)))
    if kind == "residual":
        return Residual([_layer(s, root) for s in _first(spec, "inner", "layers")])
    if kind == "inception":
        return Inception(_array(spec["g"], root), [_array(b, root) for b in spec["branches"]],
                         int(spec.get("stride", 1)), int(spec.get("padding", 0)))
    if kind == "fc":
        return FullyConnected(_array(_first(spec, "W", "weights"), root),
                              None if "bias" not in spec else _array(spec["bias"], root))
    raise ValueError(f"unsupported layer type {kind!r}")


def network_from_dict(spec, root="."):
    return Network([_layer(s, root) for s in spec["layers"]],
                   int(spec.get("in_channels", 1)))


def _check_fc_last(layers):
    for i, layer in enumerate(layers):
        if isinstance(layer, FullyConnected) and i != len(layers) - 1:
            raise ValueError("a fully connected layer must be the final layer")
        if isinstance(layer, Residual):
            if any(isinstance(l, FullyConnected) for l in layer.layers):
                raise ValueError("a fully connected layer must be the final layer")
            _check_fc_last(layer.layers)


def load_network(path):
    """Read a network description; '@name.vten' strings load tensors
    relative to the JSON file."""
    with open(path) as fh:
        spec = json.load(fh)
    return network_from_dict(spec, os.path.dirname(os.path.abspath(path)))
