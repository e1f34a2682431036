"""Order-n (Volterra) convolution and Volterra operators.

Convolution is minus-type.  For a kernel of per-axis extent z, stride s and
zero padding p, output index t reads the inputs at

    s*t + (z - 1) - p - tau        for every kernel tap tau,

so ``padding=0`` gives the valid region and ``padding=z-1`` the full one.
Output extent per axis is ``(L + 2p - z) // s + 1``.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .tensor import as_tensor


@dataclass(frozen=True)
class ConvGeometry:
    """Stride and zero padding shared by all signal axes.

    ``padding`` is an int, a per-axis tuple, or one of ``"valid"`` /
    ``"full"`` (p = 0 and p = z - 1).
    """

    stride: int = 1
    padding: object = 0

    def __post_init__(self):
        if int(self.stride) < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if isinstance(self.padding, str):
            if self.padding not in ("valid", "full"):
                raise ValueError(f"unknown padding {self.padding!r}")
        elif np.any(np.asarray(self.padding) < 0):
            raise ValueError(f"padding must be non-negative, got {self.padding}")

    def pads(self, extents):
        """Resolve padding to one int per axis for kernel ``extents``."""
        extents = tuple(extents)
        if self.padding == "valid":
            return (0,) * len(extents)
        if self.padding == "full":
            return tuple(z - 1 for z in extents)
        if np.ndim(self.padding) == 0:
            return (int(self.padding),) * len(extents)
        pads = tuple(int(p) for p in self.padding)
        if len(pads) != len(extents):
            raise ValueError("per-axis padding does not match the signal rank")
        return pads

    def output_shape(self, signal_shape, extents):
        pads = self.pads(extents)
        out = tuple((L + 2 * p - z) // self.stride + 1
                    for L, p, z in zip(signal_shape, pads, extents))
        if any(o < 1 for o in out):
            raise ValueError(
                f"empty output: signal {tuple(signal_shape)}, kernel {tuple(extents)}, "
                f"padding {pads}, stride {self.stride}")
        return out


VALID = ConvGeometry()


def _group_extents(shape, n, m):
    if len(shape) != n * m:
        raise ValueError(f"kernel rank {len(shape)} != order {n} x signal dim {m}")
    return tuple(max(shape[i * m + d] for i in range(n)) for d in range(m))


def _extend(kernel, n, extents):
    """Zero-extend every slot group of ``kernel`` to ``extents`` at the tail."""
    target = tuple(extents) * n
    if kernel.shape == target:
        return kernel
    out = np.zeros(target)
    out[tuple(slice(0, e) for e in kernel.shape)] = kernel
    return out


def _gather_plan(signal_shape, extents, pads, stride, batch):
    """Flat offsets into the padded, batch-stacked signal buffer."""
    padded = tuple(L + 2 * p for L, p in zip(signal_shape, pads))
    out_shape = tuple((L + 2 * p - z) // stride + 1
                      for L, p, z in zip(signal_shape, pads, extents))
    strides = np.array([math.prod(padded[d + 1:]) for d in range(len(padded))],
                       dtype=np.int64)
    size = math.prod(padded)
    out_idx = np.indices(out_shape).reshape(len(out_shape), -1).T
    base = (out_idx * stride + (np.array(extents) - 1)) @ strides
    base = (np.arange(batch, dtype=np.int64)[:, None] * size + base[None, :]).reshape(-1)
    taps = np.indices(extents).reshape(len(extents), -1).T @ strides
    return base, taps.astype(np.int64), out_shape


def _convolve(kernel, signals, geometry, m, extents=None):
    """Shared core of ``conv_order_n`` and ``volterra_apply``.

    ``signals`` all share one shape, optionally with a leading batch axis
    (detected as ndim == m + 1).
    """
    n = len(signals)
    kernel = as_tensor(kernel)
    group = _group_extents(kernel.shape, n, m)
    extents = group if extents is None else tuple(extents)
    kernel = _extend(kernel, n, extents)
    signals = [as_tensor(s) for s in signals]
    shape = signals[0].shape
    if any(s.shape != shape for s in signals):
        raise ValueError("all signals must share one shape")
    batched = len(shape) == m + 1
    if len(shape) != m and not batched:
        raise ValueError(f"signal rank {len(shape)} incompatible with signal dim {m}")
    batch = shape[0] if batched else 1
    spatial = shape[1:] if batched else shape
    pads = geometry.pads(extents)
    out_shape = geometry.output_shape(spatial, extents)
    base, taps, _ = _gather_plan(spatial, extents, pads, geometry.stride, batch)
    width = [(0, 0)] * (1 if batched else 0) + [(p, p) for p in pads]
    stacked = np.stack([np.pad(s, width).reshape(-1) for s in signals])
    out = kernels.contract_windows(kernel, stacked, base, taps, n)
    return out.reshape(((batch,) if batched else ()) + out_shape)


def conv_order_n(kernel, signals, geometry=VALID):
    """Order-n convolution ``kernel * {x_1, ..., x_n}``.

    ``kernel`` has rank n*m for m-dim signals; slot i of the kernel pairs
    with ``signals[i]``.  Slot groups with smaller extents are zero-extended
    at the tail to the per-axis maximum.
    """
    if not signals:
        raise ValueError("order-0 terms have no signals; use volterra_apply")
    kernel = as_tensor(kernel)
    m = as_tensor(signals[0]).ndim
    if kernel.ndim % m:
        raise ValueError("kernel rank is not a multiple of the signal rank")
    if kernel.ndim // m != len(signals):
        raise ValueError(f"kernel of order {kernel.ndim // m} given {len(signals)} signals")
    return _convolve(kernel, signals, geometry, m)


def conv1(h, x, geometry=VALID):
    """First-order convolution ``h * x``."""
    return conv_order_n(h, [x], geometry)


def elementwise_power(x, n):
    return as_tensor(x) ** int(n)


@dataclass
class VolterraOperator:
    """Truncated Volterra series: kernels[0] is the scalar (or output-shaped)
    order-0 term, kernels[n] the order-n kernel of rank n*m.

    All kernels with n >= 1 are zero-extended at the tail to one common
    per-axis extent, which fixes the tap alignment for every order.
    """

    kernels: list
    geometry: ConvGeometry = field(default_factory=ConvGeometry)
    signal_dim: int = 1

    def __post_init__(self):
        if not self.kernels:
            raise ValueError("a Volterra operator needs at least the order-0 term")
        m = self.signal_dim
        ks = [as_tensor(k) for k in self.kernels]
        higher = [(n, k) for n, k in enumerate(ks) if n >= 1]
        for n, k in higher:
            if k.ndim != n * m:
                raise ValueError(f"order-{n} kernel has rank {k.ndim}, expected {n * m}")
        if higher:
            extent = tuple(max(_group_extents(k.shape, n, m)[d] for n, k in higher)
                           for d in range(m))
        else:
            extent = (1,) * m
        self.extent = extent
        self.kernels = [ks[0]] + [_extend(k, n, extent) for n, k in higher]

    @property
    def order(self):
        return len(self.kernels) - 1

    def output_shape(self, signal_shape):
        return self.geometry.output_shape(signal_shape, self.extent)

    def kernel(self, n):
        """Order-n kernel, or zeros if n exceeds the truncation order."""
        if n <= self.order:
            return self.kernels[n]
        return np.zeros(self.extent * n)

    def __call__(self, x):
        return volterra_apply(self, x)


def volterra_apply(op, x):
    """Evaluate ``sum_n H_n * x^n`` for a signal or a batch of signals."""
    x = as_tensor(x)
    m = op.signal_dim
    if x.ndim not in (m, m + 1):
        raise ValueError(f"signal rank {x.ndim} incompatible with signal dim {m}")
    spatial = x.shape[-m:]
    out_shape = op.output_shape(spatial)
    if x.ndim == m + 1:
        out_shape = (x.shape[0],) + out_shape
    y = np.broadcast_to(op.kernels[0], out_shape).astype(np.float64)
    for n in range(1, op.order + 1):
        k = op.kernels[n]
        if not np.any(k):
            continue
        y = y + _convolve(k, [x] * n, op.geometry, m, op.extent)
    return y
