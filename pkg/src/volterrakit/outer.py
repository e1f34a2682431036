"""Outer convolution of a kernel with a list of kernels.

For G of order n (rank n*m) and kernels H_1..H_n, each H_i made of r_i
slot groups of m axes,

    (G (*)_s {H_1..H_n})(k) = sum_tau G(tau) prod_i H_i(k_i - s*tau_i)

where tau_i is subtracted from every slot group of k_i.  Each output axis
has extent ``c + (zG - 1) * s`` (c the H axis extent, zG the matching G
extent).  The stride s is the stride of the inner (H) layer.
"""
import math

import numpy as np

from . import kernels
from .tensor import as_tensor


def _split(G, Hs, m):
    G = as_tensor(G)
    Hs = [as_tensor(h) for h in Hs]
    if G.ndim != len(Hs) * m:
        raise ValueError(f"G has rank {G.ndim}; {len(Hs)} kernels of dim {m} need {len(Hs) * m}")
    for h in Hs:
        if h.ndim % m or h.ndim == 0:
            raise ValueError(f"kernel rank {h.ndim} is not a positive multiple of {m}")
    return G, Hs


def outer_conv_shape(g_shape, h_shapes, stride=1, m=1):
    """Result shape of ``outer_conv`` without computing it."""
    shape = []
    for i, hs in enumerate(h_shapes):
        for a, c in enumerate(hs):
            shape.append(c + (g_shape[i * m + a % m] - 1) * stride)
    return tuple(shape)


def outer_conv(G, Hs, stride=1, m=1):
    """Outer convolution ``G (*)_stride {H_1, ..., H_n}``."""
    G, Hs = _split(G, Hs, m)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    shape = outer_conv_shape(G.shape, [h.shape for h in Hs], stride, m)
    result = np.zeros(math.prod(shape))
    if result.size == 0:
        return result.reshape(shape)
    rstrides = np.array([math.prod(shape[a + 1:]) for a in range(len(shape))], dtype=np.int64)

    product = Hs[0]
    for h in Hs[1:]:
        product = np.multiply.outer(product, h)
    grid = np.indices(product.shape).reshape(product.ndim, -1)
    offsets = rstrides @ grid

    # per G axis, the summed result strides of the axes it shifts
    shift = np.zeros(G.ndim, dtype=np.int64)
    axis = 0
    for i, h in enumerate(Hs):
        for a in range(h.ndim):
            shift[i * m + a % m] += rstrides[axis]
            axis += 1
    nz = np.nonzero(G)
    weights = G[nz]
    bases = stride * (np.stack(nz, axis=1).astype(np.int64) @ shift) if weights.size \
        else np.zeros(0, dtype=np.int64)
    kernels.outer_accumulate(result, product, offsets, weights, bases)
    return result.reshape(shape)


def oconv_diag(g, Hs, stride=1):
    """``diag(n, g) (*)_stride {H_1..H_n}`` without forming the diagonal.

    Equals sum_k g(k) (x)_i H_i shifted by stride*k on every axis.
    """
    g = as_tensor(g)
    if g.ndim != 1:
        raise ValueError("oconv_diag expects a 1-D g")
    Hs = [as_tensor(h) for h in Hs]
    product = Hs[0]
    for h in Hs[1:]:
        product = np.multiply.outer(product, h)
    z = g.shape[0]
    shape = tuple(c + (z - 1) * stride for c in product.shape)
    out = np.zeros(shape)
    for k in range(z):
        if g[k] == 0:
            continue
        sl = tuple(slice(stride * k, stride * k + c) for c in product.shape)
        out[sl] += g[k] * product
    return out


def sum_axes(t, axes):
    """Sum out the given axes (the marginalization over scalar slots)."""
    return as_tensor(t).sum(axis=tuple(axes))


def is_scalar_slot(h):
    return np.ndim(h) == 0


def outer_conv_marginal(G, slots, stride=1, m=1):
    """Outer convolution with scalar slots summed out.

    Entries of ``slots`` that are Python or 0-d scalars stand for constant
    signals.  The result equals forming each scalar as a length-1 kernel,
    taking ``outer_conv`` and summing the corresponding axes, but the
    scalar slots are contracted into G first so the full tensor is never
    built.  With every slot scalar the result is a 0-d array.
    """
    G = as_tensor(G)
    if G.ndim != len(slots) * m:
        raise ValueError(f"G has rank {G.ndim}; {len(slots)} slots of dim {m} need {len(slots) * m}")
    reduced = G
    kept = []
    # contract from the last slot backwards so earlier axis numbers stay put
    for i in range(len(slots) - 1, -1, -1):
        h = slots[i]
        if is_scalar_slot(h):
            reduced = float(h) * reduced.sum(axis=tuple(range(i * m, (i + 1) * m)))
        else:
            kept.append(as_tensor(h))
    kept.reverse()
    if not kept:
        return np.asarray(reduced, dtype=np.float64)
    return outer_conv(reduced, kept, stride, m)
