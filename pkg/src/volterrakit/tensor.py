"""Dense tensor helpers: deltas, diagonal embedding, symmetrization,
lexicographic flattening, mode-k unfolding, random ensembles and the VTEN
binary format.

Tensors are plain float64 numpy arrays.
"""
import itertools
import math
import struct
from dataclasses import dataclass

import numpy as np

MAX_SYMMETRIZE_ORDER = 5
_FLAT_LIMIT = 2 ** 62


def as_tensor(data):
    """Return ``data`` as a float64 array (no copy when already one)."""
    return np.asarray(data, dtype=np.float64)


def dirac(shape, origin=None):
    """Discrete delta of the given shape.

    ``origin`` defaults to the centre index ``extent // 2`` along each axis.
    """
    shape = tuple(int(e) for e in shape)
    if any(e < 1 for e in shape):
        raise ValueError(f"extents must be positive, got {shape}")
    if origin is None:
        origin = tuple(e // 2 for e in shape)
    origin = tuple(origin)
    if len(origin) != len(shape) or any(not 0 <= o < e for o, e in zip(origin, shape)):
        raise ValueError(f"origin {origin} outside shape {shape}")
    out = np.zeros(shape)
    out[origin] = 1.0
    return out


def diag_embed(order, g):
    """Order-``order`` diagonal tensor with ``g`` on its main diagonal.

    ``g`` is 1-D of length z; the result has shape (z,) * order and
    ``out[t, ..., t] == g[t]``.
    """
    g = as_tensor(g)
    if g.ndim != 1:
        raise ValueError("diag_embed expects a 1-D vector")
    if order < 1:
        raise ValueError("order must be at least 1")
    z = g.shape[0]
    out = np.zeros((z,) * order)
    idx = np.arange(z)
    out[(idx,) * order] = g
    return out


def is_symmetric(t, m=1):
    """Exact invariance under swapping any two adjacent m-dim slot groups."""
    t = as_tensor(t)
    n = t.ndim // m
    for i in range(n - 1):
        axes = list(range(t.ndim))
        a, b = axes[i * m:(i + 1) * m], axes[(i + 1) * m:(i + 2) * m]
        axes[i * m:(i + 2) * m] = b + a
        if t.shape != tuple(t.shape[k] for k in axes):
            return False
        if not np.array_equal(t, t.transpose(axes)):
            return False
    return True


def symmetrize(t, m=1):
    """Average of ``t`` over all permutations of its m-dim slot groups.

    Only slots of identical shape can be permuted; orders above
    ``MAX_SYMMETRIZE_ORDER`` are refused.
    """
    t = as_tensor(t)
    if t.ndim % m:
        raise ValueError("tensor rank is not a multiple of the signal dimension")
    n = t.ndim // m
    if n > MAX_SYMMETRIZE_ORDER:
        raise ValueError(f"symmetrize supports order <= {MAX_SYMMETRIZE_ORDER}")
    if n <= 1:
        return t.copy()
    if len({t.shape[i * m:(i + 1) * m] for i in range(n)}) != 1:
        raise ValueError("all slots must have identical extents")
    acc = np.zeros_like(t)
    for perm in itertools.permutations(range(n)):
        axes = [p * m + d for p in perm for d in range(m)]
        acc += t.transpose(axes)
    acc /= math.factorial(n)
    if m == 1:
        # summation order differs between permuted entries; read every entry
        # from its sorted index so the result is exactly symmetric
        acc = acc[tuple(np.sort(np.indices(t.shape), axis=0))]
    return acc


@dataclass(frozen=True)
class FlattenMap:
    """Injective map from m-dim indices to 1-D indices.

    Built from a signal shape and a kernel shape so that a valid m-dim
    convolution becomes a 1-D convolution of the flattened operands.
    """

    weights: tuple
    extents: tuple

    @property
    def output_length(self):
        return sum((e - 1) * w for e, w in zip(self.extents, self.weights)) + 1

    def index(self, idx):
        return sum(int(i) * w for i, w in zip(idx, self.weights))


def choose_flatten_weights(signal_shape, kernel_shape):
    """Weights w_m = 1, w_k = w_{k+1} * (S_{k+1} + Z_{k+1} - 1)."""
    signal_shape = tuple(int(s) for s in signal_shape)
    kernel_shape = tuple(int(z) for z in kernel_shape)
    if len(signal_shape) != len(kernel_shape) or not signal_shape:
        raise ValueError("signal and kernel shapes must have the same positive rank")
    span = [s + z - 1 for s, z in zip(signal_shape, kernel_shape)]
    weights = [1] * len(span)
    for k in range(len(span) - 2, -1, -1):
        weights[k] = weights[k + 1] * span[k + 1]
    fmap = FlattenMap(tuple(weights), tuple(span))
    if fmap.output_length > _FLAT_LIMIT:
        raise OverflowError("flattened length overflows a 64-bit index")
    return fmap


def flatten(t, fmap):
    """Scatter ``t`` into a 1-D vector using ``fmap``'s weights."""
    t = as_tensor(t)
    if t.ndim != len(fmap.weights):
        raise ValueError("tensor rank does not match the flatten map")
    for k, (e, span) in enumerate(zip(t.shape, fmap.extents)):
        if e > span:
            raise ValueError(f"extent {e} on axis {k} collides under the map (max {span})")
    length = sum((e - 1) * w for e, w in zip(t.shape, fmap.weights)) + 1
    out = np.zeros(length)
    grids = np.indices(t.shape).reshape(t.ndim, -1)
    out[np.tensordot(fmap.weights, grids, axes=1)] = t.reshape(-1)
    return out


def unflatten(v, fmap, shape):
    """Gather a tensor of ``shape`` back out of a flattened vector."""
    v = as_tensor(v)
    grids = np.indices(shape).reshape(len(shape), -1)
    flat = np.tensordot(fmap.weights, grids, axes=1)
    if flat.size and flat.max() >= v.shape[0]:
        raise ValueError("vector too short for the requested shape")
    return v[flat].reshape(shape)


def mode_k_matricize(t, k):
    """Mode-k unfolding (1-based k): rows index axis k, columns the rest
    in row-major order."""
    t = as_tensor(t)
    if not 1 <= k <= t.ndim:
        raise ValueError(f"mode {k} outside 1..{t.ndim}")
    return np.moveaxis(t, k - 1, 0).reshape(t.shape[k - 1], -1)


def unit_gaussian(shape, rng):
    """Draw from the unit-L2 Gaussian ensemble: N(0, 1) entries, scaled
    to unit Frobenius norm."""
    x = rng.standard_normal(shape)
    return x / np.linalg.norm(x)


def unit_uniform(shape, rng):
    """Uniform(0, 1) entries scaled to unit Frobenius norm."""
    x = rng.random(shape)
    return x / np.linalg.norm(x)


ENSEMBLES = {"M": unit_gaussian, "U": unit_uniform}


# --- VTEN binary format ----------------------------------------------------
# "VTEN" | u32 version | u32 rank | rank * u64 extents | f64 data (LE, row-major)

VTEN_MAGIC = b"VTEN"
VTEN_VERSION = 1


class VtenFormatError(ValueError):
    """Raised for malformed or truncated VTEN payloads."""


def dumps_vten(t):
    t = as_tensor(t)
    head = VTEN_MAGIC + struct.pack("<II", VTEN_VERSION, t.ndim)
    head += struct.pack(f"<{t.ndim}Q", *t.shape)
    return head + t.astype("<f8").tobytes(order="C")


def loads_vten(buf):
    buf = bytes(buf)
    if len(buf) < 12 or buf[:4] != VTEN_MAGIC:
        raise VtenFormatError("bad magic")
    version, rank = struct.unpack_from("<II", buf, 4)
    if version != VTEN_VERSION:
        raise VtenFormatError(f"unsupported version {version}")
    start = 12 + 8 * rank
    if len(buf) < start:
        raise VtenFormatError("truncated header")
    shape = struct.unpack_from(f"<{rank}Q", buf, 12)
    count = math.prod(shape)
    if count > (len(buf) - start) // 8 or len(buf) - start != 8 * count:
        raise VtenFormatError(
            f"payload holds {len(buf) - start} bytes, shape {shape} needs {8 * count}")
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=start)
    return data.astype(np.float64).reshape(shape)


def write_vten(path, t):
    with open(path, "wb") as fh:
        fh.write(dumps_vten(t))


def read_vten(path):
    with open(path, "rb") as fh:
        return loads_vten(fh.read())
