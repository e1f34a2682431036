"""Combining rules for stacked Volterra operators and checks of the
convolution identities they rest on."""
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .conv import ConvGeometry, VolterraOperator, conv1, conv_order_n
from .outer import outer_conv, outer_conv_marginal, sum_axes
from .tensor import (as_tensor, choose_flatten_weights, diag_embed, flatten,
                     is_symmetric, symmetrize, unflatten)


def multinomial(n, parts):
    """n! / prod(k_i!) with sum(parts) == n."""
    parts = [int(k) for k in parts]
    if n < 0 or any(k < 0 for k in parts):
        raise ValueError("multinomial arguments must be non-negative")
    if sum(parts) != n:
        raise ValueError(f"parts {parts} do not sum to {n}")
    out = math.factorial(n)
    for k in parts:
        out //= math.factorial(k)
    return out


def compositions(parts, total):
    """All tuples of ``parts`` non-negative ints summing to ``total``,
    in lexicographic order."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in compositions(parts - 1, total - first):
            yield (first,) + rest


def term_count(n, m):
    """Number of outer-convolution terms per output order when an order-m
    operator is stacked on an order-n one (index = output order)."""
    counts = [0] * (n * m + 1)
    for j in range(m + 1):
        for comp in compositions(n + 1, j):
            counts[sum(k * c for k, c in enumerate(comp))] += 1
    return counts


def _orderings(comp):
    """Distinct slot sequences of H orders for a composition, lexicographic."""
    base = [k for k, c in enumerate(comp) for _ in range(c)]
    return sorted(set(itertools.permutations(base)))


# Largest fused operator: an order-6 kernel of extent 32 already holds 1e9
# entries, so the caps bound memory rather than accuracy.
MAX_FUSED_ORDER = 6
MAX_FUSED_EXTENT = 32


@dataclass(frozen=True)
class LayerGeom:
    """Kernel extent, stride and padding of one convolution layer."""

    extent: int
    stride: int = 1
    padding: int = 0


def composed_geometry(layers):
    """(extent, stride, padding) of the single layer equivalent to a stack.

    ``layers`` lists (z, s, p) triples or ``LayerGeom`` from input to output.
    """
    if not layers:
        raise ValueError("need at least one layer")
    z = s = p = None
    for layer in layers:
        if isinstance(layer, LayerGeom):
            lz, ls, lp = layer.extent, layer.stride, layer.padding
        else:
            lz, ls, lp = layer
        if lz < 1 or ls < 1 or lp < 0:
            raise ValueError(f"invalid layer {layer}")
        if z is None:
            z, s, p = lz, ls, lp
        else:
            z += (lz - 1) * s
            p += lp * s
            s *= ls
    return z, s, p


def _layer_of(op):
    if op.signal_dim != 1:
        raise ValueError("operator fusion is implemented for 1-D signals")
    z = op.extent[0]
    return z, op.geometry.stride, op.geometry.pads(op.extent)[0]


def _scalar(t):
    t = as_tensor(t)
    if t.ndim != 0:
        raise ValueError("order-0 term must be a scalar for fusion")
    return float(t)


def combine_nm(outer, inner, max_order=None):
    """Fuse ``outer(inner(x))`` into one Volterra operator.

    Every composition of each outer order j over the inner orders
    contributes an outer convolution of the outer kernel G_j with the
    chosen inner kernels; scalar inner terms are summed out.  When G_j is
    exactly symmetric one ordering per composition is taken with its
    multinomial weight; otherwise every distinct ordering is expanded, which
    stays exact for non-symmetric kernels.  Orders above ``max_order`` are
    dropped.  The kept order may not exceed ``MAX_FUSED_ORDER`` and the
    fused extent may not exceed ``MAX_FUSED_EXTENT``.
    """
    zg, sg, pg = _layer_of(outer)
    zh, sh, ph = _layer_of(inner)
    z, s, p = composed_geometry([(zh, sh, ph), (zg, sg, pg)])
    top = outer.order * inner.order
    if max_order is not None:
        top = min(top, int(max_order))
    if top > MAX_FUSED_ORDER:
        raise ValueError(f"fused order {top} exceeds the cap {MAX_FUSED_ORDER}; "
                         "pass a smaller max_order")
    if z > MAX_FUSED_EXTENT:
        raise ValueError(f"fused extent {z} exceeds the cap {MAX_FUSED_EXTENT}")
    fused = [0.0] + [np.zeros((z,) * o) for o in range(1, top + 1)]
    h0 = _scalar(inner.kernels[0])
    live = [True] + [bool(np.any(k)) for k in inner.kernels[1:]]
    fused[0] += _scalar(outer.kernels[0])
    for j in range(1, outer.order + 1):
        gj = outer.kernels[j]
        if not np.any(gj):
            continue
        symmetric = is_symmetric(gj)
        for comp in compositions(inner.order + 1, j):
            o = sum(k * c for k, c in enumerate(comp))
            if o > top or not all(live[k] for k, c in enumerate(comp) if c):
                continue
            if symmetric:
                seqs = [tuple(k for k, c in enumerate(comp) for _ in range(c))]
                weight = multinomial(j, comp)
            else:
                seqs = _orderings(comp)
                weight = 1
            for seq in seqs:
                slots = [h0 if k == 0 else inner.kernels[k] for k in seq]
                term = outer_conv_marginal(gj, slots, stride=sh)
                fused[o] = fused[o] + weight * term
    fused[0] = np.asarray(fused[0], dtype=np.float64)
    return VolterraOperator(fused, ConvGeometry(stride=s, padding=p))


def combine_22(g, h, stride=1):
    """Fuse two second-order operators term by term.

    ``g`` and ``h`` are [G0, G1, G2] and [H0, H1, H2] with scalar order-0
    terms and 1-D kernels.  Scalar slots are taken as length-1 kernels and
    summed out after the outer convolution.  Returns [F0, ..., F4].
    """
    g0, g1, g2 = (as_tensor(k) for k in g)
    h0, h1, h2 = (as_tensor(k) for k in h)
    a = h0.reshape(1)

    def oc(G, Hs):
        return outer_conv(G, Hs, stride)

    f0 = g0 + h0 * g1.sum() + h0 * h0 * g2.sum()
    f1 = (oc(g1, [h1]) + sum_axes(oc(g2, [a, h1]), [0])
          + sum_axes(oc(g2, [h1, a]), [1]))
    f2 = (oc(g1, [h2]) + oc(g2, [h1, h1]) + sum_axes(oc(g2, [a, h2]), [0])
          + sum_axes(oc(g2, [h2, a]), [2]))
    f3 = oc(g2, [h1, h2]) + oc(g2, [h2, h1])
    f4 = oc(g2, [h2, h2])
    return [f0, f1, f2, f3, f4]


# --- identity checks ---------------------------------------------------------

PROPERTY_NAMES = {
    1: "linearity in a signal",
    2: "constant offset of the signal",
    3: "linearity in the kernel",
    4: "square of a sum",
    5: "binomial expansion",
    6: "multinomial expansion",
    7: "composition of convolutions",
    8: "strided composition",
    9: "product of two inner convolutions",
    10: "product of n inner convolutions",
    11: "outer-convolution associativity",
    12: "leading constant slot",
    13: "trailing constant slot",
    14: "middle constant slot",
    15: "elementwise power as diagonal kernel",
    16: "power of an inner convolution",
}


@dataclass(frozen=True)
class PropertyCheck:
    property_id: int
    name: str
    seed: int
    deviation: float

    def passed(self, tol):
        return self.deviation <= tol


def _dev(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise AssertionError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def _p1(rng):
    z, L = 4, 14
    # order one, literally
    g = rng.standard_normal(z)
    x, y = rng.standard_normal((2, L))
    d1 = _dev(conv1(g, x + y), conv1(g, x) + conv1(g, y))
    # multilinearity: one slot at a time, order three
    G = rng.standard_normal((3, 3, 3))
    xs = list(rng.standard_normal((3, L)))
    y = rng.standard_normal(L)
    lhs = conv_order_n(G, [xs[0], xs[1] + y, xs[2]])
    rhs = conv_order_n(G, xs) + conv_order_n(G, [xs[0], y, xs[2]])
    return max(d1, _dev(lhs, rhs))


def _p2(rng):
    g = rng.standard_normal(5)
    x = rng.standard_normal(16)
    alpha = rng.standard_normal()
    return _dev(conv1(g, x + alpha), conv1(g, x) + alpha * g.sum())


def _p3(rng):
    G, H = rng.standard_normal((2, 3, 3, 3))
    xs = list(rng.standard_normal((3, 12)))
    return _dev(conv_order_n(G + H, xs), conv_order_n(G, xs) + conv_order_n(H, xs))


def _p4(rng):
    G = symmetrize(rng.standard_normal((4, 4)))
    x, y = rng.standard_normal((2, 15))
    lhs = conv_order_n(G, [x + y] * 2)
    rhs = conv_order_n(G, [x, x]) + 2 * conv_order_n(G, [x, y]) + conv_order_n(G, [y, y])
    return _dev(lhs, rhs)


def _p5(rng, n=4):
    G = symmetrize(rng.standard_normal((3,) * n))
    x, y = rng.standard_normal((2, 10))
    lhs = conv_order_n(G, [x + y] * n)
    rhs = sum(math.comb(n, k) * conv_order_n(G, [x] * k + [y] * (n - k))
              for k in range(n + 1))
    return _dev(lhs, rhs)


def _p6(rng, n=2, parts=3):
    G = symmetrize(rng.standard_normal((4,) * n))
    xs = rng.standard_normal((parts, 12))
    lhs = conv_order_n(G, [xs.sum(axis=0)] * n)
    rhs = 0.0
    for comp in compositions(parts, n):
        sig = [xs[i] for i, c in enumerate(comp) for _ in range(c)]
        rhs = rhs + multinomial(n, comp) * conv_order_n(G, sig)
    return _dev(lhs, rhs)


def _p7(rng):
    G = rng.standard_normal(4)
    H = rng.standard_normal((3, 3))
    x, y = rng.standard_normal((2, 16))
    return _dev(conv1(G, conv_order_n(H, [x, y])),
                conv_order_n(outer_conv(G, [H]), [x, y]))


def _p8(rng):
    s, st = (int(v) for v in rng.integers(1, 4, size=2))
    G = rng.standard_normal(int(rng.integers(1, 5)))
    H = rng.standard_normal(int(rng.integers(1, 5)))
    x = rng.standard_normal(40)
    lhs = conv1(G, conv1(H, x, ConvGeometry(stride=st)), ConvGeometry(stride=s))
    rhs = conv1(outer_conv(G, [H], stride=st), x, ConvGeometry(stride=s * st))
    return _dev(lhs, rhs)


def _p9(rng):
    G = rng.standard_normal((3, 3))
    H1 = rng.standard_normal(3)
    H2 = rng.standard_normal((3, 3))
    x, y1, y2 = rng.standard_normal((3, 14))
    lhs = conv_order_n(G, [conv1(H1, x), conv_order_n(H2, [y1, y2])])
    rhs = conv_order_n(outer_conv(G, [H1, H2]), [x, y1, y2])
    return _dev(lhs, rhs)


def _p10(rng):
    G = rng.standard_normal((2, 2, 2))
    Hs = [rng.standard_normal(3), rng.standard_normal((3, 3)), rng.standard_normal(3)]
    sig = list(rng.standard_normal((4, 12)))
    lhs = conv_order_n(G, [conv1(Hs[0], sig[0]), conv_order_n(Hs[1], sig[1:3]),
                           conv1(Hs[2], sig[3])])
    rhs = conv_order_n(outer_conv(G, Hs), sig)
    return _dev(lhs, rhs)


def _p11(rng):
    s2, s3 = (int(v) for v in rng.integers(1, 3, size=2))
    G1 = rng.standard_normal(3)
    G2 = rng.standard_normal(4)
    G3 = rng.standard_normal((3, 2))
    lhs = outer_conv(G1, [outer_conv(G2, [G3], s3)], s2 * s3)
    rhs = outer_conv(outer_conv(G1, [G2], s2), [G3], s3)
    return _dev(lhs, rhs)


def _constant_slot(rng, position):
    G = rng.standard_normal((3,) * (3 if position == "middle" else 2))
    H1 = rng.standard_normal((3, 3))
    x, y = rng.standard_normal((2, 14))
    alpha = rng.standard_normal()
    u = conv_order_n(H1, [x, y])
    c = np.full(u.shape, alpha)
    a = np.array([alpha])
    if position == "lead":
        lhs = conv_order_n(G, [c, u])
        K = sum_axes(outer_conv(G, [a, H1]), [0])
        return _dev(lhs, conv_order_n(K, [x, y]))
    if position == "trail":
        lhs = conv_order_n(G, [u, c])
        K = sum_axes(outer_conv(G, [H1, a]), [2])
        return _dev(lhs, conv_order_n(K, [x, y]))
    H2 = rng.standard_normal(3)
    w = rng.standard_normal(14)
    lhs = conv_order_n(G, [u, c, conv1(H2, w)])
    K = sum_axes(outer_conv(G, [H1, a, H2]), [2])
    return _dev(lhs, conv_order_n(K, [x, y, w]))


def _p15(rng, n=3):
    h = rng.standard_normal(4)
    x = rng.standard_normal(15)
    return _dev(conv1(h, x ** n), conv_order_n(diag_embed(n, h), [x] * n))


def _p16(rng, n=3):
    g = rng.standard_normal(3)
    h = rng.standard_normal(3)
    x = rng.standard_normal(14)
    K = outer_conv(diag_embed(n, g), [h] * n)
    return _dev(conv1(g, conv1(h, x) ** n), conv_order_n(K, [x] * n))


_CHECKS = {
    1: _p1, 2: _p2, 3: _p3, 4: _p4, 5: _p5, 6: _p6, 7: _p7, 8: _p8,
    9: _p9, 10: _p10, 11: _p11,
    12: lambda rng: _constant_slot(rng, "lead"),
    13: lambda rng: _constant_slot(rng, "trail"),
    14: lambda rng: _constant_slot(rng, "middle"),
    15: _p15, 16: _p16,
}


def verify_property(property_id, seed=0):
    """Evaluate both sides of one identity on random operands.

    Returns the max absolute deviation in a ``PropertyCheck``.
    """
    if property_id not in _CHECKS:
        raise ValueError(f"unknown property {property_id}; have 1..{len(_CHECKS)}")
    rng = np.random.default_rng([seed, property_id])
    return PropertyCheck(property_id, PROPERTY_NAMES[property_id], seed,
                         _CHECKS[property_id](rng))


def verify_flatten_homomorphism(seed=0):
    """Max deviation between a valid 2-D convolution and the 1-D
    convolution of the flattened operands, mapped back."""
    rng = np.random.default_rng([seed, 99])
    S = tuple(int(v) for v in rng.integers(4, 9, size=2))
    Z = tuple(int(v) for v in rng.integers(1, 4, size=2))
    H = rng.standard_normal(Z)
    x = rng.standard_normal(S)
    fmap = choose_flatten_weights(S, Z)
    direct = conv1(H, x)
    flat = conv1(flatten(H, fmap), flatten(x, fmap))
    back = unflatten(flat, fmap, direct.shape)
    return _dev(direct, back)
