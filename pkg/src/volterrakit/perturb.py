"""Frequency-domain perturbations and deviation bounds for Volterra
operators."""
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .conv import ConvGeometry, VolterraOperator, conv1, conv_order_n, volterra_apply
from .tensor import as_tensor, unit_gaussian

# A spike attains Young's inequality with equality at order one, so the
# comparison allows for rounding in the two evaluations.
BOUND_RTOL = 1e-12


def within_bound(deviation, bound):
    return deviation <= bound * (1.0 + BOUND_RTOL)


def _dft_matrix(L, sign):
    k = np.arange(L)
    phase = (np.outer(k, k) % L) * (sign * 2.0 * np.pi / L)
    return np.exp(1j * phase) / np.sqrt(L)


def dft(x):
    """Unitary DFT by direct O(L^2) summation."""
    x = as_tensor(x)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("dft expects a non-empty 1-D signal")
    return _dft_matrix(x.shape[0], -1) @ x


def idft(X):
    """Inverse of ``dft``."""
    X = np.asarray(X, dtype=np.complex128)
    if X.ndim != 1 or X.size == 0:
        raise ValueError("idft expects a non-empty 1-D spectrum")
    return _dft_matrix(X.shape[0], 1) @ X


def craft_perturbation(h, x, alpha, mode="raw"):
    """Perturbation that moves the spectrum of ``x`` toward that of ``h``.

    ``raw``: alpha * idft(dft(h zero-extended) - dft(x)).  ``image`` also
    min-max normalizes the result into [0, alpha]; a constant result cannot
    be normalized and yields zeros with a RuntimeWarning.
    """
    h, x = as_tensor(h), as_tensor(x)
    if h.ndim != 1 or x.ndim != 1:
        raise ValueError("craft_perturbation works on 1-D signals")
    if h.shape[0] > x.shape[0]:
        raise ValueError("kernel longer than the signal")
    hx = np.zeros_like(x)
    hx[:h.shape[0]] = h
    eps = idft(dft(hx) - dft(x))
    scale = max(1.0, float(np.max(np.abs(eps))))
    if np.max(np.abs(eps.imag)) > 1e-9 * scale:
        raise ArithmeticError("inverse transform left an imaginary residue")
    eps = alpha * eps.real
    if mode == "raw":
        return eps
    if mode != "image":
        raise ValueError(f"unknown mode {mode!r}")
    lo, hi = eps.min(), eps.max()
    if hi == lo:
        warnings.warn("constant perturbation cannot be min-max normalized",
                      RuntimeWarning, stacklevel=2)
        return np.zeros_like(eps)
    return alpha * (eps - lo) / (hi - lo)


def energy_gain(h, x, eps):
    """||h * (x + eps)|| / ||h * x|| over the full linear convolution."""
    h, x, eps = as_tensor(h), as_tensor(x), as_tensor(eps)
    full = ConvGeometry(padding="full")
    base = np.linalg.norm(conv1(h, x, full))
    if base == 0:
        raise ZeroDivisionError("h * x has zero energy")
    return float(np.linalg.norm(conv1(h, x + eps, full)) / base)


def _lp(x, p):
    """||x||_p ** (number the caller raises); p = 0 means the empty factor."""
    return float(np.sum(np.abs(x) ** p) ** (1.0 / p))


def _binomial_weight(n, k):
    """(e n / k)^k, with the k = 0 factor equal to 1."""
    return 1.0 if k == 0 else (math.e * n / k) ** k


def mixed_term_bound(kernel, k, x, y):
    """Bound on ||H * {x^k, y^(n-k)}||_2 for an order-n kernel H:
    min(||H||_2 ||x||_1^k ||y||_1^(n-k), ||H||_1 ||x||_2k^k ||y||_2(n-k)^(n-k))."""
    H = as_tensor(kernel)
    n = H.ndim
    if not 0 <= k <= n:
        raise ValueError("k must lie in 0..n")
    first = np.linalg.norm(H.ravel()) * np.abs(x).sum() ** k * np.abs(y).sum() ** (n - k)
    xk = 1.0 if k == 0 else _lp(x, 2 * k) ** k
    yk = 1.0 if k == n else _lp(y, 2 * (n - k)) ** (n - k)
    return float(min(first, np.abs(H).sum() * xk * yk))


def order_bound(kernel, n, x, eps):
    """Bound on ||H_n * (x+eps)^n - H_n * x^n||_2 as the smaller of two
    branches: ||H||_2 ||x||_1^k ||eps||_1^(n-k) and
    ||H||_1 ||x||_2k^k ||eps||_2(n-k)^(n-k), weighted by (e n/k)^k."""
    H = as_tensor(kernel)
    l2, l1 = np.linalg.norm(H.ravel()), np.abs(H).sum()
    x1, e1 = np.abs(x).sum(), np.abs(eps).sum()
    first = second = 0.0
    for k in range(n):
        w = _binomial_weight(n, k)
        first += w * x1 ** k * e1 ** (n - k)
        xk = 1.0 if k == 0 else _lp(x, 2 * k) ** k
        second += w * xk * _lp(eps, 2 * (n - k)) ** (n - k)
    return min(l2 * first, l1 * second)


@dataclass(frozen=True)
class PerturbReport:
    deviations: tuple  # per order n = 1..N
    bounds: tuple
    total_deviation: float
    total_bound: float

    @property
    def dominated(self):
        return (within_bound(self.total_deviation, self.total_bound)
                and all(within_bound(d, b) for d, b in zip(self.deviations, self.bounds)))


def perturbation_bound(op, x, eps):
    """Measured and bounded output deviation of ``op`` under ``x -> x+eps``."""
    x, eps = as_tensor(x), as_tensor(eps)
    if x.shape != eps.shape:
        raise ValueError("x and eps must share a shape")
    devs, bounds = [], []
    for n in range(1, op.order + 1):
        H = op.kernels[n]
        d = conv_order_n(H, [x + eps] * n, op.geometry) - conv_order_n(H, [x] * n, op.geometry)
        devs.append(float(np.linalg.norm(d)))
        bounds.append(order_bound(H, n, x, eps))
    total = float(np.linalg.norm(volterra_apply(op, x + eps) - volterra_apply(op, x)))
    return PerturbReport(tuple(devs), tuple(bounds), total, float(sum(bounds)))


def spike(length, height, position=None):
    eps = np.zeros(length)
    eps[length // 2 if position is None else position] = height
    return eps


def threads():
    """Worker count from VK_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("VK_THREADS", "1")))
    except ValueError:
        return 1


def trial_rng(seed, *keys):
    """Independent stream for one trial, fixed by (seed, keys)."""
    return np.random.default_rng([int(seed), *(int(k) for k in keys)])


@dataclass(frozen=True)
class DeviationRow:
    order: int
    trial: int
    deviation: float
    bound: float

    @property
    def dominated(self):
        return within_bound(self.deviation, self.bound)


def deviation_experiment(orders=range(1, 9), height=3.0, trials=1000, seed=0,
                         length=32, extent=5):
    """Deviation of order-n convolutions under a midpoint spike.

    One x of ``length`` is drawn from the unit-L2 Gaussian ensemble; each
    trial draws H_n of shape (extent,)*n from the same ensemble and
    measures ||H_n * (x+eps)^n - H_n * x^n|| with full padding.
    """
    x = unit_gaussian(length, np.random.default_rng([seed, 0]))
    eps = spike(length, height)
    geo = ConvGeometry(padding="full")

    def run(job):
        n, t = job
        H = unit_gaussian((extent,) * n, trial_rng(seed, 1, n, t))
        d = conv_order_n(H, [x + eps] * n, geo) - conv_order_n(H, [x] * n, geo)
        return DeviationRow(n, t, float(np.linalg.norm(d)), order_bound(H, n, x, eps))

    jobs = [(n, t) for n in orders for t in range(trials)]
    with ThreadPoolExecutor(threads()) as pool:
        return list(pool.map(run, jobs))


def quantiles(rows):
    """order -> (min, q1, median, q3, max) of the deviations."""
    out = {}
    for n in sorted({r.order for r in rows}):
        d = np.array([r.deviation for r in rows if r.order == n])
        out[n] = tuple(float(v) for v in np.quantile(d, [0, 0.25, 0.5, 0.75, 1]))
    return out


def random_operator(order, extent, rng):
    """Volterra operator with unit-L2 Gaussian kernels of every order."""
    return VolterraOperator([np.asarray(0.0)] + [unit_gaussian((extent,) * n, rng)
                                                 for n in range(1, order + 1)],
                            ConvGeometry(padding="full"))
