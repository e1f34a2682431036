"""Fitting an order-one proxy kernel to a black-box network.

The network is only queried on random unit-norm inputs; its outputs are
regressed on sliding windows of those inputs, giving an affine map
``w * x + b`` that estimates the order-0 and order-1 Volterra terms.
"""
import warnings
from dataclasses import dataclass

import numpy as np

from .conv import ConvGeometry
from .netconv import Network, forward
from .tensor import unit_gaussian


@dataclass(frozen=True)
class ProxyFit:
    weights: np.ndarray
    bias: float
    residual_mse: float
    samples: int
    rank_deficient: bool = False
    iterations: int = 0


def as_oracle(model):
    """Wrap a single-channel network (or any callable) as x -> 1-D output."""
    if isinstance(model, Network):
        def call(x):
            y = forward(model, x)
            if y.shape[0] != 1:
                raise ValueError("proxy fitting needs a single output channel")
            return y[0]
        return call
    return lambda x: np.asarray(model(x), dtype=np.float64).reshape(-1)


def sample_inputs(count, length, seed=0):
    """``count`` independent unit-L2 Gaussian signals of ``length``."""
    rng = np.random.default_rng(seed)
    return np.stack([unit_gaussian(length, rng) for _ in range(count)])


def design_matrix(x, extent, geometry):
    """Rows [x(s*t + z-1-p - tau) for tau in 0..z-1] + [1], one per output t."""
    p = geometry.pads((extent,))[0]
    (out,) = geometry.output_shape(x.shape, (extent,))
    xp = np.pad(x, (p, p))
    idx = geometry.stride * np.arange(out)[:, None] + (extent - 1) - np.arange(extent)[None, :]
    return np.hstack([xp[idx], np.ones((out, 1))])


def _conjugate_gradient(A, b, D, y, tol, max_iter):
    """CG on the normal equations; stops when the relative change of the
    mean squared residual falls below ``tol``.

    The MSE is taken from the stacked design ``D`` rather than expanded
    through ``A`` and ``b``, which cancels to rounding noise near a fit.
    """
    beta = np.zeros(b.shape[0])
    r = b.copy()
    d = r.copy()
    mse = float(np.mean(y ** 2))
    for it in range(1, max_iter + 1):
        Ad = A @ d
        denom = d @ Ad
        if denom <= 0:
            return beta, it
        step = (r @ r) / denom
        beta = beta + step * d
        r_new = r - step * Ad
        new_mse = float(np.mean((D @ beta - y) ** 2))
        if abs(mse - new_mse) <= tol * max(mse, np.finfo(float).tiny):
            return beta, it
        mse = new_mse
        d = r_new + ((r_new @ r_new) / (r @ r)) * d
        r = r_new
    return beta, max_iter


def fit_order_one(model, extent, geometry=None, samples=None, seed=0,
                  input_length=128, method="closed", tol=1e-9, max_iter=10_000):
    """Least-squares affine proxy ``w * x + b`` of a black box.

    ``method="closed"`` solves the normal equations (min-norm solution
    with a warning when the design is rank deficient); ``"iterative"``
    runs conjugate gradients with a relative-MSE-change stopping rule.
    The default sample count is 8 * (extent + 1).
    """
    geometry = geometry or ConvGeometry()
    oracle = as_oracle(model)
    if extent < 1:
        raise ValueError("extent must be positive")
    count = 8 * (extent + 1) if samples is None else int(samples)
    if count < 1:
        raise ValueError("need at least one sample")
    A = np.zeros((extent + 1, extent + 1))
    b = np.zeros(extent + 1)
    blocks = []
    rows = 0
    for x in sample_inputs(count, input_length, seed):
        D = design_matrix(x, extent, geometry)
        y = oracle(x)
        if y.shape[0] != D.shape[0]:
            raise ValueError(f"oracle gives {y.shape[0]} outputs, geometry implies {D.shape[0]}")
        A += D.T @ D
        b += D.T @ y
        rows += y.shape[0]
        blocks.append((D, y))
    deficient = np.linalg.matrix_rank(A) < A.shape[0]
    iterations = 0
    if method == "closed":
        if deficient:
            warnings.warn("design matrix is rank deficient; returning the min-norm fit",
                          RuntimeWarning, stacklevel=2)
            beta = np.linalg.lstsq(A, b, rcond=None)[0]
        else:
            beta = np.linalg.solve(A, b)
    elif method == "iterative":
        D = np.vstack([blk[0] for blk in blocks])
        y = np.concatenate([blk[1] for blk in blocks])
        beta, iterations = _conjugate_gradient(A, b, D, y, tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")
    sse = sum(float(np.sum((D @ beta - y) ** 2)) for D, y in blocks)
    return ProxyFit(beta[:-1].copy(), float(beta[-1]), sse / rows, count,
                    bool(deficient), iterations)


@dataclass(frozen=True)
class FitReport:
    weight_error: float
    bias_error: float
    residual_mse: float


def fit_report(fit, w_ref, b_ref):
    """L2 error of the weights, absolute error of the bias, and the
    fit's own residual."""
    w_ref = np.asarray(w_ref, dtype=np.float64)
    if w_ref.shape != fit.weights.shape:
        raise ValueError(f"reference shape {w_ref.shape} != fit shape {fit.weights.shape}")
    return FitReport(float(np.linalg.norm(fit.weights - w_ref)),
                     abs(fit.bias - float(b_ref)), fit.residual_mse)
