"""Numerical rank of convolution and outer-convolution results.

Ranks are counted as singular values above ``rel_tol`` times the largest.
The default SVD is one-sided Jacobi (compiled when available), with QR
preconditioning for very tall or wide matrices.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .conv import ConvGeometry, conv1
from .outer import outer_conv
from .perturb import threads, trial_rng
from .tensor import ENSEMBLES, as_tensor, mode_k_matricize

DEFAULT_REL_TOL = 1e-8
MAX_SWEEPS = 100
SPECTRUM_CLIP = (1e-16, 1e16)
# the mixed outer-convolution experiment produces 9.6M elements
MAX_RESULT_ELEMENTS = 16_000_000


class SVDConvergenceError(ArithmeticError):
    pass


def _jacobi(A, tol, max_sweeps):
    """A = U diag(s) V^T for m >= n by one-sided rotations of the columns."""
    # rotated in place, so never a view of the caller's matrix
    cols = np.array(A.T, dtype=np.float64, order="C")
    right = np.eye(A.shape[1])
    # columns this small are zero to working precision
    floor = (np.finfo(float).eps * np.linalg.norm(cols)) ** 2
    if kernels.jacobi_rotate(cols, right, tol, floor, max_sweeps) < 0:
        raise SVDConvergenceError(f"Jacobi SVD did not converge in {max_sweeps} sweeps")
    s = np.linalg.norm(cols, axis=1)
    order = np.argsort(-s, kind="stable")
    s = s[order]
    U = np.zeros_like(cols)
    nz = s > 0
    U[nz] = cols[order][nz] / s[nz, None]
    return U.T, s, right[order].T


def svd(M, method="jacobi", tol=1e-15, max_sweeps=MAX_SWEEPS):
    """Thin SVD ``M = U @ diag(s) @ V.T``, s descending.

    ``method="lapack"`` defers to numpy's LAPACK driver.
    """
    M = as_tensor(M)
    if M.ndim != 2:
        raise ValueError("svd expects a matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    if method == "lapack":
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
        return U, s, Vt.T
    if method != "jacobi":
        raise ValueError(f"unknown method {method!r}")
    if M.shape[0] < M.shape[1]:
        V, s, U = svd(M.T, method, tol, max_sweeps)
        return U, s, V
    if M.shape[1] == 0:
        return np.zeros((M.shape[0], 0)), np.zeros(0), np.zeros((0, 0))
    if M.shape[0] > 2 * M.shape[1]:
        Q, R = np.linalg.qr(M)
        U, s, V = _jacobi(R, tol, max_sweeps)
        return Q @ U, s, V
    return _jacobi(M, tol, max_sweeps)


def singular_values(M, method="jacobi"):
    """Singular values only, descending.

    Long matrices are reduced to their triangular QR factor first, so the
    orthogonal factor is never formed.
    """
    M = as_tensor(M)
    if M.ndim != 2:
        raise ValueError("expected a matrix")
    if M.shape[0] < M.shape[1]:
        M = M.T
    if method == "jacobi" and M.shape[0] > 2 * M.shape[1]:
        M = np.linalg.qr(M, mode="r")
    return svd(M, method)[1]


def numerical_rank(M, rel_tol=DEFAULT_REL_TOL, method="jacobi"):
    """Count of singular values above ``rel_tol`` times the largest."""
    s = singular_values(M, method)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


def clipped_spectrum(s):
    """Singular values clipped for log-scale reporting."""
    return np.clip(s, *SPECTRUM_CLIP)


def tucker_rank(t, rel_tol=DEFAULT_REL_TOL, method="jacobi"):
    """Numerical rank of every mode-k unfolding."""
    t = as_tensor(t)
    return tuple(numerical_rank(mode_k_matricize(t, k), rel_tol, method)
                 for k in range(1, t.ndim + 1))


def make_zero_conv_signal(g, init, length):
    """Signal h whose valid convolution with g vanishes.

    h starts with ``init`` (len(g) - 1 values) and continues with
    h(t) = -1/g(0) * sum_{tau=1}^{T} g(tau) h(t - tau).
    """
    g = as_tensor(g)
    init = as_tensor(init)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("g must be a non-empty vector")
    if g[0] == 0:
        raise ValueError("g(0) must be non-zero")
    T = g.shape[0] - 1
    if init.shape != (T,):
        raise ValueError(f"init must have length {T}")
    if length < T:
        raise ValueError("length shorter than the initial segment")
    h = np.zeros(length)
    h[:T] = init
    tail = g[1:]
    for t in range(T, length):
        h[t] = -(tail @ h[t - T:t][::-1]) / g[0]
    return h


def hankel_matrix(h, T, rows=None):
    """Row r is h[r:r+T]; ``rows`` defaults to every full window."""
    h = as_tensor(h)
    rows = h.shape[0] - T + 1 if rows is None else rows
    if T < 1 or rows < 1 or rows + T - 1 > h.shape[0]:
        raise ValueError("window does not fit the signal")
    return h[np.arange(rows)[:, None] + np.arange(T)[None, :]]


def patch_matrix(H, patch_shape):
    """Row per position t with every tap inside H: entries H(t - tau),
    tau over the patch in row-major order.  In 1-D this is the Hankel
    matrix with its columns reversed."""
    H = as_tensor(H)
    patch_shape = tuple(patch_shape)
    if len(patch_shape) != H.ndim:
        raise ValueError("patch rank differs from tensor rank")
    starts = [np.arange(p - 1, e) for p, e in zip(patch_shape, H.shape)]
    if any(s.size == 0 for s in starts):
        raise ValueError("patch larger than the tensor")
    pos = np.stack(np.meshgrid(*starts, indexing="ij"), -1).reshape(-1, H.ndim)
    taps = np.indices(patch_shape).reshape(H.ndim, -1).T
    idx = pos[:, None, :] - taps[None, :, :]
    return H[tuple(idx[..., d] for d in range(H.ndim))]


# --- random operands --------------------------------------------------------

def _draw(family, shape, rng):
    if family not in ENSEMBLES:
        raise ValueError(f"unknown family {family!r}; have {sorted(ENSEMBLES)}")
    return ENSEMBLES[family](shape, rng)


def random_tucker(shape, ranks, family, rng):
    """Unit-norm tensor with multilinear rank at most ``ranks``: a random
    core multiplied by a random factor along every mode."""
    t = _draw(family, tuple(ranks), rng)
    for k, (e, r) in enumerate(zip(shape, ranks)):
        factor = _draw(family, (e, r), rng)
        t = np.moveaxis(np.tensordot(factor, t, axes=(1, k)), 0, k)
    return t / np.linalg.norm(t)


def random_low_rank(shape, rank, family, rng):
    """Unit-norm matrix product of rank-column factors."""
    return random_tucker(shape, (rank, rank), family, rng)


def random_zero_conv_signal(T, length, family, rng):
    """Unit-norm signal annihilated by ones(T+1); its windows span <= T dims."""
    h = make_zero_conv_signal(np.ones(T + 1), _draw(family, (T,), rng), length)
    return h / np.linalg.norm(h)


def dilate(G, factor):
    """Insert factor-1 zero rows/columns between the entries of G."""
    G = as_tensor(G)
    out = np.zeros(tuple((e - 1) * factor + 1 for e in G.shape))
    out[tuple(slice(None, None, factor) for _ in G.shape)] = G
    return out


# --- experiments ------------------------------------------------------------

@dataclass(frozen=True)
class RankRow:
    experiment: str
    trial: int
    mode: int
    rank: int
    bound: int
    log10_spectrum: tuple  # clipped, descending

    @property
    def passed(self):
        return self.rank <= self.bound


def _rows(name, trial, tensor, bounds, rel_tol):
    if tensor.size > MAX_RESULT_ELEMENTS:
        raise ValueError(f"result of {tensor.size} elements exceeds the cap {MAX_RESULT_ELEMENTS}")
    out = []
    for k, bound in enumerate(bounds, start=1):
        s = singular_values(mode_k_matricize(tensor, k))
        rank = int(np.sum(s > rel_tol * s[0])) if s[0] > 0 else 0
        spectrum = tuple(float(v) for v in np.log10(clipped_spectrum(s)))
        out.append(RankRow(name, trial, k, rank, int(bound), spectrum))
    return out


def _oconv_1d(rng, family, rel_tol, trial):
    rg = int(rng.integers(1, 9))
    T1, T2 = (int(v) for v in rng.integers(1, 9, size=2))
    G = random_low_rank((9, 9), rg, family, rng)
    h1 = random_zero_conv_signal(T1, 27, family, rng)
    h2 = random_zero_conv_signal(T2, 27, family, rng)
    # keep outputs whose taps all land inside h1 and h2
    K = outer_conv(G, [h1, h2])[8:27, 8:27]
    bound = min(numerical_rank(G, rel_tol), T1, T2)
    return _rows("oconv-1d", trial, K, [bound, bound], rel_tol)


def _conv_2d(rng, family, rel_tol, trial):
    rg, rh = int(rng.integers(1, 5)), int(rng.integers(1, 7))
    G = random_low_rank((7, 7), rg, family, rng)
    H = random_low_rank((32, 32), rh, family, rng)
    K = conv1(G, H, ConvGeometry(padding="full"))
    bound = min(min(K.shape), numerical_rank(G, rel_tol) * numerical_rank(H, rel_tol))
    return _rows("conv-2d", trial, K, [bound, bound], rel_tol)


def _conv_3d(rng, family, rel_tol, trial):
    G = random_tucker((6, 6, 6), (2, 4, 3), family, rng)
    H = random_tucker((28, 28, 28), (3, 2, 4), family, rng)
    K = conv1(G, H, ConvGeometry(padding="full"))
    bounds = [min(e, a * b) for e, a, b in
              zip(K.shape, tucker_rank(G, rel_tol), tucker_rank(H, rel_tol))]
    return _rows("conv-3d", trial, K, bounds, rel_tol)


def _oconv_mixed(rng, family, rel_tol, trial):
    G = random_tucker((3, 3, 3, 3), (2, 3, 3, 2), family, rng)
    h1 = _draw(family, (5,), rng)
    h2 = _draw(family, (5,), rng)
    H3 = random_low_rank((7, 7), 2, family, rng)
    H4 = random_tucker((9, 9, 18), (2, 3, 4), family, rng)
    K = outer_conv(G, [h1, h2, H3, H4])
    rg = tucker_rank(G, rel_tol)
    bounds = [rg[0], rg[1]]
    bounds += [3 * r for r in tucker_rank(H3, rel_tol)]
    bounds += [3 * r for r in tucker_rank(H4, rel_tol)]
    bounds = [min(e, b) for e, b in zip(K.shape, bounds)]
    return _rows("oconv-mixed", trial, K, bounds, rel_tol)


EXPERIMENTS = {
    "oconv-1d": _oconv_1d,
    "conv-2d": _conv_2d,
    "conv-3d": _conv_3d,
    "oconv-mixed": _oconv_mixed,
}


def rank_experiment(name, trials=50, seed=0, family="M", rel_tol=DEFAULT_REL_TOL):
    """Run one rank experiment; every row pairs a measured mode rank with
    its theoretical bound."""
    if name not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {name!r}; have {sorted(EXPERIMENTS)}")
    fn = EXPERIMENTS[name]
    fam_key = sorted(ENSEMBLES).index(family) if family in ENSEMBLES else -1
    if fam_key < 0:
        raise ValueError(f"unknown family {family!r}")

    def run(t):
        return fn(trial_rng(seed, 2, list(EXPERIMENTS).index(name), fam_key, t),
                  family, rel_tol, t)

    with ThreadPoolExecutor(threads()) as pool:
        return [row for rows in pool.map(run, range(trials)) for row in rows]
