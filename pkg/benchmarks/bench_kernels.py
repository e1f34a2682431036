"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Each case calls the raw kernel functions of both implementations on the
same inputs, checks they agree, and prints the best-of-N wall time.
"""
import argparse
import timeit

import numpy as np

from volterrakit import _fallback
from volterrakit.conv import _gather_plan

try:
    from volterrakit import _core
except ImportError:
    _core = None


def contraction_case(extent, order, length=64, batch=1, seed=0):
    rng = np.random.default_rng(seed)
    kernel = rng.standard_normal((extent,) * order).reshape(-1)
    x = rng.standard_normal((batch, length))
    base, taps, _ = _gather_plan((length,), (extent,), (0,), 1, batch)
    signals = np.stack([x.reshape(-1)] * order)
    return (kernel, signals, base, taps, order)


def outer_case(g_extent, h_extent, seed=0):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((g_extent,) * 2)
    H = rng.standard_normal((h_extent,) * 2)
    product = np.multiply.outer(H, H).reshape(-1)
    out = h_extent + g_extent - 1
    strides = np.array([out ** 3, out ** 2, out, 1])
    offsets = strides @ np.indices((h_extent,) * 4).reshape(4, -1)
    shift = np.array([strides[0] + strides[1], strides[2] + strides[3]])
    nz = np.stack(np.nonzero(G), axis=1)
    return out ** 4, product, offsets, G[tuple(nz.T)], nz @ shift


def jacobi_case(rows, cols, seed=0):
    A = np.random.default_rng(seed).standard_normal((rows, cols))
    return np.ascontiguousarray(A.T)


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _core is None:
        print("compiled core not built; only the fallback is available")
        return 1
    print(f"{'case':<34}{'numpy (s)':>12}{'cython (s)':>12}{'speedup':>10}")

    def row(name, t_py, t_cy):
        print(f"{name:<34}{t_py:>12.2e}{t_cy:>12.2e}{t_py / t_cy:>10.2f}")

    for extent, order, batch in [(5, 1, 1), (9, 2, 1), (5, 3, 1), (9, 3, 1),
                                 (13, 3, 8), (9, 4, 8), (5, 6, 1), (25, 4, 4)]:
        a = contraction_case(extent, order, batch=batch)
        assert np.allclose(_fallback.contract_windows(*a), _core.contract_windows(*a))
        row(f"order-{order} conv, extent {extent}, batch {batch}",
            best(lambda: _fallback.contract_windows(*a), args.repeat),
            best(lambda: _core.contract_windows(*a), args.repeat))

    for g_extent, h_extent in [(3, 9), (5, 17), (9, 25)]:
        size, *rest = outer_case(g_extent, h_extent)
        r1, r2 = np.zeros(size), np.zeros(size)
        _fallback.outer_accumulate(r1, *rest)
        _core.outer_accumulate(r2, *rest)
        assert np.allclose(r1, r2)
        row(f"outer conv, G {g_extent}^2, H {h_extent}^2",
            best(lambda: _fallback.outer_accumulate(np.zeros(size), *rest), args.repeat),
            best(lambda: _core.outer_accumulate(np.zeros(size), *rest), args.repeat))

    for rows, cols in [(40, 10), (200, 30), (1000, 20)]:
        cols_t = jacobi_case(rows, cols)
        floor = (np.finfo(float).eps * np.linalg.norm(cols_t)) ** 2

        def run(impl):
            c = cols_t.copy()
            impl.jacobi_rotate(c, np.eye(cols), 1e-15, floor, 100)
            return np.sort(np.linalg.norm(c, axis=1))

        assert np.allclose(run(_fallback), run(_core))
        row(f"Jacobi SVD {rows}x{cols}",
            best(lambda: run(_fallback), args.repeat), best(lambda: run(_core), args.repeat))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
