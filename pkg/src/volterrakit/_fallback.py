"""Numpy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_core`` module.
"""
import numpy as np

# rows gathered per block; bounds the size of the intermediate products
_BLOCK_ELEMENTS = 1 << 22


def contract_windows(kernel, signals, base, taps, order):
    """out[r] = sum_q kernel[q] * prod_i signals[i, base[r] - taps[q_i]]."""
    patch = taps.shape[0]
    rows = base.shape[0]
    out = np.empty(rows)
    head = patch ** (order - 1)
    block = max(1, _BLOCK_ELEMENTS // max(head, patch))
    lead = kernel.reshape(head, patch)
    for start in range(0, rows, block):
        idx = base[start:start + block, None] - taps[None, :]
        acc = lead @ signals[order - 1][idx].T
        for i in range(order - 2, -1, -1):
            w = signals[i][idx]
            acc = acc.reshape(-1, patch, acc.shape[-1])
            acc = np.einsum("jqt,tq->jt", acc, w)
        out[start:start + block] = acc.reshape(-1)
    return out


def outer_accumulate(result, product, offsets, weights, bases):
    """result[bases[e] + offsets[k]] += weights[e] * product[k], in place."""
    for g, b in zip(weights, bases):
        result[b + offsets] += g * product


def jacobi_rotate(cols, right, tol, floor, max_sweeps):
    """One-sided Jacobi on the rows of ``cols``; see ``_core.jacobi_rotate``."""
    n = cols.shape[0]
    for sweep in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                a = cols[i] @ cols[i]
                b = cols[j] @ cols[j]
                gamma = cols[i] @ cols[j]
                if a <= floor or b <= floor or abs(gamma) <= tol * np.sqrt(a * b):
                    continue
                rotated = True
                zeta = (b - a) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                ci, cj = cols[i].copy(), cols[j].copy()
                cols[i], cols[j] = c * ci - s * cj, s * ci + c * cj
                ri, rj = right[i].copy(), right[j].copy()
                right[i], right[j] = c * ri - s * rj, s * ri + c * rj
        if not rotated:
            return sweep + 1
    return -1
