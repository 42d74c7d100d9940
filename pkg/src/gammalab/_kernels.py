"""Hot inner loops, each with a numba kernel and a pure-numpy twin.

Both variants accumulate in the same order per output node, so they agree to
rounding; the numba path fuses the loops and avoids temporaries.
"""

import numpy as np

from ._accel import njit, use_numba

# direct-summation convolution on a zero-padded flat array


@njit
def _convolve_nb(padded, out_index, offsets, weights):
    out = np.empty(out_index.size)
    for k in range(out_index.size):
        base = out_index[k]
        acc = 0.0
        for t in range(offsets.size):
            acc += weights[t] * padded[base + offsets[t]]
        out[k] = acc
    return out


def _convolve_np(padded, out_index, offsets, weights):
    out = np.zeros(out_index.size)
    for t in range(offsets.size):
        out += weights[t] * padded[out_index + offsets[t]]
    return out


def convolve_flat(padded, out_index, offsets, weights):
    """``out[k] = sum_t weights[t] * padded[out_index[k] + offsets[t]]``."""
    if use_numba():
        return _convolve_nb(padded, out_index, offsets, weights)
    return _convolve_np(padded, out_index, offsets, weights)


# matrix-free stiffness  v -> D^T (w K D v)


@njit
def _stiffness_nb(v, K, shape, strides, inv_h, active):
    n = shape.size
    N = v.size
    out = np.zeros(N)
    g = np.empty(n)
    for idx in range(N):
        if not active[idx]:
            continue
        for a in range(n):
            c = (idx // strides[a]) % shape[a]
            if c + 1 < shape[a]:
                g[a] = (v[idx + strides[a]] - v[idx]) * inv_h[a]
            else:
                g[a] = -v[idx] * inv_h[a]
        for a in range(n):
            q = 0.0
            for b in range(n):
                q += K[idx, a, b] * g[b]
            q *= inv_h[a]
            out[idx] -= q
            c = (idx // strides[a]) % shape[a]
            if c + 1 < shape[a]:
                out[idx + strides[a]] += q
    return out


def _stiffness_np(v, K, shape, inv_h, active):
    n = len(shape)
    vs = v.reshape(shape)
    g = np.empty(tuple(shape) + (n,))
    for a in range(n):
        ga = np.empty(tuple(shape))
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        lo[a] = slice(0, shape[a] - 1)
        hi[a] = slice(1, shape[a])
        ga[tuple(lo)] = (vs[tuple(hi)] - vs[tuple(lo)]) * inv_h[a]
        last = [slice(None)] * n
        last[a] = shape[a] - 1
        ga[tuple(last)] = -vs[tuple(last)] * inv_h[a]
        g[..., a] = ga
    q = np.einsum("...ab,...b->...a", K.reshape(tuple(shape) + (n, n)), g)
    q *= active.reshape(shape)[..., None]
    out = np.zeros(tuple(shape))
    for a in range(n):
        qa = q[..., a] * inv_h[a]
        out -= qa
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        lo[a] = slice(0, shape[a] - 1)
        hi[a] = slice(1, shape[a])
        out[tuple(hi)] += qa[tuple(lo)]
    return out.ravel()


def stiffness_apply(v, K, shape, inv_h, active):
    """Adjoint-of-forward-difference operator ``D^T (K D v)`` restricted to active cells.

    ``v`` is a flat node array, ``K`` an ``(N, n, n)`` array of node tensors and
    ``active`` a boolean flat mask of nodes carrying quadrature weight.
    """
    shape = np.asarray(shape, dtype=np.int64)
    inv_h = np.asarray(inv_h, dtype=float)
    if use_numba():
        strides = np.ones(shape.size, dtype=np.int64)
        for a in range(shape.size - 2, -1, -1):
            strides[a] = strides[a + 1] * shape[a + 1]
        return _stiffness_nb(v, K, shape, strides, inv_h, active)
    return _stiffness_np(v, K, tuple(shape), inv_h, active)
