"""Dense tensor arithmetic.

Dense tensors are plain C-ordered ``numpy`` arrays of float64 (last index
fastest). They serve as the brute-force reference representation for costs,
kernels and transport plans at desk scale.
"""

import numpy as np


def as_tensor(values, dims=None):
    """Return ``values`` as a float64 C-ordered array, optionally reshaped to ``dims``."""
    T = np.ascontiguousarray(values, dtype=np.float64)
    if dims is not None:
        dims = tuple(int(d) for d in dims)
        if any(d < 1 for d in dims) or len(dims) < 1:
            raise ValueError(f"invalid dims {dims}")
        if T.size != int(np.prod(dims)):
            raise ValueError(f"{T.size} values do not fill dims {dims}")
        T = T.reshape(dims)
    if T.ndim < 1:
        raise ValueError("tensor order must be at least 1")
    return T


def mode_product(T, M, k):
    """Mode-``k`` product ``T x_k M`` for a matrix ``M`` of shape (n_hat, n_k)."""
    T = as_tensor(T)
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M[None, :]
    if not 0 <= k < T.ndim:
        raise IndexError(f"mode {k} out of range for order {T.ndim}")
    if M.ndim != 2 or M.shape[1] != T.shape[k]:
        raise ValueError(f"matrix of shape {M.shape} does not match mode size {T.shape[k]}")
    out = np.tensordot(M, T, axes=([1], [k]))
    return np.ascontiguousarray(np.moveaxis(out, 0, k))


def marginal(T, k):
    """Sum ``T`` over every mode except ``k``."""
    T = as_tensor(T)
    if not 0 <= k < T.ndim:
        raise IndexError(f"mode {k} out of range for order {T.ndim}")
    axes = tuple(j for j in range(T.ndim) if j != k)
    return T.sum(axis=axes)


def marginals(T):
    return [marginal(T, k) for k in range(np.ndim(T))]


def inner(A, B):
    A = as_tensor(A)
    B = as_tensor(B)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    return float(np.dot(A.ravel(), B.ravel()))


def entropy(T):
    """Shannon entropy ``-<T, log T>`` with the convention ``0 log 0 = 0``."""
    T = as_tensor(T)
    if np.any(T < 0):
        raise ValueError("entropy is undefined for negative entries")
    x = T[T > 0]
    return float(-np.dot(x, np.log(x)))


def outer(*vectors):
    if not vectors:
        raise ValueError("outer product needs at least one vector")
    out = np.asarray(vectors[0], dtype=np.float64).ravel()
    for v in vectors[1:]:
        out = np.multiply.outer(out, np.asarray(v, dtype=np.float64).ravel())
    return np.ascontiguousarray(out)


def scale_modes(T, gammas):
    """Multiply ``T`` along every mode ``k`` by ``diag(gammas[k])``."""
    T = as_tensor(T)
    if len(gammas) != T.ndim:
        raise ValueError("need one scaling vector per mode")
    out = T
    for k, g in enumerate(gammas):
        shape = [1] * T.ndim
        shape[k] = -1
        out = out * np.asarray(g, dtype=np.float64).reshape(shape)
    return out
