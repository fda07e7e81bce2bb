"""Low-rank approximations of kernel factors and of whole kernels.

Matrix factors are compressed with a truncated or randomized SVD and turned
into ``KernelFactor`` pairs ``U' = U diag(s)``, ``V' = V``.  ``tt_svd`` builds
a tensor-train approximation of a materialized tensor by sequential
truncated SVDs of its unfoldings.
"""

from dataclasses import dataclass

import numpy as np

from .factor_model import DEFAULT_BUDGET, KernelFactor, KernelModel, PositivityError

POSITIVITY_SAMPLES = 10_000


@dataclass(frozen=True)
class SvdResult:
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray

    @property
    def rank(self):
        return self.singular_values.size

    def reconstruct(self):
        return (self.U * self.singular_values) @ self.V.T


def _as_matrix(M):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError("expected a matrix")
    return M


def truncated_svd(M, r):
    M = _as_matrix(M)
    if not 1 <= r <= min(M.shape):
        raise ValueError(f"rank {r} out of range for shape {M.shape}")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    return SvdResult(U[:, :r].copy(), s[:r].copy(), Vt[:r].T.copy())


def _rng(seed):
    # Philox is counter-based, so streams are reproducible across platforms
    return np.random.Generator(np.random.Philox(int(seed) % 2**64))


def _range_finder(M, width, power_iters, seed):
    rng = _rng(seed)
    Q, _ = np.linalg.qr(M @ rng.standard_normal((M.shape[1], width)))
    for _ in range(power_iters):
        Z, _ = np.linalg.qr(M.T @ Q)
        Q, _ = np.linalg.qr(M @ Z)
    return Q


def randomized_svd(M, r, oversample=10, power_iters=2, seed=0):
    """Randomized range-finder SVD with a seeded Gaussian test matrix."""
    M = _as_matrix(M)
    if r < 1 or r + oversample > min(M.shape):
        raise ValueError(f"rank {r} with oversampling {oversample} exceeds {min(M.shape)}")
    Q = _range_finder(M, r + oversample, power_iters, seed)
    Ub, s, Vt = np.linalg.svd(Q.T @ M, full_matrices=False)
    return SvdResult(Q @ Ub[:, :r], s[:r].copy(), Vt[:r].T.copy())


def _symmetric_factors(M, r, method, oversample, power_iters, seed):
    """Best rank-``r`` symmetric factorization ``(V diag(lam), V)`` of a symmetric matrix."""
    if method == "exact":
        lam, W = np.linalg.eigh(M)
        Q = None
    else:
        width = min(r + oversample, M.shape[0])
        Q = _range_finder(M, width, power_iters, seed)
        lam, W = np.linalg.eigh(Q.T @ M @ Q)
    keep = np.argsort(-np.abs(lam), kind="stable")[:r]
    V = W[:, keep] if Q is None else Q @ W[:, keep]
    return V * lam[keep], V


def lowrank_kernel_factor(
    K_alpha,
    r,
    method="exact",
    seed=0,
    alpha=(0, 1),
    validate=True,
    symmetric=None,
    oversample=10,
    power_iters=2,
):
    """Rank-``r`` ``KernelFactor`` approximating the positive matrix ``K_alpha``.

    Symmetric inputs get a symmetric factorization, so the approximation stays
    symmetric.  With ``validate`` the reconstruction is checked for strict
    positivity (all entries at desk scale, a seeded sample above it) and a
    ``PositivityError`` is raised if the rank is too small.
    """
    K_alpha = _as_matrix(K_alpha)
    if not np.all(K_alpha > 0):
        raise PositivityError("kernel factor must be strictly positive")
    if method not in ("exact", "randomized"):
        raise ValueError(f"unknown method {method!r}")
    if not 1 <= r <= min(K_alpha.shape):
        raise ValueError(f"rank {r} out of range for shape {K_alpha.shape}")
    if symmetric is None:
        symmetric = K_alpha.shape[0] == K_alpha.shape[1] and np.array_equal(K_alpha, K_alpha.T)
    if symmetric:
        U, V = _symmetric_factors(K_alpha, r, method, oversample, power_iters, seed)
    else:
        if method == "exact" or r + oversample > min(K_alpha.shape):
            svd = truncated_svd(K_alpha, r)
        else:
            svd = randomized_svd(K_alpha, r, oversample, power_iters, seed)
        U, V = svd.U * svd.singular_values, svd.V
    factor = KernelFactor(tuple(alpha), U=U, V=V)
    if validate:
        check_factor_positivity(factor, seed=seed)
    return factor


def check_factor_positivity(factor, budget=DEFAULT_BUDGET, samples=POSITIVITY_SAMPLES, seed=0):
    n1, n2 = factor.shape
    if n1 * n2 <= budget:
        low = factor.to_dense().min()
    else:
        rng = _rng(seed)
        idx = np.stack([rng.integers(0, n1, samples), rng.integers(0, n2, samples)], axis=1)
        low = factor.entries(idx).min()
    if not low > 0:
        raise PositivityError(
            f"rank-{factor.rank} factor on {factor.alpha} is not strictly positive"
            f" (min entry {low:.3e}); rank too small for positivity"
        )


def lowrank_kernel(K, r, method="exact", seed=0, validate=True):
    """Replace every matrix factor of the kernel model ``K`` by a rank-``r`` pair."""
    factors = []
    for j, f in enumerate(K.factors):
        if len(f.alpha) == 2 and r < min(f.shape):
            factors.append(
                lowrank_kernel_factor(
                    f.to_dense(), r, method, seed=seed + j, alpha=f.alpha, validate=validate
                )
            )
        else:
            factors.append(f)
    return K.replace_factors(factors)


def _dense_of(K):
    from .factor_model import assemble_dense_kernel

    if isinstance(K, KernelModel):
        return assemble_dense_kernel(K)
    if isinstance(K, TTCores):
        return K.to_dense()
    return np.asarray(K, dtype=np.float64)


def _entries_of(K, idx):
    if isinstance(K, np.ndarray):
        return K[tuple(idx.T)]
    return K.entries(idx)


def _log_gap(a, b):
    if not (np.all(a > 0) and np.all(b > 0)):
        raise PositivityError("log error needs strictly positive entries")
    return float(np.max(np.abs(np.log(a) - np.log(b))))


def log_error(K, K_approx, mode="exact", count=1000, seed=0):
    """``max |log K - log K_approx|`` over all entries, or over ``count`` uniform samples.

    ``K`` and ``K_approx`` may be dense arrays, ``KernelModel`` or ``TTCores``.
    The sampled value is a lower bound of the exact one.
    """
    if mode == "exact":
        A, B = _dense_of(K), _dense_of(K_approx)
        if A.shape != B.shape:
            raise ValueError("kernels have different shapes")
        return _log_gap(A.ravel(), B.ravel())
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    dims = K.shape if isinstance(K, np.ndarray) else K.mode_sizes
    rng = _rng(seed)
    idx = np.stack([rng.integers(0, n, count) for n in dims], axis=1)
    return _log_gap(_entries_of(K, idx), _entries_of(K_approx, idx))


def factor_log_errors(K, K_approx):
    """Exact per-factor ``||log K^a - log K~^a||_inf`` for two models with the same structure."""
    out = []
    for f, g in zip(K.factors, K_approx.factors):
        if f.alpha != g.alpha:
            raise ValueError("kernel models have different factor structure")
        out.append(_log_gap(f.to_dense().ravel(), g.to_dense().ravel()))
    return out


@dataclass(frozen=True)
class TTCores:
    """Tensor-train cores, stored uniformly as order-3 arrays ``(r_prev, n_k, r_next)``.

    The boundary ranks are 1, so the first and last cores are ``n_1 x r_1`` and
    ``r_{m-1} x n_m`` matrices with a unit axis.
    """

    cores: tuple

    def __post_init__(self):
        cores = tuple(np.ascontiguousarray(G, dtype=np.float64) for G in self.cores)
        if not cores or any(G.ndim != 3 for G in cores):
            raise ValueError("cores must be a non-empty sequence of order-3 arrays")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        for A, B in zip(cores, cores[1:]):
            if A.shape[2] != B.shape[0]:
                raise ValueError("inconsistent rank chain between adjacent cores")
        object.__setattr__(self, "cores", cores)

    @property
    def mode_sizes(self):
        return tuple(G.shape[1] for G in self.cores)

    @property
    def ranks(self):
        return tuple(G.shape[2] for G in self.cores[:-1])

    def to_dense(self):
        out = self.cores[0][0]
        for G in self.cores[1:]:
            out = np.tensordot(out, G, axes=([-1], [0]))
        return out[..., 0]

    def entries(self, idx):
        idx = np.atleast_2d(np.asarray(idx, dtype=np.intp))
        v = self.cores[0][0, idx[:, 0], :]
        for k, G in enumerate(self.cores[1:], start=1):
            v = np.einsum("sa,asb->sb", v, G[:, idx[:, k], :])
        return v[:, 0]


def tt_svd(T, ranks):
    """Tensor-train approximation by sequential truncated SVDs.

    Requested ranks above the rank of an unfolding are clipped to it.
    """
    T = np.asarray(T, dtype=np.float64)
    dims = T.shape
    ranks = [int(r) for r in ranks]
    if len(ranks) != len(dims) - 1 or any(r < 1 for r in ranks):
        raise ValueError(f"need {len(dims) - 1} positive ranks, got {ranks}")
    cores = []
    r_prev = 1
    W = T.reshape(1, -1)
    for k, n in enumerate(dims[:-1]):
        W = W.reshape(r_prev * n, -1)
        U, s, Vt = np.linalg.svd(W, full_matrices=False)
        r = min(ranks[k], s.size)
        cores.append(U[:, :r].reshape(r_prev, n, r))
        W = s[:r, None] * Vt[:r]
        r_prev = r
    cores.append(W.reshape(r_prev, dims[-1], 1))
    return TTCores(tuple(cores))
