"""Graphical-model costs and their Gibbs kernels.

A cost tensor of the form ``C[I] = sum_a C^a[I_a]`` is stored as a set of
small factors attached to index tuples ``a``; its Gibbs kernel is the
product of the elementwise exponentials ``K^a = exp(-C^a / eta)``.

Modes are numbered from 0.
"""

from dataclasses import dataclass, field

import numpy as np

DEFAULT_BUDGET = 10**7


class BudgetExceeded(ValueError):
    """Raised when materializing a dense tensor would exceed the entry budget."""


class PositivityError(ValueError):
    """Raised when a kernel approximation produces a nonpositive entry."""


def _check_alpha(alpha, m=None):
    alpha = tuple(int(a) for a in alpha)
    if not alpha:
        raise ValueError("index tuple must be non-empty")
    if any(b <= a for a, b in zip(alpha, alpha[1:])):
        raise ValueError(f"index tuple {alpha} must be strictly increasing")
    if alpha[0] < 0 or (m is not None and alpha[-1] >= m):
        raise ValueError(f"index tuple {alpha} out of range")
    return alpha


@dataclass(frozen=True)
class CostFactor:
    alpha: tuple
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", _check_alpha(self.alpha))
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != len(self.alpha):
            raise ValueError(f"factor on {self.alpha} needs order {len(self.alpha)}")
        if np.any(values < 0):
            raise ValueError("cost factors must be non-negative")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class KernelFactor:
    """A Gibbs kernel factor, either dense or a low-rank pair ``U @ V.T``."""

    alpha: tuple
    dense: np.ndarray = None
    U: np.ndarray = None
    V: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "alpha", _check_alpha(self.alpha))
        if (self.dense is None) == (self.U is None):
            raise ValueError("give exactly one of a dense tensor or a (U, V) pair")
        if self.dense is not None:
            dense = np.ascontiguousarray(self.dense, dtype=np.float64)
            if dense.ndim != len(self.alpha):
                raise ValueError(f"factor on {self.alpha} needs order {len(self.alpha)}")
            if not np.all(dense > 0):
                raise PositivityError("dense kernel factors must be strictly positive")
            object.__setattr__(self, "dense", dense)
        else:
            if len(self.alpha) != 2:
                raise ValueError("low-rank form is only available for matrix factors")
            U = np.ascontiguousarray(self.U, dtype=np.float64)
            V = np.ascontiguousarray(self.V, dtype=np.float64)
            if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1]:
                raise ValueError("U and V must be matrices with equal column count")
            object.__setattr__(self, "U", U)
            object.__setattr__(self, "V", V)

    @property
    def is_lowrank(self):
        return self.U is not None

    @property
    def rank(self):
        return self.U.shape[1] if self.is_lowrank else None

    @property
    def shape(self):
        if self.is_lowrank:
            return (self.U.shape[0], self.V.shape[0])
        return self.dense.shape

    def to_dense(self):
        if self.is_lowrank:
            return self.U @ self.V.T
        return self.dense

    def entries(self, idx):
        """Entries at the factor-local multi-indices ``idx`` (shape ``(s, len(alpha))``)."""
        idx = np.asarray(idx)
        if self.is_lowrank:
            return np.einsum("sr,sr->s", self.U[idx[:, 0]], self.V[idx[:, 1]])
        return self.dense[tuple(idx.T)]


def _check_coverage(mode_sizes, factors, shape_of):
    m = len(mode_sizes)
    covered = set()
    for f in factors:
        _check_alpha(f.alpha, m)
        expected = tuple(mode_sizes[a] for a in f.alpha)
        if tuple(shape_of(f)) != expected:
            raise ValueError(f"factor on {f.alpha} has shape {shape_of(f)}, expected {expected}")
        covered.update(f.alpha)
    missing = sorted(set(range(m)) - covered)
    if missing:
        raise ValueError(f"modes {missing} appear in no factor")


@dataclass(frozen=True)
class CostModel:
    mode_sizes: tuple
    factors: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "mode_sizes", tuple(int(n) for n in self.mode_sizes))
        object.__setattr__(self, "factors", tuple(self.factors))
        if any(n < 1 for n in self.mode_sizes):
            raise ValueError("mode sizes must be positive")
        _check_coverage(self.mode_sizes, self.factors, lambda f: f.values.shape)

    @property
    def order(self):
        return len(self.mode_sizes)

    def sup_norm(self):
        """Max entry of the assembled cost (sum of factor maxima is exact only for trees)."""
        if _size(self.mode_sizes) <= DEFAULT_BUDGET:
            return float(assemble_dense_cost(self).max())
        return float(sum(f.values.max() for f in self.factors))


@dataclass(frozen=True)
class KernelModel:
    mode_sizes: tuple
    factors: tuple
    eta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mode_sizes", tuple(int(n) for n in self.mode_sizes))
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        _check_coverage(self.mode_sizes, self.factors, lambda f: f.shape)

    @property
    def order(self):
        return len(self.mode_sizes)

    @property
    def alphas(self):
        return [f.alpha for f in self.factors]

    def entries(self, idx):
        """Kernel entries at full multi-indices ``idx`` of shape ``(s, m)``."""
        idx = np.atleast_2d(np.asarray(idx, dtype=np.intp))
        out = np.ones(idx.shape[0])
        for f in self.factors:
            out *= f.entries(idx[:, list(f.alpha)])
        return out

    def replace_factors(self, factors):
        return KernelModel(self.mode_sizes, factors, self.eta)


def _size(dims):
    return int(np.prod([int(d) for d in dims], dtype=object))


def _embed(values, alpha, m):
    """Reshape a factor so that it broadcasts against an order-``m`` tensor."""
    shape = [1] * m
    for a, n in zip(alpha, values.shape):
        shape[a] = n
    return values.reshape(shape)


def gibbs_factors(C, eta):
    if not eta > 0:
        raise ValueError("eta must be positive")
    factors = [KernelFactor(f.alpha, dense=np.exp(-(f.values / eta))) for f in C.factors]
    return KernelModel(C.mode_sizes, factors, eta)


def assemble_dense_cost(C, budget=DEFAULT_BUDGET):
    if _size(C.mode_sizes) > budget:
        raise BudgetExceeded(f"{C.mode_sizes} exceeds the budget of {budget} entries")
    out = np.zeros(C.mode_sizes)
    for f in C.factors:
        out = out + _embed(f.values, f.alpha, C.order)
    return out


def assemble_dense_kernel(K, budget=DEFAULT_BUDGET):
    if _size(K.mode_sizes) > budget:
        raise BudgetExceeded(f"{K.mode_sizes} exceeds the budget of {budget} entries")
    out = np.ones(K.mode_sizes)
    for f in K.factors:
        values = f.to_dense()
        if f.is_lowrank and not np.all(values > 0):
            raise PositivityError(
                f"low-rank factor on {f.alpha} has nonpositive entries; rank too small"
            )
        out = out * _embed(values, f.alpha, K.order)
    return out


def sqdist_cost(X, Y):
    """Pairwise squared Euclidean distances between the rows of ``X`` and ``Y``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[0] == 0 or Y.shape[0] == 0:
        raise ValueError("point sets must be non-empty")
    if X.shape[1] != Y.shape[1]:
        raise ValueError("point dimensions differ")
    D = np.empty((X.shape[0], Y.shape[0]))
    step = max(1, 2**22 // max(1, Y.size))
    for start in range(0, X.shape[0], step):
        diff = X[start:start + step, None, :] - Y[None, :, :]
        D[start:start + step] = np.einsum("ijd,ijd->ij", diff, diff)
    return D


def chain_cost(points, pairs=None):
    """Cost model ``sum ||x^(a)_i - x^(b)_j||^2`` over consecutive point sets."""
    m = len(points)
    if pairs is None:
        pairs = [(k, k + 1) for k in range(m - 1)]
    factors = [CostFactor((a, b), sqdist_cost(points[a], points[b])) for a, b in pairs]
    return CostModel(tuple(len(p) for p in points), factors)
