"""Rounding of near-feasible positive tensors onto the transport polytope.

Each mode is scaled down where its marginal exceeds the target, then the
missing mass is added back as one rank-1 term.  The structured variant does
the same on a scaled network: the diagonal scalings are absorbed into the
scaling vectors and the rank-1 term is kept in factored form.
"""

import numpy as np

from .network import Contractor, Rank1Correction
from .tensor_core import as_tensor, marginal, mode_product, outer

ZERO_RESIDUAL = 1e-14
RESIDUAL_AGREEMENT = 1e-8


def _rank1(residuals):
    m = len(residuals)
    l1 = np.abs(residuals[0]).sum()
    if l1 <= ZERO_RESIDUAL:
        return Rank1Correction(tuple(np.zeros_like(r) for r in residuals), 0.0)
    others = [np.abs(r).sum() for r in residuals[1:]]
    if any(abs(o - l1) > RESIDUAL_AGREEMENT * max(1.0, l1) for o in others):
        raise ArithmeticError("residual masses of the modes disagree after scaling")
    return Rank1Correction(tuple(residuals), float(l1 ** -(m - 1)))


def _check_targets(targets, sizes):
    targets = [np.asarray(r, dtype=np.float64) for r in targets]
    if len(targets) != len(sizes) or any(r.shape != (n,) for r, n in zip(targets, sizes)):
        raise ValueError("need one target vector per mode with matching length")
    return targets


def round_dense(A, targets):
    A = as_tensor(A)
    if not np.all(A > 0):
        raise ValueError("rounding needs a strictly positive tensor")
    targets = _check_targets(targets, A.shape)
    for k in range(A.ndim):
        v = np.minimum(targets[k] / marginal(A, k), 1.0)
        A = mode_product(A, np.diag(v), k)
    corr = _rank1([targets[k] - marginal(A, k) for k in range(A.ndim)])
    if corr.is_zero:
        return A
    return A + corr.scale * outer(*corr.vectors)


def round_structured(net, s, targets, contractor=None):
    """Round the scaled network ``(net, s)``; returns ``(scalings, Rank1Correction)``."""
    c = contractor or Contractor(net)
    targets = _check_targets(targets, net.mode_sizes)
    for k in range(net.order):
        v = np.minimum(targets[k] / c.marginal(s, k), 1.0)
        if np.any(v < 1.0):
            s = s.replace(k, s[k] * v) if k not in s.fixed else _unpin(s, k, v)
    residuals = [targets[k] - c.marginal(s, k) for k in range(net.order)]
    return s, _rank1(residuals)


def _unpin(s, k, v):
    # rounding acts on all modes, including ones the solver kept fixed
    from .network import Scalings

    return Scalings([g * v if j == k else g for j, g in enumerate(s.gammas)])


def rounded_marginals(net, s, correction, contractor=None):
    c = contractor or Contractor(net)
    return [c.marginal(s, k) + correction.marginal(k) for k in range(net.order)]
