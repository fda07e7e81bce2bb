"""Multi-marginal Sinkhorn scaling over an abstract marginal oracle.

The solver only needs the marginals of the current scaled kernel, so the same
loop runs on a dense kernel tensor, on a factor network, or on a network with
low-rank factors.  Scalings are kept multiplicatively (``gamma = exp(beta)``)
and updated by ``gamma_k <- gamma_k * r_k / r_k(P)``.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .factor_model import KernelModel, PositivityError
from .network import Contractor, FactorNetwork, Scalings, build_network
from .tensor_core import as_tensor, scale_modes

SELECTIONS = ("cyclic", "greedy_distance", "greedy_projection")
STOPPINGS = ("l1_sum", "projection")


class DenseOracle:
    """Marginals of a materialized kernel tensor."""

    def __init__(self, K):
        self.K = as_tensor(K)
        if not np.all(self.K > 0):
            raise PositivityError("dense kernel must be strictly positive")
        self.mode_sizes = self.K.shape
        self.flops = 0

    def all_marginals(self, s):
        P = scale_modes(self.K, s.gammas)
        m = P.ndim
        self.flops += (2 * m) * P.size
        return [P.sum(axis=tuple(j for j in range(m) if j != k)) for k in range(m)]

    def marginal(self, s, k):
        return self.all_marginals(s)[k]


class NetworkOracle:
    """Marginals of a factor network, with intermediates reused across iterations."""

    def __init__(self, net):
        if isinstance(net, KernelModel):
            net = build_network(net)
        self.net = net
        self.mode_sizes = net.mode_sizes
        self.contractor = Contractor(net)

    @property
    def flops(self):
        return self.contractor.flops

    def all_marginals(self, s):
        return self.contractor.all_marginals(s)

    def marginal(self, s, k):
        return self.contractor.marginal(s, k)


def as_oracle(obj):
    if isinstance(obj, (DenseOracle, NetworkOracle)) or hasattr(obj, "all_marginals"):
        return obj
    if isinstance(obj, (KernelModel, FactorNetwork)):
        return NetworkOracle(obj)
    return DenseOracle(obj)


@dataclass
class SinkhornConfig:
    eta: float = 1.0
    eps_stop: float = 1e-4
    selection: str = "greedy_projection"
    stopping: str = "projection"
    update_set: tuple = None
    max_iters: int = 100_000
    normalize_first: bool = False

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.eps_stop > 0:
            raise ValueError("eps_stop must be positive")
        if self.selection not in SELECTIONS:
            raise ValueError(f"selection must be one of {SELECTIONS}")
        if self.stopping not in STOPPINGS:
            raise ValueError(f"stopping must be one of {STOPPINGS}")
        if self.update_set is not None:
            self.update_set = tuple(sorted(set(int(k) for k in self.update_set)))
            if not self.update_set:
                raise ValueError("update_set must be non-empty")


@dataclass
class SinkhornRecord:
    t: int
    k_next: int
    residual: float
    scalings: Scalings


@dataclass
class SinkhornResult:
    scalings: Scalings
    iterations: int
    residual_history: list
    converged: bool
    selected_indices: list
    marginals: list = field(repr=False)
    flops: int = 0

    @property
    def betas(self):
        return self.scalings.betas


def l1_residual(margs, targets, modes):
    return float(sum(np.abs(margs[k] - targets[k]).sum() for k in modes))


def distance_quantity(marg, target):
    """``1'(r(P) - r) + sum r log(r / r(P))``: the Bregman gap of one mode."""
    return float(np.sum(marg - target) + np.dot(target, np.log(target / marg)))


def projection_quantity(marg, target):
    """l1 norm of ``r(P)`` minus its orthogonal projection onto ``r``."""
    coef = np.dot(target, marg) / np.dot(target, target)
    return float(np.abs(marg - coef * target).sum())


def _argmax(values, modes):
    best = modes[0]
    for k in modes[1:]:
        if values[k] > values[best]:
            best = k
    return best


def select_greedy_distance(margs, targets, modes):
    return _argmax({k: distance_quantity(margs[k], targets[k]) for k in modes}, list(modes))


def select_greedy_projection(margs, targets, modes):
    return _argmax({k: projection_quantity(margs[k], targets[k]) for k in modes}, list(modes))


def stopping_l1(margs, targets, eps, modes=None):
    modes = range(len(margs)) if modes is None else modes
    return l1_residual(margs, targets, modes) <= eps


def stopping_projection(margs, targets, eps, m=None, modes=None):
    modes = list(range(len(margs)) if modes is None else modes)
    m = len(modes) if m is None else m
    worst = max(projection_quantity(margs[k], targets[k]) for k in modes)
    return worst < eps / (2 * m) or worst == 0.0


def _check_targets(targets, modes, mode_sizes):
    out = [None] * len(mode_sizes)
    for k in modes:
        r = np.asarray(targets[k], dtype=np.float64)
        if r.shape != (mode_sizes[k],):
            raise ValueError(f"target {k} has shape {r.shape}, expected ({mode_sizes[k]},)")
        if not np.all(r > 0):
            raise ValueError(f"target {k} must be strictly positive")
        if abs(r.sum() - 1.0) > 1e-12:
            raise ValueError(f"target {k} must sum to 1 (sums to {r.sum()!r})")
        out[k] = r
    return out


def solve(oracle, targets, cfg=None, callback=None):
    """Run Sinkhorn scaling until the configured stopping rule holds.

    ``targets`` has one entry per mode; entries of modes outside
    ``cfg.update_set`` are ignored (and may be ``None``), their scalings stay
    pinned to ones.  ``callback`` receives a ``SinkhornRecord`` after each update.
    """
    cfg = cfg or SinkhornConfig()
    oracle = as_oracle(oracle)
    sizes = tuple(oracle.mode_sizes)
    m = len(sizes)
    modes = list(cfg.update_set) if cfg.update_set is not None else list(range(m))
    if modes[0] < 0 or modes[-1] >= m:
        raise ValueError("update_set out of range")
    targets = _check_targets(targets, modes, sizes)
    s = Scalings.ones(sizes, fixed=set(range(m)) - set(modes))
    margs = oracle.all_marginals(s)
    if cfg.normalize_first:
        k0 = modes[0]
        s = s.replace(k0, s[k0] / margs[k0].sum())
        margs = oracle.all_marginals(s)

    if cfg.stopping == "l1_sum":
        def done(margs):
            return stopping_l1(margs, targets, cfg.eps_stop, modes)
    else:
        def done(margs):
            return stopping_projection(margs, targets, cfg.eps_stop, len(modes), modes)

    history = [l1_residual(margs, targets, modes)]
    selected = []
    t = 0
    converged = done(margs)
    while not converged and t < cfg.max_iters:
        if cfg.selection == "cyclic":
            k = modes[t % len(modes)]
        elif cfg.selection == "greedy_distance":
            k = select_greedy_distance(margs, targets, modes)
        else:
            k = select_greedy_projection(margs, targets, modes)
        if not np.all(margs[k] > 0):
            raise PositivityError(f"marginal {k} has nonpositive entries")
        s = s.replace(k, s[k] * (targets[k] / margs[k]))
        margs = oracle.all_marginals(s)
        t += 1
        selected.append(k)
        history.append(l1_residual(margs, targets, modes))
        if callback is not None:
            callback(SinkhornRecord(t, k, history[-1], s))
        converged = done(margs)
    return SinkhornResult(s, t, history, converged, selected, margs, getattr(oracle, "flops", 0))


def _warn_eta(eta):
    if not 0 < eta < 0.5:
        warnings.warn("iteration bounds assume 0 < eta < 1/2", stacklevel=3)


def iteration_bound_a(C_inf, targets, eta, eps_stop, m=None):
    """Iteration bound for greedy-distance selection with the l1 stopping rule."""
    _warn_eta(eta)
    low = min(float(np.min(r)) for r in targets)
    if not low > 0:
        raise ValueError("targets must be strictly positive")
    m = len(targets) if m is None else m
    return 2.0 + 2.0 * m**2 / eps_stop * (C_inf / eta - math.log(low))


def iteration_bound_b(n, m, eta, eps_stop, K_l1_norm):
    """Iteration bound for greedy-projection selection with the projection stopping rule.

    ``n`` is the common mode size; a sequence of unequal sizes is rejected.
    """
    _warn_eta(eta)
    if np.ndim(n) > 0:
        sizes = set(int(x) for x in n)
        if len(sizes) != 1:
            raise ValueError("bound requires equal mode sizes")
        n = sizes.pop()
    return 8.0 * m**2 * (math.sqrt(n) + 1.0) ** 2 / eps_stop**2 * math.log(K_l1_norm / eta)
