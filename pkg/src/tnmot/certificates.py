"""A-priori error certificates for Sinkhorn with an approximate Gibbs kernel."""

import math
from dataclasses import dataclass, replace


class HypothesisError(ValueError):
    """Raised when a budget lies outside the regime where a bound is proven."""


@dataclass(frozen=True)
class ErrorBudget:
    eps_log: float
    eps_stop: float
    eta: float
    dims: tuple
    C_inf: float

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))

    @property
    def n_entries(self):
        return math.prod(self.dims)


def _validate(b, strict):
    if b.eta <= 0 or b.eps_stop <= 0 or b.eps_log < 0 or b.C_inf < 0:
        raise HypothesisError("budget entries must be positive")
    if strict:
        if b.eps_log > 1:
            raise HypothesisError(f"eps_log = {b.eps_log:.3g} exceeds 1")
        if len(b.dims) < 2 or min(b.dims) < 2:
            raise HypothesisError("need at least two modes of size at least 2")


def epsilon_entropic(b, strict=True):
    """Bound on the entropic-cost gap of the plan returned with an approximate kernel.

    With ``strict=False`` the formula is evaluated even when ``eps_log > 1``;
    the result is then no longer a proven bound.
    """
    _validate(b, strict)
    N1 = b.n_entries - 1
    e, s = b.eps_log, b.eps_stop
    log_term = e * (2 + math.log(2 / e)) if e > 0 else 0.0
    inner = log_term + e / 2 * math.log(N1) + 2 * s * math.log(N1 / s)
    return b.eta * inner + (e + 2 * s) * b.C_inf


def epsilon_total(b, strict=True):
    """Accuracy of the rounded plan relative to the unregularized optimum."""
    _validate(b, strict)
    return (
        2 * b.eta * b.eps_log
        + 2 * b.eta * sum(math.log(n) for n in b.dims)
        + 4 * b.C_inf * b.eps_stop
    )


def compose_factor_errors(per_factor):
    """Sum of per-factor log errors; bounds the log error of the product kernel."""
    per_factor = [float(x) for x in per_factor]
    if any(x < 0 for x in per_factor):
        raise ValueError("factor errors must be non-negative")
    return math.fsum(per_factor)


def normalized_budget(b):
    """Budget for the cost rescaled to unit sup norm (eta rescaled alike)."""
    if not b.C_inf > 0:
        raise ValueError("cannot normalize a zero cost")
    alpha = 1.0 / b.C_inf
    return replace(b, C_inf=1.0, eta=b.eta * alpha)
