"""Tensor-network representation of factored Gibbs kernels.

Every kernel factor becomes a vertex whose legs carry mode labels (integers)
or internal bond labels (strings, e.g. the rank edge between the ``U`` and
``V`` halves of a low-rank factor).  The delta tensors tying together all legs
of one mode are never materialized: eliminating a mode label multiplies every
tensor carrying it elementwise and sums the label out in one fused step.

Contraction is planned by greedy variable elimination.  Flops follow the
"additions and multiplications" convention: a pairwise elementwise product
costs the size of its result, summing out a label of size ``n`` from a tensor
of size ``S`` costs ``S - S / n``.  Under this convention a dense ``n x n``
matrix-vector product costs ``n(2n - 1)``.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .factor_model import PositivityError, _check_alpha

_TOKENS = itertools.count()


@dataclass(frozen=True)
class Vertex:
    name: str
    legs: tuple
    tensor: np.ndarray


def _label_key(label):
    return (0, label, "") if isinstance(label, (int, np.integer)) else (1, 0, str(label))


class FactorNetwork:
    """Kernel-factor vertices joined through virtual per-mode delta nodes."""

    def __init__(self, mode_sizes, vertices, bond_sizes=None):
        self.mode_sizes = tuple(int(n) for n in mode_sizes)
        self.vertices = tuple(vertices)
        self.bond_sizes = dict(bond_sizes or {})
        m = len(self.mode_sizes)
        seen_modes = set()
        bond_count = {}
        for v in self.vertices:
            if v.tensor.ndim != len(v.legs) or len(set(v.legs)) != len(v.legs):
                raise ValueError(f"vertex {v.name} legs {v.legs} do not match its tensor")
            for leg, n in zip(v.legs, v.tensor.shape):
                if isinstance(leg, (int, np.integer)):
                    if not 0 <= leg < m:
                        raise ValueError(f"vertex {v.name} has mode leg {leg} out of range")
                    expected = self.mode_sizes[leg]
                    seen_modes.add(int(leg))
                else:
                    expected = self.bond_sizes.setdefault(leg, n)
                    bond_count[leg] = bond_count.get(leg, 0) + 1
                if n != expected:
                    raise ValueError(f"vertex {v.name} leg {leg} has size {n}, expected {expected}")
        missing = sorted(set(range(m)) - seen_modes)
        if missing:
            raise ValueError(f"modes {missing} are attached to no vertex")
        dangling = [b for b, c in bond_count.items() if c != 2]
        if dangling:
            raise ValueError(f"bond edges {dangling} must join exactly two vertices")

    @property
    def order(self):
        return len(self.mode_sizes)

    def label_size(self, label):
        if isinstance(label, (int, np.integer)):
            return self.mode_sizes[label]
        return self.bond_sizes[label]

    def delta_degree(self, k):
        """Order of the delta node of mode ``k``: incident factor legs plus the open edge."""
        return sum(k in v.legs for v in self.vertices) + 1

    @property
    def delta_degrees(self):
        return {k: self.delta_degree(k) for k in range(self.order)}

    @property
    def edges(self):
        """Internal edges as ``(vertex name, label)`` pairs; delta legs and bonds alike."""
        return [(v.name, leg) for v in self.vertices for leg in v.legs]

    def __repr__(self):
        names = ", ".join(v.name for v in self.vertices)
        return f"FactorNetwork(mode_sizes={self.mode_sizes}, vertices=[{names}])"


def build_network(K):
    """Network of a ``KernelModel``; low-rank factors contribute a ``U``-``V`` pair."""
    vertices = []
    bonds = {}
    for j, f in enumerate(K.factors):
        tag = ",".join(str(a) for a in f.alpha)
        if f.is_lowrank:
            bond = f"r{j}"
            bonds[bond] = f.rank
            vertices.append(Vertex(f"U({tag})", (f.alpha[0], bond), f.U))
            vertices.append(Vertex(f"V({tag})", (f.alpha[1], bond), f.V))
        else:
            vertices.append(Vertex(f"K({tag})", f.alpha, f.dense))
    return FactorNetwork(K.mode_sizes, vertices, bonds)


def network_from_tt(tt):
    """Network of a tensor train: one vertex per core, bonds between neighbours."""
    vertices = []
    bonds = {}
    last = len(tt.cores) - 1
    for k, G in enumerate(tt.cores):
        legs = [k]
        tensor = G
        if k > 0:
            legs.insert(0, f"t{k - 1}")
            bonds[f"t{k - 1}"] = G.shape[0]
        else:
            tensor = tensor[0]
        if k < last:
            legs.append(f"t{k}")
        else:
            tensor = tensor[..., 0]
        vertices.append(Vertex(f"G{k + 1}", tuple(legs), np.ascontiguousarray(tensor)))
    return FactorNetwork(tt.mode_sizes, vertices, bonds)


class Scalings:
    """Positive scaling vectors ``gamma_k = exp(beta_k)``, one per mode.

    Each vector carries a unique token; replacing a vector issues a new token,
    which is how cached contractions notice stale inputs.
    """

    def __init__(self, gammas, fixed=()):
        gammas = tuple(np.asarray(g, dtype=np.float64).copy() for g in gammas)
        for g in gammas:
            if g.ndim != 1 or not np.all(g > 0):
                raise ValueError("scalings must be strictly positive vectors")
            g.setflags(write=False)
        self.gammas = gammas
        self.fixed = frozenset(int(k) for k in fixed)
        self.tokens = tuple(next(_TOKENS) for _ in gammas)

    @classmethod
    def ones(cls, mode_sizes, fixed=()):
        return cls([np.ones(n) for n in mode_sizes], fixed)

    @classmethod
    def from_betas(cls, betas, fixed=()):
        return cls([np.exp(b) for b in betas], fixed)

    def __len__(self):
        return len(self.gammas)

    def __getitem__(self, k):
        return self.gammas[k]

    @property
    def betas(self):
        return [np.log(g) for g in self.gammas]

    def replace(self, k, gamma):
        if k in self.fixed:
            raise ValueError(f"scaling of mode {k} is pinned")
        out = Scalings.__new__(Scalings)
        gamma = np.asarray(gamma, dtype=np.float64).copy()
        if gamma.shape != self.gammas[k].shape or not np.all(gamma > 0):
            raise ValueError("replacement scaling must be a positive vector of the same length")
        gamma.setflags(write=False)
        out.gammas = self.gammas[:k] + (gamma,) + self.gammas[k + 1:]
        out.fixed = self.fixed
        out.tokens = self.tokens[:k] + (next(_TOKENS),) + self.tokens[k + 1:]
        return out

    def check(self, mode_sizes):
        if tuple(g.size for g in self.gammas) != tuple(mode_sizes):
            raise ValueError("scaling lengths do not match the mode sizes")


@dataclass(frozen=True)
class Step:
    """One fused contraction: multiply ``operands`` and sum out ``eliminate`` (if any)."""

    operands: tuple
    result: int
    eliminate: object
    legs: tuple
    leaves: frozenset
    eliminated: frozenset
    flops: int


@dataclass(frozen=True)
class ContractionPlan:
    outputs: tuple
    steps: tuple
    result: int
    leaves: dict = field(repr=False, compare=False, default=None)

    @property
    def flops(self):
        return sum(s.flops for s in self.steps)

    @property
    def order(self):
        return [s.eliminate for s in self.steps if s.eliminate is not None]


def flops(plan):
    return int(plan.flops)


def _size(net, legs):
    out = 1
    for leg in legs:
        out *= net.label_size(leg)
    return out


def _fuse_cost(net, operand_legs, eliminate):
    # smallest operands are multiplied first
    order = sorted(range(len(operand_legs)), key=lambda i: _size(net, operand_legs[i]))
    legs = set(operand_legs[order[0]])
    cost = 0
    for i in order[1:]:
        legs |= set(operand_legs[i])
        cost += _size(net, legs)
    if eliminate is not None:
        total = _size(net, legs)
        cost += total - total // net.label_size(eliminate)
    return cost


def _leaf_table(net):
    """Leaf ids: vertices first, then one scaling vector per mode."""
    table = {}
    for i, v in enumerate(net.vertices):
        table[i] = tuple(v.legs)
    V = len(net.vertices)
    for k in range(net.order):
        table[V + k] = (k,)
    return table


def plan_contraction(net, outputs, order=None):
    """Plan the contraction of the scaled network down to the ``outputs`` mode labels.

    Without ``order`` the greedy rule eliminates, at each step, the label whose
    fused step spans the fewest mode labels, then the smallest joint index
    space, then the smallest result, then the lowest label.  Counting mode
    labels first keeps intermediates linear in the mode size when bond
    (rank) sizes are much smaller than mode sizes.  An explicit ``order``
    must list every label to be eliminated.
    """
    outputs = tuple(int(k) for k in outputs)
    if len(set(outputs)) != len(outputs) or any(not 0 <= k < net.order for k in outputs):
        raise ValueError(f"invalid output modes {outputs}")
    leaves = _leaf_table(net)
    active = {i: (legs, frozenset([i]), frozenset()) for i, legs in leaves.items()}
    next_id = len(leaves)
    steps = []
    pending = sorted({leg for legs, _, _ in active.values() for leg in legs} - set(outputs), key=_label_key)
    if order is not None:
        order = list(order)
        if sorted(order, key=_label_key) != pending:
            raise ValueError("explicit order must list every non-output label exactly once")
    while pending:
        if order is not None:
            x = order.pop(0)
        else:
            def score(lbl):
                joint = set()
                for legs, _, _ in active.values():
                    if lbl in legs:
                        joint |= set(legs)
                modes = sum(isinstance(leg, (int, np.integer)) for leg in joint)
                return (modes, _size(net, joint), _size(net, joint - {lbl}), _label_key(lbl))

            x = min(pending, key=score)
        pending.remove(x)
        ops = tuple(i for i in sorted(active) if x in active[i][0])
        op_legs = [active[i][0] for i in ops]
        joint = []
        for legs in op_legs:
            joint.extend(leg for leg in legs if leg not in joint)
        legs = tuple(leg for leg in joint if leg != x)
        leafset = frozenset().union(*(active[i][1] for i in ops))
        elim = frozenset().union(*(active[i][2] for i in ops)) | {x}
        steps.append(Step(ops, next_id, x, legs, leafset, elim, _fuse_cost(net, op_legs, x)))
        for i in ops:
            del active[i]
        active[next_id] = (legs, leafset, elim)
        next_id += 1
    ops = tuple(sorted(active))
    if len(ops) > 1 or active[ops[0]][0] != outputs:
        op_legs = [active[i][0] for i in ops]
        leafset = frozenset().union(*(active[i][1] for i in ops))
        elim = frozenset().union(*(active[i][2] for i in ops))
        cost = _fuse_cost(net, op_legs, None) if len(ops) > 1 else 0
        steps.append(Step(ops, next_id, None, outputs, leafset, elim, cost))
        result = next_id
    else:
        result = ops[0]
    return ContractionPlan(outputs, tuple(steps), result, leaves)


def plan_marginal(net, k, order=None):
    return plan_contraction(net, (k,), order)


class Contractor:
    """Executes contraction plans on one network with a cache of intermediates.

    Cached tensors are keyed by the set of leaves they absorb and the labels
    they have summed out, and are valid only while the tokens of the scaling
    vectors among those leaves are unchanged.  A contractor is meant to be
    owned by a single evaluation context (one solver run); ``flops`` counts
    the work actually executed, cache hits excluded.
    """

    def __init__(self, net, check_positive=True):
        self.net = net
        self.check_positive = check_positive
        self.flops = 0
        self._plans = {}
        self._cache = {}
        self._subs = {}

    def plan(self, outputs):
        outputs = tuple(outputs)
        if outputs not in self._plans:
            self._plans[outputs] = plan_contraction(self.net, outputs)
        return self._plans[outputs]

    def _leaf_tensor(self, i, s):
        V = len(self.net.vertices)
        return self.net.vertices[i].tensor if i < V else s.gammas[i - V]

    def _tokens(self, leafset, s):
        V = len(self.net.vertices)
        return tuple(s.tokens[i - V] for i in sorted(leafset) if i >= V)

    def run(self, plan, s):
        s.check(self.net.mode_sizes)
        leaves = plan.leaves
        values = {}
        legs_of = dict(leaves)

        def fetch(i):
            if i in values:
                return values[i]
            return self._leaf_tensor(i, s)

        for step in plan.steps:
            key = (step.leaves, step.eliminated)
            tokens = self._tokens(step.leaves, s)
            hit = self._cache.get(key)
            if hit is not None and hit[0] == tokens:
                out = hit[1]
            else:
                args = []
                for i in step.operands:
                    args.append(fetch(i))
                    args.append([self._sub(leg) for leg in legs_of[i]])
                args.append([self._sub(leg) for leg in step.legs])
                out = np.einsum(*args, optimize=len(step.operands) > 2)
                self.flops += step.flops
                self._cache[key] = (tokens, out)
            values[step.result] = out
            legs_of[step.result] = step.legs
        return fetch(plan.result)

    def _sub(self, leg):
        # einsum sublist ids
        return self._subs.setdefault(leg, len(self._subs))

    def contract(self, s, outputs):
        return self.run(self.plan(outputs), s)

    def marginal(self, s, k):
        out = np.asarray(self.contract(s, (k,)), dtype=np.float64)
        if self.check_positive and not np.all(out > 0):
            raise PositivityError(
                f"marginal {k} has nonpositive entries; the kernel approximation is not positive enough"
            )
        return out

    def all_marginals(self, s):
        return [self.marginal(s, k) for k in range(self.net.order)]


def eval_marginal(net, s, k, plan=None):
    c = Contractor(net)
    if plan is None:
        return c.marginal(s, k)
    out = c.run(plan, s)
    if not np.all(out > 0):
        raise PositivityError(f"marginal {k} has nonpositive entries")
    return out


def eval_all_marginals(net, s, return_flops=False):
    c = Contractor(net)
    out = c.all_marginals(s)
    return (out, c.flops) if return_flops else out


@dataclass(frozen=True)
class Rank1Correction:
    """The term ``scale * outer(vectors)`` added by rounding."""

    vectors: tuple
    scale: float

    @classmethod
    def zero(cls, mode_sizes):
        return cls(tuple(np.zeros(n) for n in mode_sizes), 0.0)

    @property
    def is_zero(self):
        return self.scale == 0.0 or any(not np.any(v) for v in self.vectors)

    def marginal(self, k):
        if self.is_zero:
            return np.zeros_like(self.vectors[k])
        others = np.prod([v.sum() for j, v in enumerate(self.vectors) if j != k])
        return self.scale * others * self.vectors[k]

    def contract_with(self, values, alpha):
        """``<values, marginal_alpha(self)>`` for a factor on the modes ``alpha``."""
        if self.is_zero:
            return 0.0
        out = np.asarray(values, dtype=np.float64)
        for a in alpha:
            out = np.tensordot(out, self.vectors[a], axes=([0], [0]))
        rest = np.prod([v.sum() for j, v in enumerate(self.vectors) if j not in alpha])
        return float(self.scale * rest * out)

    def to_dense(self):
        from .tensor_core import outer

        return self.scale * outer(*self.vectors)


def eval_cost(net, s, C, correction=None, contractor=None):
    """Transport cost ``<C, P>`` for the scaled network plus an optional rank-1 term."""
    if tuple(C.mode_sizes) != net.mode_sizes:
        raise ValueError("cost model and network have different mode sizes")
    c = contractor or Contractor(net, check_positive=False)
    total = 0.0
    for f in C.factors:
        alpha = _check_alpha(f.alpha, net.order)
        r_alpha = c.contract(s, alpha)
        total += float(np.sum(f.values * r_alpha))
        if correction is not None:
            total += correction.contract_with(f.values, alpha)
    return total


def materialize(net, s, correction=None):
    """Dense transport plan of the scaled network (desk scale only)."""
    out = Contractor(net, check_positive=False).contract(s, tuple(range(net.order)))
    if correction is not None and not correction.is_zero:
        out = out + correction.to_dense()
    return out
