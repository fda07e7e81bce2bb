"""End-to-end experiments: low-rank chain transport, colour transfer through a
colour barycenter, and discrete Schroedinger bridges on a grid."""

import time
from dataclasses import dataclass, field

import numpy as np

from .factor_model import (
    DEFAULT_BUDGET,
    KernelFactor,
    KernelModel,
    PositivityError,
    assemble_dense_kernel,
    chain_cost,
    gibbs_factors,
    sqdist_cost,
)
from .lowrank import log_error, lowrank_kernel, lowrank_kernel_factor, tt_svd
from .network import Contractor, build_network, eval_cost, network_from_tt, plan_marginal
from .rounding import round_structured
from .sinkhorn import NetworkOracle, SinkhornConfig, solve

CHAIN = ((0, 1), (1, 2), (2, 3), (3, 4))
WINDOW = ((0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (2, 4), (3, 4))
GRAPHS = {"chain": CHAIN, "window": WINDOW}


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def column(self, name):
        return [row.get(name) for row in self.rows]


@dataclass(frozen=True)
class ImageGrid:
    """RGB image with channels in [0, 1], stored as a ``height x width x 3`` array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError("images must be height x width x 3 arrays")
        if px.size == 0 or px.min() < 0 or px.max() > 1:
            raise ValueError("colour channels must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    def colors(self):
        return self.pixels.reshape(-1, 3)


def uniform(n):
    return np.full(n, 1.0 / n)


def sweep_flops(net):
    """Flops of one all-marginals sweep on a fresh cache."""
    c = Contractor(net, check_positive=False)
    ones = _ones(net)
    for k in range(net.order):
        c.contract(ones, (k,))
    return c.flops


def _ones(net):
    from .network import Scalings

    return Scalings.ones(net.mode_sizes)


def _transport(net, C, targets, cfg):
    """Solve, round and price one structured problem; returns (cost, result, seconds)."""
    start = time.perf_counter()
    oracle = NetworkOracle(net)
    res = solve(oracle, targets, cfg)
    s, corr = round_structured(net, res.scalings, targets, oracle.contractor)
    seconds = time.perf_counter() - start
    return eval_cost(net, s, C, corr), res, seconds


# -- chain proof of concept ------------------------------------------------------------


def poc_points(n, seed, m=4):
    rng = np.random.default_rng(seed)
    return [rng.random((n, 2)) for _ in range(m)]


def run_poc(n, ranks, eta=1.0, seed=0, eps_stop=1e-4, tt_max_n=30, log_samples=1000, max_iters=100_000):
    """Compare per-factor SVD and tensor-train kernel approximations on a 4-mode chain.

    The TT branch needs the dense kernel and runs only for ``n <= tt_max_n``
    within the materialization budget.
    """
    if n < 2:
        raise ValueError("need at least two points per mode")
    C = chain_cost(poc_points(n, seed))
    K = gibbs_factors(C, eta)
    targets = [uniform(n)] * 4
    cfg = SinkhornConfig(eta=eta, eps_stop=eps_stop, max_iters=max_iters)
    net = build_network(K)
    cost_ref, res_ref, sec_ref = _transport(net, C, targets, cfg)
    use_tt = n <= tt_max_n and n**4 <= DEFAULT_BUDGET
    K_dense = assemble_dense_kernel(K) if use_tt else None
    report = ExperimentReport(
        summary=dict(
            n=n, eta=eta, seed=seed, cost=cost_ref, iterations=res_ref.iterations, converged=res_ref.converged,
            flops=sweep_flops(net), seconds=sec_ref, tt_branch=use_tt,
        )
    )
    for r in ranks:
        row = dict(rank=r)
        try:
            K_svd = lowrank_kernel(K, min(r, n), "exact")
            net_svd = build_network(K_svd)
            cost, res, sec = _transport(net_svd, C, targets, cfg)
            row.update(
                cost_diff_svds=abs(cost - cost_ref),
                log_err_svds=log_error(K, K_svd, "sampled", count=log_samples, seed=seed),
                flops=sweep_flops(net_svd),
                seconds=sec,
                iterations=res.iterations,
                converged=res.converged,
            )
        except PositivityError:
            row.update(cost_diff_svds=np.nan, log_err_svds=np.nan, flops=np.nan, seconds=np.nan, converged=False)
        if use_tt:
            try:
                tt = tt_svd(K_dense, (r, r, r))
                net_tt = network_from_tt(tt)
                cost, res, sec = _transport(net_tt, C, targets, cfg)
                row.update(
                    cost_diff_tt=abs(cost - cost_ref),
                    log_err_tt=log_error(K_dense, tt, "sampled", count=log_samples, seed=seed),
                    flops_tt=sweep_flops(net_tt),
                    seconds_tt=sec,
                )
                row["converged"] = row["converged"] and res.converged
            except PositivityError:
                row.update(cost_diff_tt=np.nan, log_err_tt=np.nan, flops_tt=np.nan, seconds_tt=np.nan)
        else:
            row.update(cost_diff_tt=np.nan, log_err_tt=np.nan, flops_tt=np.nan, seconds_tt=np.nan)
        report.rows.append(row)
    return report


# -- colour transfer ------------------------------------------------------------------


def image_colors(img):
    if not isinstance(img, ImageGrid):
        img = ImageGrid(img)
    return img.colors()


def synthetic_image(size, seed=0):
    """Smooth four-corner colour gradient with mild noise; a stand-in for photographs."""
    rng = np.random.default_rng(seed)
    corners = rng.random((4, 3))
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    w = np.stack([(1 - yy) * (1 - xx), (1 - yy) * xx, yy * (1 - xx), yy * xx], axis=-1)
    noise = 0.05 * rng.standard_normal((size, size, 3))
    return ImageGrid(np.clip(w @ corners + noise, 0.0, 1.0))


def check_weights(lam):
    lam = np.asarray(lam, dtype=np.float64)
    if lam.shape != (3,) or np.any(lam < 0) or abs(lam.sum() - 1) > 1e-9:
        raise ValueError("barycenter weights must be three non-negative numbers summing to 1")
    return lam


def star_kernel(colors, x_bary, lam, eta, rank=None, seed=0):
    """Star-shaped kernel with leaves 0..2 attached to the barycenter mode 3."""
    n = len(x_bary)
    factors = []
    for k in range(3):
        Kk = np.exp(-(lam[k] * sqdist_cost(colors[k], x_bary) / eta))
        if rank is not None and rank < n:
            factors.append(
                lowrank_kernel_factor(Kk, rank, "randomized", seed=seed + k, alpha=(k, 3), validate=False)
            )
        else:
            factors.append(KernelFactor((k, 3), dense=Kk))
    return KernelModel((n,) * 4, factors, eta)


def barycenter_star(K, eps_stop=1e-4, max_iters=100_000):
    """Masses of the barycenter mode when only the three leaf scalings are updated.

    Leaf targets are uniform probability vectors; returns ``(r_B, result)``.
    """
    n = K.mode_sizes
    oracle = NetworkOracle(K)
    cfg = SinkhornConfig(eta=K.eta, eps_stop=eps_stop, update_set=(0, 1, 2), max_iters=max_iters)
    targets = [uniform(n[0]), uniform(n[1]), uniform(n[2]), None]
    res = solve(oracle, targets, cfg)
    return res.marginals[3], res


def pair_kernel(x_src, x_dst, eta, rank=None, seed=0):
    K = np.exp(-(sqdist_cost(x_src, x_dst) / eta))
    if rank is not None and rank < len(x_src):
        f = lowrank_kernel_factor(K, rank, "randomized", seed=seed, alpha=(0, 1), validate=False)
    else:
        f = KernelFactor((0, 1), dense=K)
    return KernelModel((len(x_src), len(x_dst)), [f], eta)


def transfer_colors(x_bary, r_bary, x_target, eta, rank=None, seed=0, eps_stop=1e-4, max_iters=100_000):
    """Map target colours to the column-normalized plan average of the barycenter colours."""
    K2 = pair_kernel(x_bary, x_target, eta, rank, seed)
    r_bary = np.asarray(r_bary) / np.sum(r_bary)
    cfg = SinkhornConfig(eta=eta, eps_stop=eps_stop, max_iters=max_iters)
    res = solve(NetworkOracle(K2), [r_bary, uniform(len(x_target))], cfg)
    g1 = res.scalings[0]
    f = K2.factors[0]
    if f.is_lowrank:
        num = f.V @ (f.U.T @ (g1[:, None] * x_bary))
        den = f.V @ (f.U.T @ g1)
    else:
        num = f.dense.T @ (g1[:, None] * x_bary)
        den = f.dense.T @ g1
    if not np.all(den > 0):
        raise PositivityError("plan has a nonpositive column sum; raise the rank")
    return np.clip(num / den[:, None], 0.0, 1.0), res, K2


def run_color_transfer(images, lam, r=None, eta=0.1, seed=0, eps_stop=1e-4, max_iters=100_000):
    """Recolour ``images[3]`` with the ``lam``-weighted colour barycenter of ``images[:3]``.

    ``r=None`` uses full kernel matrices.  Returns ``(image, ExperimentReport)``.
    """
    if len(images) != 4:
        raise ValueError("need three source images and one target image")
    colors = [image_colors(img) for img in images]
    n = len(colors[0])
    if any(len(c) != n for c in colors):
        raise ValueError("all images must have the same number of pixels")
    lam = check_weights(lam)
    x_bary = sum(lam[k] * colors[k] for k in range(3))
    start = time.perf_counter()
    K = star_kernel(colors, x_bary, lam, eta, r, seed)
    r_bary, res_b = barycenter_star(K, eps_stop, max_iters)
    x_star, res_t, K2 = transfer_colors(x_bary, r_bary, colors[3], eta, r, seed + 3, eps_stop, max_iters)
    seconds = time.perf_counter() - start
    report = ExperimentReport(
        summary=dict(
            rank=r if r is not None else n, n=n, seconds=seconds,
            flops=sweep_flops(build_network(K)) + sweep_flops(build_network(K2)),
            iterations_barycenter=res_b.iterations, iterations_transfer=res_t.iterations,
            converged=res_b.converged and res_t.converged,
        )
    )
    shape = images[3].pixels.shape if isinstance(images[3], ImageGrid) else np.shape(images[3])
    return ImageGrid(x_star.reshape(shape)), report


def color_rank_sweep(images, lam, ranks, eta=0.1, seed=0, eps_stop=1e-4, compare_full=True):
    """Run colour transfer per rank; with ``compare_full`` add the sup error against full matrices."""
    full = None
    if compare_full:
        full, full_report = run_color_transfer(images, lam, None, eta, seed, eps_stop)
    report = ExperimentReport()
    outputs = {}
    for r in ranks:
        row = dict(rank=r)
        try:
            img, rep = run_color_transfer(images, lam, r, eta, seed, eps_stop)
            outputs[r] = img
            img = img.pixels
            row.update(seconds=rep.summary["seconds"], flops=rep.summary["flops"],
                       converged=rep.summary["converged"])
            if full is not None:
                row["inf_error_vs_full"] = float(np.max(np.abs(img - full.pixels)))
        except PositivityError:
            row.update(seconds=np.nan, flops=np.nan, converged=False, inf_error_vs_full=np.nan)
        report.rows.append(row)
    if full is not None:
        report.summary.update(full_flops=full_report.summary["flops"], full_seconds=full_report.summary["seconds"])
        outputs["full"] = full
    return report, outputs


# -- Schroedinger bridge ----------------------------------------------------------------


def grid_points(s, extent=1.0):
    """Row-major ``s x s`` grid spanning ``[0, extent]^2``."""
    idx = extent * np.arange(s, dtype=np.float64) / max(s - 1, 1)
    yy, xx = np.meshgrid(idx, idx, indexing="ij")
    return np.stack([yy.ravel(), xx.ravel()], axis=1)


BRIDGE_EXTENT = 0.5


def blob_masses(s, center, width=0.05, floor=1e-3):
    """Gaussian bump on the unit-square grid plus a uniform floor, as an ``s x s`` array."""
    p = grid_points(s)
    mass = np.exp(-np.sum((p - np.asarray(center)) ** 2, axis=1) / width) + floor
    return (mass / mass.sum()).reshape(s, s)


def bridge_kernel(s, graph="chain", r=None, eta=0.1, seed=0, extent=BRIDGE_EXTENT):
    if graph not in GRAPHS:
        raise ValueError(f"unknown graph {graph!r}; expected one of {sorted(GRAPHS)}")
    n = s * s
    pts = grid_points(s, extent)
    K = np.exp(-(sqdist_cost(pts, pts) / eta))
    if r is not None and r < n:
        base = lowrank_kernel_factor(K, r, "randomized", seed=seed, validate=False)
        factors = [KernelFactor(a, U=base.U, V=base.V) for a in GRAPHS[graph]]
    else:
        factors = [KernelFactor(a, dense=K) for a in GRAPHS[graph]]
    return KernelModel((n,) * 5, factors, eta)


def run_bridge(
    r_first, r_last, graph="chain", s=8, r=10, eta=0.1, eps_stop=1e-4, seed=0, max_iters=100_000,
    extent=BRIDGE_EXTENT,
):
    """Intermediate marginals of the 5-step bridge between two mass grids.

    The grid spans ``[0, extent]^2``; wider grids make a rank-``r`` kernel lose
    positivity.  Only the endpoint scalings are updated.  The report carries the marginals
    ``r_2..r_4`` reshaped to ``s x s`` and the flops of one marginal evaluation.
    """
    n = s * s
    r_first = np.asarray(r_first, dtype=np.float64).ravel()
    r_last = np.asarray(r_last, dtype=np.float64).ravel()
    if r_first.size != n or r_last.size != n:
        raise ValueError(f"endpoint masses must have {n} entries")
    if np.any(r_first <= 0) or np.any(r_last <= 0):
        raise ValueError("endpoint masses must be strictly positive")
    r_first, r_last = r_first / r_first.sum(), r_last / r_last.sum()
    K = bridge_kernel(s, graph, r, eta, seed, extent)
    net = build_network(K)
    oracle = NetworkOracle(net)
    cfg = SinkhornConfig(eta=eta, eps_stop=eps_stop, update_set=(0, 4), max_iters=max_iters)
    start = time.perf_counter()
    res = solve(oracle, [r_first, None, None, None, r_last], cfg)
    seconds = time.perf_counter() - start
    mass = [float(m.sum()) for m in res.marginals]
    report = ExperimentReport(
        summary=dict(
            graph=graph, s=s, n=n, extent=extent, rank=r if r is not None else n, eta=eta,
            iterations=res.iterations, converged=res.converged, seconds=seconds,
            marginal_flops=plan_marginal(net, 2).flops, masses=mass,
            marginals=[m.reshape(s, s) for m in res.marginals],
        )
    )
    return report
