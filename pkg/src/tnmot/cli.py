"""Command-line drivers for the chain, colour-transfer and bridge experiments.

Every command writes a CSV with a header row.  Unless ``--no-figures`` is
given, a PNG figure is rendered next to it.
"""

import argparse
import csv
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

from . import apps
from .factor_model import PositivityError


def parse_ranks(text):
    """``a:b`` (inclusive) or a comma list of positive integers."""
    try:
        if ":" in text:
            lo, hi = (int(x) for x in text.split(":"))
            ranks = list(range(lo, hi + 1))
        else:
            ranks = [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad rank list {text!r}") from None
    if not ranks or min(ranks) < 1:
        raise argparse.ArgumentTypeError("ranks must be positive and non-empty")
    return ranks


def parse_lambda(text):
    try:
        lam = [float(Fraction(x.strip())) for x in text.split(",")]
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"bad weights {text!r}") from None
    try:
        return apps.check_weights(lam)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


# -- I/O ---------------------------------------------------------------------------------


def read_png(path):
    with Image.open(path) as im:
        px = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return apps.ImageGrid(px)


def to_uint8(x):
    return np.clip(np.rint(255.0 * np.asarray(x)), 0, 255).astype(np.uint8)


def write_png(path, img):
    Image.fromarray(to_uint8(img.pixels), mode="RGB").save(path)


def write_gray_png(path, grid):
    g = np.asarray(grid, dtype=np.float64)
    span = g.max() - g.min()
    scaled = (g - g.min()) / span if span > 0 else np.zeros_like(g)
    Image.fromarray(to_uint8(scaled), mode="L").save(path)


MASS_FLOOR = 1e-3


def read_mass(path):
    """Square mass grid from a CSV of numbers or a grayscale PNG.

    A floor of ``MASS_FLOOR`` times the mean is added so that black pixels
    still carry a little mass.
    """
    path = Path(path)
    if path.suffix.lower() == ".csv":
        grid = np.loadtxt(path, delimiter=",", ndmin=2)
    else:
        with Image.open(path) as im:
            grid = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    if grid.ndim != 2 or grid.shape[0] != grid.shape[1]:
        raise ValueError(f"{path}: mass grid must be square, got shape {grid.shape}")
    if np.any(grid < 0) or not grid.sum() > 0:
        raise ValueError(f"{path}: masses must be nonnegative and not all zero")
    grid = grid / grid.sum()
    grid = grid + MASS_FLOOR / grid.size
    return grid / grid.sum()


def fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "nan" if not np.isfinite(v) else f"{v:.6e}"


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(row.get(h)) for h in header])


def _untimed(rows, keys, no_timing):
    if no_timing:
        for row in rows:
            for k in keys:
                if k in row:
                    row[k] = np.nan
    return rows


# -- commands ----------------------------------------------------------------------------

POC_COLUMNS = ["rank", "cost_diff_svds", "cost_diff_tt", "log_err_svds", "log_err_tt", "flops", "seconds", "flops_tt"]


def cmd_poc(args):
    report = apps.run_poc(args.n, args.ranks, eta=args.eta, seed=args.seed, eps_stop=args.eps_stop,
                          max_iters=args.max_iters)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = _untimed([dict(r) for r in report.rows], ["seconds"], args.no_timing)
    write_csv(out, POC_COLUMNS, rows)
    if not args.no_figures:
        from .plotting import plot_poc

        plot_poc(report, out.with_suffix(".png"))
    s = report.summary
    print(f"poc n={s['n']} eta={s['eta']:g} cost={s['cost']:.10e} iterations={s['iterations']} "
          f"flops={s['flops']} tt_branch={int(s['tt_branch'])}")
    ok = s["converged"] and all(r.get("converged", False) for r in report.rows)
    return 0 if ok else 1


def _color_inputs(args, parser):
    if args.synthetic:
        return [apps.synthetic_image(args.synthetic, args.seed + k) for k in range(4)]
    if not args.sources or not args.target:
        parser.error("color needs --sources A B C and --target D, or --synthetic SIZE")
    return [read_png(p) for p in args.sources] + [read_png(args.target)]


def cmd_color(args, parser):
    images = _color_inputs(args, parser)
    ranks = args.ranks or [args.rank]
    report, outputs = apps.color_rank_sweep(
        images, args.lam, ranks, eta=args.eta, seed=args.seed, eps_stop=args.eps_stop,
        compare_full=args.compare_full,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    last = ranks[-1]
    if last not in outputs:
        print(f"error: rank {last} lost positivity; raise the rank", file=sys.stderr)
        return 1
    write_png(out, outputs[last])
    header = ["rank"] + (["inf_error_vs_full"] if args.compare_full else []) + ["seconds", "flops"]
    rows = _untimed([dict(r) for r in report.rows], ["seconds"], args.no_timing)
    write_csv(out.with_suffix(".csv"), header, rows)
    if not args.no_figures:
        from .plotting import plot_color

        plot_color(images, outputs[last], out.with_name(out.stem + "_panels.png"),
                   report if args.compare_full else None)
    return 0 if all(r["converged"] for r in report.rows) else 1


def cmd_bridge(args):
    if args.first or args.last:
        if not (args.first and args.last):
            raise ValueError("give both --first and --last, or neither")
        r_first, r_last = read_mass(args.first), read_mass(args.last)
        if r_first.shape != r_last.shape:
            raise ValueError("endpoint grids differ in size")
        s = r_first.shape[0]
    else:
        s = args.grid_side
        r_first = apps.blob_masses(s, (0.25, 0.3))
        r_last = apps.blob_masses(s, (0.75, 0.65))
    report = apps.run_bridge(r_first, r_last, args.graph, s, args.rank, eta=args.eta, eps_stop=args.eps_stop,
                             seed=args.seed, max_iters=args.max_iters, extent=args.extent)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    marg = report.summary["marginals"]
    for k in range(1, len(marg) - 1):
        np.savetxt(out / f"r{k + 1}.csv", marg[k], delimiter=",", fmt="%.12e")
        write_gray_png(out / f"r{k + 1}.png", marg[k])
    summ = dict(report.summary)
    if args.no_timing:
        summ["seconds"] = np.nan
    header = ["graph", "s", "rank", "iterations", "converged", "marginal_flops", "seconds"]
    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerow([summ["graph"]] + [fmt(summ[h]) for h in header[1:]])
    if not args.no_figures:
        from .plotting import plot_bridge

        plot_bridge(report, r_first, r_last, out / "bridge.png")
    return 0 if report.summary["converged"] else 1


def build_parser():
    p = argparse.ArgumentParser(prog="tnmot", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, eta):
        sp.add_argument("--eta", type=positive_float, default=eta, help="entropic regularization")
        sp.add_argument("--eps-stop", type=positive_float, default=1e-4)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--max-iters", type=positive_int, default=100_000)
        sp.add_argument("--no-figures", action="store_true", help="skip the PNG figure")
        sp.add_argument("--no-timing", action="store_true", help="write nan for wall times (byte-stable output)")

    sp = sub.add_parser("poc", help="4-mode chain with low-rank kernels")
    sp.add_argument("--n", type=positive_int, default=420, help="points per mode")
    sp.add_argument("--ranks", type=parse_ranks, default=parse_ranks("3:50"))
    sp.add_argument("--out", default="poc.csv")
    common(sp, 1.0)

    sp = sub.add_parser("color", help="colour transfer through a barycenter of three images")
    sp.add_argument("--sources", nargs=3, metavar="PNG")
    sp.add_argument("--target", metavar="PNG")
    sp.add_argument("--synthetic", type=positive_int, metavar="SIZE", help="use generated SIZE x SIZE images")
    sp.add_argument("--lambda", dest="lam", type=parse_lambda, default=parse_lambda("1/3,1/3,1/3"))
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--rank", type=positive_int, default=50)
    g.add_argument("--ranks", type=parse_ranks)
    sp.add_argument("--compare-full", action="store_true", help="add the sup error against full matrices")
    sp.add_argument("--out", default="recolored.png")
    common(sp, 0.1)

    sp = sub.add_parser("bridge", help="5-step bridge between two mass grids")
    sp.add_argument("--first", metavar="CSV|PNG")
    sp.add_argument("--last", metavar="CSV|PNG")
    sp.add_argument("--graph", choices=sorted(apps.GRAPHS), default="chain")
    sp.add_argument("--grid-side", type=positive_int, default=8)
    sp.add_argument("--rank", type=positive_int, default=10)
    sp.add_argument("--extent", type=positive_float, default=apps.BRIDGE_EXTENT,
                    help="side length of the square the grid spans")
    sp.add_argument("--out", default="bridge_out")
    common(sp, 0.1)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "poc" and args.n < 2:
        parser.error("--n must be at least 2")
    try:
        if args.command == "poc":
            return cmd_poc(args)
        if args.command == "color":
            return cmd_color(args, parser)
        return cmd_bridge(args)
    except (OSError, ValueError) as err:
        # PositivityError is a ValueError
        kind = "positivity" if isinstance(err, PositivityError) else "error"
        print(f"{kind}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
