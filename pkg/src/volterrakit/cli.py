"""Command-line interface.

Exit status: 0 when every check passes, 1 when a check fails, 2 on usage
errors.  Reports are CSV (stdout or --csv) plus an optional JSON summary;
both are byte-identical for a given seed.
"""
import argparse
import csv
import io
import json
import sys

import numpy as np

from . import kernels
from .algebra import (PROPERTY_NAMES, combine_22, composed_geometry,
                      verify_flatten_homomorphism, verify_property)
from .conv import ConvGeometry, VolterraOperator, volterra_apply
from .hacking import fit_order_one
from .netconv import (Activation, Conv1D, Network, activation_taylor, conv_act_conv,
                      forward, load_network, network_to_volterra)
from .perturb import (craft_perturbation, deviation_experiment, energy_gain,
                      perturbation_bound, quantiles, random_operator, trial_rng)
from .rank import DEFAULT_REL_TOL, EXPERIMENTS, rank_experiment
from .tensor import unit_gaussian, write_vten

DEFAULT_TOLS = {
    "properties": 1e-10,
    "conv-act-conv": 1e-4,
    "volterra-22": 1e-12,
}


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class Report:
    """CSV rows with a comment header recording the settings."""

    def __init__(self, title, settings, columns):
        self.title = title
        self.settings = settings
        self.columns = columns
        self.rows = []

    def add(self, *values):
        self.rows.append(values)

    def write(self, args, summary):
        buf = io.StringIO()
        head = " ".join(f"{k}={_fmt(v)}" for k, v in self.settings.items())
        buf.write(f"# {self.title} {head}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        text = buf.getvalue()
        if args.csv:
            with open(args.csv, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        if args.json:
            with open(args.json, "w") as fh:
                json.dump({"title": self.title, "settings": self.settings, **summary},
                          fh, indent=2, sort_keys=True, default=float)
                fh.write("\n")


def _tol(args, key):
    return args.tol if args.tol is not None else DEFAULT_TOLS[key]


def _finish(report, args, passed, extra=None):
    summary = {"passed": bool(passed), "rows": len(report.rows)}
    summary.update(extra or {})
    report.write(args, summary)
    print(f"{report.title}: {'PASS' if passed else 'FAIL'}", file=sys.stderr)
    return 0 if passed else 1


def cmd_validate(args):
    tol = _tol(args, args.check)
    seeds = range(args.seed, args.seed + args.seeds)
    if args.check == "properties":
        rep = Report("validate properties", {"seeds": args.seeds, "seed": args.seed, "tol": tol},
                     ["property", "name", "seed", "deviation", "passed"])
        worst = 0.0
        for pid in PROPERTY_NAMES:
            for s in seeds:
                c = verify_property(pid, s)
                worst = max(worst, c.deviation)
                rep.add(pid, c.name, s, c.deviation, c.passed(tol))
        for s in seeds:
            d = verify_flatten_homomorphism(s)
            worst = max(worst, d)
            rep.add("flatten", "flatten homomorphism", s, d, d <= tol)
        return _finish(rep, args, worst <= tol, {"max_deviation": worst})
    if args.check == "conv-act-conv":
        rep = Report("validate conv-act-conv",
                     {"seeds": args.seeds, "seed": args.seed, "order": args.order, "tol": tol},
                     ["seed", "deviation", "passed"])
        act = activation_taylor("sigmoid", 0.0, args.order)
        worst = 0.0
        for s in seeds:
            rng = trial_rng(s, 3)
            g, h = unit_gaussian(5, rng), unit_gaussian(9, rng)
            x = unit_gaussian(64, rng)
            net = Network([Conv1D(h), Activation(act), Conv1D(g)])
            d = float(np.linalg.norm(volterra_apply(conv_act_conv(g, h, act), x)
                                     - forward(net, x)[0]))
            worst = max(worst, d)
            rep.add(s, d, d <= tol)
        return _finish(rep, args, worst <= tol, {"max_deviation": worst})
    rep = Report("validate volterra-22", {"seeds": args.seeds, "seed": args.seed, "tol": tol},
                 ["seed", "deviation", "passed"])
    worst = 0.0
    for s in seeds:
        d = volterra22_deviation(s)
        worst = max(worst, d)
        rep.add(s, d, d <= tol)
    return _finish(rep, args, worst <= tol, {"max_deviation": worst})


def volterra22_deviation(seed, length=64, extent=5):
    """L2 gap between two stacked order-2 operators and their fusion.

    Order-0 terms are standard normal, the other kernels and x unit-L2
    Gaussian.
    """
    rng = trial_rng(seed, 4)
    g = [rng.standard_normal(), unit_gaussian(extent, rng), unit_gaussian((extent,) * 2, rng)]
    h = [rng.standard_normal(), unit_gaussian(extent, rng), unit_gaussian((extent,) * 2, rng)]
    x = unit_gaussian(length, rng)
    inner = volterra_apply(VolterraOperator([np.asarray(h[0])] + h[1:]), x)
    stacked = volterra_apply(VolterraOperator([np.asarray(g[0])] + g[1:]), inner)
    fused = VolterraOperator(combine_22(g, h))
    return float(np.linalg.norm(volterra_apply(fused, x) - stacked))


def cmd_convert(args):
    net = load_network(args.net)
    op = network_to_volterra(net, args.order, args.input_length)
    for n, k in enumerate(op.kernels):
        write_vten(f"{args.out}_H{n}.vten", k)
    meta = {"order": op.order, "extent": list(op.extent), "stride": op.geometry.stride,
            "padding": list(op.geometry.pads(op.extent))}
    with open(f"{args.out}_geometry.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(meta, sort_keys=True))
    return 0


def cmd_hack(args):
    net = load_network(args.net)
    geo = ConvGeometry(args.stride, args.padding)
    fit = fit_order_one(net, args.extent, geo, args.samples, args.seed, args.length,
                        args.method)
    settings = {"extent": args.extent, "stride": args.stride, "padding": args.padding,
                "samples": fit.samples, "seed": args.seed, "length": args.length,
                "method": args.method}
    rep = Report("hack", settings, ["tap", "weight"])
    for i, w in enumerate(fit.weights):
        rep.add(i, w)
    rep.add("bias", fit.bias)
    extra = {"residual_mse": fit.residual_mse, "rank_deficient": fit.rank_deficient}
    if args.compare_order is not None:
        op = network_to_volterra(net, args.compare_order)
        H1 = op.kernel(1)
        if H1.shape == fit.weights.shape:
            extra["weight_error_l2"] = float(np.linalg.norm(fit.weights - H1))
        extra["bias_error"] = abs(fit.bias - float(op.kernels[0]))
    if args.out:
        write_vten(f"{args.out}_w.vten", fit.weights)
        write_vten(f"{args.out}_b.vten", np.asarray(fit.bias))
    return _finish(rep, args, True, extra)


def cmd_perturb(args):
    if args.action == "craft":
        rep = Report("perturb craft", {"seeds": args.seeds, "seed": args.seed,
                                       "alpha": args.alpha, "mode": args.mode},
                     ["seed", "gain"])
        wins = 0
        for s in range(args.seed, args.seed + args.seeds):
            rng = trial_rng(s, 5)
            h, x = unit_gaussian(9, rng), unit_gaussian(64, rng)
            gain = energy_gain(h, x, craft_perturbation(h, x, args.alpha, args.mode))
            wins += gain > 1
            rep.add(s, gain)
        return _finish(rep, args, True, {"gain_above_one": wins})
    if args.action == "experiment":
        rows = deviation_experiment(range(1, args.max_order + 1), args.spike,
                                    args.trials, args.seed)
        rep = Report("perturb experiment", {"spike": args.spike, "trials": args.trials,
                                            "seed": args.seed},
                     ["order", "min", "q1", "median", "q3", "max"])
        q = quantiles(rows)
        for n, vals in q.items():
            rep.add(n, *vals)
        ok = all(r.dominated for r in rows)
        return _finish(rep, args, ok, {"dominated": ok})
    rep = Report("perturb bound", {"trials": args.trials, "seed": args.seed,
                                   "order": args.max_order, "spike": args.spike},
                 ["trial", "deviation", "bound", "dominated"])
    ok = True
    for t in range(args.trials):
        rng = trial_rng(args.seed, 6, t)
        op = random_operator(args.max_order, 5, rng)
        x = unit_gaussian(32, rng)
        eps = np.zeros(32)
        eps[16] = args.spike
        r = perturbation_bound(op, x, eps)
        ok &= r.dominated
        rep.add(t, r.total_deviation, r.total_bound, r.dominated)
    return _finish(rep, args, ok, {"dominated": ok})


def cmd_rank(args):
    rows = rank_experiment(args.experiment, args.trials, args.seed, args.family, args.rel_tol)
    rep = Report("rank", {"experiment": args.experiment, "trials": args.trials,
                          "seed": args.seed, "family": args.family, "rel_tol": args.rel_tol},
                 ["trial", "mode", "log10_singular_values", "rank", "bound", "passed"])
    for r in rows:
        spectrum = ";".join(f"{v:.6f}" for v in r.log10_spectrum)
        rep.add(r.trial, r.mode, spectrum, r.rank, r.bound, r.passed)
    ok = all(r.passed for r in rows)
    return _finish(rep, args, ok, {"violations": sum(not r.passed for r in rows)})


def _layer(text):
    try:
        z, s, p = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected z,s,p got {text!r}")
    return z, s, p


def cmd_geometry(args):
    try:
        z, s, p = composed_geometry(args.layer)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"extent": z, "stride": s, "padding": p}))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="volterrakit", description=__doc__.splitlines()[0])
    parser.add_argument("--tol", type=float, default=None,
                        help="override the per-check tolerance")
    parser.add_argument("--csv", help="write the CSV report here instead of stdout")
    parser.add_argument("--json", help="write a JSON summary here")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check identities and fused operators")
    p.add_argument("check", choices=sorted(DEFAULT_TOLS))
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--order", type=int, default=5)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("convert", help="network JSON to Volterra kernels")
    p.add_argument("--net", required=True)
    p.add_argument("--order", type=int, default=5)
    p.add_argument("--input-length", type=int)
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("hack", help="fit an order-one proxy kernel")
    p.add_argument("--net", required=True)
    p.add_argument("--extent", type=int, required=True)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--padding", type=int, default=0)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--length", type=int, default=128)
    p.add_argument("--method", choices=["closed", "iterative"], default="closed")
    p.add_argument("--compare-order", type=int,
                   help="also convert the network to this order and report errors")
    p.add_argument("--out", help="prefix for the fitted VTEN files")
    p.set_defaults(func=cmd_hack)

    p = sub.add_parser("perturb", help="perturbation crafting and bounds")
    p.add_argument("action", choices=["bound", "craft", "experiment"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--max-order", type=int, default=8)
    p.add_argument("--spike", type=float, default=3.0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--mode", choices=["raw", "image"], default="raw")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("rank", help="rank-bound experiments")
    p.add_argument("--experiment", choices=sorted(EXPERIMENTS), required=True)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--family", choices=["M", "U"], default="M")
    p.add_argument("--rel-tol", type=float, default=DEFAULT_REL_TOL)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("geometry", help="compose (z,s,p) layers")
    p.add_argument("--layer", type=_layer, action="append", required=True)
    p.set_defaults(func=cmd_geometry)

    p = sub.add_parser("backend", help="print the active kernel backend")
    p.set_defaults(func=lambda a: print(kernels.backend()) or 0)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
