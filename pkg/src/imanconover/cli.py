"""Command-line interface.

Every run writes ``manifest.json`` next to its outputs; ``replay`` re-runs
a manifest and reproduces the same bytes. Exit codes: 0 success, 2
configuration error, 3 data error, 4 oracle incompatible with the model.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .aggregate import aggregate_cdf, kendall_cdf, parse_psi, parse_tree, risk_measures, tree_aggregate
from .convergence import ExperimentConfig, OracleIncompatible, OracleSpec, run_experiment
from .copulas import (
    GaussCopula,
    IndependenceCopula,
    NoRidgeError,
    condition_025_integral,
    k_epsilon,
    parse_copula,
    sample,
)
from .layers import (
    LowerLayerSpec,
    boundary_curve,
    copula_mass_u_delta,
    volume_u_delta,
)
from .margins import DataError, StepCdf, parse_margin, read_sample_csv
from .reorder import TieError, compute_ranks, iman_conover

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_ORACLE = 0, 2, 3, 4

# margin pairs and thresholds for the two boundary-curve panels
PANELS = {
    "normal": (("normal:0,1", "normal:0,0.5"), (-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0)),
    "exp": (("exp:1", "exp:0.7"), (0.5, 1.0, 2.0, 3.0, 4.0, 6.0)),
}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# helpers


def _floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _ints(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}") from None


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_cdf(path: Path, cdf: StepCdf) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "cdf"])
        for t, y in zip(cdf.jump_points, cdf.levels):
            w.writerow([_fmt(t), _fmt(y)])


def _derive_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1)[0])


def _risk_json(cdf: StepCdf, levels) -> dict:
    return {
        repr(a): {"VaR": v, "ES": e} for a, (v, e) in risk_measures(cdf, levels).items()
    }


def _load_margins(paths: Sequence[str], header: bool, n: Optional[int], resample: bool, seed: int):
    samples = [read_sample_csv(p, header=header) for p in paths]
    lengths = [len(s) for s in samples]
    if resample:
        size = n or max(lengths)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
        return [rng.choice(s, size=size, replace=True) for s in samples]
    if len(set(lengths)) != 1:
        raise DataError(f"margin files have different row counts {lengths}; use --resample")
    if n is not None and n != lengths[0]:
        raise DataError(f"--n {n} differs from the file row count {lengths[0]}; use --resample")
    return samples


def _ranks(copula_spec: Optional[str], d: int, n: int, seed: int, base_dir=None):
    if copula_spec is None:
        if d == 1:
            u = np.random.default_rng(seed).random((n, 1))
            return compute_ranks(u)
        copula_spec = f"indep:{d}"
    copula = parse_copula(copula_spec, base_dir)
    if copula.d != d:
        raise ConfigError(f"copula has dimension {copula.d} but {d} margins were given")
    return compute_ranks(sample(copula, n, seed))


# --------------------------------------------------------------------------
# subcommands


def cmd_aggregate(args) -> dict:
    out = Path(args.out)
    xs = _load_margins(args.margins, not args.no_header, args.n, args.resample, args.seed)
    n = len(xs[0])
    ranks = _ranks(args.copula, len(xs), n, _derive_seed(args.seed, 0))
    syn = iman_conover(xs, ranks)
    cdf = aggregate_cdf(syn, parse_psi(args.psi))
    syn.to_csv(out / "synthetic.csv")
    _write_cdf(out / "cdf.csv", cdf)
    _write_json(
        out / "risk.json",
        {"n": n, "d": syn.d, "psi": args.psi, "copula": args.copula, "risk": _risk_json(cdf, args.levels)},
    )
    return {"config_paths": list(args.margins)}


def cmd_kendall(args) -> dict:
    out = Path(args.out)
    xs = _load_margins(args.margins, not args.no_header, args.n, args.resample, args.seed)
    n = len(xs[0])
    ranks = _ranks(args.copula, len(xs), n, _derive_seed(args.seed, 0))
    h = kendall_cdf(iman_conover(xs, ranks))
    _write_cdf(out / "kendall.csv", h)
    report = {"n": n, "d": len(xs), "copula": args.copula}
    if len(xs) == 2 and (args.copula is None or isinstance(parse_copula(args.copula), IndependenceCopula)):
        from .margins import sup_distance

        report["sup_distance_independence"] = sup_distance(
            h, lambda t: np.where(t > 0, t - t * np.log(np.maximum(t, 1e-300)), 0.0)
        )
    _write_json(out / "kendall.json", report)
    return {"config_paths": list(args.margins)}


def cmd_tree(args) -> dict:
    out = Path(args.out)
    config = Path(args.config)
    try:
        with open(config) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{config}: invalid JSON: {exc}") from None
    tree = parse_tree(obj, config.parent)
    names = sorted(set(_leaf_names(obj)))
    files = [str(config.parent / name) for name in names]
    xs = _load_margins(files, not args.no_header, args.n, args.resample, args.seed)
    leaf_samples = dict(zip(names, xs))
    results = tree_aggregate(tree, leaf_samples, seed=args.seed, threads=args.threads)
    nodes = {}
    for key, res in results.items():
        nodes[key] = {"n": int(res.values.size), "risk": _risk_json(res.cdf, args.levels)}
        if res.seed is not None:
            nodes[key]["seed"] = res.seed
    _write_cdf(out / "root_cdf.csv", results["root"].cdf)
    _write_json(out / "report.json", {"nodes": nodes})
    return {"config_paths": [str(config)] + files}


def _leaf_names(obj) -> List[str]:
    if "leaf" in obj:
        return [str(obj["leaf"])]
    return [name for c in obj.get("children", []) for name in _leaf_names(c)]


def cmd_diagnose(args) -> dict:
    out = Path(args.out)
    copula = parse_copula(args.copula)
    if copula.d != 2:
        raise ConfigError("diagnostics are only available for bivariate copulas")
    margins = [parse_margin(m) for m in args.margins]
    if len(margins) != 2:
        raise ConfigError("diagnostics need exactly two margins")
    deltas = np.array(args.delta)
    volume, mass = [], []
    for i, t in enumerate(args.t):
        curve = boundary_curve(LowerLayerSpec(margins, t), args.resolution)
        seed = _derive_seed(args.seed, i)
        v, ve = volume_u_delta(curve, deltas, args.n_mc, seed, args.threads)
        c, ce = copula_mass_u_delta(copula, curve, deltas, args.n_mc, seed, args.threads)
        for j, dl in enumerate(deltas):
            volume.append(
                {"t": t, "delta": float(dl), "estimate": float(v[j]), "stderr": float(ve[j]), "bound": 4.0 * float(dl)}
            )
            mass.append(
                {
                    "t": t,
                    "delta": float(dl),
                    "estimate": float(c[j]),
                    "stderr": float(ce[j]),
                    "bound": None,
                    "ratio": float(c[j] / dl),
                }
            )
    report = {"copula": args.copula, "margins": list(args.margins), "volume": volume, "copula_mass": mass}
    if not (isinstance(copula, GaussCopula) and copula.rho == 0.0) and not isinstance(copula, IndependenceCopula):
        report["k_epsilon"] = [{"eps": e, "K": k_epsilon(copula, e)} for e in (1e-2, 1e-3, 1e-4)]
    cond = condition_025_integral(copula)
    report["integral_condition"] = {
        "value": cond.value,
        "tail_bound": cond.tail_bound,
        "total": cond.total,
        "growth_exponent": cond.growth_exponent,
        "log_growth": cond.log_growth,
        "finite": cond.finite,
    }
    _write_json(out / "diagnostics.json", report)
    return {"config_paths": []}


def cmd_converge(args) -> dict:
    out = Path(args.out)
    copula = parse_copula(args.copula)
    margins = [parse_margin(m) for m in args.margins]
    cfg = ExperimentConfig(
        copula,
        margins,
        args.n_grid,
        args.reps,
        OracleSpec.parse(args.oracle),
        seed=args.seed,
        estimator=args.estimator,
        threads=args.threads,
    )
    report = run_experiment(cfg)
    report.to_json(out / "report.json")
    report.to_csv(out / "report.csv")
    return {"config_paths": []}


def cmd_curves(args) -> dict:
    out = Path(args.out)
    if args.margins:
        jobs = {"custom": (tuple(args.margins), tuple(args.t or (0.0,)))}
    else:
        names = list(PANELS) if args.panel == "both" else [args.panel]
        jobs = {k: (PANELS[k][0], tuple(args.t) if args.t else PANELS[k][1]) for k in names}
    index = []
    for name, (specs, ts) in jobs.items():
        margins = [parse_margin(m) for m in specs]
        if len(margins) != 2:
            raise ConfigError("curves need exactly two margins")
        for t in ts:
            curve = boundary_curve(LowerLayerSpec(margins, t), args.resolution)
            fname = f"{name}_t{t:+g}.csv"
            curve.to_csv(out / fname)
            index.append(
                {
                    "panel": name,
                    "margins": list(specs),
                    "t": t,
                    "file": fname,
                    "points": int(len(curve.points)),
                    "start": [float(x) for x in curve.points[0]],
                    "end": [float(x) for x in curve.points[-1]],
                }
            )
    _write_json(out / "curves.json", {"curves": index})
    return {"config_paths": []}


def cmd_replay(args) -> int:
    path = Path(args.manifest)
    try:
        with open(path) as fh:
            manifest = json.load(fh)
        argv = list(manifest["argv"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: not a run manifest ({exc})") from None
    if args.out is not None:
        argv = [a for a in argv if not a.startswith("--out=")]
        if "--out" in argv:
            argv[argv.index("--out") + 1] = args.out
        else:
            argv += ["--out", args.out]
    return main(argv)


# --------------------------------------------------------------------------
# parser


def _add_common(p, need_seed=True):
    p.add_argument("--seed", type=int, required=need_seed, help="PRNG seed (mandatory)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=1)


def _add_data(p):
    p.add_argument("--n", type=int, default=None, help="sample size (with --resample)")
    p.add_argument("--resample", action="store_true", help="bootstrap margins to a common size")
    p.add_argument("--no-header", action="store_true", help="CSV files have no header row")
    p.add_argument("--levels", type=_floats, default=[0.5, 0.9, 0.99])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imanconover", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("aggregate", help="reorder marginal samples and aggregate")
    p.add_argument("--margins", nargs="+", required=True, help="single-column CSV files")
    p.add_argument("--copula", default=None, help="indep:d, clayton:theta, gauss:rho, gaussmulti:path")
    p.add_argument("--psi", choices=("sum", "max"), default="sum")
    _add_data(p)
    _add_common(p)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("kendall", help="Kendall distribution of the synthetic sample")
    p.add_argument("--margins", nargs="+", required=True)
    p.add_argument("--copula", default=None)
    _add_data(p)
    _add_common(p)
    p.set_defaults(func=cmd_kendall)

    p = sub.add_parser("tree", help="hierarchical aggregation from a JSON tree")
    p.add_argument("--config", required=True)
    _add_data(p)
    _add_common(p)
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("diagnose", help="neighbourhood masses and density-growth diagnostics")
    p.add_argument("--copula", required=True)
    p.add_argument("--margins", nargs=2, default=["normal:0,1", "normal:0,1"])
    p.add_argument("--t", type=_floats, default=[-2.0, -1.0, 0.0, 1.0, 2.0])
    p.add_argument("--delta", type=_floats, default=[0.1, 0.03, 0.01])
    p.add_argument("--n-mc", type=int, default=10**6)
    p.add_argument("--resolution", type=int, default=10_000)
    _add_common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("converge", help="replicated convergence experiment")
    p.add_argument("--copula", required=True)
    p.add_argument("--margins", nargs="+", required=True, help="normal:mu,sigma or exp:rate")
    p.add_argument("--n-grid", type=_ints, required=True)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--oracle", default="normal", help="normal, gamma, conv[:grid], layer[:grid], ref:N")
    p.add_argument("--estimator", choices=("iman_conover", "plugin"), default="iman_conover")
    _add_common(p)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("curves", help="boundary curves of lower layers as CSV polylines")
    p.add_argument("--panel", choices=("normal", "exp", "both"), default="both")
    p.add_argument("--margins", nargs=2, default=None, help="override the panel margins")
    p.add_argument("--t", type=_floats, default=None)
    p.add_argument("--resolution", type=int, default=10_000)
    _add_common(p)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("replay", help="re-run a manifest.json")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="write to a different directory")
    p.set_defaults(func=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "replay":
            return cmd_replay(args)
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        info = args.func(args)
        _write_json(
            out / "manifest.json",
            {
                "subcommand": args.command,
                "argv": argv,
                "config_paths": info.get("config_paths", []),
                "seed": args.seed,
                "out": str(args.out),
                "version": __version__,
            },
        )
    except OracleIncompatible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except (DataError, TieError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, NoRidgeError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
