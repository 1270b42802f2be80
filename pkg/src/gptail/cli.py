"""Command-line interface: ingestion, fitting, diagnostics, risk, simulation.

Every command writes its outputs plus a ``*_manifest.json`` recording the
exact configuration, its hash, the seed and library versions, so a run
can be reproduced byte for byte (single-worker mode).  Exit codes:
0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import GptailError, InvalidParameterError, MarginalParams, GpModel, NumericalError
from .fit import (
    DEFAULT_FAMILIES,
    FitError,
    FitResult,
    ModelTemplate,
    fit_mle,
    model_selection_pipeline,
)
from .generators import GeneratorSpec
from .ingest import (
    DataError,
    exceedances,
    negative_returns,
    rainfall_clusters,
    rank_standardize,
    read_matrix_csv,
    read_series_csv,
    write_matrix_csv,
)

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, sort_keys=True, indent=1, default=_json_default) + "\n")


def _manifest(out_dir: Path, name: str, args: argparse.Namespace):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    blob = json.dumps(cfg, sort_keys=True, default=str)
    manifest = {
        "command": name,
        "config": {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()},
        "config_sha256": hashlib.sha256(blob.encode()).hexdigest(),
        "seed": getattr(args, "seed", None),
        "versions": {
            "gptail": __version__,
            "numpy": np.__version__,
            "python": ".".join(map(str, sys.version_info[:3])),
        },
        "tolerances": {"nll_rel_tol_search": 1e-7, "nll_rel_tol_final": 1e-9},
    }
    _write_json(out_dir / f"{name}_manifest.json", manifest)


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_floats(text: str) -> np.ndarray:
    return np.array([float(t) for t in text.split(",") if t.strip() != ""])


def _load_fit(path) -> FitResult:
    return FitResult.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(args):
    out = _out_dir(args)
    if args.what == "returns":
        series = read_series_csv(args.prices)
        rets = negative_returns(series)
        write_matrix_csv(out / "returns.csv", rets.values, rets.labels)
        info = {"n": int(rets.values.shape[0]), "columns": list(rets.labels)}
        _write_json(out / "returns_info.json", info)
    else:
        series = read_series_csv(args.rain)
        mat = rainfall_clusters(series, args.u, halfwidth=args.halfwidth)
        write_matrix_csv(out / "clusters.csv", mat, ["y1", "y2", "y3"])
        _write_json(out / "clusters_info.json", {"n": int(mat.shape[0]), "u": args.u})
    _manifest(out, f"ingest_{args.what}", args)
    return 0


def _pipeline_to_json(report):
    out = dict(report)
    final = out.pop("final", None)
    out.pop("std_fits", None)
    joint = out.pop("joint", None)
    uni = out.pop("univariate", None)
    if final is not None:
        out["final"] = final.to_dict()
    if joint is not None:
        out["joint"] = joint.to_dict()
    if uni is not None:
        out["univariate"] = {
            "sigma": uni.sigma, "gamma": uni.gamma,
            "se": [uni.se_sigma, uni.se_gamma], "loglik": uni.loglik, "n": uni.n,
        }
    return out


def cmd_fit(args):
    out = _out_dir(args)
    rng = np.random.default_rng(args.seed)
    data, _ = read_matrix_csv(args.data)
    if args.pipeline:
        report = model_selection_pipeline(
            data,
            q_fixed=args.q,
            censor_floor=args.censor_floor,
            B=args.bootstrap,
            rng=rng,
            restarts=args.restarts,
        )
        _write_json(out / "pipeline.json", _pipeline_to_json(report))
        if report["final"] is not None:
            (out / "fit.json").write_text(report["final"].to_json(indent=1) + "\n")
        _manifest(out, "fit_pipeline", args)
        return 0
    if args.family is None:
        raise InvalidParameterError("either --pipeline or --family is required")
    d = data.shape[1]
    if args.u is not None:
        u = np.broadcast_to(_parse_floats(args.u), (d,))
    elif args.q is not None:
        u = np.quantile(data, args.q, axis=0)
    else:
        raise InvalidParameterError("provide --u or --q to set the threshold")
    exc = exceedances(data, u, args.censor_floor)
    dep = dict(kv.split("=") for kv in args.constraints.split(",")) if args.constraints else {}
    margins_opt = []
    if args.family == "structured_exp":
        margins_opt = [("sigma", "shared"),
                       ("gamma", ("fixed", 0.0) if args.gamma0 else "positive")]
    else:
        margins_opt = [("sigma", "shared" if args.shared_sigma else "free"),
                       ("gamma", "shared" if args.shared_gamma else "free")]
    template = ModelTemplate(args.family, d, args.form, dep=tuple(dep.items()),
                             margins=tuple(margins_opt))
    res = fit_mle(template, exc, restarts=args.restarts, rng=rng)
    (out / "fit.json").write_text(res.to_json(indent=1) + "\n")
    _write_json(out / "fit_summary.json",
                {"u": u.tolist(), "n_exceedances": exc.n, "loglik": res.loglik,
                 "aic": res.aic, "params": res.params, "se": res.se})
    _manifest(out, "fit_single", args)
    return 0


def cmd_diagnose(args):
    from . import diagnostics as dg

    out = _out_dir(args)
    rng = np.random.default_rng(args.seed)
    data, _ = read_matrix_csv(args.data)
    if args.what == "chi":
        subset = [int(s) - 1 for s in args.subset.split(",")] if args.subset \
            else list(range(data.shape[1]))
        grid = _parse_floats(args.q_grid) if args.q_grid else np.round(np.arange(0.70, 0.99, 0.01), 3)
        q_star, curve = dg.threshold_select(data, grid, B=args.bootstrap, rng=rng, subset=subset)
        rows = curve.to_rows()
        write_matrix_csv(out / "chi_curve.csv",
                         np.array([[r["q"], r["chi"], r["lo"], r["hi"]] for r in rows]),
                         ["q", "chi", "lo", "hi"])
        _write_json(out / "chi_summary.json", {"q_star": q_star, "subset": [s + 1 for s in subset]})
    elif args.what == "stability":
        fit = _load_fit(args.fit)
        u = np.broadcast_to(_parse_floats(args.u), (data.shape[1],))
        subset = [int(s) - 1 for s in args.subset.split(",")] if args.subset else [0]
        t_grid = _parse_floats(args.t)
        rows = dg.stability_ratio(
            data, u,
            fit.model.margins.sigma_arr, fit.model.margins.gamma_arr,
            subset, t_grid, B=args.bootstrap, rng=rng,
        )
        _write_json(out / "stability.json", rows)
        csv_rows = [[r["t"], r["ratio"] if r["ratio"] is not None else np.nan,
                     r["lo"] if r["lo"] is not None else np.nan,
                     r["hi"] if r["hi"] is not None else np.nan] for r in rows]
        write_matrix_csv(out / "stability.csv", np.array(csv_rows), ["t", "ratio", "lo", "hi"])
    elif args.what == "sumstab":
        fit = _load_fit(args.fit)
        u = np.broadcast_to(_parse_floats(args.u), (data.shape[1],))
        weights = _parse_floats(args.weights) if args.weights else np.ones(data.shape[1])
        report = dg.sum_stability_check(data, u, weights, fit)
        _write_json(out / "sumstab.json", report)
    elif args.what == "exceedprob":
        fit = _load_fit(args.fit)
        u = np.broadcast_to(_parse_floats(args.u), (data.shape[1],))
        table = dg.exceedance_prob_check(fit.model, data, u, nsim=args.nsim, rng=rng)
        _write_json(out / "exceedprob.json", table)
    _manifest(out, f"diagnose_{args.what}", args)
    return 0


def cmd_risk(args):
    from . import risk as rk

    out = _out_dir(args)
    rng = np.random.default_rng(args.seed)
    fit = _load_fit(args.fit)
    if args.what == "var":
        data, _ = read_matrix_csv(args.data)
        d = data.shape[1]
        u = np.broadcast_to(_parse_floats(args.u), (d,)) if args.u else np.quantile(data, args.q, axis=0)
        weights = _parse_floats(args.weights) if args.weights else np.ones(d)
        pf = rk.Portfolio(weights, u, fit)
        phi, phi_se = rk.phi_binomial(data, pf)
        rows = []
        for p in _parse_floats(args.p):
            v, vlo, vhi = rk.var_with_ci(pf, phi, phi_se**2, p)
            e, elo, ehi = rk.es_with_ci(pf, phi, phi_se**2, p)
            rows.append([p, v, vlo, vhi, e, elo, ehi])
        write_matrix_csv(out / "var_es.csv", np.array(rows, dtype=float),
                         ["p", "var", "var_lo", "var_hi", "es", "es_lo", "es_hi"])
        _write_json(out / "risk_summary.json",
                    {"phi": phi, "phi_se": phi_se, "weights": weights.tolist(), "u": u.tolist()})
    elif args.what == "grid":
        data, _ = read_matrix_csv(args.data)
        d = data.shape[1]
        u = np.broadcast_to(_parse_floats(args.u), (d,)) if args.u else np.quantile(data, args.q, axis=0)
        j, w = args.fixed.split("=")
        rows = rk.portfolio_grid(
            fit.model, fit, data, u, args.p_level,
            fixed={int(j) - 1: float(w)}, budget=args.budget,
            nsim=args.nsim, rng=rng, use_p_theta=not args.binomial_phi,
        )
        mat = [[*r["a"], r["phi"], r["var"] if r["var"] is not None else np.nan] for r in rows]
        write_matrix_csv(out / "var_grid.csv", np.array(mat, dtype=float),
                         [f"a{k + 1}" for k in range(d)] + ["phi", "var"])
    elif args.what == "event":
        u = _parse_floats(args.u)
        d = fit.model.dim
        u = np.broadcast_to(u, (d,))
        spec = rk.EventRiskSpec(_parse_floats(args.y), args.zeta, fit.model)
        report = rk.event_rate(spec, u, nsim=args.nsim, rng=rng)
        _write_json(out / "event_rate.json", report)
    _manifest(out, f"risk_{args.what}", args)
    return 0


def cmd_simulate(args):
    from .simulate import sample_model

    out = _out_dir(args)
    rng = np.random.default_rng(args.seed)
    if args.fit:
        model = _load_fit(args.fit).model
    else:
        spec_obj = json.loads(args.model)
        spec = GeneratorSpec.from_dict(spec_obj)
        margins = MarginalParams(spec_obj.get("sigma", [1.0] * spec.dim),
                                 spec_obj.get("gamma", [0.0] * spec.dim))
        model = GpModel(spec, margins, spec_obj.get("form", "T"))
    batch = sample_model(model, args.n, rng, seed=args.seed)
    write_matrix_csv(out / "samples.csv", batch.x)
    _write_json(out / "samples_info.json",
                {"method": batch.method, "provenance": batch.provenance, "n": batch.n})
    _manifest(out, "simulate", args)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gptail",
        description="Multivariate peaks-over-thresholds modelling with GP distributions",
    )
    ap.add_argument("--out-dir", default=os.environ.get("GPTAIL_OUT", "gptail_out"),
                    help="output directory (env GPTAIL_OUT)")
    ap.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    ap.add_argument("--threads", type=int, default=1,
                    help="worker threads for bootstrap/Monte Carlo loops")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="construct datasets from raw series")
    ps = p.add_subparsers(dest="what", required=True)
    pr = ps.add_parser("returns", help="negative returns from price series")
    pr.add_argument("--prices", required=True)
    pr.set_defaults(func=cmd_ingest)
    pc = ps.add_parser("clusters", help="rainfall cluster triples")
    pc.add_argument("--rain", required=True)
    pc.add_argument("--u", type=float, required=True)
    pc.add_argument("--halfwidth", type=int, default=5)
    pc.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="fit GP models")
    p.add_argument("--data", required=True)
    p.add_argument("--pipeline", action="store_true", help="run the model-selection pipeline")
    p.add_argument("--family", choices=["indep_gumbel", "indep_reverse_gumbel",
                                        "indep_reverse_exp", "indep_log_gamma",
                                        "gaussian", "structured_exp"])
    p.add_argument("--form", choices=["T", "U", "R"], default="T")
    p.add_argument("--constraints", help="dependence options, e.g. alpha=common,beta=zero")
    p.add_argument("--q", type=float, help="marginal quantile for the threshold")
    p.add_argument("--u", help="explicit threshold (comma separated or scalar)")
    p.add_argument("--censor-floor", type=float, default=0.0)
    p.add_argument("--gamma0", action="store_true", help="fix the shape at zero (structured)")
    p.add_argument("--shared-gamma", action="store_true")
    p.add_argument("--shared-sigma", action="store_true")
    p.add_argument("--restarts", type=int, default=2)
    p.add_argument("--bootstrap", type=int, default=500)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("diagnose", help="threshold selection and goodness-of-fit")
    ds = p.add_subparsers(dest="what", required=True)
    dchi = ds.add_parser("chi")
    dchi.add_argument("--data", required=True)
    dchi.add_argument("--subset", help="1-based components, e.g. 1,2")
    dchi.add_argument("--q-grid")
    dchi.add_argument("--bootstrap", type=int, default=1000)
    dchi.set_defaults(func=cmd_diagnose)
    dst = ds.add_parser("stability")
    dst.add_argument("--data", required=True)
    dst.add_argument("--fit", required=True)
    dst.add_argument("--u", required=True)
    dst.add_argument("--subset")
    dst.add_argument("--t", default="1.5,2,4")
    dst.add_argument("--bootstrap", type=int, default=1000)
    dst.set_defaults(func=cmd_diagnose)
    dsu = ds.add_parser("sumstab")
    dsu.add_argument("--data", required=True)
    dsu.add_argument("--fit", required=True)
    dsu.add_argument("--u", required=True)
    dsu.add_argument("--weights")
    dsu.set_defaults(func=cmd_diagnose)
    dex = ds.add_parser("exceedprob")
    dex.add_argument("--data", required=True)
    dex.add_argument("--fit", required=True)
    dex.add_argument("--u", required=True)
    dex.add_argument("--nsim", type=int, default=100_000)
    dex.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("risk", help="portfolio and event risk")
    rs = p.add_subparsers(dest="what", required=True)
    rv = rs.add_parser("var")
    rv.add_argument("--fit", required=True)
    rv.add_argument("--data", required=True)
    rv.add_argument("--weights")
    rv.add_argument("--u")
    rv.add_argument("--q", type=float)
    rv.add_argument("--p", default="0.01,0.001")
    rv.set_defaults(func=cmd_risk)
    rg = rs.add_parser("grid")
    rg.add_argument("--fit", required=True)
    rg.add_argument("--data", required=True)
    rg.add_argument("--u")
    rg.add_argument("--q", type=float)
    rg.add_argument("--fixed", required=True, help="component=weight, e.g. 1=10")
    rg.add_argument("--budget", type=float, default=100.0)
    rg.add_argument("--p-level", type=float, default=0.001)
    rg.add_argument("--nsim", type=int, default=100_000)
    rg.add_argument("--binomial-phi", action="store_true",
                    help="use the binomial phi instead of the model-based estimate")
    rg.set_defaults(func=cmd_risk)
    re_ = rs.add_parser("event")
    re_.add_argument("--fit", required=True)
    re_.add_argument("--y", required=True)
    re_.add_argument("--zeta", type=float, required=True)
    re_.add_argument("--u", required=True)
    re_.add_argument("--nsim", type=int, default=1_000_000)
    re_.set_defaults(func=cmd_risk)

    p = sub.add_parser("simulate", help="draw from a model")
    p.add_argument("--fit", help="fit.json to sample from")
    p.add_argument("--model", help="inline JSON spec {family, params, form, sigma, gamma}")
    p.add_argument("--n", type=int, default=1000)
    p.set_defaults(func=cmd_simulate)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvalidParameterError, json.JSONDecodeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, FitError, GptailError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
