"""Command line: ``compound-bsde {run,convergence,quote,check}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import _accel
from .config import load_config
from .errors import CompoundBSDEError, ValidationError
from .io import write_json

log = logging.getLogger("compound_bsde")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=None, help="override the config's seed list with one seed")
    p.add_argument("--out-dir", default=None, help="output directory (env COMPOUND_BSDE_OUT_DIR)")
    p.add_argument("--threads", type=int, default=None, help="numba worker threads (env COMPOUND_BSDE_THREADS)")
    p.add_argument("--log-level", default="INFO")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="compound-bsde", description="Compound BSDE solver and reference oracles")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config (or a preset name such as table1)")
    p.add_argument("config")
    p.add_argument("--iters", type=int, default=None, help="override training iterations")
    _add_common(p)

    p = sub.add_parser("convergence", help="error metrics over a list of step counts")
    p.add_argument("config")
    p.add_argument("--iters", type=int, default=None)
    _add_common(p)

    p = sub.add_parser("quote", help="reference price and delta without training")
    p.add_argument("family", choices=["geske", "mfold", "bermudan", "bs"])
    p.add_argument("--outer", default="call", choices=["call", "put"])
    p.add_argument("--inner", default="call", choices=["call", "put"])
    p.add_argument("--kind", default="call", choices=["call", "put"])
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--x", type=float, default=None, help="spot (per asset for bermudan)")
    p.add_argument("--K", type=float, default=None, help="strike (bs, bermudan)")
    p.add_argument("--K1", type=float, default=1.0)
    p.add_argument("--K2", type=float, default=14.0)
    p.add_argument("--T", type=float, default=None, help="expiry (bs)")
    p.add_argument("--T1", type=float, default=0.2)
    p.add_argument("--T2", type=float, default=0.4)
    p.add_argument("--M", type=int, default=2)
    p.add_argument("--strikes", type=float, nargs="+", default=None)
    p.add_argument("--times", type=float, nargs="+", default=None)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--dates", type=float, nargs="+", default=[0.1, 0.2, 0.3, 0.4, 0.5])
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--q", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=0.2)
    _add_common(p)

    p = sub.add_parser("check", help="oracle self-test")
    _add_common(p)
    return parser


def _quote(args) -> dict:
    from .oracles.bermudan import TreeConfig, binomial_bermudan_put, per_asset_delta, reduce_geobasket
    from .oracles.blackscholes import bs_price_delta
    from .oracles.compound import geske_quote, mfold_quote
    from .sde import GbmModel

    if args.family == "geske":
        x = 14.0 if args.x is None else args.x
        r = 0.03 if args.r is None else args.r
        q = geske_quote(args.outer, args.inner, args.t, x, args.K1, args.K2, args.T1, args.T2, r, args.q, args.sigma)
        return {"family": "geske", "outer": args.outer, "inner": args.inner, **q.to_dict()}
    if args.family == "mfold":
        x = 5.0 if args.x is None else args.x
        r = 0.03 if args.r is None else args.r
        strikes = args.strikes or [1.0] * args.M
        times = args.times or [float(j + 1) for j in range(len(strikes))]
        q = mfold_quote(args.t, x, strikes, times, r, args.q, args.sigma)
        return {"family": "mfold", "M": len(strikes), **q.to_dict()}
    if args.family == "bermudan":
        x = 49.0 if args.x is None else args.x
        r = 0.02 if args.r is None else args.r
        K = 50.0 if args.K is None else args.K
        model = GbmModel.isotropic(args.d, r, args.q, args.sigma, x)
        red = reduce_geobasket(model)
        price, dh = binomial_bermudan_put(red, K, args.dates, TreeConfig(steps=args.steps))
        return {"family": "bermudan", "d": args.d, "price": price, "delta_hat": dh,
                "delta_per_asset": float(per_asset_delta(dh, red, model.x0)[0]), "reduction": red.to_dict()}
    x = 14.0 if args.x is None else args.x
    r = 0.03 if args.r is None else args.r
    K = 14.0 if args.K is None else args.K
    T = 0.4 if args.T is None else args.T
    price, delta = bs_price_delta(args.kind, args.t, x, K, T, r, args.q, args.sigma)
    return {"family": "bs", "kind": args.kind, "price": price, "delta": delta}


def _load_run_config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if getattr(args, "iters", None) is not None:
        if args.iters < 1:
            raise ValidationError("--iters must be >= 1")
        for case in cfg.cases:
            case.train.iters = args.iters
            case.train.decay_steps = None
    return cfg


def _out_dir(args, cfg) -> Path:
    return Path(args.out_dir or os.environ.get("COMPOUND_BSDE_OUT_DIR") or cfg.output_dir)


def _print_row(row):
    print(f"{row.case:>20s} seed {row.seed}: price {row.price_est:.4f} (ref {row.price_ref:.4f}, "
          f"relMSE {row.price_relmse:.2e})  delta [{row.delta_est_min:.4f}, {row.delta_est_max:.4f}] "
          f"(ref {row.delta_ref_min:.4f}, relMSE {row.delta_relmse:.2e})", flush=True)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    threads = args.threads or int(os.environ.get("COMPOUND_BSDE_THREADS", "0") or 0)
    if threads:
        _accel.set_threads(threads)
    out_dir = None
    try:
        if args.command == "quote":
            print(json.dumps(_quote(args), indent=2, sort_keys=True, default=_default))
            return 0
        if args.command == "check":
            from .selfcheck import run_checks

            results = run_checks()
            for c in results:
                print(c.line())
            return 0 if all(c.passed for c in results) else 1
        from .experiments import run_convergence, run_experiment

        cfg = _load_run_config(args)
        out_dir = _out_dir(args, cfg)
        runner = run_convergence if args.command == "convergence" else run_experiment
        runner(cfg, out_dir, progress=_print_row)
        print(f"wrote {out_dir}/results.csv, errors.csv, report.json")
        return 0
    except CompoundBSDEError as exc:
        return _fail(exc, exc.code, exc.exit_code, out_dir)
    except (ValueError, OSError) as exc:
        return _fail(exc, "invalid_input", 2, out_dir)


def _default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def _fail(exc, code, exit_code, out_dir) -> int:
    payload = {"error": code, "type": type(exc).__name__, "message": str(exc), "exit_code": exit_code}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    if out_dir is not None:
        try:
            write_json(Path(out_dir) / "error.json", payload)
        except OSError:
            pass
    return exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
