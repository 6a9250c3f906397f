"""Table reproduction and convergence sweeps: train, quote references, write outputs."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import Case, RunConfig, mfold_strikes, mfold_times
from .io import write_csv, write_json
from .nn import save_checkpoint
from .oracles.bermudan import binomial_bermudan_put, per_asset_delta, reduce_geobasket
from .oracles.blackscholes import bs_price_delta
from .oracles.compound import geske_quote, mfold_quote
from .payoffs import CompoundSpec
from .solver import ErrorReport, error_metrics, derive_seed, train

log = logging.getLogger(__name__)

RESULT_COLUMNS = ["experiment", "case", "seed", "steps", "dim", "price_est", "price_ref", "price_relmse",
                  "delta_est_min", "delta_est_max", "delta_ref_min", "delta_ref_max", "delta_relmse",
                  "valid_loss"]
ERROR_COLUMNS = ["experiment", "case", "seed", "N", "h", "err_x", "err_y", "err_z", "total_err",
                 "loss", "bound"]


def rel_mse(est, ref) -> float:
    """``mean((est - ref)^2) / mean(ref^2)``; the scalar case is ``(est - ref)^2 / ref^2``."""
    est = np.atleast_1d(np.asarray(est, dtype=float))
    ref = np.broadcast_to(np.atleast_1d(np.asarray(ref, dtype=float)), est.shape)
    return float(np.mean((est - ref) ** 2) / np.mean(ref ** 2))


@dataclass
class ResultRow:
    experiment: str
    case: str
    seed: int
    steps: int
    dim: int
    price_est: float
    price_ref: float
    price_relmse: float
    delta_est_min: float
    delta_est_max: float
    delta_ref_min: float
    delta_ref_max: float
    delta_relmse: float
    valid_loss: float

    @classmethod
    def build(cls, case: Case, seed: int, spec: CompoundSpec, price: float, delta, ref_price: float,
              ref_delta, valid_loss: float) -> "ResultRow":
        delta = np.atleast_1d(np.asarray(delta, dtype=float))
        ref_delta = np.broadcast_to(np.atleast_1d(np.asarray(ref_delta, dtype=float)), delta.shape)
        return cls(case.experiment, case.label, int(seed), spec.grid.n_steps, spec.model.dim,
                   float(price), float(ref_price), rel_mse(price, ref_price),
                   float(delta.min()), float(delta.max()), float(ref_delta.min()), float(ref_delta.max()),
                   rel_mse(delta, ref_delta), float(valid_loss))


def reference_quote(case: Case, spec: CompoundSpec) -> tuple[float, np.ndarray]:
    """Reference price and per-asset delta at ``(0, x0)``."""
    model, p = spec.model, case.problem
    if case.experiment == "plain_compound":
        q = geske_quote(p["outer"], p["inner"], 0.0, float(model.x0[0]), p["K1"], p["K2"], p["T1"], p["T2"],
                        model.r, float(model.q[0]), float(model.sigma[0, 0]))
        return q.price, np.array([q.delta])
    if case.experiment == "mfold":
        q = mfold_quote(0.0, float(model.x0[0]), mfold_strikes(p), mfold_times(p), model.r,
                        float(model.q[0]), float(model.sigma[0, 0]))
        return q.price, np.array([q.delta])
    if case.experiment == "bermudan_basket":
        red = reduce_geobasket(model)
        price, delta_hat = binomial_bermudan_put(red, p["strike"], p["exercise_dates"])
        return price, per_asset_delta(delta_hat, red, model.x0)
    price, delta = bs_price_delta(p["kind"], 0.0, float(model.x0[0]), p["K"], p["T"], model.r,
                                  float(model.q[0]), float(model.sigma[0, 0]))
    return price, np.array([delta])


def _wants_errors(cfg: RunConfig, case: Case) -> bool:
    if not cfg.errors_enabled:
        return False
    # M-fold references over the whole horizon are costly; keep them to two stages
    if case.experiment == "mfold" and len(mfold_times(case.problem)) > 2:
        return False
    return True


def _slug(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in label)


def run_experiment(cfg: RunConfig, out_dir: Path | None = None, progress=None) -> dict:
    """Run every (case, seed) pair and write ``results.csv``, ``errors.csv``, ``report.json``
    and one checkpoint per trained model.  Returns the report dictionary."""
    specs = cfg.validate()
    out = Path(out_dir or cfg.output_dir)
    rows: list[ResultRow] = []
    err_rows: list[dict] = []
    runs = []
    for case, spec in zip(cfg.cases, specs):
        ref_price, ref_delta = reference_quote(case, spec)
        surface = case.build_surface(spec) if _wants_errors(cfg, case) else None
        for seed in cfg.seeds:
            log.info("case %s seed %d: training %d iterations", case.label, seed, case.train.iters)
            nets, report = train(spec, seed, config=case.train)
            row = ResultRow.build(case, seed, spec, report.price, report.delta, ref_price, ref_delta,
                                  report.valid_loss)
            rows.append(row)
            ckpt = out / "checkpoints" / f"{_slug(case.label)}_seed{seed}.ckpt"
            save_checkpoint(ckpt, nets.theta, {"case": case.to_dict(), "seed": int(seed),
                                               "widths": list(nets.widths), "n_stages": nets.n_stages,
                                               "iterations": case.train.iters})
            run = {"case": case.label, "seed": int(seed), "train": report.to_dict(), "result": asdict(row),
                   "checkpoint": str(ckpt.relative_to(out))}
            if surface is not None:
                errs = error_metrics(spec, nets, surface, cfg.eval_batch, derive_seed(seed, 3))
                err_rows.append(_error_row(case, seed, spec, errs))
                run["errors"] = errs.to_dict()
            runs.append(run)
            if progress is not None:
                progress(row)
    write_csv(out / "results.csv", RESULT_COLUMNS, [asdict(r) for r in rows])
    write_csv(out / "errors.csv", ERROR_COLUMNS, err_rows)
    report = {"name": cfg.name, "experiment": cfg.experiment, "config": cfg.raw, "runs": runs}
    write_json(out / "report.json", report)
    return report


def _error_row(case: Case, seed: int, spec: CompoundSpec, errs: ErrorReport) -> dict:
    return {"experiment": case.experiment, "case": case.label, "seed": int(seed), "N": spec.grid.n_steps,
            "h": errs.h, "err_x": errs.err_x, "err_y": errs.err_y, "err_z": errs.err_z,
            "total_err": errs.total, "loss": errs.loss, "bound": errs.h + errs.loss}


def run_convergence(cfg: RunConfig, out_dir: Path | None = None, progress=None) -> dict:
    """One trained model per ``N``; ``errors.csv`` holds the log-log plot data."""
    if cfg.experiment != "convergence_sweep":
        from .errors import ValidationError

        raise ValidationError("convergence needs an experiment of kind 'convergence_sweep'")
    if not cfg.errors_enabled:
        cfg.errors["enabled"] = True
    start = time.perf_counter()
    report = run_experiment(cfg, out_dir, progress)
    summary = []
    for run in report["runs"]:
        e = run["errors"]
        summary.append({"N": run["result"]["steps"], "seed": run["seed"], "total_err": e["total"],
                        "bound": e["bound"], "ratio": e["total"] / e["bound"]})
    report["convergence"] = summary
    report["sweep_wall_clock"] = time.perf_counter() - start
    write_json(Path(out_dir or cfg.output_dir) / "report.json", report)
    return report
