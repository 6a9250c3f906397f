"""Experiment configuration files.

A config is one JSON object::

    {
      "name": "table1",
      "experiment": "plain_compound",      # | mfold | bermudan_basket | european | convergence_sweep
      "model":   {"r": 0.03, "q": 0.0, "sigma": 0.2, "x0": 14.0, "dim": 1, "corr": null},
      "problem": {"K1": 1.0, "K2": 14.0, "T1": 0.2, "T2": 0.4},
      "grid":    {"steps": 50},            # or {"h": 0.05}
      "train":   {"iters": 4000, "batch": 5000, "valid_size": 5000, "lr0": 0.01,
                  "decay_rate": 0.5, "decay_steps": null, "widths": null},
      "cases":   [{"outer": "call", "inner": "call"}, ...],
      "seeds":   [0],
      "errors":  {"enabled": true, "eval_batch": 5000},
      "output_dir": "runs/table1"
    }

Each entry of ``cases`` is a flat dict of overrides; keys are routed to
``model``, ``grid``, ``train`` or ``problem`` by name, and ``label`` names
the row.  A ``convergence_sweep`` adds ``"base": <experiment>`` and
``"N_list": [...]``, one case per ``N``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .oracles.surface import reference_surface
from .payoffs import (CompoundSpec, build_spec_bermudan_basket, build_spec_european,
                      build_spec_mfold, build_spec_plain_compound)
from .sde import GbmModel
from .solver import TrainConfig

EXPERIMENTS = ("plain_compound", "mfold", "bermudan_basket", "european", "convergence_sweep")
MODEL_KEYS = {"r", "q", "sigma", "x0", "dim", "corr"}
GRID_KEYS = {"steps", "h"}
TRAIN_KEYS = set(TrainConfig.__dataclass_fields__)
PRESETS = ("table1", "table2", "table3", "table4", "convergence", "european")

_DEFAULT_MODEL = {"r": 0.03, "q": 0.0, "sigma": 0.2, "x0": 14.0, "dim": 1, "corr": None}
_PROBLEM_KEYS = {
    "plain_compound": {"outer", "inner", "K1", "K2", "T1", "T2"},
    "mfold": {"M", "strike", "spacing", "strikes", "times"},
    "bermudan_basket": {"strike", "exercise_dates"},
    "european": {"kind", "K", "T", "n_stages"},
}


@dataclass
class Case:
    """One fully resolved row of an experiment."""

    label: str
    experiment: str
    model: dict
    problem: dict
    grid: dict
    train: TrainConfig

    def build_model(self) -> GbmModel:
        m = self.model
        d = int(m.get("dim", 1))
        x0 = np.broadcast_to(np.asarray(m["x0"], dtype=float), (d,))
        corr = None if m.get("corr") is None else np.asarray(m["corr"], dtype=float)
        return GbmModel(r=m["r"], q=m.get("q", 0.0), sigma=m["sigma"], corr=corr, x0=x0)

    def maturity(self) -> float:
        p = self.problem
        if self.experiment == "plain_compound":
            return float(p["T2"])
        if self.experiment == "mfold":
            return float(mfold_times(p)[-1])
        if self.experiment == "bermudan_basket":
            return float(p["exercise_dates"][-1])
        return float(p["T"])

    def steps(self) -> int:
        if "steps" in self.grid:
            return int(self.grid["steps"])
        if "h" in self.grid:
            return int(round(self.maturity() / float(self.grid["h"])))
        raise ValidationError(f"case {self.label}: grid needs 'steps' or 'h'")

    def build_spec(self) -> CompoundSpec:
        model, p, n = self.build_model(), self.problem, self.steps()
        if self.experiment == "plain_compound":
            return build_spec_plain_compound(p["outer"], p["inner"], p["K1"], p["K2"], p["T1"], p["T2"], model, n)
        if self.experiment == "mfold":
            return build_spec_mfold(mfold_strikes(p), mfold_times(p), model, n)
        if self.experiment == "bermudan_basket":
            return build_spec_bermudan_basket(p["strike"], p["exercise_dates"], model, n)
        return build_spec_european(p["kind"], p["K"], p["T"], model, n, int(p.get("n_stages", 1)))

    def build_surface(self, spec: CompoundSpec):
        model, p = spec.model, self.problem
        if self.experiment == "plain_compound":
            return reference_surface("plain_compound", outer=p["outer"], inner=p["inner"], K1=p["K1"],
                                     K2=p["K2"], T1=p["T1"], T2=p["T2"], model=model)
        if self.experiment == "mfold":
            return reference_surface("mfold", strikes=mfold_strikes(p), times=mfold_times(p), model=model)
        if self.experiment == "bermudan_basket":
            return reference_surface("bermudan_basket", strike=p["strike"], exercise_dates=p["exercise_dates"],
                                     model=model, grid_times=spec.grid.times)
        return reference_surface("european", kind=p["kind"], K=p["K"], T=p["T"], model=model,
                                 n_stages=int(p.get("n_stages", 1)))

    def to_dict(self) -> dict:
        return {"label": self.label, "experiment": self.experiment, "model": self.model,
                "problem": self.problem, "grid": self.grid, "train": self.train.to_dict()}


def mfold_strikes(p: dict) -> list[float]:
    if "strikes" in p:
        return [float(k) for k in p["strikes"]]
    return [float(p.get("strike", 1.0))] * int(p["M"])


def mfold_times(p: dict) -> list[float]:
    if "times" in p:
        return [float(t) for t in p["times"]]
    spacing = float(p.get("spacing", 1.0))
    return [spacing * (j + 1) for j in range(int(p["M"]))]


@dataclass
class RunConfig:
    name: str
    experiment: str
    cases: list[Case]
    seeds: list[int]
    errors: dict = field(default_factory=dict)
    output_dir: str = "runs"
    base: str | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def errors_enabled(self) -> bool:
        return bool(self.errors.get("enabled", True))

    @property
    def eval_batch(self) -> int:
        return int(self.errors.get("eval_batch", 5000))

    def validate(self) -> list[CompoundSpec]:
        """Build every spec (and check training params) before anything expensive runs."""
        specs = []
        for case in self.cases:
            if case.train.iters < 1 or case.train.batch < 1 or case.train.valid_size < 1:
                raise ValidationError(f"case {case.label}: iters, batch and valid_size must be >= 1")
            if not case.train.lr0 > 0 or not 0 < case.train.decay_rate <= 1:
                raise ValidationError(f"case {case.label}: need lr0 > 0 and 0 < decay_rate <= 1")
            specs.append(case.build_spec())
        return specs


def _route(overrides: dict, label: str) -> tuple[dict, dict, dict, dict]:
    model, grid, train, problem = {}, {}, {}, {}
    for k, v in overrides.items():
        if k == "label":
            continue
        if k in MODEL_KEYS:
            model[k] = v
        elif k in GRID_KEYS:
            grid[k] = v
        elif k in TRAIN_KEYS:
            train[k] = v
        else:
            problem[k] = v
    return model, grid, train, problem


def _case_label(overrides: dict, index: int) -> str:
    if "label" in overrides:
        return str(overrides["label"])
    parts = [f"{k}={v}" for k, v in overrides.items()]
    return ",".join(parts) if parts else f"case{index}"


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    raw = copy.deepcopy(raw)
    experiment = raw.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ValidationError(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
    base = None
    kind = experiment
    case_list = raw.get("cases") or [{}]
    if experiment == "convergence_sweep":
        base = raw.get("base", "plain_compound")
        if base not in _PROBLEM_KEYS:
            raise ValidationError(f"convergence base must be one of {tuple(_PROBLEM_KEYS)}")
        n_list = raw.get("N_list")
        if not n_list:
            raise ValidationError("convergence_sweep needs a non-empty N_list")
        case_list = [{"label": f"N={int(n)}", "steps": int(n)} for n in n_list]
        kind = base
    model0 = {**_DEFAULT_MODEL, **raw.get("model", {})}
    unknown = set(raw.get("model", {})) - MODEL_KEYS
    if unknown:
        raise ValidationError(f"unknown model keys {sorted(unknown)}")
    train_raw = raw.get("train", {})
    unknown = set(train_raw) - TRAIN_KEYS
    if unknown:
        raise ValidationError(f"unknown train keys {sorted(unknown)}")
    cases = []
    for i, ov in enumerate(case_list):
        m, g, t, p = _route(ov, str(i))
        problem = {**raw.get("problem", {}), **p}
        unknown = set(problem) - _PROBLEM_KEYS[kind]
        if unknown:
            raise ValidationError(f"unknown {kind} keys {sorted(unknown)}")
        tr = {**train_raw, **t}
        if tr.get("widths") is not None:
            tr["widths"] = tuple(int(w) for w in tr["widths"])
        cases.append(Case(label=_case_label(ov, i), experiment=kind, model={**model0, **m},
                          problem=problem, grid={**raw.get("grid", {}), **g}, train=TrainConfig(**tr)))
    seeds = [int(s) for s in raw.get("seeds", [0])]
    if not seeds:
        raise ValidationError("need at least one seed")
    return RunConfig(name=str(raw.get("name", experiment)), experiment=experiment, cases=cases, seeds=seeds,
                     errors=dict(raw.get("errors", {})), output_dir=str(raw.get("output_dir", "runs")),
                     base=base, raw=raw)


def load_config(path) -> RunConfig:
    """Read a config file; a bare preset name such as ``table1`` loads the shipped preset."""
    p = Path(path)
    if not p.exists() and str(path) in PRESETS:
        return parse_config(load_preset(str(path)))
    try:
        raw = json.loads(p.read_text())
    except FileNotFoundError as exc:
        raise ValidationError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {path} is not valid JSON: {exc}") from exc
    return parse_config(raw)


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("compound_bsde.presets").joinpath(f"{name}.json").read_text()
    return json.loads(text)
