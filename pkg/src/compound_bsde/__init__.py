"""Deep compound BSDE solver for options whose payoffs are themselves option values.

Typical use::

    from compound_bsde import GbmModel, build_spec_plain_compound, train

    model = GbmModel.isotropic(1, r=0.03, q=0.0, vol=0.2, x0=14.0)
    spec = build_spec_plain_compound("call", "call", 1.0, 14.0, 0.2, 0.4, model, steps=50)
    nets, report = train(spec, seed=0, iters=2000)
"""

from .errors import CompoundBSDEError, NumericalError, ValidationError
from .grid import TimeGrid, build_grid, project
from .payoffs import (CompoundSpec, build_spec_bermudan_basket, build_spec_european, build_spec_mfold,
                      build_spec_plain_compound)
from .sde import GbmModel, exact_paths, simulate_forward
from .solver import (ErrorReport, SolverNets, TrainConfig, TrainReport, error_metrics,
                     extract_price_and_delta, loss_and_grad, rollout, train)

__version__ = "0.1.0"

__all__ = [
    "CompoundBSDEError", "CompoundSpec", "ErrorReport", "GbmModel", "NumericalError", "SolverNets",
    "TimeGrid", "TrainConfig", "TrainReport", "ValidationError", "build_grid", "build_spec_bermudan_basket",
    "build_spec_european", "build_spec_mfold", "build_spec_plain_compound", "error_metrics", "exact_paths",
    "extract_price_and_delta", "loss_and_grad", "project", "rollout", "simulate_forward", "train",
]
