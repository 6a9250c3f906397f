"""Closed-form and lattice reference prices used to score the solver."""

from .bermudan import (BasketReduction, TreeConfig, binomial_bermudan_put, per_asset_delta,
                       reduce_geobasket)
from .blackscholes import bs_price_delta
from .compound import CompoundQuote, geske_quote, mfold_critical_levels, mfold_quote
from .normal import NormalCdfConfig, binorm_cdf, mvn_cdf, mvn_cdf_batch, norm_cdf
from .roots import brent_root
from .surface import reference_surface

__all__ = [
    "BasketReduction", "CompoundQuote", "NormalCdfConfig", "TreeConfig", "binomial_bermudan_put",
    "binorm_cdf", "brent_root", "bs_price_delta", "geske_quote", "mfold_critical_levels", "mfold_quote",
    "mvn_cdf", "mvn_cdf_batch", "norm_cdf", "per_asset_delta", "reduce_geobasket", "reference_surface",
]
