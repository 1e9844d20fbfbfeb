"""Disease-rate estimation from term frequencies and intervention impact assessment."""

from ._core import (
    GaussianProcess,
    UgcImpactError,
    assess,
    assess_rates,
    check_distribution,
    fit_gp,
    fit_linear,
    gp_cross_validate,
    pearson,
    report,
    simulate,
    simulate_epidemic,
    train,
)

__all__ = [
    "GaussianProcess",
    "UgcImpactError",
    "assess",
    "assess_rates",
    "check_distribution",
    "fit_gp",
    "fit_linear",
    "gp_cross_validate",
    "pearson",
    "report",
    "simulate",
    "simulate_epidemic",
    "train",
]
