"""Shared helpers: reference detector layouts for oracle cross-checks."""

from __future__ import annotations

from dlczsim import fock
from dlczsim.model import ModelParams


def two_detector_layout(params: ModelParams, n_max: int = 60, kind: str = "linearized",
                        tail_tol: float = 1e-13):
    """Enumerated click probabilities for the plain two-detector setup.

    Coherent backgrounds are convolved into the state; the incoherent
    click floors b1/b2 enter as detector dark probabilities.  In the
    linearized case this composition is algebraically identical to the
    closed-form model.
    """
    dist = fock.tmss_distribution(params.p, n_max)
    if params.kappa1 > 0.0:
        dist = fock.add_background(
            dist, 1, fock.poisson_marginal(params.kappa1 * params.p, tail_tol=tail_tol))
    if params.kappa2 > 0.0:
        dist = fock.add_background(
            dist, 2, fock.poisson_marginal(params.kappa2 * params.p, tail_tol=tail_tol))
    detectors = (
        fock.DetectorModel(params.alpha1, params.b1, kind),
        fock.DetectorModel(params.alpha2, params.b2, kind),
    )
    return fock.click_probabilities(dist, detectors)


def split_layout(params: ModelParams, n_max: int = 60, kind: str = "threshold",
                 tail_tol: float = 1e-13):
    """Enumerated click probabilities with field 2 split on a 50/50 coupler."""
    dist = fock.tmss_distribution(params.p, n_max)
    if params.kappa1 > 0.0:
        dist = fock.add_background(
            dist, 1, fock.poisson_marginal(params.kappa1 * params.p, tail_tol=tail_tol))
    if params.kappa2 > 0.0:
        dist = fock.add_background(
            dist, 2, fock.poisson_marginal(params.kappa2 * params.p, tail_tol=tail_tol))
    triple = fock.split_mode2(dist)
    detectors = (
        fock.DetectorModel(params.alpha1, params.b1, kind),
        fock.DetectorModel(params.alpha2, params.b2, kind),
        fock.DetectorModel(params.alpha2, params.b2, kind),
    )
    return fock.click_probabilities(triple, detectors)
