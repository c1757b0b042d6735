"""Weighted least-squares recovery of source parameters from measured curves.

The measured observables are the normalized cross-correlation g12 and the
corrected retrieval efficiency qc, both recorded against the heralding
probability p1.  Three parameters are free: the two coherent background
weights and the field-2 conversion efficiency.  The field-1 efficiency,
the incoherent floors and the field-2 path transmission are calibrated
independently and stay fixed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from . import model
from .model import ModelParams

__all__ = [
    "FixedParams",
    "MeasuredPoint",
    "FitResult",
    "ResidualRow",
    "ResidualReport",
    "invert_p1",
    "model_curves",
    "fit",
    "residual_report",
    "tmss_background_ratio",
]

OBSERVABLE_NAMES = ("g12", "qc")

DEFAULT_BOUNDS = ((1e-8, 1e-8, 1e-8), (100.0, 1000.0, 1.0))


@dataclass(frozen=True)
class FixedParams:
    """Calibration constants held fixed during the fit."""

    alpha1: float = 0.16
    b1: float = 5.1e-5
    b2: float = 1.6e-4
    eta2: float = 0.14

    def __post_init__(self):
        if not 0.0 < self.alpha1 <= 1.0:
            raise ValueError("alpha1 must lie in (0, 1]")
        if not 0.0 < self.eta2 <= 1.0:
            raise ValueError("eta2 must lie in (0, 1]")
        if self.b1 < 0.0 or self.b2 < 0.0:
            raise ValueError("b1 and b2 must be non-negative")

    def params(self, p: float, kappa1: float, kappa2: float,
               alpha2: float) -> ModelParams:
        """Full parameter set at excitation probability ``p``."""
        return ModelParams(p=p, kappa1=kappa1, kappa2=kappa2,
                           alpha1=self.alpha1, alpha2=alpha2, eta2=self.eta2,
                           b1=self.b1, b2=self.b2)


@dataclass(frozen=True)
class MeasuredPoint:
    """One point of the measured curves.

    Either observable may be absent; an error bar is required alongside any
    present value (the fit weights residuals by it).

    Attributes:
        p1: heralding probability per trial (abscissa, no error assigned).
        g12: measured cross-correlation, or None.
        g12_err: one-sigma uncertainty of g12.
        qc: measured corrected retrieval efficiency, or None.
        qc_err: one-sigma uncertainty of qc.
    """

    p1: float
    g12: float | None = None
    g12_err: float | None = None
    qc: float | None = None
    qc_err: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.p1) and self.p1 > 0.0):
            raise ValueError("p1 must be positive and finite")
        for name in OBSERVABLE_NAMES:
            value = getattr(self, name)
            err = getattr(self, f"{name}_err")
            if value is None:
                if err is not None:
                    raise ValueError(f"{name}_err given without {name}")
                continue
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite")
            if err is None or not (np.isfinite(err) and err > 0.0):
                raise ValueError(f"{name} needs a positive finite {name}_err")


@dataclass(frozen=True)
class FitResult:
    """Fitted parameters with their local covariance.

    Attributes:
        kappa1: fitted field-1 coherent background weight.
        kappa2: fitted field-2 coherent background weight.
        alpha2: fitted field-2 conversion efficiency.
        covariance: 3x3 matrix over (kappa1, kappa2, alpha2) from the
            Gauss-Newton quadratic approximation at the solution.
        residual_norm: Euclidean norm of the weighted residual vector.
        fixed: calibration constants that were held fixed.
        converged: False when every start exhausted its iteration budget;
            the best parameters found so far are still reported.
        n_residuals: number of residuals entering the objective.
        observables: the observables actually fitted.
        weighted: whether residuals were scaled by the measurement errors.
    """

    kappa1: float
    kappa2: float
    alpha2: float
    covariance: np.ndarray
    residual_norm: float
    fixed: FixedParams
    converged: bool
    n_residuals: int
    observables: tuple[str, ...]
    weighted: bool

    @property
    def values(self) -> np.ndarray:
        return np.array([self.kappa1, self.kappa2, self.alpha2])

    @property
    def sigmas(self) -> np.ndarray:
        """One-sigma uncertainties, sqrt of the covariance diagonal."""
        return np.sqrt(np.diag(self.covariance))

    @property
    def dof(self) -> int:
        return self.n_residuals - 3


@dataclass(frozen=True)
class ResidualRow:
    p1: float
    observable: str
    measured: float
    sigma: float
    model: float
    standardized: float


@dataclass(frozen=True)
class ResidualReport:
    """Per-point standardized residuals and the global fit quality."""

    rows: tuple[ResidualRow, ...]
    chi2: float
    dof: int

    @property
    def chi2_per_dof(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else math.nan


def _occupation_from_target(y, kappa1: float):
    """Solve x/(1-x) + kappa1*x = y for x, vectorized.

    The quadratic kappa1*x^2 - (1 + kappa1 + y)*x + y = 0 always has one
    root in [0, 1); the form below avoids cancellation at small kappa1.
    """
    y = np.asarray(y, dtype=float)
    s = 1.0 + kappa1 + y
    disc = s * s - 4.0 * kappa1 * y
    return 2.0 * y / (s + np.sqrt(disc))


def invert_p1(template: ModelParams, p1_target: float) -> float:
    """Excitation probability that reproduces a given heralding probability.

    The heralding probability rises monotonically from the incoherent floor
    b1 at p=0, so the inverse is unique.

    Args:
        template: parameter set supplying alpha1, kappa1 and b1 (its own p
            is ignored).
        p1_target: heralding probability to invert, at least b1.

    Returns:
        p in [0, 1) with singles(template.at(p))[0] equal to the target to
        within 1e-12.

    Raises:
        ValueError: target below the b1 floor or not finite.
    """
    if not np.isfinite(p1_target):
        raise ValueError("p1_target must be finite")
    if p1_target < template.b1:
        raise ValueError(
            f"p1 target {p1_target} below the incoherent floor b1={template.b1}")
    y = (p1_target - template.b1) / template.alpha1
    p = float(_occupation_from_target(y, template.kappa1))
    return min(p, np.nextafter(1.0, 0.0))


def model_curves(p1_values, kappa1: float, kappa2: float, alpha2: float,
                 fixed: FixedParams | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Model (g12, qc) evaluated at measured heralding probabilities.

    Each abscissa is inverted to an excitation probability first, so the
    curves respond to kappa1 both directly and through the inversion.
    """
    fixed = fixed if fixed is not None else FixedParams()
    p1_values = np.atleast_1d(np.asarray(p1_values, dtype=float))
    y = (p1_values - fixed.b1) / fixed.alpha1
    if np.any(y <= 0.0):
        raise ValueError("every p1 must exceed the incoherent floor b1")
    p = _occupation_from_target(y, kappa1)
    g12 = np.empty_like(p1_values)
    qc = np.empty_like(p1_values)
    for i, p_i in enumerate(p):
        point = model.figure_of_merit(
            fixed.params(float(p_i), kappa1, kappa2, alpha2))
        g12[i] = point.g12
        qc[i] = point.qc
    return g12, qc


def _start_points(center: np.ndarray, n_starts: int, lo: np.ndarray,
                  hi: np.ndarray) -> list[np.ndarray]:
    # corners of a half-decade cube around the center, log-spaced
    if n_starts == 1:
        return [np.clip(center, lo, hi)]
    starts = []
    for i in range(n_starts):
        signs = np.array([0.5 if (i >> axis) & 1 else -0.5 for axis in range(3)])
        starts.append(np.clip(center * 10.0 ** signs, lo, hi))
    return starts


def fit(data: Sequence[MeasuredPoint], fixed: FixedParams | None = None,
        initial: Sequence[float] | None = None,
        observables: Sequence[str] = OBSERVABLE_NAMES, weighted: bool = True,
        n_starts: int = 8, bounds=DEFAULT_BOUNDS,
        max_nfev: int | None = None) -> FitResult:
    """Fit (kappa1, kappa2, alpha2) to measured correlation curves.

    Runs a bounded trust-region least-squares descent from several
    log-spaced starting points and keeps the lowest-cost solution; ties go
    to the earliest start, so the result is deterministic.

    Args:
        data: measured points; at least 3 informative ones spanning a
            decade in p1.
        fixed: calibration constants; defaults to the standard set.
        initial: center of the start cloud (kappa1, kappa2, alpha2); by
            default a data-driven guess.  Values outside the bounds are
            clamped with a warning.
        observables: which curves enter the objective, subset of
            ("g12", "qc").  Observables absent from the data are dropped
            with a warning.
        weighted: scale residuals by the measurement errors.  When False
            the covariance is rescaled by the residual variance instead.
        n_starts: number of starting points, 1 to 8.
        bounds: (lower, upper) triples for the parameters.
        max_nfev: optional cap on objective evaluations per start.

    Returns:
        FitResult; ``converged`` is False if no start met a convergence
        criterion before exhausting its budget.

    Raises:
        ValueError: too few informative points, span under one decade, a
            p1 at or below the b1 floor, or a missing error bar.
    """
    fixed = fixed if fixed is not None else FixedParams()
    observables = tuple(observables)
    if not observables or any(o not in OBSERVABLE_NAMES for o in observables):
        raise ValueError(f"observables must be a non-empty subset of {OBSERVABLE_NAMES}")
    data = list(data)

    present = tuple(o for o in observables
                    if any(getattr(pt, o) is not None for pt in data))
    if not present:
        raise ValueError("no requested observable is present in the data")
    if present != observables:
        dropped = sorted(set(observables) - set(present))
        warnings.warn(f"observables {dropped} absent from data; "
                      f"fitting {list(present)} only")
    observables = present

    informative = [pt for pt in data
                   if any(getattr(pt, o) is not None for o in observables)]
    if len(informative) < 3:
        raise ValueError("need at least 3 informative points")
    p1_span = [pt.p1 for pt in informative]
    if max(p1_span) < 10.0 * min(p1_span) * (1.0 - 1e-12):
        raise ValueError("points must span at least one decade in p1")
    if min(p1_span) <= fixed.b1:
        raise ValueError("every p1 must exceed the incoherent floor b1")

    # one residual per present observable per point
    blocks = {}
    for name in observables:
        pts = [pt for pt in data if getattr(pt, name) is not None]
        p1_arr = np.array([pt.p1 for pt in pts])
        val = np.array([getattr(pt, name) for pt in pts])
        sig = np.array([getattr(pt, f"{name}_err") for pt in pts], dtype=float)
        blocks[name] = (p1_arr, val, sig if weighted else np.ones_like(val))
    n_residuals = sum(len(v[1]) for v in blocks.values())

    def residuals(theta):
        parts = []
        for name in observables:
            p1_arr, val, sig = blocks[name]
            g12_m, qc_m = model_curves(p1_arr, *theta, fixed=fixed)
            curve = g12_m if name == "g12" else qc_m
            parts.append((curve - val) / sig)
        return np.concatenate(parts)

    lo = np.asarray(bounds[0], dtype=float)
    hi = np.asarray(bounds[1], dtype=float)
    if initial is None:
        qc_vals = [pt.qc for pt in data if pt.qc is not None]
        alpha2_guess = fixed.eta2 * float(np.median(qc_vals)) if qc_vals else 0.05
        center = np.array([0.1, 1.0, max(alpha2_guess, 10.0 * lo[2])])
    else:
        center = np.asarray(initial, dtype=float)
        if center.shape != (3,):
            raise ValueError("initial must supply (kappa1, kappa2, alpha2)")
        clamped = np.clip(center, lo, hi)
        if not np.array_equal(clamped, center):
            warnings.warn("initial guess clamped into the fit bounds")
        center = clamped
    if not 1 <= n_starts <= 8:
        raise ValueError("n_starts must lie in [1, 8]")

    best = None
    for x0 in _start_points(center, n_starts, lo, hi):
        result = least_squares(residuals, x0, bounds=(lo, hi), method="trf",
                               x_scale="jac", xtol=1e-12, ftol=1e-12,
                               gtol=1e-12, max_nfev=max_nfev)
        if best is None or result.cost < best.cost:
            best = result

    converged = best.status > 0
    if not converged:
        warnings.warn("fit did not converge; reporting the best point found")

    jtj = best.jac.T @ best.jac
    covariance = np.linalg.pinv(jtj, hermitian=True)
    if not weighted:
        dof = n_residuals - 3
        scale = 2.0 * best.cost / dof if dof > 0 else math.nan
        covariance = covariance * scale
    covariance = 0.5 * (covariance + covariance.T)
    covariance.flags.writeable = False

    return FitResult(
        kappa1=float(best.x[0]), kappa2=float(best.x[1]),
        alpha2=float(best.x[2]), covariance=covariance,
        residual_norm=float(np.sqrt(2.0 * best.cost)), fixed=fixed,
        converged=converged, n_residuals=n_residuals,
        observables=observables, weighted=weighted,
    )


def residual_report(result: FitResult, data: Sequence[MeasuredPoint]) -> ResidualReport:
    """Standardized residuals of a completed fit against its data."""
    rows = []
    for name in result.observables:
        pts = [pt for pt in data if getattr(pt, name) is not None]
        if not pts:
            continue
        p1_arr = np.array([pt.p1 for pt in pts])
        g12_m, qc_m = model_curves(p1_arr, result.kappa1, result.kappa2,
                                   result.alpha2, fixed=result.fixed)
        curve = g12_m if name == "g12" else qc_m
        for pt, model_value in zip(pts, curve):
            measured = getattr(pt, name)
            sigma = getattr(pt, f"{name}_err")
            rows.append(ResidualRow(
                p1=pt.p1, observable=name, measured=measured, sigma=sigma,
                model=float(model_value),
                standardized=(measured - float(model_value)) / sigma,
            ))
    rows.sort(key=lambda row: (row.p1, row.observable))
    chi2 = float(sum(row.standardized ** 2 for row in rows))
    return ResidualReport(rows=tuple(rows), chi2=chi2, dof=len(rows) - 3)


def tmss_background_ratio(kappa1: float, p) -> np.ndarray | float:
    """Ratio of the correlated-pair mean to the coherent background in field 1.

    The pair term p/(1-p) divided by kappa1*p, which simplifies to
    1/(kappa1*(1-p)): nearly constant across a sweep, growing slowly with p.
    """
    if kappa1 <= 0.0:
        raise ValueError("kappa1 must be positive")
    p = np.asarray(p, dtype=float)
    ratio = 1.0 / (kappa1 * (1.0 - p))
    return float(ratio) if ratio.ndim == 0 else ratio
