"""Closed-form detection statistics of the heralded-excitation source.

The source emits a two-mode squeezed state with pair probability ``p``.
Each field additionally carries a coherent background proportional to ``p``
(leakage that scales with the excitation strength) and a constant incoherent
background (dark counts and stray light, expressed as an equivalent field).
Detection efficiencies ``alpha1``/``alpha2`` map photon numbers to click
probabilities in the linearized small-signal regime.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from . import fock

__all__ = [
    "ModelParams",
    "FigureOfMeritPoint",
    "singles",
    "joint",
    "cross_correlation",
    "retrieval",
    "figure_of_merit",
    "qc_plateau",
    "antibunching_ideal",
    "antibunching_model",
    "classicality",
    "sweep",
    "plateau_estimate",
]


@dataclass(frozen=True)
class ModelParams:
    """Source and detection parameters.

    Attributes:
        p: two-mode excitation probability per trial.
        kappa1: coherent background in field 1, mean photon number kappa1 * p.
        kappa2: coherent background in field 2, mean photon number kappa2 * p.
        alpha1: field-1 photodetection efficiency (includes path and detector).
        alpha2: field-2 excitation-to-click efficiency (retrieval included).
        eta2: field-2 path transmission and detector efficiency alone.
        b1: field-1 incoherent click probability per trial.
        b2: field-2 incoherent click probability per trial.
    """

    p: float
    kappa1: float = 0.0
    kappa2: float = 0.0
    alpha1: float = 1.0
    alpha2: float = 1.0
    eta2: float = 1.0
    b1: float = 0.0
    b2: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError("p must lie in [0, 1)")
        if self.kappa1 < 0.0 or self.kappa2 < 0.0:
            raise ValueError("kappa1 and kappa2 must be non-negative")
        for name in ("alpha1", "alpha2", "eta2"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.b1 < 0.0 or self.b2 < 0.0:
            raise ValueError("b1 and b2 must be non-negative")

    @classmethod
    def defaults(cls, p: float = 0.03) -> "ModelParams":
        """Calibrated values for the modeled nanofiber cesium-ensemble source."""
        return cls(p=p, kappa1=0.034, kappa2=1.91, alpha1=0.16, alpha2=0.035,
                   eta2=0.14, b1=5.1e-5, b2=1.6e-4)

    def at(self, p: float) -> "ModelParams":
        """Same parameter set at a different excitation probability."""
        return replace(self, p=p)

    # mean photon numbers per mode, with backgrounds folded in as
    # equivalent fields |nu|^2 = kappa*p and |nu_b|^2 = b/alpha
    @property
    def background1(self) -> float:
        return self.kappa1 * self.p + self.b1 / self.alpha1

    @property
    def background2(self) -> float:
        return self.kappa2 * self.p + self.b2 / self.alpha2

    @property
    def mean_n1(self) -> float:
        return self.p / (1.0 - self.p) + self.background1

    @property
    def mean_n2(self) -> float:
        return self.p / (1.0 - self.p) + self.background2


@dataclass(frozen=True)
class FigureOfMeritPoint:
    """Detection probabilities and figures of merit at one excitation setting."""

    p: float
    p1: float
    p2: float
    p12: float
    g12: float
    pc: float
    qc: float


def singles(params: ModelParams) -> tuple[float, float]:
    """Per-trial singles click probabilities (p1, p2)."""
    p1 = params.alpha1 * params.mean_n1
    p2 = params.alpha2 * params.mean_n2
    return p1, p2


def joint(params: ModelParams) -> float:
    """Per-trial coincidence probability p12.

    Three contributions: correlated pairs, pair-background cross terms and
    the background-background accidental floor.
    """
    p = params.p
    mu = p / (1.0 - p)
    b1, b2 = params.background1, params.background2
    pairs = (p + p * p) / (1.0 - p) ** 2
    cross = mu * (b1 + b2)
    accidental = b1 * b2
    return params.alpha1 * params.alpha2 * (pairs + cross + accidental)


def cross_correlation(params: ModelParams) -> float:
    """Normalized field-1/field-2 correlation g12 = p12 / (p1 p2)."""
    p1, p2 = singles(params)
    return joint(params) / (p1 * p2)


def retrieval(params: ModelParams) -> tuple[float, float]:
    """Conditional retrieval probabilities.

    Returns:
        ``(pc, qc)``: probability of a field-2 click given a herald, raw and
        corrected for the field-2 path efficiency ``eta2``.
    """
    p1, _ = singles(params)
    pc = joint(params) / p1
    return pc, pc / params.eta2


def qc_plateau(params: ModelParams) -> float:
    """Background-free single-excitation limit of qc, ``alpha2 / eta2``."""
    return params.alpha2 / params.eta2


def antibunching_ideal(g12: float) -> float:
    """Ideal heralded autocorrelation for a two-mode squeezed source, 4/g12."""
    if g12 <= 0.0:
        raise ValueError("g12 must be positive")
    return 4.0 / g12


def antibunching_model(params: ModelParams, n_max: int = 60,
                       kind: str = "linearized") -> float:
    """Heralded autocorrelation w from the full photon-number enumeration.

    Splits field 2 on a balanced coupler and evaluates
    ``w = p1 * p(1,2a,2b) / (p(1,2a) * p(1,2b))`` with the same detector
    model used for the closed forms (coherent backgrounds convolved into the
    state, incoherent backgrounds as detector dark counts).

    Args:
        params: model parameters.
        n_max: Fock truncation of the enumeration.
        kind: "linearized" (matches the closed-form regime) or "threshold".
    """
    dist = fock.tmss_distribution(params.p, n_max)
    if params.kappa1 > 0.0:
        dist = fock.add_background(
            dist, 1, fock.poisson_marginal(params.kappa1 * params.p))
    if params.kappa2 > 0.0:
        dist = fock.add_background(
            dist, 2, fock.poisson_marginal(params.kappa2 * params.p))
    triple = fock.split_mode2(dist)
    detectors = (
        fock.DetectorModel(params.alpha1, params.b1, kind),
        fock.DetectorModel(params.alpha2, params.b2, kind),
        fock.DetectorModel(params.alpha2, params.b2, kind),
    )
    probs = fock.click_probabilities(triple, detectors)
    return probs["p1"] * probs["p1_2a_2b"] / (probs["p1_2a"] * probs["p1_2b"])


def classicality(g12: float) -> str:
    """Classify a cross-correlation value; boundaries go to the lower class.

    Returns one of "classical" (g12 <= 2), "nonclassical" (<= 7),
    "bell_capable" (<= 25) or "repeater_capable".
    """
    if g12 < 0.0:
        raise ValueError("g12 must be non-negative")
    if g12 <= 2.0:
        return "classical"
    if g12 <= 7.0:
        return "nonclassical"
    if g12 <= 25.0:
        return "bell_capable"
    return "repeater_capable"


def figure_of_merit(params: ModelParams) -> FigureOfMeritPoint:
    """All closed-form observables at one excitation setting."""
    p1, p2 = singles(params)
    p12 = joint(params)
    pc = p12 / p1
    return FigureOfMeritPoint(
        p=params.p, p1=p1, p2=p2, p12=p12,
        g12=p12 / (p1 * p2), pc=pc, qc=pc / params.eta2,
    )


def sweep(params: ModelParams, p_values: Iterable[float]) -> list[FigureOfMeritPoint]:
    """Evaluate the model over a grid of excitation probabilities.

    Args:
        params: template parameter set; its ``p`` is replaced per point.
        p_values: excitation probabilities, each in [0, 1).

    Returns:
        One FigureOfMeritPoint per grid value, in input order (p1 is
        monotone in p, so the curve is ordered in p1 as well).
    """
    points = []
    for p in p_values:
        points.append(figure_of_merit(params.at(float(p))))
    return points


def plateau_estimate(p1: np.ndarray, qc: np.ndarray) -> float:
    """qc at the flattest interior point of the qc(log p1) curve.

    The retrieval curve falls at low p1 (incoherent background dilution) and
    rises at high p1 (multiple excitations); the plateau is read off where
    the logarithmic slope is smallest in magnitude.
    """
    p1 = np.asarray(p1, dtype=float)
    qc = np.asarray(qc, dtype=float)
    if p1.size < 3:
        raise ValueError("need at least three points to locate a plateau")
    order = np.argsort(p1)
    x = np.log(p1[order])
    y = qc[order]
    slope = np.gradient(y, x)
    interior = slice(1, -1)
    idx = 1 + int(np.argmin(np.abs(slope[interior])))
    return float(y[idx])
