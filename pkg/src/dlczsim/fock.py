"""Truncated Fock-space photon statistics for a two-mode heralded source.

Everything in this module works on explicit probability tables over photon
number, so it can serve as a brute-force reference for the closed-form model
and the Monte Carlo sampler.  Distributions are truncated at a configurable
``n_max`` and carry the truncated probability in ``tail_mass`` so that
normalization is exact by construction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

DEFAULT_TAIL_TOL = 1e-10
# Hard cap on auto-grown truncation; tables stay small enough to enumerate.
MAX_AUTO_NMAX = 200

__all__ = [
    "MarginalDistribution",
    "JointPhotonDistribution",
    "TripleDistribution",
    "DetectorModel",
    "tmss_distribution",
    "poisson_marginal",
    "add_background",
    "factorial_moment",
    "split_mode2",
    "click_probabilities",
]


def _validate_table(prob: np.ndarray, tail_mass: float) -> np.ndarray:
    if np.any(prob < -1e-12):
        raise ValueError("probability table has negative entries")
    prob = np.clip(prob, 0.0, None)
    total = prob.sum() + tail_mass
    if abs(total - 1.0) > 1e-12:
        raise ValueError(f"probability table not normalized: sum+tail={total!r}")
    prob.setflags(write=False)
    return prob


@dataclass(frozen=True)
class MarginalDistribution:
    """Single-mode photon-number distribution on ``0..n_max``.

    Attributes:
        n_max: largest photon number kept in the table.
        prob: array of shape ``(n_max + 1,)`` with ``prob[n] = P(n)``.
        tail_mass: probability assigned to ``n > n_max``.
    """

    n_max: int
    prob: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        prob = np.asarray(self.prob, dtype=float)
        if prob.shape != (self.n_max + 1,):
            raise ValueError("prob must have shape (n_max + 1,)")
        object.__setattr__(self, "prob", _validate_table(prob, self.tail_mass))

    def mean(self) -> float:
        """First moment of the truncated table."""
        return float(self.prob @ np.arange(self.n_max + 1))


@dataclass(frozen=True)
class JointPhotonDistribution:
    """Joint photon-number distribution of the write and read modes.

    Attributes:
        n_max: largest photon number kept per mode.
        prob: array of shape ``(n_max + 1, n_max + 1)``; ``prob[n1, n2]``.
        tail_mass: probability lost to truncation (either mode above n_max).
    """

    n_max: int
    prob: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        prob = np.asarray(self.prob, dtype=float)
        if prob.shape != (self.n_max + 1, self.n_max + 1):
            raise ValueError("prob must be square with shape (n_max + 1, n_max + 1)")
        object.__setattr__(self, "prob", _validate_table(prob, self.tail_mass))

    def marginal(self, mode: int) -> MarginalDistribution:
        """Marginal of one mode (``mode`` is 1 or 2)."""
        if mode not in (1, 2):
            raise ValueError("mode must be 1 or 2")
        axis = 1 if mode == 1 else 0
        return MarginalDistribution(self.n_max, self.prob.sum(axis=axis), self.tail_mass)

    def mode_mean(self, mode: int) -> float:
        return self.marginal(mode).mean()


@dataclass(frozen=True)
class TripleDistribution:
    """Photon statistics after the read mode is split on a 50/50 coupler.

    ``prob[n1, n2a, n2b]`` is the joint distribution of the write mode and
    the two output arms; entries with ``n2a + n2b > n_max`` are zero.
    """

    n_max: int
    prob: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        prob = np.asarray(self.prob, dtype=float)
        n = self.n_max + 1
        if prob.shape != (n, n, n):
            raise ValueError("prob must have shape (n_max + 1,) * 3")
        object.__setattr__(self, "prob", _validate_table(prob, self.tail_mass))

    def axis_mean(self, axis: int) -> float:
        w = np.arange(self.n_max + 1, dtype=float)
        summed = self.prob.sum(axis=tuple(a for a in range(3) if a != axis))
        return float(summed @ w)


@dataclass(frozen=True)
class DetectorModel:
    """Threshold or linearized single-photon detector.

    Attributes:
        efficiency: probability that a single photon produces a click.
        dark_prob: per-window click probability with no photons present.
        kind: "threshold" maps n photons to a click with
            ``1 - (1 - efficiency)**n`` OR'd with the dark probability;
            "linearized" uses ``efficiency * n + dark_prob``, valid only for
            small ``efficiency * <n>``.
    """

    efficiency: float
    dark_prob: float = 0.0
    kind: str = "threshold"

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        if not 0.0 <= self.dark_prob <= 1.0:
            raise ValueError("dark_prob must lie in [0, 1]")
        if self.kind not in ("threshold", "linearized"):
            raise ValueError("kind must be 'threshold' or 'linearized'")

    def click_weights(self, n_max: int) -> np.ndarray:
        """Click probability (or linearized weight) for photon numbers 0..n_max."""
        n = np.arange(n_max + 1, dtype=float)
        if self.kind == "threshold":
            return 1.0 - (1.0 - self.efficiency) ** n * (1.0 - self.dark_prob)
        return self.efficiency * n + self.dark_prob


def _geometric_auto_nmax(p: float, tail_tol: float) -> int:
    if p <= 0.0:
        return 1
    # smallest n with p**(n+1) <= tail_tol
    n = int(math.ceil(math.log(tail_tol) / math.log(p))) - 1
    n = max(n, 1)
    if n > MAX_AUTO_NMAX:
        warnings.warn(
            f"n_max capped at {MAX_AUTO_NMAX}; tail mass {p ** (MAX_AUTO_NMAX + 1):.3e} "
            f"exceeds tolerance {tail_tol:.1e}",
            stacklevel=3,
        )
        n = MAX_AUTO_NMAX
    return n


def tmss_distribution(p: float, n_max: int | None = None,
                      tail_tol: float = DEFAULT_TAIL_TOL) -> JointPhotonDistribution:
    """Two-mode squeezed state photon statistics, P(n, n) = (1 - p) p**n.

    Args:
        p: pair-excitation probability, ``0 <= p < 1``.
        n_max: explicit truncation; when omitted the table grows until the
            geometric tail drops below ``tail_tol`` (capped at 200).
        tail_tol: tail tolerance used in auto mode.

    Returns:
        JointPhotonDistribution with perfectly correlated modes.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError("p must lie in [0, 1)")
    if n_max is None:
        n_max = _geometric_auto_nmax(p, tail_tol)
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    diag = (1.0 - p) * p ** np.arange(n_max + 1, dtype=float)
    tail = p ** (n_max + 1)
    return JointPhotonDistribution(n_max, np.diag(diag), tail)


def poisson_marginal(mean: float, n_max: int | None = None,
                     tail_tol: float = DEFAULT_TAIL_TOL) -> MarginalDistribution:
    """Poissonian single-mode distribution, e.g. a phase-averaged coherent field.

    Args:
        mean: mean photon number (>= 0).
        n_max: explicit truncation; auto-grown to ``tail_tol`` when omitted.
        tail_tol: tail tolerance used in auto mode.
    """
    if mean < 0.0:
        raise ValueError("mean must be non-negative")
    if n_max is None:
        if mean == 0.0:
            n_max = 1
        else:
            n_max = int(stats.poisson.ppf(1.0 - tail_tol, mean))
            while stats.poisson.sf(n_max, mean) > tail_tol and n_max < MAX_AUTO_NMAX:
                n_max += 1
            n_max = max(n_max, 1)
    pmf = stats.poisson.pmf(np.arange(n_max + 1), mean)
    tail = float(stats.poisson.sf(n_max, mean))
    return MarginalDistribution(n_max, pmf, tail)


def add_background(dist: JointPhotonDistribution, mode: int,
                   background: MarginalDistribution) -> JointPhotonDistribution:
    """Convolve an independent background field into one mode.

    The output table covers ``dist.n_max + background.n_max`` so the
    convolution itself is exact; only the input tails end up in
    ``tail_mass``.

    Args:
        dist: joint distribution of the two modes.
        mode: 1 or 2, the mode receiving the background photons.
        background: photon-number distribution of the background field.

    Returns:
        JointPhotonDistribution over the enlarged range.
    """
    if mode not in (1, 2):
        raise ValueError("mode must be 1 or 2")
    n_out = dist.n_max + background.n_max
    size = n_out + 1
    out = np.zeros((size, size))
    block = dist.n_max + 1
    # direct convolution: shift-and-add keeps entries exactly non-negative
    if mode == 1:
        for k, w in enumerate(background.prob):
            if w:
                out[k:k + block, :block] += w * dist.prob
    else:
        for k, w in enumerate(background.prob):
            if w:
                out[:block, k:k + block] += w * dist.prob
    tail = 1.0 - out.sum()
    # guard against rounding pushing the tail slightly negative
    tail = max(tail, 0.0)
    return JointPhotonDistribution(n_out, out, tail)


def _falling_factorial(n_max: int, order: int) -> np.ndarray:
    n = np.arange(n_max + 1, dtype=float)
    w = np.ones(n_max + 1)
    for k in range(order):
        w *= n - k
    return w


def factorial_moment(dist: JointPhotonDistribution, i: int, j: int) -> float:
    """Normally ordered joint moment <n1^(i) n2^(j)> with falling factorials.

    Args:
        dist: joint distribution.
        i: order on mode 1.
        j: order on mode 2.

    Returns:
        Sum over the table of ``P(n1, n2) * ff(n1, i) * ff(n2, j)``.
    """
    if i < 0 or j < 0:
        raise ValueError("moment orders must be non-negative")
    bound = dist.tail_mass * float(dist.n_max) ** (i + j)
    if bound > 1e-8:
        warnings.warn(
            f"truncation may bias this moment by up to ~{bound:.2e}", stacklevel=2
        )
    w1 = _falling_factorial(dist.n_max, i)
    w2 = _falling_factorial(dist.n_max, j)
    return float(np.einsum("ij,i,j->", dist.prob, w1, w2))


def split_mode2(dist: JointPhotonDistribution) -> TripleDistribution:
    """Send mode 2 through a balanced splitter (binomial 50/50 partition).

    Returns:
        TripleDistribution over (n1, n2a, n2b); total probability and the
        n2a + n2b marginal match the input exactly.
    """
    size = dist.n_max + 1
    out = np.zeros((size, size, size))
    for n2 in range(size):
        col = dist.prob[:, n2]
        if not col.any():
            continue
        a = np.arange(n2 + 1)
        weights = stats.binom.pmf(a, n2, 0.5)
        out[:, a, n2 - a] += col[:, None] * weights[None, :]
    return TripleDistribution(dist.n_max, out, dist.tail_mass)


def _atomic_probabilities(prob: np.ndarray, weights: list[np.ndarray]) -> dict[frozenset, float]:
    """Joint click probabilities for every subset of detectors.

    Clicks are conditionally independent given the photon numbers, so the
    probability that a subset S clicks (regardless of the others) is the
    expectation of the product of per-detector weights over S.
    """
    n_det = len(weights)
    atoms: dict[frozenset, float] = {frozenset(): 1.0}
    letters = "ijk"[:n_det]
    for mask in range(1, 2 ** n_det):
        subset = frozenset(b for b in range(n_det) if mask & (1 << b))
        operands = [prob] + [weights[b] for b in sorted(subset)]
        spec = letters + "," + ",".join(letters[b] for b in sorted(subset)) + "->"
        atoms[subset] = float(np.einsum(spec, *operands))
    return atoms


def click_probabilities(dist: JointPhotonDistribution | TripleDistribution,
                        detectors) -> dict[str, float]:
    """Click statistics of a detector layout applied to a photon-number table.

    Args:
        dist: a two-mode distribution with detectors ``(field1, field2)``, or
            a split-mode TripleDistribution with ``(field1, arm_a, arm_b)``.
        detectors: sequence of DetectorModel matching the layout.

    Returns:
        For the two-detector layout: ``{"p1", "p2", "p12"}``.
        For the split layout: additionally ``p2a``, ``p2b``, ``p1_2a``,
        ``p1_2b``, ``p2a_2b`` and ``p1_2a_2b``; ``p2`` and ``p12`` then refer
        to a click on either arm.

    Raises:
        ValueError: when a linearized probability leaves [0, 1].
    """
    detectors = list(detectors)
    if isinstance(dist, TripleDistribution):
        if len(detectors) != 3:
            raise ValueError("split layout needs exactly three detectors")
        means = [dist.axis_mean(a) for a in range(3)]
    else:
        if len(detectors) != 2:
            raise ValueError("two-mode layout needs exactly two detectors")
        means = [dist.mode_mean(1), dist.mode_mean(2)]

    for det, mean in zip(detectors, means):
        if det.kind == "linearized" and det.efficiency * mean > 0.1:
            warnings.warn(
                f"linearized detector outside its validity range: "
                f"efficiency*<n> = {det.efficiency * mean:.3f} > 0.1",
                stacklevel=2,
            )

    weights = [det.click_weights(dist.n_max) for det in detectors]
    atoms = _atomic_probabilities(dist.prob, weights)

    for subset, value in atoms.items():
        if subset and not -1e-9 <= value <= 1.0 + 1e-9:
            raise ValueError(
                f"click probability {value!r} for detectors {sorted(subset)} "
                "is outside [0, 1]; linearized model invalid here"
            )

    if isinstance(dist, TripleDistribution):
        p1 = atoms[frozenset({0})]
        p2a = atoms[frozenset({1})]
        p2b = atoms[frozenset({2})]
        p2a_2b = atoms[frozenset({1, 2})]
        p1_2a = atoms[frozenset({0, 1})]
        p1_2b = atoms[frozenset({0, 2})]
        p1_2a_2b = atoms[frozenset({0, 1, 2})]
        return {
            "p1": p1,
            "p2a": p2a,
            "p2b": p2b,
            "p2": p2a + p2b - p2a_2b,
            "p1_2a": p1_2a,
            "p1_2b": p1_2b,
            "p2a_2b": p2a_2b,
            "p1_2a_2b": p1_2a_2b,
            "p12": p1_2a + p1_2b - p1_2a_2b,
        }
    return {
        "p1": atoms[frozenset({0})],
        "p2": atoms[frozenset({1})],
        "p12": atoms[frozenset({0, 1})],
    }
