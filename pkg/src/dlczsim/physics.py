"""Auxiliary physics calculators around the memory protocol.

Stateless closed forms: memory decay and its broadening origin, resonant
absorption profiles, trap lifetime, atom-number/optical-depth calibration,
filter-chain budgets, timing/rate bookkeeping and the photon wavepacket
envelope.  Everything takes and returns SI units.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT, h as PLANCK

__all__ = [
    "DecayModel",
    "SpectroscopyParams",
    "FilterStage",
    "FilterChain",
    "ChainBudget",
    "SequenceConfig",
    "RateSummary",
    "CouplingParams",
    "retrieval_vs_time",
    "tau_from_broadening",
    "transmission_profile",
    "trap_population",
    "od_from_atoms",
    "photon_energy",
    "chain_budget",
    "rates",
    "wavepacket",
]

# cesium D2 natural linewidth, as a frequency (Hz)
NATURAL_LINEWIDTH_HZ = 5.8e6

# optical depth contributed by one trapped atom, per probed transition
DEFAULT_OD_PER_ATOM = {"F4->F'4": 0.010, "F4->F'5": 0.020}

# the linear atom-number calibration saturates above this optical depth
OD_CALIBRATION_LIMIT = 40.0


@dataclass(frozen=True)
class DecayModel:
    """Gaussian memory decay q(t) = q0 * exp(-(t/tau)^2).

    Attributes:
        q0: zero-delay retrieval efficiency.
        tau: 1/e storage time in seconds.
    """

    q0: float
    tau: float

    def __post_init__(self):
        if not 0.0 <= self.q0 <= 1.0:
            raise ValueError("q0 must lie in [0, 1]")
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")

    @classmethod
    def measured(cls) -> "DecayModel":
        return cls(q0=0.25, tau=3e-6)


@dataclass(frozen=True)
class SpectroscopyParams:
    """Resonant optical depth and linewidth of the probed transition.

    Attributes:
        od: resonant optical depth.
        gamma: natural linewidth as a frequency in Hz.
    """

    od: float
    gamma: float = NATURAL_LINEWIDTH_HZ

    def __post_init__(self):
        if self.od < 0.0:
            raise ValueError("od must be non-negative")
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class FilterStage:
    name: str
    isolation_db: float
    transmission: float

    def __post_init__(self):
        if self.isolation_db < 0.0:
            raise ValueError("isolation_db must be non-negative")
        if not 0.0 < self.transmission <= 1.0:
            raise ValueError("transmission must lie in (0, 1]")


@dataclass(frozen=True)
class FilterChain:
    """Cascade of spectral filters; totals are order-independent."""

    stages: tuple[FilterStage, ...]

    def __init__(self, stages: Sequence[FilterStage]):
        object.__setattr__(self, "stages", tuple(stages))

    @property
    def total_isolation_db(self) -> float:
        return sum(stage.isolation_db for stage in self.stages)

    @property
    def total_transmission(self) -> float:
        return math.prod(stage.transmission for stage in self.stages)

    @classmethod
    def default(cls) -> "FilterChain":
        # reconstruction of the deployed cascade: the grating pair carries
        # the bulk isolation, polarizer plus cavity supply the rest; stage
        # transmissions multiply to the measured 0.40 overall
        return cls((
            FilterStage("volume-bragg-pair", 120.0, 0.8),
            FilterStage("polarizer-and-cavity", 40.0, 0.5),
        ))


@dataclass(frozen=True)
class ChainBudget:
    total_isolation_db: float
    total_transmission: float
    leakage_photon_rate_hz: float


@dataclass(frozen=True)
class SequenceConfig:
    """Timing of one experimental cycle.

    Attributes:
        phases: ordered (name, duration-in-seconds) pairs.
        trial_period: duration of one write attempt in seconds.
        trials_per_cycle: write attempts per cycle.
        cycle_rate: cycles per second.
        protocol_phase: name of the phase hosting the write attempts.
        metadata: descriptive settings, not computed upon.
    """

    phases: tuple[tuple[str, float], ...]
    trial_period: float = 1e-6
    trials_per_cycle: int = 1000
    cycle_rate: float = 10.0
    protocol_phase: str = "protocol"
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "phases",
                           tuple((str(n), float(d)) for n, d in self.phases))
        if not self.phases:
            raise ValueError("need at least one phase")
        if any(duration <= 0.0 for _, duration in self.phases):
            raise ValueError("phase durations must be positive")
        if self.trial_period <= 0.0 or self.cycle_rate <= 0.0:
            raise ValueError("trial_period and cycle_rate must be positive")
        if self.trials_per_cycle < 1:
            raise ValueError("trials_per_cycle must be at least 1")
        names = [name for name, _ in self.phases]
        if self.protocol_phase not in names:
            raise ValueError(f"no phase named {self.protocol_phase!r}")
        if sum(d for _, d in self.phases) > (1.0 / self.cycle_rate) * (1 + 1e-12):
            raise ValueError("phase durations exceed the cycle period")
        budget = self.protocol_duration
        if self.trials_per_cycle * self.trial_period > budget * (1 + 1e-12):
            raise ValueError("write attempts do not fit in the protocol phase")

    @property
    def protocol_duration(self) -> float:
        return dict(self.phases)[self.protocol_phase]

    @property
    def duty_fraction(self) -> float:
        """Fraction of wall-clock time spent in the protocol phase."""
        return self.protocol_duration * self.cycle_rate

    @classmethod
    def default(cls) -> "SequenceConfig":
        return cls(
            phases=(("trap-loading", 60e-3), ("molasses", 4.5e-3),
                    ("protocol", 1e-3)),
            trial_period=1e-6, trials_per_cycle=1000, cycle_rate=10.0,
            metadata={
                "write_detuning_hz": -10e6,
                "write_beam_angle_deg": 5.0,
                "write_waist_m": 1e-3,
                "dipole_powers_w": (0.5e-3, 0.5e-3, 4.5e-3, 4.5e-3),
                "temperature_k": 20e-6,
            },
        )


@dataclass(frozen=True)
class RateSummary:
    in_protocol_hz: float
    averaged_hz: float
    pairs_hz: float | None = None


@dataclass(frozen=True)
class CouplingParams:
    """Atom-number calibration of the probed transitions.

    Attributes:
        od_per_atom: optical depth per trapped atom, keyed by transition.
        coupling_ratio: emission rate into the guided mode over free space.
    """

    od_per_atom: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_OD_PER_ATOM))
    coupling_ratio: float = 1e-2

    def __post_init__(self):
        if any(v <= 0.0 for v in self.od_per_atom.values()):
            raise ValueError("od_per_atom entries must be positive")
        if not 0.0 < self.coupling_ratio < 1.0:
            raise ValueError("coupling_ratio must lie in (0, 1)")


def retrieval_vs_time(model: DecayModel, t) -> np.ndarray | float:
    """Retrieval efficiency after a storage time, q0 * exp(-(t/tau)^2)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("storage time must be non-negative")
    out = model.q0 * np.exp(-((t / model.tau) ** 2))
    return float(out) if out.ndim == 0 else out


def tau_from_broadening(fwhm: float) -> float:
    """Storage time implied by a Gaussian spread of transition frequencies.

    Averaging exp(i*2*pi*delta*t) over a Gaussian detuning distribution and
    squaring the magnitude gives exp(-(t/tau)^2) with tau the inverse
    angular-frequency spread:

        tau = 1 / sigma_omega,  sigma_omega = 2*pi*fwhm / (2*sqrt(2*ln 2))

    Args:
        fwhm: full width at half maximum of the detuning distribution, Hz.
    """
    if fwhm <= 0.0:
        raise ValueError("fwhm must be positive")
    sigma_omega = 2.0 * math.pi * fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    return 1.0 / sigma_omega


def transmission_profile(params: SpectroscopyParams, delta) -> np.ndarray | float:
    """Probe transmission versus detuning, exp(-od / (1 + (2*delta/gamma)^2)).

    Args:
        params: optical depth and linewidth.
        delta: detuning from resonance in Hz; scalar or array.
    """
    delta = np.asarray(delta, dtype=float)
    out = np.exp(-params.od / (1.0 + (2.0 * delta / params.gamma) ** 2))
    return float(out) if out.ndim == 0 else out


def trap_population(t, lifetime: float) -> np.ndarray | float:
    """Fraction of atoms remaining after a hold time, exp(-t/lifetime)."""
    if lifetime <= 0.0:
        raise ValueError("lifetime must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("hold time must be non-negative")
    out = np.exp(-t / lifetime)
    return float(out) if out.ndim == 0 else out


def od_from_atoms(n_atoms: float, coupling: CouplingParams | None = None,
                  transition: str = "F4->F'4") -> float:
    """Optical depth of the ensemble from the trapped atom number.

    The map is linear in the calibrated regime; values beyond the
    saturation limit are returned but flagged with a warning.

    Raises:
        ValueError: negative atom number or unknown transition tag.
    """
    coupling = coupling if coupling is not None else CouplingParams()
    if n_atoms < 0:
        raise ValueError("n_atoms must be non-negative")
    if transition not in coupling.od_per_atom:
        known = sorted(coupling.od_per_atom)
        raise ValueError(f"unknown transition {transition!r}; known: {known}")
    od = n_atoms * coupling.od_per_atom[transition]
    if od > OD_CALIBRATION_LIMIT:
        warnings.warn(f"optical depth {od:.3g} beyond the calibrated "
                      f"saturation limit {OD_CALIBRATION_LIMIT:g}")
    return od


def photon_energy(wavelength: float) -> float:
    """Energy of one photon at the given vacuum wavelength, h*c/lambda."""
    if wavelength <= 0.0:
        raise ValueError("wavelength must be positive")
    return PLANCK * SPEED_OF_LIGHT / wavelength


def chain_budget(chain: FilterChain, input_power: float,
                 wavelength: float) -> ChainBudget:
    """Isolation, transmission and leakage photon rate of a filter cascade.

    Args:
        chain: the filter stages.
        input_power: optical power entering the cascade, W.
        wavelength: wavelength of the rejected light, m.

    Returns:
        Totals and the photon rate surviving the isolation,
        input_power * 10^(-dB/10) / (h*c/wavelength) in photons per second.
    """
    if input_power < 0.0:
        raise ValueError("input_power must be non-negative")
    isolation = chain.total_isolation_db
    leaked_power = input_power * 10.0 ** (-isolation / 10.0)
    return ChainBudget(
        total_isolation_db=isolation,
        total_transmission=chain.total_transmission,
        leakage_photon_rate_hz=leaked_power / photon_energy(wavelength),
    )


def rates(seq: SequenceConfig, p1: float, pc: float | None = None) -> RateSummary:
    """Heralding rates implied by a per-trial click probability.

    Args:
        seq: cycle timing.
        p1: heralding probability per write attempt.
        pc: optional conditional field-2 click probability; when given the
            duty-cycle-averaged heralded-pair rate is reported too.

    Returns:
        In-protocol rate p1/trial_period and duty-cycle-averaged rate
        p1 * trials_per_cycle * cycle_rate, both in Hz.
    """
    if not 0.0 <= p1 <= 1.0:
        raise ValueError("p1 must lie in [0, 1]")
    if pc is not None and not 0.0 <= pc <= 1.0:
        raise ValueError("pc must lie in [0, 1]")
    averaged = p1 * seq.trials_per_cycle * seq.cycle_rate
    return RateSummary(
        in_protocol_hz=p1 / seq.trial_period,
        averaged_hz=averaged,
        pairs_hz=None if pc is None else averaged * pc,
    )


def wavepacket(t, width: float) -> np.ndarray | float:
    """Amplitude envelope of the retrieved photon, exp(-(t/width)^2).

    Centered at zero with unit peak; ``width`` is the 1/e half-width in
    seconds.
    """
    if width <= 0.0:
        raise ValueError("width must be positive")
    t = np.asarray(t, dtype=float)
    out = np.exp(-((t / width) ** 2))
    return float(out) if out.ndim == 0 else out
