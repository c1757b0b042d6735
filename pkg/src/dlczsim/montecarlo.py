"""Trial-by-trial simulation of the heralded source and click counting.

Per trial the sampler draws the correlated pair number from the geometric
law, adds independent Poisson backgrounds per field, splits field 2 on a
balanced coupler and converts photon numbers to detector clicks.  Trials are
processed in fixed-size blocks, each with its own random stream derived from
``(seed, block_index)``, so the counts depend only on the parameters, the
seed and the trial count - not on batching or scheduling.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .model import ModelParams

# trials per random-stream block; fixed so results are batching-independent
BLOCK = 1 << 16

__all__ = [
    "TrialBatchConfig",
    "ClickCounts",
    "EstimateWithError",
    "Estimates",
    "sample_trials",
    "estimate",
    "convergence_sweep",
]


@dataclass(frozen=True)
class TrialBatchConfig:
    """How many trials to run and how to run them.

    Attributes:
        n_trials: total number of trials (>= 1).
        seed: base seed for the per-block random streams.
        detector_kind: "threshold" or "linearized-rejection"; the latter
            draws clicks with probability efficiency*n + dark and refuses
            to run when that leaves [0, 1].
        batch_size: trials per work item when sampling in parallel; has no
            effect on the counts.
    """

    n_trials: int
    seed: int
    detector_kind: str = "threshold"
    batch_size: int = 1 << 20

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.detector_kind not in ("threshold", "linearized-rejection"):
            raise ValueError("detector_kind must be 'threshold' or 'linearized-rejection'")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass(frozen=True)
class ClickCounts:
    """Raw click tallies from a batch of trials.

    ``k2`` and ``k12`` treat field 2 as "either arm clicked"; the remaining
    coincidence fields name the detectors involved.
    """

    n_trials: int
    k1: int = 0
    k2a: int = 0
    k2b: int = 0
    k2: int = 0
    k12: int = 0
    k1_2a: int = 0
    k1_2b: int = 0
    k_triple: int = 0

    def __add__(self, other: "ClickCounts") -> "ClickCounts":
        return ClickCounts(*(getattr(self, f.name) + getattr(other, f.name)
                             for f in fields(ClickCounts)))


@dataclass(frozen=True)
class EstimateWithError:
    """Point estimate with a propagated one-sigma error.

    ``sigma`` is NaN when the error (or the estimate itself) is undefined
    because a required count is zero.
    """

    value: float
    sigma: float

    @property
    def defined(self) -> bool:
        return not math.isnan(self.value) and not math.isnan(self.sigma)


@dataclass(frozen=True)
class Estimates:
    g12: EstimateWithError
    pc: EstimateWithError
    qc: EstimateWithError
    w: EstimateWithError


def _block_rng(seed: int, block_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(seed, spawn_key=(block_index,))))


def _threshold_clicks(rng, n_photons, efficiency, dark):
    # click = (any thinned photon survives) OR dark; one uniform per trial
    lut = (1.0 - efficiency) ** np.arange(int(n_photons.max()) + 1)
    p_click = 1.0 - lut[n_photons] * (1.0 - dark)
    return rng.random(n_photons.size) < p_click


def _linearized_clicks(rng, n_photons, efficiency, dark):
    p_click = efficiency * n_photons + dark
    if p_click.max() > 1.0:
        raise ValueError(
            "linearized click probability exceeded 1; the linearized sampler "
            "is invalid for these parameters")
    return rng.random(n_photons.size) < p_click


def _sample_block(params: ModelParams, seed: int, block_index: int, size: int,
                  detector_kind: str, tap_file=None) -> ClickCounts:
    """Simulate one block of trials on its own random stream.

    Draw schedule per block (fixed for reproducibility): pair uniforms,
    field-1 Poisson, field-2 Poisson, splitter binomials, then one uniform
    per detector.
    """
    rng = _block_rng(seed, block_index)
    p = params.p

    u = rng.random(size)
    if p > 0.0:
        pairs = np.floor(np.log1p(-u) / math.log(p)).astype(np.int64)
    else:
        pairs = np.zeros(size, dtype=np.int64)

    mean1 = params.kappa1 * p
    mean2 = params.kappa2 * p
    n1 = pairs + (rng.poisson(mean1, size) if mean1 > 0.0 else 0)
    n2 = pairs + (rng.poisson(mean2, size) if mean2 > 0.0 else 0)

    n2a = np.zeros(size, dtype=np.int64)
    occupied = np.nonzero(n2)[0]
    if occupied.size:
        n2a[occupied] = rng.binomial(n2[occupied], 0.5)
    n2b = n2 - n2a

    if detector_kind == "threshold":
        click = _threshold_clicks
    else:
        click = _linearized_clicks
    c1 = click(rng, n1, params.alpha1, params.b1)
    c2a = click(rng, n2a, params.alpha2, params.b2)
    c2b = click(rng, n2b, params.alpha2, params.b2)

    if tap_file is not None:
        np.savetxt(tap_file, np.column_stack([n1, n2]), fmt="%d", delimiter=",")

    either = c2a | c2b
    c1_2a = c1 & c2a
    c1_2b = c1 & c2b
    return ClickCounts(
        n_trials=size,
        k1=int(c1.sum()),
        k2a=int(c2a.sum()),
        k2b=int(c2b.sum()),
        k2=int(either.sum()),
        k12=int((c1 & either).sum()),
        k1_2a=int(c1_2a.sum()),
        k1_2b=int(c1_2b.sum()),
        k_triple=int((c1_2a & c2b).sum()),
    )


def _block_sizes(n_trials: int):
    n_blocks = (n_trials + BLOCK - 1) // BLOCK
    for i in range(n_blocks):
        yield i, min(BLOCK, n_trials - i * BLOCK)


def _run_block_range(args) -> ClickCounts:
    params, seed, kind, blocks = args
    total = ClickCounts(0)
    for index, size in blocks:
        total = total + _sample_block(params, seed, index, size, kind)
    return total


def sample_trials(params: ModelParams, config: TrialBatchConfig,
                  n_workers: int = 1, tap_path: str | None = None) -> ClickCounts:
    """Run the trial simulation and return accumulated click counts.

    Args:
        params: source and detector parameters.
        config: trial count, seed, detector kind and parallel batch size.
        n_workers: processes to spread blocks over; the counts are
            identical for any worker count or batch size.
        tap_path: when given, write the pre-detection photon numbers
            ``n1,n2`` (one trial per line) to this file for cross-checks;
            forces single-process operation.

    Returns:
        ClickCounts summed over all trials.
    """
    kind = config.detector_kind
    blocks = list(_block_sizes(config.n_trials))

    if tap_path is not None:
        total = ClickCounts(0)
        with open(tap_path, "w") as tap_file:
            tap_file.write("n1,n2\n")
            for index, size in blocks:
                total = total + _sample_block(params, config.seed, index, size,
                                              kind, tap_file)
        return total

    if n_workers <= 1:
        return _run_block_range((params, config.seed, kind, blocks))

    blocks_per_item = max(1, config.batch_size // BLOCK)
    work = [(params, config.seed, kind, blocks[i:i + blocks_per_item])
            for i in range(0, len(blocks), blocks_per_item)]
    total = ClickCounts(0)
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        for part in pool.map(_run_block_range, work):
            total = total + part
    return total


def _undefined() -> EstimateWithError:
    return EstimateWithError(math.nan, math.nan)


def estimate(counts: ClickCounts, eta2: float) -> Estimates:
    """Figures of merit with Poissonian error propagation.

    Each count carries variance equal to itself; ratios combine relative
    variances. Conditional estimates built on a zero count are flagged with
    NaN rather than silently reported as zero: a zero numerator keeps its
    zero value but gets a NaN sigma.

    Args:
        counts: accumulated clicks.
        eta2: field-2 path efficiency used to correct qc = pc / eta2.
    """
    if eta2 <= 0.0:
        raise ValueError("eta2 must be positive")
    n = counts.n_trials
    if n < 1:
        raise ValueError("counts cover no trials")

    if counts.k1 == 0 or counts.k2 == 0:
        g12 = _undefined()
    elif counts.k12 == 0:
        g12 = EstimateWithError(0.0, math.nan)
    else:
        value = counts.k12 * n / (counts.k1 * counts.k2)
        rel = math.sqrt(1 / counts.k12 + 1 / counts.k1 + 1 / counts.k2)
        g12 = EstimateWithError(value, value * rel)

    if counts.k1 == 0:
        pc = _undefined()
        qc = _undefined()
    elif counts.k12 == 0:
        pc = EstimateWithError(0.0, math.nan)
        qc = EstimateWithError(0.0, math.nan)
    else:
        value = counts.k12 / counts.k1
        rel = math.sqrt(1 / counts.k12 + 1 / counts.k1)
        pc = EstimateWithError(value, value * rel)
        qc = EstimateWithError(pc.value / eta2, pc.sigma / eta2)

    if counts.k1 == 0 or counts.k1_2a == 0 or counts.k1_2b == 0:
        w = _undefined()
    elif counts.k_triple == 0:
        w = EstimateWithError(0.0, math.nan)
    else:
        value = counts.k1 * counts.k_triple / (counts.k1_2a * counts.k1_2b)
        rel = math.sqrt(1 / counts.k1 + 1 / counts.k_triple
                        + 1 / counts.k1_2a + 1 / counts.k1_2b)
        w = EstimateWithError(value, value * rel)

    return Estimates(g12=g12, pc=pc, qc=qc, w=w)


@dataclass(frozen=True)
class ConvergenceRow:
    seed: int
    n_trials: int
    counts: ClickCounts
    estimates: Estimates


def convergence_sweep(params: ModelParams, seeds, n_trials_list,
                      detector_kind: str = "threshold") -> list[ConvergenceRow]:
    """Estimates across seeds and trial counts, for convergence studies.

    Args:
        params: model parameters (eta2 is taken from here).
        seeds: non-empty iterable of seeds.
        n_trials_list: non-empty iterable of trial counts.

    Returns:
        One row per (seed, n_trials) combination, in grid order.
    """
    seeds = list(seeds)
    n_trials_list = list(n_trials_list)
    if not seeds or not n_trials_list:
        raise ValueError("seeds and n_trials_list must be non-empty")
    rows = []
    for seed in seeds:
        for n_trials in n_trials_list:
            config = TrialBatchConfig(n_trials=int(n_trials), seed=int(seed),
                                      detector_kind=detector_kind)
            counts = sample_trials(params, config)
            rows.append(ConvergenceRow(seed=int(seed), n_trials=int(n_trials),
                                       counts=counts,
                                       estimates=estimate(counts, params.eta2)))
    return rows
