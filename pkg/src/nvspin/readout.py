"""Synthetic single-shot readout traces of a nuclear spin and a dwell-time estimator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import medfilt

__all__ = ["SsrModel", "SsrTrace", "ssr_trace", "estimate_dwell", "flip_prob_for_dwell"]


@dataclass(frozen=True)
class SsrModel:
    """Per-cycle readout model.

    ``bright`` is the mean photon count per cycle for the bright nuclear
    state; the dark state emits ``bright * (1 - contrast)``. With
    probability ``1 - fidelity`` a cycle reports the wrong state.
    """

    fidelity: float = 0.98
    bright: float = 300.0
    contrast: float = 0.3
    cycle_time: float = 0.05  # s

    def __post_init__(self):
        if not 0.5 <= self.fidelity <= 1.0:
            raise ValueError(f"fidelity must lie in [0.5, 1], got {self.fidelity}")
        if not 0.0 < self.contrast <= 1.0:
            raise ValueError(f"contrast must lie in (0, 1], got {self.contrast}")
        if not (self.bright > 0 and self.cycle_time > 0):
            raise ValueError("bright and cycle_time must be positive")

    @property
    def dark(self):
        return self.bright * (1.0 - self.contrast)

    @property
    def threshold(self):
        return 0.5 * (self.bright + self.dark)


@dataclass(frozen=True, eq=False)
class SsrTrace:
    time: np.ndarray  # s, start of each cycle
    state: np.ndarray  # true nuclear state, 1 = bright
    counts: np.ndarray
    readback: np.ndarray  # thresholded counts
    filtered: np.ndarray  # readback after the median filter
    transitions: int
    dwell: float  # s; inf if no transition was seen

    def rows(self):
        return zip(self.time, self.counts, self.state, self.filtered)


def flip_prob_for_dwell(dwell, cycle_time):
    """Per-cycle flip probability giving a geometric mean dwell of ``dwell`` seconds."""
    return cycle_time / dwell


def estimate_dwell(bits, cycle_time, window=5):
    """Mean dwell time from a binary trace: total time over number of switches.

    A median filter of odd ``window`` (1 disables it) removes isolated misreads first.
    """
    bits = np.asarray(bits, dtype=float)
    filt = medfilt(bits, window) if window > 1 else bits
    filt = filt.astype(np.int8)
    n = int(np.count_nonzero(np.diff(filt)))
    total = len(bits) * cycle_time
    return filt, n, (total / n if n else np.inf)


def ssr_trace(flip_prob, n_cycles, model=None, seed=0, initial=1, window=5):
    """Simulate ``n_cycles`` repeated nuclear readouts.

    The nucleus flips between cycles with probability ``flip_prob``.
    Counts are Poisson with the bright or dark mean of the reported state.
    ``seed`` is an int or a ``numpy.random.SeedSequence``.
    """
    model = SsrModel() if model is None else model
    if not 0.0 <= flip_prob <= 1.0:
        raise ValueError(f"flip_prob must lie in [0, 1], got {flip_prob}")
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rng = np.random.default_rng(ss)
    flips = rng.random(n_cycles) < flip_prob
    flips[0] = False
    state = (int(initial) + np.cumsum(flips)) % 2
    misread = rng.random(n_cycles) >= model.fidelity
    reported = np.where(misread, 1 - state, state)
    counts = rng.poisson(np.where(reported == 1, model.bright, model.dark))
    readback = (counts > model.threshold).astype(np.int8)
    filtered, n, dwell = estimate_dwell(readback, model.cycle_time, window)
    return SsrTrace(
        time=np.arange(n_cycles) * model.cycle_time,
        state=state.astype(np.int8),
        counts=counts,
        readback=readback,
        filtered=filtered,
        transitions=n,
        dwell=float(dwell),
    )
