"""Closed-form hfi observables of an NV-13C pair in an axial field.

Conventions: the ``plus`` branch belongs to m_S = +1 and uses
(A_ZZ - gamma_n B); the ``minus`` branch belongs to m_S = -1 and uses
(A_ZZ + gamma_n B). Splittings are in kHz, fields in Gauss, and the Gamma
values are dimensionless maximum flip probabilities.
"""

from __future__ import annotations

import csv
import io
import math
import os
import warnings
from dataclasses import asdict, dataclass
from decimal import Decimal, InvalidOperation
from typing import NamedTuple

import numpy as np

from .errors import AmbiguousSign, DegenerateSite, InvalidRange, NearAvoidedCrossing

__all__ = [
    "GAMMA_N_C13",
    "TAU_SENTINEL",
    "AVOIDED_CROSSING_GAUSS",
    "FieldPoint",
    "ZeroField",
    "ObservableSet",
    "default_gamma_n",
    "zero_field",
    "serialize_tau",
    "at_field",
    "infer_a_zz",
    "field_sweep",
    "sweep_csv",
    "printed_interval",
    "delta0_interval",
    "tau0_interval",
]

GAMMA_N_C13 = 1.071  # kHz/G
TAU_SENTINEL = 1e10
AVOIDED_CROSSING_GAUSS = 1027.0
CROSSING_WINDOW_GAUSS = 50.0

SWEEP_COLUMNS = (
    "B_gauss",
    "delta0_khz",
    "delta_plus_khz",
    "delta_minus_khz",
    "delta_n_khz",
    "gamma0",
    "gamma_plus",
    "gamma_minus",
)


def default_gamma_n():
    """1.071 kHz/G unless overridden by the NVSPIN_GAMMA_N environment variable."""
    env = os.environ.get("NVSPIN_GAMMA_N")
    if env:
        return float(env)
    return GAMMA_N_C13


@dataclass(frozen=True)
class FieldPoint:
    b: float
    gamma_n_c: float = GAMMA_N_C13

    def __post_init__(self):
        if not self.gamma_n_c > 0:
            raise ValueError(f"gamma_n_c must be positive, got {self.gamma_n_c}")

    @property
    def larmor(self):
        """Nuclear Zeeman splitting gamma_n * B in kHz."""
        return self.gamma_n_c * self.b


class ZeroField(NamedTuple):
    delta0: float
    gamma0: float
    tau0: float


@dataclass(frozen=True)
class ObservableSet:
    b: float
    delta0: float
    delta_plus: float
    delta_minus: float
    delta_n: float
    gamma0: float
    gamma_plus: float
    gamma_minus: float
    tau0: float
    near_crossing: bool = False

    def as_dict(self):
        return asdict(self)


def _flip(t_nd, delta):
    # t_nd == 0 means no flip term at all, even when delta also vanishes
    if t_nd == 0:
        return 0.0
    r = t_nd / delta  # t_nd**2 can underflow; the ratio cannot exceed 1
    return r * r


def _tau(gamma):
    return math.inf if gamma == 0 else 1.0 / gamma


def zero_field(sp):
    """(Delta_0, Gamma_0, tau_0) at B = 0.

    tau_0 is ``math.inf`` for a non-flipping site (T_nd = 0); use
    :func:`serialize_tau` when writing it out.
    """
    if sp.a_zz == 0 and sp.t_nd == 0:
        raise DegenerateSite("A_ZZ = T_nd = 0: Delta_0 vanishes and Gamma_0 is undefined")
    delta0 = math.hypot(sp.t_nd, sp.a_zz)
    gamma0 = _flip(sp.t_nd, delta0)
    return ZeroField(delta0, gamma0, _tau(gamma0))


def serialize_tau(tau):
    return TAU_SENTINEL if math.isinf(tau) else tau


def _near_crossing(b):
    return abs(abs(b) - AVOIDED_CROSSING_GAUSS) <= CROSSING_WINDOW_GAUSS


def at_field(sp, f):
    """All splittings and flip probabilities at the axial field ``f``."""
    gb = f.larmor
    d0 = math.hypot(sp.t_nd, sp.a_zz)
    dp = math.hypot(sp.t_nd, sp.a_zz - gb)
    dm = math.hypot(sp.t_nd, sp.a_zz + gb)
    g0 = _flip(sp.t_nd, d0)
    return ObservableSet(
        b=float(f.b),
        delta0=d0,
        delta_plus=dp,
        delta_minus=dm,
        delta_n=gb,
        gamma0=g0,
        gamma_plus=_flip(sp.t_nd, dp),
        gamma_minus=_flip(sp.t_nd, dm),
        tau0=_tau(g0),
        near_crossing=_near_crossing(f.b),
    )


def infer_a_zz(delta_branch, f, branch):
    """Recover A_ZZ from a measured nuclear transition in an m_S = +-1 manifold.

    Assumes T_nd**2 << (A_ZZ -+ gamma_n B)**2 and that the measured line lies
    on the side of the Larmor frequency implied by the branch:
    minus: A_ZZ = Delta^- - gamma_n B; plus: A_ZZ = gamma_n B - Delta^+.
    The neglected T_nd term biases the result by at most T_nd**2/(2 Delta).
    At zero field the sign of A_ZZ is undetermined and an
    :class:`AmbiguousSign` warning is issued.
    """
    gb = f.larmor
    if gb == 0:
        warnings.warn(
            f"zero field: |A_ZZ| ~ {delta_branch} kHz but its sign is not determined",
            AmbiguousSign,
            stacklevel=2,
        )
    if branch in ("minus", -1):
        return delta_branch - gb
    if branch in ("plus", +1):
        return gb - delta_branch
    raise ValueError(f"branch must be 'plus' or 'minus', got {branch!r}")


def field_sweep(sp, b_range, steps, gamma_n_c=GAMMA_N_C13):
    """Observables on an evenly spaced, endpoint-inclusive field grid.

    Rows within 50 G of the 1027 G avoided crossing carry
    ``near_crossing=True``; the secular formulas are still evaluated there.
    """
    lo, hi = b_range
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise InvalidRange(f"field range must satisfy lo < hi, got [{lo}, {hi}]")
    if steps < 2:
        raise InvalidRange(f"steps must be >= 2, got {steps}")
    grid = np.linspace(lo, hi, int(steps))
    rows = [at_field(sp, FieldPoint(float(b), gamma_n_c)) for b in grid]
    if any(r.near_crossing for r in rows):
        warnings.warn(
            "sweep enters the 1027 G avoided crossing; secular values are unreliable there",
            NearAvoidedCrossing,
            stacklevel=2,
        )
    return rows


def sweep_csv(rows, header=None):
    """Render sweep rows as CSV text; ``header`` lines are prefixed with '#'."""
    buf = io.StringIO()
    if header:
        for line in header.splitlines():
            buf.write(f"# {line}\n")
    flagged = [r.b for r in rows if r.near_crossing]
    if flagged:
        buf.write(
            f"# warning: {len(flagged)} rows within {CROSSING_WINDOW_GAUSS:g} G of the "
            f"{AVOIDED_CROSSING_GAUSS:g} G avoided crossing (B = {flagged[0]!r} .. {flagged[-1]!r})\n"
        )
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow(
            [
                repr(r.b),
                repr(r.delta0),
                repr(r.delta_plus),
                repr(r.delta_minus),
                repr(r.delta_n),
                repr(r.gamma0),
                repr(r.gamma_plus),
                repr(r.gamma_minus),
            ]
        )
    return buf.getvalue()


# --- reconciliation of printed values ------------------------------------


def printed_interval(text):
    """Interval of real values that round to the printed decimal ``text``.

    The half-ulp comes from the printed representation itself: "792" means
    [791.5, 792.5], "194.0" means [193.95, 194.05] and "1.369e+05" means
    [136850, 136950].
    """
    try:
        d = Decimal(text.strip())
    except InvalidOperation as exc:
        raise ValueError(f"not a decimal number: {text!r}") from exc
    if not d.is_finite():
        raise ValueError(f"not a finite number: {text!r}")
    half = 0.5 * 10.0 ** d.as_tuple().exponent
    v = float(d)
    return v - half, v + half


def _abs_range(lo, hi):
    if lo <= 0.0 <= hi:
        return 0.0, max(-lo, hi)
    return min(abs(lo), abs(hi)), max(abs(lo), abs(hi))


def delta0_interval(a_zz_text, a_nd_text):
    """Range of sqrt(A_ZZ**2 + A_nd**2) over the rounding boxes of both inputs."""
    alo, ahi = _abs_range(*printed_interval(a_zz_text))
    nlo, nhi = printed_interval(a_nd_text)
    nlo = max(nlo, 0.0)
    return math.hypot(alo, nlo), math.hypot(ahi, nhi)


def tau0_interval(a_zz_text, a_nd_text):
    """Range of 1 + A_ZZ**2/A_nd**2 over the rounding boxes of both inputs."""
    alo, ahi = _abs_range(*printed_interval(a_zz_text))
    nlo, nhi = printed_interval(a_nd_text)
    nlo = max(nlo, 0.0)
    lo = 1.0 + (alo / nhi) ** 2
    hi = math.inf if nlo == 0 else 1.0 + (ahi / nlo) ** 2
    return lo, hi
