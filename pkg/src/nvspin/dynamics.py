"""Coherent dynamics of the NV electron spin (S=1) coupled to one 13C (I=1/2).

Basis order is (+1 up, +1 down, 0 up, 0 down, -1 up, -1 down) with
|m_S> (x) |m_I>. Hamiltonians are in kHz and times in microseconds unless a
name says otherwise, so a propagator is exp(-2 pi i H t 1e-3).

The electron rotating frame subtracts D S_Z**2 + gamma_e B S_Z. That operator
commutes with the rest of H when E = 0 and the hfi is secular, so the frame
change is exact there; with a full hfi matrix it drops the non-secular terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InvalidSequence
from .hfi import HfiMatrix, SecularParams, _require_frame, Frame
from .observables import GAMMA_N_C13

__all__ = [
    "D_ZFS_MHZ",
    "GAMMA_E_MHZ",
    "SpinHamiltonianParams",
    "SpinState",
    "FreeEvolution",
    "MwPulse",
    "RfPulse",
    "Measure",
    "PulseSequence",
    "build_hamiltonian",
    "manifold_block",
    "manifold_splitting",
    "transition_frequency",
    "propagate",
    "run_sequence",
    "endor_sweep",
    "endor_peak",
    "xy8_resonance",
    "xy8_linewidth",
    "xy8_sequence",
    "xy8_trace",
    "flip_probability_trace",
    "max_flip_probability",
]

D_ZFS_MHZ = 2870.0
GAMMA_E_MHZ = 2.8025  # MHz/G

_M_S = (1, 0, -1)
_SLICE = {1: slice(0, 2), 0: slice(2, 4), -1: slice(4, 6)}

_SQ = 1.0 / math.sqrt(2.0)
_SX = _SQ * np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex)
_SY = _SQ * np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex)
_SZ = np.diag([1.0, 0.0, -1.0]).astype(complex)
_IX = 0.5 * np.array([[0, 1], [1, 0]], dtype=complex)
_IY = 0.5 * np.array([[0, -1j], [1j, 0]], dtype=complex)
_IZ = 0.5 * np.diag([1.0, -1.0]).astype(complex)
_E3 = np.eye(3, dtype=complex)
_E2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class SpinHamiltonianParams:
    """Static parameters. Fields: b in G, d/e in MHz, gamma_e in MHz/G, gamma_n in kHz/G."""

    hfi: Union[HfiMatrix, SecularParams]
    b: float = 0.0
    d_zfs: float = D_ZFS_MHZ
    e_zfs: float = 0.0
    gamma_e: float = GAMMA_E_MHZ
    gamma_n: float = GAMMA_N_C13

    def __post_init__(self):
        if not self.d_zfs > 0:
            raise ValueError(f"d_zfs must be positive, got {self.d_zfs}")
        if not isinstance(self.hfi, (HfiMatrix, SecularParams)):
            raise TypeError("hfi must be an HfiMatrix or SecularParams")
        if isinstance(self.hfi, HfiMatrix):
            _require_frame(self.hfi, Frame.NV_PACS)

    @classmethod
    def secular(cls, a_zz, t_nd, phi=0.0, **kw):
        return cls(hfi=SecularParams(a_zz, t_nd, phi), **kw)

    @classmethod
    def at_larmor(cls, hfi, larmor_khz, gamma_n=GAMMA_N_C13, **kw):
        """Parameters whose nuclear Zeeman splitting gamma_n B is ``larmor_khz``."""
        return cls(hfi=hfi, b=larmor_khz / gamma_n, gamma_n=gamma_n, **kw)

    @property
    def is_secular(self):
        return isinstance(self.hfi, SecularParams)


def _electron_diag(p):
    return 1e3 * (p.d_zfs * np.array([1.0, 0.0, 1.0]) + p.gamma_e * p.b * np.array([1.0, 0.0, -1.0]))


def _hfi_term(hfi):
    if isinstance(hfi, SecularParams):
        nuc = hfi.a_zz * _IZ + hfi.t_nd * (math.cos(hfi.phi) * _IX + math.sin(hfi.phi) * _IY)
        return np.kron(_SZ, nuc)
    a = hfi.elements
    s_ops, i_ops = (_SX, _SY, _SZ), (_IX, _IY, _IZ)
    h = np.zeros((6, 6), dtype=complex)
    for k in range(3):
        for l in range(3):
            if a[k, l] != 0:
                h += a[k, l] * np.kron(s_ops[k], i_ops[l])
    return h


def build_hamiltonian(p, frame="lab"):
    """6x6 Hermitian Hamiltonian in kHz.

    ``frame="rotating"`` removes the diagonal electron energies (see the
    module docstring); the E term, if any, is kept.
    """
    if frame not in ("lab", "rotating"):
        raise ValueError(f"frame must be 'lab' or 'rotating', got {frame!r}")
    h = -p.gamma_n * p.b * np.kron(_E3, _IZ) + _hfi_term(p.hfi)
    if p.e_zfs:
        h = h + 1e3 * p.e_zfs * np.kron(_SX @ _SX - _SY @ _SY, _E2)
    if frame == "lab":
        # added last so the small terms are rounded only once against the large ones
        h = h + np.diag(np.repeat(_electron_diag(p), 2))
    return 0.5 * (h + h.conj().T)


def manifold_block(h, m_s):
    return h[_SLICE[m_s], _SLICE[m_s]]


def manifold_splitting(h, m_s):
    """Splitting of the two nuclear levels in the m_S block of ``h`` (kHz).

    Exact for block-diagonal H (secular hfi). The common diagonal offset
    cancels exactly in the difference of the diagonal elements.
    """
    b = manifold_block(h, m_s)
    return math.hypot(float((b[0, 0] - b[1, 1]).real), 2.0 * abs(b[0, 1]))


def transition_frequency(p, m_s):
    """Nuclear transition frequency (kHz) within the m_S manifold."""
    return manifold_splitting(build_hamiltonian(p, "rotating"), m_s)


# --- states and propagation ----------------------------------------------


_NORM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SpinState:
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex, copy=True).reshape(-1)
        if a.shape != (6,):
            raise ValueError(f"state needs 6 amplitudes, got {a.shape[0]}")
        n = np.linalg.norm(a)
        if abs(n - 1.0) > _NORM_TOL:
            raise ValueError(f"state norm {n!r} differs from 1 by more than {_NORM_TOL}; call SpinState.normalized")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def normalized(cls, amplitudes):
        a = np.asarray(amplitudes, dtype=complex)
        n = np.linalg.norm(a)
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(a / n)

    @classmethod
    def basis(cls, m_s, m_i):
        """Product state |m_S, m_I>; m_i is +0.5/'up' or -0.5/'down'."""
        a = np.zeros(6, dtype=complex)
        a[_SLICE[m_s].start + _nuclear_index(m_i)] = 1.0
        return cls(a)

    @property
    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def renormalized(self):
        return SpinState.normalized(self.amplitudes)

    def populations(self):
        return np.abs(self.amplitudes) ** 2

    def m_s_population(self, m_s):
        return float(self.populations()[_SLICE[m_s]].sum())

    def nuclear_down_population(self):
        return float(self.populations()[1::2].sum())


def _nuclear_index(m_i):
    if m_i in ("up", 0.5, +1):
        return 0
    if m_i in ("down", -0.5, -1):
        return 1
    raise ValueError(f"m_i must be 'up'/'down' or +-0.5, got {m_i!r}")


def _unitary(h, t_us):
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-2j * math.pi * w * (t_us * 1e-3))) @ v.conj().T


def propagate(state, h, t):
    """Evolve ``state`` under the static ``h`` (kHz) for ``t`` microseconds."""
    if t == 0:
        return state
    out = _unitary(h, t) @ state.amplitudes
    return SpinState(out)


# --- pulse sequences -----------------------------------------------------


@dataclass(frozen=True)
class FreeEvolution:
    duration: float  # us

    def __post_init__(self):
        if not self.duration >= 0:
            raise InvalidSequence(f"durations must be >= 0, got {self.duration}")


@dataclass(frozen=True)
class MwPulse:
    """Rotation of the electron pseudo-spin on the ``transition`` pair.

    ``axis`` is the rotation axis angle in the xy plane and ``angle`` the
    rotation angle, both in radians. ``duration`` 0 means instantaneous;
    otherwise the drive is added to the rotating-frame H for that time.
    """

    angle: float = math.pi
    axis: float = 0.0
    transition: tuple = (0, -1)
    duration: float = 0.0  # us

    def __post_init__(self):
        if not self.duration >= 0:
            raise InvalidSequence(f"durations must be >= 0, got {self.duration}")
        a, b = self.transition
        if a == b or a not in _SLICE or b not in _SLICE:
            raise InvalidSequence(f"bad microwave transition {self.transition}")


@dataclass(frozen=True)
class RfPulse:
    """Nuclear drive at ``frequency`` kHz with Rabi frequency ``rabi`` kHz for ``duration`` ms.

    Applied analytically in the rotating frame of the rf within each m_S
    manifold. The free precession during the pulse is not included.
    """

    frequency: float
    rabi: float
    duration: float  # ms
    phase: float = 0.0

    def __post_init__(self):
        if not self.duration >= 0:
            raise InvalidSequence(f"durations must be >= 0, got {self.duration}")


@dataclass(frozen=True)
class Measure:
    """Record P(m_S = 0), misread with probability 1 - fidelity."""

    fidelity: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.fidelity <= 1.0:
            raise InvalidSequence(f"fidelity must lie in [0, 1], got {self.fidelity}")


@dataclass(frozen=True)
class PulseSequence:
    segments: tuple = field(default_factory=tuple)

    def __post_init__(self):
        segs = tuple(self.segments)
        for s in segs:
            if not isinstance(s, (FreeEvolution, MwPulse, RfPulse, Measure)):
                raise InvalidSequence(f"unknown segment {s!r}")
        object.__setattr__(self, "segments", segs)

    def __len__(self):
        return len(self.segments)

    def __add__(self, other):
        return PulseSequence(self.segments + tuple(other.segments))


def _pseudo_spin(angle, axis, transition):
    """6x6 rotation acting on the electron pair ``transition``, identity elsewhere."""
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    e = np.eye(3, dtype=complex)
    i, j = (_M_S.index(m) for m in transition)
    e[i, i] = e[j, j] = c
    e[i, j] = -1j * s * complex(math.cos(axis), -math.sin(axis))
    e[j, i] = -1j * s * complex(math.cos(axis), math.sin(axis))
    return np.kron(e, _E2)


def _drive(mw, h_rot):
    rabi = mw.angle / (2 * math.pi * mw.duration * 1e-3)  # kHz
    d = np.zeros((3, 3), dtype=complex)
    i, j = (_M_S.index(m) for m in mw.transition)
    d[i, j] = 0.5 * rabi * complex(math.cos(mw.axis), -math.sin(mw.axis))
    d[j, i] = np.conj(d[i, j])
    return h_rot + np.kron(d, _E2)


def _rf_unitary(rf, h_rot):
    u = np.zeros((6, 6), dtype=complex)
    for m in _M_S:
        sl = _SLICE[m]
        w, v = np.linalg.eigh(manifold_block(h_rot, m))
        det = (w[1] - w[0]) - rf.frequency
        hr = 0.5 * np.array(
            [
                [det, rf.rabi * complex(math.cos(rf.phase), -math.sin(rf.phase))],
                [rf.rabi * complex(math.cos(rf.phase), math.sin(rf.phase)), -det],
            ]
        )
        # eigenbasis ordered (upper, lower) so +det/2 sits on the upper level
        vv = v[:, ::-1]
        u[sl, sl] = vv @ _unitary(hr, rf.duration * 1e3) @ vv.conj().T
    return u


def _segment_unitary(seg, h_rot):
    if isinstance(seg, FreeEvolution):
        return _unitary(h_rot, seg.duration)
    if isinstance(seg, MwPulse):
        if seg.duration == 0:
            return _pseudo_spin(seg.angle, seg.axis, seg.transition)
        return _unitary(_drive(seg, h_rot), seg.duration)
    if isinstance(seg, RfPulse):
        return _rf_unitary(seg, h_rot)
    raise TypeError(seg)


def run_sequence(p, seq, state):
    """Apply ``seq`` in the electron rotating frame.

    Returns (final state, list of Measure readings). A reading is the
    m_S = 0 population mapped through the readout fidelity.
    """
    h_rot = build_hamiltonian(p, "rotating")
    amp = state.amplitudes
    readings = []
    for seg in seq.segments:
        if isinstance(seg, Measure):
            p0 = float(np.sum(np.abs(amp[_SLICE[0]]) ** 2))
            readings.append(seg.fidelity * p0 + (1 - seg.fidelity) * (1 - p0))
            continue
        amp = _segment_unitary(seg, h_rot) @ amp
    return SpinState(amp), readings


# --- ENDOR ---------------------------------------------------------------


def _rf_grid(rf_range):
    if isinstance(rf_range, tuple) and len(rf_range) == 3:
        lo, hi, step = rf_range
        if not step > 0 or hi < lo:
            raise ValueError(f"bad rf range {rf_range}")
        n = int(round((hi - lo) / step)) + 1
        return lo + step * np.arange(n)
    return np.asarray(rf_range, dtype=float)


def endor_sweep(p, rf_range, rf_duration, init_m_s=0, init_m_i="up", rabi=None):
    """Nuclear flip probability versus rf frequency.

    ``rf_range`` is (lo, hi, step) in kHz, endpoint included, or an array.
    ``rf_duration`` is in ms; ``rabi`` (kHz) defaults to a pi pulse,
    1 / (2 rf_duration). Each point is the Rabi lineshape
    (W**2 / W_eff**2) sin**2(pi W_eff t) with W_eff = hypot(W, f - f_m) about
    the nuclear transition f_m of the initial manifold. The lineshape is the
    same for either initial nuclear state; ``init_m_i`` is validated only.
    """
    _nuclear_index(init_m_i)
    if not rf_duration > 0:
        raise ValueError("rf_duration must be positive")
    rabi = 1.0 / (2.0 * rf_duration) if rabi is None else float(rabi)
    f_m = transition_frequency(p, init_m_s)
    freqs = _rf_grid(rf_range)
    eff = np.hypot(rabi, freqs - f_m)
    prob = (rabi / eff) ** 2 * np.sin(math.pi * eff * rf_duration) ** 2
    return freqs, prob


def endor_peak(freqs, prob):
    return float(freqs[int(np.argmax(prob))])


# --- XY8 -----------------------------------------------------------------

_XY8_AXES = (0, 1, 0, 1, 1, 0, 1, 0)  # 0 = X, 1 = Y


def xy8_resonance(p, k=1):
    """Inter-pulse half spacing tau (us) of the k-th XY8 resonance.

    tau = (2k - 1) / (4 f) with f the mean of the m_S = 0 and m_S = -1
    nuclear frequencies, since the electron spends equal time in both.
    """
    if k < 1:
        raise InvalidSequence("resonance order k must be >= 1")
    f = 0.5 * (transition_frequency(p, 0) + transition_frequency(p, -1))
    return (2 * k - 1) / (4.0 * f) * 1e3


def xy8_linewidth(tau, n_blocks):
    """Approximate resonance width in tau for N blocks (8N pulses)."""
    return tau / (4.0 * n_blocks)


def xy8_sequence(tau, n_blocks, pulse_duration=0.0, final_phase=math.pi):
    """pi/2_x, (tau X 2tau Y 2tau X 2tau Y 2tau Y 2tau X 2tau Y 2tau X tau)^N, pi/2 about ``final_phase``.

    With the default final phase the last pulse undoes the first, so a fully
    refocused electron returns to m_S = 0.
    """
    if n_blocks < 1:
        raise InvalidSequence(f"n_blocks must be >= 1, got {n_blocks}")
    half = pulse_duration / 2
    if tau - half < 0:
        raise InvalidSequence("pulse duration longer than 2 tau")
    segs = [MwPulse(math.pi / 2, 0.0)]
    for _ in range(n_blocks):
        for i, ax in enumerate(_XY8_AXES):
            gap = tau if i == 0 else 2 * tau
            segs.append(FreeEvolution(gap - (half if i == 0 else 2 * half)))
            segs.append(MwPulse(math.pi, ax * math.pi / 2, duration=pulse_duration))
        segs.append(FreeEvolution(tau - half))
    segs.append(MwPulse(math.pi / 2, final_phase))
    return PulseSequence(segs)


def _xy8_blocks(p, tau, pulse_duration):
    h = build_hamiltonian(p, "rotating")
    half = pulse_duration / 2
    u_tau = _unitary(h, tau - half)
    u_2tau = _unitary(h, 2 * tau - 2 * half)
    pulses = [
        _segment_unitary(MwPulse(math.pi, ax * math.pi / 2, duration=pulse_duration), h) for ax in (0, 1)
    ]
    block = u_tau
    for i, ax in enumerate(_XY8_AXES):
        if i:
            block = u_2tau @ block
        block = pulses[ax] @ block
    return u_tau @ block


def xy8_trace(p, tau, n_blocks, contrast=0.3, pulse_duration=0.0):
    """Electron coherence after N = 1..n_blocks XY8 blocks.

    ``n_blocks`` is an int (run 1..n) or an iterable of block counts. The
    nucleus starts fully mixed. Returns an array with columns
    (pulse count 8N, coherence P0 - P(-1), fluorescence 1 - contrast (1 - coherence) / 2).
    A coherence of 1 means no dip.
    """
    counts = list(range(1, int(n_blocks) + 1)) if np.isscalar(n_blocks) else [int(n) for n in n_blocks]
    if not counts or min(counts) < 1:
        raise InvalidSequence("n_blocks must be >= 1")
    if tau <= 0:
        raise InvalidSequence("tau must be positive")
    block = _xy8_blocks(p, tau, pulse_duration)
    open_ = _pseudo_spin(math.pi / 2, 0.0, (0, -1))
    close = _pseudo_spin(math.pi / 2, math.pi, (0, -1))
    psi = np.stack([open_ @ SpinState.basis(0, m).amplitudes for m in ("up", "down")], axis=1)
    rows = []
    done = 0
    for n in sorted(set(counts)):
        psi = np.linalg.matrix_power(block, n - done) @ psi
        done = n
        out = close @ psi
        pop = np.abs(out) ** 2
        p0 = pop[_SLICE[0]].sum(axis=0).mean()
        pm = pop[_SLICE[-1]].sum(axis=0).mean()
        coh = float(p0 - pm)
        rows.append((8 * n, coh, 1.0 - contrast * (1.0 - coh) / 2.0))
    by_n = {r[0]: r for r in rows}
    return np.array([by_n[8 * n] for n in counts])


# --- flip probability ----------------------------------------------------


def _flip_evaluator(p, m_s):
    h = build_hamiltonian(p, "rotating" if p.is_secular else "lab")
    w, v = np.linalg.eigh(h)
    c = v.conj().T @ SpinState.basis(m_s, "up").amplitudes
    down = v[1::2, :]

    def flip(t_us):
        t = np.atleast_1d(np.asarray(t_us, dtype=float))
        ph = np.exp(-2j * math.pi * np.outer(t * 1e-3, w)) * c
        amp = ph @ down.T
        return np.sum(np.abs(amp) ** 2, axis=1)

    return flip, h


def flip_probability_trace(p, m_s, t_range):
    """(t, p_flip(t)) with the nucleus starting up and the electron in ``m_s``.

    ``t_range`` is an array of times in us, or (lo, hi, n) for a linspace.
    """
    if isinstance(t_range, tuple) and len(t_range) == 3:
        t = np.linspace(t_range[0], t_range[1], int(t_range[2]))
    else:
        t = np.asarray(t_range, dtype=float)
    flip, _ = _flip_evaluator(p, m_s)
    return t, flip(t)


def max_flip_probability(p, m_s, grid=257):
    """sup over t of the simulated flip probability in the m_S manifold.

    For secular hfi the motion is periodic with the manifold splitting, so a
    dense grid over one period followed by a bounded refinement finds the
    supremum. Returns (sup, t_at_sup_us).
    """
    if p.is_secular and p.hfi.t_nd == 0:
        return 0.0, 0.0
    flip, h = _flip_evaluator(p, m_s)
    split = manifold_splitting(h, m_s)
    period = 1e3 / split if split > 0 else math.inf
    if not math.isfinite(period):
        raise ValueError(f"manifold splitting {split!r} kHz is too small to resolve one period")
    t = np.linspace(0.0, period, grid)
    f = flip(t)
    i = int(np.argmax(f))
    lo, hi = t[max(i - 1, 0)], t[min(i + 1, grid - 1)]
    res = minimize_scalar(
        lambda x: -flip(x)[0], bounds=(lo, hi), method="bounded", options={"xatol": period * 1e-9}
    )
    best, tb = (float(-res.fun), float(res.x)) if -res.fun > f[i] else (float(f[i]), float(t[i]))
    return best, tb
