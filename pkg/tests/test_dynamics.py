import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvspin.errors import InvalidSequence
from nvspin.hfi import HfiMatrix, SecularParams
from nvspin.observables import FieldPoint, at_field
from nvspin.dynamics import (
    FreeEvolution,
    Measure,
    MwPulse,
    PulseSequence,
    RfPulse,
    SpinHamiltonianParams,
    SpinState,
    build_hamiltonian,
    endor_peak,
    endor_sweep,
    flip_probability_trace,
    manifold_splitting,
    max_flip_probability,
    propagate,
    run_sequence,
    transition_frequency,
    xy8_linewidth,
    xy8_resonance,
    xy8_sequence,
    xy8_trace,
)

SEC2 = SpinHamiltonianParams.at_larmor(SecularParams(-49.1, 1.4), 362.2)
XY8 = SpinHamiltonianParams.secular(-49.1, 1.4, b=355.0)


def test_bare_zfs():
    p = SpinHamiltonianParams.secular(0.0, 0.0)
    w = np.linalg.eigvalsh(build_hamiltonian(p))
    np.testing.assert_allclose(w, [0, 0, 2.87e6, 2.87e6, 2.87e6, 2.87e6], atol=1e-6)


def test_hermitian_full_hfi():
    a = HfiMatrix.from_upper(30, 5, 12, -10, 7, 80)
    h = build_hamiltonian(SpinHamiltonianParams(a, b=100, e_zfs=1.5))
    np.testing.assert_allclose(h, h.conj().T, atol=1e-12)


def test_zero_field_splitting_equals_delta0():
    p = SpinHamiltonianParams.secular(-1001.6, 14.5)
    h = build_hamiltonian(p)
    for m in (1, -1):
        assert manifold_splitting(h, m) == pytest.approx(math.hypot(1001.6, 14.5), abs=1e-9)


def test_sec2_splittings():
    h = build_hamiltonian(SEC2)
    assert manifold_splitting(h, -1) == pytest.approx(313.10, abs=0.005)
    assert manifold_splitting(h, 0) == pytest.approx(362.2, abs=1e-9)


def test_full_hfi_close_to_secular_away_from_crossing():
    a = HfiMatrix.from_upper(20, 0, 1.4, 20, 0, -49.1)
    p = SpinHamiltonianParams(a, b=338.2)
    w = np.linalg.eigvalsh(build_hamiltonian(p))
    o = at_field(SecularParams(-49.1, 1.4), FieldPoint(338.2))
    # levels ascend as m_S = 0, -1, +1 at this field; shifts are second order in A_perp / D
    assert w[3] - w[2] == pytest.approx(o.delta_minus, abs=0.1)


def test_state_norm_is_checked():
    with pytest.raises(ValueError):
        SpinState(np.ones(6))
    s = SpinState.normalized(np.ones(6))
    assert s.norm == pytest.approx(1)
    assert SpinState(s.amplitudes * (1 + 1e-11)).renormalized().norm == pytest.approx(1, abs=1e-15)


def test_propagate_identity_and_eigenstate():
    h = build_hamiltonian(SEC2)
    s = SpinState.basis(0, "up")
    assert propagate(s, h, 0.0) is s
    out = propagate(s, h, 123.4)
    np.testing.assert_allclose(out.populations(), s.populations(), atol=1e-12)


def test_semigroup_and_time_reversal():
    p = SpinHamiltonianParams(HfiMatrix.from_upper(30, 5, 12, -10, 7, 80), b=50)
    h = build_hamiltonian(p)
    s = SpinState.normalized(np.arange(1, 7) + 1j * np.arange(6, 0, -1))
    a = propagate(propagate(s, h, 0.37), h, 1.21)
    b = propagate(s, h, 1.58)
    np.testing.assert_allclose(a.amplitudes, b.amplitudes, atol=1e-10)
    back = propagate(propagate(s, h, 2.5), -h, 2.5)
    np.testing.assert_allclose(back.amplitudes, s.amplitudes, atol=1e-9)


def test_norm_over_many_segments():
    h = build_hamiltonian(SpinHamiltonianParams(HfiMatrix.from_upper(30, 5, 12, -10, 7, 80), b=50), "rotating")
    seq = PulseSequence([FreeEvolution(0.013), MwPulse(math.pi / 3, 0.4)] * 5000)
    out, _ = run_sequence(SEC2, seq, SpinState.basis(0, "up"))
    assert abs(out.norm - 1) < 1e-9
    s = SpinState.basis(1, "down")
    for _ in range(10_000):
        s = propagate(s, h, 0.7)
    assert abs(s.norm - 1) < 1e-9


def test_negative_durations_rejected():
    with pytest.raises(InvalidSequence):
        FreeEvolution(-1)
    with pytest.raises(InvalidSequence):
        RfPulse(300, 1, -0.1)


def test_endor_peaks():
    f, p = endor_sweep(SEC2, (300, 420, 0.1), 0.5, init_m_s=0)
    assert endor_peak(f, p) == pytest.approx(362.2, abs=0.05)
    f, p = endor_sweep(SEC2, (300, 420, 0.1), 0.5, init_m_s=-1)
    assert endor_peak(f, p) == pytest.approx(313.1, abs=0.05)


def test_endor_pi_pulse_on_resonance():
    f0 = transition_frequency(SEC2, -1)
    _, p = endor_sweep(SEC2, [f0], 0.8, init_m_s=-1)
    assert p[0] == pytest.approx(1.0, abs=1e-9)


def test_rf_pulse_segment_matches_lineshape():
    f0 = transition_frequency(SEC2, 0)
    for det in (0.0, 0.4, 1.3):
        rf = RfPulse(f0 + det, rabi=1.0, duration=0.5)
        out, _ = run_sequence(SEC2, PulseSequence([rf]), SpinState.basis(0, "up"))
        _, p = endor_sweep(SEC2, [f0 + det], 0.5, 0, rabi=1.0)
        assert out.nuclear_down_population() == pytest.approx(p[0], abs=1e-12)


def test_measure_fidelity():
    seq = PulseSequence([Measure(0.9), MwPulse(math.pi), Measure(0.9)])
    _, r = run_sequence(SEC2, seq, SpinState.basis(0, "up"))
    assert r == pytest.approx([0.9, 0.1])


def test_xy8_refocuses_without_flip_term():
    p = SpinHamiltonianParams.secular(-49.1, 0.0, b=355.0)
    tr = xy8_trace(p, xy8_resonance(p), 16)
    np.testing.assert_allclose(tr[:, 1], 1.0, atol=1e-9)
    np.testing.assert_array_equal(tr[:, 0], 8 * np.arange(1, 17))


def test_xy8_sequence_matches_fast_path():
    tau = xy8_resonance(XY8)
    seq = xy8_sequence(tau, 3)
    cohs = []
    for m in ("up", "down"):
        out, _ = run_sequence(XY8, seq, SpinState.basis(0, m))
        cohs.append(out.m_s_population(0) - out.m_s_population(-1))
    assert np.mean(cohs) == pytest.approx(xy8_trace(XY8, tau, [3])[0, 1], abs=1e-10)


def test_xy8_deepens_with_n_and_t_nd():
    tau = xy8_resonance(XY8)
    depth = 1 - xy8_trace(XY8, tau, 16)[:, 1]
    assert np.all(np.diff(depth) > 0)
    double = SpinHamiltonianParams.secular(-49.1, 2.8, b=355.0)
    assert 1 - xy8_trace(double, tau, [4])[0, 1] > depth[3]


def test_xy8_off_resonance_suppressed():
    tau = xy8_resonance(XY8)
    on = 1 - xy8_trace(XY8, tau, [16])[0, 1]
    off = 1 - xy8_trace(XY8, tau + 10 * xy8_linewidth(tau, 16), [16])[0, 1]
    assert off < 0.01 * on


def test_xy8_short_finite_pulses_close_to_instant():
    tau = xy8_resonance(XY8)
    inst = xy8_trace(XY8, tau, [4])[0, 1]
    fin = xy8_trace(XY8, tau, [4], pulse_duration=0.002)[0, 1]
    assert fin == pytest.approx(inst, abs=1e-3)


def test_xy8_errors():
    with pytest.raises(InvalidSequence):
        xy8_trace(XY8, 0.7, 0)
    with pytest.raises(InvalidSequence):
        xy8_sequence(0.7, 0)
    with pytest.raises(InvalidSequence):
        xy8_sequence(0.001, 1, pulse_duration=0.01)


def test_flip_trace_zero_without_t_nd():
    p = SpinHamiltonianParams.secular(-49.1, 0.0, b=300)
    _, prob = flip_probability_trace(p, -1, (0, 1e4, 101))
    np.testing.assert_allclose(prob, 0, atol=1e-15)
    assert max_flip_probability(p, -1)[0] == 0


def test_flip_sup_st1():
    p = SpinHamiltonianParams.secular(-1001.6, 14.5)
    assert max_flip_probability(p, -1)[0] == pytest.approx(2.096e-4, abs=1e-7)


def test_flip_sup_sec2():
    sup, _ = max_flip_probability(SEC2, -1)
    assert sup == pytest.approx(1.4**2 / (1.4**2 + 313.1**2), rel=1e-3)


def test_flip_trace_is_rabi_formula():
    p = SpinHamiltonianParams.secular(-200.0, 30.0, b=100)
    o = at_field(SecularParams(-200.0, 30.0), FieldPoint(100))
    t, prob = flip_probability_trace(p, 1, (0, 20e3, 257))
    np.testing.assert_allclose(prob, o.gamma_plus * np.sin(math.pi * o.delta_plus * t * 1e-3) ** 2, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(-1e4, 1e4, allow_subnormal=False),
    st.just(0.0) | st.floats(1e-6, 1e3),
    st.floats(0, 1e3, allow_subnormal=False),
)
def test_sup_matches_closed_form(a, t, b):
    o = at_field(SecularParams(a, t), FieldPoint(b))
    p = SpinHamiltonianParams.secular(a, t, b=b)
    h = build_hamiltonian(p)
    for m, g, d in ((1, o.gamma_plus, o.delta_plus), (-1, o.gamma_minus, o.delta_minus)):
        assert abs(max_flip_probability(p, m)[0] - g) < 1e-6
        assert abs(manifold_splitting(h, m) - d) < 1e-9
