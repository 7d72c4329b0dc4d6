import numpy as np
import pytest

from nvspin.readout import SsrModel, estimate_dwell, flip_prob_for_dwell, ssr_trace


def test_no_flips_constant_state():
    tr = ssr_trace(0.0, 500, seed=1)
    assert np.all(tr.state == 1)
    assert tr.counts.std() > 0
    assert tr.transitions == 0 and tr.dwell == np.inf


def test_perfect_readout_is_exact():
    tr = ssr_trace(0.05, 2000, SsrModel(fidelity=1.0, contrast=1.0), seed=7, window=1)
    np.testing.assert_array_equal(tr.readback, tr.state)
    assert tr.transitions == np.count_nonzero(np.diff(tr.state))


def test_seeded_reproducible():
    a, b, c = (ssr_trace(0.02, 300, seed=s).counts for s in (5, 5, 6))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_seed_sequence_accepted():
    ss = np.random.SeedSequence(11)
    np.testing.assert_array_equal(ssr_trace(0.02, 50, seed=ss).counts, ssr_trace(0.02, 50, seed=np.random.SeedSequence(11)).counts)


def test_estimator_on_known_bits():
    bits = np.array([1] * 40 + [0] * 40 + [1] * 20)
    _, n, dwell = estimate_dwell(bits, 0.1)
    assert n == 2 and dwell == pytest.approx(5.0)
    noisy = bits.copy()
    noisy[10] = 0
    assert estimate_dwell(noisy, 0.1)[1] == 2
    assert estimate_dwell(noisy, 0.1, window=1)[1] == 4


def test_model_validation():
    with pytest.raises(ValueError):
        SsrModel(fidelity=0.2)
    with pytest.raises(ValueError):
        ssr_trace(1.5, 10)
    assert SsrModel().dark == pytest.approx(210)
    assert flip_prob_for_dwell(4, 0.05) == 0.0125
