import numpy as np
import pytest

from adagtcn.errors import (DegenerateWindowError, DimensionError, EmptySessionError,
                            PaddingOverflowError, ParameterError)
from adagtcn.preprocess import (BANDS, BandSequence, FixationEvent, RawEegSegment,
                                assemble_session, band_features, extract_window,
                                segment_ffd, session_from_raw)

RATE = 500.0


def fixations(words, start=0.0, step=250.0, dur=200.0):
    return [FixationEvent(w, start + i * step, dur) for i, w in enumerate(words)]


def sine(freq, seconds=1.0, rate=RATE, amp=1.0):
    t = np.arange(int(seconds * rate)) / rate
    return amp * np.sin(2 * np.pi * freq * t)


def band_index(name):
    return [b[0] for b in BANDS].index(name)


# ---------------------------------------------------------------- segmentation

def test_ffd_keeps_first_visit():
    windows = segment_ffd(fixations([0, 1, 1, 2]))
    assert [w for w, _ in windows] == [0, 1, 2]
    assert windows[1][1] == (250.0, 450.0)


def test_ffd_single_fixation():
    assert segment_ffd(fixations([5])) == [(5, (0.0, 200.0))]


def test_ffd_regression_pattern_matches_seen_set_oracle():
    words = [2, 0, 2]
    seen, expected = set(), []
    for i, w in enumerate(words):
        if w not in seen:
            seen.add(w)
            expected.append(w)
    assert [w for w, _ in segment_ffd(fixations(words))] == expected == [2, 0]


def test_ffd_rejects_empty_and_unsorted():
    with pytest.raises(EmptySessionError):
        segment_ffd([])
    with pytest.raises(ParameterError):
        segment_ffd([FixationEvent(0, 100.0, 50.0), FixationEvent(1, 50.0, 50.0)])


def test_fixation_duration_must_be_positive():
    with pytest.raises(ParameterError):
        FixationEvent(0, 0.0, 0.0)


def test_window_length_matches_duration():
    eeg = np.zeros((3, 2000))
    seg = extract_window(eeg, RATE, (100.0, 340.0))
    assert abs(seg.samples.shape[1] - round(240.0 * RATE / 1000)) <= 1


# ---------------------------------------------------------------- band features

def test_nine_hz_lands_in_alpha1():
    feats = band_features(RawEegSegment(sine(9.0)[None, :], RATE))
    alpha1 = feats[band_index("alpha1")]
    # oracle: with an integer number of cycles the DFT puts all energy in the 9 Hz bin
    spectrum = np.abs(np.fft.rfft(sine(9.0)))
    assert np.argmax(spectrum) * RATE / len(sine(9.0)) == 9.0
    others = np.delete(feats, band_index("alpha1"))
    assert np.all(others < 0.05 * alpha1)
    # the band mask passes the tone unchanged, so the feature is mean |x|
    assert alpha1 == pytest.approx(np.abs(sine(9.0)).mean(), rel=1e-9)


def test_zero_signal_gives_zero_features():
    assert np.array_equal(band_features(RawEegSegment(np.zeros((2, 300)), RATE)), np.zeros(16))


def test_two_tones_pick_theta1_and_beta2():
    x = sine(5.0) + sine(25.0)
    feats = band_features(RawEegSegment(x[None, :], RATE))
    top2 = set(np.argsort(feats)[-2:])
    assert top2 == {band_index("theta1"), band_index("beta2")}


def test_features_are_electrode_major():
    x = np.stack([sine(5.0), sine(45.0)])
    feats = band_features(RawEegSegment(x, RATE)).reshape(2, 8)
    assert np.argmax(feats[0]) == band_index("theta1")
    assert np.argmax(feats[1]) == band_index("gamma2")


def test_shared_edge_goes_to_higher_band():
    feats = band_features(RawEegSegment(sine(40.0)[None, :], RATE))
    assert np.argmax(feats) == band_index("gamma2")
    assert feats[band_index("gamma1")] < 1e-9


def test_mean_power_statistic():
    feats = band_features(RawEegSegment(sine(9.0)[None, :], RATE), statistic="mean_power")
    assert feats[band_index("alpha1")] == pytest.approx(0.5, rel=1e-9)
    with pytest.raises(ParameterError):
        band_features(RawEegSegment(sine(9.0)[None, :], RATE), statistic="median")


def test_band_feature_guards():
    with pytest.raises(ParameterError):
        band_features(RawEegSegment(np.zeros((1, 100)), 80.0))
    with pytest.raises(DegenerateWindowError):
        band_features(RawEegSegment(np.zeros((1, 1)), RATE))
    with pytest.raises(DimensionError):
        band_features(RawEegSegment(np.zeros(100), RATE))


# ---------------------------------------------------------------- padding

def test_padding_mask():
    seq = assemble_session([np.ones(4)] * 3, max_length=5)
    assert seq.features.shape == (4, 5)
    assert seq.mask.tolist() == [True, True, True, False, False]
    assert np.all(seq.features[:, 3:] == 0)
    assert seq.n == 3


def test_full_length_needs_no_padding():
    seq = assemble_session([np.ones(2)] * 5, max_length=5)
    assert seq.mask.all()


def test_default_max_length_accepts_168():
    seq = assemble_session([np.zeros(16)] * 168)
    assert seq.width == 168 and seq.n == 168


def test_overflow_and_empty():
    with pytest.raises(PaddingOverflowError, match="max_length"):
        assemble_session([np.ones(2)] * 6, max_length=5)
    with pytest.raises(EmptySessionError):
        assemble_session([], max_length=5)


def test_bandsequence_pad_round_trip():
    seq = BandSequence.from_features(np.arange(12.0).reshape(4, 3))
    padded = seq.pad(6)
    assert np.array_equal(padded.valid_features(), seq.features)


def test_session_from_raw_end_to_end():
    rng = np.random.default_rng(0)
    eeg = rng.normal(size=(2, 3000))
    seq = session_from_raw(fixations([0, 1, 1, 3]), eeg, RATE, max_length=6)
    assert seq.p == 16 and seq.n == 3
    assert not np.isnan(seq.features).any()
    first = band_features(extract_window(eeg, RATE, (0.0, 200.0)))
    assert np.array_equal(seq.features[:, 0], first)
