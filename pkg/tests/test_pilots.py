import numpy as np
import pytest
from scipy.stats import chisquare

from iccsim.code import Codeword, generate_codebook
from iccsim.pilots import (
    PhaseAlphabet,
    PilotConfigError,
    Sap,
    build_schedule,
    check_mapping,
    codeword_to_sap,
    demap_codeword,
    map_phase_to_codeword,
    minimal_length,
    sap_to_codeword,
    training_subcarriers,
)


def test_alphabet_phases():
    ph = PhaseAlphabet(8).phases
    assert np.all(np.diff(ph) > 0) and ph[0] == 0 and ph[-1] < 2 * np.pi
    assert len(set(np.round(ph, 12))) == 8


def test_first_phase_maps_to_first_word():
    book = generate_codebook(6, 2)
    assert map_phase_to_codeword(0, book) == book.words[0]
    assert str(book.words[0]) == "111100"


def test_phase_codeword_roundtrip():
    book = generate_codebook(6, 2)
    alpha = PhaseAlphabet(8)
    check_mapping(alpha, book)
    seen = set()
    for m in range(8):
        w = map_phase_to_codeword(m, book, alpha)
        assert demap_codeword(w, book, alpha) == m
        seen.add(w)
    assert len(seen) == 8


def test_mapping_rejects_oversized_alphabet():
    book = generate_codebook(6, 2)
    with pytest.raises(PilotConfigError, match="code length >= 8"):
        check_mapping(PhaseAlphabet(16), book)
    assert minimal_length(16, 2) == 8


def test_schedule_steps():
    alpha = PhaseAlphabet(16)
    flat = build_schedule(alpha, rng_seed=1, phase_step=0.0, symbols=4)
    assert np.allclose(flat.phases, flat.phases[0])
    sched = build_schedule(alpha, rng_seed=2, phase_step=np.pi / 2, symbols=5)
    diffs = np.angle(np.exp(1j * np.diff(sched.phases)))
    assert np.allclose(diffs, np.pi / 2)
    assert np.allclose(np.abs(sched.pilots()), 1.0)
    with pytest.raises(PilotConfigError):
        build_schedule(alpha, symbols=1)


def test_initial_phase_uniform():
    alpha = PhaseAlphabet(12)
    rng = np.random.default_rng(0)
    idx = [build_schedule(alpha, rng_seed=rng).initial_index for _ in range(10_000)]
    counts = np.bincount(idx, minlength=12)
    assert chisquare(counts).pvalue > 1e-3


def test_codeword_sap_mapping():
    sap = codeword_to_sap(Codeword.from_string("0111"), [2, 5, 8, 11])
    assert sap.active == (5, 8, 11)
    assert codeword_to_sap(Codeword.from_string("1111"), [2, 5, 8, 11]).active == (2, 5, 8, 11)
    with pytest.raises(PilotConfigError):
        codeword_to_sap(Codeword.from_string("0111"), [2, 5])
    with pytest.raises(PilotConfigError):
        sap_to_codeword(Sap((3,)), [2, 5])


def test_sap_roundtrip_random_words():
    rng = np.random.default_rng(4)
    psi = training_subcarriers(64, 16)
    for _ in range(1000):
        w = Codeword.from_array(rng.integers(0, 2, 16))
        sap = codeword_to_sap(w, psi)
        assert sap_to_codeword(sap, psi) == w
        assert len(sap.active) == w.weight


def test_training_subcarriers_spacing():
    assert training_subcarriers(16, 4) == (0, 4, 8, 12)
    assert len(set(training_subcarriers(17, 5))) == 5
    with pytest.raises(PilotConfigError):
        training_subcarriers(4, 5)
