"""Randomized pilot phases, the phase <-> codeword <-> SAP mapping and pilot schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .code import Codebook, Codeword

DEFAULT_PHASE_STEP = np.pi / 2


class PilotConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PhaseAlphabet:
    resolution: int

    def __post_init__(self) -> None:
        if self.resolution < 1:
            raise PilotConfigError(f"phase resolution must be >= 1, got {self.resolution}")

    @property
    def phases(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.resolution) / self.resolution

    def phase(self, index: int) -> float:
        return 2.0 * np.pi * (index % self.resolution) / self.resolution


@dataclass(frozen=True)
class PilotSchedule:
    """Pilot phases over consecutive symbols: a random start plus a public fixed step."""

    alphabet: PhaseAlphabet
    initial_index: int
    phase_step: float
    amplitude: float
    symbols: int

    @property
    def initial_phase(self) -> float:
        return self.alphabet.phase(self.initial_index)

    @property
    def phases(self) -> np.ndarray:
        k = np.arange(self.symbols)
        return np.mod(self.initial_phase + k * self.phase_step, 2.0 * np.pi)

    def pilots(self) -> np.ndarray:
        """Complex pilot value per symbol, shape ``(symbols,)``."""
        return self.amplitude * np.exp(1j * self.phases)


def build_schedule(
    alphabet: PhaseAlphabet,
    rng_seed=None,
    phase_step: float = DEFAULT_PHASE_STEP,
    symbols: int = 3,
    amplitude: float = 1.0,
    initial_index: int | None = None,
) -> PilotSchedule:
    if symbols < 2:
        raise PilotConfigError("differential decoding needs at least two symbols")
    if initial_index is None:
        initial_index = int(np.random.default_rng(rng_seed).integers(alphabet.resolution))
    return PilotSchedule(alphabet=alphabet, initial_index=initial_index,
                         phase_step=phase_step, amplitude=amplitude, symbols=symbols)


def minimal_length(resolution: int, order: int) -> int:
    """Smallest parity-valid code length whose book holds ``resolution`` words."""
    n_b = order
    while math.comb(n_b, (n_b + order) // 2) < resolution:
        n_b += 2
    return n_b


def check_mapping(alphabet: PhaseAlphabet, book: Codebook) -> None:
    if book.count < alphabet.resolution:
        raise PilotConfigError(
            f"{alphabet.resolution} phases do not fit in {book.count} codewords; "
            f"need code length >= {minimal_length(alphabet.resolution, book.order)}"
        )


def map_phase_to_codeword(phase_index: int, book: Codebook,
                          alphabet: PhaseAlphabet | None = None) -> Codeword:
    if alphabet is not None:
        check_mapping(alphabet, book)
        if not 0 <= phase_index < alphabet.resolution:
            raise PilotConfigError(f"phase index {phase_index} outside the alphabet")
    return book.word(phase_index)


def demap_codeword(word: Codeword, book: Codebook, alphabet: PhaseAlphabet | None = None) -> int:
    """Phase index of a codeword; raises if the word carries no phase."""
    index = book.rank(word)
    if alphabet is not None and index >= alphabet.resolution:
        raise PilotConfigError(f"codeword rank {index} is beyond the phase alphabet")
    return index


@dataclass(frozen=True)
class Sap:
    """Subcarrier activation pattern: the active subset of the training subcarriers."""

    active: tuple[int, ...]


def training_subcarriers(n_fft: int, n_b: int) -> tuple[int, ...]:
    """``n_b`` (near-)equally spaced subcarrier indices out of ``n_fft``."""
    if not 1 <= n_b <= n_fft:
        raise PilotConfigError(f"cannot place {n_b} training subcarriers in {n_fft}")
    return tuple(int(np.floor(i * n_fft / n_b)) for i in range(n_b))


def codeword_to_sap(word: Codeword, psi_b: Sequence[int]) -> Sap:
    if len(psi_b) < word.length:
        raise PilotConfigError(f"{len(psi_b)} subcarriers cannot carry a length-{word.length} word")
    return Sap(tuple(psi_b[i] for i, b in enumerate(word.bits) if b))


def sap_to_codeword(sap: Sap, psi_b: Sequence[int]) -> Codeword:
    active = set(sap.active)
    if not active <= set(psi_b):
        raise PilotConfigError("SAP uses subcarriers outside the training set")
    return Codeword(tuple(int(j in active) for j in psi_b))
