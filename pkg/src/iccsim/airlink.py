"""Frequency-domain received grids for Bob plus one attacker, with AWGN.

Synthesis happens directly per subcarrier: with a cyclic prefix longer than
the channel, IFFT -> circular convolution -> FFT collapses to
``y[k] = diag(x[k]) F_L h + w`` so the time-domain round trip is skipped.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelRealization, dft_rows
from .code import Codebook, Codeword
from .pilots import Sap

MODES = ("PTS", "PTN", "PTJ_WB", "PTJ_PB", "SC")
SAP_STRATEGIES = ("mimic_bob", "random_codebook_word", "arbitrary_random_pattern")

GRID_MAGIC = b"ICCGRID1"
_GRID_HEADER = struct.Struct("<8sIIIId")


class AirlinkError(ValueError):
    pass


@dataclass(frozen=True)
class AttackerConfig:
    """Ava's behaviour.

    ``sap_strategy`` picks Ava's active training subcarriers.  Left as None it
    follows the mode: PTS/PTN occupy Bob's SAP, PTJ_WB the whole training band
    and PTJ_PB a uniformly drawn ``victim_fraction`` of it.  Jamming tones take
    phases uniform on a circle quantized to ``phase_resolution`` points
    (continuous when None), common to all of Ava's subcarriers in a symbol
    unless ``independent_tones`` is set.
    """

    mode: str = "SC"
    power: float = 1.0
    victim_fraction: float = 1.0
    sap_strategy: str | None = None
    genie: bool = False
    phase_resolution: int | None = None
    independent_tones: bool = False

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise AirlinkError(f"unknown attack mode {self.mode!r}")
        if self.sap_strategy is not None and self.sap_strategy not in SAP_STRATEGIES:
            raise AirlinkError(f"unknown SAP strategy {self.sap_strategy!r}")
        if self.mode == "PTN" and not self.genie:
            raise AirlinkError("PTN needs genie access to both channels")
        if self.mode in ("PTS", "PTN") and self.sap_strategy not in (None, "mimic_bob"):
            raise AirlinkError(f"{self.mode} always occupies Bob's SAP")
        if self.mode == "PTJ_WB" and self.sap_strategy not in (None,):
            raise AirlinkError("PTJ_WB jams the whole training band")
        if not 0.0 <= self.victim_fraction <= 1.0:
            raise AirlinkError("victim_fraction must lie in [0, 1]")
        if self.power < 0:
            raise AirlinkError("attacker power must be non-negative")

    @property
    def effective_power(self) -> float:
        return 0.0 if self.mode == "SC" else self.power


@dataclass(frozen=True)
class TrialTruth:
    """Ground truth carried with a grid for scoring only."""

    channels: ChannelRealization
    bob_pilots: np.ndarray
    ava_pilots: np.ndarray
    bob_active: np.ndarray
    ava_active: np.ndarray
    bob_word: Codeword | None = None


@dataclass(frozen=True)
class ReceivedGrid:
    samples: np.ndarray  # (symbols, n_fft, n_antennas)
    noise_var: float
    psi_b: tuple[int, ...]
    truth: TrialTruth | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if not self.noise_var > 0:
            raise AirlinkError("noise variance must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise AirlinkError("grid has non-finite samples")

    @property
    def symbols(self) -> int:
        return self.samples.shape[0]

    @property
    def n_fft(self) -> int:
        return self.samples.shape[1]

    @property
    def n_antennas(self) -> int:
        return self.samples.shape[2]


def frequency_response(cirs: np.ndarray, n_fft: int) -> np.ndarray:
    """``(n_fft, n_antennas)`` per-subcarrier gains of ``(n_antennas, taps)`` CIRs."""
    return dft_rows(n_fft, cirs.shape[1], np.arange(n_fft)) @ cirs.T


def _complex_noise(rng: np.random.Generator, shape, var: float) -> np.ndarray:
    return np.sqrt(var / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def synthesize(pilots, cirs, n_fft: int, noise_var: float, noise_rng: np.random.Generator) -> np.ndarray:
    """Sum of ``diag(x_u[k]) F_L h_u`` over transmitters plus CN(0, noise_var) noise.

    ``pilots`` holds one ``(symbols, n_fft)`` matrix per transmitter and
    ``cirs`` the matching ``(n_antennas, taps)`` CIRs.
    """
    if len(pilots) != len(cirs):
        raise AirlinkError("one CIR per transmitter is required")
    symbols = pilots[0].shape[0]
    n_ant = cirs[0].shape[0]
    out = np.zeros((symbols, n_fft, n_ant), dtype=complex)
    for x, h in zip(pilots, cirs):
        if x.shape != (symbols, n_fft) or h.shape[0] != n_ant:
            raise AirlinkError("pilot/CIR dimensions do not match the grid")
        out += x[:, :, None] * frequency_response(h, n_fft)[None, :, :]
    out += _complex_noise(noise_rng, out.shape, noise_var)
    return out


def _uniform_phases(rng: np.random.Generator, shape, resolution: int | None) -> np.ndarray:
    if resolution is None:
        return rng.uniform(0.0, 2.0 * np.pi, size=shape)
    return 2.0 * np.pi * rng.integers(resolution, size=shape) / resolution


def _ava_active(attacker: AttackerConfig, bob_active: np.ndarray, rng: np.random.Generator,
                book: Codebook | None) -> np.ndarray:
    n_b = bob_active.size
    strategy = attacker.sap_strategy
    if attacker.mode == "SC":
        return np.zeros(n_b, dtype=bool)
    if attacker.mode in ("PTS", "PTN") or strategy == "mimic_bob":
        return bob_active.copy()
    if attacker.mode == "PTJ_WB":
        return np.ones(n_b, dtype=bool)
    if strategy == "random_codebook_word":
        if book is None:
            raise AirlinkError("random_codebook_word needs the codebook")
        return book.word(int(rng.integers(book.count))).array().astype(bool)
    if strategy == "arbitrary_random_pattern":
        return rng.integers(0, 2, size=n_b).astype(bool)
    # PTJ_PB default: uniform victim subset without replacement
    mask = np.zeros(n_b, dtype=bool)
    mask[rng.choice(n_b, size=int(round(attacker.victim_fraction * n_b)), replace=False)] = True
    return mask


def attacker_vector(
    attacker: AttackerConfig,
    bob_pilots: np.ndarray,
    channels: ChannelRealization | None,
    psi_b,
    rng: np.random.Generator,
    book: Codebook | None = None,
    bob_active: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Ava's per-symbol, per-subcarrier transmit values.

    Returns ``(pilots, active)`` with ``pilots`` of shape ``(symbols, n_fft)``
    (every symbol at once) and ``active`` the boolean mask over ``psi_b``.
    """
    psi = np.asarray(psi_b)
    symbols, n_fft = bob_pilots.shape
    if bob_active is None:
        bob_active = np.abs(bob_pilots[0, psi]) > 0
    active = _ava_active(attacker, bob_active, rng, book)
    out = np.zeros((symbols, n_fft), dtype=complex)
    cols = psi[active]
    amp = np.sqrt(attacker.effective_power)
    if attacker.mode == "SC" or cols.size == 0:
        return out, active
    if attacker.mode == "PTS":
        out[:, cols] = bob_pilots[:, cols]
    elif attacker.mode == "PTN":
        if channels is None:
            raise AirlinkError("PTN needs the channel realization")
        # exact null on antenna 0; other antennas keep a residual
        hb = frequency_response(channels.bob_cirs[:1], n_fft)[cols, 0]
        ha = frequency_response(channels.ava_cirs[:1], n_fft)[cols, 0]
        out[:, cols] = -bob_pilots[:, cols] * (hb / ha)[None, :]
    else:
        shape = (symbols, cols.size) if attacker.independent_tones else (symbols, 1)
        phases = _uniform_phases(rng, shape, attacker.phase_resolution)
        out[:, cols] = amp * np.exp(1j * phases)
    return out, active


def bob_pilot_matrix(pilots: np.ndarray, sap: Sap, n_fft: int) -> np.ndarray:
    out = np.zeros((pilots.size, n_fft), dtype=complex)
    out[:, list(sap.active)] = pilots[:, None]
    return out


def _streams(seed) -> tuple[np.random.Generator, np.random.Generator]:
    if isinstance(seed, np.random.Generator):
        a, b = seed.spawn(2)
        return a, b
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    a, b = ss.spawn(2)
    return np.random.default_rng(a), np.random.default_rng(b)


def transmit(
    bob_pilots: np.ndarray,
    bob_sap: Sap,
    attacker: AttackerConfig,
    channels: ChannelRealization,
    n_fft: int,
    noise_var: float,
    psi_b,
    seed=None,
    book: Codebook | None = None,
    bob_word: Codeword | None = None,
) -> ReceivedGrid:
    """Received grid for Bob's pilots on ``bob_sap`` and the configured attacker.

    The attacker and the noise draw from separate child streams of ``seed``,
    so attack modes without randomness leave the noise unchanged.
    """
    psi_b = tuple(int(j) for j in psi_b)
    bob_pilots = np.asarray(bob_pilots, dtype=complex)
    if not set(bob_sap.active) <= set(psi_b):
        raise AirlinkError("Bob's SAP must lie inside the training subcarriers")
    if channels.bob_cirs.shape != channels.ava_cirs.shape:
        raise AirlinkError("Bob and Ava CIR shapes differ")
    attack_rng, noise_rng = _streams(seed)
    xb = bob_pilot_matrix(bob_pilots, bob_sap, n_fft)
    bob_active = np.isin(np.asarray(psi_b), bob_sap.active)
    xa, ava_active = attacker_vector(attacker, xb, channels, psi_b, attack_rng,
                                     book=book, bob_active=bob_active)
    samples = synthesize([xb, xa], [channels.bob_cirs, channels.ava_cirs], n_fft, noise_var, noise_rng)
    truth = TrialTruth(channels=channels, bob_pilots=xb, ava_pilots=xa,
                       bob_active=bob_active, ava_active=ava_active, bob_word=bob_word)
    return ReceivedGrid(samples=samples, noise_var=noise_var, psi_b=psi_b, truth=truth)


def ls_baseline_estimate(grid: ReceivedGrid, assumed_pilot, taps: int,
                         subcarriers=None) -> np.ndarray:
    """Per-antenna LS CIR estimate assuming ``assumed_pilot`` on every training subcarrier.

    ``assumed_pilot`` holds one complex value per symbol; the per-symbol LS
    estimates are averaged.  Returns ``(n_antennas, taps)``.
    """
    rows = np.asarray(grid.psi_b if subcarriers is None else subcarriers)
    if rows.size < taps:
        raise AirlinkError(f"{rows.size} subcarriers cannot resolve {taps} taps")
    x = np.asarray(assumed_pilot, dtype=complex).reshape(-1)
    if np.any(x == 0):
        raise AirlinkError("assumed pilot must be nonzero")
    f_pinv = np.linalg.pinv(dft_rows(grid.n_fft, taps, rows))
    y = grid.samples[: x.size][:, rows, :]  # (symbols, rows, antennas)
    equalized = (np.conj(x) / np.abs(x) ** 2)[:, None, None] * y
    est = np.einsum("lr,kra->kal", f_pinv, equalized)
    return est.mean(axis=0)


def write_grid(path, grid: ReceivedGrid) -> None:
    """Dump samples as little-endian complex64 behind a 32-byte header."""
    symbols, n_fft, n_ant = grid.samples.shape
    header = _GRID_HEADER.pack(GRID_MAGIC, n_fft, n_ant, symbols, 0, float(grid.noise_var))
    with open(Path(path), "wb") as fh:
        fh.write(header)
        fh.write(grid.samples.astype("<c8").tobytes())


def read_grid(path) -> tuple[np.ndarray, float]:
    raw = Path(path).read_bytes()
    magic, n_fft, n_ant, symbols, _, noise_var = _GRID_HEADER.unpack_from(raw)
    if magic != GRID_MAGIC:
        raise AirlinkError("not an ICC grid file")
    data = np.frombuffer(raw, dtype="<c8", offset=_GRID_HEADER.size)
    return data.reshape(symbols, n_fft, n_ant), noise_var
