"""Alice's side: SAP detection, codeword separation and identification,
LMMSE estimation on overlapped subcarriers and the Δf identification rule.

Layout constant: FS channel vectors are stacked antenna-major, entry
``i * s + j`` holding antenna ``i`` on overlapped subcarrier ``j``.  With that
order the decision matrix is ``R̄₁ ⊗ R̄_F`` and ``r (A ⊗ B) r^H`` equals
``sum(conj(M) * (A @ M @ B.T))`` for ``M = r.reshape(n_antennas, s)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import chi2

from .airlink import ReceivedGrid
from .channel import (
    CovarianceMatrix,
    DftSubmatrix,
    EigenStructure,
    dft_rows,
    dft_submatrix,
    eigendecompose,
)
from .code import Codebook, Codeword

log = logging.getLogger(__name__)

DETECTION_SYMBOLS = 3
# retained decision eigenvalues must exceed this fraction of the density floor
DECISION_FLOOR_FRACTION = 0.5
# relative Δf tie band, multiplied by L * rho1
TIE_TOLERANCE = 1e-3
# the second eigenvalue of Y Y^H must clear this multiple of the noise-only edge
TWO_SOURCE_MARGIN = 2.0
RIDGE = 1e-10

CLASSES = ("idle", "bob_only", "other_only", "both")


class ReceiverError(ValueError):
    pass


@dataclass(frozen=True)
class DetectorConfig:
    noise_var: float
    n_antennas: int
    target_pf: float = 1e-3
    symbols_used: int = DETECTION_SYMBOLS

    def __post_init__(self) -> None:
        if not 0.0 < self.target_pf < 1.0:
            raise ReceiverError("target_pf must lie in (0, 1)")
        if not self.noise_var > 0:
            raise ReceiverError("noise_var must be positive")

    @property
    def threshold(self) -> float:
        return detection_threshold(self.n_antennas, self.target_pf, self.symbols_used)


def detection_threshold(n_antennas: int, target_pf: float, symbols: int = DETECTION_SYMBOLS) -> float:
    """Normalized energy threshold: the (1 - pf) quantile of chi2(2 S N_T) / (2 S N_T)."""
    dof = 2 * symbols * n_antennas
    return float(chi2.isf(target_pf, dof) / dof)


def energy_statistic(grid: ReceivedGrid, symbols: int = DETECTION_SYMBOLS) -> np.ndarray:
    y = grid.samples[:symbols][:, list(grid.psi_b), :]
    return np.sum(np.abs(y) ** 2, axis=(0, 2)) / (symbols * grid.n_antennas * grid.noise_var)


def detect_sap(grid: ReceivedGrid, config: DetectorConfig) -> np.ndarray:
    """Binary occupancy of each training subcarrier."""
    if grid.symbols < config.symbols_used:
        raise ReceiverError(f"detection needs {config.symbols_used} symbols, grid has {grid.symbols}")
    stat = energy_statistic(grid, config.symbols_used)
    return (stat > config.threshold).astype(np.uint8)


@dataclass(frozen=True)
class SeparationResult:
    observed: Codeword
    candidate_bob: Codeword
    candidate_other: Codeword
    per_subcarrier_class: tuple[str, ...]
    weight: int

    @property
    def word_bob(self) -> Codeword | None:
        return self.candidate_bob if self.candidate_bob.weight == self.weight else None

    @property
    def word_other(self) -> Codeword | None:
        return self.candidate_other if self.candidate_other.weight == self.weight else None

    def indices(self, *classes: str) -> np.ndarray:
        return np.array([j for j, c in enumerate(self.per_subcarrier_class) if c in classes], dtype=int)


def differential(y: np.ndarray) -> np.ndarray:
    """Normalized inner products ``d_k`` of symbols k+1 and k, ``y`` shaped (symbols, antennas)."""
    num = np.sum(y[1:] * np.conj(y[:-1]), axis=1)
    den = np.sum(np.abs(y[:-1]) ** 2, axis=1)
    return num / den


def two_source_edge(n_antennas: int, symbols: int, noise_var: float) -> float:
    """Threshold on the second eigenvalue of ``Y Y^H`` for two superposed transmitters."""
    return TWO_SOURCE_MARGIN * noise_var * (np.sqrt(n_antennas) + np.sqrt(symbols)) ** 2


def _wrap(angle):
    return np.angle(np.exp(1j * np.asarray(angle)))


def separate_codewords(
    grid: ReceivedGrid,
    observed,
    phi_bar: float,
    book: Codebook,
    phase_tol: float | None = None,
    symbols: int = DETECTION_SYMBOLS,
    resolution: int | None = None,
) -> SeparationResult:
    """Split the superposed SAP into Bob's and the other transmitter's codewords.

    A subcarrier whose symbol matrix has a significant second singular value
    carries two transmitters ("both").  Otherwise its differential phases
    decide: every consecutive step within ``phase_tol`` of Bob's public step
    ``phi_bar`` means bob_only, anything else other_only.  ``phase_tol`` defaults to half a
    step of a circle quantized to ``resolution`` points (``book.count``
    when not given).
    """
    observed = observed if isinstance(observed, Codeword) else Codeword.from_array(observed)
    if phase_tol is None:
        phase_tol = np.pi / (resolution or book.count)
    symbols = min(symbols, grid.symbols)
    edge = two_source_edge(grid.n_antennas, symbols, grid.noise_var)
    classes = []
    for j, bit in enumerate(observed.bits):
        if not bit:
            classes.append("idle")
            continue
        y = grid.samples[:symbols, grid.psi_b[j], :]
        second = np.linalg.eigvalsh(y @ y.conj().T)[-2] if symbols >= 3 else 0.0
        if second > edge:
            classes.append("both")
        elif np.all(np.abs(_wrap(np.angle(differential(y)) - phi_bar)) < phase_tol):
            classes.append("bob_only")
        else:
            classes.append("other_only")
    bob = Codeword(tuple(int(c in ("bob_only", "both")) for c in classes))
    other = Codeword(tuple(int(c in ("other_only", "both")) for c in classes))
    return SeparationResult(observed=observed, candidate_bob=bob, candidate_other=other,
                            per_subcarrier_class=tuple(classes), weight=book.weight)


@dataclass(frozen=True)
class IdentificationOutcome:
    """``chosen`` is "H0" when the phase-matched candidate is Bob's, "H1" otherwise."""

    status: str
    delta_f: float | None = None
    chosen: str | None = None
    iep_event: bool = False
    word: Codeword | None = None


def _qualifies(word: Codeword, book: Codebook) -> bool:
    return word.weight == book.weight and word in book


def identify(sep: SeparationResult, book: Codebook) -> IdentificationOutcome:
    bob_ok = _qualifies(sep.candidate_bob, book)
    other_ok = _qualifies(sep.candidate_other, book)
    if bob_ok and sep.candidate_other.weight == 0:
        return IdentificationOutcome(status="no_attack", chosen="H0", word=sep.candidate_bob)
    if bob_ok and other_ok:
        if sep.candidate_bob == sep.candidate_other:
            return IdentificationOutcome(status="identified", chosen="H0", word=sep.candidate_bob)
        return IdentificationOutcome(status="ambiguous")
    if bob_ok:
        return IdentificationOutcome(status="identified", chosen="H0", word=sep.candidate_bob)
    if other_ok:
        return IdentificationOutcome(status="identified", chosen="H1", word=sep.candidate_other)
    return IdentificationOutcome(status="error")


def estimate_pilots(grid: ReceivedGrid, subcarriers, symbols=(0, 1)) -> np.ndarray:
    """Pilot amplitude and per-symbol phase steps seen on subcarriers used by one transmitter only.

    The absolute phase is unobservable without the channel, so the first
    symbol is taken as real; this common rotation does not change Δf.
    """
    rows = [grid.psi_b[j] for j in subcarriers]
    if not rows:
        raise ReceiverError("no exclusive subcarriers to estimate a pilot from")
    y = grid.samples[list(symbols)][:, rows, :]
    # |H|^2 has unit mean per FS entry, so received power minus noise is |x|^2
    power = max(np.mean(np.abs(y) ** 2) - grid.noise_var, grid.noise_var)
    steps = np.angle(np.sum(y[1:] * np.conj(y[:-1]), axis=(1, 2)))
    return np.sqrt(power) * np.exp(1j * np.concatenate([[0.0], np.cumsum(steps)]))


@dataclass(frozen=True)
class EstimationResult:
    h_bob_fs: np.ndarray
    h_ava_fs: np.ndarray
    nmse_bob: float | None
    nmse_ava: float | None
    overlap_set: tuple[int, ...]
    n_antennas: int

    @property
    def s(self) -> int:
        return len(self.overlap_set)


def stack_observations(grid: ReceivedGrid, overlap, symbols=(0, 1)) -> np.ndarray:
    """``Y_L``: one row per symbol, antenna-major columns of length N_T * s."""
    rows = [grid.psi_b[j] for j in overlap]
    y = grid.samples[list(symbols)][:, rows, :]  # (symbols, s, N_T)
    return np.transpose(y, (0, 2, 1)).reshape(len(symbols), -1)


def true_fs_channels(grid: ReceivedGrid, overlap) -> tuple[np.ndarray, np.ndarray]:
    if grid.truth is None:
        raise ReceiverError("grid carries no ground truth")
    rows = [grid.psi_b[j] for j in overlap]
    ch = grid.truth.channels
    f = dft_rows(grid.n_fft, ch.taps, rows)
    return (ch.bob_cirs @ f.T).reshape(-1), (ch.ava_cirs @ f.T).reshape(-1)


def population_covariance(x1, x2, noise_var: float, power_bob: float = 1.0,
                          power_ava: float = 1.0) -> np.ndarray:
    """``E[y y^H]`` per FS entry: ``X diag(p_B, p_A) X^H + noise_var I``."""
    x = np.column_stack([np.asarray(x1), np.asarray(x2)])
    return (x * np.array([power_bob, power_ava])) @ x.conj().T + noise_var * np.eye(x.shape[0])


def lmmse_estimate(
    grid: ReceivedGrid,
    x1,
    x2,
    overlap,
    r1: CovarianceMatrix,
    rf: DftSubmatrix | np.ndarray,
    c_y: np.ndarray | None = None,
) -> EstimationResult:
    """Asymptotic LMMSE of Bob's and Ava's FS channels on the overlapped subcarriers.

    Args:
        grid: received grid; the first ``len(x1)`` symbols are used.
        x1, x2: pilot vectors of the two transmitters (length 2 or more).
        overlap: indices into the training set carrying both transmitters.
        r1: spatial covariance known at the receiver.
        rf: FS covariance on ``overlap`` (a DftSubmatrix or the s x s matrix).
        c_y: population symbol covariance; defaults to the sample estimate.

    Returns:
        EstimationResult with NMSEs when the grid carries truth.
    """
    overlap = tuple(int(j) for j in overlap)
    if not overlap:
        raise ReceiverError("LMMSE needs at least one overlapped subcarrier")
    x1 = np.asarray(x1, dtype=complex)
    x2 = np.asarray(x2, dtype=complex)
    if x1.shape != x2.shape or x1.size < 2 or x1.size > grid.symbols:
        raise ReceiverError("pilot vectors must share a length between 2 and the grid depth")
    rf_mat = rf.fs_covariance if isinstance(rf, DftSubmatrix) else np.asarray(rf)
    n_t, s = grid.n_antennas, len(overlap)
    y = stack_observations(grid, overlap, range(x1.size))
    scale = np.real(np.trace(r1.entries)) * np.real(np.trace(rf_mat)) / (n_t * s)
    if c_y is None:
        c_y = y @ y.conj().T / (n_t * s)
        if np.linalg.cond(c_y) > 1.0 / RIDGE:
            log.info("sample covariance is singular; adding ridge")
            c_y = c_y + RIDGE * np.real(np.trace(c_y)) * np.eye(c_y.shape[0])
    c_inv = np.linalg.inv(c_y)
    h_b = scale * (x1.conj() @ c_inv) @ y
    h_a = scale * (x2.conj() @ c_inv) @ y
    nmse_b = nmse_a = None
    if grid.truth is not None:
        t_b, t_a = true_fs_channels(grid, overlap)
        nmse_b = float(np.sum(np.abs(h_b - t_b) ** 2) / (n_t * s))
        nmse_a = float(np.sum(np.abs(h_a - t_a) ** 2) / (n_t * s))
    return EstimationResult(h_bob_fs=h_b, h_ava_fs=h_a, nmse_bob=nmse_b, nmse_ava=nmse_a,
                            overlap_set=overlap, n_antennas=n_t)


def fs_to_cir(h_fs: np.ndarray, n_antennas: int, f_sub: np.ndarray) -> np.ndarray:
    """Map antenna-major FS vectors back to ``(n_antennas, taps)`` CIRs via pinv(F)."""
    m = h_fs.reshape(n_antennas, -1)
    return m @ np.linalg.pinv(f_sub).T


def decision_eigen(cov: CovarianceMatrix) -> EigenStructure:
    """Eigen-structure behind R̄₁ in Δf.

    Eigenvalues of a one-ring covariance follow its angular density, which
    never drops below ``1 / (2 delta D)`` on the support; only the tail below
    a fraction of that floor is discarded.  Without geometry the generic
    relative threshold is used.
    """
    if cov.params is None:
        return eigendecompose(cov)
    return eigendecompose(cov, abs_threshold=DECISION_FLOOR_FRACTION * cov.params.density_floor())


def quadratic_form(r: np.ndarray, a: EigenStructure | np.ndarray, b: EigenStructure | np.ndarray) -> float:
    """``r^H (A ⊗ B) r`` for antenna-major ``r``, applied factor by factor."""
    a_mat = a.pseudo_inverse() if isinstance(a, EigenStructure) else a
    b_mat = b.pseudo_inverse() if isinstance(b, EigenStructure) else b
    m = np.asarray(r).reshape(a_mat.shape[0], b_mat.shape[0])
    return float(np.real(np.sum(np.conj(m) * (a_mat @ m @ b_mat.T))))


def delta_f(est: EstimationResult, r1_eigen: EigenStructure, rf_eigen: EigenStructure) -> float:
    a = r1_eigen.pseudo_inverse()
    b = rf_eigen.pseudo_inverse()
    return quadratic_form(est.h_bob_fs, a, b) - quadratic_form(est.h_ava_fs, a, b)


def asymptotic_delta_f(r1: CovarianceMatrix, r2: CovarianceMatrix, taps: int,
                       r1_eigen: EigenStructure | None = None) -> float:
    """Large-array limit ``L (rho1 - Tr(R2 R̄1))``."""
    eig = decision_eigen(r1) if r1_eigen is None else r1_eigen
    # Tr(R2 U Λ⁻¹ U^H) = sum_k (u_k^H R2 u_k) / λ_k
    proj = np.real(np.einsum("ik,ij,jk->k", eig.vectors.conj(), r2.entries, eig.vectors))
    return float(taps * (eig.rank - np.sum(proj * eig.pseudo_values)))


def default_tolerance(taps: int, rho1: int) -> float:
    return TIE_TOLERANCE * taps * rho1


def enhance_identification(outcome: IdentificationOutcome, delta: float, tol: float,
                           sep: SeparationResult | None = None) -> IdentificationOutcome:
    if outcome.status != "ambiguous":
        raise ReceiverError(f"enhancement applies to ambiguous outcomes, got {outcome.status}")
    if delta > tol:
        word = sep.candidate_bob if sep is not None else None
        return replace(outcome, status="identified", delta_f=delta, chosen="H0", word=word)
    if delta < -tol:
        word = sep.candidate_other if sep is not None else None
        return replace(outcome, status="identified", delta_f=delta, chosen="H1", word=word)
    return replace(outcome, status="error", delta_f=delta, chosen=None, iep_event=True)


@dataclass(frozen=True)
class TrialResult:
    outcome: IdentificationOutcome
    separation: SeparationResult
    estimation: EstimationResult | None

    @property
    def iep_event(self) -> bool:
        return self.outcome.iep_event


def process_grid(
    grid: ReceivedGrid,
    book: Codebook,
    phi_bar: float,
    r1: CovarianceMatrix,
    taps: int,
    detector: DetectorConfig,
    r1_eigen: EigenStructure | None = None,
    tol: float | None = None,
    phase_tol: float | None = None,
    resolution: int | None = None,
) -> TrialResult:
    """Detection, separation, identification and, when ambiguous, Δf enhancement."""
    observed = detect_sap(grid, detector)
    sep = separate_codewords(grid, observed, phi_bar, book, phase_tol=phase_tol,
                             resolution=resolution)
    outcome = identify(sep, book)
    if outcome.status != "ambiguous":
        return TrialResult(outcome=outcome, separation=sep, estimation=None)
    both = sep.indices("both")
    only_bob = sep.indices("bob_only")
    only_other = sep.indices("other_only")
    if both.size == 0 or only_bob.size == 0 or only_other.size == 0:
        return TrialResult(outcome=replace(outcome, status="error"), separation=sep, estimation=None)
    used = tuple(range(min(grid.symbols, detector.symbols_used)))
    x1 = estimate_pilots(grid, only_bob, used)
    x2 = estimate_pilots(grid, only_other, used)
    sub = dft_submatrix(grid.n_fft, taps, [grid.psi_b[j] for j in both])
    est = lmmse_estimate(grid, x1, x2, both, r1, sub)
    eig = decision_eigen(r1) if r1_eigen is None else r1_eigen
    delta = delta_f(est, eig, sub.fs_eigen)
    if tol is None:
        tol = default_tolerance(taps, eig.rank)
    return TrialResult(outcome=enhance_identification(outcome, delta, tol, sep), separation=sep,
                       estimation=est)

