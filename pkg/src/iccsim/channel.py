"""One-ring spatial covariance, correlated CIR sampling and DFT/eigen helpers.

DFT convention used everywhere in the package: the frequency response of a
length-L CIR ``h`` on subcarrier ``n`` of an N-point grid is

    H[n] = sum_l exp(-2j*pi*n*l/N) * h[l]

i.e. unnormalized rows of the DFT matrix.  The sqrt(N) factor of
``F_L = sqrt(N) F(:, 1:L)`` cancels against the 1/sqrt(N) of a unitary DFT, so
``DFT_SCALE`` is 1 and pilot amplitudes keep their face value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad_vec
from scipy.linalg import toeplitz

DFT_SCALE = 1.0

# eigenvalues below RANK_REL_THRESHOLD * lambda_max are treated as zero
RANK_REL_THRESHOLD = 1e-6
# PSD repair tolerance (relative to lambda_max)
PSD_REPAIR_TOL = 1e-6
QUAD_ABS_TOL = 1e-10
SECTOR_LIMIT = np.pi / 3


class ChannelModelError(ValueError):
    """Raised for invalid channel parameters or a covariance that cannot be repaired."""


@dataclass(frozen=True)
class OneRingParams:
    """Geometry of a one-ring scattering cluster seen by a ULA.

    Attributes:
        theta: mean angle of arrival in radians.
        delta: angle spread in radians (half-width of the arrival arc).
        spacing: antenna spacing in wavelengths.
        n_antennas: number of receive antennas.
    """

    theta: float
    delta: float
    spacing: float = 0.5
    n_antennas: int = 100

    def __post_init__(self) -> None:
        if not self.delta > 0:
            raise ChannelModelError(f"delta must be positive, got {self.delta}")
        if self.n_antennas < 1:
            raise ChannelModelError(f"n_antennas must be >= 1, got {self.n_antennas}")
        if not self.spacing > 0:
            raise ChannelModelError(f"spacing must be positive, got {self.spacing}")
        if abs(self.theta) > SECTOR_LIMIT + 1e-12:
            raise ChannelModelError(
                f"mean AoA {self.theta:.4f} outside the [-pi/3, pi/3] sector"
            )

    def density_floor(self) -> float:
        """Lower bound of the one-ring angular spectral density on its support.

        The normalized density over spatial frequency is
        ``1 / (2*delta*sqrt(D**2 - x**2))`` which never drops below
        ``1 / (2*delta*D)`` where it is nonzero.
        """
        return 1.0 / (2.0 * self.delta * self.spacing)


@dataclass(frozen=True)
class CovarianceMatrix:
    entries: np.ndarray
    rank: int
    params: OneRingParams | None = None

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class EigenStructure:
    """Retained eigenpairs of a Hermitian PSD matrix, descending order."""

    vectors: np.ndarray
    values: np.ndarray
    pseudo_values: np.ndarray

    @property
    def rank(self) -> int:
        return self.values.size

    def pseudo_inverse(self) -> np.ndarray:
        """``U diag(1/lambda) U^H`` on the retained subspace."""
        return (self.vectors * self.pseudo_values) @ self.vectors.conj().T

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.conj().T


@dataclass(frozen=True)
class ChannelRealization:
    """Per-antenna CIRs of Bob and Ava, shape ``(n_antennas, taps)`` each."""

    bob_cirs: np.ndarray
    ava_cirs: np.ndarray
    pdp: np.ndarray

    @property
    def taps(self) -> int:
        return self.pdp.size

    @property
    def n_antennas(self) -> int:
        return self.bob_cirs.shape[0]


@dataclass(frozen=True)
class DftSubmatrix:
    """Rows ``rows`` of the N x L DFT slice plus Gram and FS-covariance spectra.

    ``gram`` is ``F^T F^*`` (L x L).  ``fs_covariance`` is the per-antenna
    covariance of the frequency-domain channel on these rows,
    ``F diag(pdp) F^H`` (s x s); the receiver uses the latter as R_F because
    its Kronecker product with the spatial covariance matches the
    antenna-major stacking of the FS channel vector.
    """

    n_fft: int
    taps: int
    rows: tuple[int, ...]
    matrix: np.ndarray
    gram: np.ndarray
    gram_eigen: EigenStructure
    fs_covariance: np.ndarray
    fs_eigen: EigenStructure = field(repr=False)

    @property
    def s(self) -> int:
        return len(self.rows)


def _covariance_column(params: OneRingParams) -> np.ndarray:
    lags = np.arange(params.n_antennas)
    scale = 2.0 * np.pi * params.spacing * lags

    def integrand(t: float) -> np.ndarray:
        # substitution alpha = theta + delta*t keeps the tolerance on the mean
        return np.exp(-1j * scale * np.sin(params.theta + params.delta * t))

    col, _ = quad_vec(integrand, -1.0, 1.0, epsabs=QUAD_ABS_TOL, epsrel=0.0, norm="max")
    col = 0.5 * col
    col[0] = 1.0
    return col


def _repair_psd(mat: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eigh(mat)
    lam_max = values[-1]
    if values[0] < -PSD_REPAIR_TOL * max(lam_max, 0.0):
        raise ChannelModelError(
            f"covariance has eigenvalue {values[0]:.3e} beyond repair tolerance"
        )
    if values[0] >= 0:
        return mat
    clipped = np.clip(values, 0.0, None)
    fixed = (vectors * clipped) @ vectors.conj().T
    fixed = 0.5 * (fixed + fixed.conj().T)
    # clipping moves the diagonal by at most the clipped mass; restore unit diagonal
    d = np.sqrt(np.real(np.diag(fixed)))
    return fixed / np.outer(d, d)


def one_ring_covariance(params: OneRingParams) -> CovarianceMatrix:
    """Spatial covariance of a one-ring cluster.

    Entry ``(m, n)`` is the average of ``exp(-2j*pi*D*(m-n)*sin(alpha))`` over
    the arc ``[theta - delta, theta + delta]``.  The matrix is Hermitian
    Toeplitz so only the first column is integrated (adaptive Gauss-Kronrod,
    vectorized over lags).
    """
    col = _covariance_column(params)
    # R[m, n] depends on m - n: first column holds lags 0..N-1, first row their conjugates
    entries = toeplitz(col, np.conj(col))
    entries = _repair_psd(entries)
    values = np.linalg.eigvalsh(entries)
    rank = int(np.count_nonzero(values >= RANK_REL_THRESHOLD * values[-1]))
    return CovarianceMatrix(entries=entries, rank=rank, params=params)


def eigendecompose(
    cov: CovarianceMatrix | np.ndarray,
    rel_threshold: float = RANK_REL_THRESHOLD,
    abs_threshold: float | None = None,
) -> EigenStructure:
    """Eigenpairs above ``rel_threshold * lambda_max`` (and ``abs_threshold`` if given)."""
    mat = cov.entries if isinstance(cov, CovarianceMatrix) else np.asarray(cov)
    values, vectors = np.linalg.eigh(mat)
    values = values[::-1]
    vectors = vectors[:, ::-1]
    cut = rel_threshold * values[0]
    if abs_threshold is not None:
        cut = max(cut, abs_threshold)
    keep = values > cut if values[0] > 0 else np.zeros(values.size, dtype=bool)
    kept = values[keep]
    return EigenStructure(
        vectors=vectors[:, keep],
        values=kept,
        pseudo_values=1.0 / kept,
    )


def matrix_sqrt(cov: CovarianceMatrix | np.ndarray) -> np.ndarray:
    """Hermitian square root of a PSD matrix."""
    mat = cov.entries if isinstance(cov, CovarianceMatrix) else np.asarray(cov)
    values, vectors = np.linalg.eigh(mat)
    if values[0] < -PSD_REPAIR_TOL * max(values[-1], 0.0):
        raise ChannelModelError("matrix is not PSD within tolerance")
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.conj().T


def uniform_pdp(taps: int) -> np.ndarray:
    if taps < 1:
        raise ChannelModelError(f"taps must be >= 1, got {taps}")
    return np.full(taps, 1.0 / taps)


def _complex_normal(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_cir_from_sqrt(
    sqrt_cov: np.ndarray, pdp: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Draw an ``(n_antennas, taps)`` CIR matrix with per-tap spatial covariance."""
    n_ant = sqrt_cov.shape[0]
    g = _complex_normal(rng, (n_ant, pdp.size))
    return (sqrt_cov @ g) * np.sqrt(pdp)[None, :]


def sample_cir(
    bob: OneRingParams | CovarianceMatrix,
    ava: OneRingParams | CovarianceMatrix,
    taps: int,
    seed: int | np.random.SeedSequence | np.random.Generator | None = None,
) -> ChannelRealization:
    """Independent correlated-Rayleigh CIRs for Bob and Ava with a uniform PDP."""
    pdp = uniform_pdp(taps)
    covs = [one_ring_covariance(p) if isinstance(p, OneRingParams) else p for p in (bob, ava)]
    if covs[0].n != covs[1].n:
        raise ChannelModelError("Bob and Ava must see the same array")
    rng = np.random.default_rng(seed)
    bob_rng, ava_rng = rng.spawn(2)
    return ChannelRealization(
        bob_cirs=sample_cir_from_sqrt(matrix_sqrt(covs[0]), pdp, bob_rng),
        ava_cirs=sample_cir_from_sqrt(matrix_sqrt(covs[1]), pdp, ava_rng),
        pdp=pdp,
    )


def dft_rows(n_fft: int, taps: int, rows) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.int64)
    return DFT_SCALE * np.exp(-2j * np.pi * np.outer(rows, np.arange(taps)) / n_fft)


def dft_submatrix(n_fft: int, taps: int, rows, pdp: np.ndarray | None = None) -> DftSubmatrix:
    rows = tuple(int(r) for r in rows)
    if len(set(rows)) != len(rows):
        raise ChannelModelError(f"duplicate subcarrier indices in {rows}")
    if any(r < 0 or r >= n_fft for r in rows):
        raise ChannelModelError(f"subcarrier indices must lie in [0, {n_fft})")
    if pdp is None:
        pdp = uniform_pdp(taps)
    mat = dft_rows(n_fft, taps, rows)
    gram = mat.T @ mat.conj()
    fs_cov = (mat * pdp[None, :]) @ mat.conj().T
    return DftSubmatrix(
        n_fft=n_fft,
        taps=taps,
        rows=rows,
        matrix=mat,
        gram=gram,
        gram_eigen=eigendecompose(gram),
        fs_covariance=fs_cov,
        fs_eigen=eigendecompose(fs_cov),
    )


@dataclass(frozen=True)
class OverlapReport:
    a_estimate: int
    rho1_estimate: int
    disjoint: bool


def _support_bins(params: OneRingParams) -> np.ndarray:
    """Boolean mask over spatial-frequency bins n/N_T (wrapped to [-1/2, 1/2))."""
    n = params.n_antennas
    lo = params.spacing * np.sin(params.theta - params.delta)
    hi = params.spacing * np.sin(params.theta + params.delta)
    x = np.arange(n) / n
    x = np.where(x >= 0.5, x - 1.0, x)
    if hi - lo >= 1.0:
        return np.ones(n, dtype=bool)
    # membership in the arc [lo, hi] taken modulo 1
    return np.mod(x - lo, 1.0) <= (hi - lo)


def support_overlap(bob: OneRingParams, ava: OneRingParams) -> OverlapReport:
    """Discretized overlap of the two clusters' spatial-frequency supports."""
    if (bob.delta, bob.spacing, bob.n_antennas) != (ava.delta, ava.spacing, ava.n_antennas):
        raise ChannelModelError("support_overlap needs matching delta, spacing and array size")
    s1 = _support_bins(bob)
    s2 = _support_bins(ava)
    a = int(np.count_nonzero(s1 & s2))
    return OverlapReport(a_estimate=a, rho1_estimate=int(np.count_nonzero(s1)), disjoint=a == 0)
