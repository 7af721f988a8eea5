"""Seeded Monte Carlo experiments and their CSV result tables."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import metadata

import numpy as np
from scipy.stats import beta

from .airlink import AttackerConfig, ls_baseline_estimate, transmit
from .channel import (
    ChannelRealization,
    CovarianceMatrix,
    EigenStructure,
    OneRingParams,
    dft_submatrix,
    matrix_sqrt,
    one_ring_covariance,
    sample_cir_from_sqrt,
    uniform_pdp,
)
from .code import Codebook, Codeword, cpd_adjust, dpd_adjust, generate_codebook, theoretical_iep
from .config import ConfigError, ExperimentConfig, SystemConfig, parse_config, to_ini
from .pilots import (
    PhaseAlphabet,
    Sap,
    build_schedule,
    codeword_to_sap,
    map_phase_to_codeword,
    training_subcarriers,
)
from .receiver import (
    DetectorConfig,
    TrialResult,
    asymptotic_delta_f,
    decision_eigen,
    default_tolerance,
    fs_to_cir,
    lmmse_estimate,
    population_covariance,
    process_grid,
)

log = logging.getLogger(__name__)

# Monte Carlo IEP draws are generated in blocks of this many trials
MC_BLOCK = 100_000
# stream tags separating pilot draws (shared across array sizes) from channel/noise draws
PILOT_STREAM, CHANNEL_STREAM = 0, 1


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def trial_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent stream for ``(seed, *keys)``, unaffected by execution order."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *keys])))


def parallel_map(fn, items, threads: int = 1) -> list:
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class ResultRow:
    coords: tuple
    metric: str
    value: float
    stderr: float
    trials: int


@dataclass
class ResultTable:
    coord_names: tuple[str, ...]
    config: ExperimentConfig
    rows: list[ResultRow] = field(default_factory=list)

    def add(self, coords, metric: str, value: float, stderr: float = 0.0, trials: int = 0) -> None:
        self.rows.append(ResultRow(tuple(coords), metric, float(value), float(stderr), int(trials)))

    def lookup(self, metric: str, **coords) -> ResultRow:
        for row in self.rows:
            if row.metric != metric:
                continue
            named = dict(zip(self.coord_names, row.coords))
            if all(math.isclose(named[k], v, rel_tol=0, abs_tol=1e-12) for k, v in coords.items()):
                return row
        raise KeyError(f"no {metric} row at {coords}")

    def select(self, metric: str) -> list[ResultRow]:
        return [r for r in self.rows if r.metric == metric]

    def metadata_lines(self) -> list[str]:
        meta = f"[meta]\nversion = {code_version()}\n" + to_ini(self.config)
        return [f"# {line}" if line else "#" for line in meta.splitlines()]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for line in self.metadata_lines():
            buf.write(line + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([*self.coord_names, "metric", "value", "stderr", "trials"])
        for row in self.rows:
            writer.writerow([*(_fmt(c) for c in row.coords), row.metric, _fmt(row.value),
                             _fmt(row.stderr), row.trials])
        return buf.getvalue()

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def parse_metadata(csv_text: str) -> ExperimentConfig:
    """Recover the experiment config from a result CSV's ``#`` block."""
    lines = []
    for line in csv_text.splitlines():
        if not line.startswith("#"):
            break
        lines.append(line[2:] if line.startswith("# ") else line[1:])
    return parse_config("\n".join(lines))


def _mean_stderr(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    if arr.size == 1:
        return float(arr[0]), float("nan")
    return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(arr.size))


def _rate(flags) -> tuple[float, float]:
    arr = np.asarray(flags, dtype=float)
    p = float(arr.mean()) if arr.size else float("nan")
    return p, float(np.sqrt(p * (1 - p) / arr.size)) if arr.size else float("nan")


def upper_bound95(events: int, trials: int) -> float:
    """One-sided 95% Clopper-Pearson upper bound on a binomial rate."""
    if events >= trials:
        return 1.0
    return float(beta.ppf(0.95, events + 1, trials - events))


@dataclass(frozen=True)
class CovariancePack:
    cov: CovarianceMatrix
    sqrt: np.ndarray
    eigen: EigenStructure


@lru_cache(maxsize=64)
def covariance_pack(theta: float, delta: float, spacing: float, n_antennas: int) -> CovariancePack:
    cov = one_ring_covariance(OneRingParams(theta, delta, spacing, n_antennas))
    return CovariancePack(cov=cov, sqrt=matrix_sqrt(cov), eigen=decision_eigen(cov))


def _pack(sc: SystemConfig, theta: float, n_antennas: int | None = None) -> CovariancePack:
    return covariance_pack(float(theta), sc.delta, sc.spacing, n_antennas or sc.n_antennas)


@dataclass(frozen=True)
class Link:
    """Everything a trial of the full identification pipeline needs."""

    scenario: SystemConfig
    book: Codebook
    psi: tuple[int, ...]
    alphabet: PhaseAlphabet
    detector: DetectorConfig
    attacker: AttackerConfig

    @classmethod
    def build(cls, cfg: ExperimentConfig) -> "Link":
        sc = cfg.scenario
        return cls(
            scenario=sc,
            book=generate_codebook(sc.n_b, sc.taps),
            psi=training_subcarriers(sc.n_fft, sc.n_b),
            alphabet=PhaseAlphabet(sc.phase_resolution),
            detector=DetectorConfig(noise_var=sc.noise_var, n_antennas=sc.n_antennas,
                                    target_pf=sc.target_pf),
            attacker=cfg.attacker.build(sc),
        )


@dataclass(frozen=True)
class TrialStats:
    status: str
    iep_event: bool
    misidentified: bool
    ambiguous: bool
    delta_f: float | None


def _channels(bob: CovariancePack, ava: CovariancePack, taps: int,
              rng: np.random.Generator) -> ChannelRealization:
    pdp = uniform_pdp(taps)
    return ChannelRealization(bob_cirs=sample_cir_from_sqrt(bob.sqrt, pdp, rng),
                              ava_cirs=sample_cir_from_sqrt(ava.sqrt, pdp, rng), pdp=pdp)


def run_link_trial(link: Link, bob: CovariancePack, ava: CovariancePack,
                   rng: np.random.Generator) -> TrialStats:
    """One transmit -> detect -> separate -> identify -> enhance pass."""
    sc = link.scenario
    index = int(rng.integers(link.alphabet.resolution))
    word = map_phase_to_codeword(index, link.book, link.alphabet)
    schedule = build_schedule(link.alphabet, initial_index=index, phase_step=sc.phi_bar,
                              symbols=sc.symbols)
    channels = _channels(bob, ava, sc.taps, rng)
    grid = transmit(schedule.pilots(), codeword_to_sap(word, link.psi), link.attacker, channels,
                    sc.n_fft, sc.noise_var, link.psi, seed=rng, book=link.book, bob_word=word)
    result: TrialResult = process_grid(grid, link.book, sc.phi_bar, bob.cov, sc.taps, link.detector,
                                       r1_eigen=bob.eigen, resolution=link.alphabet.resolution)
    out = result.outcome
    return TrialStats(
        status=out.status,
        iep_event=out.iep_event,
        misidentified=out.word is not None and out.word != word,
        ambiguous=out.delta_f is not None,
        delta_f=out.delta_f,
    )


def run_deltaf_sweep(cfg: ExperimentConfig) -> ResultTable:
    """Asymptotic and sampled Δf over every ordered pair of the AoA grid."""
    sc = cfg.scenario
    link = Link.build(cfg)
    thetas = cfg.sweep.theta_grid
    table = ResultTable(("theta_bob", "theta_ava"), cfg)
    for i1, t1 in enumerate(thetas):
        bob = _pack(sc, t1)
        tol = default_tolerance(sc.taps, bob.eigen.rank)
        for i2, t2 in enumerate(thetas):
            ava = _pack(sc, t2)
            point = i1 * len(thetas) + i2
            asym = asymptotic_delta_f(bob.cov, ava.cov, sc.taps, bob.eigen)
            stats = parallel_map(lambda t: run_link_trial(link, bob, ava, trial_rng(cfg.seed, point, t)),
                                 range(cfg.trials), cfg.run.threads)
            coords = (t1, t2)
            table.add(coords, "asymptotic_delta_f", asym)
            table.add(coords, "tie_tolerance", tol)
            deltas = [s.delta_f for s in stats if s.ambiguous]
            mean, err = _mean_stderr(deltas)
            table.add(coords, "delta_f_mean", mean, err, len(deltas))
            if abs(asym) > tol and deltas:
                agree, agree_err = _rate([np.sign(d) == np.sign(asym) for d in deltas])
            else:
                agree, agree_err = float("nan"), float("nan")
            table.add(coords, "sign_agreement", agree, agree_err, len(deltas))
            for metric, flags in (("ambiguous_rate", [s.ambiguous for s in stats]),
                                  ("iep_event_rate", [s.iep_event for s in stats]),
                                  ("misidentification_rate", [s.misidentified for s in stats])):
                value, err = _rate(flags)
                table.add(coords, metric, value, err, len(stats))
    return table


def _popcount(values: np.ndarray) -> np.ndarray:
    as_bytes = values.astype("<u8").view(np.uint8).reshape(-1, 8)
    return np.unpackbits(as_bytes, axis=1).sum(axis=1)


def confusion_montecarlo(n_b: int, taps: int, k: int, trials: int, seed: int, point: int) -> int:
    """Count identification errors with a uniformly random attacker pattern.

    A pattern that is a codeword other than Bob's confuses the receiver, which
    then guesses with a fair coin; the guess only fails to be resolved by
    geometry when both mean AoAs coincide on the ``k``-point grid.
    """
    book = generate_codebook(n_b, taps)
    masks = book.matrix().astype(np.uint64) @ (np.uint64(1) << np.arange(n_b, dtype=np.uint64))
    errors = 0
    for block, start in enumerate(range(0, trials, MC_BLOCK)):
        size = min(MC_BLOCK, trials - start)
        rng = trial_rng(seed, point, block)
        bob = masks[rng.integers(masks.size, size=size)]
        ava = rng.integers(0, 2**n_b, size=size, dtype=np.uint64)
        confused = (_popcount(ava) == book.weight) & (ava != bob)
        coin = rng.random(size) < 0.5
        same_aoa = rng.integers(k, size=size) == rng.integers(k, size=size)
        errors += int(np.count_nonzero(confused & coin & same_aoa))
    return errors


def run_iep_curve(cfg: ExperimentConfig) -> ResultTable:
    sc, sw = cfg.scenario, cfg.sweep
    table = ResultTable(("taps", "k", "n_b"), cfg)
    k_cont = sc.aoa_model == "continuous"
    point = 0
    for taps in sw.taps_list:
        for k in range(sw.k_min, sw.k_max + 1, sw.k_step):
            n_b = 2 * k + 1 + sw.nb_offset
            if n_b < taps or (n_b + taps) % 2:
                log.warning("skipping parity-invalid N_B=%d, L=%d", n_b, taps)
                continue
            base = theoretical_iep(n_b, taps)
            report = cpd_adjust(base) if k_cont else dpd_adjust(base, sc.k_points)
            coords = (taps, k, n_b)
            table.add(coords, "iep_analytic", report.p_i_dpd)
            if n_b <= sw.mc_max_nb and not k_cont:
                errors = confusion_montecarlo(n_b, taps, sc.k_points, sw.mc_trials, cfg.seed, point)
                p = errors / sw.mc_trials
                table.add(coords, "iep_montecarlo", p, math.sqrt(p * (1 - p) / sw.mc_trials), sw.mc_trials)
            point += 1
    return table


def _nmse_trial(cfg: ExperimentConfig, n_antennas: int, snr_index: int, point: int, trial: int):
    sc = cfg.scenario
    nv = 10.0 ** (-cfg.sweep.snr_db_list[snr_index] / 10.0)
    book = generate_codebook(sc.n_b, sc.taps)
    psi = training_subcarriers(sc.n_fft, sc.n_b)
    alphabet = PhaseAlphabet(sc.phase_resolution)
    # pilots, codewords and the attacker's phases repeat across array sizes (common random numbers)
    pilot_seq = np.random.SeedSequence([cfg.seed, PILOT_STREAM, snr_index, trial])
    pilot_child, attack_child = pilot_seq.spawn(2)
    index = int(np.random.default_rng(pilot_child).integers(alphabet.resolution))
    word = map_phase_to_codeword(index, book, alphabet)
    schedule = build_schedule(alphabet, initial_index=index, phase_step=sc.phi_bar, symbols=2)
    rng = trial_rng(cfg.seed, CHANNEL_STREAM, point, trial)
    channels = _channels(_pack(sc, sc.theta_bob, n_antennas), _pack(sc, sc.theta_ava, n_antennas),
                         sc.taps, rng)
    h_b = channels.bob_cirs
    energy = n_antennas * float(np.sum(channels.pdp))

    # randomized-pilot scheme: Ava copies the SAP but not the secret phase
    spoof = AttackerConfig(mode="PTJ_PB", sap_strategy="mimic_bob", power=cfg.attacker.build(sc).power,
                           phase_resolution=cfg.attacker.phase_resolution or sc.phase_resolution)
    grid = transmit(schedule.pilots(), codeword_to_sap(word, psi), spoof, channels, sc.n_fft, nv, psi,
                    seed=attack_child, book=book)
    overlap = [j for j, b in enumerate(word.bits) if b]
    if len(overlap) < sc.taps:
        raise ConfigError("overlap smaller than the channel length; CIR is not identifiable")
    sub = dft_submatrix(sc.n_fft, sc.taps, [psi[j] for j in overlap])
    x1 = grid.truth.bob_pilots[:2, psi[overlap[0]]]
    x2 = grid.truth.ava_pilots[:2, psi[overlap[0]]]
    bob_cov = _pack(sc, sc.theta_bob, n_antennas).cov
    est = lmmse_estimate(grid, x1, x2, overlap, bob_cov, sub)
    ideal = lmmse_estimate(grid, x1, x2, overlap, bob_cov, sub,
                           c_y=population_covariance(x1, x2, nv, 1.0, spoof.effective_power))
    lmmse_cir = fs_to_cir(est.h_bob_fs, n_antennas, sub.matrix)
    ideal_cir = fs_to_cir(ideal.h_bob_fs, n_antennas, sub.matrix)

    # conventional scheme: fixed public pilot on every training subcarrier
    ones = np.ones(2, dtype=complex)
    full = Sap(tuple(psi))
    conv_seed = np.random.SeedSequence([cfg.seed, CHANNEL_STREAM + 1, point, trial])
    pts = transmit(ones, full, AttackerConfig(mode="PTS", power=1.0), channels, sc.n_fft, nv, psi,
                   seed=conv_seed)
    clean = transmit(ones, full, AttackerConfig(mode="SC"), channels, sc.n_fft, nv, psi, seed=conv_seed)
    ls_pts = ls_baseline_estimate(pts, ones, sc.taps)
    ls_clean = ls_baseline_estimate(clean, ones, sc.taps)

    def err(h):
        return float(np.sum(np.abs(h - h_b) ** 2) / energy)

    return {
        "nmse_ls_pts": err(ls_pts),
        "nmse_ls_no_attack": err(ls_clean),
        "nmse_lmmse": err(lmmse_cir),
        "nmse_perfect_mmse": err(ideal_cir),
        "nmse_lmmse_fs_bob": est.nmse_bob,
        "nmse_lmmse_fs_ava": est.nmse_ava,
    }


def run_nmse_curve(cfg: ExperimentConfig) -> ResultTable:
    """CIR-domain NMSE of LS (conventional pilots), LMMSE and perfect MMSE under spoofing."""
    sw = cfg.sweep
    table = ResultTable(("n_antennas", "snr_db"), cfg)
    for a, n_t in enumerate(sw.n_antennas_list):
        for b, snr in enumerate(sw.snr_db_list):
            point = a * len(sw.snr_db_list) + b
            trials = parallel_map(lambda t: _nmse_trial(cfg, n_t, b, point, t), range(cfg.trials),
                                  cfg.run.threads)
            for metric in trials[0]:
                mean, err = _mean_stderr([t[metric] for t in trials])
                table.add((n_t, snr), metric, mean, err, cfg.trials)
    return table


def _draw_aoa(sc: SystemConfig, rng: np.random.Generator) -> float:
    if sc.aoa_model == "discrete":
        grid = sc.aoa_grid()
        return grid[int(rng.integers(len(grid)))]
    return float(rng.uniform(sc.aoa_low, sc.aoa_high))


def run_iep_montecarlo(cfg: ExperimentConfig) -> ResultTable:
    """End-to-end identification error rate with mean AoAs drawn per trial."""
    sc = cfg.scenario
    if sc.n_b > 12:
        raise ConfigError("end-to-end IEP runs need n_b <= 12")
    link = Link.build(cfg)

    def one(t: int) -> TrialStats:
        rng = trial_rng(cfg.seed, 0, t)
        bob = _pack(sc, _draw_aoa(sc, rng))
        ava = _pack(sc, _draw_aoa(sc, rng))
        return run_link_trial(link, bob, ava, rng)

    if sc.aoa_model == "continuous":
        covariance_pack.cache_clear()
    stats = parallel_map(one, range(cfg.trials), cfg.run.threads)
    if sc.aoa_model == "continuous":
        covariance_pack.cache_clear()
    table = ResultTable(("n_b", "taps", "k"), cfg)
    coords = (sc.n_b, sc.taps, 0 if sc.aoa_model == "continuous" else sc.k_points)
    events = sum(s.iep_event for s in stats)
    for metric, flags in (("iep_event_rate", [s.iep_event for s in stats]),
                          ("misidentification_rate", [s.misidentified for s in stats]),
                          ("ambiguous_rate", [s.ambiguous for s in stats]),
                          ("error_rate", [s.status == "error" for s in stats])):
        value, err = _rate(flags)
        table.add(coords, metric, value, err, len(stats))
    table.add(coords, "iep_event_upper95", upper_bound95(events, len(stats)), 0.0, len(stats))
    base = theoretical_iep(sc.n_b, sc.taps)
    theory = cpd_adjust(base) if sc.aoa_model == "continuous" else dpd_adjust(base, sc.k_points)
    table.add(coords, "iep_theory", theory.p_i_dpd)
    return table


RUNNERS = {
    "deltaf_sweep": run_deltaf_sweep,
    "iep_curve": run_iep_curve,
    "nmse_curve": run_nmse_curve,
    "iep_montecarlo": run_iep_montecarlo,
}


def run_experiment(cfg: ExperimentConfig) -> ResultTable:
    return RUNNERS[cfg.experiment](cfg)
