"""Constant-weight ICC-(N_B, s) codes: enumeration, superposition, rate and IEP."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Iterator, Sequence

import numpy as np

# above this length the codebook is served through rank/unrank instead of a list
MATERIALIZE_LIMIT = 28


class CodeError(ValueError):
    pass


@dataclass(frozen=True)
class Codeword:
    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(b not in (0, 1) for b in self.bits):
            raise CodeError("codeword bits must be 0 or 1")

    @classmethod
    def from_string(cls, text: str) -> "Codeword":
        return cls(tuple(int(c) for c in text.strip()))

    @classmethod
    def from_positions(cls, length: int, positions: Sequence[int]) -> "Codeword":
        bits = [0] * length
        for p in positions:
            bits[p] = 1
        return cls(tuple(bits))

    @classmethod
    def from_array(cls, arr) -> "Codeword":
        return cls(tuple(int(b) for b in np.asarray(arr).astype(int)))

    @property
    def weight(self) -> int:
        return sum(self.bits)

    @property
    def length(self) -> int:
        return len(self.bits)

    @property
    def positions(self) -> tuple[int, ...]:
        return tuple(i for i, b in enumerate(self.bits) if b)

    def array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.uint8)

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)


def check_parameters(n_b: int, s: int) -> int:
    """Validate ``(n_b, s)`` and return the constant weight ``(n_b + s) // 2``."""
    if s < 1:
        raise CodeError(f"order must be >= 1, got {s}")
    if n_b < s:
        raise CodeError(f"length {n_b} is smaller than order {s}")
    if (n_b + s) % 2:
        raise CodeError(f"n_b + s must be even, got n_b={n_b}, s={s}")
    return (n_b + s) // 2


def rank_subset_lex(positions: Sequence[int], n: int) -> int:
    """Lexicographic rank of a sorted k-subset of ``{0..n-1}``."""
    k = len(positions)
    rank = 0
    prev = -1
    for i, c in enumerate(positions):
        for skipped in range(prev + 1, c):
            rank += math.comb(n - 1 - skipped, k - 1 - i)
        prev = c
    return rank


def unrank_subset_lex(rank: int, n: int, k: int) -> list[int]:
    """Inverse of :func:`rank_subset_lex`."""
    if not 0 <= rank < math.comb(n, k):
        raise CodeError(f"rank {rank} out of range for C({n},{k})")
    out = []
    c = 0
    for i in range(k):
        while True:
            block = math.comb(n - 1 - c, k - 1 - i)
            if rank < block:
                break
            rank -= block
            c += 1
        out.append(c)
        c += 1
    return out


class Codebook:
    """All weight-w words of length ``length`` in lexicographic order of their 1-positions.

    Books up to ``MATERIALIZE_LIMIT`` keep the word list; longer books answer
    ``word(rank)`` / ``rank(word)`` combinatorially.  ``from_words`` builds an
    arbitrary (possibly invalid) book, used to exercise :func:`verify_icc`.
    """

    def __init__(self, length: int, order: int, words: Sequence[Codeword] | None = None,
                 weight: int | None = None):
        self.length = length
        self.order = order
        self.weight = weight if weight is not None else (length + order) // 2
        self._words = tuple(words) if words is not None else None
        self._index = None

    @classmethod
    def from_words(cls, length: int, order: int, words: Sequence[Codeword]) -> "Codebook":
        return cls(length, order, list(words))

    @property
    def materialized(self) -> bool:
        return self._words is not None

    @property
    def count(self) -> int:
        if self._words is not None:
            return len(self._words)
        return math.comb(self.length, self.weight)

    def __len__(self) -> int:
        return self.count

    @property
    def words(self) -> tuple[Codeword, ...]:
        if self._words is None:
            raise CodeError(f"codebook of length {self.length} is not materialized")
        return self._words

    def word(self, rank: int) -> Codeword:
        if self._words is not None:
            return self._words[rank]
        return Codeword.from_positions(self.length, unrank_subset_lex(rank, self.length, self.weight))

    def rank(self, word: Codeword) -> int:
        if self._words is not None:
            if self._index is None:
                self._index = {w: i for i, w in enumerate(self._words)}
            try:
                return self._index[word]
            except KeyError:
                raise CodeError(f"{word} is not in the codebook") from None
        if word.length != self.length or word.weight != self.weight:
            raise CodeError(f"{word} is not in the codebook")
        return rank_subset_lex(word.positions, self.length)

    def __contains__(self, word: Codeword) -> bool:
        try:
            self.rank(word)
        except CodeError:
            return False
        return True

    def __iter__(self) -> Iterator[Codeword]:
        if self._words is not None:
            return iter(self._words)
        return (Codeword.from_positions(self.length, c)
                for c in combinations(range(self.length), self.weight))

    def matrix(self) -> np.ndarray:
        """Words as rows of a ``(count, length)`` uint8 array."""
        return np.array([w.bits for w in self.words], dtype=np.uint8).reshape(-1, self.length)

    def to_text(self) -> str:
        lines = [f"icc {self.length} {self.order}"]
        lines.extend(str(w) for w in self)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Codebook":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        head = lines[0].split()
        if len(head) != 3 or head[0] != "icc":
            raise CodeError(f"bad codebook header: {lines[0]!r}")
        length, order = int(head[1]), int(head[2])
        words = [Codeword.from_string(ln) for ln in lines[1:]]
        if any(w.length != length for w in words):
            raise CodeError("codeword length does not match header")
        return cls(length, order, words)


def generate_codebook(n_b: int, order: int) -> Codebook:
    weight = check_parameters(n_b, order)
    if n_b > MATERIALIZE_LIMIT:
        return Codebook(n_b, order)
    words = [Codeword.from_positions(n_b, c) for c in combinations(range(n_b), weight)]
    return Codebook(n_b, order, words, weight=weight)


def superpose(x: Codeword, y: Codeword) -> Codeword:
    """Digit-by-digit Boolean sum."""
    if x.length != y.length:
        raise CodeError(f"length mismatch: {x.length} vs {y.length}")
    return Codeword(tuple(a | b for a, b in zip(x.bits, y.bits)))


@dataclass(frozen=True)
class IccCheck:
    ok: bool
    min_overlap: int
    witness: tuple[int, int] | None
    bad_weight: tuple[int, ...] = ()


def verify_icc(book: Codebook, samples: int = 10_000, seed: int = 0) -> IccCheck:
    """Check the pairwise s-overlap property (exhaustively when materialized)."""
    if book.materialized:
        mat = book.matrix().astype(np.int32)
        weights = mat.sum(axis=1)
        bad = tuple(int(i) for i in np.flatnonzero(weights != book.weight))
        if mat.shape[0] < 2:
            return IccCheck(ok=not bad, min_overlap=int(weights.min(initial=book.length)),
                            witness=None, bad_weight=bad)
        overlap = mat @ mat.T
        np.fill_diagonal(overlap, book.length + 1)
        flat = int(np.argmin(overlap))
        i, j = divmod(flat, overlap.shape[1])
        min_ov = int(overlap[i, j])
        ok = min_ov >= book.order and not bad
        witness = None if ok else (min(i, j), max(i, j))
        return IccCheck(ok=ok, min_overlap=min_ov, witness=witness, bad_weight=bad)

    bound = 2 * book.weight - book.length
    rng = np.random.default_rng(seed)
    count = book.count
    min_ov = book.length + 1
    witness = None
    for _ in range(samples):
        i, j = _randint(rng, count), _randint(rng, count)
        if i == j:
            continue
        a, b = book.word(i), book.word(j)
        ov = sum(p & q for p, q in zip(a.bits, b.bits))
        if ov < min_ov:
            min_ov, witness = ov, (min(i, j), max(i, j))
    ok = bound >= book.order and min_ov >= book.order
    return IccCheck(ok=ok, min_overlap=min(min_ov, bound) if ok else min_ov,
                    witness=None if ok else witness)


def _randint(rng: np.random.Generator, upper: int) -> int:
    if upper < 2**62:
        return int(rng.integers(upper))
    nbytes = (upper.bit_length() + 7) // 8 + 8
    return int.from_bytes(rng.bytes(nbytes), "little") % upper


def code_rate(n_b: int, s: int) -> float:
    """``log2(C(n_b, w)) / n_b`` with an exact big-integer binomial."""
    weight = check_parameters(n_b, s)
    count = math.comb(n_b, weight)
    # int.bit_length keeps log2 accurate for binomials beyond float range
    shift = max(count.bit_length() - 64, 0)
    return (math.log2(count >> shift) + shift) / n_b


@dataclass(frozen=True)
class IepReport:
    """Identification error probability of the optimal code (order = taps)."""

    n_b: int
    l: int
    k: int
    p_i_exact: Fraction
    p_i: float
    p_i_dpd: float
    p_i_dpd_exact: Fraction
    cpd: bool = False


def iep_factorial_form(n_b: int, l: int) -> Fraction:
    """Closed form written with factorials: (N! - a!b!) / (2^(N+1) a!b!)."""
    a = (n_b + l) // 2
    b = (n_b - l) // 2
    ab = math.factorial(a) * math.factorial(b)
    return Fraction(math.factorial(n_b) - ab, 2 ** (n_b + 1) * ab)


def theoretical_iep(n_b: int, l: int) -> IepReport:
    weight = check_parameters(n_b, l)
    exact = Fraction(math.comb(n_b, weight) - 1, 2 ** (n_b + 1))
    return IepReport(n_b=n_b, l=l, k=1, p_i_exact=exact, p_i=float(exact),
                     p_i_dpd=float(exact), p_i_dpd_exact=exact)


def dpd_adjust(report: IepReport, k: int) -> IepReport:
    """IEP when the mean AoA is uniform over ``k`` discrete values."""
    if k < 1:
        raise CodeError(f"k must be >= 1, got {k}")
    exact = report.p_i_exact / k
    return IepReport(n_b=report.n_b, l=report.l, k=k, p_i_exact=report.p_i_exact,
                     p_i=report.p_i, p_i_dpd=float(exact), p_i_dpd_exact=exact)


def cpd_adjust(report: IepReport) -> IepReport:
    """IEP under a continuous mean-AoA distribution: exactly zero."""
    return IepReport(n_b=report.n_b, l=report.l, k=0, p_i_exact=report.p_i_exact,
                     p_i=report.p_i, p_i_dpd=0.0, p_i_dpd_exact=Fraction(0), cpd=True)
