import math
from fractions import Fraction
from itertools import combinations, product

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iccsim.code import (
    Codebook,
    CodeError,
    Codeword,
    code_rate,
    cpd_adjust,
    dpd_adjust,
    generate_codebook,
    iep_factorial_form,
    rank_subset_lex,
    superpose,
    theoretical_iep,
    unrank_subset_lex,
    verify_icc,
)


def words(text):
    return [Codeword.from_string(t) for t in text.split()]


def brute_force_min_overlap(book):
    return min(sum(a & b for a, b in zip(x.bits, y.bits)) for x, y in combinations(book.words, 2))


def test_book_4_2():
    book = generate_codebook(4, 2)
    assert book.weight == 3 and book.count == 4
    assert list(book.words) == words("1110 1101 1011 0111")
    assert brute_force_min_overlap(book) == 2


def test_degenerate_and_counted_books():
    single = generate_codebook(5, 5)
    assert single.count == 1 and str(single.word(0)) == "11111"
    assert generate_codebook(8, 2).count == 56


@pytest.mark.parametrize("n_b,s", [(5, 2), (3, 4), (0, 0)])
def test_rejects_bad_parameters(n_b, s):
    with pytest.raises(CodeError):
        generate_codebook(n_b, s)


def test_superpose_examples():
    x, y = Codeword((1, 0, 1)), Codeword((0, 0, 1))
    assert superpose(x, y) == Codeword((1, 0, 1))
    assert superpose(x, x) == x
    assert superpose(x, Codeword((0, 0, 0))) == x
    with pytest.raises(CodeError):
        superpose(x, Codeword((1, 0)))


bitvec = st.integers(1, 12).flatmap(
    lambda n: st.tuples(*[st.lists(st.integers(0, 1), min_size=n, max_size=n) for _ in range(3)]))


@given(bitvec)
def test_superpose_algebra(vecs):
    x, y, z = (Codeword(tuple(v)) for v in vecs)
    assert superpose(x, y) == superpose(y, x)
    assert superpose(superpose(x, y), z) == superpose(x, superpose(y, z))
    assert superpose(x, x) == x
    s = superpose(x, y)
    assert all(a >= b for a, b in zip(s.bits, x.bits))


def test_verify_icc_small_books():
    res = verify_icc(generate_codebook(4, 2))
    assert res.ok and res.min_overlap == 2 and res.witness is None
    res = verify_icc(generate_codebook(10, 4))
    assert res.ok and res.min_overlap == 4


def test_verify_icc_flags_wrong_weight():
    good = list(generate_codebook(6, 2).words)
    bad = Codebook.from_words(6, 2, good[:5] + [Codeword.from_string("110000")])
    res = verify_icc(bad)
    assert not res.ok and res.witness is not None and res.bad_weight == (5,)


def test_verify_icc_on_rank_view():
    book = generate_codebook(40, 6)
    assert not book.materialized
    res = verify_icc(book, samples=2000)
    assert res.ok and res.min_overlap >= 6


@pytest.mark.parametrize("n_b", range(1, 15))
def test_exhaustive_overlap_tightness(n_b):
    for s in range(1, n_b + 1):
        if (n_b + s) % 2:
            continue
        book = generate_codebook(n_b, s)
        assert book.count == math.comb(n_b, (n_b + s) // 2)
        assert all(w.weight == (n_b + s) // 2 for w in book.words)
        res = verify_icc(book)
        assert res.ok
        if book.count > 1:
            assert res.min_overlap == s


def test_superposition_of_distinct_words_is_heavier():
    book = generate_codebook(8, 2)
    for x, y in combinations(book.words[:20], 2):
        assert superpose(x, y).weight > book.weight
    assert superpose(book.word(3), book.word(3)).weight == book.weight


def test_rank_unrank_roundtrip_against_itertools():
    n, k = 9, 4
    for r, combo in enumerate(combinations(range(n), k)):
        assert rank_subset_lex(combo, n) == r
        assert unrank_subset_lex(r, n, k) == list(combo)


def test_rank_view_agrees_with_materialized_order():
    view = Codebook(12, 4)
    full = generate_codebook(12, 4)
    for r in (0, 1, 17, full.count - 1):
        assert view.word(r) == full.word(r)
        assert view.rank(full.word(r)) == r


def test_text_roundtrip():
    book = generate_codebook(6, 2)
    text = book.to_text()
    assert text.splitlines()[0] == "icc 6 2"
    again = Codebook.from_text(text)
    assert list(again.words) == list(book.words)


def test_code_rate_values():
    assert code_rate(4, 2) == 0.5
    assert code_rate(7, 7) == 0.0
    rates = [code_rate(16, s) for s in range(2, 17, 2)]
    assert all(a > b for a, b in zip(rates, rates[1:]))
    # exact big-integer binomial beyond float range
    assert abs(code_rate(2000, 10) - math.log2(math.comb(2000, 1005)) / 2000) < 1e-12


def test_iep_values():
    rep = theoretical_iep(4, 2)
    assert rep.p_i_exact == Fraction(3, 32) and rep.p_i == 0.09375
    assert rep.p_i_exact == iep_factorial_form(4, 2)
    assert theoretical_iep(6, 6).p_i == 0.0


def test_dpd_and_cpd():
    rep = theoretical_iep(9, 3)
    assert rep.p_i_exact == Fraction(83, 1024)
    dpd = dpd_adjust(rep, 5)
    assert dpd.p_i_dpd_exact == rep.p_i_exact / 5
    cpd = cpd_adjust(rep)
    assert cpd.cpd and cpd.p_i_dpd == 0.0
    with pytest.raises(CodeError):
        dpd_adjust(rep, 0)


def test_iep_anchor_161_9():
    rep = dpd_adjust(theoretical_iep(161, 9), 20)
    assert 10 ** -3.3 / 3 < rep.p_i_dpd < 3 * 10 ** -3.3


def test_from_positions_and_array():
    w = Codeword.from_positions(5, [0, 3])
    assert str(w) == "10010" and w.positions == (0, 3)
    assert Codeword.from_array(np.array([1, 0, 0, 1, 0])) == w
    with pytest.raises(CodeError):
        Codeword((0, 2))


def test_brute_force_small_books_match():
    # oracle: filter all 2^n bit vectors by weight
    for n_b, s in [(5, 1), (6, 4), (7, 3)]:
        w = (n_b + s) // 2
        brute = [Codeword(bits) for bits in product((0, 1), repeat=n_b) if sum(bits) == w]
        assert sorted(map(str, brute)) == sorted(map(str, generate_codebook(n_b, s).words))
