import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boolcons.boolfun import (PreconditionError, TruthTable, TruthTableError,
                              affine_transform, balancedness_penalty,
                              concatenation_construct, covering_radius_bound,
                              inner_product, is_balanced, is_bent, lemma1_spectrum_check,
                              lemma_nonlinearity, naive_walsh_transform, nonlinearity,
                              random_bent, random_invertible_matrix, read_table,
                              rothaus_construct, walsh_transform, write_table)


def tables(min_n=1, max_n=8):
    return st.integers(min_n, max_n).flatmap(
        lambda n: st.integers(0, (1 << (1 << n)) - 1).map(lambda v: TruthTable.from_int(n, v)))


def brute_nonlinearity(f):
    n = f.n
    best = 1 << n
    x = np.arange(1 << n)
    bits = f.bits()
    for a in range(1 << n):
        lin = np.bitwise_count((x & a).astype(np.uint64)) & 1
        d = int(np.count_nonzero(bits != lin))
        best = min(best, d, (1 << n) - d)
    return best


# --- truth tables ----------------------------------------------------------

def test_index_convention():
    f = TruthTable.variable(3, 1)
    assert [f[x] for x in range(8)] == [0, 0, 1, 1, 0, 0, 1, 1]


@pytest.mark.parametrize("n", [0, 1, 2, 5, 6, 7, 9])
def test_bits_roundtrip(n, rng):
    f = TruthTable.random(n, rng)
    assert TruthTable.from_bits(f.bits()) == f
    assert TruthTable.from_int(n, f.to_int()) == f
    assert TruthTable.from_hex(n, f.to_hex()) == f


def test_bad_length_rejected():
    with pytest.raises(TruthTableError):
        TruthTable.from_bits([0, 1, 1])
    with pytest.raises(TruthTableError):
        TruthTable.from_hex(4, "abc")


def test_complement_keeps_padding_clear():
    f = ~TruthTable.constant(3)
    assert f.weight() == 8 and f.to_int() == 0xFF


def test_file_roundtrip(tmp_path, rng):
    for n in (2, 6, 8):
        f = TruthTable.random(n, rng)
        write_table(tmp_path / "f.tt", f)
        assert read_table(tmp_path / "f.tt") == f


def test_read_table_rejects_garbage(tmp_path):
    (tmp_path / "bad.tt").write_text("hello\n")
    with pytest.raises(TruthTableError):
        read_table(tmp_path / "bad.tt")


def test_extend_repeats_table(rng):
    f = TruthTable.random(4, rng)
    g = f.extend(2)
    assert g.n == 6
    assert all(g[x] == f[x & 15] for x in range(64))


def test_random_balanced(rng):
    for n in range(1, 9):
        assert is_balanced(TruthTable.random_balanced(n, rng))


# --- Walsh-Hadamard --------------------------------------------------------

def test_walsh_constant_zero():
    assert walsh_transform(TruthTable.constant(3)).tolist() == [8, 0, 0, 0, 0, 0, 0, 0]


def test_walsh_coordinate_function():
    # W(a) = sum_x (-1)^(x0 ^ a.x): only a = 1 correlates
    w = walsh_transform(TruthTable.variable(2, 0))
    assert w.tolist() == [0, 4, 0, 0]
    assert naive_walsh_transform(TruthTable.variable(2, 0)).tolist() == [0, 4, 0, 0]


def test_walsh_matches_naive_n8(rng):
    f = TruthTable.random(8, rng)
    assert np.array_equal(walsh_transform(f), naive_walsh_transform(f))


@settings(max_examples=200, deadline=None)
@given(tables())
def test_walsh_invariants(f):
    w = walsh_transform(f)
    n = f.n
    assert np.array_equal(w, naive_walsh_transform(f))
    assert int((w * w).sum()) == 1 << (2 * n)
    assert np.all(np.abs(w) <= 1 << n)
    assert np.all((w - (1 << n)) % 2 == 0)


# --- nonlinearity and balancedness -----------------------------------------

def test_linear_function_has_zero_nonlinearity():
    f = TruthTable.variable(5, 0) ^ TruthTable.variable(5, 3)
    assert nonlinearity(f) == 0


def test_inner_product_is_bent():
    f = inner_product(4)
    assert nonlinearity(f) == 6 == covering_radius_bound(4)
    assert brute_nonlinearity(f) == 6
    assert is_bent(f)


def test_seed_fixture_nonlinearity(seeds):
    f = seeds["seeds_n5_train"][0].seeds[0]
    assert is_balanced(f) and nonlinearity(f) == 12 == brute_nonlinearity(f)


@settings(max_examples=100, deadline=None)
@given(tables(1, 6))
def test_nonlinearity_matches_affine_distance(f):
    assert nonlinearity(f) == brute_nonlinearity(f)


@pytest.mark.parametrize("f,expected", [
    (TruthTable.constant(4), 8),
    (TruthTable.variable(4, 0), 0),
    (TruthTable.variable(7, 6), 0),
    (TruthTable.from_int(4, 0b1111111), 1),
])
def test_balancedness_penalty(f, expected):
    assert balancedness_penalty(f) == expected


# --- concatenation and lemma -----------------------------------------------

def test_concatenation_layout(rng):
    f0, f1 = TruthTable.random(3, rng), TruthTable.random(3, rng)
    big = concatenation_construct(f0, f1)
    bits = big.bits()
    assert np.array_equal(bits[:8], f1.bits())
    assert np.array_equal(bits[8:16], (~f1).bits())
    assert np.array_equal(bits[16:24], f0.bits())
    assert np.array_equal(bits[24:], f0.bits())


def test_concatenation_of_zero_seeds():
    z = TruthTable.constant(2)
    big = concatenation_construct(z, z)
    assert big.bits().tolist() == [0] * 4 + [1] * 4 + [0] * 8
    assert big.weight() == 4 and balancedness_penalty(big) == 4
    assert lemma1_spectrum_check(z, z)


@pytest.mark.parametrize("name,nl", [("seeds_n4_train", 24), ("seeds_n5_train", 56),
                                     ("seeds_n6", 116)])
def test_concatenation_of_seed_groups(seeds, name, nl):
    for g in seeds[name]:
        big = concatenation_construct(*g.seeds)
        assert is_balanced(big)
        assert nonlinearity(big) == nl == lemma_nonlinearity(*g.seeds)


def test_concatenation_word_path(seeds):
    # 7-variable seeds take the multi-word branch
    g = seeds["seeds_n7"][0]
    big = concatenation_construct(*g.seeds)
    assert big.n == 9 and is_balanced(big) and nonlinearity(big) == 240


@pytest.mark.parametrize("n", [3, 5])
def test_lemma_random_balanced_pairs(n, rng):
    f0, f1 = TruthTable.random_balanced(n, rng), TruthTable.random_balanced(n, rng)
    assert lemma1_spectrum_check(f0, f1)
    assert nonlinearity(concatenation_construct(f0, f1)) == lemma_nonlinearity(f0, f1)


def test_concatenation_size_mismatch():
    with pytest.raises(TruthTableError):
        concatenation_construct(TruthTable.constant(3), TruthTable.constant(4))


# --- bent functions and Rothaus --------------------------------------------

def test_rothaus_identical_inputs():
    h = inner_product(4)
    f = rothaus_construct(h, h, h)
    assert nonlinearity(f) == 28 and is_bent(f)
    y1, y2 = TruthTable.variable(6, 4), TruthTable.variable(6, 5)
    assert f == h.extend(2) ^ (y1 & y2)


def test_rothaus_rejects_non_bent():
    h = inner_product(4)
    with pytest.raises(PreconditionError):
        rothaus_construct(h, h, TruthTable.variable(4, 0))
    with pytest.raises(PreconditionError):
        rothaus_construct(TruthTable.constant(3), TruthTable.constant(3), TruthTable.constant(3))


def test_random_bent_and_affine_invariance(rng):
    for n in (2, 4, 6, 8):
        assert is_bent(random_bent(n, rng))
    f = TruthTable.random(6, rng)
    g = affine_transform(f, random_invertible_matrix(6, rng), shift=5, linear=9, const=1)
    assert nonlinearity(g) == nonlinearity(f)


def test_bent_seed_properties(rng):
    f = random_bent(4, rng)
    assert nonlinearity(f) == 6 and balancedness_penalty(f) == 2
