"""Bit-packed Boolean functions and their cryptographic metrics.

Index convention: input ``(x_{n-1}, ..., x_0)`` is stored at index
``sum(x_j << j)``, so variable ``j`` has bit-weight ``2**j``.  Bit ``i`` of the
table lives in word ``i // 64`` at bit position ``i % 64``.  Tables with fewer
than 64 entries occupy the low bits of a single word.
"""
from __future__ import annotations

import functools
from pathlib import Path

import numpy as np

MAX_VARS = 24
WORD_BITS = 64
_ONES = np.uint64(0xFFFFFFFFFFFFFFFF)

# Within-word patterns of variables 0..5: bit i of _VAR_PATTERNS[j] is bit j of i.
_VAR_PATTERNS = [
    0xAAAAAAAAAAAAAAAA,
    0xCCCCCCCCCCCCCCCC,
    0xF0F0F0F0F0F0F0F0,
    0xFF00FF00FF00FF00,
    0xFFFF0000FFFF0000,
    0xFFFFFFFF00000000,
]


class TruthTableError(ValueError):
    pass


def _n_words(n: int) -> int:
    return max(1, (1 << n) // WORD_BITS)


def _tail_mask(n: int) -> np.uint64:
    if n >= 6:
        return _ONES
    return np.uint64((1 << (1 << n)) - 1)


class TruthTable:
    """Immutable truth table of an ``n``-variable Boolean function."""

    __slots__ = ("n", "words", "_hash")

    def __init__(self, n: int, words: np.ndarray):
        if not 0 <= n <= MAX_VARS:
            raise TruthTableError(f"n must be in 0..{MAX_VARS}, got {n}")
        words = np.ascontiguousarray(words, dtype=np.uint64)
        if words.shape != (_n_words(n),):
            raise TruthTableError(
                f"expected {_n_words(n)} words for n={n}, got shape {words.shape}")
        if n < 6 and words[0] & ~_tail_mask(n):
            words = words & _tail_mask(n)
        words.setflags(write=False)
        self.n = n
        self.words = words
        self._hash = None

    # construction -----------------------------------------------------

    @classmethod
    def from_bits(cls, bits) -> TruthTable:
        bits = np.asarray(bits, dtype=np.uint8)
        size = bits.size
        n = size.bit_length() - 1
        if size == 0 or 1 << n != size:
            raise TruthTableError(f"table length {size} is not a power of two")
        if np.any(bits > 1):
            raise TruthTableError("table entries must be 0 or 1")
        padded = np.zeros(_n_words(n) * WORD_BITS, dtype=np.uint8)
        padded[:size] = bits
        packed = np.packbits(padded, bitorder="little")
        return cls(n, packed.view("<u8").astype(np.uint64))

    @classmethod
    def from_int(cls, n: int, value: int) -> TruthTable:
        if value < 0 or value >> (1 << n):
            raise TruthTableError(f"value does not fit a {n}-variable table")
        nbytes = _n_words(n) * 8
        raw = value.to_bytes(nbytes, "little")
        return cls(n, np.frombuffer(raw, dtype="<u8").astype(np.uint64))

    @classmethod
    def constant(cls, n: int, value: int = 0) -> TruthTable:
        fill = _ONES if value else np.uint64(0)
        return cls(n, np.full(_n_words(n), fill, dtype=np.uint64))

    @classmethod
    def variable(cls, n: int, j: int) -> TruthTable:
        return cls(n, variable_words(n, j))

    @classmethod
    def from_function(cls, n: int, func) -> TruthTable:
        """Tabulate ``func(x)`` where ``x`` is the integer input index."""
        return cls.from_bits([func(x) & 1 for x in range(1 << n)])

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> TruthTable:
        return cls.from_bits(rng.integers(0, 2, size=1 << n, dtype=np.uint8))

    @classmethod
    def random_balanced(cls, n: int, rng: np.random.Generator) -> TruthTable:
        bits = np.zeros(1 << n, dtype=np.uint8)
        bits[: 1 << (n - 1)] = 1
        return cls.from_bits(rng.permutation(bits))

    # views --------------------------------------------------------------

    @property
    def size(self) -> int:
        return 1 << self.n

    def bits(self) -> np.ndarray:
        raw = self.words.astype("<u8").view(np.uint8)
        return np.unpackbits(raw, bitorder="little")[: self.size]

    def to_int(self) -> int:
        return int.from_bytes(self.words.astype("<u8").tobytes(), "little")

    def weight(self) -> int:
        return int(np.bitwise_count(self.words).sum())

    def __getitem__(self, x: int) -> int:
        return int(self.words[x >> 6] >> np.uint64(x & 63)) & 1

    # algebra ------------------------------------------------------------

    def _check(self, other: TruthTable) -> None:
        if self.n != other.n:
            raise TruthTableError(f"size mismatch: {self.n} vs {other.n} variables")

    def __xor__(self, other: TruthTable) -> TruthTable:
        self._check(other)
        return TruthTable(self.n, self.words ^ other.words)

    def __and__(self, other: TruthTable) -> TruthTable:
        self._check(other)
        return TruthTable(self.n, self.words & other.words)

    def __or__(self, other: TruthTable) -> TruthTable:
        self._check(other)
        return TruthTable(self.n, self.words | other.words)

    def __invert__(self) -> TruthTable:
        return TruthTable(self.n, ~self.words)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TruthTable):
            return NotImplemented
        return self.n == other.n and bool(np.array_equal(self.words, other.words))

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.n, self.words.tobytes()))
        return self._hash

    def __repr__(self) -> str:
        return f"TruthTable(n={self.n}, hex={self.to_hex()})"

    def extend(self, extra: int) -> TruthTable:
        """The same function viewed on ``n + extra`` variables (new ones on top)."""
        return TruthTable(self.n + extra, lift_words(self.words, self.n, extra))

    # hex ----------------------------------------------------------------

    def to_hex(self) -> str:
        digits = max(1, self.size // 4)
        return format(self.to_int(), f"0{digits}x")

    @classmethod
    def from_hex(cls, n: int, text: str) -> TruthTable:
        text = text.strip()
        digits = max(1, (1 << n) // 4)
        if len(text) != digits:
            raise TruthTableError(
                f"expected {digits} hex digits for n={n}, got {len(text)}")
        try:
            value = int(text, 16)
        except ValueError as exc:
            raise TruthTableError(f"invalid hex digits: {exc}") from None
        return cls.from_int(n, value)


def variable_words(n: int, j: int) -> np.ndarray:
    """Packed words of the coordinate function ``x_j`` on ``n`` variables."""
    if not 0 <= j < n:
        raise TruthTableError(f"variable index {j} out of range for n={n}")
    nw = _n_words(n)
    if j < 6:
        return np.full(nw, np.uint64(_VAR_PATTERNS[j]), dtype=np.uint64) & _tail_mask(n)
    block = 1 << (j - 6)
    idx = np.arange(nw)
    return np.where((idx // block) & 1, _ONES, np.uint64(0)).astype(np.uint64)


def lift_words(words: np.ndarray, n: int, extra: int) -> np.ndarray:
    """Repeat an ``n``-variable table ``2**extra`` times."""
    if extra == 0:
        return words
    m = n + extra
    if n >= 6:
        return np.tile(words, 1 << extra)
    # replicate the 2**n low bits inside a word, then tile words
    w = int(words[0])
    width = 1 << n
    while width < WORD_BITS and width < (1 << m):
        w |= w << width
        width <<= 1
    out = np.full(_n_words(m), np.uint64(w & ((1 << min(WORD_BITS, 1 << m)) - 1)),
                  dtype=np.uint64)
    return out


# --- file format ---------------------------------------------------------


def write_table(path, table: TruthTable) -> None:
    Path(path).write_text(f"n={table.n}\n{table.to_hex()}\n")


def read_table(path) -> TruthTable:
    lines = Path(path).read_text().split()
    if len(lines) != 2 or not lines[0].startswith("n="):
        raise TruthTableError(f"{path}: expected header 'n=<k>' and one hex line")
    try:
        n = int(lines[0][2:])
    except ValueError:
        raise TruthTableError(f"{path}: bad header {lines[0]!r}") from None
    return TruthTable.from_hex(n, lines[1])


# --- Walsh-Hadamard ------------------------------------------------------


def walsh_transform(f: TruthTable) -> np.ndarray:
    """``W_f(a) = sum_x (-1)**(f(x) ^ a.x)`` by the in-place butterfly."""
    w = 1 - 2 * f.bits().astype(np.int64)
    h = 1
    size = f.size
    while h < size:
        w = w.reshape(-1, 2, h)
        lo = w[:, 0, :]
        hi = w[:, 1, :]
        w = np.stack((lo + hi, lo - hi), axis=1)
        h <<= 1
    return w.reshape(size)


@functools.lru_cache(maxsize=16)
def _character_matrix(n: int) -> np.ndarray:
    idx = np.arange(1 << n, dtype=np.uint64)
    parity = np.bitwise_count(idx[:, None] & idx[None, :]) & 1
    return (1 - 2 * parity.astype(np.int64))


def naive_walsh_transform(f: TruthTable) -> np.ndarray:
    """Direct O(4**n) evaluation of the defining sum; used as an oracle."""
    return naive_walsh_batch(f.bits()[None, :])[0]


def naive_walsh_batch(bits: np.ndarray) -> np.ndarray:
    bits = np.atleast_2d(bits)
    n = bits.shape[1].bit_length() - 1
    signs = 1 - 2 * bits.astype(np.int64)
    return signs @ _character_matrix(n)


def nonlinearity_from_spectrum(spectrum: np.ndarray, n: int) -> int:
    return (1 << (n - 1)) - int(np.abs(spectrum).max()) // 2


def nonlinearity(f: TruthTable) -> int:
    if f.n == 0:
        return 0
    return nonlinearity_from_spectrum(walsh_transform(f), f.n)


def balancedness_penalty(f: TruthTable) -> int:
    if f.n == 0:
        return abs(2 * f.weight() - 1)  # never balanced; distance is half a bit
    return abs(f.weight() - (1 << (f.n - 1)))


def is_balanced(f: TruthTable) -> bool:
    return balancedness_penalty(f) == 0


def covering_radius_bound(n: int) -> float:
    return 2 ** (n - 1) - 2 ** (n / 2 - 1)


def is_bent(f: TruthTable) -> bool:
    if f.n % 2:
        return False
    return bool(np.all(np.abs(walsh_transform(f)) == 1 << (f.n // 2)))


# --- reference constructions ---------------------------------------------


def concatenation_construct(f0: TruthTable, f1: TruthTable) -> TruthTable:
    """``F(v0, v1, v) = f0(v) if v0 else f1(v) ^ v1``.

    ``v1`` sits at index bit ``n`` and ``v0`` at bit ``n + 1``, so the table
    reads ``f1 || ~f1 || f0 || f0`` in ascending index order.
    """
    if f0.n != f1.n:
        raise TruthTableError(f"seed sizes differ: {f0.n} vs {f1.n}")
    n = f0.n
    blocks = [f1, ~f1, f0, f0]
    if n >= 6:
        return TruthTable(n + 2, np.concatenate([b.words for b in blocks]))
    width = 1 << n
    value = 0
    for i, b in enumerate(blocks):
        value |= b.to_int() << (i * width)
    return TruthTable.from_int(n + 2, value)


def lemma_spectrum(w0: np.ndarray, w1: np.ndarray) -> np.ndarray:
    """Spectrum of ``concatenation_construct`` predicted from the seed spectra.

    For spectral index ``(b0, b1, a)``: ``2 * (-1)**b0 * W_f0(a)`` when
    ``b1 == 0`` and ``2 * W_f1(a)`` when ``b1 == 1``.
    """
    return np.concatenate([2 * w0, 2 * w1, -2 * w0, 2 * w1])


def lemma1_spectrum_check(f0: TruthTable, f1: TruthTable) -> bool:
    big = concatenation_construct(f0, f1)
    predicted = lemma_spectrum(walsh_transform(f0), walsh_transform(f1))
    return bool(np.array_equal(walsh_transform(big), predicted))


def lemma_nonlinearity(f0: TruthTable, f1: TruthTable) -> int:
    """Closed-form nonlinearity ``2**(n+1) - S`` for balanced seeds."""
    s = max(int(np.abs(walsh_transform(f)).max()) for f in (f0, f1))
    return (1 << (f0.n + 1)) - s


class PreconditionError(ValueError):
    pass


def rothaus_construct(h1: TruthTable, h2: TruthTable, h3: TruthTable) -> TruthTable:
    """Rothaus bent-to-bent construction on ``n + 2`` variables.

    ``x_{n+1}`` is stored at index bit ``n`` and ``x_{n+2}`` at bit ``n + 1``.
    """
    n = h1.n
    if h2.n != n or h3.n != n:
        raise PreconditionError(f"input sizes differ: {h1.n}, {h2.n}, {h3.n}")
    if n % 2:
        raise PreconditionError(f"n must be even, got {n}")
    for name, h in (("h1", h1), ("h2", h2), ("h3", h3), ("h1^h2^h3", h1 ^ h2 ^ h3)):
        if not is_bent(h):
            raise PreconditionError(f"{name} is not bent")
    m = n + 2
    a, b, c = (h.extend(2) for h in (h1, h2, h3))
    y1 = TruthTable.variable(m, n)
    y2 = TruthTable.variable(m, n + 1)
    return ((a & b) ^ (a & c) ^ (b & c)
            ^ ((a ^ b) & y1) ^ ((a ^ c) & y2) ^ (y1 & y2))


def inner_product(n: int) -> TruthTable:
    """``x0 x1 ^ x2 x3 ^ ...``, the canonical bent function for even ``n``."""
    if n % 2:
        raise TruthTableError("inner product bent function needs even n")
    out = TruthTable.constant(n)
    for i in range(0, n, 2):
        out = out ^ (TruthTable.variable(n, i) & TruthTable.variable(n, i + 1))
    return out


def random_invertible_matrix(n: int, rng: np.random.Generator) -> np.ndarray:
    while True:
        m = rng.integers(0, 2, size=(n, n), dtype=np.uint8)
        if _gf2_rank(m) == n:
            return m


def _gf2_rank(m: np.ndarray) -> int:
    m = m.copy()
    rank = 0
    rows, cols = m.shape
    for c in range(cols):
        pivot = next((r for r in range(rank, rows) if m[r, c]), None)
        if pivot is None:
            continue
        m[[rank, pivot]] = m[[pivot, rank]]
        for r in range(rows):
            if r != rank and m[r, c]:
                m[r] ^= m[rank]
        rank += 1
    return rank


def affine_transform(f: TruthTable, matrix: np.ndarray, shift: int = 0,
                     linear: int = 0, const: int = 0) -> TruthTable:
    """``g(x) = f(M x ^ shift) ^ linear.x ^ const``; preserves nonlinearity."""
    n = f.n
    xs = np.arange(1 << n, dtype=np.int64)
    xbits = (xs[:, None] >> np.arange(n)) & 1
    ybits = (xbits @ matrix.T.astype(np.int64)) & 1
    ys = (ybits << np.arange(n)).sum(axis=1) ^ shift
    lin = np.bitwise_count((xs & linear).astype(np.uint64)) & 1
    out = f.bits()[ys] ^ lin.astype(np.uint8) ^ (const & 1)
    return TruthTable.from_bits(out)


def random_bent(n: int, rng: np.random.Generator) -> TruthTable:
    """A random affine-equivalent variant of the inner-product function."""
    return affine_transform(
        inner_product(n), random_invertible_matrix(n, rng),
        shift=int(rng.integers(1 << n)), linear=int(rng.integers(1 << n)),
        const=int(rng.integers(2)))
