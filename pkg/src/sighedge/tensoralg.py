"""Truncated tensor algebra over words on the alphabet {1, ..., d}.

Coefficients are stored densely in graded lexicographic order: the empty
word first, then all words of length 1 in letter order, then length 2,
and so on up to the truncation order M.  A word is a tuple of letters,
e.g. (1, 2, 2); its coefficient in a signature is the iterated integral
with the first letter innermost (earliest).

Bilinear products (concatenation, shuffle, half-shuffle) truncate at an
explicit output order.  Shuffle-type products go through sparse tables
of (left, right, out, multiplicity) rows built once per shape and cached;
see build_shuffle_table.
"""

from __future__ import annotations

import numpy as np

from . import _kernels

# Cap on the total bytes held by cached product tables.
MAX_TABLE_BYTES = 8 << 30

_OFFSETS_CACHE: dict[tuple[int, int], np.ndarray] = {}


def level_offsets(dim: int, order: int) -> np.ndarray:
    """Start index of each level: offsets[n] is where length-n words begin."""
    key = (dim, order)
    out = _OFFSETS_CACHE.get(key)
    if out is None:
        sizes = [dim ** n for n in range(order + 1)]
        out = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        _OFFSETS_CACHE[key] = out
    return out


def n_words(dim: int, order: int) -> int:
    """Number of words of length <= order over d letters (empty word included)."""
    return int(level_offsets(dim, order)[order + 1])


def word_index(dim: int, word: tuple[int, ...]) -> int:
    """Graded lexicographic index of a word, empty word at 0."""
    idx = 0
    for letter in word:
        if not 1 <= letter <= dim:
            raise ValueError(f"letter {letter} outside alphabet 1..{dim}")
        idx = idx * dim + (letter - 1)
    return int(level_offsets(dim, len(word))[len(word)]) + idx


def index_word(dim: int, index: int) -> tuple[int, ...]:
    """Inverse of word_index."""
    offsets = _OFFSETS_CACHE.get((dim, 0))
    n = 0
    while True:
        offsets = level_offsets(dim, n)
        if index < offsets[n + 1]:
            break
        n += 1
    code = index - int(level_offsets(dim, n)[n])
    letters = []
    for _ in range(n):
        letters.append(code % dim + 1)
        code //= dim
    return tuple(reversed(letters))


def words_of_order(dim: int, order: int):
    """All words of length <= order in index order."""
    return [index_word(dim, i) for i in range(n_words(dim, order))]


class TruncTensor:
    """Dense element of the tensor algebra truncated at a given order.

    Attributes:
        dim: alphabet size d.
        order: truncation order M.
        coeffs: flat array of length n_words(dim, order), graded lex order.
    """

    __slots__ = ("dim", "order", "coeffs")

    def __init__(self, dim: int, order: int, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs)
        if coeffs.shape != (n_words(dim, order),):
            raise ValueError(
                f"coefficient array has shape {coeffs.shape}, "
                f"expected ({n_words(dim, order)},) for dim={dim} order={order}"
            )
        self.dim = dim
        self.order = order
        self.coeffs = coeffs

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, dim: int, order: int, dtype=np.float64) -> "TruncTensor":
        return cls(dim, order, np.zeros(n_words(dim, order), dtype=dtype))

    @classmethod
    def unit(cls, dim: int, order: int, dtype=np.float64) -> "TruncTensor":
        """The empty word with coefficient 1."""
        out = cls.zero(dim, order, dtype)
        out.coeffs[0] = 1.0
        return out

    @classmethod
    def from_words(cls, dim: int, order: int, entries: dict, dtype=None) -> "TruncTensor":
        """Build from a {word tuple: coefficient} mapping."""
        values = list(entries.values())
        if dtype is None:
            dtype = complex if any(isinstance(v, complex) for v in values) else np.float64
        out = cls.zero(dim, order, dtype)
        for word, value in entries.items():
            out.coeffs[word_index(dim, tuple(word))] = value
        return out

    # -- basic accessors ---------------------------------------------------

    @property
    def field(self) -> str:
        return "complex" if np.iscomplexobj(self.coeffs) else "real"

    def coeff(self, word) -> complex:
        return self.coeffs[word_index(self.dim, tuple(word))]

    def level(self, n: int) -> np.ndarray:
        """Flat view of the length-n coefficients."""
        offs = level_offsets(self.dim, self.order)
        return self.coeffs[offs[n]:offs[n + 1]]

    def truncate(self, order: int) -> "TruncTensor":
        if order >= self.order:
            return self.extend(order)
        return TruncTensor(self.dim, order, self.coeffs[:n_words(self.dim, order)].copy())

    def extend(self, order: int) -> "TruncTensor":
        if order < self.order:
            raise ValueError("extend cannot lower the order; use truncate")
        out = TruncTensor.zero(self.dim, order, self.coeffs.dtype)
        out.coeffs[:len(self.coeffs)] = self.coeffs
        return out

    def copy(self) -> "TruncTensor":
        return TruncTensor(self.dim, self.order, self.coeffs.copy())

    def nonzero_words(self, tol: float = 0.0):
        idx = np.nonzero(np.abs(self.coeffs) > tol)[0]
        return [(index_word(self.dim, i), self.coeffs[i]) for i in idx]

    # -- linear structure --------------------------------------------------

    def _aligned(self, other: "TruncTensor"):
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        order = max(self.order, other.order)
        return self.extend(order) if self.order < order else self, \
            other.extend(order) if other.order < order else other

    def __add__(self, other: "TruncTensor") -> "TruncTensor":
        a, b = self._aligned(other)
        return TruncTensor(a.dim, a.order, a.coeffs + b.coeffs)

    def __sub__(self, other: "TruncTensor") -> "TruncTensor":
        a, b = self._aligned(other)
        return TruncTensor(a.dim, a.order, a.coeffs - b.coeffs)

    def __mul__(self, scalar) -> "TruncTensor":
        return TruncTensor(self.dim, self.order, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "TruncTensor":
        return TruncTensor(self.dim, self.order, -self.coeffs)

    def __repr__(self):
        shown = self.nonzero_words(tol=0.0)[:6]
        body = ", ".join(f"{''.join(map(str, w)) or 'e'}:{c:.4g}" for w, c in shown)
        more = "" if len(self.nonzero_words()) <= 6 else ", ..."
        return f"TruncTensor(d={self.dim}, M={self.order}, {{{body}{more}}})"


# -- core bilinear and linear operations -----------------------------------


def bracket(ell: TruncTensor, sig: TruncTensor):
    """Pairing <ell, sig> = sum over words of ell^w sig^w."""
    if ell.dim != sig.dim:
        raise ValueError("dimension mismatch")
    k = n_words(ell.dim, min(ell.order, sig.order))
    return np.dot(ell.coeffs[:k], sig.coeffs[:k])


def concat(x: TruncTensor, y: TruncTensor, order: int | None = None) -> TruncTensor:
    """Concatenation product truncated at the requested order."""
    if x.dim != y.dim:
        raise ValueError("dimension mismatch")
    d = x.dim
    if order is None:
        order = x.order + y.order
    dtype = np.result_type(x.coeffs, y.coeffs)
    out = TruncTensor.zero(d, order, dtype)
    offs = level_offsets(d, order)
    for n in range(order + 1):
        target = out.coeffs[offs[n]:offs[n + 1]]
        for a in range(max(0, n - y.order), min(x.order, n) + 1):
            xa = x.level(a)
            yb = y.level(n - a)
            target += np.multiply.outer(xa, yb).reshape(-1)
    return out


def append_letter(x: TruncTensor, letter: int, order: int | None = None) -> TruncTensor:
    """Right-concatenate a single letter: out^{w i} = x^w."""
    d = x.dim
    if order is None:
        order = x.order + 1
    out = TruncTensor.zero(d, order, x.coeffs.dtype)
    for n in range(min(x.order, order - 1) + 1):
        block = out.level(n + 1).reshape(-1, d)
        block[:, letter - 1] = x.level(n)
    return out


def embed_letters(x: TruncTensor, dim: int, letters) -> TruncTensor:
    """Re-index x into a larger alphabet, sending letter i to letters[i-1].

    Words map letter by letter; coefficients carry over unchanged.  Words of
    the target alphabet not in the image get coefficient 0."""
    letters = tuple(int(c) for c in letters)
    if len(letters) != x.dim:
        raise ValueError("need one target letter per source letter")
    if len(set(letters)) != len(letters):
        raise ValueError("target letters must be distinct")
    for c in letters:
        if not 1 <= c <= dim:
            raise ValueError(f"letter {c} outside alphabet 1..{dim}")
    lmap = np.asarray(letters, np.int64) - 1
    out = TruncTensor.zero(dim, x.order, x.coeffs.dtype)
    out.coeffs[0] = x.coeffs[0]
    for n in range(1, x.order + 1):
        src = np.arange(x.dim ** n, dtype=np.int64)
        tgt = np.zeros_like(src)
        for i in range(n):
            digit = (src // x.dim ** (n - 1 - i)) % x.dim
            tgt = tgt * dim + lmap[digit]
        out.level(n)[tgt] = x.level(n)
    return out


def project(x: TruncTensor, word) -> TruncTensor:
    """Right projection x|_u: out^w = x^{w u}."""
    word = tuple(word)
    d = x.dim
    k = len(word)
    if k == 0:
        return x.copy()
    if k > x.order:
        return TruncTensor.zero(d, 0, x.coeffs.dtype)
    code = 0
    for letter in word:
        if not 1 <= letter <= d:
            raise ValueError(f"letter {letter} outside alphabet 1..{d}")
        code = code * d + (letter - 1)
    out = TruncTensor.zero(d, x.order - k, x.coeffs.dtype)
    for n in range(x.order - k + 1):
        block = x.level(n + k).reshape(-1, d ** k)
        out.level(n)[:] = block[:, code]
    return out


# -- sparse product tables -------------------------------------------------


class SparseBilinearTable:
    """COO table for a bilinear product: out[o] += m * left[l] * right[r].

    Rows are sorted by output index.  For kind="shuffle_square" the table
    holds unordered pairs only, with doubled multiplicity off the diagonal,
    and apply contracts one argument with itself.
    """

    __slots__ = ("kind", "dim", "left_order", "right_order", "out_order",
                 "left", "right", "out", "mult")

    def __init__(self, kind, dim, left_order, right_order, out_order,
                 left, right, out, mult):
        self.kind = kind
        self.dim = dim
        self.left_order = left_order
        self.right_order = right_order
        self.out_order = out_order
        self.left = left
        self.right = right
        self.out = out
        self.mult = mult

    @property
    def rows(self) -> int:
        return len(self.out)

    @property
    def nbytes(self) -> int:
        return self.left.nbytes + self.right.nbytes + self.out.nbytes + self.mult.nbytes

    def apply(self, x: TruncTensor, y: TruncTensor | None = None) -> TruncTensor:
        """Apply the table to tensors (y defaults to x for square tables)."""
        if self.kind == "shuffle_square":
            y = x if y is None else y
            if y is not x:
                raise ValueError("square tables contract one argument with itself")
        elif y is None:
            raise ValueError("need both arguments")
        dtype = np.result_type(x.coeffs, y.coeffs)
        xc = _padded(x, self.left_order, dtype)
        out = np.zeros(n_words(self.dim, self.out_order), dtype=dtype)
        if self.kind == "shuffle_square":
            if dtype == np.complex128:
                _kernels.apply_square_c(self.left, self.right, self.out, self.mult, xc, out)
            else:
                _kernels.apply_square_f(self.left, self.right, self.out, self.mult, xc, out)
        else:
            yc = _padded(y, self.right_order, dtype)
            if dtype == np.complex128:
                _kernels.apply_bilinear_c(self.left, self.right, self.out, self.mult, xc, yc, out)
            else:
                _kernels.apply_bilinear_f(self.left, self.right, self.out, self.mult, xc, yc, out)
        return TruncTensor(self.dim, self.out_order, out)

    def apply_columns(self, X: np.ndarray, Y: np.ndarray | None = None) -> np.ndarray:
        """Columnwise apply: X, Y are (n_words, ncols) coefficient stacks."""
        out = np.zeros((n_words(self.dim, self.out_order), X.shape[1]), dtype=X.dtype)
        if self.kind == "shuffle_square":
            _kernels.apply_square_cols(self.left, self.right, self.out, self.mult, X, out)
        else:
            _kernels.apply_bilinear_cols(self.left, self.right, self.out, self.mult, X, Y, out)
        return out


def _padded(x: TruncTensor, order: int, dtype) -> np.ndarray:
    need = n_words(x.dim, order)
    if len(x.coeffs) == need and x.coeffs.dtype == dtype:
        return x.coeffs
    out = np.zeros(need, dtype=dtype)
    out[:min(need, len(x.coeffs))] = x.coeffs[:need]
    return out


_TABLE_CACHE: dict[tuple, SparseBilinearTable] = {}


def _cached_bytes() -> int:
    return sum(t.nbytes for t in _TABLE_CACHE.values())


def _level_pair_tables(dim: int, left_order: int, right_order: int, out_order: int):
    """DP over level pairs: T[(a,b)] holds merged (u, v, w, mult) rows of the
    shuffle of a length-a word into a length-b word, codes within each level."""
    zero = np.zeros(1, dtype=np.int64)
    one = np.ones(1, dtype=np.int64)
    T = {(0, 0): (zero, zero, zero, one)}
    for n in range(1, out_order + 1):
        for a in range(0, n + 1):
            b = n - a
            if a > left_order or b > right_order:
                continue
            parts = []
            if a >= 1 and (a - 1, b) in T:
                u, v, w, m = T[(a - 1, b)]
                for i in range(dim):
                    parts.append((u * dim + i, v, w * dim + i, m))
            if b >= 1 and (a, b - 1) in T:
                u, v, w, m = T[(a, b - 1)]
                for j in range(dim):
                    parts.append((u, v * dim + j, w * dim + j, m))
            if not parts:
                continue
            u = np.concatenate([p[0] for p in parts])
            v = np.concatenate([p[1] for p in parts])
            w = np.concatenate([p[2] for p in parts])
            m = np.concatenate([p[3] for p in parts])
            key = (u * (dim ** b) + v) * (dim ** n) + w
            order_ = np.argsort(key, kind="stable")
            key = key[order_]
            u, v, w, m = u[order_], v[order_], w[order_], m[order_]
            _, start = np.unique(key, return_index=True)
            T[(a, b)] = (u[start], v[start], w[start], np.add.reduceat(m, start))
    return T


def _assemble(dim, T, pairs, left_order, right_order, out_order, kind):
    offs_l = level_offsets(dim, left_order)
    offs_r = level_offsets(dim, right_order)
    offs_o = level_offsets(dim, out_order)
    ls, rs, os_, ms = [], [], [], []
    for (a, b), weight in pairs:
        if (a, b) not in T:
            continue
        u, v, w, m = T[(a, b)]
        if weight is None:  # unordered square: keep u <= v, double u < v
            if a == b:
                keep = u <= v
                u, v, w, m = u[keep], v[keep], w[keep], m[keep]
                mm = np.where(u < v, 2.0 * m, 1.0 * m)
            else:
                mm = 2.0 * m
        else:
            mm = weight * m.astype(np.float64)
        ls.append(u + offs_l[a])
        rs.append(v + offs_r[b])
        os_.append(w + offs_o[a + b])
        ms.append(mm)
    left = np.concatenate(ls).astype(np.int64)
    right = np.concatenate(rs).astype(np.int64)
    out = np.concatenate(os_).astype(np.int64)
    mult = np.concatenate(ms).astype(np.float64)
    order_ = np.argsort(out, kind="stable")
    table = SparseBilinearTable(kind, dim, left_order, right_order, out_order,
                               np.ascontiguousarray(left[order_]),
                               np.ascontiguousarray(right[order_]),
                               np.ascontiguousarray(out[order_]),
                               np.ascontiguousarray(mult[order_]))
    if _cached_bytes() + table.nbytes > MAX_TABLE_BYTES:
        raise MemoryError(
            f"product table ({table.nbytes / 2**20:.0f} MiB) would exceed the "
            f"{MAX_TABLE_BYTES / 2**30:.0f} GiB table cache cap"
        )
    return table


def build_shuffle_table(dim: int, left_order: int, right_order: int,
                        out_order: int) -> SparseBilinearTable:
    """Sparse table of the shuffle product truncated at out_order."""
    key = ("shuffle", dim, left_order, right_order, out_order)
    if key not in _TABLE_CACHE:
        T = _level_pair_tables(dim, left_order, right_order, out_order)
        pairs = [((a, b), 1.0) for a in range(left_order + 1)
                 for b in range(right_order + 1) if a + b <= out_order]
        _TABLE_CACHE[key] = _assemble(dim, T, pairs, left_order, right_order,
                                      out_order, "shuffle")
    return _TABLE_CACHE[key]


def build_half_shuffle_table(dim: int, left_order: int, right_order: int,
                             out_order: int) -> SparseBilinearTable:
    """Table for the right half-shuffle x > y (last letter from y).

    Convention: v i > w j = (v i sh w) j, x > empty = 0, empty > w j = w j.
    """
    key = ("half_shuffle", dim, left_order, right_order, out_order)
    if key in _TABLE_CACHE:
        return _TABLE_CACHE[key]
    T = _level_pair_tables(dim, left_order, right_order - 1, out_order - 1)
    offs_l = level_offsets(dim, left_order)
    offs_r = level_offsets(dim, right_order)
    offs_o = level_offsets(dim, out_order)
    ls, rs, os_, ms = [], [], [], []
    for (a, b), (u, v, w, m) in T.items():
        if a > left_order or b + 1 > right_order or a + b + 1 > out_order:
            continue
        for j in range(dim):
            ls.append(u + offs_l[a])
            rs.append((v * dim + j) + offs_r[b + 1])
            os_.append((w * dim + j) + offs_o[a + b + 1])
            ms.append(m.astype(np.float64))
    # a right factor with only the empty word yields no rows: x > empty = 0
    left = np.concatenate(ls) if ls else np.empty(0, np.int64)
    right = np.concatenate(rs) if rs else np.empty(0, np.int64)
    out = np.concatenate(os_) if os_ else np.empty(0, np.int64)
    mult = np.concatenate(ms) if ms else np.empty(0, np.float64)
    order_ = np.argsort(out, kind="stable")
    table = SparseBilinearTable("half_shuffle", dim, left_order, right_order, out_order,
                               np.ascontiguousarray(left[order_]),
                               np.ascontiguousarray(right[order_]),
                               np.ascontiguousarray(out[order_]),
                               np.ascontiguousarray(mult[order_]))
    if _cached_bytes() + table.nbytes > MAX_TABLE_BYTES:
        raise MemoryError("half-shuffle table would exceed the table cache cap")
    _TABLE_CACHE[key] = table
    return table


def build_shuffle_square_table(dim: int, in_order: int, out_order: int) -> SparseBilinearTable:
    """Table for x -> x sh x with unordered pairs merged (half the rows)."""
    key = ("shuffle_square", dim, in_order, out_order)
    if key not in _TABLE_CACHE:
        T = _level_pair_tables(dim, in_order, in_order, out_order)
        pairs = [((a, b), None) for a in range(in_order + 1)
                 for b in range(a, in_order + 1) if a + b <= out_order]
        # unordered: iterate a <= b and let _assemble double off-diagonal pairs
        pairs = [((b, a), None) for (a, b), _ in pairs]  # stored with a >= b
        _TABLE_CACHE[key] = _assemble(dim, T, pairs, in_order, in_order,
                                      out_order, "shuffle_square")
    return _TABLE_CACHE[key]


def shuffle(x: TruncTensor, y: TruncTensor, order: int | None = None) -> TruncTensor:
    """Shuffle product truncated at the requested order."""
    if x.dim != y.dim:
        raise ValueError("dimension mismatch")
    if order is None:
        order = x.order + y.order
    table = build_shuffle_table(x.dim, min(x.order, order), min(y.order, order), order)
    return table.apply(x.truncate(table.left_order), y.truncate(table.right_order))


def half_shuffle(x: TruncTensor, y: TruncTensor, order: int | None = None) -> TruncTensor:
    """Right half-shuffle x > y: the Stratonovich integral of <x, Sig> against
    the last-letter increments of y.  x > empty-word-part = 0."""
    if x.dim != y.dim:
        raise ValueError("dimension mismatch")
    if order is None:
        order = x.order + y.order
    table = build_half_shuffle_table(x.dim, min(x.order, order),
                                     min(y.order, order), order)
    return table.apply(x.truncate(table.left_order), y.truncate(table.right_order))


def shuffle_square(x: TruncTensor, order: int) -> TruncTensor:
    """x sh x via the merged unordered-pair table."""
    table = build_shuffle_square_table(x.dim, min(x.order, order), order)
    return table.apply(x.truncate(table.left_order))


# -- power series ----------------------------------------------------------


def tensor_exp(x: TruncTensor, order: int | None = None) -> TruncTensor:
    """Concatenation exponential exp(x) = e^{x^e} sum_n (x - x^e e)^n / n!."""
    if order is None:
        order = x.order
    scalar = complex(x.coeffs[0]) if x.field == "complex" else float(x.coeffs[0])
    y = x.truncate(order).copy()
    y.coeffs[0] = 0.0
    acc = TruncTensor.unit(x.dim, order, y.coeffs.dtype)
    for k in range(order, 0, -1):
        acc = TruncTensor.unit(x.dim, order, acc.coeffs.dtype) + concat(y, acc, order) * (1.0 / k)
    return acc * np.exp(scalar)


def tensor_log(x: TruncTensor, order: int | None = None) -> TruncTensor:
    """Concatenation logarithm of a tensor with unit empty-word coefficient."""
    if order is None:
        order = x.order
    if abs(x.coeffs[0] - 1.0) > 1e-12:
        raise ValueError("tensor_log requires empty-word coefficient 1")
    p = x.truncate(order).copy()
    p.coeffs[0] = 0.0
    if order == 0:
        return TruncTensor.zero(x.dim, 0, p.coeffs.dtype)
    acc = TruncTensor.unit(x.dim, order, p.coeffs.dtype) * ((-1.0) ** (order - 1) / order)
    for n in range(order - 1, 0, -1):
        acc = TruncTensor.unit(x.dim, order, acc.coeffs.dtype) * ((-1.0) ** (n - 1) / n) \
            + concat(p, acc, order)
    return concat(p, acc, order)


def resolvent(x: TruncTensor, order: int | None = None) -> TruncTensor:
    """(e - x)^{-1} = sum_n x^{tensor n}; requires zero empty-word coefficient."""
    if order is None:
        order = x.order
    if abs(x.coeffs[0]) > 1e-14:
        raise ValueError("resolvent requires zero empty-word coefficient")
    acc = TruncTensor.unit(x.dim, order, x.coeffs.dtype)
    for _ in range(order):
        acc = TruncTensor.unit(x.dim, order, acc.coeffs.dtype) + concat(x, acc, order)
    return acc


def shuffle_exp(x: TruncTensor, order: int | None = None) -> TruncTensor:
    """Shuffle exponential, built order by order from the recursion
    shuexp(x) = e^{x^e} e + sum_i (shuexp(x) sh x|_i) i."""
    if order is None:
        order = x.order
    d = x.dim
    scalar = np.exp(x.coeffs[0])
    projections = [project(x.truncate(order), (i,)) for i in range(1, d + 1)]
    g = TruncTensor.unit(d, order, x.coeffs.dtype) * scalar
    for _ in range(order):
        acc = TruncTensor.unit(d, order, g.coeffs.dtype) * scalar
        for i in range(1, d + 1):
            term = shuffle(g.truncate(order - 1), projections[i - 1].truncate(order - 1),
                           order - 1)
            acc = acc + append_letter(term, i, order)
        g = acc
    return g


# -- serialization ---------------------------------------------------------


def tensor_to_dict(x: TruncTensor) -> dict:
    """JSON-ready record {dim, order, field, coeffs}."""
    if x.field == "complex":
        coeffs = [[float(c.real), float(c.imag)] for c in x.coeffs]
    else:
        coeffs = [float(c) for c in x.coeffs]
    return {"dim": x.dim, "order": x.order, "field": x.field, "coeffs": coeffs}


def tensor_from_dict(record: dict) -> TruncTensor:
    if record["field"] == "complex":
        coeffs = np.array([complex(re, im) for re, im in record["coeffs"]])
    else:
        coeffs = np.array(record["coeffs"], dtype=np.float64)
    return TruncTensor(record["dim"], record["order"], coeffs)
