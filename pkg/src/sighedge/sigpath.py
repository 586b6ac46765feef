"""Signatures of discretely sampled paths.

Paths are piecewise linear between samples, so the signature over one
segment is the concatenation exponential of the increment and the full
signature follows from Chen's identity, one segment at a time.  The module
also provides time augmentation, the Hoff lead-lag transform (with the
time coordinate kept single, since it has no quadratic variation), and
expected signatures, either Monte Carlo averages with standard errors or
Fawcett's closed form for time-augmented Brownian motion.
"""

import math

import numpy as np

from . import tensoralg as ta
from . import _kernels


class SampledPath:
    """A path observed on a strictly increasing time grid.

    values has one row per sample; scalar paths may be passed 1-d.
    """

    __slots__ = ("times", "values")

    def __init__(self, times, values):
        times = np.asarray(times, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or values.ndim != 2 or len(times) != len(values):
            raise ValueError("times (n+1,) and values (n+1, d) required")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        self.times = times
        self.values = values

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)


class PathSignature:
    """Signature stream of one path: one coefficient row per sample time."""

    __slots__ = ("dim", "order", "times", "coeffs")

    def __init__(self, dim, order, times, coeffs):
        self.dim = dim
        self.order = order
        self.times = times
        self.coeffs = coeffs

    def tensor(self, j: int) -> ta.TruncTensor:
        return ta.TruncTensor(self.dim, self.order, self.coeffs[j].copy())

    @property
    def terminal(self) -> ta.TruncTensor:
        return self.tensor(-1)


# -- Chen tables -----------------------------------------------------------
#
# The kernels advance signatures word by word via new[w] = sum over splits
# w = u v of cur[u] * z[v], where z is the segment exponential.  The split
# enumeration and the letter-count data for z are precomputed per (d, M).

_CHEN_CACHE: dict[tuple[int, int], tuple] = {}


def chen_table(dim: int, order: int) -> tuple:
    """Suffix-split table (pre, suf, out, first, counts, lens, invfact)."""
    key = (dim, order)
    cached = _CHEN_CACHE.get(key)
    if cached is not None:
        return cached
    nw = ta.n_words(dim, order)
    pre, suf, out, first = [], [], [], []
    counts = np.zeros((nw, dim), dtype=np.int64)
    lens = np.zeros(nw, dtype=np.int64)
    for i in range(nw):
        w = ta.index_word(dim, i)
        lens[i] = len(w)
        for letter in w:
            counts[i, letter - 1] += 1
        # suffix length 0 first: its z is 1, letting kernels assign then add
        for k in range(len(w) + 1):
            pre.append(ta.word_index(dim, w[: len(w) - k]))
            suf.append(ta.word_index(dim, w[len(w) - k:]))
            out.append(i)
            first.append(k == 0)
    invfact = 1.0 / np.array([math.factorial(n) for n in range(order + 1)],
                             dtype=np.float64)
    table = (np.array(pre, np.int64), np.array(suf, np.int64),
             np.array(out, np.int64), np.array(first, np.bool_),
             counts, lens, invfact)
    _CHEN_CACHE[key] = table
    return table


# -- signatures ------------------------------------------------------------


def signature(path: SampledPath, order: int) -> PathSignature:
    """Signature stream of a sampled path at every grid time."""
    d = path.dim
    table = chen_table(d, order)
    stream = np.empty((path.n_steps + 1, ta.n_words(d, order)))
    _kernels.chen_stream_single(np.ascontiguousarray(path.increments()),
                                *table, stream)
    return PathSignature(d, order, path.times, stream)


def terminal_signature(values, order: int) -> ta.TruncTensor:
    """Terminal signature of one path given its sample values (n+1, d)."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    d = values.shape[1]
    table = chen_table(d, order)
    acc = np.zeros(ta.n_words(d, order))
    incs = np.ascontiguousarray(np.diff(values, axis=0))[None]
    store = np.empty((1, 0))
    _kernels.terminal_sig_mean(incs, *table, acc, store)
    return ta.TruncTensor(d, order, acc)


def log_signature(sig: ta.TruncTensor, order: int | None = None) -> ta.TruncTensor:
    """Formal logarithm of a signature; requires unit empty-word coefficient."""
    return ta.tensor_log(sig, order)


def time_augment(times, values) -> SampledPath:
    """Prepend time as the first coordinate: t -> (t, x_t)."""
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    return SampledPath(times, np.column_stack([times, values]))


# -- Hoff lead-lag ---------------------------------------------------------
#
# Sampled points are doubled into a lag copy and a lead copy that moves one
# step ahead.  Segments alternate: first the lead jumps to the next sample
# (lag and time frozen), then lag and time move together to the next sample
# (lead frozen).  The final segment is a lead jump, so the path ends at
# (t_{J-1}, X_{J-1}, X_J).  Freezing time during lead moves keeps the lag
# block's time-augmented signature equal to the plain sampled signature,
# which makes the strategy-to-Ito-sum identity exact on discrete data.

LEAD_LAG_LETTERS = (1, 2, 4)  # time, lag price, lead price (3 = lead time, frozen)


def hoff_lead_lag(path: SampledPath, collapse_first: bool = True) -> SampledPath:
    """Lead-lag transform; with collapse_first the first (time) coordinate
    keeps only its lag copy and the lead copy stays frozen."""
    J = path.n_steps
    if J < 2:
        raise ValueError("lead-lag needs at least two steps")
    X = path.values
    d = path.dim
    pts = np.empty((2 * J, 2 * d))
    lag = pts[:, :d]
    lead = pts[:, d:]
    lag[0] = X[0]
    lead[0] = X[0]
    lag[1::2] = X[:J]
    lead[1::2] = X[1:]
    lag[2::2] = X[1:J]
    lead[2::2] = X[1:J]
    if collapse_first:
        lead[:, 0] = X[0, 0]
    param = np.linspace(path.times[0], path.times[-1], 2 * J)
    return SampledPath(param, pts)


def lead_lag_increments(times, prices) -> np.ndarray:
    """Batch lead-lag segment increments over the active letters.

    prices is (I, J+1); returns (I, 2J-1, 3) with columns (time, lag price,
    lead price) per LEAD_LAG_LETTERS; the frozen lead-time channel is
    dropped.  Even segments are lead jumps, odd segments lag moves.
    """
    prices = np.asarray(prices, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    I, J = prices.shape[0], prices.shape[1] - 1
    dS = np.diff(prices, axis=1)
    dt = np.diff(times)
    incs = np.zeros((I, 2 * J - 1, 3))
    incs[:, 0::2, 2] = dS
    incs[:, 1::2, 0] = dt[: J - 1]
    incs[:, 1::2, 1] = dS[:, : J - 1]
    return incs


# -- expected signatures ---------------------------------------------------


def expected_signature_from_increments(incs, dim, order, chunk=4096):
    """Monte Carlo expected signature from (I, segments, d) increments.

    Returns (mean TruncTensor, per-coordinate standard errors)."""
    incs = np.asarray(incs, dtype=np.float64)
    I = incs.shape[0]
    if I < 2:
        raise ValueError("need at least two paths")
    table = chen_table(dim, order)
    nw = ta.n_words(dim, order)
    acc = np.zeros(nw)
    acc2 = np.zeros(nw)
    for lo in range(0, I, chunk):
        block = np.ascontiguousarray(incs[lo:lo + chunk])
        _kernels.terminal_sig_moments(block, *table, acc, acc2)
    mean = acc / I
    var = np.maximum(acc2 / I - mean ** 2, 0.0) * I / (I - 1)
    stderr = np.sqrt(var / I)
    return ta.TruncTensor(dim, order, mean), stderr


def expected_signature_mc(batch, order: int, chunk=4096):
    """Expected terminal signature of a batch of paths (I, n+1, d)."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 2:
        batch = batch[:, :, None]
    return expected_signature_from_increments(np.diff(batch, axis=1),
                                              batch.shape[2], order, chunk)


def terminal_signatures_from_increments(incs, dim, order: int,
                                        store_order: int = 0, chunk=4096):
    """Terminal signatures from (I, segments, d) increments: mean at full
    order plus per-path coefficients kept up to store_order."""
    incs = np.asarray(incs, dtype=np.float64)
    I = incs.shape[0]
    table = chen_table(dim, order)
    acc = np.zeros(ta.n_words(dim, order))
    store = np.empty((I, ta.n_words(dim, store_order) if store_order else 0))
    for lo in range(0, I, chunk):
        block = np.ascontiguousarray(incs[lo:lo + chunk])
        _kernels.terminal_sig_mean(block, *table, acc, store[lo:lo + chunk])
    return ta.TruncTensor(dim, order, acc / I), store


def batch_terminal_signatures(batch, order: int, store_order: int = 0,
                              chunk=4096):
    """Terminal signatures of a batch: mean at full order plus per-path
    coefficients kept up to store_order.  batch is (I, n+1, d) values."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 2:
        batch = batch[:, :, None]
    return terminal_signatures_from_increments(np.diff(batch, axis=1),
                                               batch.shape[2], order,
                                               store_order, chunk)


def bracket_stream(values, ells, order: int) -> np.ndarray:
    """Brackets of a stack of functionals against one path's signature at
    every grid time.  values (n+1, d); returns (n+1, len(ells))."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    d = values.shape[1]
    mat = np.vstack([ell.extend(order).coeffs if ell.order < order
                     else ell.truncate(order).coeffs for ell in ells])
    table = chen_table(d, order)
    out = np.empty((len(values), len(ells)))
    _kernels.stream_brackets(np.ascontiguousarray(np.diff(values, axis=0)),
                             *table, mat, out)
    return out


def bracket_stream_batch(batch, ells, order: int, out=None) -> np.ndarray:
    """bracket_stream over a batch (I, n+1, d) -> (I, n+1, len(ells))."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 2:
        batch = batch[:, :, None]
    I, n1, d = batch.shape
    mat = np.vstack([ell.extend(order).coeffs if ell.order < order
                     else ell.truncate(order).coeffs for ell in ells])
    table = chen_table(d, order)
    if out is None:
        out = np.empty((I, n1, len(ells)))
    incs = np.diff(batch, axis=1)
    for i in range(I):
        _kernels.stream_brackets(np.ascontiguousarray(incs[i]), *table,
                                 mat, out[i])
    return out


def fawcett_expected_sig(t: float, order: int) -> ta.TruncTensor:
    """Expected signature of (s, W_s) on [0, t]: exp of t*(1 + 22/2)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    gen = ta.TruncTensor.from_words(2, min(2, order),
                                    {(1,): t, (2, 2): t / 2})
    return ta.tensor_exp(gen, order)


# -- path batch serialization ----------------------------------------------


def save_paths_csv(fname, times, batch) -> None:
    """Write a batch (I, n+1, d) as rows sample_id, time, v_1..v_d."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 2:
        batch = batch[:, :, None]
    I, n1, d = batch.shape
    ids = np.repeat(np.arange(I), n1)
    t = np.tile(np.asarray(times, dtype=np.float64), I)
    flat = np.column_stack([ids, t, batch.reshape(I * n1, d)])
    header = "sample_id,time," + ",".join(f"v_{k+1}" for k in range(d))
    np.savetxt(fname, flat, delimiter=",", header=header, comments="",
               fmt=["%d", "%.17g"] + ["%.17g"] * d)


def load_paths_csv(fname):
    """Inverse of save_paths_csv: returns (times, batch)."""
    flat = np.loadtxt(fname, delimiter=",", skiprows=1, ndmin=2)
    ids = flat[:, 0].astype(np.int64)
    I = ids.max() + 1
    n1 = len(ids) // I
    if np.any(ids != np.repeat(np.arange(I), n1)):
        raise ValueError("rows must be grouped by sample_id in order")
    times = flat[:n1, 1].copy()
    batch = flat[:, 2:].reshape(I, n1, -1)
    return times, batch


def save_paths_npz(fname, times, batch) -> None:
    """Binary column format: one times array plus the stacked value block."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 2:
        batch = batch[:, :, None]
    np.savez_compressed(fname, times=np.asarray(times, dtype=np.float64),
                        values=batch)


def load_paths_npz(fname):
    with np.load(fname) as rec:
        return rec["times"].copy(), rec["values"].copy()
