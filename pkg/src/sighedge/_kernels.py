"""Numba kernels for sparse table application and Chen signature updates.

All kernels are single-threaded; batch loops are plain loops.  Tables are
premerged COO arrays sorted by output index; `first` flags mark the first
row of each output slot so kernels can assign-then-accumulate and skip
clearing output buffers.
"""

import numpy as np
from numba import njit


# -- sparse bilinear table application -------------------------------------


@njit(cache=True, fastmath=True)
def apply_bilinear_f(left, right, out_idx, mult, x, y, out):
    for r in range(left.shape[0]):
        out[out_idx[r]] += mult[r] * x[left[r]] * y[right[r]]


@njit(cache=True, fastmath=True)
def apply_bilinear_c(left, right, out_idx, mult, x, y, out):
    for r in range(left.shape[0]):
        out[out_idx[r]] += mult[r] * x[left[r]] * y[right[r]]


@njit(cache=True, fastmath=True)
def apply_square_f(left, right, out_idx, mult, x, out):
    for r in range(left.shape[0]):
        out[out_idx[r]] += mult[r] * x[left[r]] * x[right[r]]


@njit(cache=True, fastmath=True)
def apply_square_c(left, right, out_idx, mult, x, out):
    for r in range(left.shape[0]):
        out[out_idx[r]] += mult[r] * x[left[r]] * x[right[r]]


@njit(cache=True, fastmath=True)
def apply_bilinear_cols(left, right, out_idx, mult, X, Y, out):
    ncols = X.shape[1]
    for r in range(left.shape[0]):
        m = mult[r]
        l = left[r]
        q = right[r]
        o = out_idx[r]
        for c in range(ncols):
            out[o, c] += m * X[l, c] * Y[q, c]


@njit(cache=True, fastmath=True)
def apply_square_cols(left, right, out_idx, mult, X, out):
    ncols = X.shape[1]
    for r in range(left.shape[0]):
        m = mult[r]
        l = left[r]
        q = right[r]
        o = out_idx[r]
        for c in range(ncols):
            out[o, c] += m * X[l, c] * X[q, c]


# -- Chen updates ----------------------------------------------------------
#
# One linear-path step multiplies the running signature by the tensor
# exponential of the increment: new[w] = sum_{w = u v} cur[u] * z[v] with
# z[v] = prod_i dx_i^{c_i(v)} / |v|!.  The suffix-split table (pre, suf,
# out, first) enumerates all (u, v) splits of every word, k = 0 split first.


@njit(cache=True, fastmath=True)
def _fill_z(z, counts, lens, invfact, pows):
    for w in range(z.shape[0]):
        acc = invfact[lens[w]]
        for i in range(counts.shape[1]):
            c = counts[w, i]
            if c > 0:
                acc *= pows[i, c]
        z[w] = acc


@njit(cache=True, fastmath=True)
def _fill_pows(pows, inc, maxlen):
    for i in range(inc.shape[0]):
        pows[i, 0] = 1.0
        for k in range(1, maxlen + 1):
            pows[i, k] = pows[i, k - 1] * inc[i]


@njit(cache=True, fastmath=True)
def chen_step_batch(cur, inc, pre, suf, out_idx, first, counts, lens, invfact, out):
    """Advance a batch one step: cur, out are (paths, n_words); inc (paths, d)."""
    npaths, nwords = cur.shape
    d = inc.shape[1]
    maxlen = invfact.shape[0] - 1
    pows = np.empty((d, maxlen + 1))
    z = np.empty(nwords)
    nrows = pre.shape[0]
    for p in range(npaths):
        _fill_pows(pows, inc[p], maxlen)
        _fill_z(z, counts, lens, invfact, pows)
        row = cur[p]
        dst = out[p]
        for r in range(nrows):
            zv = z[suf[r]]
            if first[r]:
                dst[out_idx[r]] = row[pre[r]] * zv
            elif zv != 0.0:
                dst[out_idx[r]] += row[pre[r]] * zv
    return out


@njit(cache=True, fastmath=True)
def chen_stream_single(incs, pre, suf, out_idx, first, counts, lens, invfact, stream):
    """Full stream for one path: stream is (steps+1, n_words), row 0 = unit."""
    steps = incs.shape[0]
    d = incs.shape[1]
    nwords = stream.shape[1]
    maxlen = invfact.shape[0] - 1
    pows = np.empty((d, maxlen + 1))
    z = np.empty(nwords)
    nrows = pre.shape[0]
    stream[0, :] = 0.0
    stream[0, 0] = 1.0
    for j in range(steps):
        _fill_pows(pows, incs[j], maxlen)
        _fill_z(z, counts, lens, invfact, pows)
        row = stream[j]
        dst = stream[j + 1]
        for r in range(nrows):
            zv = z[suf[r]]
            if first[r]:
                dst[out_idx[r]] = row[pre[r]] * zv
            elif zv != 0.0:
                dst[out_idx[r]] += row[pre[r]] * zv
    return stream


@njit(cache=True, fastmath=True)
def terminal_sig_mean(incs, pre, suf, out_idx, first, counts, lens, invfact,
                      acc, store):
    """Terminal signatures of a batch: acc += sum over paths (length n_words),
    store[p] keeps the leading store.shape[1] coefficients per path.

    incs is (paths, segments, d)."""
    npaths, nseg, d = incs.shape
    nwords = acc.shape[0]
    nstore = store.shape[1]
    maxlen = invfact.shape[0] - 1
    pows = np.empty((d, maxlen + 1))
    z = np.empty(nwords)
    cur = np.empty(nwords)
    nxt = np.empty(nwords)
    nrows = pre.shape[0]
    for p in range(npaths):
        cur[:] = 0.0
        cur[0] = 1.0
        for j in range(nseg):
            _fill_pows(pows, incs[p, j], maxlen)
            _fill_z(z, counts, lens, invfact, pows)
            for r in range(nrows):
                zv = z[suf[r]]
                if first[r]:
                    nxt[out_idx[r]] = cur[pre[r]] * zv
                elif zv != 0.0:
                    nxt[out_idx[r]] += cur[pre[r]] * zv
            cur, nxt = nxt, cur
        for w in range(nwords):
            acc[w] += cur[w]
        for w in range(nstore):
            store[p, w] = cur[w]
    return acc


@njit(cache=True, fastmath=True)
def stream_brackets(incs, pre, suf, out_idx, first, counts, lens, invfact,
                    ells, values):
    """Per-time brackets of a functional stack against one path's signature.

    incs (steps, d); ells (n_ell, n_words); values (steps+1, n_ell) output.
    values[j] = ells @ sig_{t_j}."""
    steps = incs.shape[0]
    nwords = ells.shape[1]
    nell = ells.shape[0]
    d = incs.shape[1]
    maxlen = invfact.shape[0] - 1
    pows = np.empty((d, maxlen + 1))
    z = np.empty(nwords)
    cur = np.empty(nwords)
    nxt = np.empty(nwords)
    cur[:] = 0.0
    cur[0] = 1.0
    nrows = pre.shape[0]
    for e in range(nell):
        values[0, e] = ells[e, 0]
    for j in range(steps):
        _fill_pows(pows, incs[j], maxlen)
        _fill_z(z, counts, lens, invfact, pows)
        for r in range(nrows):
            zv = z[suf[r]]
            if first[r]:
                nxt[out_idx[r]] = cur[pre[r]] * zv
            elif zv != 0.0:
                nxt[out_idx[r]] += cur[pre[r]] * zv
        cur, nxt = nxt, cur
        for e in range(nell):
            acc = 0.0
            for w in range(nwords):
                acc += ells[e, w] * cur[w]
            values[j + 1, e] = acc
    return values


@njit(cache=True, fastmath=True)
def terminal_sig_moments(incs, pre, suf, out_idx, first, counts, lens, invfact,
                         acc, acc2):
    """Terminal signatures of a batch: accumulate per-coordinate sum and
    sum of squares (for Monte Carlo means with standard errors).

    incs is (paths, segments, d)."""
    npaths, nseg, d = incs.shape
    nwords = acc.shape[0]
    maxlen = invfact.shape[0] - 1
    pows = np.empty((d, maxlen + 1))
    z = np.empty(nwords)
    cur = np.empty(nwords)
    nxt = np.empty(nwords)
    nrows = pre.shape[0]
    for p in range(npaths):
        cur[:] = 0.0
        cur[0] = 1.0
        for j in range(nseg):
            _fill_pows(pows, incs[p, j], maxlen)
            _fill_z(z, counts, lens, invfact, pows)
            for r in range(nrows):
                zv = z[suf[r]]
                if first[r]:
                    nxt[out_idx[r]] = cur[pre[r]] * zv
                elif zv != 0.0:
                    nxt[out_idx[r]] += cur[pre[r]] * zv
            cur, nxt = nxt, cur
        for w in range(nwords):
            acc[w] += cur[w]
            acc2[w] += cur[w] * cur[w]
    return acc


@njit(cache=True, fastmath=True)
def apply_square_cols_cc(left, right, out_idx, mult, xr, xi, outr, outi):
    """Columnwise symmetric square for complex stacks split into real and
    imaginary parts (split layout keeps the inner column loop vectorizable)."""
    ncols = xr.shape[1]
    for r in range(left.shape[0]):
        l = left[r]
        rr = right[r]
        o = out_idx[r]
        m = mult[r]
        for c in range(ncols):
            ar = xr[l, c]
            ai = xi[l, c]
            br = xr[rr, c]
            bi = xi[rr, c]
            outr[o, c] += m * (ar * br - ai * bi)
            outi[o, c] += m * (ar * bi + ai * br)
    return outr
