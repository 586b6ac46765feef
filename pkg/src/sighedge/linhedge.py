"""Linear signature hedging.

Payoffs are linearized on the terminal signature of the lead-lag price
path; trading strategies linear in the signature of the time-augmented
price then turn quadratic hedging into a finite-dimensional quadratic
program.  Two routes are provided: a deterministic optimization against
an expected lead-lag signature, and a sample-based least squares on the
realized trading P&L.
"""

import itertools
import math
import warnings

import numpy as np

from . import _kernels
from . import sigpath
from . import tensoralg as ta

# Lead-lag tensors live on the compressed alphabet of sigpath: letter 1 is
# time, 2 the lag price, 3 the lead price (the frozen lead-time slot of the
# doubled alphabet is dropped; every word through it has coefficient zero).
LL_DIM = 3
LEAD = 3


def _order_from_width(dim: int, width: int) -> int:
    order = 0
    while ta.n_words(dim, order) < width:
        order += 1
    if ta.n_words(dim, order) != width:
        raise ValueError(f"{width} columns is not a full word basis of "
                         f"alphabet size {dim}")
    return order


class LinearPayoff:
    """A payoff functional on the terminal lead-lag signature."""

    __slots__ = ("xi", "lam_ridge", "residual_rms", "r2")

    def __init__(self, xi: ta.TruncTensor, lam_ridge=0.0, residual_rms=0.0,
                 r2=1.0):
        if xi.dim != LL_DIM:
            raise ValueError(f"payoff tensor must have dim {LL_DIM}")
        self.xi = xi
        self.lam_ridge = lam_ridge
        self.residual_rms = residual_rms
        self.r2 = r2

    def value(self, llsigs) -> np.ndarray:
        """Brackets against rows of terminal lead-lag signatures."""
        llsigs = np.asarray(llsigs, dtype=np.float64)
        k = min(llsigs.shape[-1], len(self.xi.coeffs))
        return llsigs[..., :k] @ self.xi.coeffs[:k]

    def lead_powers(self) -> np.ndarray:
        """Coefficients on powers of S_T - S_0: the m-fold lead-letter
        words over m!, undoing the iterated-integral normalization."""
        return np.array([self.xi.coeff((LEAD,) * m) / math.factorial(m)
                         for m in range(self.xi.order + 1)])

    def to_record(self) -> dict:
        return {"kind": "linear_payoff",
                "letters": list(sigpath.LEAD_LAG_LETTERS),
                "lam_ridge": float(self.lam_ridge),
                "residual_rms": float(self.residual_rms),
                "r2": float(self.r2),
                "tensor": ta.tensor_to_dict(self.xi)}

    @classmethod
    def from_record(cls, record: dict) -> "LinearPayoff":
        if tuple(record["letters"]) != sigpath.LEAD_LAG_LETTERS:
            raise ValueError("unexpected lead-lag alphabet layout")
        return cls(ta.tensor_from_dict(record["tensor"]),
                   record["lam_ridge"], record["residual_rms"], record["r2"])


class LinearStrategy:
    """A trading position linear in the time-augmented price signature."""

    __slots__ = ("alpha",)

    def __init__(self, alpha: ta.TruncTensor):
        if alpha.dim != 2:
            raise ValueError("strategy tensor must have dim 2 (time, price)")
        if not np.all(np.isfinite(alpha.coeffs)):
            raise ValueError("strategy coefficients must be finite")
        self.alpha = alpha

    def to_record(self) -> dict:
        return {"kind": "linear_strategy", "letters": [1, 2],
                "tensor": ta.tensor_to_dict(self.alpha)}

    @classmethod
    def from_record(cls, record: dict) -> "LinearStrategy":
        return cls(ta.tensor_from_dict(record["tensor"]))


# -- payoff linearization ---------------------------------------------------


def lead_lag_signatures(times, prices, order: int, store_order: int = 0,
                        chunk=4096):
    """Terminal lead-lag signatures of a price batch: mean tensor at full
    order plus per-path coefficient rows up to store_order."""
    incs = sigpath.lead_lag_increments(times, prices)
    return sigpath.terminal_signatures_from_increments(
        incs, LL_DIM, order, store_order, chunk)


def regress_payoff(llsigs, payoffs, lam_ridge=1e-6) -> LinearPayoff:
    """Ridge least squares of payoff samples on signature words.

    llsigs holds one row of terminal lead-lag signature coefficients per
    sample; the empty-word column (identically one) provides the
    intercept.  The ridge scale multiplies tr(X'X)/n, so lam_ridge is a
    dimensionless shrinkage.
    """
    X = np.asarray(llsigs, dtype=np.float64)
    y = np.asarray(payoffs, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("llsigs (I, n_words) and payoffs (I,) required")
    if len(X) < 2:
        raise ValueError("need at least two samples")
    order = _order_from_width(LL_DIM, X.shape[1])
    A = X.T @ X
    b = X.T @ y
    if lam_ridge > 0:
        A = A + lam_ridge * (np.trace(A) / len(A)) * np.eye(len(A))
    else:
        try:
            np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            raise ValueError("singular normal equations (signature words "
                             "are collinear); set lam_ridge > 0") from None
    beta = np.linalg.solve(A, b)
    resid = y - X @ beta
    rms = math.sqrt(float(np.mean(resid ** 2)))
    vy = float(np.var(y))
    r2 = 1.0 - float(np.var(resid)) / vy if vy > 0 else 1.0
    return LinearPayoff(ta.TruncTensor(LL_DIM, order, beta), lam_ridge,
                        rms, r2)


def polynomial_payoff_exact(c, s0, order=None) -> LinearPayoff:
    """Exact linearization of the polynomial payoff sum_k c_k S_T^k.

    Expanding about s0 leaves powers of S_T - s0, and (S_T - s0)^m equals
    m! times the m-fold lead-letter coefficient of the lead-lag signature,
    so the tensor carries m! sum_k c_k C(k, m) s0^(k-m) on each such word.
    """
    c = np.asarray(c, dtype=np.float64)
    deg = len(c) - 1
    if order is None:
        order = deg
    if order < deg:
        raise ValueError(f"order {order} cannot hold a degree-{deg} payoff")
    entries = {}
    for m in range(deg + 1):
        a_m = sum(c[k] * math.comb(k, m) * s0 ** (k - m)
                  for k in range(m, deg + 1))
        entries[(LEAD,) * m] = math.factorial(m) * a_m
    return LinearPayoff(ta.TruncTensor.from_words(LL_DIM, order, entries))


def initial_wealth_lin(payoff, esig: ta.TruncTensor) -> float:
    """Price of a linearized payoff: bracket against the expected
    terminal lead-lag signature."""
    xi = payoff.xi if isinstance(payoff, LinearPayoff) else payoff
    return float(ta.bracket(xi, esig))


# -- strategies as payoff functionals ---------------------------------------


def extend_strategy(strategy) -> ta.TruncTensor:
    """Map a strategy functional into the lead-lag payoff algebra.

    The discrete trading gain sum_j <alpha, Sig_{t_j}> dS_{j+1} equals the
    bracket of the returned tensor against the terminal lead-lag
    signature, exactly: each lead jump integrates the frozen lag block's
    signature against the coming price increment, so appending the lead
    letter reproduces the Ito sum word by word.
    """
    alpha = strategy.alpha if isinstance(strategy, LinearStrategy) else strategy
    lifted = ta.embed_letters(alpha, LL_DIM, (1, 2))
    return ta.append_letter(lifted, LEAD)


def signature_streams(times, prices, order: int) -> np.ndarray:
    """Signatures of time-augmented price paths at every grid time.

    prices is (I, J+1); returns (I, J+1, n_words(2, order))."""
    times = np.asarray(times, dtype=np.float64)
    prices = np.asarray(prices, dtype=np.float64)
    I, n1 = prices.shape
    table = sigpath.chen_table(2, order)
    out = np.empty((I, n1, ta.n_words(2, order)))
    incs = np.empty((n1 - 1, 2))
    incs[:, 0] = np.diff(times)
    for i in range(I):
        incs[:, 1] = np.diff(prices[i])
        _kernels.chen_stream_single(incs, *table, out[i])
    return out


def eval_linear_strategy(strategy, sig_streams) -> np.ndarray:
    """Hedge ratio stream <alpha, Sig_t> along sampled paths; accepts a
    PathSignature or a raw (..., n_words) coefficient array."""
    alpha = strategy.alpha if isinstance(strategy, LinearStrategy) else strategy
    coeffs = getattr(sig_streams, "coeffs", sig_streams)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    k = min(coeffs.shape[-1], len(alpha.coeffs))
    return coeffs[..., :k] @ alpha.coeffs[:k]


# -- expected-signature optimization ----------------------------------------


def shuffle_gram(esig: ta.TruncTensor, order: int, max_terms=3e8) -> np.ndarray:
    """Matrix of shuffle brackets K[u, v] = <u shuffle v, esig> over all
    words up to the given order.

    Interleavings are enumerated level pair by level pair with vectorized
    digit arithmetic, so no product table is materialized; the term count
    is sum_{a,b} C(a+b, a) d^(a+b).
    """
    d = esig.dim
    if esig.order < 2 * order:
        raise ValueError(f"expected signature order {esig.order} below the "
                         f"required 2*{order}")
    cost = sum(math.comb(a + b, a) * d ** (a + b)
               for a in range(order + 1) for b in range(order + 1))
    if cost > max_terms:
        raise ValueError(f"Gram assembly needs {cost:.1e} terms, over the "
                         f"cap of {max_terms:.1e}")
    offs = ta.level_offsets(d, order)
    K = np.zeros((offs[-1], offs[-1]))
    for a in range(order + 1):
        ua = np.arange(d ** a, dtype=np.int64)
        dig_a = [(ua // d ** (a - 1 - i)) % d for i in range(a)]
        for b in range(order + 1):
            n = a + b
            level = esig.level(n)
            vb = np.arange(d ** b, dtype=np.int64)
            dig_b = [(vb // d ** (b - 1 - j)) % d for j in range(b)]
            block = np.zeros((d ** a, d ** b))
            for pos in itertools.combinations(range(n), a):
                comp = tuple(q for q in range(n) if q not in pos)
                U = np.zeros(d ** a, dtype=np.int64)
                for i in range(a):
                    U += dig_a[i] * d ** (n - 1 - pos[i])
                V = np.zeros(d ** b, dtype=np.int64)
                for j in range(b):
                    V += dig_b[j] * d ** (n - 1 - comp[j])
                block += level[np.add.outer(U, V)]
            K[offs[a]:offs[a + 1], offs[b]:offs[b + 1]] = block
    return K


def _adam_quadratic(A, b, x0, iters=5000, lr=1e-2, plateau=200, tol=1e-16):
    """Adam on the quadratic x'Ax + 2 b'x; halves the learning rate when
    the running best stalls for `plateau` iterations."""
    x = np.array(x0, dtype=np.float64)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    b1, b2, eps = 0.9, 0.999, 1e-8
    best = np.inf
    best_x = x.copy()
    since = 0
    for t in range(1, iters + 1):
        Ax = A @ x
        obj = float(x @ Ax + 2.0 * (b @ x))
        if obj < best - tol:
            best, best_x, since = obj, x.copy(), 0
        else:
            since += 1
            if since >= plateau:
                lr *= 0.5
                since = 0
        g = 2.0 * (Ax + b)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    obj = float(x @ (A @ x) + 2.0 * (b @ x))
    if obj < best:
        best, best_x = obj, x
    return best_x, best


def _multistart(A, b, n_starts, seed, scale=0.1):
    rng = np.random.default_rng(seed)
    best = np.inf
    best_x = None
    for _ in range(n_starts):
        x0 = rng.uniform(-scale, scale, len(b))
        x, obj = _adam_quadratic(A, b, x0)
        if obj < best:
            best, best_x = obj, x
    return best_x, best


def optimize_strategy_expected(payoff, x0: float, esig: ta.TruncTensor,
                               order: int, method="gd", n_starts=10, seed=0,
                               full_output=False):
    """Deterministic strategy optimization against an expected signature.

    Minimizes the bracket of (x0 + trading gain - payoff)^shuffle-square
    against the expected lead-lag signature, an exact quadratic in the
    strategy coefficients.  Gradient descent from n_starts random guesses
    is the default; method="exact" solves the normal equations (kept as an
    oracle for the descent path).
    """
    xi = payoff.xi if isinstance(payoff, LinearPayoff) else payoff
    p_order = max(order + 1, xi.order)
    K = shuffle_gram(esig, p_order)
    c = -(xi.extend(p_order).coeffs if xi.order < p_order else xi.coeffs)
    c = np.array(c, dtype=np.float64)
    c[0] += x0
    widx = np.array([ta.word_index(LL_DIM, ta.index_word(2, i) + (LEAD,))
                     for i in range(ta.n_words(2, order))])
    Kc = K @ c
    G = K[np.ix_(widx, widx)]
    lin = Kc[widx]
    const = float(c @ Kc)
    if method == "exact":
        sol, *_ = np.linalg.lstsq(G, -lin, rcond=None)
        obj = float(sol @ G @ sol + 2.0 * (lin @ sol))
    elif method == "gd":
        sol, obj = _multistart(G, lin, n_starts, seed)
    else:
        raise ValueError("method must be 'gd' or 'exact'")
    strategy = LinearStrategy(ta.TruncTensor(2, order, sol.copy()))
    if full_output:
        return strategy, {"objective": obj + const, "gram": G,
                          "method": method}
    return strategy


# -- sample-based optimization ----------------------------------------------


def optimize_strategy_bcs(sig_streams, dS, payoffs, method="gd", n_starts=10,
                          seed=0, full_output=False):
    """Sample-based strategy optimization on realized trading P&L.

    Minimizes mean((X0 + sum_j <alpha, Sig_{t_j}> dS_{j+1} - xi_i)^2) over
    the initial wealth and strategy jointly.  The problem is linear least
    squares; gradient descent with multi-starts is the default and
    method="exact" the direct solve.
    """
    streams = np.asarray(sig_streams, dtype=np.float64)
    dS = np.asarray(dS, dtype=np.float64)
    y = np.asarray(payoffs, dtype=np.float64)
    I, n1, nw = streams.shape
    if dS.shape != (I, n1 - 1) or y.shape != (I,):
        raise ValueError("need streams (I, J+1, nw), dS (I, J), payoffs (I,)")
    order = _order_from_width(2, nw)
    F = np.einsum("ijw,ij->iw", streams[:, :-1, :], dS)
    Z = np.empty((I, nw + 1))
    Z[:, 0] = 1.0
    Z[:, 1:] = F
    A = Z.T @ Z / I
    b = -(Z.T @ y) / I
    const = float(y @ y) / I
    if np.any(F.var(axis=0) == 0.0):
        warnings.warn("degenerate strategy features (zero variance); "
                      "adding ridge", RuntimeWarning)
        A = A + 1e-8 * (np.trace(A) / len(A)) * np.eye(len(A))
    if method == "exact":
        theta, *_ = np.linalg.lstsq(A, -b, rcond=None)
        obj = float(theta @ A @ theta + 2.0 * (b @ theta))
    elif method == "gd":
        theta, obj = _multistart(A, b, n_starts, seed)
    else:
        raise ValueError("method must be 'gd' or 'exact'")
    strategy = LinearStrategy(ta.TruncTensor(2, order, theta[1:].copy()))
    if full_output:
        return float(theta[0]), strategy, {"objective": obj + const,
                                           "method": method}
    return float(theta[0]), strategy
