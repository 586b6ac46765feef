"""Fourier pricing and quadratic hedging via the tensor Riccati equation.

The characteristic functional of the payoff transform in a signature
volatility model is exp(<psi_t, sig_t>) where the complex tensor psi solves
a backward Riccati ODE in the shuffle algebra.  Prices and hedge ratios
follow by damped Fourier inversion with a Black-Scholes control variate.
The module also carries the Black-Scholes toolkit and the closed-form
Heston characteristic functional used as an oracle and as the true-model
hedger.
"""

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from . import tensoralg as ta
from . import sigpath as sp
from . import _kernels
from .models import SigVolRep


class FourierError(RuntimeError):
    pass


# -- Black-Scholes toolkit -------------------------------------------------


def _norm_pdf(x):
    return np.exp(-0.5 * np.asarray(x) ** 2) / math.sqrt(2 * math.pi)


def bs_price(s, k, sigma, tau):
    """European call, zero rates."""
    s, k = np.asarray(s, dtype=float), np.asarray(k, dtype=float)
    vol = sigma * math.sqrt(tau)
    if vol <= 0:
        out = np.maximum(s - k, 0.0)
        return out if out.ndim else float(out)
    d1 = np.log(s / k) / vol + vol / 2
    out = s * ndtr(d1) - k * ndtr(d1 - vol)
    return out if out.ndim else float(out)


def bs_delta(s, k, sigma, tau):
    s, k = np.asarray(s, dtype=float), np.asarray(k, dtype=float)
    vol = sigma * math.sqrt(tau)
    if vol <= 0:
        out = np.where(s > k, 1.0, 0.0)
        return out if out.ndim else float(out)
    d1 = np.log(s / k) / vol + vol / 2
    out = ndtr(d1)
    return out if out.ndim else float(out)


def bs_put_price(s, k, sigma, tau):
    return bs_price(s, k, sigma, tau) - s + k


def implied_vol(price, s, k, tau, tol=1e-10, max_iter=100):
    """Safeguarded Newton for the Black-Scholes call volatility."""
    lo_bound = max(s - k, 0.0)
    if price < lo_bound or price >= s:
        raise ValueError(f"price {price} violates no-arbitrage bounds "
                         f"[{lo_bound}, {s})")
    lo, hi = 1e-8, 5.0
    sigma = 0.2
    for _ in range(max_iter):
        val = bs_price(s, k, sigma, tau) - price
        if val > 0:
            hi = sigma
        else:
            lo = sigma
        vol = sigma * math.sqrt(tau)
        d1 = math.log(s / k) / vol + vol / 2
        vega = s * float(_norm_pdf(d1)) * math.sqrt(tau)
        step = val / vega if vega > 1e-300 else 0.0
        nxt = sigma - step
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if abs(nxt - sigma) < tol:
            return nxt
        sigma = nxt
    return sigma


def bs_asian_price(s, k, sigma, t, horizon, running=0.0):
    """Geometric-average Asian call under Black-Scholes, zero rates.

    running is the accumulated integral of log S over [0, t]; the average
    divides by the full horizon."""
    T, tau = horizon, horizon - t
    s = np.asarray(s, dtype=float)
    var = sigma ** 2 * tau ** 3 / (3 * T ** 2)
    fwd = np.exp(running / T + (tau / T) * np.log(s)
                 - sigma ** 2 * tau ** 2 / (4 * T) + var / 2)
    if var <= 0:
        out = np.maximum(fwd - k, 0.0)
        return out if out.ndim else float(out)
    sd = math.sqrt(var)
    d1 = np.log(fwd / k) / sd + sd / 2
    out = fwd * ndtr(d1) - k * ndtr(d1 - sd)
    return out if out.ndim else float(out)


def bs_asian_delta(s, k, sigma, t, horizon, running=0.0):
    T, tau = horizon, horizon - t
    s = np.asarray(s, dtype=float)
    var = sigma ** 2 * tau ** 3 / (3 * T ** 2)
    fwd = np.exp(running / T + (tau / T) * np.log(s)
                 - sigma ** 2 * tau ** 2 / (4 * T) + var / 2)
    if var <= 0:
        out = np.where(fwd > k, fwd * tau / (T * s), 0.0)
        return out if out.ndim else float(out)
    sd = math.sqrt(var)
    d1 = np.log(fwd / k) / sd + sd / 2
    out = fwd * ndtr(d1) * tau / (T * s)
    return out if out.ndim else float(out)


# -- payoff transforms and quadrature --------------------------------------


@dataclass(frozen=True)
class PayoffTransform:
    """Fourier transform data of the payoff: f(t, z) = iz w(t)."""

    kind: str
    strike: float
    horizon: float

    def __post_init__(self):
        if self.kind not in ("european", "geom_asian"):
            raise ValueError(f"unsupported transform kind {self.kind!r}")

    def weight(self, t):
        if self.kind == "european":
            return 1.0
        return (self.horizon - t) / self.horizon

    def f(self, t, z):
        return 1j * np.asarray(z) * self.weight(t)

    def increment_weight(self, t_lo, t_hi):
        """Weight on the logS increment over [t_lo, t_hi] in the running
        integral; midpoint so the Asian terminal value matches the
        trapezoidal average used by the payoff."""
        if self.kind == "european":
            return 1.0
        return (self.horizon - 0.5 * (t_lo + t_hi)) / self.horizon

    def bs_log_cf(self, z, t, sigma):
        """log E_t[exp(iz . remaining transform)] under constant volatility."""
        z = np.asarray(z)
        tau = self.horizon - t
        if self.kind == "european":
            return (-z ** 2 - 1j * z) * sigma ** 2 * tau / 2
        T = self.horizon
        return 0.5 * sigma ** 2 * (-z ** 2 * tau ** 3 / (3 * T ** 2)
                                   - 1j * z * tau ** 2 / (2 * T))

    def bs_value(self, s, sigma, t, running=0.0):
        if self.kind == "european":
            return bs_price(s, self.strike, sigma, self.horizon - t)
        return bs_asian_price(s, self.strike, sigma, t, self.horizon, running)

    def bs_hedge(self, s, sigma, t, running=0.0):
        if self.kind == "european":
            return bs_delta(s, self.strike, sigma, self.horizon - t)
        return bs_asian_delta(s, self.strike, sigma, t, self.horizon, running)


class QuadratureRule:
    """Gauss-Laguerre nodes on (0, inf) with the e^{-u} weight absorbed."""

    __slots__ = ("u", "w", "z")

    def __init__(self, u, w):
        u = np.asarray(u, dtype=float)
        w = np.asarray(w, dtype=float)
        if np.any(np.diff(u) <= 0) or np.any(w <= 0):
            raise ValueError("nodes must increase and weights be positive")
        self.u = u
        self.w = w
        self.z = u - 0.5j

    @classmethod
    def gauss_laguerre(cls, n=64, scale=1.0):
        """Rule for integrals over (0, inf); scale < 1 compresses the nodes
        toward the origin (substitute u = scale v), which keeps them inside
        the region where a truncated Riccati solution stays accurate."""
        if scale <= 0:
            raise ValueError("scale must be positive")
        u, w = np.polynomial.laguerre.laggauss(n)
        return cls(scale * u, scale * w * np.exp(u))

    def __len__(self):
        return len(self.u)


def _z_nodes(quad):
    """Quadrature nodes plus the mean node z = -i used for E[S or G]."""
    return np.append(quad.z, -1j)


# -- Heston characteristic functional (oracle and true-model hedger) -------


def heston_cf_grid(z, transform, model, grid, substeps=32):
    """Affine coefficients (A, B) of log E_t[exp(iz transform)] = A + B V_t,
    integrated backward with RK4, returned at the requested grid times."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    grid = np.asarray(grid, dtype=float)
    kappa, theta, eta, rho = model.kappa, model.theta, model.eta, model.rho
    n_t = len(grid)
    A = np.zeros((n_t, len(z)), dtype=complex)
    B = np.zeros((n_t, len(z)), dtype=complex)

    def rhs(t, b):
        f = transform.f(t, z)
        return (f * f - f) / 2 + (rho * eta * f - kappa) * b + 0.5 * eta ** 2 * b * b

    a = np.zeros(len(z), dtype=complex)
    b = np.zeros(len(z), dtype=complex)
    for i in range(n_t - 1, 0, -1):
        h = (grid[i] - grid[i - 1]) / substeps
        for ss in range(substeps):
            t_hi = grid[i] - ss * h
            k1 = rhs(t_hi, b)
            b2 = b + h / 2 * k1
            k2 = rhs(t_hi - h / 2, b2)
            b3 = b + h / 2 * k2
            k3 = rhs(t_hi - h / 2, b3)
            b4 = b + h * k3
            k4 = rhs(t_hi - h, b4)
            a = a + kappa * theta * h / 6 * (b + 2 * b2 + 2 * b3 + b4)
            b = b + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        A[i - 1] = a
        B[i - 1] = b
    return A, B


def heston_cf(z, transform, model, substeps=1024):
    """Time-0 characteristic functional exp(A + B V0) via the scalar ODE."""
    A, B = heston_cf_grid(z, transform, model, [0.0, transform.horizon],
                          substeps=substeps)
    return np.exp(A[0] + B[0] * model.v0)


def heston_cf_closed(z, tau, model):
    """Textbook Heston formula for E[exp(iz log(S_T/S_0))], zero rates."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    kappa, theta, eta, rho, v0 = (model.kappa, model.theta, model.eta,
                                  model.rho, model.v0)
    x = 1j * z
    beta = kappa - rho * eta * x
    d = np.sqrt(beta ** 2 - eta ** 2 * (x ** 2 - x))
    g = (beta - d) / (beta + d)
    e = np.exp(-d * tau)
    B = (beta - d) / eta ** 2 * (1 - e) / (1 - g * e)
    A = kappa * theta / eta ** 2 * ((beta - d) * tau - 2 * np.log((1 - g * e) / (1 - g)))
    return np.exp(A + B * v0)


# -- tensor Riccati --------------------------------------------------------


@lru_cache(maxsize=None)
def _append_idx(order, letter):
    """Index map: word index at order-1 -> index of the word with the letter
    appended, over d=2."""
    if order < 1:
        return np.empty(0, dtype=np.int64)
    nsub = ta.n_words(2, order - 1)
    out = np.empty(nsub, dtype=np.int64)
    for i in range(nsub):
        out[i] = ta.word_index(2, ta.index_word(2, i) + (letter,))
    return out


def _project_cols(P, idx, nsub):
    out = np.zeros_like(P)
    out[:nsub] = P[idx]
    return out


@dataclass
class RiccatiSolution:
    """Backward Riccati solution: psi[j] is the (n_words, n_nodes) complex
    coefficient stack at grid time times[j]; node layout is the quadrature
    nodes u - i/2 followed by the mean node -i."""

    order: int
    rep_order: int
    z: np.ndarray
    times: np.ndarray
    psi: np.ndarray
    transform: PayoffTransform
    rho: float

    @property
    def phi0(self):
        if self.times[0] != 0.0:
            raise ValueError("solution was not saved at t=0")
        return np.exp(self.psi[0, 0, :])

    def save(self, path):
        np.savez_compressed(
            path, order=self.order, rep_order=self.rep_order, z=self.z,
            times=self.times, psi=self.psi, kind=self.transform.kind,
            strike=self.transform.strike, horizon=self.transform.horizon,
            rho=self.rho)

    @classmethod
    def load(cls, path):
        with np.load(path) as rec:
            transform = PayoffTransform(str(rec["kind"]), float(rec["strike"]),
                                        float(rec["horizon"]))
            return cls(int(rec["order"]), int(rec["rep_order"]), rec["z"],
                       rec["times"], rec["psi"], transform, float(rec["rho"]))


def solve_riccati(rep, transform, z, rho, n_steps=512, grid=None,
                  psi_order=None):
    """Integrate the backward tensor Riccati equation at the given complex
    nodes z (shape (n_nodes,)).

    The right-hand side -psi' = (1/2)(psi|2)^sq + rho f (sigma shuffle psi|2)
    + (1/2) psi|22 + psi|1 + ((f^2-f)/2) sigma^sq is assembled as one
    completed square (1/2)(psi|2 + rho f sigma)^sq
    + ((f^2 - f - rho^2 f^2)/2) sigma^sq + (1/2) psi|22 + psi|1,
    which costs a single symmetric shuffle product per evaluation.

    grid: optional increasing times (0 ... T) at which psi is stored;
    n_steps is the total backward step count, rounded up to a multiple of
    the number of grid intervals.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    T = transform.horizon
    order = 2 * rep.order if psi_order is None else psi_order
    if grid is None:
        grid = np.array([0.0, T])
    grid = np.asarray(grid, dtype=float)
    if abs(grid[0]) > 1e-12 or abs(grid[-1] - T) > 1e-9 * max(T, 1.0):
        raise ValueError("grid must span [0, horizon]")
    n_int = len(grid) - 1
    substeps = max(1, -(-n_steps // n_int))
    total = substeps * n_int
    h = T / total

    nw = ta.n_words(2, order)
    nz = len(z)
    idx1 = _append_idx(order, 1)
    idx2 = _append_idx(order, 2)
    nsub = ta.n_words(2, order - 1) if order else 0
    table = ta.build_shuffle_square_table(2, order, order)

    # volatility representation and its shuffle square at every RK4 stage
    # time (the half grid of the solver); constant reps collapse to one pair
    if rep.constant:
        sig_c = rep.at(0.0).extend(order).coeffs.astype(float)
        sig2_c = ta.shuffle_square(ta.TruncTensor(2, order, sig_c), order).coeffs
        coeff_scale = np.abs(sig_c).max()

        def sigma_at(_half_idx):
            return sig_c, sig2_c
    else:
        half_times = np.linspace(0.0, T, 2 * total + 1)
        sig_all = np.empty((len(half_times), nw))
        sig2_all = np.empty((len(half_times), nw))
        for i, t in enumerate(half_times):
            st = rep.at(t).extend(order)
            sig_all[i] = st.coeffs
            sig2_all[i] = ta.shuffle_square(st, order).coeffs
        coeff_scale = np.abs(sig_all).max()

        def sigma_at(half_idx):
            return sig_all[half_idx], sig2_all[half_idx]

    # kernel-expansion representations carry word coefficients far above
    # unit size; the divergence guard must scale with their square, which
    # is the natural unit of the quadratic right-hand side
    psi_cap = 1e8 * max(1.0, coeff_scale) ** 2

    sq_r = np.empty((nw, nz))
    sq_i = np.empty((nw, nz))

    def rhs(half_idx, t, P):
        f = transform.f(t, z)
        sig_t, sig2_t = sigma_at(half_idx)
        Y = _project_cols(P, idx2, nsub)
        Y += sig_t[:, None] * (rho * f)[None, :]
        yr = np.ascontiguousarray(Y.real)
        yi = np.ascontiguousarray(Y.imag)
        sq_r[:] = 0.0
        sq_i[:] = 0.0
        _kernels.apply_square_cols_cc(table.left, table.right, table.out,
                                      table.mult, yr, yi, sq_r, sq_i)
        out = 0.5 * (sq_r + 1j * sq_i)
        out += sig2_t[:, None] * (0.5 * (f * f - f - (rho * f) ** 2))[None, :]
        out += _project_cols(_project_cols(P, idx2, nsub), idx2, nsub) * 0.5
        out += _project_cols(P, idx1, nsub)
        return out

    psi_save = np.zeros((n_int + 1, nw, nz), dtype=complex)
    P = np.zeros((nw, nz), dtype=complex)
    for i in range(total, 0, -1):
        t_hi = i * h
        k1 = rhs(2 * i, t_hi, P)
        k2 = rhs(2 * i - 1, t_hi - h / 2, P + (h / 2) * k1)
        k3 = rhs(2 * i - 1, t_hi - h / 2, P + (h / 2) * k2)
        k4 = rhs(2 * i - 2, t_hi - h, P + h * k3)
        P = P + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        amax = np.abs(P).max()
        if not np.isfinite(amax) or amax > psi_cap:
            raise FourierError(
                f"Riccati blow-up at t = {t_hi - h:.6g} (max |psi| = {amax:.3g})")
        if (i - 1) % substeps == 0:
            psi_save[(i - 1) // substeps] = P
    return RiccatiSolution(order, rep.order, z, grid.copy(), psi_save,
                           transform, rho)


def char_functional(sol, j, sig_coeffs):
    """phi_t(z) = exp(<psi_t(z), sig_t>) for signature coefficient rows
    sig_coeffs of shape (..., n_words)."""
    return np.exp(np.asarray(sig_coeffs) @ sol.psi[j])


def solve_riccati_nodes(rep, transform, rho, quad, n_steps=512, grid=None,
                        psi_order=None):
    """Riccati solution on the quadrature nodes plus the mean node -i."""
    return solve_riccati(rep, transform, _z_nodes(quad), rho,
                         n_steps=n_steps, grid=grid, psi_order=psi_order)


# -- pricing and hedging ---------------------------------------------------


def _check_node_layout(sol, quad):
    z_all = _z_nodes(quad)
    if sol.psi.shape[2] != len(z_all) or not np.allclose(sol.z, z_all):
        raise ValueError("solution nodes do not match quadrature plus mean node")


def _inversion_weights(quad, strike, s0):
    m0 = math.log(strike / s0)
    pref = quad.w * np.exp(-1j * quad.z * m0) / (quad.u ** 2 + 0.25)
    return pref


def fourier_initial_wealth(sol, quad, s0, sigma_bs, call=True):
    """Time-0 price by damped inversion with the Black-Scholes control
    variate: the closed-form BS price replaces its own quadrature, so only
    the model-vs-BS difference is integrated numerically."""
    _check_node_layout(sol, quad)
    transform = sol.transform
    K = transform.strike
    M0 = np.exp(sol.psi[0, 0, :])
    Mbs = np.exp(transform.bs_log_cf(sol.z, 0.0, sigma_bs))
    diff = M0 - Mbs
    pref = _inversion_weights(quad, K, s0)
    integrand = pref * diff[:len(quad)]
    tail = abs(integrand[-1])
    total = abs(np.sum(integrand)) + 1e-300
    if tail > 1e-4 * total:
        warnings.warn(f"quadrature tail weight {tail:.2e} vs total {total:.2e}; "
                      "consider more nodes", RuntimeWarning)
    price = (transform.bs_value(s0, sigma_bs, 0.0)
             + s0 * diff[-1].real
             - (K / math.pi) * np.sum(integrand).real)
    if not call:
        price = price - s0 * M0[-1].real + K
    return float(price)


def fourier_hedge(batch, rep, sol, quad, sigma_bs, chunk=4000):
    """Quadratic-hedging ratios along simulated paths.

    Returns alphas of shape (n_paths, n_steps); alphas[:, j] is held over
    (t_j, t_{j+1}].  The signature state of (t, W) advances by Chen steps;
    each time slice prices the model-vs-BS difference sensitivity
    zeta = (f/S)(M - M^BS) + (rho/(S Sigma_hat)) M <psi|2, sig>
    and adds the closed-form BS hedge and the mean-node term."""
    _check_node_layout(sol, quad)
    transform = sol.transform
    rho = sol.rho
    K, T = transform.strike, transform.horizon
    times = batch.times
    if len(times) != len(sol.times) or not np.allclose(times, sol.times):
        raise ValueError("batch grid does not match the Riccati grid")
    I, J = batch.dW.shape
    order = sol.order
    nw = ta.n_words(2, order)
    nz_all = sol.psi.shape[2]
    nq = len(quad)
    idx2 = _append_idx(order, 2)
    nsub = ta.n_words(2, order - 1) if order else 0
    table = sp.chen_table(2, order)
    s0 = batch.S[0, 0]
    pref = _inversion_weights(quad, K, s0)
    sigma_pad = rep.at(0.0).extend(order).coeffs.astype(float) if rep.constant \
        else None
    dt = np.diff(times)
    logS = np.log(batch.S)

    # per-time bracket matrices [psi_t, psi_t|2, sigma_t] are assembled once
    bmats = []
    for j in range(J):
        psi_j = sol.psi[j]
        p2 = _project_cols(psi_j, idx2, nsub)
        spad = sigma_pad if sigma_pad is not None \
            else rep.at(times[j]).extend(order).coeffs.astype(float)
        bm = np.concatenate([psi_j, p2, spad[:, None].astype(complex)], axis=1)
        bmats.append(np.ascontiguousarray(bm))

    alphas = np.empty((I, J))
    for lo in range(0, I, chunk):
        hi = min(lo + chunk, I)
        b = hi - lo
        cur = np.zeros((b, nw))
        cur[:, 0] = 1.0
        nxt = np.empty_like(cur)
        usum = np.zeros(b)
        running = np.zeros(b)
        for j in range(J):
            t = times[j]
            S_j = batch.S[lo:hi, j]
            G = (cur @ bmats[j].view(np.float64).reshape(nw, -1)).view(complex)
            Gpsi = G[:, :nz_all]
            Gp2 = G[:, nz_all:2 * nz_all]
            sighat = G[:, -1].real
            if np.any(np.abs(sighat) < 1e-12):
                raise FourierError(f"model volatility vanished at t = {t:.6g}")
            f_j = transform.f(t, sol.z)
            ephase = np.exp((1j * sol.z)[None, :] * usum[:, None])
            M = np.exp(Gpsi) * ephase
            Mbs = np.exp(transform.bs_log_cf(sol.z, t, sigma_bs))[None, :] * ephase
            zeta = (f_j[None, :] / S_j[:, None]) * (M - Mbs) \
                + (rho / (S_j * sighat))[:, None] * M * Gp2
            alpha = transform.bs_hedge(S_j, sigma_bs, t, running)
            alpha = alpha + s0 * zeta[:, -1].real
            alpha = alpha - (K / math.pi) * (zeta[:, :nq] @ pref).real
            alphas[lo:hi, j] = alpha
            incs = np.column_stack([np.full(b, dt[j]), batch.dW[lo:hi, j]])
            _kernels.chen_step_batch(cur, incs, *table, nxt)
            cur, nxt = nxt, cur
            dlog = logS[lo:hi, j + 1] - logS[lo:hi, j]
            usum += transform.increment_weight(times[j], times[j + 1]) * dlog
            running += dt[j] * 0.5 * (logS[lo:hi, j] + logS[lo:hi, j + 1])
    return alphas


def heston_fourier_hedge(batch, transform, model, quad, substeps=32):
    """True-model quadratic hedge under Heston via the affine characteristic
    functional; same inversion structure as fourier_hedge with
    zeta = (f/S)(M - M^BS) + (rho eta / S) M B_t."""
    z_all = _z_nodes(quad)
    times = batch.times
    A, B = heston_cf_grid(z_all, transform, model, times, substeps=substeps)
    I, J = batch.dW.shape
    K, T = transform.strike, transform.horizon
    s0 = batch.S[0, 0]
    sigma_bs = math.sqrt(model.v0)
    pref = _inversion_weights(quad, K, s0)
    logS = np.log(batch.S)
    dt = np.diff(times)
    nq = len(quad)
    alphas = np.empty((I, J))
    usum = np.zeros(I)
    running = np.zeros(I)
    for j in range(J):
        t = times[j]
        S_j = batch.S[:, j]
        V_j = batch.Sigma[:, j] ** 2
        f_j = transform.f(t, z_all)
        ephase = np.exp((1j * z_all)[None, :] * usum[:, None])
        M = np.exp(A[j][None, :] + B[j][None, :] * V_j[:, None]) * ephase
        Mbs = np.exp(transform.bs_log_cf(z_all, t, sigma_bs))[None, :] * ephase
        zeta = (f_j[None, :] / S_j[:, None]) * (M - Mbs) \
            + (model.rho * model.eta / S_j)[:, None] * M * B[j][None, :]
        alpha = transform.bs_hedge(S_j, sigma_bs, t, running)
        alpha = alpha + s0 * zeta[:, -1].real
        alpha = alpha - (K / math.pi) * (zeta[:, :nq] @ pref).real
        alphas[:, j] = alpha
        dlog = logS[:, j + 1] - logS[:, j]
        usum += transform.increment_weight(times[j], times[j + 1]) * dlog
        running += dt[j] * 0.5 * (logS[:, j] + logS[:, j + 1])
    return alphas


def heston_initial_wealth(transform, model, quad, substeps=1024, call=True):
    """Time-0 price under Heston by the same damped inversion."""
    z_all = _z_nodes(quad)
    M0 = heston_cf(z_all, transform, model, substeps=substeps)
    sigma_bs = math.sqrt(model.v0)
    Mbs = np.exp(transform.bs_log_cf(z_all, 0.0, sigma_bs))
    diff = M0 - Mbs
    K = transform.strike
    s0 = 1.0
    pref = _inversion_weights(quad, K, s0)
    price = (transform.bs_value(s0, sigma_bs, 0.0)
             + s0 * diff[-1].real
             - (K / math.pi) * np.sum(pref * diff[:len(quad)]).real)
    if not call:
        price = price - s0 * M0[-1].real + K
    return float(price)
