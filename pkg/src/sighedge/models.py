"""Market simulators and signature representations of the volatility.

All models drive the spot by dS = S Sigma dB with B = rho W + sqrt(1-rho^2)
W_perp.  Four volatility choices are covered: constant (Black-Scholes), CIR
(Heston), a shifted fractional Bergomi exponential, and a delayed equation
with an exponential moving average feedback.  Each non-constant model also
has a representation of Sigma_t as a linear functional of the signature of
(t, W), which is what the Fourier hedging machinery consumes.
"""

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import tensoralg as ta
from . import sigpath as sp
from . import _kernels


# -- model specifications --------------------------------------------------


@dataclass(frozen=True)
class GBM:
    sigma: float = 0.25
    rho: float = -0.7
    s0: float = 1.0


@dataclass(frozen=True)
class Heston:
    v0: float = 0.0625
    kappa: float = 4.0
    theta: float = 0.0625
    eta: float = 0.7
    rho: float = -0.7
    s0: float = 1.0


@dataclass(frozen=True)
class ShiftedFBergomi:
    f0: float = 0.0625
    varsigma: float = 1.6
    hurst: float = 0.1
    eps: float = 1.0 / 52.0
    rho: float = -0.7
    s0: float = 1.0


@dataclass(frozen=True)
class DelayedEq:
    sigma0: float = 0.25
    kappa: float = 2.0
    theta: float = 0.25
    eta: float = -0.12
    alpha: float = 1.2
    varsigma: float = 1.0
    lam: float = -3.0
    rho: float = -0.7
    s0: float = 1.0


def preset(name: str):
    """Parameter sets used throughout the experiments."""
    table = {
        "gbm": GBM(),
        "heston": Heston(),
        "heston_cir": Heston(v0=0.0625, kappa=2.0, theta=0.0625, eta=0.5),
        "fbergomi": ShiftedFBergomi(),
        "delayed": DelayedEq(),
    }
    if name not in table:
        raise ValueError(f"unknown model preset {name!r}")
    return table[name]


class SimBatch:
    """Simulated trajectories plus the driving noise and seed record."""

    __slots__ = ("times", "S", "Sigma", "dW", "dWp", "dB", "seed_record")

    def __init__(self, times, S, Sigma, dW, dWp, dB, seed_record):
        self.times = times
        self.S = S
        self.Sigma = Sigma
        self.dW = dW
        self.dWp = dWp
        self.dB = dB
        self.seed_record = seed_record

    @property
    def n_paths(self) -> int:
        return self.S.shape[0]

    @property
    def n_steps(self) -> int:
        return self.S.shape[1] - 1


def path_normals(seed: int, purpose: str, n_paths: int, n_draws: int,
                 streams: int = 2) -> np.ndarray:
    """Counter-based per-path Gaussian draws, shape (n_paths, streams, n_draws).

    Each path gets its own Philox stream derived from (seed, purpose,
    path index), so batches are reproducible independently of batch size
    or evaluation order."""
    root = np.random.SeedSequence((int(seed), zlib.crc32(purpose.encode())))
    out = np.empty((n_paths, streams, n_draws))
    for i, child in enumerate(root.spawn(n_paths)):
        out[i] = np.random.Generator(np.random.Philox(child)).standard_normal(
            (streams, n_draws))
    return out


def simulate(model, n_paths: int, n_steps: int, horizon: float, seed: int,
             purpose: str = "train") -> SimBatch:
    """Simulate the spot and volatility on a uniform grid.

    The spot always follows the log-Euler step S_{j+1} = S_j exp(Sigma_j
    dB_j - Sigma_j^2 dt / 2); the volatility discretization depends on the
    model (full-truncation Euler for CIR, left-point Riemann sum for the
    fractional kernel, Euler plus trapezoidal moving average for the
    delayed equation)."""
    if n_paths < 1 or n_steps < 1 or horizon <= 0:
        raise ValueError("need n_paths, n_steps >= 1 and horizon > 0")
    dt = horizon / n_steps
    times = np.linspace(0.0, horizon, n_steps + 1)
    Z = path_normals(seed, purpose, n_paths, n_steps)
    dW = Z[:, 0] * math.sqrt(dt)
    dWp = Z[:, 1] * math.sqrt(dt)
    dB = model.rho * dW + math.sqrt(1.0 - model.rho ** 2) * dWp
    Sigma = _volatility_paths(model, times, dW)
    S = _log_euler(model.s0, Sigma, dB, dt)
    record = {"seed": int(seed), "purpose": purpose, "model": repr(model),
              "n_paths": n_paths, "n_steps": n_steps, "horizon": horizon}
    return SimBatch(times, S, Sigma, dW, dWp, dB, record)


def _log_euler(s0, Sigma, dB, dt):
    drift = Sigma[:, :-1] ** 2 * (dt / 2.0)
    logS = np.concatenate(
        [np.zeros((len(dB), 1)), np.cumsum(Sigma[:, :-1] * dB - drift, axis=1)],
        axis=1)
    return s0 * np.exp(logS)


def _volatility_paths(model, times, dW):
    I, J = dW.shape
    dt = times[1] - times[0]
    if isinstance(model, GBM):
        return np.full((I, J + 1), model.sigma)
    if isinstance(model, Heston):
        V = np.empty((I, J + 1))
        V[:, 0] = model.v0
        v = np.full(I, model.v0)
        for j in range(J):
            vp = np.maximum(v, 0.0)
            v = v + model.kappa * (model.theta - vp) * dt \
                + model.eta * np.sqrt(vp) * dW[:, j]
            V[:, j + 1] = np.maximum(v, 0.0)
        return np.sqrt(V)
    if isinstance(model, ShiftedFBergomi):
        # X_t = sum_{k<j} (eps + t_j - t_k)^{H-1/2} dW_k, left-point kernel.
        # Compensating with the exact discrete variance of X keeps
        # E[Sigma_t^2] = f0 at any step size.
        H, eps, vs = model.hurst, model.eps, model.varsigma
        K = np.zeros((J + 1, J))
        for j in range(1, J + 1):
            K[j, :j] = (eps + times[j] - times[:j]) ** (H - 0.5)
        X = dW @ K.T
        var_x = (K ** 2).sum(axis=1) * dt
        return math.sqrt(model.f0) * np.exp(0.5 * vs * X - vs ** 2 / 4 * var_x)
    if isinstance(model, DelayedEq):
        Sig = np.empty((I, J + 1))
        Sig[:, 0] = model.sigma0
        ema = np.zeros(I)
        decay = math.exp(-model.lam * dt)
        for j in range(J):
            s = Sig[:, j]
            vol_of_vol = model.eta + model.alpha * s + model.varsigma * ema
            Sig[:, j + 1] = s + model.kappa * (model.theta - s) * dt \
                + vol_of_vol * dW[:, j]
            ema = decay * ema + (dt / 2.0) * (decay * s + Sig[:, j + 1])
        return Sig
    raise ValueError(f"invalid model spec {model!r}")


# -- signature representations of the volatility ---------------------------


class SigVolRep:
    """Sigma_t = <sigma_t, signature of (t, W)>, constant or time-dependent."""

    __slots__ = ("order", "_tensor", "_fn")

    def __init__(self, order, tensor=None, fn=None):
        if (tensor is None) == (fn is None):
            raise ValueError("give exactly one of tensor or fn")
        self.order = order
        self._tensor = tensor
        self._fn = fn

    @property
    def constant(self) -> bool:
        return self._tensor is not None

    def at(self, t: float) -> ta.TruncTensor:
        return self._tensor if self.constant else self._fn(t)


def sigrep_constant(sigma_bs: float, order: int = 0) -> SigVolRep:
    return SigVolRep(order, tensor=ta.TruncTensor.from_words(
        2, order, {(): sigma_bs}))


def sigrep_fbergomi(model: ShiftedFBergomi, order: int) -> SigVolRep:
    """sigma_t = sqrt(f0) shuffle_exp(u_t empty + k_t 2), with the shifted
    fractional kernel expanded in powers of the time letter."""
    H, eps, vs = model.hurst, model.eps, model.varsigma
    root_f0 = math.sqrt(model.f0)

    def at(t: float) -> ta.TruncTensor:
        k = ta.TruncTensor.zero(2, order - 1 if order else 0)
        rising = 1.0
        for n in range(k.order + 1):
            coeff = 0.5 * vs * (eps + t) ** (H - 0.5 - n) * rising
            k.coeffs[ta.word_index(2, (1,) * n)] = coeff
            rising *= 0.5 - H + n
        u = (vs ** 2 / (8 * H)) * (eps ** (2 * H) - (eps + t) ** (2 * H))
        gen = ta.append_letter(k, 2, order) + ta.TruncTensor.from_words(
            2, order, {(): u})
        return ta.shuffle_exp(gen, order) * root_f0

    return SigVolRep(order, fn=at)


def sigrep_cir_sqrt(model: Heston, order: int, x: float | None = None) -> SigVolRep:
    """Square-root-of-CIR representation via the two-term recurrence."""
    if x is None:
        x = math.sqrt(model.v0)
    if x <= 0:
        raise ValueError("expansion point x must be positive")
    kappa, theta, eta = model.kappa, model.theta, model.eta
    a = 0.5 * (kappa * theta - eta ** 2 / 4.0)
    cache: dict = {}

    def f(n, v):
        # Stratonovich-Taylor coefficients of (sqrt V / x)^n: letters act on
        # functions by the plain drift mu d/dy and eta/2 d/dy (no Ito term,
        # since the signature here is the geometric one).
        if not v:
            return 1.0
        key = (n, v)
        if key not in cache:
            head, last = v[:-1], v[-1]
            if last == 1:
                cache[key] = a * (n / x ** 2) * f(n - 2, head) \
                    - 0.5 * kappa * n * f(n, head)
            else:
                cache[key] = 0.5 * eta * (n / x) * f(n - 1, head)
        return cache[key]

    out = ta.TruncTensor.zero(2, order)
    for i in range(ta.n_words(2, order)):
        out.coeffs[i] = x * f(1, ta.index_word(2, i))
    return SigVolRep(order, tensor=out)


def sigrep_ou(kappa, theta, eta, sigma0, order: int) -> SigVolRep:
    """Ornstein-Uhlenbeck representation: fixed point of
    sigma = sigma0 empty + kappa theta 1 + eta 2 - kappa (sigma tensor 1)."""
    lead = ta.TruncTensor.from_words(2, order, {(): sigma0, (1,): kappa * theta,
                                                (2,): eta})
    res = ta.resolvent(ta.TruncTensor.from_words(2, order, {(1,): -kappa}), order)
    return SigVolRep(order, tensor=ta.concat(lead, res, order))


def sigrep_de(model: DelayedEq, order: int) -> SigVolRep:
    """Delayed-equation representation as an extended mGBM resolvent."""
    k, th, eta = model.kappa, model.theta, model.eta
    al, vs, lam = model.alpha, model.varsigma, model.lam
    lead = ta.TruncTensor.from_words(
        2, order, {(): model.sigma0, (1,): k * th - 0.5 * al * eta, (2,): eta})
    ema_kick = ta.TruncTensor.from_words(2, order, {(1,): -0.5 * al, (2,): 1.0})
    q = ta.concat(ta.concat(
        ta.TruncTensor.from_words(2, order, {(1,): vs}),
        ta.shuffle_exp(ta.TruncTensor.from_words(2, order, {(1,): lam}), order),
        order), ema_kick, order)
    inner = ta.TruncTensor.from_words(2, order, {(1,): -(k + 0.5 * al ** 2),
                                                 (2,): al}) + q
    return SigVolRep(order, tensor=ta.concat(lead, ta.resolvent(inner, order),
                                             order))


# -- evaluating representations on simulated noise -------------------------


def eval_sigvol(rep: SigVolRep, times, W, chunk: int = 1000) -> np.ndarray:
    """Sigma along simulated Brownian paths: brackets of the representation
    against the signature stream of (t, W).  W is (I, J+1) path values."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim == 1:
        W = W[None]
    I, n1 = W.shape
    nw = ta.n_words(2, rep.order)
    if rep.constant:
        mat = rep.at(0.0).coeffs[None, :].repeat(n1, axis=0)
    else:
        mat = np.stack([rep.at(t).coeffs for t in times])
    table = sp.chen_table(2, rep.order)
    out = np.empty((I, n1))
    stream = np.empty((n1, nw))
    for i in range(I):
        vals = np.column_stack([times, W[i]])
        _kernels.chen_stream_single(np.ascontiguousarray(np.diff(vals, axis=0)),
                                    *table, stream)
        out[i] = np.einsum("jw,jw->j", stream, mat)
    return out


def simulate_sigvol(rep: SigVolRep, rho: float, s0: float, n_paths: int,
                    n_steps: int, horizon: float, seed: int,
                    purpose: str = "train") -> SimBatch:
    """Simulate the truncated signature-volatility model itself."""
    dt = horizon / n_steps
    times = np.linspace(0.0, horizon, n_steps + 1)
    Z = path_normals(seed, purpose, n_paths, n_steps)
    dW = Z[:, 0] * math.sqrt(dt)
    dWp = Z[:, 1] * math.sqrt(dt)
    dB = rho * dW + math.sqrt(1.0 - rho ** 2) * dWp
    W = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(dW, axis=1)], axis=1)
    Sigma = eval_sigvol(rep, times, W)
    S = _log_euler(s0, Sigma, dB, dt)
    record = {"seed": int(seed), "purpose": purpose, "model": "sigvol",
              "order": rep.order, "n_paths": n_paths, "n_steps": n_steps,
              "horizon": horizon}
    return SimBatch(times, S, Sigma, dW, dWp, dB, record)
