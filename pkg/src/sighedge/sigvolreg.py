"""Calibration of signature volatility from expected signatures.

A candidate sigma-hat writes the volatility as a linear functional of the
signature of (t, W).  Every signature coordinate of the time-augmented
volatility path (t, Sigma) is then itself such a functional, built by a
word recursion: appending the time letter integrates against dt, and a
half-shuffle with sigma-hat integrates against dSigma.  Matching observed
average coordinates to their closed-form predictions under Fawcett's
expected Brownian signature calibrates sigma-hat without simulation.
"""

import math
import warnings

import numpy as np

from . import linhedge
from . import models
from . import sigpath
from . import tensoralg as ta


class CalibConfig:
    """Orders, grid, and optimizer settings for the calibration.

    order is sigma-hat's truncation, target_order the deepest matched
    volatility-signature word, sig_order the Brownian-signature order the
    functionals live at.  Appending letters and half-shuffling grow the
    needed order, so sig_order must leave room: at least target_order +
    order, default one more as margin.
    """

    __slots__ = ("times", "order", "target_order", "sig_order", "n_starts",
                 "iters", "lr", "seed")

    def __init__(self, times, order=3, target_order=2, sig_order=None,
                 n_starts=10, iters=2000, lr=1e-2, seed=0):
        times = np.asarray(times, dtype=np.float64)
        if target_order < 1:
            raise ValueError("target_order must be at least 1")
        if sig_order is None:
            sig_order = target_order + order + 1
        if sig_order < target_order + order:
            raise ValueError("sig_order must be at least target_order + order")
        self.times = times
        self.order = order
        self.target_order = target_order
        self.sig_order = sig_order
        self.n_starts = n_starts
        self.iters = iters
        self.lr = lr
        self.seed = seed


class WordFunctionalMap:
    """ell^v per word v of the volatility-signature alphabet: the bracket
    <ell^v, Sig(t, W)> equals the v-coordinate of the signature of
    (t, Sigma) when Sigma = <sigma-hat, Sig(t, W)>."""

    __slots__ = ("order", "sig_order", "ells")

    def __init__(self, order, sig_order, ells):
        self.order = order
        self.sig_order = sig_order
        self.ells = ells

    def matrix(self) -> np.ndarray:
        """Functionals stacked as rows at the common signature order."""
        return np.vstack([ell.extend(self.sig_order).coeffs
                          for ell in self.ells])


def build_word_functionals(sighat, target_order: int,
                           sig_order: int) -> WordFunctionalMap:
    """Word recursion for the volatility-signature functionals.

    ell of the empty word is the empty word; appending the time letter
    appends letter 1, appending the volatility letter half-shuffles
    sigma-hat in.  Orders are tracked exactly and overflowing sig_order
    raises, naming the violating word.
    """
    sig = sighat.at(0.0) if isinstance(sighat, models.SigVolRep) else sighat
    ells = [ta.TruncTensor.unit(2, 0)]
    for idx in range(1, ta.n_words(2, target_order)):
        word = ta.index_word(2, idx)
        head = ells[ta.word_index(2, word[:-1])]
        if word[-1] == 1:
            needed = head.order + 1
        else:
            needed = head.order + sig.order
        if needed > sig_order:
            raise ValueError(f"functional for word {word} needs order "
                             f"{needed}; raise sig_order {sig_order}")
        if word[-1] == 1:
            ells.append(ta.append_letter(head, 1))
        else:
            ells.append(ta.half_shuffle(head, sig, needed))
    return WordFunctionalMap(target_order, sig_order, ells)


def target_expected_sig(times, vol_paths, target_order: int) -> np.ndarray:
    """Per-time average signature of the time-augmented volatility paths.

    vol_paths is (I, J+1); returns (J+1, n_words(2, target_order))."""
    vol_paths = np.asarray(vol_paths, dtype=np.float64)
    if vol_paths.ndim != 2 or vol_paths.shape[0] < 1:
        raise ValueError("need a (I, J+1) batch with at least one path")
    streams = linhedge.signature_streams(times, vol_paths, target_order)
    return streams.mean(axis=0)


def _fawcett_matrix(times, order: int) -> np.ndarray:
    return np.vstack([sigpath.fawcett_expected_sig(t, order).coeffs
                      for t in times])


def predict_word_coords(fmap: WordFunctionalMap, fawcett_rows) -> np.ndarray:
    """Model-implied coordinates: brackets of the functionals against
    expected Brownian signatures, one row per grid time."""
    return np.asarray(fawcett_rows) @ fmap.matrix().T


def calibration_loss(sighat, config: CalibConfig, targets,
                     fawcett_rows=None) -> float:
    """Sum of squared coordinate mismatches over the grid, words of
    length 1 through target_order."""
    if fawcett_rows is None:
        fawcett_rows = _fawcett_matrix(config.times, config.sig_order)
    fmap = build_word_functionals(sighat, config.target_order,
                                  config.sig_order)
    diff = predict_word_coords(fmap, fawcett_rows) - targets
    return float(np.sum(diff[:, 1:] ** 2))


def calibration_gradient(sighat, config: CalibConfig, targets,
                         fawcett_rows=None, h=1e-6) -> np.ndarray:
    """Central finite differences of the loss in sigma-hat's coefficients;
    the coefficient count is small enough that this is exact to the step
    size squared."""
    if fawcett_rows is None:
        fawcett_rows = _fawcett_matrix(config.times, config.sig_order)
    sig = sighat.at(0.0) if isinstance(sighat, models.SigVolRep) else sighat
    coeffs = np.array(sig.coeffs, dtype=np.float64)
    g = np.empty_like(coeffs)
    for k in range(len(coeffs)):
        c = coeffs.copy()
        c[k] += h
        up = calibration_loss(ta.TruncTensor(2, sig.order, c), config,
                              targets, fawcett_rows)
        c[k] -= 2 * h
        dn = calibration_loss(ta.TruncTensor(2, sig.order, c), config,
                              targets, fawcett_rows)
        g[k] = (up - dn) / (2 * h)
    return g


def mle_ou(vol_paths, dt: float):
    """Exact AR(1) maximum likelihood for the Ornstein-Uhlenbeck
    transition, pooled over paths; returns (kappa, theta, eta)."""
    x = np.asarray(vol_paths, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError("need (I, J+1) paths with at least one transition")
    prev = x[:, :-1].ravel()
    nxt = x[:, 1:].ravel()
    vp = float(prev.var())
    if vp == 0.0:
        if np.ptp(x) == 0.0:
            return 0.0, float(x.flat[0]), 0.0
        raise ValueError("degenerate sample: constant regressor")
    a = float(np.mean((prev - prev.mean()) * (nxt - nxt.mean()))) / vp
    a = min(max(a, 1e-12), 1.0 - 1e-12)
    c = float(nxt.mean()) - a * float(prev.mean())
    kappa = -math.log(a) / dt
    theta = c / (1.0 - a)
    s2 = float(np.mean((nxt - a * prev - c) ** 2))
    if 1.0 - a * a < 1e-8:
        eta2 = s2 / dt
    else:
        eta2 = s2 * 2.0 * kappa / (1.0 - a * a)
    return kappa, theta, math.sqrt(max(eta2, 0.0))


def _adam_fd(loss_fn, grad_fn, x0, iters, lr, plateau=200, tol=1e-16):
    x = np.array(x0, dtype=np.float64)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    b1, b2, eps = 0.9, 0.999, 1e-8
    best = loss_fn(x)
    best_x = x.copy()
    since = 0
    for t in range(1, iters + 1):
        g = grad_fn(x)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        obj = loss_fn(x)
        if obj < best - tol:
            best, best_x, since = obj, x.copy(), 0
        else:
            since += 1
            if since >= plateau:
                lr *= 0.5
                since = 0
    return best_x, best


def calibrate(config: CalibConfig, targets, vol_paths):
    """Fit sigma-hat to observed average volatility-signature coordinates.

    The first start is the Ornstein-Uhlenbeck representation at pooled
    AR(1) maximum likelihood parameters; the remaining starts perturb it
    coefficientwise.  Returns the lowest-loss sigma-hat as a constant
    SigVolRep together with a calibration report.
    """
    vol_paths = np.asarray(vol_paths, dtype=np.float64)
    dts = np.diff(config.times)
    if not np.allclose(dts, dts[0], rtol=1e-9, atol=0):
        raise ValueError("calibration grid must be uniform")
    kappa, theta, eta = mle_ou(vol_paths, float(dts[0]))
    sigma0 = float(vol_paths[:, 0].mean())
    base = models.sigrep_ou(kappa, theta, eta, sigma0,
                            config.order).at(0.0).coeffs
    fawcett_rows = _fawcett_matrix(config.times, config.sig_order)

    def loss(c):
        return calibration_loss(ta.TruncTensor(2, config.order, c), config,
                                targets, fawcett_rows)

    def grad(c):
        return calibration_gradient(ta.TruncTensor(2, config.order, c),
                                    config, targets, fawcett_rows)

    rng = np.random.default_rng(config.seed)
    loss_init, loss_final, sols = [], [], []
    for s in range(config.n_starts):
        x0 = base if s == 0 else base + rng.uniform(-0.1, 0.1, len(base))
        loss_init.append(loss(x0))
        x, obj = _adam_fd(loss, grad, x0, config.iters, config.lr)
        loss_final.append(obj)
        sols.append(x)
    chosen = int(np.argmin(loss_final))
    best = loss_final[chosen]
    if best > 1e-14 and all(f >= i for f, i in zip(loss_final, loss_init)):
        warnings.warn(f"calibration loss did not decrease on any start "
                      f"(best {best:.3e}, initial "
                      f"{min(loss_init):.3e})", RuntimeWarning)
    rep = models.SigVolRep(config.order,
                           tensor=ta.TruncTensor(2, config.order,
                                                 sols[chosen].copy()))
    report = {"mle": {"kappa": kappa, "theta": theta, "eta": eta,
                      "sigma0": sigma0},
              "loss_init": [float(x) for x in loss_init],
              "loss_final": [float(x) for x in loss_final],
              "chosen_start": chosen, "loss": float(best),
              "order": config.order, "target_order": config.target_order,
              "sig_order": config.sig_order}
    return rep, report
