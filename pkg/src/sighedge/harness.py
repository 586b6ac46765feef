"""Experiment harness: payoffs, P&L accounting, baseline Black-Scholes
strategies, density export, and the config-driven runner that binds the
pricing, linear, and network hedgers to shared simulated markets.

Experiments are described by a flat key=value config file; every
scientific parameter must be explicit.  Results land in an output
directory as pnl.csv, summary.json, density.csv, strategy.csv and
manifest.json, all written atomically.
"""

import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import deephedge
from . import fourier
from . import linhedge
from . import models
from . import sigvolreg


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the field."""


PAYOFF_KINDS = ("european", "geometric_asian", "lookback_floating",
                "polynomial")
METHODS = ("fourier", "fourier_reg", "linear_reg", "linear_bcs",
           "vnn", "snn", "rnn", "logsnn", "naive_bs")
DEEP_SEED_OFFSET = {"vnn": 1, "snn": 2, "rnn": 3, "logsnn": 4}


class PayoffSpec:
    """European, geometric-Asian, floating-strike lookback, or polynomial
    claim on the terminal price."""

    __slots__ = ("kind", "maturity", "strike", "coeffs")

    def __init__(self, kind, maturity, strike=None, coeffs=None):
        if kind not in PAYOFF_KINDS:
            raise ConfigError(f"payoff.kind: unknown kind {kind!r}")
        if maturity <= 0:
            raise ConfigError("payoff.maturity: must be > 0")
        if kind in ("european", "geometric_asian"):
            if strike is None or strike <= 0:
                raise ConfigError("payoff.strike: must be > 0")
        if kind == "polynomial":
            if coeffs is None or len(coeffs) == 0:
                raise ConfigError("payoff.coeffs: polynomial payoffs need "
                                  "coefficients")
            coeffs = np.asarray(coeffs, dtype=np.float64)
        self.kind = kind
        self.maturity = float(maturity)
        self.strike = None if strike is None else float(strike)
        self.coeffs = coeffs


def payoff_eval(spec: PayoffSpec, times, S):
    """Payoff per path; S is (J+1,) or (I, J+1) sampled on times."""
    times = np.asarray(times, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    if abs(times[-1] - spec.maturity) > 1e-9 * max(1.0, spec.maturity):
        raise ValueError(f"path grid ends at {times[-1]}, payoff maturity "
                         f"is {spec.maturity}")
    if spec.kind == "european":
        return np.maximum(S[..., -1] - spec.strike, 0.0)
    if spec.kind == "geometric_asian":
        span = times[-1] - times[0]
        avg = np.exp(np.trapezoid(np.log(S), times, axis=-1) / span)
        return np.maximum(avg - spec.strike, 0.0)
    if spec.kind == "lookback_floating":
        return S[..., -1] - S.min(axis=-1)
    powers = np.arange(len(spec.coeffs))
    return (S[..., -1, None] ** powers) @ spec.coeffs


def pnl(x0, alphas, S, xi):
    """Terminal hedging error X0 + sum_j alpha_j dS_{j+1} - xi."""
    alphas = np.asarray(alphas, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    if alphas.shape[-1] != S.shape[-1] - 1:
        raise ValueError(f"hedge stream length {alphas.shape[-1]} does not "
                         f"match {S.shape[-1]} price points")
    return x0 + np.sum(alphas * np.diff(S, axis=-1), axis=-1) - xi


# -- baseline Black-Scholes strategies --------------------------------------


def _norm_cdf(x):
    return 0.5 * (1.0 + np.vectorize(math.erf)(np.asarray(x) / math.sqrt(2)))


def _norm_pdf(x):
    return np.exp(-0.5 * np.asarray(x) ** 2) / math.sqrt(2 * math.pi)


def lookback_floating_price(s, running_min, sigma, tau):
    """Zero-rate floating-strike lookback call value under constant vol,
    continuous monitoring of the minimum."""
    s = np.asarray(s, dtype=np.float64)
    m = np.asarray(running_min, dtype=np.float64)
    if tau <= 0:
        return s - m
    v = sigma * math.sqrt(tau)
    beta = (np.log(m / s) - 0.5 * sigma ** 2 * tau) / v
    return (s - m + m * _norm_cdf(beta + v) - s * _norm_cdf(beta)
            + s * v * (beta * _norm_cdf(beta) + _norm_pdf(beta)))


def lookback_floating_delta(s, running_min, sigma, tau):
    """Spot sensitivity of lookback_floating_price at fixed running min."""
    s = np.asarray(s, dtype=np.float64)
    m = np.asarray(running_min, dtype=np.float64)
    if tau <= 0:
        return np.ones_like(s)
    v = sigma * math.sqrt(tau)
    beta = (np.log(m / s) - 0.5 * sigma ** 2 * tau) / v
    return (1.0 - 2.0 * _norm_cdf(beta)
            + v * (beta * _norm_cdf(beta) + _norm_pdf(beta)))


def polynomial_bs_price(coeffs, s, sigma, tau):
    """E[sum_k c_k S_T^k] under GBM: moments scale by e^{k(k-1)sigma^2 tau/2}."""
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros_like(s)
    for k, c in enumerate(coeffs):
        out += c * s ** k * math.exp(0.5 * k * (k - 1) * sigma ** 2 * tau)
    return out


def polynomial_bs_delta(coeffs, s, sigma, tau):
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros_like(s)
    for k, c in enumerate(coeffs):
        if k >= 1:
            out += c * k * s ** (k - 1) \
                * math.exp(0.5 * k * (k - 1) * sigma ** 2 * tau)
    return out


def naive_bs_strategies(spec: PayoffSpec, sigma0, times, S):
    """Plug-in Black-Scholes hedge at the model's initial volatility.

    European: standard delta.  Geometric Asian: closed-form delta given
    the running log average.  Lookback: floating-strike delta given the
    running minimum.  Polynomial: the exact GBM delta.  Returns (I, J)."""
    times = np.asarray(times, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    I, n1 = S.shape
    J = n1 - 1
    T = spec.maturity
    alphas = np.empty((I, J))
    if spec.kind == "european":
        for j in range(J):
            alphas[:, j] = fourier.bs_delta(S[:, j], spec.strike, sigma0,
                                            T - times[j])
    elif spec.kind == "geometric_asian":
        running = np.zeros(I)
        logS = np.log(S)
        for j in range(J):
            alphas[:, j] = fourier.bs_asian_delta(S[:, j], spec.strike,
                                                  sigma0, times[j], T,
                                                  running)
            dt = times[j + 1] - times[j]
            running = running + 0.5 * dt * (logS[:, j] + logS[:, j + 1])
    elif spec.kind == "lookback_floating":
        run_min = S[:, 0].copy()
        for j in range(J):
            np.minimum(run_min, S[:, j], out=run_min)
            alphas[:, j] = lookback_floating_delta(S[:, j], run_min, sigma0,
                                                   T - times[j])
    else:
        for j in range(J):
            alphas[:, j] = polynomial_bs_delta(spec.coeffs, S[:, j], sigma0,
                                               T - times[j])
    return alphas


def naive_bs_wealth(spec: PayoffSpec, sigma0, s0) -> float:
    """Time-0 Black-Scholes value matching naive_bs_strategies."""
    T = spec.maturity
    if spec.kind == "european":
        return float(fourier.bs_price(s0, spec.strike, sigma0, T))
    if spec.kind == "geometric_asian":
        return float(fourier.bs_asian_price(s0, spec.strike, sigma0, 0.0, T))
    if spec.kind == "lookback_floating":
        return float(lookback_floating_price(s0, s0, sigma0, T))
    return float(polynomial_bs_price(spec.coeffs, s0, sigma0, T))


# -- density export ---------------------------------------------------------


def kde_density(samples, grid):
    """Gaussian kernel density with Scott's bandwidth n^{-1/5} sigma-hat."""
    samples = np.asarray(samples, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    n = len(samples)
    if n < 2:
        raise ValueError("need at least 2 samples for a density estimate")
    bw = samples.std(ddof=1) * n ** (-0.2)
    if bw <= 0:
        raise ValueError("samples are all identical; no density estimate")
    z = (grid[:, None] - samples[None, :]) / bw
    return np.exp(-0.5 * z ** 2).sum(axis=1) / (n * bw * math.sqrt(2 * math.pi))


def density_grid(samples, n_points=201):
    samples = np.asarray(samples, dtype=np.float64)
    bw = max(samples.std(ddof=1) * len(samples) ** (-0.2), 1e-12)
    return np.linspace(samples.min() - 5 * bw, samples.max() + 5 * bw,
                       n_points)


# -- configuration ----------------------------------------------------------


def _parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [_parse_value(p) for p in text.split(",")]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def load_config(path) -> dict:
    """Flat key = value config file; '#' starts a comment."""
    cfg = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', "
                                  f"got {raw.strip()!r}")
            key, value = line.split("=", 1)
            cfg[key.strip()] = _parse_value(value)
    return cfg


def _req(cfg, key, kinds, pred=None, why=""):
    if key not in cfg:
        raise ConfigError(f"{key}: missing required key")
    v = cfg[key]
    if kinds is int and isinstance(v, bool):
        raise ConfigError(f"{key}: expected int, got bool")
    if kinds is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if not isinstance(v, kinds if isinstance(kinds, tuple) else (kinds,)):
        want = kinds.__name__ if not isinstance(kinds, tuple) \
            else "/".join(k.__name__ for k in kinds)
        raise ConfigError(f"{key}: expected {want}, got {v!r}")
    if pred is not None and not pred(v):
        raise ConfigError(f"{key}: {why}, got {v!r}")
    return v


def _as_list(v):
    return v if isinstance(v, list) else [v]


def validate_config(cfg: dict) -> dict:
    """Type- and cross-check a flat config; returns a normalized copy.

    Scientific parameters have no defaults: model, payoff, grid, path
    counts, seeds, and every order used by a requested method must be
    spelled out.  Errors name the offending field."""
    out = dict(cfg)
    _req(cfg, "model.name", str, lambda v: v in ("gbm", "heston",
         "heston_cir", "fbergomi", "delayed"), "unknown model preset")
    kind = _req(cfg, "payoff.kind", str, lambda v: v in PAYOFF_KINDS,
                "unknown payoff kind")
    maturity = _req(cfg, "payoff.maturity", (int, float),
                    lambda v: v > 0, "must be > 0")
    strike = None
    coeffs = None
    if kind in ("european", "geometric_asian"):
        strike = _req(cfg, "payoff.strike", (int, float), lambda v: v > 0,
                      "must be > 0")
    if kind == "polynomial":
        coeffs = _as_list(_req(cfg, "payoff.coeffs", (list, int, float)))
        if not all(isinstance(c, (int, float)) for c in coeffs):
            raise ConfigError("payoff.coeffs: expected numbers")
    out["_payoff"] = PayoffSpec(kind, float(maturity), strike, coeffs)
    _req(cfg, "grid.steps", int, lambda v: v >= 1, "must be >= 1")
    _req(cfg, "paths.train", int, lambda v: v >= 1, "must be >= 1")
    _req(cfg, "paths.oos", int, lambda v: v >= 1, "must be >= 1")
    _req(cfg, "seeds.train", int)
    _req(cfg, "seeds.oos", int)
    if cfg["seeds.train"] == cfg["seeds.oos"]:
        raise ConfigError("seeds.oos: must differ from seeds.train so the "
                          "out-of-sample draw is independent")
    meths = [str(m) for m in _as_list(_req(cfg, "methods", (list, str)))]
    if not meths:
        raise ConfigError("methods: at least one method required")
    for m in meths:
        if m not in METHODS:
            raise ConfigError(f"methods: unknown method {m!r}")
    out["methods"] = meths
    fourier_methods = [m for m in meths if m.startswith("fourier")]
    if fourier_methods:
        if kind not in ("european", "geometric_asian"):
            raise ConfigError("payoff.kind: Fourier methods need european "
                              "or geometric_asian payoffs")
        _req(cfg, "fourier.nodes", int, lambda v: v >= 2, "must be >= 2")
        _req(cfg, "fourier.scale", (int, float), lambda v: v > 0,
             "must be > 0")
        _req(cfg, "fourier.steps", int, lambda v: v >= 1, "must be >= 1")
    if "fourier" in meths:
        engine = _req(cfg, "fourier.engine", str,
                      lambda v: v in ("signature", "heston_cf"),
                      "expected signature or heston_cf")
        if engine == "signature":
            _req(cfg, "fourier.order", int, lambda v: v >= 1, "must be >= 1")
        elif cfg["model.name"] not in ("heston", "heston_cir"):
            raise ConfigError("fourier.engine: heston_cf needs a Heston "
                              "model")
    if "fourier_reg" in meths:
        _req(cfg, "calibrate.order", int, lambda v: v >= 1, "must be >= 1")
        _req(cfg, "calibrate.target_order", int, lambda v: v >= 1,
             "must be >= 1")
    if "linear_reg" in meths or "linear_bcs" in meths:
        _req(cfg, "linear.order", int, lambda v: v >= 1, "must be >= 1")
    if "linear_reg" in meths and kind != "polynomial":
        _req(cfg, "linear.payoff_order", int, lambda v: v >= 1,
             "must be >= 1")
        _req(cfg, "linear.ridge", (int, float), lambda v: v >= 0,
             "must be >= 0")
    deep = [m for m in meths if m in DEEP_SEED_OFFSET]
    if deep:
        _req(cfg, "train.epochs", int, lambda v: v >= 1, "must be >= 1")
        _req(cfg, "train.batch", int, lambda v: v >= 1, "must be >= 1")
    if any(m in ("snn", "logsnn") for m in deep):
        _req(cfg, "deep.order", int, lambda v: v >= 1, "must be >= 1")
    return out


def config_hash(cfg: dict) -> str:
    clean = {k: v for k, v in cfg.items() if not k.startswith("_")}
    blob = json.dumps(clean, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


# -- model plumbing ---------------------------------------------------------


def spot_volatility(model) -> float:
    """The model's initial spot volatility (naive-hedge plug-in)."""
    if isinstance(model, models.GBM):
        return model.sigma
    if isinstance(model, models.Heston):
        return math.sqrt(model.v0)
    if isinstance(model, models.ShiftedFBergomi):
        return math.sqrt(model.f0)
    return model.sigma0


def true_sigrep(model, order: int):
    """The model's own signature-volatility representation."""
    if isinstance(model, models.GBM):
        return models.sigrep_constant(model.sigma, order)
    if isinstance(model, models.Heston):
        return models.sigrep_cir_sqrt(model, order)
    if isinstance(model, models.ShiftedFBergomi):
        return models.sigrep_fbergomi(model, order)
    return models.sigrep_de(model, order)


def _transform(spec: PayoffSpec):
    kind = "european" if spec.kind == "european" else "geom_asian"
    return fourier.PayoffTransform(kind, spec.strike, spec.maturity)


# -- experiment runner ------------------------------------------------------


def _atomic_text(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_pnl_csv(path, methods, pnls):
    lines = ["sample_id," + ",".join(methods)]
    n = len(next(iter(pnls.values())))
    cols = [pnls[m] for m in methods]
    for i in range(n):
        lines.append(str(i) + "," + ",".join(_fmt(c[i]) for c in cols))
    _atomic_text(path, "\n".join(lines) + "\n")


def _write_density_csv(path, methods, pnls):
    allp = np.concatenate([pnls[m] for m in methods])
    grid = density_grid(allp)
    cols = [kde_density(pnls[m], grid) for m in methods]
    lines = ["pnl," + ",".join(methods)]
    for i in range(len(grid)):
        lines.append(_fmt(grid[i]) + ","
                     + ",".join(_fmt(c[i]) for c in cols))
    _atomic_text(path, "\n".join(lines) + "\n")


def _write_strategy_csv(path, methods, times, strat_samples):
    n_samples = min(len(s) for s in strat_samples.values())
    J = strat_samples[methods[0]].shape[1]
    lines = ["t,sample," + ",".join(methods)]
    for s in range(n_samples):
        for j in range(J):
            row = [_fmt(times[j]), str(s)]
            row += [_fmt(strat_samples[m][s, j]) for m in methods]
            lines.append(",".join(row))
    _atomic_text(path, "\n".join(lines) + "\n")


def summarize(pnls: dict) -> dict:
    return {m: {"mean": float(np.mean(p)),
                "msq": float(np.mean(np.asarray(p) ** 2)),
                "count": int(len(p))}
            for m, p in pnls.items()}


def _oos_slices(batch, chunk):
    I = batch.S.shape[0]
    for lo in range(0, I, chunk):
        yield lo, models.SimBatch(batch.times, batch.S[lo:lo + chunk],
                                  batch.Sigma[lo:lo + chunk],
                                  batch.dW[lo:lo + chunk],
                                  batch.dWp[lo:lo + chunk],
                                  batch.dB[lo:lo + chunk],
                                  batch.seed_record)


class _Runner:
    def __init__(self, cfg, out_dir, deterministic):
        self.cfg = cfg
        self.out_dir = out_dir
        self.deterministic = deterministic
        self.spec = cfg["_payoff"]
        self.model = models.preset(cfg["model.name"])
        self.notes = {}
        self.train_batch = None
        self.oos_batch = None
        self.xi_train = None
        self.xi_oos = None

    def simulate(self):
        c = self.cfg
        T = self.spec.maturity
        self.train_batch = models.simulate(self.model, c["paths.train"],
                                           c["grid.steps"], T,
                                           seed=c["seeds.train"],
                                           purpose="train")
        self.oos_batch = models.simulate(self.model, c["paths.oos"],
                                         c["grid.steps"], T,
                                         seed=c["seeds.oos"], purpose="oos")
        self.xi_train = payoff_eval(self.spec, self.train_batch.times,
                                    self.train_batch.S)
        self.xi_oos = payoff_eval(self.spec, self.oos_batch.times,
                                  self.oos_batch.S)

    # each _run_* returns (x0, alphas over the OOS batch)

    def _run_fourier(self):
        c = self.cfg
        quad = fourier.QuadratureRule.gauss_laguerre(c["fourier.nodes"],
                                                     c["fourier.scale"])
        transform = _transform(self.spec)
        if c["fourier.engine"] == "heston_cf":
            sub = c.get("fourier.substeps", 32)
            x0 = fourier.heston_initial_wealth(transform, self.model, quad,
                                               substeps=max(sub, 256))
            alphas = fourier.heston_fourier_hedge(self.oos_batch, transform,
                                                  self.model, quad,
                                                  substeps=sub)
            return x0, alphas
        rep = true_sigrep(self.model, c["fourier.order"])
        return self._rep_fourier(rep, transform, quad)

    def _rep_fourier(self, rep, transform, quad):
        c = self.cfg
        sol = fourier.solve_riccati_nodes(rep, transform, self.model.rho,
                                          quad, n_steps=c["fourier.steps"],
                                          grid=self.oos_batch.times)
        sigma_bs = float(rep.at(0.0).coeffs[0])
        x0 = fourier.fourier_initial_wealth(sol, quad, self.model.s0,
                                            sigma_bs)
        alphas = fourier.fourier_hedge(self.oos_batch, rep, sol, quad,
                                       sigma_bs)
        return x0, alphas

    def _run_fourier_reg(self):
        c = self.cfg
        times = self.train_batch.times
        ccfg = sigvolreg.CalibConfig(
            times, order=c["calibrate.order"],
            target_order=c["calibrate.target_order"],
            n_starts=c.get("calibrate.starts", 10),
            iters=c.get("calibrate.iters", 2000),
            lr=c.get("calibrate.lr", 1e-2), seed=c["seeds.train"])
        targets = sigvolreg.target_expected_sig(times,
                                                self.train_batch.Sigma,
                                                ccfg.target_order)
        rep, report = sigvolreg.calibrate(ccfg, targets,
                                          self.train_batch.Sigma)
        self.notes["calibration"] = {k: report[k] for k in
                                     ("loss_init", "loss_final", "order",
                                      "target_order")}
        quad = fourier.QuadratureRule.gauss_laguerre(c["fourier.nodes"],
                                                     c["fourier.scale"])
        return self._rep_fourier(rep, _transform(self.spec), quad)

    def _linear_payoff(self):
        c = self.cfg
        if self.spec.kind == "polynomial":
            return linhedge.polynomial_payoff_exact(self.spec.coeffs,
                                                    self.model.s0), None
        order = c["linear.payoff_order"]
        esig_order = 2 * max(c["linear.order"] + 1, order)
        esig, store = linhedge.lead_lag_signatures(self.train_batch.times,
                                                   self.train_batch.S,
                                                   esig_order,
                                                   store_order=order)
        xi_hat = linhedge.regress_payoff(store, self.xi_train,
                                         lam_ridge=c["linear.ridge"])
        self.notes["payoff_fit"] = {"residual_rms": xi_hat.residual_rms,
                                    "r2": xi_hat.r2}
        return xi_hat, esig

    def _run_linear_reg(self):
        c = self.cfg
        xi_hat, esig = self._linear_payoff()
        if esig is None:
            esig_order = 2 * max(c["linear.order"] + 1, xi_hat.xi.order)
            esig, _ = linhedge.lead_lag_signatures(self.train_batch.times,
                                                   self.train_batch.S,
                                                   esig_order)
        x0 = linhedge.initial_wealth_lin(xi_hat, esig)
        strategy = linhedge.optimize_strategy_expected(
            xi_hat, x0, esig, c["linear.order"],
            n_starts=c.get("linear.starts", 10), seed=c["seeds.train"])
        return x0, self._linear_alphas(strategy)

    def _run_linear_bcs(self):
        c = self.cfg
        streams = linhedge.signature_streams(self.train_batch.times,
                                             self.train_batch.S,
                                             c["linear.order"])
        dS = np.diff(self.train_batch.S, axis=1)
        x0, strategy = linhedge.optimize_strategy_bcs(
            streams, dS, self.xi_train,
            n_starts=c.get("linear.starts", 10), seed=c["seeds.train"])
        return x0, self._linear_alphas(strategy)

    def _linear_alphas(self, strategy, chunk=4000):
        c = self.cfg
        S = self.oos_batch.S
        out = np.empty((S.shape[0], S.shape[1] - 1))
        for lo in range(0, S.shape[0], chunk):
            streams = linhedge.signature_streams(self.oos_batch.times,
                                                 S[lo:lo + chunk],
                                                 c["linear.order"])
            out[lo:lo + chunk] = linhedge.eval_linear_strategy(
                strategy, streams)[:, :-1]
        return out

    def _deep_features(self, batch, method):
        if method in ("vnn", "rnn"):
            return deephedge.vnn_features(batch)
        if method == "snn":
            return deephedge.snn_features(batch, self.cfg["deep.order"])
        return deephedge.logsnn_features(batch, self.cfg["deep.order"])

    def _run_deep(self, method):
        c = self.cfg
        feats = self._deep_features(self.train_batch, method)
        mean, std = deephedge.feature_normalizer(feats)
        feats -= mean
        feats /= std
        net = deephedge.NetConfig("lstm" if method == "rnn" else "vanilla",
                                  feats.shape[-1])
        tcfg = deephedge.TrainConfig(
            batch=c["train.batch"], epochs=c["train.epochs"],
            lr_hi=c.get("train.lr_hi", 1e-2),
            lr_lo=c.get("train.lr_lo", 1e-3),
            weight_decay=c.get("train.weight_decay", 0.01),
            seed=c["seeds.train"] + DEEP_SEED_OFFSET[method])
        dS = np.diff(self.train_batch.S, axis=1)
        params, history = deephedge.train(feats, dS, self.xi_train, net,
                                          tcfg)
        del feats
        self._write_train_log(method, history)
        self.notes.setdefault("normalization", {})[method] = {
            "mean": mean.tolist(), "std": std.tolist()}
        self.notes.setdefault("networks", {})[method] = \
            deephedge.params_to_record(params, net, (mean, std))
        I, n1 = self.oos_batch.S.shape
        alphas = np.empty((I, n1 - 1))
        for lo, piece in _oos_slices(self.oos_batch, 4000):
            f = (self._deep_features(piece, method) - mean) / std
            alphas[lo:lo + f.shape[0]] = deephedge.hedge_ratios(params, net,
                                                                f)
        return float(params["x0"]), alphas

    def _write_train_log(self, method, history):
        lines = ["step,lr,train_loss,wall_ms"]
        for step, lr, loss, wall in history:
            lines.append(f"{int(step)},{_fmt(lr)},{_fmt(loss)},"
                         f"{wall:.3f}")
        _atomic_text(os.path.join(self.out_dir, f"train_{method}.csv"),
                     "\n".join(lines) + "\n")

    def _run_naive_bs(self):
        sigma0 = spot_volatility(self.model)
        x0 = naive_bs_wealth(self.spec, sigma0, self.model.s0)
        alphas = naive_bs_strategies(self.spec, sigma0,
                                     self.oos_batch.times, self.oos_batch.S)
        return x0, alphas

    def run_method(self, method):
        if method == "fourier":
            return self._run_fourier()
        if method == "fourier_reg":
            return self._run_fourier_reg()
        if method == "linear_reg":
            return self._run_linear_reg()
        if method == "linear_bcs":
            return self._run_linear_bcs()
        if method == "naive_bs":
            return self._run_naive_bs()
        return self._run_deep(method)


def run_experiment(config, out_dir, deterministic=False, dry_run=False,
                   methods=None, strategy_samples=3):
    """Run the configured hedging experiment and write report files.

    config is a path or a flat dict; methods optionally restricts the
    config's method list.  Per-method failures are recorded in the
    manifest rather than aborting the rest; the returned summary carries
    a 'failures' entry when any occurred."""
    raw = load_config(config) if isinstance(config, (str, os.PathLike)) \
        else dict(config)
    cfg = validate_config(raw)
    if methods is not None:
        chosen = [m for m in cfg["methods"] if m in set(methods)]
        if not chosen:
            raise ConfigError("methods: none of the requested methods "
                              f"{sorted(set(methods))} are in the config")
        cfg["methods"] = chosen
    if dry_run:
        return {"status": "ok", "methods": cfg["methods"],
                "config_hash": config_hash(raw)}
    os.makedirs(out_dir, exist_ok=True)
    runner = _Runner(cfg, out_dir, deterministic)
    runner.simulate()
    pnls = {}
    x0s = {}
    strat_samples = {}
    failures = {}
    runtimes = {}
    for method in cfg["methods"]:
        t0 = time.perf_counter()
        try:
            x0, alphas = runner.run_method(method)
        except Exception as exc:  # record and keep going
            failures[method] = f"{type(exc).__name__}: {exc}"
            continue
        runtimes[method] = round(time.perf_counter() - t0, 3)
        pnls[method] = pnl(x0, alphas, runner.oos_batch.S, runner.xi_oos)
        x0s[method] = float(x0)
        strat_samples[method] = np.array(alphas[:strategy_samples])
    done = list(pnls)
    if done:
        _write_pnl_csv(os.path.join(out_dir, "pnl.csv"), done, pnls)
        _write_density_csv(os.path.join(out_dir, "density.csv"), done, pnls)
        _write_strategy_csv(os.path.join(out_dir, "strategy.csv"), done,
                            runner.oos_batch.times, strat_samples)
    summary = {"methods": summarize(pnls), "initial_wealth": x0s,
               "config_hash": config_hash(raw),
               "deterministic": bool(deterministic)}
    if failures:
        summary["failures"] = failures
    _atomic_text(os.path.join(out_dir, "summary.json"),
                 json.dumps(summary, indent=2, sort_keys=True) + "\n")
    manifest = {
        "config": {k: v for k, v in raw.items() if not k.startswith("_")},
        "config_hash": config_hash(raw),
        "methods": cfg["methods"],
        "failures": failures,
        "seeds": {"train": cfg["seeds.train"], "oos": cfg["seeds.oos"],
                  "disjoint": cfg["seeds.train"] != cfg["seeds.oos"]},
        "counts": {"train": cfg["paths.train"], "oos": cfg["paths.oos"],
                   "steps": cfg["grid.steps"]},
        "deterministic": bool(deterministic),
        "runtime_seconds": runtimes,
        "versions": {"python": sys.version.split()[0],
                     "numpy": np.__version__,
                     "artifact": _pkg_version()},
    }
    manifest.update(runner.notes)
    _atomic_text(os.path.join(out_dir, "manifest.json"),
                 json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return summary


def _pkg_version():
    from . import __version__
    return __version__


def read_pnl_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        methods = header[1:]
        rows = [line.strip().split(",") for line in fh if line.strip()]
    cols = np.array([[float(x) for x in row[1:]] for row in rows])
    return methods, {m: cols[:, k] for k, m in enumerate(methods)}


def recompute_summary(out_dir):
    """Rebuild the per-method statistics from pnl.csv and compare with the
    stored summary.json; returns (summary dict, exact-match flag)."""
    methods, pnls = read_pnl_csv(os.path.join(out_dir, "pnl.csv"))
    fresh = summarize(pnls)
    with open(os.path.join(out_dir, "summary.json")) as fh:
        stored = json.load(fh)
    match = all(
        m in stored["methods"]
        and stored["methods"][m]["mean"] == fresh[m]["mean"]
        and stored["methods"][m]["msq"] == fresh[m]["msq"]
        and stored["methods"][m]["count"] == fresh[m]["count"]
        for m in methods) and set(stored["methods"]) == set(methods)
    return fresh, match
