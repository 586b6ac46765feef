"""Small hedging networks trained from scratch.

Feedforward (tanh) and LSTM hedgers with a trainable initial wealth,
minimizing the mean squared terminal P&L by plain reverse-mode gradients
implemented here (no autodiff dependency), AdamW updates and a cosine
learning-rate schedule.  Feature sets: the raw state (t, S, Sigma), the
order-M signature of that path, or its log-signature.
"""

import math
import time

import numpy as np

from . import _kernels
from . import sigpath
from . import tensoralg as ta


class NetConfig:
    """Topology: an input layer plus `depth` hidden layers of the same
    width, then a single sigmoid output unit; `unit` picks dense tanh
    layers or stacked LSTM cells."""

    __slots__ = ("unit", "q", "width", "depth")

    def __init__(self, unit, q, width=10, depth=2):
        if unit not in ("vanilla", "lstm"):
            raise ValueError("unit must be 'vanilla' or 'lstm'")
        self.unit = unit
        self.q = q
        self.width = width
        self.depth = depth

    @property
    def layer_inputs(self):
        return [self.q] + [self.width] * self.depth

    def param_count(self) -> int:
        h = self.width
        n = h + 1 + 1  # output weights + bias + trainable X0
        for fan in self.layer_inputs:
            if self.unit == "vanilla":
                n += h * fan + h
            else:
                n += 4 * h * (fan + h) + 4 * h
        return n


class TrainConfig:
    __slots__ = ("batch", "epochs", "lr_hi", "lr_lo", "weight_decay", "seed")

    def __init__(self, batch=64, epochs=64, lr_hi=1e-2, lr_lo=1e-3,
                 weight_decay=0.01, seed=0):
        self.batch = batch
        self.epochs = epochs
        self.lr_hi = lr_hi
        self.lr_lo = lr_lo
        self.weight_decay = weight_decay
        self.seed = seed


def init_params(config: NetConfig, seed: int) -> dict:
    """Uniform fan-in initialization (range +-1/sqrt(fan_in)); X0 at 0."""
    rng = np.random.default_rng(seed)

    def uni(shape, fan):
        r = 1.0 / math.sqrt(fan)
        return rng.uniform(-r, r, shape)

    h = config.width
    params = {}
    for k, fan in enumerate(config.layer_inputs):
        if config.unit == "vanilla":
            params[f"W{k}"] = uni((h, fan), fan)
            params[f"b{k}"] = uni(h, fan)
        else:
            params[f"Wx{k}"] = uni((4 * h, fan), fan)
            params[f"Wh{k}"] = uni((4 * h, h), h)
            params[f"bg{k}"] = uni(4 * h, h)
    params["wo"] = uni(h, h)
    params["co"] = uni((), h)
    params["x0"] = np.zeros(())
    return params


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def forward_vanilla(params: dict, x: np.ndarray) -> np.ndarray:
    """Hedge ratios of the feedforward net; x is (..., q)."""
    h = x
    k = 0
    while f"W{k}" in params:
        h = np.tanh(h @ params[f"W{k}"].T + params[f"b{k}"])
        k += 1
    return _sigmoid(h @ params["wo"] + params["co"])


def lstm_zero_state(config: NetConfig, batch: int):
    return [(np.zeros((batch, config.width)), np.zeros((batch, config.width)))
            for _ in range(config.depth + 1)]


def _lstm_cell(params, k, x, h, c):
    gates = x @ params[f"Wx{k}"].T + h @ params[f"Wh{k}"].T + params[f"bg{k}"]
    H = h.shape[1]
    ci = _sigmoid(gates[:, :H])
    cf = _sigmoid(gates[:, H:2 * H])
    cg = np.tanh(gates[:, 2 * H:3 * H])
    co = _sigmoid(gates[:, 3 * H:])
    c_new = cf * c + ci * cg
    tc = np.tanh(c_new)
    h_new = co * tc
    cache = (x, h, c, ci, cf, cg, co, c_new, tc)
    return h_new, c_new, cache


def forward_lstm(params: dict, x: np.ndarray, state):
    """One time step through the stacked cells; returns the hedge ratio
    and the updated per-layer (h, c) state."""
    new_state = []
    inp = x
    for k in range(len(state)):
        h, c, _ = _lstm_cell(params, k, inp, *state[k])
        new_state.append((h, c))
        inp = h
    y = _sigmoid(inp @ params["wo"] + params["co"])
    return y, new_state


def hedge_ratios(params: dict, config: NetConfig, features: np.ndarray,
                 chunk: int = 4096) -> np.ndarray:
    """Hedge ratio streams alpha[i, j] for features (I, J, q)."""
    I, J, _ = features.shape
    if config.unit == "vanilla":
        return forward_vanilla(params, features)
    out = np.empty((I, J))
    for lo in range(0, I, chunk):
        block = features[lo:lo + chunk]
        state = lstm_zero_state(config, len(block))
        for j in range(J):
            out[lo:lo + chunk, j], state = forward_lstm(params, block[:, j],
                                                        state)
    return out


# -- reverse-mode gradients -------------------------------------------------


def _pnl_and_dalpha(params, alphas, dS, payoffs):
    pnl = params["x0"] + np.sum(alphas * dS, axis=1) - payoffs
    B = len(pnl)
    loss = float(pnl @ pnl) / B
    dalpha = (2.0 / B) * pnl[:, None] * dS
    return pnl, loss, dalpha


def _first_bad_step(arr2d):
    bad = ~np.all(np.isfinite(arr2d), axis=0)
    idx = np.nonzero(bad)[0]
    return int(idx[0]) if len(idx) else -1


def _backward_vanilla(params, features, dS, payoffs):
    I, J, _ = features.shape
    x = features.reshape(I * J, -1)
    hs = [x]
    k = 0
    while f"W{k}" in params:
        hs.append(np.tanh(hs[-1] @ params[f"W{k}"].T + params[f"b{k}"]))
        k += 1
    alpha_flat = _sigmoid(hs[-1] @ params["wo"] + params["co"])
    alphas = alpha_flat.reshape(I, J)
    pnl, loss, dalpha = _pnl_and_dalpha(params, alphas, dS, payoffs)
    if not np.isfinite(dalpha).all():
        raise RuntimeError("non-finite gradient at step "
                           f"{_first_bad_step(dalpha)}")
    grads = {"x0": np.asarray(2.0 * pnl.mean())}
    du = dalpha.reshape(I * J) * alpha_flat * (1.0 - alpha_flat)
    grads["wo"] = hs[-1].T @ du
    grads["co"] = np.asarray(du.sum())
    dh = np.outer(du, params["wo"])
    for k in range(k - 1, -1, -1):
        dz = dh * (1.0 - hs[k + 1] ** 2)
        grads[f"W{k}"] = dz.T @ hs[k]
        grads[f"b{k}"] = dz.sum(axis=0)
        dh = dz @ params[f"W{k}"]
    return loss, grads


def _backward_lstm(params, config, features, dS, payoffs):
    I, J, _ = features.shape
    H = config.width
    layers = config.depth + 1
    state = lstm_zero_state(config, I)
    caches = []
    alphas = np.empty((I, J))
    mids = []
    for j in range(J):
        inp = features[:, j]
        step_cache = []
        new_state = []
        for k in range(layers):
            h, c, cache = _lstm_cell(params, k, inp, *state[k])
            step_cache.append(cache)
            new_state.append((h, c))
            inp = h
        alphas[:, j] = _sigmoid(inp @ params["wo"] + params["co"])
        mids.append(inp)
        caches.append(step_cache)
        state = new_state
    pnl, loss, dalpha = _pnl_and_dalpha(params, alphas, dS, payoffs)
    grads = {name: np.zeros_like(p) for name, p in params.items()}
    grads["x0"] = np.asarray(2.0 * pnl.mean())
    dh_next = [np.zeros((I, H)) for _ in range(layers)]
    dc_next = [np.zeros((I, H)) for _ in range(layers)]
    for j in range(J - 1, -1, -1):
        du = dalpha[:, j] * alphas[:, j] * (1.0 - alphas[:, j])
        grads["wo"] += mids[j].T @ du
        grads["co"] += du.sum()
        dx = np.outer(du, params["wo"])
        for k in range(layers - 1, -1, -1):
            x, h_prev, c_prev, ci, cf, cg, co, c_new, tc = caches[j][k]
            dh = dh_next[k] + dx
            dc = dc_next[k] + dh * co * (1.0 - tc ** 2)
            dgates = np.concatenate([
                dc * cg * ci * (1.0 - ci),
                dc * c_prev * cf * (1.0 - cf),
                dc * ci * (1.0 - cg ** 2),
                dh * tc * co * (1.0 - co)], axis=1)
            if not np.isfinite(dgates).all():
                raise RuntimeError(f"non-finite gradient at step {j}")
            grads[f"Wx{k}"] += dgates.T @ x
            grads[f"Wh{k}"] += dgates.T @ h_prev
            grads[f"bg{k}"] += dgates.sum(axis=0)
            dh_next[k] = dgates @ params[f"Wh{k}"]
            dc_next[k] = dc * cf
            dx = dgates @ params[f"Wx{k}"]
    return loss, grads


def backward(params: dict, config: NetConfig, features, dS, payoffs):
    """Loss and gradients of the mean squared P&L over one batch."""
    if config.unit == "vanilla":
        return _backward_vanilla(params, features, dS, payoffs)
    return _backward_lstm(params, config, features, dS, payoffs)


# -- optimizer --------------------------------------------------------------


def cosine_lr(step: int, total_steps: int, hi=1e-2, lo=1e-3) -> float:
    """Cosine interpolation from hi at step 0 to lo at the last step."""
    if total_steps <= 1:
        return lo
    s = step / (total_steps - 1)
    return lo + (hi - lo) * 0.5 * (1.0 + math.cos(math.pi * s))


def adamw_state(params: dict) -> dict:
    return {name: (np.zeros_like(p), np.zeros_like(p))
            for name, p in params.items()}


def adamw_step(params: dict, grads: dict, state: dict, step: int, lr: float,
               weight_decay=0.01, b1=0.9, b2=0.999, eps=1e-8) -> None:
    """Decoupled weight decay on weight matrices (biases and X0 exempt),
    then a standard Adam update; mutates params and state in place."""
    t = step + 1
    for name, p in params.items():
        g = grads[name]
        if weight_decay and name[0] in "Ww":
            p -= lr * weight_decay * p
        m, v = state[name]
        m += (1 - b1) * (g - m)
        v += (1 - b2) * (g * g - v)
        p -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)


# -- feature sets -----------------------------------------------------------


def vnn_features(batch) -> np.ndarray:
    """Raw state (t, S, Sigma) at each rebalance time: (I, J, 3)."""
    I, J = batch.S.shape[0], batch.S.shape[1] - 1
    out = np.empty((I, J, 3))
    out[:, :, 0] = batch.times[:J]
    out[:, :, 1] = batch.S[:, :J]
    out[:, :, 2] = batch.Sigma[:, :J]
    return out


def _state_streams(batch, order: int) -> np.ndarray:
    """Signature streams of (t, S, Sigma) at all grid times: (I, J+1, nw)."""
    I, n1 = batch.S.shape
    table = sigpath.chen_table(3, order)
    nw = ta.n_words(3, order)
    out = np.empty((I, n1, nw))
    incs = np.empty((n1 - 1, 3))
    incs[:, 0] = np.diff(batch.times)
    for i in range(I):
        incs[:, 1] = np.diff(batch.S[i])
        incs[:, 2] = np.diff(batch.Sigma[i])
        _kernels.chen_stream_single(incs, *table, out[i])
    return out


def snn_features(batch, order: int = 4) -> np.ndarray:
    """Signature of the (t, S, Sigma) path up to each rebalance time,
    empty word dropped: (I, J, n_words - 1)."""
    streams = _state_streams(batch, order)
    return streams[:, :-1, 1:].copy()


def logsnn_features(batch, order: int = 4, chunk: int = 65536) -> np.ndarray:
    """Log-signature variant of snn_features (same width; the empty-word
    slot, identically zero after the logarithm, is dropped)."""
    streams = _state_streams(batch, order)
    I, n1, nw = streams.shape
    flat = streams.reshape(I * n1, nw)
    out = np.empty_like(flat)
    for lo in range(0, len(flat), chunk):
        out[lo:lo + chunk] = _batched_log(flat[lo:lo + chunk], 3, order)
    return out.reshape(I, n1, nw)[:, :-1, 1:].copy()


def _batched_concat(A, B, dim, order, offs):
    out = np.zeros_like(A)
    for n in range(order + 1):
        tgt = out[:, offs[n]:offs[n + 1]].reshape(len(A), -1)
        for a in range(n + 1):
            xa = A[:, offs[a]:offs[a + 1]]
            yb = B[:, offs[n - a]:offs[n - a + 1]]
            tgt += np.einsum("ra,rb->rab", xa, yb).reshape(len(A), -1)
    return out


def _batched_log(rows, dim, order):
    # mirrors tensoralg.tensor_log, vectorized over rows of signatures
    offs = ta.level_offsets(dim, order)
    p = rows.copy()
    p[:, 0] = 0.0
    acc = np.zeros_like(rows)
    acc[:, 0] = (-1.0) ** (order - 1) / order
    for n in range(order - 1, 0, -1):
        acc = _batched_concat(p, acc, dim, order, offs)
        acc[:, 0] += (-1.0) ** (n - 1) / n
    return _batched_concat(p, acc, dim, order, offs)


def feature_normalizer(features: np.ndarray):
    """In-sample per-coordinate standardization constants (mean, std);
    constant coordinates keep unit scale."""
    flat = features.reshape(-1, features.shape[-1])
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return mean, std


# -- training ---------------------------------------------------------------


def train(features, dS, payoffs, net: NetConfig, cfg: TrainConfig):
    """Minibatch training of the hedger; returns (params, history) with
    one history row (step, lr, train_loss, wall_ms) per update."""
    features = np.asarray(features, dtype=np.float64)
    dS = np.asarray(dS, dtype=np.float64)
    payoffs = np.asarray(payoffs, dtype=np.float64)
    I, J, q = features.shape
    if q != net.q:
        raise ValueError(f"feature width {q} does not match net input "
                         f"{net.q}")
    if dS.shape != (I, J) or payoffs.shape != (I,):
        raise ValueError("need features (I, J, q), dS (I, J), payoffs (I,)")
    rng = np.random.default_rng(cfg.seed)
    params = init_params(net, int(rng.integers(2 ** 31)))
    state = adamw_state(params)
    per_epoch = -(-I // cfg.batch)  # final short batch is kept
    total = cfg.epochs * per_epoch
    history = np.empty((total, 4))
    step = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(I)
        for b in range(per_epoch):
            idx = perm[b * cfg.batch:(b + 1) * cfg.batch]
            lr = cosine_lr(step, total, cfg.lr_hi, cfg.lr_lo)
            t0 = time.perf_counter()
            loss, grads = backward(params, net, features[idx], dS[idx],
                                   payoffs[idx])
            if not math.isfinite(loss) or loss > 1e3:
                raise RuntimeError(f"training diverged at update {step}: "
                                   f"loss {loss:.3e}")
            adamw_step(params, grads, state, step, lr, cfg.weight_decay)
            history[step] = (step, lr,
                             loss, 1e3 * (time.perf_counter() - t0))
            step += 1
    return params, history


def truncation_sweep(train_batch, train_payoffs, oos_batch, oos_payoffs,
                     orders, repeats: int, kinds=("sig", "logsig"),
                     epochs: int = 16, seed: int = 0, width: int = 10):
    """Repeated independent trainings per signature truncation order;
    returns {kind: {order: mean OOS msq P&L}}."""
    dS_tr = np.diff(train_batch.S, axis=1)
    dS_oos = np.diff(oos_batch.S, axis=1)
    out = {kind: {} for kind in kinds}
    for kind in kinds:
        builder = snn_features if kind == "sig" else logsnn_features
        for order in orders:
            feats_tr = builder(train_batch, order)
            feats_oos = builder(oos_batch, order)
            mean, std = feature_normalizer(feats_tr)
            feats_tr = (feats_tr - mean) / std
            feats_oos = (feats_oos - mean) / std
            net = NetConfig("vanilla", feats_tr.shape[-1], width=width)
            msqs = []
            for r in range(repeats):
                cfg = TrainConfig(epochs=epochs, seed=seed + 1000 * r)
                params, _ = train(feats_tr, dS_tr, train_payoffs, net, cfg)
                alphas = hedge_ratios(params, net, feats_oos)
                pnl = params["x0"] + np.sum(alphas * dS_oos, axis=1) \
                    - oos_payoffs
                msqs.append(float(np.mean(pnl ** 2)))
            out[kind][order] = float(np.mean(msqs))
    return out


# -- serialization ----------------------------------------------------------


def params_to_record(params: dict, net: NetConfig, norm=None) -> dict:
    rec = {"unit": net.unit, "q": net.q, "width": net.width,
           "depth": net.depth,
           "params": {k: np.asarray(v).tolist() for k, v in params.items()}}
    if norm is not None:
        rec["norm"] = {"mean": np.asarray(norm[0]).tolist(),
                       "std": np.asarray(norm[1]).tolist()}
    return rec


def params_from_record(rec: dict):
    net = NetConfig(rec["unit"], rec["q"], rec["width"], rec["depth"])
    params = {k: np.array(v, dtype=np.float64)
              for k, v in rec["params"].items()}
    norm = None
    if "norm" in rec:
        norm = (np.array(rec["norm"]["mean"]), np.array(rec["norm"]["std"]))
    return params, net, norm
