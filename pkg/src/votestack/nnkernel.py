"""Hand-written forward/backward passes for the layers the classifiers need.

Every layer comes as a ``*_forward`` function returning ``(output, cache)``
and a matching ``*_backward`` taking the upstream gradient and the cache.
Sequence layers accept either a single sequence ``(max_len, dim)`` with an
integer ``true_length`` or a batch ``(batch, max_len, dim)`` with one length
per row.  Positions at or beyond a row's true length are never read.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ShapeError


def _as_batch(seq, true_length):
    seq = np.asarray(seq, dtype=np.float64)
    single = seq.ndim == 2
    if single:
        seq = seq[None]
    if seq.ndim != 3:
        raise ShapeError(f"expected (max_len, dim) or (batch, max_len, dim), got {seq.shape}")
    lengths = np.atleast_1d(np.asarray(true_length, dtype=np.int64))
    if lengths.shape != (seq.shape[0],):
        raise ShapeError(f"lengths {lengths.shape} do not match batch of {seq.shape[0]}")
    if np.any(lengths < 0) or np.any(lengths > seq.shape[1]):
        raise ArgumentError(f"true lengths must lie in [0, {seq.shape[1]}]")
    return seq, lengths, single


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# -- dense -----------------------------------------------------------------

def dense_forward(x, W, b):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or W.ndim != 2 or b.ndim != 1 or x.shape[1] != W.shape[0] or W.shape[1] != b.shape[0]:
        raise ShapeError(f"dense shapes disagree: x{x.shape} W{W.shape} b{b.shape}")
    return x @ W + b, (x, W)


def dense_backward(dout, cache):
    x, W = cache
    return dout @ W.T, x.T @ dout, dout.sum(axis=0)


# -- convolution over time + max-over-time pooling --------------------------

def conv1d_maxpool_forward(seq, filters, bias, true_length):
    """Kim-style convolution followed by ReLU and max over valid positions.

    ``filters`` has shape ``(n_filters, width, dim)``.  A row whose true
    length is shorter than the filter width yields all-zero features.
    """
    seq, lengths, single = _as_batch(seq, true_length)
    n_filters, width, dim = filters.shape
    if seq.shape[2] != dim or bias.shape != (n_filters,):
        raise ShapeError(f"conv shapes disagree: seq{seq.shape} filters{filters.shape} bias{bias.shape}")
    B, T, _ = seq.shape
    P = T - width + 1
    feats = np.zeros((B, n_filters))
    best = np.full((B, n_filters), -1, dtype=np.int64)
    windows = None
    if P > 0:
        valid = np.arange(T)[None, :] < lengths[:, None]
        clean = np.where(valid[:, :, None], seq, 0.0)
        windows = np.lib.stride_tricks.sliding_window_view(clean, width, axis=1)  # (B, P, dim, width)
        windows = windows.transpose(0, 1, 3, 2).reshape(B, P, width * dim)
        z = windows @ filters.reshape(n_filters, -1).T + bias  # (B, P, F)
        pos_ok = np.arange(P)[None, :] <= (lengths - width)[:, None]
        z = np.where(pos_ok[:, :, None], z, -np.inf)
        has_pos = pos_ok.any(axis=1)
        arg = np.argmax(z, axis=1)  # first argmax on ties
        zmax = np.take_along_axis(z, arg[:, None, :], axis=1)[:, 0, :]
        active = has_pos[:, None] & (zmax > 0)
        feats = np.where(active, zmax, 0.0)
        best = np.where(active, arg, -1)
    cache = (seq.shape, filters, best, windows, single)
    return (feats[0] if single else feats), cache


def conv1d_maxpool_backward(dfeat, cache):
    shape, filters, best, windows, single = cache
    B, T, dim = shape
    n_filters, width, _ = filters.shape
    dfeat = np.asarray(dfeat, dtype=np.float64).reshape(B, n_filters)
    dseq = np.zeros(shape)
    dfilters = np.zeros_like(filters)
    dbias = np.zeros(n_filters)
    rows, cols = np.nonzero(best >= 0)
    if rows.size:
        g = dfeat[rows, cols]
        pos = best[rows, cols]
        dbias += np.bincount(cols, weights=g, minlength=n_filters)
        win = windows[rows, pos]  # (n, width*dim)
        np.add.at(dfilters.reshape(n_filters, -1), cols, g[:, None] * win)
        contrib = g[:, None, None] * filters[cols]  # (n, width, dim)
        for k in range(width):
            np.add.at(dseq, (rows, pos + k), contrib[:, k, :])
    return (dseq[0] if single else dseq), dfilters, dbias


# -- recurrent cells ---------------------------------------------------------

@dataclass
class LstmParams:
    W_i: np.ndarray
    W_f: np.ndarray
    W_o: np.ndarray
    W_c: np.ndarray
    U_i: np.ndarray
    U_f: np.ndarray
    U_o: np.ndarray
    U_c: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    @property
    def hidden_size(self):
        return self.b_i.shape[0]

    @classmethod
    def zeros(cls, input_dim, hidden):
        return cls(**_zero_fields(cls, input_dim, hidden))

    @classmethod
    def init(cls, input_dim, hidden, rng):
        return cls(**_glorot_fields(cls, input_dim, hidden, rng))


@dataclass
class GruParams:
    W_r: np.ndarray
    W_z: np.ndarray
    W_h: np.ndarray
    U_r: np.ndarray
    U_z: np.ndarray
    U_h: np.ndarray
    b_r: np.ndarray
    b_z: np.ndarray
    b_h: np.ndarray

    @property
    def hidden_size(self):
        return self.b_r.shape[0]

    @classmethod
    def zeros(cls, input_dim, hidden):
        return cls(**_zero_fields(cls, input_dim, hidden))

    @classmethod
    def init(cls, input_dim, hidden, rng):
        return cls(**_glorot_fields(cls, input_dim, hidden, rng))


def _field_shape(name, input_dim, hidden):
    return {"W": (input_dim, hidden), "U": (hidden, hidden), "b": (hidden,)}[name[0]]


def _zero_fields(cls, input_dim, hidden):
    return {f.name: np.zeros(_field_shape(f.name, input_dim, hidden)) for f in dataclasses.fields(cls)}


def _glorot_fields(cls, input_dim, hidden, rng):
    out = {}
    for f in dataclasses.fields(cls):
        shape = _field_shape(f.name, input_dim, hidden)
        out[f.name] = np.zeros(shape) if f.name[0] == "b" else glorot_uniform(rng, shape, *shape)
    return out


def params_to_dict(params, prefix=""):
    return {prefix + f.name: getattr(params, f.name) for f in dataclasses.fields(params)}


def params_from_dict(cls, d, prefix=""):
    return cls(**{f.name: d[prefix + f.name] for f in dataclasses.fields(cls)})


def _check_recurrent(seq, params):
    W = params.W_i if isinstance(params, LstmParams) else params.W_r
    if seq.shape[2] != W.shape[0]:
        raise ShapeError(f"sequence dim {seq.shape[2]} does not match input weights {W.shape}")


def lstm_forward(seq, params: LstmParams, true_length):
    """Run an LSTM from zero state and return the hidden state at ``true_length``."""
    seq, lengths, single = _as_batch(seq, true_length)
    _check_recurrent(seq, params)
    p = params
    B = seq.shape[0]
    H = p.hidden_size
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    steps = []
    for t in range(int(lengths.max(initial=0))):
        rows = np.nonzero(lengths > t)[0]
        x = seq[rows, t]
        hp, cp = h[rows], c[rows]
        i = sigmoid(x @ p.W_i + hp @ p.U_i + p.b_i)
        f = sigmoid(x @ p.W_f + hp @ p.U_f + p.b_f)
        o = sigmoid(x @ p.W_o + hp @ p.U_o + p.b_o)
        g = np.tanh(x @ p.W_c + hp @ p.U_c + p.b_c)
        cn = f * cp + i * g
        tc = np.tanh(cn)
        h[rows] = o * tc
        c[rows] = cn
        steps.append((rows, x, hp, cp, i, f, o, g, tc))
    cache = (seq.shape, p, steps, single)
    return (h[0] if single else h), cache


def lstm_backward(dh, cache):
    shape, p, steps, single = cache
    B, T, D = shape
    H = p.hidden_size
    dh = np.array(dh, dtype=np.float64).reshape(B, H)
    dc = np.zeros((B, H))
    dseq = np.zeros(shape)
    grads = LstmParams.zeros(D, H)
    for t in range(len(steps) - 1, -1, -1):
        rows, x, hp, cp, i, f, o, g, tc = steps[t]
        dht = dh[rows]
        dct = dc[rows] + dht * o * (1.0 - tc ** 2)
        do = dht * tc * o * (1.0 - o)
        di = dct * g * i * (1.0 - i)
        df = dct * cp * f * (1.0 - f)
        dg = dct * i * (1.0 - g ** 2)
        dx = np.zeros_like(x)
        dhp = np.zeros_like(hp)
        for gate, dz in (("i", di), ("f", df), ("o", do), ("c", dg)):
            W = getattr(p, "W_" + gate)
            U = getattr(p, "U_" + gate)
            getattr(grads, "W_" + gate)[...] += x.T @ dz
            getattr(grads, "U_" + gate)[...] += hp.T @ dz
            getattr(grads, "b_" + gate)[...] += dz.sum(axis=0)
            dx += dz @ W.T
            dhp += dz @ U.T
        dseq[rows, t] = dx
        dh[rows] = dhp
        dc[rows] = dct * f
    return (dseq[0] if single else dseq), grads


def gru_forward(seq, params: GruParams, true_length):
    """Run a GRU from zero state; ``h_t = (1 - z) * h_{t-1} + z * candidate``."""
    seq, lengths, single = _as_batch(seq, true_length)
    _check_recurrent(seq, params)
    p = params
    B = seq.shape[0]
    h = np.zeros((B, p.hidden_size))
    steps = []
    for t in range(int(lengths.max(initial=0))):
        rows = np.nonzero(lengths > t)[0]
        x = seq[rows, t]
        hp = h[rows]
        r = sigmoid(x @ p.W_r + hp @ p.U_r + p.b_r)
        z = sigmoid(x @ p.W_z + hp @ p.U_z + p.b_z)
        cand = np.tanh(x @ p.W_h + (r * hp) @ p.U_h + p.b_h)
        h[rows] = (1.0 - z) * hp + z * cand
        steps.append((rows, x, hp, r, z, cand))
    cache = (seq.shape, p, steps, single)
    return (h[0] if single else h), cache


def gru_backward(dh, cache):
    shape, p, steps, single = cache
    B, T, D = shape
    H = p.hidden_size
    dh = np.array(dh, dtype=np.float64).reshape(B, H)
    dseq = np.zeros(shape)
    grads = GruParams.zeros(D, H)
    for t in range(len(steps) - 1, -1, -1):
        rows, x, hp, r, z, cand = steps[t]
        dht = dh[rows]
        da_h = dht * z * (1.0 - cand ** 2)
        da_z = dht * (cand - hp) * z * (1.0 - z)
        drh = da_h @ p.U_h.T
        da_r = drh * hp * r * (1.0 - r)
        grads.W_h += x.T @ da_h
        grads.U_h += (r * hp).T @ da_h
        grads.b_h += da_h.sum(axis=0)
        grads.W_z += x.T @ da_z
        grads.U_z += hp.T @ da_z
        grads.b_z += da_z.sum(axis=0)
        grads.W_r += x.T @ da_r
        grads.U_r += hp.T @ da_r
        grads.b_r += da_r.sum(axis=0)
        dseq[rows, t] = da_h @ p.W_h.T + da_z @ p.W_z.T + da_r @ p.W_r.T
        dh[rows] = dht * (1.0 - z) + drh * r + da_z @ p.U_z.T + da_r @ p.U_r.T
    return (dseq[0] if single else dseq), grads


def reverse_valid(seq, lengths):
    """Reverse the first ``lengths[b]`` steps of each row; padding stays in place."""
    B, T = seq.shape[:2]
    t = np.arange(T)[None, :]
    src = np.where(t < lengths[:, None], lengths[:, None] - 1 - t, t)
    return seq[np.arange(B)[:, None], src]


def bidirectional_forward(seq, fwd, bwd, true_length, cell="lstm"):
    seq, lengths, single = _as_batch(seq, true_length)
    run = lstm_forward if cell == "lstm" else gru_forward
    hf, cf = run(seq, fwd, lengths)
    hb, cb = run(reverse_valid(seq, lengths), bwd, lengths)
    out = np.concatenate([hf, hb], axis=1)
    cache = (cell, lengths, cf, cb, fwd.hidden_size, single)
    return (out[0] if single else out), cache


def bidirectional_backward(dout, cache):
    cell, lengths, cf, cb, H, single = cache
    back = lstm_backward if cell == "lstm" else gru_backward
    dout = np.asarray(dout, dtype=np.float64).reshape(len(lengths), 2 * H)
    dseq_f, gf = back(dout[:, :H], cf)
    dseq_rev, gb = back(dout[:, H:], cb)
    # reversal is an involution on the valid prefix, so it maps gradients back too
    dseq = dseq_f + reverse_valid(dseq_rev, lengths)
    return (dseq[0] if single else dseq), gf, gb


def bilstm_forward(seq, fwd: LstmParams, bwd: LstmParams, true_length):
    return bidirectional_forward(seq, fwd, bwd, true_length, cell="lstm")


def bilstm_backward(dout, cache):
    return bidirectional_backward(dout, cache)


# -- heads and losses --------------------------------------------------------

def softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_crossentropy(logits, targets):
    """Mean negative log-likelihood and its gradient with respect to the logits."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    n, k = logits.shape
    if targets.shape != (n,):
        raise ShapeError(f"{n} logit rows but {targets.shape[0]} targets")
    if np.any(targets < 0) or np.any(targets >= k):
        raise ArgumentError(f"targets must lie in [0, {k}), got {targets.tolist()}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted[np.arange(n), targets] - log_z
    loss = float(-log_p.mean())
    grad = np.exp(shifted - log_z[:, None])
    grad[np.arange(n), targets] -= 1.0
    return loss, grad / n


def dropout_forward(x, rate, rng, train=True):
    """Inverted dropout; identity at inference or when ``rate`` is 0."""
    if not train or rate <= 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


# -- optimisation ------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state: AdamState):
    """Bias-corrected Adam update of ``params`` (a name -> array dict) in place."""
    if set(params) != set(grads):
        raise ShapeError(f"parameter and gradient names differ: {sorted(set(params) ^ set(grads))}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"{name}: parameter {p.shape} vs gradient {g.shape}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        if m.shape != p.shape:
            raise ShapeError(f"{name}: accumulator {m.shape} vs parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** state.t)
        v_hat = v / (1.0 - b2 ** state.t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state


# -- verification ------------------------------------------------------------

def gradient_check(forward, params, inputs=None, h=1e-5, names=None):
    """Largest element-wise relative error between analytic and numeric gradients.

    ``forward(params, inputs)`` returns ``(loss, grads)`` with ``grads`` keyed
    like ``params``.  Numeric gradients use central differences with step
    ``h``; relative error is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    _, analytic = forward(params, inputs)
    worst = 0.0
    for name in names or params:
        p = params[name]
        a = np.asarray(analytic[name], dtype=np.float64)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            fp, _ = forward(params, inputs)
            p[idx] = orig - h
            fm, _ = forward(params, inputs)
            p[idx] = orig
            num = (fp - fm) / (2.0 * h)
            err = abs(a[idx] - num) / max(abs(a[idx]), abs(num), 1e-8)
            worst = max(worst, err)
    return worst
