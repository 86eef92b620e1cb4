"""Spatio-temporal multi-task network with hand-written exact gradients.

Architecture: categorical embeddings and a deterministic sin/cos
positional encoding are concatenated to the numeric features of each
timestep; a bidirectional LSTM produces a time-aware representation per
grid; two multi-head graph-attention blocks (over the truck-OD adjacency,
then the semantic adjacency) mix information spatially; a graph-attention
decoder emits the supervised prediction and a small dense head emits the
pretext-task prediction. Both heads share the encoder.

Everything is float64 numpy. Forward passes cache what the backward pass
needs; backward returns exact reverse-mode gradients for all parameters
and for the dense input (numeric channels, embedded categorical channels,
positional channels), which the training loss needs for its gradient-based
feature-selection terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, SchemaError
from .features import FeatureSchema
from .grid import GridGraph


@dataclass(frozen=True)
class ModelConfig:
    d_p: int = 8           # positional dim per axis (even)
    d_t: int = 64          # temporal representation width (even)
    heads_od: int = 4
    heads_se: int = 2
    heads_sup: int = 2
    tau: int = 24          # time window, hours
    d_ss_hidden: int = 32
    d_ss: int = 1          # pretext output dim (U for graph completion)
    leaky_slope: float = 0.2
    use_pe: bool = True
    use_ssb: bool = True

    def __post_init__(self):
        if self.d_p % 2 or self.d_p < 2:
            raise InvalidInputError("d_p must be even and >= 2")
        if self.d_t % 2:
            raise InvalidInputError("d_t must be even")
        for h in (self.heads_od, self.heads_se, self.heads_sup):
            if self.d_t % h:
                raise InvalidInputError("d_t must be divisible by each head count")
        if self.tau < 1:
            raise InvalidInputError("tau must be >= 1")


def positional_embedding(g: GridGraph, d_p: int) -> np.ndarray:
    """[N, 2*d_p] sin/cos encoding of each cell's (row, col) position."""
    if d_p % 2:
        raise InvalidInputError("d_p must be even")
    rows = np.array([c.row for c in g.cells], float)
    cols = np.array([c.col for c in g.cells], float)

    def encode(pos):
        out = np.zeros((len(pos), d_p))
        for i in range(d_p // 2):
            denom = 10000.0 ** (4.0 * i / d_p)
            out[:, 2 * i] = np.sin(pos / denom)
            out[:, 2 * i + 1] = np.cos(pos / denom)
        return out

    return np.concatenate([encode(rows), encode(cols)], axis=1)


# ---------------------------------------------------------------------------
# primitives

def _real(x):
    return x.real if np.iscomplexobj(x) else x


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _elu(x):
    pos = _real(x) > 0
    neg = np.where(pos, 0.0, x)
    return np.where(pos, x, np.exp(neg) - 1.0)


def _elu_grad(x):
    pos = _real(x) > 0
    neg = np.where(pos, 0.0, x)
    return np.where(pos, 1.0, np.exp(neg))


def lstm_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray):
    """Single-direction LSTM over x [N, T, F]; returns (h_last, cache).

    Gate layout in W/b rows: forget, input, candidate, output.
    """
    n, T, F = x.shape
    H = W.shape[0] // 4
    dtype = np.result_type(x.dtype, W.dtype)
    h = np.zeros((n, H), dtype=dtype)
    c = np.zeros((n, H), dtype=dtype)
    steps = []
    for t in range(T):
        inp = np.concatenate([h, x[:, t, :]], axis=1)  # [N, H+F]
        z = inp @ W.T + b
        f = _sigmoid(z[:, :H])
        i = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        steps.append((inp, c, f, i, g, o, tc))
        h, c = h_new, c_new
    return h, (steps, x.shape, W)


def lstm_backward(dh_last: np.ndarray, cache):
    """BPTT for lstm_forward. Returns (dx, dW, db)."""
    steps, xshape, W = cache
    n, T, F = xshape
    H = W.shape[0] // 4
    dW = np.zeros_like(W)
    db = np.zeros(4 * H, dtype=W.dtype)
    dx = np.zeros(xshape, dtype=dh_last.dtype)
    dh = dh_last.copy()
    dc = np.zeros((n, H), dtype=dh_last.dtype)
    for t in range(T - 1, -1, -1):
        inp, c_prev, f, i, g, o, tc = steps[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        df = dc * c_prev
        di = dc * g
        dg = dc * i
        dc_prev = dc * f
        dz = np.concatenate([
            df * f * (1.0 - f),
            di * i * (1.0 - i),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ], axis=1)
        dW += dz.T @ inp
        db += dz.sum(axis=0)
        dinp = dz @ W
        dh = dinp[:, :H]
        dx[:, t, :] = dinp[:, H:]
        dc = dc_prev
    return dx, dW, db


def bilstm_forward(x: np.ndarray, params: dict, prefix: str = "lstm"):
    """Bidirectional LSTM; output [N, d_t] = [h_T^fwd || h_1^bwd]."""
    h_f, cache_f = lstm_forward(x, params[f"{prefix}_f_W"], params[f"{prefix}_f_b"])
    h_b, cache_b = lstm_forward(x[:, ::-1, :], params[f"{prefix}_b_W"],
                                params[f"{prefix}_b_b"])
    return np.concatenate([h_f, h_b], axis=1), (cache_f, cache_b)


def bilstm_backward(dh1: np.ndarray, cache, grads: dict, prefix: str = "lstm"):
    cache_f, cache_b = cache
    H = dh1.shape[1] // 2
    dx_f, dWf, dbf = lstm_backward(dh1[:, :H], cache_f)
    dx_b, dWb, dbb = lstm_backward(dh1[:, H:], cache_b)
    grads[f"{prefix}_f_W"] += dWf
    grads[f"{prefix}_f_b"] += dbf
    grads[f"{prefix}_b_W"] += dWb
    grads[f"{prefix}_b_b"] += dbb
    return dx_f + dx_b[:, ::-1, :]


def gat_forward(H: np.ndarray, mask: np.ndarray, params: dict, name: str,
                n_heads: int, slope: float, activation: str = "elu",
                combine: str = "concat"):
    """Multi-head graph-attention layer.

    mask is a boolean [N, N] adjacency (with self-loops). Per head:
    e_ij = a_src . (W h_i) + a_dst . (W h_j); attention is a masked row
    softmax of LeakyReLU(e); output rows are the attention-weighted sums
    of transformed neighbors. Heads are concatenated (or averaged).
    """
    if not mask.any(axis=1).all():
        raise InvalidInputError("empty neighborhood: add self-loops upstream")
    outs, caches = [], []
    neg = -1e30
    for k in range(n_heads):
        Wk = params[f"{name}_W_{k}"]
        ak = params[f"{name}_a_{k}"]
        d_out = Wk.shape[0]
        S = H @ Wk.T  # [N, d_out]
        e_src = S @ ak[:d_out]
        e_dst = S @ ak[d_out:]
        E = e_src[:, None] + e_dst[None, :]
        El = np.where(_real(E) > 0, E, slope * E)
        El = np.where(mask, El, neg)
        shift = np.where(mask, _real(El), neg).max(axis=1, keepdims=True)
        ex = np.exp(El - shift) * mask
        alpha = ex / ex.sum(axis=1, keepdims=True)
        M = alpha @ S
        out = _elu(M) if activation == "elu" else M
        outs.append(out)
        caches.append((S, E, alpha, M))
    if combine == "concat":
        out = np.concatenate(outs, axis=1)
    else:
        out = np.mean(outs, axis=0)
    return out, (caches, H, mask, combine, activation, slope, name, n_heads)


def gat_backward(dout: np.ndarray, cache, params: dict, grads: dict):
    caches, H, mask, combine, activation, slope, name, n_heads = cache
    dH = np.zeros_like(H)
    for k in range(n_heads):
        S, E, alpha, M = caches[k]
        d_out = S.shape[1]
        if combine == "concat":
            dmk = dout[:, k * d_out:(k + 1) * d_out]
        else:
            dmk = dout / n_heads
        dM = dmk * _elu_grad(M) if activation == "elu" else dmk.copy()
        dalpha = (dM @ S.T) * mask
        dS = alpha.T @ dM
        # masked softmax backward, row-wise
        dEl = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
        dE = np.where(_real(E) > 0, dEl, slope * dEl) * mask
        de_src = dE.sum(axis=1)
        de_dst = dE.sum(axis=0)
        Wk = params[f"{name}_W_{k}"]
        ak = params[f"{name}_a_{k}"]
        dS += de_src[:, None] * ak[:d_out][None, :]
        dS += de_dst[:, None] * ak[d_out:][None, :]
        da = np.concatenate([S.T @ de_src, S.T @ de_dst])
        grads[f"{name}_a_{k}"] += da
        grads[f"{name}_W_{k}"] += dS.T @ H
        dH += dS @ Wk
    return dH


# ---------------------------------------------------------------------------
# full model

class STNetwork:
    """The multi-task spatio-temporal model over a fixed grid graph."""

    def __init__(self, config: ModelConfig, schema: FeatureSchema,
                 g: GridGraph):
        self.config = config
        self.schema = schema
        self.n = g.n_cells
        self.pe = positional_embedding(g, config.d_p) if config.use_pe else None

        U = schema.n_numeric
        sumQ = sum(schema.embed_dims)
        d_pe = 2 * config.d_p if config.use_pe else 0
        self.F = U + sumQ + d_pe
        self.num_slice = slice(0, U)
        self.emb_slice = slice(U, U + sumQ)
        self.pe_slice = slice(U + sumQ, self.F)

    # -- parameters ---------------------------------------------------------

    def init_params(self, seed: int) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(seed)
        cfg = self.config
        p: dict[str, np.ndarray] = {}

        def glorot(shape):
            fan = sum(shape) if len(shape) > 1 else shape[0] + 1
            return rng.normal(0.0, math.sqrt(2.0 / fan), size=shape)

        for j, (card, q) in enumerate(zip(self.schema.cardinalities,
                                          self.schema.embed_dims)):
            p[f"emb_{j}"] = rng.normal(0.0, 0.1, size=(card, q))

        H = cfg.d_t // 2
        for d in ("f", "b"):
            p[f"lstm_{d}_W"] = glorot((4 * H, H + self.F))
            p[f"lstm_{d}_b"] = np.zeros(4 * H)
            # forget-gate bias 1: standard stabilization
            p[f"lstm_{d}_b"][:H] = 1.0

        def gat_params(name, n_heads, d_in, d_out):
            for k in range(n_heads):
                p[f"{name}_W_{k}"] = glorot((d_out, d_in))
                p[f"{name}_a_{k}"] = glorot((2 * d_out,))

        gat_params("od", cfg.heads_od, cfg.d_t, cfg.d_t // cfg.heads_od)
        gat_params("se", cfg.heads_se, cfg.d_t, cfg.d_t // cfg.heads_se)
        gat_params("sup", cfg.heads_sup, cfg.d_t, 1)

        if cfg.use_ssb:
            p["ssb_W1"] = glorot((cfg.d_ss_hidden, cfg.d_t))
            p["ssb_b1"] = np.zeros(cfg.d_ss_hidden)
            p["ssb_W2"] = glorot((cfg.d_ss, cfg.d_ss_hidden))
            p["ssb_b2"] = np.zeros(cfg.d_ss)
        return p

    def zero_grads(self, params: dict) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in params.items()}

    # -- input construction -------------------------------------------------

    def build_input(self, x_num_win: np.ndarray, x_cat_win: np.ndarray,
                    params: dict, perturb: np.ndarray | None = None):
        """Dense input Z [N, tau, F] = [x_num || embeddings || PE]."""
        n, tau, U = x_num_win.shape
        if U != self.schema.n_numeric or tau != self.config.tau:
            raise SchemaError(
                f"window shape {x_num_win.shape} inconsistent with schema/config")
        parts = [x_num_win]
        for j in range(self.schema.n_categorical):
            table = params[f"emb_{j}"]
            idx = x_cat_win[:, :, j]
            if idx.min() < 0 or idx.max() >= table.shape[0]:
                raise InvalidInputError(
                    f"categorical index out of range for feature {j}")
            parts.append(table[idx])  # [N, tau, Q_j]
        if self.config.use_pe:
            parts.append(np.broadcast_to(self.pe[:, None, :],
                                         (n, tau, self.pe.shape[1])))
        Z = np.concatenate(parts, axis=2)
        if perturb is not None:
            Z = Z + perturb
        return Z

    def scatter_embedding_grads(self, dZ: np.ndarray, x_cat_win: np.ndarray,
                                grads: dict) -> None:
        off = self.emb_slice.start
        for j, q in enumerate(self.schema.embed_dims):
            d = dZ[:, :, off:off + q]  # [N, tau, Q_j]
            idx = x_cat_win[:, :, j]
            np.add.at(grads[f"emb_{j}"], idx.ravel(),
                      d.reshape(-1, q))
            off += q

    # -- forward / backward -------------------------------------------------

    def forward(self, params: dict, Z: np.ndarray, a_od: np.ndarray,
                a_se: np.ndarray):
        """Core forward from the dense input. Returns (y_sup, y_ss, cache)."""
        cfg = self.config
        mask_od = a_od.astype(bool)
        mask_se = a_se.astype(bool)
        h1, cache_t = bilstm_forward(Z, params)
        h2, cache_od = gat_forward(h1, mask_od, params, "od", cfg.heads_od,
                                   cfg.leaky_slope)
        h3, cache_se = gat_forward(h2, mask_se, params, "se", cfg.heads_se,
                                   cfg.leaky_slope)
        y_sup_m, cache_sup = gat_forward(h3, mask_se, params, "sup",
                                         cfg.heads_sup, cfg.leaky_slope,
                                         activation="identity",
                                         combine="mean")
        y_sup = y_sup_m[:, 0]
        if cfg.use_ssb:
            z1 = h3 @ params["ssb_W1"].T + params["ssb_b1"]
            a1 = _elu(z1)
            y_ss = a1 @ params["ssb_W2"].T + params["ssb_b2"]
            cache_ssb = (h3, z1, a1)
        else:
            y_ss, cache_ssb = None, None
        cache = (cache_t, cache_od, cache_se, cache_sup, cache_ssb)
        return y_sup, y_ss, cache

    def backward(self, params: dict, cache, dy_sup: np.ndarray,
                 dy_ss: np.ndarray | None, grads: dict) -> np.ndarray:
        """Accumulate parameter grads; return dZ [N, tau, F]."""
        cfg = self.config
        cache_t, cache_od, cache_se, cache_sup, cache_ssb = cache
        dh3 = gat_backward(dy_sup[:, None], cache_sup, params, grads)
        if cfg.use_ssb and dy_ss is not None:
            h3, z1, a1 = cache_ssb
            grads["ssb_W2"] += dy_ss.T @ a1
            grads["ssb_b2"] += dy_ss.sum(axis=0)
            da1 = dy_ss @ params["ssb_W2"]
            dz1 = da1 * _elu_grad(z1)
            grads["ssb_W1"] += dz1.T @ h3
            grads["ssb_b1"] += dz1.sum(axis=0)
            dh3 += dz1 @ params["ssb_W1"]
        dh2 = gat_backward(dh3, cache_se, params, grads)
        dh1 = gat_backward(dh2, cache_od, params, grads)
        dZ = bilstm_backward(dh1, cache_t, grads)
        return dZ

    def predict(self, params: dict, x_num_win, x_cat_win, a_od, a_se):
        Z = self.build_input(x_num_win, x_cat_win, params)
        y_sup, y_ss, _ = self.forward(params, Z, a_od, a_se)
        return y_sup, y_ss


def flatten_params(params: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([params[k].ravel() for k in sorted(params)])


def unflatten_params(vec: np.ndarray,
                     like: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    out = {}
    off = 0
    for k in sorted(like):
        n = like[k].size
        out[k] = vec[off:off + n].reshape(like[k].shape).copy()
        off += n
    return out
