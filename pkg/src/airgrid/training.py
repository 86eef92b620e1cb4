"""Multi-task training: loss, Adam optimizer with early stopping,
gradient-based feature importance and feature selection.

The objective is
    (1 - beta - gamma) * (alpha_sup * L_sup + alpha_ss * L_ss)
    + beta  * sum_i ||dL/dX_num^i||_2
    + gamma * sum_q ||dL/dX_cat^q||_2
where L is mean absolute error, the supervised term runs over the labeled
training grids and the pretext term over all grids, and the norms are per
feature channel over the (grid, time) batch. The penalty's parameter
gradient needs second-order information; it is obtained either by a
central finite difference of the task gradient along the normalized
input-gradient direction (default) or by an exact complex-step directional
derivative ("double-backprop" mode).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from .errors import DivergenceError, InvalidInputError
from .features import FeatureSchema
from .network import STNetwork

_SIGN = np.sign


@dataclass(frozen=True)
class TrainConfig:
    alpha_sup: float = 1.0
    alpha_ss: float = 0.1
    beta: float = 0.01
    gamma: float = 0.01
    learning_rate: float = 1e-3
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    grad_penalty_mode: str = "finite-difference"  # or "double-backprop"
    fd_step_scale: float = 1e-3
    max_steps_per_epoch: int | None = None
    val_stride: int = 1
    pretext: str = "regression"  # "regression" | "completion" | "none"
    completion_mask_rate: float = 0.15

    def __post_init__(self):
        if self.beta + self.gamma >= 1.0 or self.beta < 0 or self.gamma < 0:
            raise InvalidInputError("need beta, gamma >= 0 and beta + gamma < 1")
        if self.alpha_sup <= 0 or self.alpha_ss < 0:
            raise InvalidInputError(
                "alpha_sup must be positive and alpha_ss non-negative")
        if self.grad_penalty_mode not in ("finite-difference", "double-backprop"):
            raise InvalidInputError(
                f"unknown grad_penalty_mode {self.grad_penalty_mode!r}")


@dataclass
class TrainingData:
    """Everything one fold of training consumes, already standardized."""

    x_num: np.ndarray          # [N, T, U]
    x_cat: np.ndarray          # [N, T, V]
    a_od: np.ndarray
    a_se: np.ndarray
    y: np.ndarray              # [N, T], NaN off context grids (standardized)
    ss_labels: np.ndarray | None  # [N, T] standardized pretext labels
    y_mean: float = 0.0
    y_std: float = 1.0

    @property
    def hours(self) -> int:
        return self.x_num.shape[1]


@dataclass
class ImportanceReport:
    names: list[str]
    kinds: list[str]           # "numeric" | "categorical"
    scores: np.ndarray

    def ranking(self) -> list[int]:
        # stable: ties keep schema order
        return list(np.argsort(-self.scores, kind="stable"))

    def to_frame(self) -> pd.DataFrame:
        order = self.ranking()
        return pd.DataFrame({
            "rank": np.arange(1, len(order) + 1),
            "feature": [self.names[i] for i in order],
            "score": self.scores[order],
            "kind": [self.kinds[i] for i in order],
        })


def mae(y, y_hat) -> float:
    y = np.asarray(y, float)
    y_hat = np.asarray(y_hat, float)
    if y.shape != y_hat.shape or y.size < 1:
        raise InvalidInputError("mae needs equal, non-empty shapes")
    return float(np.abs(y - y_hat).mean())


def channel_norms(dZ: np.ndarray, sl: slice) -> np.ndarray:
    """L2 norm per feature channel over the (grid, time) batch."""
    block = dZ[:, :, sl]
    return np.sqrt((block.real ** 2).sum(axis=(0, 1)))


def multitask_loss(y_sup, y_train, y_ss, ss_labels, input_grads,
                   cfg: TrainConfig) -> float:
    """Scalar training objective; input_grads is (num_grads, cat_grads)
    with per-channel gradient arrays of the task loss, or None when
    beta = gamma = 0."""
    if cfg.beta + cfg.gamma >= 1.0:
        raise InvalidInputError("beta + gamma must be < 1")
    task = cfg.alpha_sup * mae(y_train, y_sup)
    if y_ss is not None and ss_labels is not None:
        task += cfg.alpha_ss * mae(ss_labels, y_ss)
    total = (1.0 - cfg.beta - cfg.gamma) * task
    if input_grads is not None:
        num_grads, cat_grads = input_grads
        if cfg.beta:
            total += cfg.beta * sum(
                float(np.linalg.norm(g)) for g in num_grads)
        if cfg.gamma:
            total += cfg.gamma * sum(
                float(np.linalg.norm(g)) for g in cat_grads)
    return float(total)


# ---------------------------------------------------------------------------
# one training step

def _mae_and_grad(pred, target, weight):
    """Masked MAE and its gradient wrt pred. target may contain NaN
    (excluded). Complex-safe: branching uses real parts."""
    valid = ~np.isnan(target.real if np.iscomplexobj(target) else target)
    n = int(valid.sum())
    if n == 0:
        return 0.0, np.zeros_like(pred)
    diff = np.where(valid, pred - np.where(valid, target, 0.0), 0.0)
    loss = weight * np.abs(diff.real).sum() / n
    g = np.zeros_like(pred)
    g[valid] = weight * _SIGN(diff.real[valid]) / n
    return loss, g


def task_forward_backward(net: STNetwork, params, data: TrainingData, t: int,
                          train_ids, cfg: TrainConfig, rng=None,
                          perturb=None, completion_mask=None):
    """Forward + exact backward of the task loss at window ending at t.

    Returns (task_loss, grads, dZ, y_sup_pred). `perturb` shifts the dense
    input (used for the penalty's directional second derivative).
    """
    tau = net.config.tau
    sl = slice(t - tau + 1, t + 1)
    x_num = data.x_num[:, sl, :]
    x_cat = data.x_cat[:, sl, :]

    target_sup = np.full(net.n, np.nan)
    mask_train = np.zeros(net.n, bool)
    mask_train[list(train_ids)] = True
    yt = data.y[:, t]
    usable = mask_train & ~np.isnan(yt)
    target_sup[usable] = yt[usable]

    if cfg.pretext == "completion":
        x_num = x_num.copy()
        x_num[completion_mask] = 0.0

    Z = net.build_input(x_num, x_cat, params, perturb=perturb)
    y_sup, y_ss, cache = net.forward(params, Z, data.a_od, data.a_se)

    loss_sup, dy_sup = _mae_and_grad(y_sup, target_sup, cfg.alpha_sup)
    loss_ss, dy_ss = 0.0, None
    if cfg.pretext == "regression" and net.config.use_ssb:
        loss_ss, g = _mae_and_grad(y_ss[:, 0], data.ss_labels[:, t],
                                   cfg.alpha_ss)
        dy_ss = np.zeros_like(y_ss)
        dy_ss[:, 0] = g
    elif cfg.pretext == "completion" and net.config.use_ssb:
        target = np.full_like(y_ss, np.nan)
        target[completion_mask] = data.x_num[completion_mask, t, :]
        loss_ss, dy_ss = _mae_and_grad(y_ss, target, cfg.alpha_ss)

    grads = net.zero_grads(params)
    dZ = net.backward(params, cache, dy_sup, dy_ss, grads)
    net.scatter_embedding_grads(dZ, x_cat, grads)
    return loss_sup + loss_ss, grads, dZ, y_sup


def _penalty_direction(net: STNetwork, dZ: np.ndarray,
                       cfg: TrainConfig) -> tuple[float, np.ndarray | None]:
    """Penalty value and the input direction v such that
    d(penalty)/d(params) equals the directional derivative of the task
    gradient along v."""
    v = np.zeros_like(dZ)
    penalty = 0.0
    for weight, sl in ((cfg.beta, net.num_slice), (cfg.gamma, net.emb_slice)):
        if weight == 0.0 or sl.stop == sl.start:
            continue
        norms = channel_norms(dZ, sl)
        penalty += weight * norms.sum()
        safe = np.where(norms > 0, norms, 1.0)
        v[:, :, sl] = weight * dZ[:, :, sl] / safe[None, None, :]
    if penalty == 0.0:
        return 0.0, None
    return penalty, v


def train_step(net: STNetwork, params, data: TrainingData, t: int,
               train_ids, cfg: TrainConfig, rng) -> tuple[float, dict]:
    """Loss and full parameter gradient (task + penalty) at one timestep."""
    completion_mask = None
    if cfg.pretext == "completion":
        n_mask = max(1, int(round(cfg.completion_mask_rate * net.n)))
        completion_mask = np.zeros(net.n, bool)
        completion_mask[rng.choice(net.n, size=n_mask, replace=False)] = True

    task, grads, dZ, _ = task_forward_backward(
        net, params, data, t, train_ids, cfg,
        completion_mask=completion_mask)

    penalty, v = _penalty_direction(net, dZ, cfg)
    scale = 1.0 - cfg.beta - cfg.gamma
    total_grads = {k: scale * g for k, g in grads.items()}
    loss = scale * task + penalty

    if v is not None:
        if cfg.grad_penalty_mode == "double-backprop":
            # exact directional derivative via complex step
            eps = 1e-20
            _, gc, _, _ = task_forward_backward(
                net, {k: p.astype(complex) for k, p in params.items()},
                data, t, train_ids, cfg, perturb=1j * eps * v,
                completion_mask=completion_mask)
            for k in total_grads:
                total_grads[k] += gc[k].imag / eps
        else:
            eps = cfg.fd_step_scale * max(float(np.std(data.x_num)), 1e-6)
            _, gp, _, _ = task_forward_backward(
                net, params, data, t, train_ids, cfg, perturb=eps * v,
                completion_mask=completion_mask)
            _, gm, _, _ = task_forward_backward(
                net, params, data, t, train_ids, cfg, perturb=-eps * v,
                completion_mask=completion_mask)
            for k in total_grads:
                total_grads[k] += (gp[k] - gm[k]) / (2.0 * eps)
    return loss, total_grads


# ---------------------------------------------------------------------------
# optimizer and loop

class Adam:
    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1t = 1.0 - self.b1 ** self.t
        b2t = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= (self.lr * (self.m[k] / b1t)
                          / (np.sqrt(self.v[k] / b2t) + self.eps))


def validation_mae(net: STNetwork, params, data: TrainingData,
                   val_ids, stride: int = 1) -> float:
    """Supervised-head MAE on validation grids, in label units."""
    tau = net.config.tau
    ids = sorted(val_ids)
    errs, cnt = 0.0, 0
    for t in range(tau - 1, data.hours, stride):
        yt = data.y[ids, t]
        valid = ~np.isnan(yt)
        if not valid.any():
            continue
        sl = slice(t - tau + 1, t + 1)
        y_sup, _ = net.predict(params, data.x_num[:, sl, :],
                               data.x_cat[:, sl, :], data.a_od, data.a_se)
        errs += np.abs(y_sup[ids][valid] - yt[valid]).sum()
        cnt += int(valid.sum())
    return data.y_std * errs / max(cnt, 1)


def train(net: STNetwork, data: TrainingData, fold, cfg: TrainConfig,
          init_params: dict | None = None) -> tuple[dict, pd.DataFrame]:
    """Adam on the full multi-task objective with early stopping on the
    fold's validation MAE. Returns (best params, per-epoch log)."""
    train_ids, val_ids = fold
    if not train_ids or not val_ids:
        raise InvalidInputError("fold must have non-empty train and validation sets")
    rng = np.random.default_rng(cfg.seed)
    params = (copy.deepcopy(init_params) if init_params is not None
              else net.init_params(cfg.seed))
    opt = Adam(params, cfg.learning_rate, cfg.adam_betas, cfg.adam_eps)

    tau = net.config.tau
    all_t = np.arange(tau - 1, data.hours)
    best = copy.deepcopy(params)
    best_val = np.inf
    bad = 0
    rows = []
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(all_t)
        if cfg.max_steps_per_epoch:
            order = order[:cfg.max_steps_per_epoch]
        total = 0.0
        for t in order:
            loss, grads = train_step(net, params, data, int(t), train_ids,
                                     cfg, rng)
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            opt.step(params, grads)
            total += loss
        train_loss = total / max(len(order), 1)
        val = validation_mae(net, params, data, val_ids, cfg.val_stride)
        rows.append({"epoch": epoch, "train_loss": train_loss, "val_mae": val})
        if val < best_val - 1e-12:
            best_val = val
            best = copy.deepcopy(params)
            bad = 0
        else:
            bad += 1
            if bad > cfg.patience:
                break
    return best, pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# feature importance / selection

def feature_importance(net: STNetwork, params, data: TrainingData,
                       grid_ids, cfg: TrainConfig,
                       max_steps: int | None = 64) -> ImportanceReport:
    """Per-feature gradient-norm importance on an evaluation batch.

    Numeric feature i scores ||dL/dX_num^i||; categorical feature j scores
    the mean of its embedding channels' norms.
    """
    for v in params.values():
        if not np.isfinite(v).all():
            raise InvalidInputError("model parameters are not finite")
    tau = net.config.tau
    steps = np.arange(tau - 1, data.hours)
    if max_steps and len(steps) > max_steps:
        idx = np.linspace(0, len(steps) - 1, max_steps).astype(int)
        steps = steps[idx]
    num_acc = np.zeros(net.schema.n_numeric)
    emb_acc = np.zeros(net.emb_slice.stop - net.emb_slice.start)
    eval_cfg = replace(cfg, pretext="none")
    for t in steps:
        _, _, dZ, _ = task_forward_backward(net, params, data, int(t),
                                            grid_ids, eval_cfg)
        num_acc += channel_norms(dZ, net.num_slice) ** 2
        emb_acc += channel_norms(dZ, net.emb_slice) ** 2
    num_scores = np.sqrt(num_acc)
    emb_scores = np.sqrt(emb_acc)

    names = list(net.schema.numeric_names)
    kinds = ["numeric"] * len(names)
    scores = list(num_scores)
    off = 0
    for j, q in enumerate(net.schema.embed_dims):
        names.append(net.schema.categorical_names[j])
        kinds.append("categorical")
        scores.append(float(emb_scores[off:off + q].mean()))
        off += q
    return ImportanceReport(names=names, kinds=kinds,
                            scores=np.array(scores))


def select_features(report: ImportanceReport, schema: FeatureSchema,
                    keep: int) -> FeatureSchema:
    """Schema restricted to the top-`keep` ranked features (ties keep
    schema order)."""
    if keep < 1 or keep > len(report.names):
        raise InvalidInputError(
            f"keep={keep} out of range for {len(report.names)} features")
    top = {report.names[i] for i in report.ranking()[:keep]}
    return schema.restrict(numeric_keep=top, categorical_keep=top)
