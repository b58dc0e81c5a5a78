"""Predictors and optimization.

Two architectures: a plain logistic/MLP head for the single-score
models, and a two-head mixture-of-experts net for the decomposed
in-window / out-of-window predictor.  All gradients are analytic and
every loss in the package reduces to per-sample coefficients (a, b) of
-(a*log p + b*log(1-p)), so one backward pass serves the whole loss
family.  Importance weights and correction terms enter only through
(a, b) and are constants with respect to these gradients.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import ConfigError, DomainError

P_EPS = 1e-7  # probability clamp for logs and their gradients
LEAKY_SLOPE = 0.01


def sigmoid(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    return np.where(s >= 0, 1.0 / (1.0 + np.exp(-np.abs(s))), np.exp(-np.abs(s)) / (1.0 + np.exp(-np.abs(s))))


def clamp_prob(p: np.ndarray) -> np.ndarray:
    return np.clip(p, P_EPS, 1.0 - P_EPS)


def _leaky(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, z, LEAKY_SLOPE * z)


def _leaky_grad(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, 1.0, LEAKY_SLOPE)


@dataclass
class MlpParams:
    """Feed-forward net with leaky-rectifier hidden layers and a sigmoid output.

    hidden=() makes this plain logistic regression.
    """

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def arrays(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out

    @property
    def arch(self) -> dict:
        return {
            "kind": "mlp",
            "dim": int(self.weights[0].shape[0]),
            "hidden": [int(w.shape[1]) for w in self.weights[:-1]],
        }


def init_mlp(
    dim: int, hidden: Sequence[int] = (), rng: Optional[np.random.Generator] = None
) -> MlpParams:
    """Zero-initialized logistic head, or rng-initialized MLP."""
    sizes = [dim, *hidden, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        if rng is None or len(sizes) == 2:
            w = np.zeros((fan_in, fan_out))
        else:
            w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return MlpParams(weights=weights, biases=biases)


def forward(params: MlpParams, x: np.ndarray) -> Tuple[np.ndarray, list]:
    """Predicted probabilities plus the activation cache for backward."""
    h = np.asarray(x, dtype=np.float64)
    cache = [(h, None)]
    n_layers = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        if i < n_layers - 1:
            h = _leaky(z)
            cache.append((h, z))
        else:
            s = z[:, 0]
    p = clamp_prob(sigmoid(s))
    return p, cache


def predict(params: MlpParams, x: np.ndarray) -> np.ndarray:
    return forward(params, x)[0]


def backward(params: MlpParams, cache: list, dls: np.ndarray) -> MlpParams:
    """Parameter gradients given per-sample dLoss/dlogit (already /B)."""
    delta = dls[:, None]
    gw: List[np.ndarray] = [np.zeros(0)] * len(params.weights)
    gb: List[np.ndarray] = [np.zeros(0)] * len(params.biases)
    for i in range(len(params.weights) - 1, -1, -1):
        h_in = cache[i][0]
        gw[i] = h_in.T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            z_in = cache[i][1]
            delta = (delta @ params.weights[i].T) * _leaky_grad(z_in)
    return MlpParams(weights=gw, biases=gb)


def _check_finite(per_sample: np.ndarray) -> None:
    bad = np.nonzero(~np.isfinite(per_sample))[0]
    if bad.size:
        raise DomainError(f"non-finite loss at sample index {int(bad[0])}")


def loss_and_grad(
    params: MlpParams, x: np.ndarray, a: np.ndarray, b: np.ndarray
) -> Tuple[float, MlpParams]:
    """Mean of -(a log p + b log(1-p)) and its parameter gradients.

    The coefficients are treated as constants: corrections that depend on
    model outputs must be evaluated (and frozen) before calling.
    """
    p, cache = forward(params, x)
    n = max(len(p), 1)
    per = -np.asarray(a) * np.log(p) - np.asarray(b) * np.log(1.0 - p)
    _check_finite(per)
    loss = float(np.mean(per)) if len(p) else 0.0
    dls = ((a + b) * p - a) / n
    return loss, backward(params, cache, dls)


@dataclass
class BiDefuseParams:
    """Two sigmoid heads over three single-layer experts and two gates.

    The in-window head reads a gate-weighted blend of the in-window
    expert and the shared expert; the out-of-window head blends the
    out-window expert with the same shared expert.  The overall CVR
    estimate is the clamped sum of the two heads.
    """

    expert_w: List[np.ndarray]  # [in, shared, out], each (dim, h)
    expert_b: List[np.ndarray]
    gate_w: List[np.ndarray]  # [in, out], each (dim, 2)
    gate_b: List[np.ndarray]
    head_w: List[np.ndarray]  # [in, out], each (h,)
    head_b: List[np.ndarray]  # [in, out], each scalar array

    def arrays(self) -> Dict[str, np.ndarray]:
        names = {}
        for tag, i in (("in", 0), ("shared", 1), ("out", 2)):
            names[f"expert_{tag}_w"] = self.expert_w[i]
            names[f"expert_{tag}_b"] = self.expert_b[i]
        for tag, i in (("in", 0), ("out", 1)):
            names[f"gate_{tag}_w"] = self.gate_w[i]
            names[f"gate_{tag}_b"] = self.gate_b[i]
            names[f"head_{tag}_w"] = self.head_w[i]
            names[f"head_{tag}_b"] = self.head_b[i]
        return names

    @property
    def arch(self) -> dict:
        return {
            "kind": "bidefuse",
            "dim": int(self.expert_w[0].shape[0]),
            "hidden": [int(self.expert_w[0].shape[1])],
        }


def init_bidefuse(dim: int, hidden: int, rng: np.random.Generator) -> BiDefuseParams:
    def w(shape):
        return rng.normal(0.0, 1.0 / np.sqrt(shape[0]), size=shape)

    return BiDefuseParams(
        expert_w=[w((dim, hidden)) for _ in range(3)],
        expert_b=[np.zeros(hidden) for _ in range(3)],
        gate_w=[w((dim, 2)) for _ in range(2)],
        gate_b=[np.zeros(2) for _ in range(2)],
        head_w=[w((hidden,)) for _ in range(2)],
        head_b=[np.zeros(1) for _ in range(2)],
    )


def _softmax2(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward_bidefuse(params: BiDefuseParams, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, dict]:
    x = np.asarray(x, dtype=np.float64)
    ze = [x @ w + b for w, b in zip(params.expert_w, params.expert_b)]
    he = [_leaky(z) for z in ze]
    gates = [_softmax2(x @ w + b) for w, b in zip(params.gate_w, params.gate_b)]
    r_in = gates[0][:, :1] * he[0] + gates[0][:, 1:] * he[1]
    r_out = gates[1][:, :1] * he[2] + gates[1][:, 1:] * he[1]
    s_in = r_in @ params.head_w[0] + params.head_b[0][0]
    s_out = r_out @ params.head_w[1] + params.head_b[1][0]
    p_in = clamp_prob(sigmoid(s_in))
    p_out = clamp_prob(sigmoid(s_out))
    cache = {"x": x, "ze": ze, "he": he, "gates": gates, "r": [r_in, r_out]}
    return p_in, p_out, cache


def predict_bidefuse(params: BiDefuseParams, x: np.ndarray) -> np.ndarray:
    """Overall CVR estimate: clamped sum of the two heads."""
    p_in, p_out, _ = forward_bidefuse(params, x)
    return clamp_prob(p_in + p_out)


def bidefuse_backward(
    params: BiDefuseParams, cache: dict, dls_in: np.ndarray, dls_out: np.ndarray
) -> BiDefuseParams:
    """Gradients from per-sample dLoss/dlogit of each head (already /B)."""
    x = cache["x"]
    he = cache["he"]
    ze = cache["ze"]
    gates = cache["gates"]
    r_in, r_out = cache["r"]

    g_head_w = [dls_in @ r_in, dls_out @ r_out]
    g_head_b = [np.array([dls_in.sum()]), np.array([dls_out.sum()])]

    dr_in = dls_in[:, None] * params.head_w[0][None, :]
    dr_out = dls_out[:, None] * params.head_w[1][None, :]

    # expert blends: r_in = g0*e_in + g1*e_shared; r_out = g0*e_out + g1*e_shared
    dhe = [
        gates[0][:, :1] * dr_in,
        gates[0][:, 1:] * dr_in + gates[1][:, 1:] * dr_out,
        gates[1][:, :1] * dr_out,
    ]
    dgate_logits = []
    for gi, (dr, eh_pair) in enumerate(
        [(dr_in, (he[0], he[1])), (dr_out, (he[2], he[1]))]
    ):
        dg = np.stack(
            [(dr * eh_pair[0]).sum(axis=1), (dr * eh_pair[1]).sum(axis=1)], axis=1
        )
        g = gates[gi]
        dz = g * (dg - (dg * g).sum(axis=1, keepdims=True))  # softmax jacobian
        dgate_logits.append(dz)

    g_expert_w, g_expert_b = [], []
    for i in range(3):
        dz = dhe[i] * _leaky_grad(ze[i])
        g_expert_w.append(x.T @ dz)
        g_expert_b.append(dz.sum(axis=0))
    g_gate_w = [x.T @ dz for dz in dgate_logits]
    g_gate_b = [dz.sum(axis=0) for dz in dgate_logits]

    return BiDefuseParams(
        expert_w=g_expert_w,
        expert_b=g_expert_b,
        gate_w=g_gate_w,
        gate_b=g_gate_b,
        head_w=g_head_w,
        head_b=g_head_b,
    )


def bidefuse_loss_and_grad(
    params: BiDefuseParams,
    x: np.ndarray,
    task: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
) -> Tuple[float, BiDefuseParams]:
    """Joint loss over both heads; rows pick their head via task (0=in, 1=out)."""
    p_in, p_out, cache = forward_bidefuse(params, x)
    p = np.where(task == 0, p_in, p_out)
    n = max(len(p), 1)
    per = -np.asarray(a) * np.log(p) - np.asarray(b) * np.log(1.0 - p)
    _check_finite(per)
    loss = float(np.mean(per)) if len(p) else 0.0
    dls = ((a + b) * p - a) / n
    dls_in = np.where(task == 0, dls, 0.0)
    dls_out = np.where(task == 1, dls, 0.0)
    return loss, bidefuse_backward(params, cache, dls_in, dls_out)


# --- optimizer ---------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment accumulators, keyed like the parameter arrays."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_init(params) -> AdamState:
    arrays = params.arrays()
    return AdamState(
        m={k: np.zeros_like(a) for k, a in arrays.items()},
        v={k: np.zeros_like(a) for k, a in arrays.items()},
        t=0,
    )


def adam_step(
    params,
    grads,
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place Adam update; weight decay is decoupled from the moments."""
    state.t += 1
    t = state.t
    p_arrays = params.arrays()
    g_arrays = grads.arrays()
    for k, theta in p_arrays.items():
        g = g_arrays[k]
        m = state.m[k]
        v = state.v[k]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        theta -= lr * (mhat / (np.sqrt(vhat) + eps) + weight_decay * theta)


# --- flat views for finite-difference checks ---------------------------------


def get_flat(params) -> np.ndarray:
    return np.concatenate([a.ravel() for a in params.arrays().values()])


def set_flat(params, vec: np.ndarray) -> None:
    offset = 0
    for arr in params.arrays().values():
        size = arr.size
        arr.ravel()[:] = vec[offset : offset + size]
        offset += size
    if offset != vec.size:
        raise ConfigError("flat vector does not match parameter count")


def clone_params(params):
    if isinstance(params, MlpParams):
        return MlpParams([w.copy() for w in params.weights], [b.copy() for b in params.biases])
    return BiDefuseParams(
        expert_w=[w.copy() for w in params.expert_w],
        expert_b=[b.copy() for b in params.expert_b],
        gate_w=[w.copy() for w in params.gate_w],
        gate_b=[b.copy() for b in params.gate_b],
        head_w=[w.copy() for w in params.head_w],
        head_b=[b.copy() for b in params.head_b],
    )


# --- checkpoints --------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(path: str, params) -> None:
    arrays = {k: a.tolist() for k, a in params.arrays().items()}
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "arch": params.arch,
        "arrays": arrays,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)


def _params_from_arch(arch: dict):
    if arch.get("kind") == "mlp":
        return init_mlp(arch["dim"], tuple(arch.get("hidden", ())))
    if arch.get("kind") == "bidefuse":
        rng = np.random.default_rng(0)
        return init_bidefuse(arch["dim"], arch["hidden"][0], rng)
    raise ConfigError(f"unknown checkpoint architecture {arch!r}")


def load_checkpoint(path: str):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {payload.get('format_version')!r}")
    params = _params_from_arch(payload["arch"])
    stored = payload["arrays"]
    target = params.arrays()
    if set(stored) != set(target):
        raise ConfigError("checkpoint arrays do not match the architecture")
    for k, arr in target.items():
        loaded = np.asarray(stored[k], dtype=np.float64)
        if loaded.shape != arr.shape:
            raise ConfigError(
                f"checkpoint array {k} has shape {loaded.shape}, expected {arr.shape}"
            )
        arr[...] = loaded
    return params
