"""Adapter network, blending-ratio parametrization, and the prediction head.

The prediction pipeline is: unit-normalize the frozen image feature, run it
through a bottleneck MLP (reduction factor 4, ReLU), blend the two streams
with the ratio alpha, and score against the frozen text prototypes with
temperature-scaled cosine logits.

Blending happens either in feature space (interpolate, re-normalize, score)
or in logit space (score each stream, interpolate the logits). The ratio is
a scalar logit squashed by a scaled sigmoid into [0.1, 0.9], so neither
stream can be discarded entirely.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import numerics as nm
from .errors import ShapeError, TapeError
from .rng import derived_rng

ALPHA_SPAN = 0.8
ALPHA_FLOOR = 0.1


class BlendMode(str, Enum):
    FEATURE = "feature"
    LOGIT = "logit"


def sigmoid(x: float) -> float:
    # stable for large |x|
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def alpha_from_logit(alpha_logit: float) -> float:
    """Scaled sigmoid mapping the ratio logit into [0.1, 0.9]."""
    return sigmoid(alpha_logit) * ALPHA_SPAN + ALPHA_FLOOR


def alpha_logit_grad(alpha_logit: float) -> float:
    """d alpha / d logit = 0.8 * sigma * (1 - sigma)."""
    s = sigmoid(alpha_logit)
    return ALPHA_SPAN * s * (1.0 - s)


def logit_from_alpha(alpha: float) -> float:
    """Inverse of alpha_from_logit, defined on (0.1, 0.9)."""
    if not ALPHA_FLOOR < alpha < ALPHA_FLOOR + ALPHA_SPAN:
        raise ValueError(f"alpha {alpha} outside (0.1, 0.9)")
    p = (alpha - ALPHA_FLOOR) / ALPHA_SPAN
    return float(np.log(p / (1.0 - p)))


@dataclass
class AdapterParams:
    """Bottleneck MLP weights plus the scalar blending-ratio logit."""

    w1: np.ndarray  # (hidden, dim)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (dim, hidden)
    b2: np.ndarray  # (dim,)
    alpha_logit: float = 0.0
    init_seed: int = 0

    @property
    def dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    def num_trainable(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size + 1

    def tensors(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self) -> "AdapterParams":
        return AdapterParams(
            self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(),
            self.alpha_logit, self.init_seed,
        )


def init_adapter(dim: int, seed: int, alpha_init: float = 0.5, reduction: int = 4) -> AdapterParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    hidden = max(1, dim // reduction)
    rng = derived_rng(seed, 0xADA)
    bound1 = 1.0 / np.sqrt(dim)
    bound2 = 1.0 / np.sqrt(hidden)
    return AdapterParams(
        w1=rng.uniform(-bound1, bound1, size=(hidden, dim)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-bound2, bound2, size=(dim, hidden)),
        b2=np.zeros(dim),
        alpha_logit=logit_from_alpha(alpha_init) if alpha_init != 0.5 else 0.0,
        init_seed=seed,
    )


def adapter_forward(params: AdapterParams, v, kernels=None):
    """Bottleneck output w2 @ relu(w1 @ v + b1) + b2 (no inner residual)."""
    h = nm.relu_forward(nm.linear_forward(v, params.w1, params.b1, kernels), kernels)
    return nm.linear_forward(h, params.w2, params.b2, kernels)


def blend(v, v_adapt, alpha: float, mode: BlendMode, prototypes, logit_scale: float):
    """Score a raw feature against prototypes at a given blending ratio.

    Feature mode interpolates normalized(v) with the raw adapter output and
    re-normalizes the blend; logit mode interpolates the two cosine-logit
    vectors. alpha=0 reproduces the zero-shot logits in both modes.
    """
    vn, _ = nm.l2_normalize(v)
    if mode == BlendMode.FEATURE:
        u = (1.0 - alpha) * vn + alpha * np.asarray(v_adapt, dtype=np.float64)
        vhat, _ = nm.l2_normalize(u)
        return nm.cosine_logits(vhat, prototypes, logit_scale)
    z0 = nm.cosine_logits(vn, prototypes, logit_scale)
    ahat, _ = nm.l2_normalize(v_adapt)
    z1 = nm.cosine_logits(ahat, prototypes, logit_scale)
    return (1.0 - alpha) * z0 + alpha * z1


@dataclass
class GradTape:
    """Cached activations for one minibatch forward; single-use."""

    vn: np.ndarray
    h_pre: np.ndarray
    h: np.ndarray
    a: np.ndarray
    alpha: float
    from_logit: bool
    # feature mode
    vhat: np.ndarray | None = None
    u_norm: np.ndarray | None = None
    # logit mode
    z0: np.ndarray | None = None
    z1: np.ndarray | None = None
    ahat: np.ndarray | None = None
    a_norm: np.ndarray | None = None
    used: bool = field(default=False, repr=False)


class AdapterModel:
    """Trainable prediction function over a fixed prototype head.

    Prototypes and the logit scale are frozen; only the MLP weights and the
    ratio logit carry gradients.
    """

    def __init__(self, prototypes, logit_scale: float, params: AdapterParams,
                 mode: BlendMode = BlendMode.FEATURE, kernels=None):
        self.prototypes = nm.as_f64(prototypes)
        self.logit_scale = float(logit_scale)
        self.params = params
        self.mode = BlendMode(mode)
        self.kernels = kernels
        if self.prototypes.shape[1] != params.dim:
            raise ShapeError(
                f"prototype dim {self.prototypes.shape[1]} != adapter dim {params.dim}"
            )

    @classmethod
    def for_bank(cls, bank, seed: int, alpha_init: float = 0.5,
                 mode: BlendMode = BlendMode.FEATURE, kernels=None) -> "AdapterModel":
        params = init_adapter(bank.embedding_dim, seed, alpha_init)
        return cls(bank.text_prototypes, bank.logit_scale, params, mode, kernels)

    def forward(self, features, alpha_override: float | None = None):
        """Batched forward pass; returns (logits (n,C), GradTape)."""
        k = self.kernels
        p = self.params
        v = nm.as_f64(features)
        if v.ndim == 1:
            v = v[None, :]
        vn, _ = nm.l2_normalize(v, k)
        h_pre = nm.linear_forward(vn, p.w1, p.b1, k)
        h = nm.relu_forward(h_pre, k)
        a = nm.linear_forward(h, p.w2, p.b2, k)
        if alpha_override is None:
            alpha = alpha_from_logit(p.alpha_logit)
            from_logit = True
        else:
            alpha = float(alpha_override)
            from_logit = False
        if self.mode == BlendMode.FEATURE:
            u = (1.0 - alpha) * vn + alpha * a
            vhat, u_norm = nm.l2_normalize(u, k)
            logits = nm.cosine_logits(vhat, self.prototypes, self.logit_scale, k)
            tape = GradTape(vn, h_pre, h, a, alpha, from_logit, vhat=vhat, u_norm=u_norm)
        else:
            z0 = nm.cosine_logits(vn, self.prototypes, self.logit_scale, k)
            ahat, a_norm = nm.l2_normalize(a, k)
            z1 = nm.cosine_logits(ahat, self.prototypes, self.logit_scale, k)
            logits = (1.0 - alpha) * z0 + alpha * z1
            tape = GradTape(vn, h_pre, h, a, alpha, from_logit,
                            z0=z0, z1=z1, ahat=ahat, a_norm=a_norm)
        return logits, tape

    def backward(self, tape: GradTape, dlogits) -> dict[str, np.ndarray | float]:
        """Analytic gradients for (w1, b1, w2, b2, alpha_logit).

        ``alpha_logit`` is the chain through the scaled sigmoid when the
        forward used the learnable ratio; for alpha overrides the raw
        d loss / d alpha is reported under ``alpha`` instead.
        """
        if tape.used:
            raise TapeError("backward already called for this tape")
        tape.used = True
        k = self.kernels
        p = self.params
        dz = nm.as_f64(dlogits)
        if self.mode == BlendMode.FEATURE:
            dvhat = self.logit_scale * (dz @ self.prototypes)
            du = nm.l2_normalize_backward(tape.vhat, tape.u_norm, dvhat, k)
            dalpha = float(np.sum(du * (tape.a - tape.vn)))
            da = tape.alpha * du
        else:
            dalpha = float(np.sum(dz * (tape.z1 - tape.z0)))
            dz1 = tape.alpha * dz
            dahat = self.logit_scale * (dz1 @ self.prototypes)
            da = nm.l2_normalize_backward(tape.ahat, tape.a_norm, dahat, k)
        dw2, db2, dh = nm.linear_backward(tape.h, p.w2, da, k)
        dh_pre = nm.relu_backward(tape.h_pre, dh, k)
        dw1, db1, _ = nm.linear_backward(tape.vn, p.w1, dh_pre, k)
        grads: dict[str, np.ndarray | float] = {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}
        if tape.from_logit:
            grads["alpha_logit"] = dalpha * alpha_logit_grad(p.alpha_logit)
        else:
            grads["alpha"] = dalpha
        return grads

    def predict(self, features, alpha_override: float | None = None):
        """Probabilities and argmax class per row (ties -> lowest index)."""
        logits, _ = self.forward(features, alpha_override)
        probs = nm.softmax(logits, self.kernels)
        preds = np.argmax(logits, axis=1)
        return probs, preds

    def classifier(self, alpha_override: float | None = None):
        """Logit closure over feature batches, for the evaluation module."""
        def fn(features):
            logits, _ = self.forward(features, alpha_override)
            return logits
        return fn


def zero_shot_classifier(bank, kernels=None):
    """Pure Eq.-of-the-head zero-shot scorer: scale * cos(v, t_c)."""
    prototypes = nm.as_f64(bank.text_prototypes)

    def fn(features):
        vn, _ = nm.l2_normalize(nm.as_f64(features), kernels)
        return nm.cosine_logits(vn, prototypes, bank.logit_scale, kernels)

    return fn


def save_model(model: AdapterModel, path: str) -> None:
    """Write adapter.f32 (w1,b1,w2,b2 row-major, float32) + model.json."""
    os.makedirs(path, exist_ok=True)
    p = model.params
    flat = np.concatenate([
        p.w1.ravel(), p.b1.ravel(), p.w2.ravel(), p.b2.ravel()
    ]).astype("<f4")
    flat.tofile(os.path.join(path, "adapter.f32"))
    meta = {
        "alpha_logit": p.alpha_logit,
        "mode": model.mode.value,
        "embedding_dim": p.dim,
        "hidden_dim": p.hidden,
        "init_seed": p.init_seed,
        "logit_scale": model.logit_scale,
    }
    with open(os.path.join(path, "model.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)


def load_model(path: str, prototypes) -> AdapterModel:
    with open(os.path.join(path, "model.json"), encoding="utf-8") as fh:
        meta = json.load(fh)
    dim, hidden = meta["embedding_dim"], meta["hidden_dim"]
    flat = np.fromfile(os.path.join(path, "adapter.f32"), dtype="<f4").astype(np.float64)
    sizes = [hidden * dim, hidden, dim * hidden, dim]
    if flat.size != sum(sizes):
        raise ShapeError(f"adapter.f32 holds {flat.size} floats, expected {sum(sizes)}")
    w1, b1, w2, b2 = np.split(flat, np.cumsum(sizes)[:-1])
    params = AdapterParams(
        w1.reshape(hidden, dim), b1, w2.reshape(dim, hidden), b2,
        alpha_logit=meta["alpha_logit"], init_seed=meta["init_seed"],
    )
    return AdapterModel(prototypes, meta["logit_scale"], params, BlendMode(meta["mode"]))
