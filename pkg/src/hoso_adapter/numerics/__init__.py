"""Minimal dense numerics with analytic forward/backward rules.

The computation graph is fixed (linear layers, ReLU, L2 normalization,
cosine-similarity logits, softmax cross-entropy), so every operation ships its
own analytic backward instead of a general autodiff. Accumulation is float64
throughout; features and parameters are stored as float32 at the I/O boundary.

Two interchangeable kernel backends exist: a compiled Cython extension
(``_kernels_cy``, BLAS-backed) and the pure-numpy reference
(``_kernels_py``). The compiled one is preferred at import when present; set
``HOSO_NUMERICS_BACKEND=python`` or ``=cython`` to force a choice.
``benchmarks/bench_backends.py`` compares the two.
"""

from __future__ import annotations

import os

import numpy as np

from ..errors import DegenerateVectorError, LabelError, ShapeError
from . import _kernels_py

NORM_EPS = 1e-12

_forced = os.environ.get("HOSO_NUMERICS_BACKEND", "").lower()
if _forced == "python":
    _k = _kernels_py
elif _forced == "cython":
    from . import _kernels_cy as _k  # raises ImportError if not built
else:
    try:
        from . import _kernels_cy as _k
    except ImportError:
        _k = _kernels_py


def backend_name() -> str:
    """Name of the active kernel backend ('cython' or 'python')."""
    return _k.BACKEND


def get_backends():
    """All available kernel modules, keyed by name (for tests/benchmarks)."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels_cy

        out["cython"] = _kernels_cy
    except ImportError:
        pass
    return out


def as_f64(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def _rows(x):
    """View a vector as a 1-row matrix; returns (matrix, was_vector)."""
    x = as_f64(x)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim != 2:
        raise ShapeError(f"expected vector or matrix, got ndim={x.ndim}")
    return x, False


def l2_normalize(v, kernels=None):
    """Unit-normalize rows (or a single vector); returns (normalized, norms).

    Raises DegenerateVectorError when any norm is <= 1e-12.
    """
    k = kernels or _k
    x, was_vec = _rows(v)
    y, norms = k.l2norm_rows(x)
    if np.any(norms <= NORM_EPS):
        raise DegenerateVectorError(
            f"vector norm {float(norms.min()):.3e} below {NORM_EPS:.0e}"
        )
    if was_vec:
        return y[0], float(norms[0])
    return y, norms


def l2_normalize_backward(y, norms, dy, kernels=None):
    """Backward of l2_normalize: applies the projection Jacobian (I - yy^T)/norm."""
    k = kernels or _k
    ym, was_vec = _rows(y)
    dym, _ = _rows(dy)
    nm = np.atleast_1d(as_f64(norms))
    dx = k.l2norm_rows_backward(ym, nm, dym)
    return dx[0] if was_vec else dx


def cosine_logits(v_hat, prototypes, logit_scale, kernels=None):
    """logits[c] = logit_scale * <v_hat, t_c> for unit-norm inputs."""
    k = kernels or _k
    x, was_vec = _rows(v_hat)
    p = as_f64(prototypes)
    if p.ndim != 2 or p.shape[1] != x.shape[1]:
        raise ShapeError(f"prototypes shape {p.shape} incompatible with dim {x.shape[1]}")
    out = logit_scale * k.matmul_nt(x, p)
    return out[0] if was_vec else out


def softmax(logits, kernels=None):
    """Row-wise stabilized softmax."""
    k = kernels or _k
    z, was_vec = _rows(logits)
    p = k.softmax_rows(z)
    return p[0] if was_vec else p


def softmax_xent(logits, label, kernels=None):
    """Cross-entropy loss and gradient wrt logits for one vector.

    Returns (loss, grad) with grad = softmax(logits) - onehot(label).
    """
    k = kernels or _k
    z, _ = _rows(logits)
    c = z.shape[1]
    if not 0 <= label < c:
        raise LabelError(f"label {label} outside [0, {c})")
    p = k.softmax_rows(z)
    losses, dz = k.xent_rows(p, np.asarray([label], dtype=np.intp))
    return float(losses[0]), dz[0]


def softmax_xent_batch(logits, labels, kernels=None):
    """Mean cross-entropy over rows; returns (mean loss, grad wrt logits).

    The gradient already carries the 1/n factor of the mean.
    """
    k = kernels or _k
    z = as_f64(logits)
    labels = np.asarray(labels, dtype=np.intp)
    if z.ndim != 2 or len(labels) != z.shape[0]:
        raise ShapeError(f"logits {z.shape} vs {len(labels)} labels")
    if len(labels) and (labels.min() < 0 or labels.max() >= z.shape[1]):
        raise LabelError(f"labels outside [0, {z.shape[1]})")
    p = k.softmax_rows(z)
    losses, dz = k.xent_rows(p, labels)
    return float(losses.mean()), dz / z.shape[0]


def linear_forward(x, w, b, kernels=None):
    """Affine map y = x @ w.T + b (rows are samples)."""
    k = kernels or _k
    xm, was_vec = _rows(x)
    w = as_f64(w)
    b = as_f64(b)
    if w.ndim != 2 or xm.shape[1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ShapeError(f"linear shapes: x {xm.shape}, w {w.shape}, b {b.shape}")
    y = k.linear_forward(xm, w, b)
    return y[0] if was_vec else y


def linear_backward(x, w, dy, kernels=None):
    """Gradients of the affine map; returns (dw, db, dx)."""
    k = kernels or _k
    xm, was_vec = _rows(x)
    dym, _ = _rows(dy)
    w = as_f64(w)
    if xm.shape[0] != dym.shape[0] or dym.shape[1] != w.shape[0]:
        raise ShapeError(f"linear backward shapes: x {xm.shape}, w {w.shape}, dy {dym.shape}")
    dw, db, dx = k.linear_backward(xm, w, dym)
    return dw, db, (dx[0] if was_vec else dx)


def relu_forward(x, kernels=None):
    k = kernels or _k
    xm, was_vec = _rows(x)
    y = k.relu_forward(xm)
    return y[0] if was_vec else y


def relu_backward(x, dy, kernels=None):
    """ReLU subgradient; gradient at exactly 0 is 0."""
    k = kernels or _k
    xm, was_vec = _rows(x)
    dym, _ = _rows(dy)
    if xm.shape != dym.shape:
        raise ShapeError(f"relu backward shapes {xm.shape} vs {dym.shape}")
    dx = k.relu_backward(xm, dym)
    return dx[0] if was_vec else dx
