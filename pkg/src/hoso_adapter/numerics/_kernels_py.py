"""Pure-numpy reference kernels (float64, row-major).

These are the fallback backend for the compiled Cython kernels and define the
semantics both backends must share. All inputs are C-contiguous float64; no
validation happens here (the public wrappers in ``numerics`` do that).
"""

import numpy as np

BACKEND = "python"


def matmul_nt(a, b):
    """a @ b.T for a (m,k), b (n,k)."""
    return a @ b.T


def linear_forward(x, w, b):
    """y = x @ w.T + b for x (n,i), w (o,i), b (o,)."""
    return x @ w.T + b


def linear_backward(x, w, dy):
    """Gradients of y = x @ w.T + b: returns (dw, db, dx)."""
    dw = dy.T @ x
    db = dy.sum(axis=0)
    dx = dy @ w
    return dw, db, dx


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(x, dy):
    # subgradient 0 at exactly 0
    return np.where(x > 0.0, dy, 0.0)


def l2norm_rows(x):
    """Row-wise L2 normalization; returns (y, norms)."""
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    with np.errstate(divide="ignore", invalid="ignore"):
        return x / norms[:, None], norms


def l2norm_rows_backward(y, norms, dy):
    """Backward of row normalization: dx = (dy - (dy.y) y) / norm."""
    radial = np.einsum("ij,ij->i", dy, y)
    return (dy - radial[:, None] * y) / norms[:, None]


def softmax_rows(z):
    """Row-wise softmax with max-subtraction stabilization."""
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def xent_rows(p, labels):
    """Per-row -log p[label] and gradient wrt logits (softmax - onehot)."""
    n = p.shape[0]
    rows = np.arange(n)
    losses = -np.log(p[rows, labels])
    dz = p.copy()
    dz[rows, labels] -= 1.0
    return losses, dz
