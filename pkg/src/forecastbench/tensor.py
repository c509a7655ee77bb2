"""Dense float64 array helpers with explicit shape checks.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. The helpers here
add the checks the rest of the library relies on: matching shapes, rank limits
and finiteness of results.
"""
import numpy as np

from .errors import DimensionError, DomainError, NumericError

MAX_RANK = 3


def as_tensor(x):
    t = np.array(x, dtype=np.float64)
    if t.ndim == 0:
        t = t.reshape(1)
    if t.ndim > MAX_RANK:
        raise DimensionError(f"rank {t.ndim} exceeds {MAX_RANK}")
    return t


def check_finite(x, what="tensor"):
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {what}")
    return x


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner extents differ: {a.shape} @ {b.shape}")
    return check_finite(a @ b, "matmul result")


def ew_map(x, f):
    x = np.asarray(x, dtype=np.float64)
    return check_finite(np.asarray(f(x), dtype=np.float64), "elementwise result")


def ew_zip(x, y, f):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {y.shape}")
    return check_finite(np.asarray(f(x, y), dtype=np.float64), "elementwise result")


def add_bias(x, b):
    """Add a bias vector to every row (the only broadcast allowed)."""
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise DimensionError(f"bias of shape {b.shape} does not fit rows of {x.shape}")
    return x + b


def reduce_mean(x):
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise DomainError("mean of an empty tensor")
    return float(np.mean(x))


def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(z):
    # subgradient at exactly 0 is 0
    return (z > 0.0).astype(np.float64)


def sigmoid(x):
    # split on sign so exp never overflows
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x):
    return np.tanh(x)


def sign(x):
    return np.sign(x)


def linear(x):
    return x


# derivatives take (pre-activation, activation) so cached outputs can be reused
def _d_relu(z, a):
    return relu_grad(z)


def _d_linear(z, a):
    return np.ones_like(z)


def _d_tanh(z, a):
    return 1.0 - a * a


def _d_sigmoid(z, a):
    return a * (1.0 - a)


ACTIVATIONS = {
    "relu": (relu, _d_relu),
    "linear": (linear, _d_linear),
    "tanh": (tanh, _d_tanh),
    "sigmoid": (sigmoid, _d_sigmoid),
}


def activation(name):
    """Return ``(f, df)`` where ``df(z, f(z))`` is the derivative at ``z``."""
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise DomainError(f"unknown activation {name!r}") from None
