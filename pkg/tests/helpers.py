import numpy as np

# components are compared as |a - n| / max(|a|, |n|, FLOOR)
FLOOR = 1e-5


def fd_step(theta):
    return 1e-5 * max(1.0, abs(theta))


def numeric_grad(f, arr):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``arr`` (perturbed in place)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        h = fd_step(old)
        arr[i] = old + h
        fp = f()
        arr[i] = old - h
        fm = f()
        arr[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def max_rel_err(analytic, numeric):
    a = np.asarray(analytic).ravel()
    n = np.asarray(numeric).ravel()
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), FLOOR)
    return float(np.max(np.abs(a - n) / denom))


def relu_margin(layer, cache):
    """Smallest |pre-activation| feeding a ReLU; inf when no ReLU is involved."""
    d = cache.data
    vals = []
    if layer.kind in ("dense", "conv1d") and layer.activation == "relu":
        vals.append(d["z"])
    elif layer.kind == "rnn" and layer.activation == "relu":
        vals.append(d["zs"])
    elif layer.kind == "lstm" and layer.cell_activation == "relu":
        u = layer.units
        vals.append(d["pre"][:, :, 3 * u:])
        vals.append(d["cs"][1:])
    if not vals:
        return np.inf
    return float(min(np.min(np.abs(v)) for v in vals))


def check_layer_gradients(layer, x, rng):
    """Return the worst relative error over dX and every parameter gradient."""
    y, cache = layer.forward(x)
    r = rng.normal(size=y.shape)
    dx, grads = layer.backward(r, cache)

    def loss():
        return float(np.sum(r * layer.forward(x)[0]))

    worst = max_rel_err(dx, numeric_grad(loss, x))
    for k, p in layer.params.items():
        worst = max(worst, max_rel_err(grads[k], numeric_grad(loss, p)))
    return worst
