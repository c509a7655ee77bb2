"""Layers with analytic backward passes.

Every layer exposes ``forward(x) -> (y, cache)`` and
``backward(dy, cache) -> (dx, grads)`` where ``grads`` maps parameter names to
arrays shaped like ``layer.params``. Recurrent layers are many-to-one: they
consume ``(batch, T, features)`` and return the last hidden state.
"""
import numpy as np

from .errors import ContractError, DimensionError, DomainError
from .tensor import activation, add_bias, check_finite, sigmoid

GATES = ("i", "f", "o", "g")


def glorot_uniform(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Cache:
    """Forward-pass record tied to the layer that produced it."""

    __slots__ = ("owner", "out_shape", "data")

    def __init__(self, owner, out_shape, **data):
        self.owner = owner
        self.out_shape = out_shape
        self.data = data


class Layer:
    kind = "layer"

    def __init__(self):
        self.params = {}

    def n_params(self):
        return sum(p.size for p in self.params.values())

    def _check_cache(self, dy, cache):
        if not isinstance(cache, Cache) or cache.owner is not self:
            raise ContractError(f"{self.kind}: cache was not produced by this layer")
        if dy.shape != cache.out_shape:
            raise ContractError(
                f"{self.kind}: upstream gradient shape {dy.shape} != output shape {cache.out_shape}")

    def describe(self):
        raise NotImplementedError


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in, units, activation="relu", rng=None):
        super().__init__()
        self.n_in, self.units, self.activation = n_in, units, activation
        self._act, self._dact = _activation(activation)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["W"] = glorot_uniform(rng, n_in, units, (n_in, units))
        self.params["b"] = np.zeros(units)

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        W, b = self.params["W"], self.params["b"]
        if x.ndim != 2 or x.shape[1] != W.shape[0]:
            raise DimensionError(f"dense expects (batch, {W.shape[0]}), got {x.shape}")
        z = add_bias(x @ W, b)
        y = check_finite(self._act(z), "dense output")
        return y, Cache(self, y.shape, x=x, z=z, y=y)

    def backward(self, dy, cache):
        self._check_cache(dy, cache)
        d = cache.data
        dz = dy * self._dact(d["z"], d["y"])
        grads = {"W": d["x"].T @ dz, "b": dz.sum(axis=0)}
        return dz @ self.params["W"].T, grads

    def describe(self):
        return {"kind": self.kind, "in": self.n_in, "units": self.units,
                "activation": self.activation}


class SimpleRNN(Layer):
    """Elman recurrence ``h_t = act(x_t Wx + h_{t-1} Wh + b)`` with ``h_0 = 0``."""

    kind = "rnn"

    def __init__(self, n_in, units, activation="relu", rng=None):
        super().__init__()
        if units <= 0:
            raise DomainError("units must be positive")
        self.n_in, self.units, self.activation = n_in, units, activation
        self._act, self._dact = _activation(activation)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["Wx"] = glorot_uniform(rng, n_in, units, (n_in, units))
        self.params["Wh"] = glorot_uniform(rng, units, units, (units, units))
        self.params["b"] = np.zeros(units)

    def forward(self, seq):
        seq = _check_seq(seq, self.n_in, self.kind)
        batch, T, _ = seq.shape
        Wx, Wh, b = self.params["Wx"], self.params["Wh"], self.params["b"]
        # hs[t] is h_t; hs[0] is the zero initial state
        hs = np.zeros((T + 1, batch, self.units))
        zs = np.empty((T, batch, self.units))
        xw = seq @ Wx
        for t in range(T):
            zs[t] = xw[:, t, :] + hs[t] @ Wh + b
            hs[t + 1] = self._act(zs[t])
        out = check_finite(hs[T].copy(), "rnn output")
        return out, Cache(self, out.shape, seq=seq, hs=hs, zs=zs)

    def backward(self, dh, cache):
        self._check_cache(dh, cache)
        seq, hs, zs = cache.data["seq"], cache.data["hs"], cache.data["zs"]
        T = zs.shape[0]
        Wx, Wh = self.params["Wx"], self.params["Wh"]
        dWh = np.zeros_like(Wh)
        dz_all = np.empty_like(zs)
        for t in range(T - 1, -1, -1):
            dz = dh * self._dact(zs[t], hs[t + 1])
            dz_all[t] = dz
            dWh += hs[t].T @ dz
            dh = dz @ Wh.T
        dz_bt = dz_all.transpose(1, 0, 2)
        grads = {
            "Wx": np.einsum("bti,btu->iu", seq, dz_bt),
            "Wh": dWh,
            "b": dz_all.sum(axis=(0, 1)),
        }
        return dz_bt @ Wx.T, grads

    def describe(self):
        return {"kind": self.kind, "in": self.n_in, "units": self.units,
                "activation": self.activation}


class LSTM(Layer):
    """Gated recurrence with sigmoid gates and a configurable cell activation.

    ``c_t = f*c_{t-1} + i*act(a_g)`` and ``h_t = o*act(c_t)`` with ``h_0 = c_0 = 0``.
    Parameters are stored per gate as ``Wx_<gate>``, ``Wh_<gate>``, ``b_<gate>``
    for gates ``i, f, o, g``.
    """

    kind = "lstm"

    def __init__(self, n_in, units, cell_activation="relu", rng=None):
        super().__init__()
        if units <= 0:
            raise DomainError("units must be positive")
        self.n_in, self.units, self.cell_activation = n_in, units, cell_activation
        self._act, self._dact = _activation(cell_activation)
        rng = rng if rng is not None else np.random.default_rng(0)
        for g in GATES:
            self.params[f"Wx_{g}"] = glorot_uniform(rng, n_in, units, (n_in, units))
            self.params[f"Wh_{g}"] = glorot_uniform(rng, units, units, (units, units))
            self.params[f"b_{g}"] = np.zeros(units)

    def _stacked(self):
        p = self.params
        Wx = np.concatenate([p[f"Wx_{g}"] for g in GATES], axis=1)
        Wh = np.concatenate([p[f"Wh_{g}"] for g in GATES], axis=1)
        b = np.concatenate([p[f"b_{g}"] for g in GATES])
        return Wx, Wh, b

    def forward(self, seq):
        seq = _check_seq(seq, self.n_in, self.kind)
        batch, T, _ = seq.shape
        u = self.units
        Wx, Wh, b = self._stacked()
        hs = np.zeros((T + 1, batch, u))
        cs = np.zeros((T + 1, batch, u))
        pre = np.empty((T, batch, 4 * u))
        acts = np.empty((T, batch, 4 * u))
        tc = np.empty((T, batch, u))
        xw = seq @ Wx
        for t in range(T):
            a = xw[:, t, :] + hs[t] @ Wh + b
            pre[t] = a
            gates = acts[t]
            gates[:, :3 * u] = sigmoid(a[:, :3 * u])
            gates[:, 3 * u:] = self._act(a[:, 3 * u:])
            i, f, o, g = gates[:, :u], gates[:, u:2 * u], gates[:, 2 * u:3 * u], gates[:, 3 * u:]
            cs[t + 1] = f * cs[t] + i * g
            tc[t] = self._act(cs[t + 1])
            hs[t + 1] = o * tc[t]
        out = check_finite(hs[T].copy(), "lstm output")
        return out, Cache(self, out.shape, seq=seq, hs=hs, cs=cs, pre=pre, acts=acts, tc=tc)

    def backward(self, dh, cache):
        self._check_cache(dh, cache)
        d = cache.data
        seq, hs, cs, pre, acts, tc = d["seq"], d["hs"], d["cs"], d["pre"], d["acts"], d["tc"]
        T = pre.shape[0]
        u = self.units
        Wx, Wh, _ = self._stacked()
        dWh = np.zeros_like(Wh)
        dc = np.zeros_like(dh)
        da_all = np.empty_like(pre)
        for t in range(T - 1, -1, -1):
            gates = acts[t]
            i, f, o, g = gates[:, :u], gates[:, u:2 * u], gates[:, 2 * u:3 * u], gates[:, 3 * u:]
            dc = dc + dh * o * self._dact(cs[t + 1], tc[t])
            da = da_all[t]
            da[:, :u] = dc * g * i * (1.0 - i)
            da[:, u:2 * u] = dc * cs[t] * f * (1.0 - f)
            da[:, 2 * u:3 * u] = dh * tc[t] * o * (1.0 - o)
            da[:, 3 * u:] = dc * i * self._dact(pre[t][:, 3 * u:], g)
            dWh += hs[t].T @ da
            dh = da @ Wh.T
            dc = dc * f
        da_bt = da_all.transpose(1, 0, 2)
        dWx = np.einsum("bti,bta->ia", seq, da_bt)
        db = da_all.sum(axis=(0, 1))
        grads = {}
        for k, g in enumerate(GATES):
            sl = slice(k * u, (k + 1) * u)
            grads[f"Wx_{g}"] = dWx[:, sl]
            grads[f"Wh_{g}"] = dWh[:, sl]
            grads[f"b_{g}"] = db[sl]
        return da_bt @ Wx.T, grads

    def describe(self):
        return {"kind": self.kind, "in": self.n_in, "units": self.units,
                "activation": self.cell_activation}


class Conv1D(Layer):
    """Valid, stride-1 cross-correlation over the time axis.

    Kernels have shape ``(filters, width, in_channels)``; output has shape
    ``(batch, T - width + 1, filters)``.
    """

    kind = "conv1d"

    def __init__(self, in_channels, filters, width, activation="relu", rng=None):
        super().__init__()
        self.in_channels, self.filters, self.width = in_channels, filters, width
        self.activation = activation
        self._act, self._dact = _activation(activation)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["kernels"] = glorot_uniform(
            rng, width * in_channels, filters, (filters, width, in_channels))
        self.params["b"] = np.zeros(filters)

    def _columns(self, seq):
        batch, T, c = seq.shape
        n_out = T - self.width + 1
        idx = np.arange(n_out)[:, None] + np.arange(self.width)[None, :]
        return seq[:, idx, :].reshape(batch, n_out, self.width * c)

    def forward(self, seq):
        seq = _check_seq(seq, self.in_channels, self.kind)
        if seq.shape[1] < self.width:
            raise DomainError(f"sequence length {seq.shape[1]} < kernel width {self.width}")
        K = self.params["kernels"].reshape(self.filters, -1).T
        cols = self._columns(seq)
        z = add_bias(cols @ K, self.params["b"])
        y = check_finite(self._act(z), "conv1d output")
        return y, Cache(self, y.shape, seq_shape=seq.shape, cols=cols, z=z, y=y)

    def backward(self, dy, cache):
        self._check_cache(dy, cache)
        d = cache.data
        dz = dy * self._dact(d["z"], d["y"])
        cols = d["cols"]
        dK = np.einsum("bnk,bnf->fk", cols, dz).reshape(self.params["kernels"].shape)
        grads = {"kernels": dK, "b": dz.sum(axis=(0, 1))}
        K = self.params["kernels"].reshape(self.filters, -1)
        dcols = (dz @ K).reshape(dz.shape[0], dz.shape[1], self.width, self.in_channels)
        batch, T, c = d["seq_shape"]
        dseq = np.zeros((batch, T, c))
        for j in range(self.width):
            dseq[:, j:j + dz.shape[1], :] += dcols[:, :, j, :]
        return dseq, grads

    def describe(self):
        return {"kind": self.kind, "in": self.in_channels, "filters": self.filters,
                "width": self.width, "activation": self.activation}


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim < 2:
            raise DimensionError(f"flatten needs a batch axis, got {x.shape}")
        y = x.reshape(x.shape[0], -1)
        return y, Cache(self, y.shape, in_shape=x.shape)

    def backward(self, dy, cache):
        self._check_cache(dy, cache)
        return dy.reshape(cache.data["in_shape"]), {}

    def describe(self):
        return {"kind": self.kind}


def flatten(x):
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(x.shape[0], -1)


def unflatten(x, shape):
    x = np.asarray(x, dtype=np.float64)
    return x.reshape((x.shape[0],) + tuple(shape))


def _activation(name):
    act, dact = activation(name)
    if name not in ("relu", "linear", "tanh"):
        raise DomainError(f"unsupported layer activation {name!r}")
    return act, dact


def _check_seq(seq, n_in, kind):
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 3 or seq.shape[2] != n_in:
        raise DimensionError(f"{kind} expects (batch, T, {n_in}), got {seq.shape}")
    if seq.shape[1] == 0:
        raise DomainError(f"{kind} needs at least one timestep")
    return seq
