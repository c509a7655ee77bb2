"""SGD, RMSprop and Adam as pure step functions over lists of arrays.

``step(params, grads, state, cfg)`` never mutates its inputs; it returns new
parameter arrays and a new :class:`OptimizerState`.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, NumericError

KINDS = ("sgd", "rmsprop", "adam")

_DEFAULT_LR = {"sgd": 0.01, "rmsprop": 0.001, "adam": 0.001}


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    lr: float = None
    rho: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown optimizer {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.lr is None:
            object.__setattr__(self, "lr", _DEFAULT_LR[self.kind])
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        for name in ("rho", "beta1", "beta2"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1)")
        if not self.eps > 0:
            raise ConfigError("eps must be positive")

    def to_dict(self):
        return {"kind": self.kind, "lr": self.lr, "rho": self.rho, "beta1": self.beta1,
                "beta2": self.beta2, "eps": self.eps}


@dataclass
class OptimizerState:
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def init_state(params, cfg):
    if cfg.kind == "sgd":
        return OptimizerState()
    zeros = [np.zeros_like(p) for p in params]
    if cfg.kind == "rmsprop":
        return OptimizerState(v=zeros)
    return OptimizerState(m=[np.zeros_like(p) for p in params], v=zeros)


def _check(params, grads):
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient")


def sgd_step(params, grads, cfg):
    _check(params, grads)
    return [p - cfg.lr * g for p, g in zip(params, grads)]


def rmsprop_step(params, grads, state, cfg):
    _check(params, grads)
    v_prev = state.v or [np.zeros_like(p) for p in params]
    new_p, new_v = [], []
    for p, g, v in zip(params, grads, v_prev):
        v = cfg.rho * v + (1.0 - cfg.rho) * g * g
        new_v.append(v)
        new_p.append(p - cfg.lr * g / (np.sqrt(v) + cfg.eps))
    _finite(new_v)
    return new_p, OptimizerState(t=state.t + 1, v=new_v)


def adam_step(params, grads, state, cfg):
    _check(params, grads)
    t = state.t + 1
    m_prev = state.m or [np.zeros_like(p) for p in params]
    v_prev = state.v or [np.zeros_like(p) for p in params]
    c1 = 1.0 - cfg.beta1 ** t
    c2 = 1.0 - cfg.beta2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, m_prev, v_prev):
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        new_m.append(m)
        new_v.append(v)
        new_p.append(p - cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps))
    _finite(new_m)
    _finite(new_v)
    return new_p, OptimizerState(t=t, m=new_m, v=new_v)


def step(params, grads, state, cfg):
    """Dispatch on ``cfg.kind``; SGD also advances the step counter."""
    if cfg.kind == "sgd":
        return sgd_step(params, grads, cfg), OptimizerState(t=state.t + 1)
    if cfg.kind == "rmsprop":
        return rmsprop_step(params, grads, state, cfg)
    return adam_step(params, grads, state, cfg)


def _finite(slots):
    for s in slots:
        if not np.all(np.isfinite(s)):
            raise NumericError("non-finite optimizer state")
