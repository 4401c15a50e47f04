"""Matrix-input feedforward network with bilinear hidden units.

Each hidden unit j sees the whole input matrix ``I`` through a rank-one
bilinear form::

    z_j = u_jᵀ · I · v_j + b_j
    a_j = 2 / (1 + exp(-2 z_j)) - 1          (= tanh z_j)
    o   = w_0 + Σ_j w_j · a_j

Training is full-batch: per-example gradients of ½(o − target)² are summed
into accumulators, then one momentum step is taken for every parameter and
the accumulators are cleared.  The learning rate follows a bold-driver
schedule between epochs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import NonFiniteError

NETWORK_VERSION = 1
PARAMS = ("w0", "w", "b", "u", "v")


def activation(z):
    """2/(1+e^{−2z}) − 1, evaluated as tanh for numerical stability."""
    return np.tanh(z)


def activation_grad(z):
    a = np.tanh(z)
    return 1.0 - a * a


@dataclass
class TrainConfig:
    eta0: float = 0.01
    alpha: float = 0.9
    max_epochs: int = 5000
    tol: float = 0.01
    lr_up: float = 1.05
    lr_down: float = 0.5
    init_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not self.eta0 > 0:
            raise ValueError("eta0 must be positive")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if not self.lr_up > 1.0:
            raise ValueError("lr_up must exceed 1")
        if not 0.0 < self.lr_down < 1.0:
            raise ValueError("lr_down must lie in (0, 1)")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")


@dataclass
class EpochRecord:
    epoch: int
    sse: float
    eta: float


@dataclass
class TrainingTrace:
    records: list[EpochRecord] = field(default_factory=list)
    converged: bool = False

    def __len__(self):
        return len(self.records)

    @property
    def sse(self) -> np.ndarray:
        return np.array([r.sse for r in self.records])

    @property
    def eta(self) -> np.ndarray:
        return np.array([r.eta for r in self.records])

    def to_json(self) -> str:
        return json.dumps({
            "version": NETWORK_VERSION,
            "converged": self.converged,
            "epochs": [[r.epoch, r.sse, r.eta] for r in self.records],
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "TrainingTrace":
        doc = json.loads(text)
        if doc.get("version") != NETWORK_VERSION:
            raise ValueError(f"unsupported trace version {doc.get('version')!r}")
        recs = [EpochRecord(int(e), float(s), float(h)) for e, s, h in doc["epochs"]]
        return cls(recs, bool(doc["converged"]))

    def to_csv(self) -> str:
        lines = ["epoch,sse,eta"]
        lines += [f"{r.epoch},{r.sse!r},{r.eta!r}" for r in self.records]
        return "\n".join(lines) + "\n"


class MannNetwork:
    """Parameters plus, for each one, a gradient accumulator and a momentum
    buffer of the same shape (``grad[name]`` and ``mom[name]``)."""

    def __init__(self, in_h: int, in_w: int, n: int):
        if in_h < 1 or in_w < 1 or n < 1:
            raise ValueError("network dimensions must be positive")
        self.in_h, self.in_w, self.n = in_h, in_w, n
        shapes = {"w0": (), "w": (n,), "b": (n,), "u": (n, in_h), "v": (n, in_w)}
        self.params = {k: np.zeros(s) for k, s in shapes.items()}
        self.grad = {k: np.zeros(s) for k, s in shapes.items()}
        self.mom = {k: np.zeros(s) for k, s in shapes.items()}

    # convenience views
    @property
    def w0(self) -> float:
        return float(self.params["w0"])

    @property
    def w(self) -> np.ndarray:
        return self.params["w"]

    @property
    def b(self) -> np.ndarray:
        return self.params["b"]

    @property
    def u(self) -> np.ndarray:
        return self.params["u"]

    @property
    def v(self) -> np.ndarray:
        return self.params["v"]

    def copy(self) -> "MannNetwork":
        out = MannNetwork(self.in_h, self.in_w, self.n)
        for store, src in ((out.params, self.params), (out.grad, self.grad), (out.mom, self.mom)):
            for k in PARAMS:
                store[k] = src[k].copy()
        return out

    def reset_momentum(self) -> None:
        for k in PARAMS:
            self.mom[k][...] = 0.0

    def to_json(self) -> str:
        doc = {
            "version": NETWORK_VERSION,
            "in_h": self.in_h,
            "in_w": self.in_w,
            "n": self.n,
            "w0": self.w0,
            "w": self.w.tolist(),
            "b": self.b.tolist(),
            "u": self.u.tolist(),
            "v": self.v.tolist(),
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "MannNetwork":
        doc = json.loads(text)
        if doc.get("version") != NETWORK_VERSION:
            raise ValueError(f"unsupported network version {doc.get('version')!r}")
        net = cls(int(doc["in_h"]), int(doc["in_w"]), int(doc["n"]))
        for k in PARAMS:
            value = np.array(doc[k], dtype=np.float64)
            if value.shape != net.params[k].shape:
                raise ValueError(f"{k} has shape {value.shape}, expected {net.params[k].shape}")
            net.params[k] = value
        return net


def init_network(in_h: int = 20, in_w: int = 20, n: int = 12, seed: int = 0,
                 init_scale: float = 0.1) -> MannNetwork:
    net = MannNetwork(in_h, in_w, n)
    rng = np.random.default_rng(seed)
    for k in ("u", "v", "b", "w", "w0"):
        shape = net.params[k].shape
        net.params[k] = np.array(rng.uniform(-init_scale, init_scale, size=shape) + 0.0)
    return net


def _check_input(net: MannNetwork, I) -> np.ndarray:
    I = np.asarray(I, dtype=np.float64)
    if I.shape != (net.in_h, net.in_w):
        raise ValueError(f"input shape {I.shape} does not match network ({net.in_h}, {net.in_w})")
    return I


def _preactivation(net: MannNetwork, I: np.ndarray):
    Iv = net.v @ I.T           # row j holds (I · v_j)ᵀ, length in_h
    z = np.sum(net.u * Iv, axis=1) + net.b
    return z, Iv


def forward(net: MannNetwork, I) -> float:
    I = _check_input(net, I)
    z, _ = _preactivation(net, I)
    return float(net.params["w0"] + np.dot(net.w, activation(z)))


def accumulate_gradients(net: MannNetwork, I, target: float) -> float:
    """Add the gradient of ½(o − target)² to the accumulators; return δ = o − target."""
    I = _check_input(net, I)
    z, Iv = _preactivation(net, I)
    a = activation(z)
    delta = float(net.params["w0"] + np.dot(net.w, a)) - target
    if not math.isfinite(delta):
        raise NonFiniteError("non-finite network output")
    s = delta * net.w * activation_grad(z)   # dE/dz_j
    uI = net.u @ I                           # row j holds u_jᵀ · I, length in_w
    g = net.grad
    g["w0"] += delta
    g["w"] += delta * a
    g["b"] += s
    g["u"] += s[:, None] * Iv
    g["v"] += s[:, None] * uI
    return delta


def apply_updates(net: MannNetwork, eta: float, alpha: float) -> None:
    """m ← α·m − η·g;  p ← p + m;  g ← 0, for every parameter."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    for k in PARAMS:
        m = net.mom[k]
        m[...] = alpha * m - eta * net.grad[k]
        net.params[k] += m
        net.grad[k][...] = 0.0


def train_epoch(net: MannNetwork, gallery: Sequence[tuple[np.ndarray, float]],
                eta: float, alpha: float) -> float:
    """One full-batch pass; returns the sum of squared errors before the update."""
    if len(gallery) == 0:
        raise ValueError("gallery is empty")
    sse = 0.0
    for I, target in gallery:
        d = accumulate_gradients(net, I, target)
        sse += d * d
    apply_updates(net, eta, alpha)
    return sse


def max_abs_error(net: MannNetwork, gallery: Iterable[tuple[np.ndarray, float]]) -> float:
    return max(abs(forward(net, I) - t) for I, t in gallery)


def _finite(net: MannNetwork) -> bool:
    return all(np.all(np.isfinite(net.params[k])) for k in PARAMS)


def train(net: MannNetwork, gallery: Sequence[tuple[np.ndarray, float]],
          config: TrainConfig | None = None) -> TrainingTrace:
    """Repeat full-batch epochs under the bold-driver schedule.

    After each epoch η is multiplied by ``lr_up`` if the error fell, or by
    ``lr_down`` if it rose (momentum is cleared too).  Training stops once
    every gallery output is within ``tol`` of its target, or at
    ``max_epochs``.  Each trace record holds the epoch's pre-update SSE and
    the η used for its update.
    """
    cfg = config or TrainConfig()
    trace = TrainingTrace()
    eta = cfg.eta0
    prev = None
    for epoch in range(1, cfg.max_epochs + 1):
        try:
            # overflow is detected explicitly below
            with np.errstate(over="ignore", invalid="ignore"):
                sse = train_epoch(net, gallery, eta, cfg.alpha)
        except NonFiniteError as exc:
            raise NonFiniteError(str(exc), trace) from None
        if not math.isfinite(sse) or not _finite(net):
            raise NonFiniteError(f"non-finite state at epoch {epoch}", trace)
        trace.records.append(EpochRecord(epoch, sse, eta))
        if prev is not None:
            if sse < prev:
                eta *= cfg.lr_up
            elif sse > prev:
                eta *= cfg.lr_down
                net.reset_momentum()
        prev = sse
        if max_abs_error(net, gallery) <= cfg.tol:
            trace.converged = True
            break
    return trace


@dataclass
class GradientRecord:
    w0: float
    w: np.ndarray
    b: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([np.atleast_1d(np.asarray(getattr(self, k), dtype=np.float64)).ravel()
                               for k in PARAMS])


def accumulated(net: MannNetwork) -> GradientRecord:
    return GradientRecord(float(net.grad["w0"]), *(net.grad[k].copy() for k in PARAMS[1:]))


def numeric_gradient(net: MannNetwork, I, target: float, eps: float = 1e-5) -> GradientRecord:
    """Central finite differences of ½(forward − target)² for every parameter."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    I = _check_input(net, I)
    probe = net.copy()

    def loss():
        d = forward(probe, I) - target
        return 0.5 * d * d

    out = {}
    for k in PARAMS:
        p = probe.params[k]
        g = np.zeros(p.shape)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + eps
            up = loss()
            p[idx] = orig - eps
            down = loss()
            p[idx] = orig
            g[idx] = (up - down) / (2 * eps)
        out[k] = float(g) if k == "w0" else g
    return GradientRecord(**out)
