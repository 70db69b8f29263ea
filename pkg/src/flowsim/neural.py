"""Feed-forward neural core: layers, losses, Adam and L-BFGS, in float64.

Implements exactly the layer set the two localization solutions need: dense,
ReLU, PReLU (learnable scalar slope per layer), inverted dropout, batch
normalization, and softmax / log-softmax heads with fused cross-entropy /
negative-log-likelihood gradients. Reverse-mode gradients are hand-derived
per layer and validated against central finite differences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MODEL_SCHEMA_VERSION = 1


class Layer:
    """Base layer: parameter arrays in .params, gradients in .grads."""

    def __init__(self):
        self.params: list[np.ndarray] = []
        self.grads: list[np.ndarray] = []

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator | None = None):
        super().__init__()
        if rng is None:
            w = np.zeros((d_in, d_out))
        else:
            w = rng.normal(0.0, math.sqrt(2.0 / d_in), size=(d_in, d_out))
        self.w = w
        self.b = np.zeros(d_out)
        self.params = [self.w, self.b]
        self.grads = [np.zeros_like(self.w), np.zeros_like(self.b)]
        self._x = None

    def forward(self, x, train):
        self._x = x
        return x @ self.w + self.b

    def backward(self, dy):
        self.grads[0][...] = self._x.T @ dy
        self.grads[1][...] = dy.sum(axis=0)
        return dy @ self.w.T

    def spec(self):
        return {"type": "dense", "in": self.w.shape[0], "out": self.w.shape[1]}


class Relu(Layer):
    def forward(self, x, train):
        self._mask = x > 0.0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return np.where(self._mask, dy, 0.0)

    def spec(self):
        return {"type": "relu"}


class PRelu(Layer):
    """Parametric ReLU with one learnable slope shared across the layer."""

    def __init__(self, slope: float = 0.25):
        super().__init__()
        self.a = np.array([slope])
        self.params = [self.a]
        self.grads = [np.zeros(1)]

    def forward(self, x, train):
        self._x = x
        return np.where(x > 0.0, x, self.a[0] * x)

    def backward(self, dy):
        neg = self._x <= 0.0
        self.grads[0][0] = (dy * self._x * neg).sum()
        return np.where(neg, self.a[0] * dy, dy)

    def spec(self):
        return {"type": "prelu"}


class Dropout(Layer):
    """Inverted dropout: train-mode survivors scaled by 1/(1-p)."""

    def __init__(self, p: float, rng: np.random.Generator | None = None):
        super().__init__()
        self.p = p
        self.rng = rng
        self.frozen_mask: np.ndarray | None = None

    def forward(self, x, train):
        if not train or self.p == 0.0:
            self._mask = None
            return x
        if self.frozen_mask is not None:
            if self.frozen_mask.shape != x.shape:
                raise RuntimeError("frozen dropout mask shape mismatch")
            mask = self.frozen_mask
        else:
            if self.rng is None:
                raise RuntimeError("train-mode dropout needs an rng")
            mask = (self.rng.random(x.shape) >= self.p) / (1.0 - self.p)
        self._mask = mask
        return x * mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask

    def freeze(self, shape: tuple[int, ...]):
        """Pin the next-drawn mask so repeated forwards are identical."""
        if self.rng is None:
            raise RuntimeError("train-mode dropout needs an rng")
        self.frozen_mask = (self.rng.random(shape) >= self.p) / (1.0 - self.p)

    def unfreeze(self):
        self.frozen_mask = None

    def spec(self):
        return {"type": "dropout", "p": self.p}


class BatchNorm(Layer):
    """Batch statistics in train mode, running statistics in eval mode."""

    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.gamma = np.ones(dim)
        self.beta = np.zeros(dim)
        self.params = [self.gamma, self.beta]
        self.grads = [np.zeros(dim), np.zeros(dim)]
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x, train):
        if train:
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mu
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var
            self._x_mu = x - mu
            self._inv_std = 1.0 / np.sqrt(var + self.eps)
            self._xhat = self._x_mu * self._inv_std
            return self.gamma * self._xhat + self.beta
        xhat = (x - self.running_mean) / np.sqrt(self.running_var + self.eps)
        self._xhat = None
        return self.gamma * xhat + self.beta

    def backward(self, dy):
        if self._xhat is None:
            raise RuntimeError("batchnorm backward requires a train-mode forward")
        n = dy.shape[0]
        self.grads[0][...] = (dy * self._xhat).sum(axis=0)
        self.grads[1][...] = dy.sum(axis=0)
        dxhat = dy * self.gamma
        # backprop through the batch mean/variance
        dvar = (dxhat * self._x_mu).sum(axis=0) * (-0.5) * self._inv_std**3
        dmu = -(dxhat.sum(axis=0)) * self._inv_std + dvar * (-2.0 / n) * self._x_mu.sum(axis=0)
        return dxhat * self._inv_std + dvar * 2.0 * self._x_mu / n + dmu / n

    def spec(self):
        return {"type": "batchnorm", "dim": self.gamma.shape[0],
                "momentum": self.momentum, "eps": self.eps}


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


@dataclass
class MlpModel:
    layers: list[Layer]
    head: str                     # 'softmax' or 'log_softmax'
    class_count: int
    class_names: list[str] = field(default_factory=list)
    normalization: tuple[float, float] = (0.0, 1.0)  # input z-score (mean, std)
    mode: str = "eval"

    def train(self):
        self.mode = "train"
        return self

    def eval(self):
        self.mode = "eval"
        return self

    def normalize(self, x: np.ndarray) -> np.ndarray:
        mean, std = self.normalization
        return (x - mean) / std

    def logits(self, x: np.ndarray, normalized: bool = False) -> np.ndarray:
        if x.ndim != 2:
            raise ValueError("batch must be 2-D [n, d_in]")
        h = x if normalized else self.normalize(x)
        train = self.mode == "train"
        for layer in self.layers:
            h = layer.forward(h, train)
        if h.shape[1] != self.class_count:
            raise ValueError(
                f"final width {h.shape[1]} does not match class count {self.class_count}"
            )
        return h

    def forward(self, x: np.ndarray, normalized: bool = False) -> np.ndarray:
        """Class probabilities (softmax head) or log-probabilities (log-softmax head)."""
        z = self.logits(x, normalized=normalized)
        return softmax(z) if self.head == "softmax" else log_softmax(z)

    def probabilities(self, x: np.ndarray, normalized: bool = False) -> np.ndarray:
        out = self.forward(x, normalized=normalized)
        return out if self.head == "softmax" else np.exp(out)

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    def gradients(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())


def loss_and_grad(
    model: MlpModel,
    batch: np.ndarray,
    labels: np.ndarray,
    loss: str | None = None,
    normalized: bool = False,
) -> tuple[float, list[np.ndarray]]:
    """Mean loss over the batch and gradients for every parameter.

    'cross_entropy' pairs with the softmax head and 'nll' with log-softmax;
    both reduce to the same fused gradient (softmax minus one-hot)/n.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() >= model.class_count:
        raise ValueError("label outside [0, class_count)")
    if loss is None:
        loss = "cross_entropy" if model.head == "softmax" else "nll"
    if loss not in ("cross_entropy", "nll"):
        raise ValueError(f"unknown loss '{loss}'")
    z = model.logits(batch, normalized=normalized)
    logp = log_softmax(z)
    n = batch.shape[0]
    value = float(-logp[np.arange(n), labels].mean())
    if not math.isfinite(value):
        raise FloatingPointError("non-finite loss")
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    for layer in reversed(model.layers):
        dlogits = layer.backward(dlogits)
    return value, model.gradients()


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """Bias-corrected Adam update, in place."""
    if len(params) != len(grads):
        raise ValueError("params/grads length mismatch")
    state.t += 1
    b1t = 1.0 - beta1**state.t
    b2t = 1.0 - beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError("parameter/gradient shape mismatch")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / b1t) / (np.sqrt(v / b2t) + eps)
    return state


@dataclass
class ConvergenceReport:
    iterations: int
    function_evals: int
    final_loss: float
    grad_norm: float
    stop_reason: str  # 'gradient', 'max_iter', 'line_search'


def _strong_wolfe(fun, x, direction, f0, g0, c1=1e-4, c2=0.9, alpha0=1.0, max_evals=30):
    """Strong Wolfe line search (bracket + zoom). Returns (alpha, f, g, evals) or None."""
    d0 = float(g0 @ direction)
    if d0 >= 0.0:
        return None

    evals = 0

    def phi(alpha):
        nonlocal evals
        evals += 1
        f, g = fun(x + alpha * direction)
        return f, g, float(g @ direction)

    alpha_prev, f_prev, d_prev = 0.0, f0, d0
    alpha = alpha0
    f_alpha, g_alpha, d_alpha = phi(alpha)
    first = True

    def zoom(lo, f_lo, d_lo, hi, f_hi):
        nonlocal evals
        for _ in range(max_evals):
            a = 0.5 * (lo + hi)
            f_a, g_a, d_a = phi(a)
            if f_a > f0 + c1 * a * d0 or f_a >= f_lo:
                hi, f_hi = a, f_a
            else:
                if abs(d_a) <= -c2 * d0:
                    return a, f_a, g_a
                if d_a * (hi - lo) >= 0.0:
                    hi, f_hi = lo, f_lo
                lo, f_lo, d_lo = a, f_a, d_a
            if abs(hi - lo) < 1e-16:
                break
        return None

    for _ in range(max_evals):
        if f_alpha > f0 + c1 * alpha * d0 or (not first and f_alpha >= f_prev):
            z = zoom(alpha_prev, f_prev, d_prev, alpha, f_alpha)
            return (*z, evals) if z else None
        if abs(d_alpha) <= -c2 * d0:
            return alpha, f_alpha, g_alpha, evals
        if d_alpha >= 0.0:
            z = zoom(alpha, f_alpha, d_alpha, alpha_prev, f_prev)
            return (*z, evals) if z else None
        alpha_prev, f_prev, d_prev = alpha, f_alpha, d_alpha
        alpha *= 2.0
        f_alpha, g_alpha, d_alpha = phi(alpha)
        first = False
    return None


def lbfgs_minimize(
    fun,
    x0: np.ndarray,
    history: int = 10,
    max_iter: int = 200,
    grad_tol: float = 1e-6,
) -> tuple[np.ndarray, ConvergenceReport]:
    """Limited-memory BFGS with strong Wolfe line search on a flat vector.

    `fun(x) -> (f, grad)`. The objective is non-increasing across accepted
    steps; stops on sup-norm gradient < grad_tol, iteration budget, or a
    failed line search.
    """
    x = x0.astype(float).copy()
    f, g = fun(x)
    if not math.isfinite(f):
        raise FloatingPointError("non-finite loss at the initial point")
    evals = 1
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []
    reason = "max_iter"
    it = 0
    while it < max_iter:
        gnorm = float(np.abs(g).max())
        if gnorm < grad_tol:
            reason = "gradient"
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if y_hist:
            gamma = (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
            q *= gamma
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        direction = -q
        alpha0 = 1.0 if y_hist else min(1.0, 1.0 / max(1e-12, float(np.abs(g).sum())))
        ls = _strong_wolfe(fun, x, direction, f, g, alpha0=alpha0)
        if ls is None:
            reason = "line_search"
            break
        alpha, f_new, g_new, ls_evals = ls
        evals += ls_evals
        if not math.isfinite(f_new):
            raise FloatingPointError(f"non-finite loss at iteration {it}")
        s = alpha * direction
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-12:
            s_hist.append(s)
            y_hist.append(yv)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > history:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)
        x = x + s
        f, g = f_new, g_new
        it += 1
    else:
        reason = "max_iter"
    if reason == "max_iter" and float(np.abs(g).max()) < grad_tol:
        reason = "gradient"
    return x, ConvergenceReport(
        iterations=it,
        function_evals=evals,
        final_loss=f,
        grad_norm=float(np.abs(g).max()),
        stop_reason=reason,
    )


def _flatten(arrays: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([a.ravel() for a in arrays])


def _unflatten(flat: np.ndarray, like: list[np.ndarray]) -> None:
    pos = 0
    for a in like:
        a[...] = flat[pos : pos + a.size].reshape(a.shape)
        pos += a.size


def lbfgs_fit(
    model: MlpModel,
    X: np.ndarray,
    y: np.ndarray,
    loss: str = "cross_entropy",
    history: int = 10,
    max_iter: int = 200,
    grad_tol: float = 1e-6,
    normalized: bool = False,
) -> tuple[MlpModel, ConvergenceReport]:
    """Full-batch L-BFGS training of the model in place."""
    model.train()
    params = model.parameters()

    def fun(flat):
        _unflatten(flat, params)
        value, grads = loss_and_grad(model, X, y, loss, normalized=normalized)
        return value, _flatten(grads)

    x_opt, report = lbfgs_minimize(
        fun, _flatten(params), history=history, max_iter=max_iter, grad_tol=grad_tol
    )
    _unflatten(x_opt, params)
    model.eval()
    return model, report


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------

def gradient_check(
    model: MlpModel,
    batch: np.ndarray,
    labels: np.ndarray,
    loss: str | None = None,
    h: float = 1e-5,
    normalized: bool = True,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Dropout masks are frozen for the duration so every evaluation sees the
    same network. Relative error uses an absolute floor of 1e-3 to keep
    finite-difference noise on near-zero gradients from dominating.
    """
    if model.param_count() > 10_000:
        raise ValueError("gradient_check is for reduced-size models (<= 1e4 parameters)")
    model.train()
    for layer in model.layers:
        if isinstance(layer, Dropout):
            shape = (batch.shape[0], _dropout_width(model, layer))
            layer.freeze(shape)
    try:
        _, grads = loss_and_grad(model, batch, labels, loss, normalized=normalized)
        analytic = [g.copy() for g in grads]
        worst = 0.0
        for p, ga in zip(model.parameters(), analytic):
            flat = p.ravel()
            ga_flat = ga.ravel()
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + h
                f_plus, _ = loss_and_grad(model, batch, labels, loss, normalized=normalized)
                flat[idx] = orig - h
                f_minus, _ = loss_and_grad(model, batch, labels, loss, normalized=normalized)
                flat[idx] = orig
                numeric = (f_plus - f_minus) / (2.0 * h)
                denom = max(abs(ga_flat[idx]), abs(numeric), 1e-3)
                worst = max(worst, abs(ga_flat[idx] - numeric) / denom)
        return worst
    finally:
        for layer in model.layers:
            if isinstance(layer, Dropout):
                layer.unfreeze()
        model.eval()


def _dropout_width(model: MlpModel, target: Dropout) -> int:
    width = None
    for layer in model.layers:
        if isinstance(layer, Dense):
            width = layer.w.shape[1]
        if layer is target:
            return width
    raise ValueError("dropout layer not found")


# ---------------------------------------------------------------------------
# Architectures
# ---------------------------------------------------------------------------

def solution1_model(
    rng: np.random.Generator,
    hidden: int = 128,
    class_count: int = 24,
    class_names: list[str] | None = None,
) -> MlpModel:
    """Two dense layers, ReLU, softmax head; trained with full-batch L-BFGS."""
    return MlpModel(
        layers=[Dense(1, hidden, rng), Relu(), Dense(hidden, class_count, rng)],
        head="softmax",
        class_count=class_count,
        class_names=class_names or [],
    )


def solution2_model(
    rng: np.random.Generator,
    hidden: int = 512,
    class_count: int = 25,
    dropout: float = 0.2,
    class_names: list[str] | None = None,
) -> MlpModel:
    """Three dense layers with batchnorm, PReLU, dropout, log-softmax head."""
    return MlpModel(
        layers=[
            Dense(1, hidden, rng),
            BatchNorm(hidden),
            PRelu(),
            Dropout(dropout, rng),
            Dense(hidden, hidden, rng),
            BatchNorm(hidden),
            PRelu(),
            Dropout(dropout, rng),
            Dense(hidden, class_count, rng),
        ],
        head="log_softmax",
        class_count=class_count,
        class_names=class_names or [],
    )


# ---------------------------------------------------------------------------
# Serialization (versioned JSON, exact float round-trip via repr)
# ---------------------------------------------------------------------------

def model_to_dict(model: MlpModel) -> dict:
    layers = []
    for layer in model.layers:
        entry = layer.spec()
        entry["params"] = [p.tolist() for p in layer.params]
        if isinstance(layer, BatchNorm):
            entry["running_mean"] = layer.running_mean.tolist()
            entry["running_var"] = layer.running_var.tolist()
        layers.append(entry)
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "head": model.head,
        "class_count": model.class_count,
        "class_names": list(model.class_names),
        "normalization": list(model.normalization),
        "layers": layers,
    }


def model_from_dict(data: dict, rng: np.random.Generator | None = None) -> MlpModel:
    layers: list[Layer] = []
    for entry in data["layers"]:
        kind = entry["type"]
        if kind == "dense":
            layer = Dense(entry["in"], entry["out"])
        elif kind == "relu":
            layer = Relu()
        elif kind == "prelu":
            layer = PRelu()
        elif kind == "dropout":
            layer = Dropout(entry["p"], rng)
        elif kind == "batchnorm":
            layer = BatchNorm(entry["dim"], entry["momentum"], entry["eps"])
            layer.running_mean = np.array(entry["running_mean"])
            layer.running_var = np.array(entry["running_var"])
        else:
            raise ValueError(f"unknown layer type '{kind}'")
        for target, saved in zip(layer.params, entry.get("params", [])):
            target[...] = np.array(saved)
        layers.append(layer)
    return MlpModel(
        layers=layers,
        head=data["head"],
        class_count=data["class_count"],
        class_names=list(data.get("class_names", [])),
        normalization=tuple(data.get("normalization", (0.0, 1.0))),
    )


def save_model(model: MlpModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)), encoding="utf-8")


def load_model(path: str | Path, rng: np.random.Generator | None = None) -> MlpModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")), rng)
