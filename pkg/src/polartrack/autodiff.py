"""Minimal reverse-mode differentiation core for the tracking model.

Implements exactly the operator set the message-passing network needs (affine
layers, leaky ReLU, column concatenation, row gathering, segmented max
aggregation, sigmoid, focal loss) on float64 numpy arrays, plus a
rectified-Adam optimizer with a cosine-annealed warm-restart schedule and
exact checkpoint round-tripping.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

CHECKPOINT_VERSION = 1


class ShapeError(ValueError):
    pass


class Tensor:
    """A 2D float64 array with an optional gradient buffer and backward hook."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple["Tensor", ...] = (),
                 backward: Callable[[np.ndarray], None] | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, seed: float = 1.0) -> None:
        """Reverse-mode sweep from this (scalar) tensor, accumulating into the
        .grad buffers of all reachable tensors that require gradients."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad:
                    stack.append((p, False))
        self._accumulate(np.full_like(self.data, seed))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def constant(data) -> Tensor:
    return Tensor(data)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ w + b with exact gradient accumulation."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"affine shape mismatch: x {x.data.shape} vs w {w.data.shape}")
    if b.data.shape != (w.data.shape[1],):
        raise ShapeError(f"affine bias shape {b.data.shape} vs w {w.data.shape}")
    out = Tensor(x.data @ w.data + b.data, parents=(x, w, b))

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g @ w.data.T)
        if w.requires_grad:
            w._accumulate(x.data.T @ g)
        if b.requires_grad:
            b._accumulate(g.sum(axis=0))

    out._backward = backward
    return out


def shift(x: Tensor, v: Tensor) -> Tensor:
    """Row-broadcast addition y = x + v for a learnable input offset."""
    if v.data.shape != (x.data.shape[1],):
        raise ShapeError(f"shift vector shape {v.data.shape} vs x {x.data.shape}")
    out = Tensor(x.data + v.data, parents=(x, v))

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g)
        if v.requires_grad:
            v._accumulate(g.sum(axis=0))

    out._backward = backward
    return out


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    """Elementwise max(x, slope * x); the subgradient at 0 uses `slope`."""
    if not (0.0 < slope < 1.0):
        raise ValueError(f"leaky ReLU slope must be in (0, 1), got {slope}")
    pos = x.data > 0.0
    out = Tensor(np.where(pos, x.data, slope * x.data), parents=(x,))

    def backward(g: np.ndarray) -> None:
        x._accumulate(np.where(pos, g, slope * g))

    out._backward = backward
    return out


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    rows = {p.data.shape[0] for p in parts}
    if len(rows) != 1:
        raise ShapeError(f"concat row counts differ: {sorted(rows)}")
    out = Tensor(np.concatenate([p.data for p in parts], axis=1),
                 parents=tuple(parts))
    widths = [p.data.shape[1] for p in parts]

    def backward(g: np.ndarray) -> None:
        offset = 0
        for p, w in zip(parts, widths):
            if p.requires_grad:
                p._accumulate(g[:, offset:offset + w])
            offset += w

    out._backward = backward
    return out


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= x.data.shape[0]):
        raise IndexError(f"row index out of range for {x.data.shape[0]} rows")
    out = Tensor(x.data[idx], parents=(x,))

    def backward(g: np.ndarray) -> None:
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        x._accumulate(gx)

    out._backward = backward
    return out


def segment_max(rows: Tensor, segments: np.ndarray, n_segments: int) -> Tensor:
    """Per-segment, per-column maximum; empty segments yield all-zero rows.

    The backward pass routes each output gradient entry to the argmax row of
    its (segment, column) cell, taking the first row index on ties.
    """
    seg = np.asarray(segments, dtype=np.intp)
    m, d = rows.data.shape
    if seg.shape != (m,):
        raise ShapeError(f"segment ids shape {seg.shape} vs {m} rows")
    if seg.size and (seg.min() < 0 or seg.max() >= n_segments):
        raise IndexError("segment id out of range")
    maxed = np.full((n_segments, d), -np.inf)
    np.maximum.at(maxed, seg, rows.data)
    nonempty = np.zeros(n_segments, dtype=bool)
    nonempty[seg] = True
    out_data = np.where(nonempty[:, None], maxed, 0.0)
    out = Tensor(out_data, parents=(rows,))

    # First argmax row per (segment, column), computed eagerly so the backward
    # pass stays cheap and tie-breaking is deterministic.
    argrow = np.full((n_segments, d), m, dtype=np.intp)
    if m:
        hit = rows.data == maxed[seg]
        row_ids = np.where(hit, np.arange(m)[:, None], m)
        np.minimum.at(argrow, seg, row_ids)

    def backward(g: np.ndarray) -> None:
        grows = np.zeros_like(rows.data)
        seg_ids, col_ids = np.nonzero(argrow < m)
        grows[argrow[seg_ids, col_ids], col_ids] += g[seg_ids, col_ids]
        rows._accumulate(grows)

    out._backward = backward
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    out = Tensor(s, parents=(x,))

    def backward(g: np.ndarray) -> None:
        x._accumulate(g * s * (1.0 - s))

    out._backward = backward
    return out


def focal_loss(logits: Tensor, labels: np.ndarray, gamma: float,
               alpha: float) -> Tensor:
    """Mean focal loss over binary labels, numerically stable for any finite
    logit: -alpha_t * (1 - p_t)^gamma * log(p_t) with p = sigmoid(logit)."""
    if gamma < 0.0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    z = logits.data.reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if z.size == 0:
        raise ValueError("focal loss over zero samples is undefined")
    if z.shape != y.shape:
        raise ShapeError(f"{z.shape[0]} logits vs {y.shape[0]} labels")
    sign = 2.0 * y - 1.0
    zt = sign * z                    # logit of the true class
    q = _sigmoid(-zt)                # 1 - p_t
    log_pt = -np.logaddexp(0.0, -zt)  # log sigmoid(zt), stable
    at = np.where(y > 0.5, alpha, 1.0 - alpha)
    per = -at * q ** gamma * log_pt
    out = Tensor(np.array([[per.mean()]]), parents=(logits,))

    def backward(g: np.ndarray) -> None:
        gs = float(g.reshape(-1)[0]) / z.size
        # d/dzt of -at * q^gamma * log(pt); all factors bounded for gamma >= 0.
        dzt = -at * q ** gamma * (gamma * _sigmoid(zt) * (-log_pt) + q)
        logits._accumulate((gs * sign * dzt).reshape(logits.data.shape))

    out._backward = backward
    return out


def scale(x: Tensor, factor: float) -> Tensor:
    out = Tensor(x.data * factor, parents=(x,))

    def backward(g: np.ndarray) -> None:
        x._accumulate(g * factor)

    out._backward = backward
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shape mismatch {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data + b.data, parents=(a, b))

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    out._backward = backward
    return out


class ParameterSet:
    """Ordered, named parameter tensors for all MLPs of the model."""

    def __init__(self, params: Mapping[str, Tensor] | None = None):
        self._params: dict[str, Tensor] = dict(params or {})

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = parameter(data)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterable[tuple[str, Tensor]]:
        return self._params.items()

    def count(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def copy(self) -> "ParameterSet":
        out = ParameterSet()
        for name, t in self.items():
            out.add(name, t.data.copy())
        return out

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.items()}


@dataclass
class OptimizerState:
    """Rectified-Adam moments plus the warm-restart cosine schedule state."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    cycle_len: int = 10       # epochs per annealing cycle; doubles on restart
    cycle_pos: int = 0        # epochs elapsed in the current cycle

    @classmethod
    def init(cls, params: ParameterSet, cycle_len: int = 10) -> "OptimizerState":
        return cls(m={n: np.zeros_like(t.data) for n, t in params.items()},
                   v={n: np.zeros_like(t.data) for n, t in params.items()},
                   cycle_len=cycle_len)

    def schedule_factor(self) -> float:
        return 0.5 * (1.0 + math.cos(math.pi * self.cycle_pos / self.cycle_len))

    def advance_epoch(self) -> None:
        self.cycle_pos += 1
        if self.cycle_pos >= self.cycle_len:
            self.cycle_pos = 0
            self.cycle_len *= 2


def optimizer_step(params: ParameterSet, opt: OptimizerState,
                   lr_base: float) -> None:
    """One rectified-Adam update at the current cosine schedule factor.

    Parameters without a populated gradient are treated as zero-gradient.
    """
    lr = lr_base * opt.schedule_factor()
    opt.step_count += 1
    t = opt.step_count
    b1, b2 = opt.beta1, opt.beta2
    rho_inf = 2.0 / (1.0 - b2) - 1.0
    b2t = b2 ** t
    rho_t = rho_inf - 2.0 * t * b2t / (1.0 - b2t)
    if rho_t > 4.0:
        rect = math.sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf)
                         / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
    else:
        rect = None
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        m = opt.m[name]
        v = opt.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        if rect is None:
            p.data -= lr * m_hat
        else:
            v_hat = np.sqrt(v / (1.0 - b2t))
            p.data -= lr * rect * m_hat / (v_hat + opt.eps)


def grad_check(closure: Callable[[], Tensor], params: ParameterSet,
               epsilon: float = 1e-5, n_samples: int = 200,
               rng: np.random.Generator | None = None) -> float:
    """Max relative error between analytic and central-difference gradients on
    a random subset of scalar parameters. The relative error uses a 1e-3
    magnitude floor so finite-difference noise on near-zero gradients does not
    dominate."""
    rng = rng or np.random.default_rng(0)
    params.zero_grad()
    closure().backward()
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for name, t in params.items()}
    names = params.names()
    sizes = np.array([params[n].data.size for n in names])
    total = int(sizes.sum())
    picks = rng.choice(total, size=min(n_samples, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for flat in sorted(int(p) for p in picks):
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        name = names[k]
        local = flat - offsets[k]
        data = params[name].data.reshape(-1)
        keep = data[local]
        data[local] = keep + epsilon
        f_plus = closure().item()
        data[local] = keep - epsilon
        f_minus = closure().item()
        data[local] = keep
        fd = (f_plus - f_minus) / (2.0 * epsilon)
        a = analytic[name].reshape(-1)[local]
        worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), 1e-3))
    return worst


def save_checkpoint(path: str | Path, params: ParameterSet,
                    opt: OptimizerState | None = None,
                    meta: dict | None = None) -> None:
    """Write a versioned binary checkpoint; float64 values round-trip exactly."""
    arrays: dict[str, np.ndarray] = {}
    for name, t in params.items():
        arrays[f"param/{name}"] = t.data
    header = {"version": CHECKPOINT_VERSION, "meta": meta or {},
              "param_names": params.names()}
    if opt is not None:
        for name in params.names():
            arrays[f"opt_m/{name}"] = opt.m[name]
            arrays[f"opt_v/{name}"] = opt.v[name]
        header["opt"] = {"step_count": opt.step_count, "beta1": opt.beta1,
                         "beta2": opt.beta2, "eps": opt.eps,
                         "cycle_len": opt.cycle_len, "cycle_pos": opt.cycle_pos}
    arrays["header"] = np.frombuffer(
        json.dumps(header).encode("utf-8"), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path: str | Path) -> tuple[ParameterSet, OptimizerState | None, dict]:
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode("utf-8"))
        if header["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        params = ParameterSet()
        for name in header["param_names"]:
            params.add(name, data[f"param/{name}"])
        opt = None
        if "opt" in header:
            h = header["opt"]
            opt = OptimizerState(
                m={n: data[f"opt_m/{n}"].copy() for n in header["param_names"]},
                v={n: data[f"opt_v/{n}"].copy() for n in header["param_names"]},
                step_count=h["step_count"], beta1=h["beta1"], beta2=h["beta2"],
                eps=h["eps"], cycle_len=h["cycle_len"], cycle_pos=h["cycle_pos"])
    return params, opt, header["meta"]
