"""Adam with optional lazy (row-sparse) updates and global-norm clipping."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    # parameters whose all-zero gradient rows are skipped (moments untouched too)
    sparse: frozenset = frozenset()

    def to_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in sorted(self.m):
            out[f"adam.m.{name}"] = self.m[name]
            out[f"adam.v.{name}"] = self.v[name]
        return out

    def hyper(self) -> dict:
        return {
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "step": self.step,
            "sparse": sorted(self.sparse),
        }

    @classmethod
    def from_arrays(cls, hyper: dict, arrays: dict[str, np.ndarray]) -> "AdamState":
        st = cls(
            lr=hyper["lr"],
            beta1=hyper["beta1"],
            beta2=hyper["beta2"],
            eps=hyper["eps"],
            step=hyper["step"],
            sparse=frozenset(hyper.get("sparse", ())),
        )
        for key, arr in arrays.items():
            if key.startswith("adam.m."):
                st.m[key[len("adam.m."):]] = arr.copy()
            elif key.startswith("adam.v."):
                st.v[key[len("adam.v."):]] = arr.copy()
        return st


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState):
    """Apply one bias-corrected Adam update to ``params`` in place."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for parameter {name!r}")
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name!r} {params[name].shape}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name in sorted(grads):
        g = grads[name]
        p = params[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        if name in state.sparse and p.ndim >= 1:
            rows = np.flatnonzero(np.any(g.reshape(g.shape[0], -1) != 0, axis=1))
            if rows.size == 0:
                continue
            gr = g[rows]
            m[rows] = b1 * m[rows] + (1 - b1) * gr
            v[rows] = b2 * v[rows] + (1 - b2) * gr * gr
            p[rows] -= state.lr * (m[rows] / c1) / (np.sqrt(v[rows] / c2) + state.eps)
        else:
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for _, g in sorted(grads.items()))))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total
