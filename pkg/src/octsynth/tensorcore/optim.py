"""Named parameter storage and the Adam update rule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericalError, ShapeError
from .tensor import Tensor


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0


@dataclass
class ParamStore:
    """Named map of trainable tensors plus per-parameter Adam state."""

    params: dict = field(default_factory=dict)
    state: dict = field(default_factory=dict)

    def add(self, name, array):
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(array), requires_grad=True)
        self.params[name] = t
        self.state[name] = AdamState(m=np.zeros_like(t.data), v=np.zeros_like(t.data))
        return t

    def __getitem__(self, name):
        return self.params[name]

    def names(self):
        return list(self.params.keys())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def grads(self):
        """Collect accumulated gradients; parameters without one count as zero."""
        out = {}
        for name, p in self.params.items():
            out[name] = p.grad if p.grad is not None else np.zeros_like(p.data)
        return out

    def arrays(self):
        return {name: p.data for name, p in self.params.items()}

    def load_arrays(self, arrays):
        for name, p in self.params.items():
            if name not in arrays:
                raise KeyError(f"checkpoint is missing parameter {name!r}")
            a = np.asarray(arrays[name], dtype=p.data.dtype)
            if a.shape != p.data.shape:
                raise ShapeError(f"parameter {name!r}: checkpoint shape {a.shape} vs model shape {p.data.shape}")
            p.data = a.copy()
        extra = set(arrays) - set(self.params)
        if extra:
            raise KeyError(f"checkpoint has unknown parameters: {sorted(extra)}")


def adam_step(store: ParamStore, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Apply one bias-corrected Adam update in place and return the store."""
    for name, p in store.params.items():
        if name not in grads:
            raise KeyError(f"missing gradient for parameter {name!r}")
        g = np.asarray(grads[name])
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter has shape {p.data.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
        st = store.state[name]
        st.step += 1
        st.m = beta1 * st.m + (1.0 - beta1) * g
        st.v = beta2 * st.v + (1.0 - beta2) * (g * g)
        mhat = st.m / (1.0 - beta1**st.step)
        vhat = st.v / (1.0 - beta2**st.step)
        p.data = p.data - lr * mhat / (np.sqrt(vhat) + eps)
    return store
