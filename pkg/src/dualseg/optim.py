"""Adaptive-moment optimizer with decoupled weight decay."""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation


class AdamW:
    """Bias-corrected adaptive moments; weight decay applied directly to the
    weights (not through the gradient). A step aborts without touching any
    parameter if some gradient is non-finite."""

    def __init__(self, named_params, lr=1e-3, beta1=0.9, beta2=0.999,
                 eps=1e-8, weight_decay=1e-4):
        self.named_params = list(named_params)
        self.lr = lr
        self.beta1, self.beta2 = beta1, beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {name: np.zeros_like(p.value) for name, p in self.named_params}
        self.v = {name: np.zeros_like(p.value) for name, p in self.named_params}

    def step(self, lr=None):
        lr = self.lr if lr is None else lr
        for name, p in self.named_params:
            if not np.all(np.isfinite(p.grad)):
                raise ContractViolation(f"non-finite gradient in parameter '{name}'")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.named_params:
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.value -= lr * (update + self.weight_decay * p.value)

    def state_arrays(self):
        """Flat name -> array view of the optimizer state, for checkpoints."""
        out = {"t": np.array([float(self.t)])}
        for name in self.m:
            out[f"m/{name}"] = self.m[name]
            out[f"v/{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays: dict):
        self.t = int(arrays["t"][0])
        for name in self.m:
            self.m[name][:] = arrays[f"m/{name}"].reshape(self.m[name].shape)
            self.v[name][:] = arrays[f"v/{name}"].reshape(self.v[name].shape)
