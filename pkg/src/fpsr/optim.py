"""Adam optimizer over named parameter groups."""

from __future__ import annotations

import numpy as np

from .errors import FpsrError


def adam_step(param, grad, m, v, t, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place on `param`, `m`, `v`.

    `t` is the 1-based step count including this step.
    """
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * np.square(grad)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    """Adam over a list of (name, Tensor) pairs.

    Moment buffers live in the parameter's own dtype and the update runs
    in place. After `step()` the parameter gradients are cleared.
    """

    def __init__(self, named_params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr < 0:
            raise FpsrError(f"negative learning rate {lr}")
        self.params = list(named_params)
        names = [n for n, _ in self.params]
        if len(set(names)) != len(names):
            raise FpsrError("duplicate parameter names in optimizer group")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros(p.shape, dtype=p.dtype) for n, p in self.params}
        self.v = {n: np.zeros(p.shape, dtype=p.dtype) for n, p in self.params}

    def step(self):
        self.t += 1
        for name, p in self.params:
            if p.grad is None:
                raise FpsrError(f"adam step with no gradient on {name!r}")
            adam_step(p.data, p.grad, self.m[name], self.v[name], self.t,
                      self.lr, self.beta1, self.beta2, self.eps)
            p.grad = None

    def zero_grad(self):
        for _, p in self.params:
            p.grad = None

    def state_dict(self):
        d = {"t": np.asarray([self.t], dtype=np.float64)}
        for n, _ in self.params:
            d[f"m.{n}"] = self.m[n]
            d[f"v.{n}"] = self.v[n]
        return d

    def load_state_dict(self, d):
        self.t = int(d["t"][0])
        for n, p in self.params:
            m, v = d[f"m.{n}"], d[f"v.{n}"]
            if m.shape != p.shape or v.shape != p.shape:
                raise FpsrError(f"optimizer state shape mismatch for {n!r}")
            self.m[n] = m.astype(p.dtype)
            self.v[n] = v.astype(p.dtype)
