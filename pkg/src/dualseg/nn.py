"""Parameter-holding layers: thin stateful wrappers over the functional ops.

Each layer exposes ``forward(x) -> (y, cache)`` and ``backward(gy, cache) ->
gx``; backward accumulates into the layer's Parameter ``.grad`` buffers.
Weights use uniform init scaled by 1/sqrt(fan_in); norm affines start at
identity.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .tensor import Parameter


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv2d:
    def __init__(self, c_in, c_out, k, stride=1, padding=None, rng=None, name="conv"):
        if padding is None:
            padding = k // 2
        self.stride, self.padding = stride, padding
        rng = rng or np.random.default_rng(0)
        fan_in = c_in * k * k
        self.w = Parameter(_uniform(rng, (c_out, c_in, k, k), fan_in), f"{name}.w")
        self.b = Parameter(_uniform(rng, (c_out,), fan_in), f"{name}.b")

    def forward(self, x):
        return ops.conv2d(x, self.w.value, self.b.value, self.stride, self.padding)

    def backward(self, gy, cache):
        gx, gw, gb = ops.conv2d_backward(gy, cache)
        self.w.grad += gw
        self.b.grad += gb
        return gx

    def parameters(self):
        return [self.w, self.b]


class GroupNorm:
    def __init__(self, channels, num_groups, eps=1e-5, name="gn"):
        self.num_groups, self.eps = num_groups, eps
        self.gamma = Parameter(np.ones(channels), f"{name}.gamma")
        self.beta = Parameter(np.zeros(channels), f"{name}.beta")

    def forward(self, x):
        return ops.group_norm(x, self.num_groups, self.gamma.value, self.beta.value, self.eps)

    def backward(self, gy, cache):
        gx, ggamma, gbeta = ops.group_norm_backward(gy, cache)
        self.gamma.grad += ggamma
        self.beta.grad += gbeta
        return gx

    def parameters(self):
        return [self.gamma, self.beta]


class Linear:
    def __init__(self, d_in, d_out, rng=None, name="linear"):
        rng = rng or np.random.default_rng(0)
        self.w = Parameter(_uniform(rng, (d_out, d_in), d_in), f"{name}.w")
        self.b = Parameter(_uniform(rng, (d_out,), d_in), f"{name}.b")

    def forward(self, x):
        return ops.linear(x, self.w.value, self.b.value)

    def backward(self, gy, cache):
        gx, gw, gb = ops.linear_backward(gy, cache)
        self.w.grad += gw
        self.b.grad += gb
        return gx

    def parameters(self):
        return [self.w, self.b]


class ConvGnRelu:
    """conv -> group norm -> relu, the basic block of both streams."""

    def __init__(self, c_in, c_out, k=3, stride=1, gn_groups=4, rng=None, name="block"):
        self.conv = Conv2d(c_in, c_out, k, stride=stride, rng=rng, name=f"{name}.conv")
        self.gn = GroupNorm(c_out, gn_groups, name=f"{name}.gn")

    def forward(self, x):
        y1, c1 = self.conv.forward(x)
        y2, c2 = self.gn.forward(y1)
        y3, c3 = ops.relu(y2)
        return y3, (c1, c2, c3)

    def backward(self, gy, cache):
        c1, c2, c3 = cache
        g = ops.relu_backward(gy, c3)
        g = self.gn.backward(g, c2)
        return self.conv.backward(g, c1)

    def parameters(self):
        return self.conv.parameters() + self.gn.parameters()


class Mlp:
    """Two-layer perceptron on vectors: linear -> relu -> linear."""

    def __init__(self, d_in, d_hidden, d_out, rng=None, name="mlp"):
        self.fc1 = Linear(d_in, d_hidden, rng=rng, name=f"{name}.fc1")
        self.fc2 = Linear(d_hidden, d_out, rng=rng, name=f"{name}.fc2")

    def forward(self, x):
        h_pre, c1 = self.fc1.forward(x)
        h, c2 = ops.relu(h_pre)
        y, c3 = self.fc2.forward(h)
        return y, (c1, c2, c3)

    def backward(self, gy, cache):
        c1, c2, c3 = cache
        g = self.fc2.backward(gy, c3)
        g = ops.relu_backward(g, c2)
        return self.fc1.backward(g, c1)

    def parameters(self):
        return self.fc1.parameters() + self.fc2.parameters()
