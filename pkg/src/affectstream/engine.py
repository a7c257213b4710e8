"""Minimal deterministic dense-network engine.

Double-precision parameter store, linear/ReLU/tanh/concat ops with manual
backward passes, Adam/SGD updates, and a central-difference gradient
checker. Two runs with the same seed are bit-identical.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np


class DimensionError(ValueError):
    """Input shape does not match a layer or operand."""


class NumericError(RuntimeError):
    """Non-finite value in parameters or gradients; message names the entry."""


def make_rng(seed):
    """Seeded generator; identical seed gives an identical draw sequence."""
    return np.random.Generator(np.random.PCG64(int(seed)))


class ParamStore:
    """Named linear-layer parameters (weight, bias) plus matching grad buffers."""

    def __init__(self):
        self._params = {}  # name -> [W (in,out), b (out,)]
        self._grads = {}

    def add_linear(self, name, fan_in, fan_out, rng):
        """Allocate a layer with He-uniform weights and zero bias."""
        if name in self._params:
            raise ValueError(f"duplicate layer name {name!r}")
        limit = math.sqrt(6.0 / fan_in)
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        b = np.zeros(fan_out, dtype=float)
        self._params[name] = [w, b]
        self._grads[name] = [np.zeros_like(w), np.zeros_like(b)]

    def names(self):
        return list(self._params)

    def __contains__(self, name):
        return name in self._params

    def params(self, name):
        if name not in self._params:
            raise KeyError(f"unknown layer {name!r}")
        return self._params[name]

    def grads(self, name):
        return self._grads[name]

    def set_params(self, name, w, b):
        old_w, old_b = self.params(name)
        w = np.asarray(w, dtype=float)
        b = np.asarray(b, dtype=float)
        if w.shape != old_w.shape or b.shape != old_b.shape:
            raise DimensionError(f"layer {name!r}: shape {w.shape}/{b.shape} does not match "
                                 f"{old_w.shape}/{old_b.shape}")
        self._params[name] = [w, b]

    def zero_grads(self):
        for dw, db in self._grads.values():
            dw.fill(0.0)
            db.fill(0.0)

    def param_count(self):
        return sum(w.size + b.size for w, b in self._params.values())

    def check_finite(self, what="parameter"):
        for name, (w, b) in self._params.items():
            if not np.isfinite(w).all():
                raise NumericError(f"non-finite {what} in {name}.weight")
            if not np.isfinite(b).all():
                raise NumericError(f"non-finite {what} in {name}.bias")


def linear_forward(store, name, x, cache=None):
    """y = x @ W + b for a named layer.

    When a cache dict is supplied the input is stashed for the backward
    pass; without one the call is pure and safe on shared snapshots.
    """
    w, b = store.params(name)
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise DimensionError(f"layer {name!r} expects input of width {w.shape[0]}, "
                             f"got shape {x.shape}")
    if cache is not None:
        cache[name] = x
    return x @ w + b


def linear_backward(store, name, grad_out, cache):
    """Accumulate dW, db for a layer and return the gradient w.r.t. its input."""
    x = cache[name]
    w, _ = store.params(name)
    dw, db = store.grads(name)
    dw += x.T @ grad_out
    db += grad_out.sum(axis=0)
    return grad_out @ w.T


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(x, grad_out):
    # gradient passes only where the pre-activation was strictly positive
    return grad_out * (x > 0)


def tanh(x):
    return np.tanh(x)


def tanh_backward(y, grad_out):
    """Backward through tanh given its *output* y."""
    return grad_out * (1.0 - y * y)


def concat(a, b):
    """Column-wise concatenation of two batches."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[0] != b.shape[0]:
        raise DimensionError(f"concat batch mismatch: {a.shape[0]} vs {b.shape[0]}")
    return np.concatenate([a, b], axis=1)


def concat_backward(grad_out, left_cols):
    """Split an upstream gradient at the concatenation boundary."""
    return grad_out[:, :left_cols], grad_out[:, left_cols:]


class Optimizer:
    """Adam (default) or plain SGD over a ParamStore.

    Weight decay is decoupled: applied directly to weights after the
    gradient step, never mixed into the adaptive moments. Biases are not
    decayed. step() asserts gradient and parameter finiteness and zeroes
    the gradient buffers afterwards.
    """

    def __init__(self, mode="adam", lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0):
        if mode not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer mode {mode!r}")
        if weight_decay < 0.0:
            raise ValueError(f"weight_decay must be >= 0, got {weight_decay}")
        self.mode = mode
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self._m = {}
        self._v = {}
        self._t = 0

    def step(self, store, lr=None):
        lr = self.lr if lr is None else lr
        for name in store.names():
            dw, db = store.grads(name)
            if not np.isfinite(dw).all():
                raise NumericError(f"non-finite gradient in {name}.weight")
            if not np.isfinite(db).all():
                raise NumericError(f"non-finite gradient in {name}.bias")
        if self.mode == "sgd":
            for name in store.names():
                w, b = store.params(name)
                dw, db = store.grads(name)
                w -= lr * dw
                b -= lr * db
        else:
            self._t += 1
            t = self._t
            bc1 = 1.0 - self.beta1 ** t
            bc2 = 1.0 - self.beta2 ** t
            for name in store.names():
                if name not in self._m:
                    w, b = store.params(name)
                    self._m[name] = [np.zeros_like(w), np.zeros_like(b)]
                    self._v[name] = [np.zeros_like(w), np.zeros_like(b)]
                for p, g, m, v in zip(store.params(name), store.grads(name),
                                      self._m[name], self._v[name]):
                    m *= self.beta1
                    m += (1.0 - self.beta1) * g
                    v *= self.beta2
                    v += (1.0 - self.beta2) * g * g
                    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        if self.weight_decay > 0.0:
            for name in store.names():
                w, _ = store.params(name)
                w -= lr * self.weight_decay * w
        store.check_finite()
        store.zero_grads()
        return store


class GradCheckResult(NamedTuple):
    max_rel_err: float
    worst_param: str


def finite_diff_check(loss_fn: Callable[[], float], store, eps=1e-5):
    """Compare analytic gradients against central finite differences.

    loss_fn() must return the scalar loss for the store's current parameters
    and leave the matching analytic gradients in the store's gradient
    buffers. Every parameter entry is perturbed by +-eps; the relative error
    uses max(|analytic|, |numeric|, 1e-8) as denominator. Returns the
    maximum relative error together with the worst entry's name.
    """
    store.zero_grads()
    loss_fn()
    analytic = {name: [g.copy() for g in store.grads(name)] for name in store.names()}
    worst = GradCheckResult(0.0, "")
    for name in store.names():
        arrays = store.params(name)
        for part, label in ((0, "weight"), (1, "bias")):
            flat = arrays[part].ravel()
            a_flat = analytic[name][part].ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                store.zero_grads()
                f_plus = loss_fn()
                flat[i] = orig - eps
                store.zero_grads()
                f_minus = loss_fn()
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2.0 * eps)
                denom = max(abs(a_flat[i]), abs(numeric), 1e-8)
                rel = abs(a_flat[i] - numeric) / denom
                if rel > worst.max_rel_err:
                    worst = GradCheckResult(rel, f"{name}.{label}[{i}]")
    store.zero_grads()
    return worst
