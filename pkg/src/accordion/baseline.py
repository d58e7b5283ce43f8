"""Backpropagation training (Adam or plain SGD) for the same architectures."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, batches
from .errors import ContractError
from .metrics import MetricsRecord
from .nn import Network, NetworkSpec, evaluate, forward_layers, glorot_init, im2col, pad_same, _same_pads
from .schemes import RunHistory


@dataclass
class ForwardCache:
    """Layer outputs in order; ``activations[0]`` is the input batch."""

    spec: NetworkSpec
    activations: list = field(default_factory=list)

    @property
    def nbytes(self):
        return sum(a.nbytes for a in self.activations)


def forward_with_cache(net: Network, batch):
    cache = ForwardCache(net.spec)
    probs = forward_layers(net, batch, cache.activations)
    return probs, cache


def _activation_grad(d_out, out, name):
    if name == "relu":
        return d_out * (out > 0)
    if name == "sigmoid":
        return d_out * out * (1 - out)
    if name == "linear":
        return d_out
    raise ContractError(f"no gradient rule for hidden activation {name!r}")


def _conv_backward(x, w, dz, padding):
    f, kh, kw, c = w.shape
    xp = pad_same(x, kh, kw) if padding == "same" else x
    n, ho, wo, _ = dz.shape
    dz2 = dz.reshape(-1, f)
    dw = (dz2.T @ im2col(xp, kh, kw)).reshape(w.shape)
    dcols = (dz2 @ w.reshape(f, -1)).reshape(n, ho, wo, kh, kw, c)
    dxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + ho, j:j + wo, :] += dcols[:, :, :, i, j, :]
    if padding == "same":
        (t, _), (l, _) = _same_pads(kh), _same_pads(kw)
        dxp = dxp[:, t:t + x.shape[1], l:l + x.shape[2], :]
    return dw, dxp


def _pool_views(x, window, stride, ho, wo):
    for i in range(window):
        for j in range(window):
            yield (slice(None), slice(i, i + stride * (ho - 1) + 1, stride),
                   slice(j, j + stride * (wo - 1) + 1, stride), slice(None))


def _maxpool_backward(x, out, d_out, window, stride):
    dx = np.zeros_like(x)
    taken = np.zeros(out.shape, dtype=bool)
    _, ho, wo, _ = out.shape
    for sl in _pool_views(x, window, stride, ho, wo):
        # first maximum in scan order receives the gradient
        hit = (x[sl] == out) & ~taken
        dx[sl] += d_out * hit
        taken |= hit
    return dx


def _avgpool_backward(x, d_out, window, stride):
    dx = np.zeros_like(x)
    _, ho, wo, _ = d_out.shape
    share = d_out / np.asarray(window * window, dtype=d_out.dtype)
    for sl in _pool_views(x, window, stride, ho, wo):
        dx[sl] += share
    return dx


def backprop(net: Network, cache: ForwardCache, labels) -> list[np.ndarray]:
    """Gradients of mean categorical cross-entropy, one array per parameter tensor."""
    spec = net.spec
    acts = cache.activations
    if cache.spec != spec or len(acts) != len(spec.layers) + 1:
        raise ContractError("cache was not produced by this network")
    labels = np.asarray(labels)
    probs = acts[-1]
    n = len(labels)
    if probs.shape != (n, spec.class_count):
        raise ContractError("labels do not match the cached batch")
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), labels] = 1
    grad = (probs - onehot) / np.asarray(n, dtype=probs.dtype)  # w.r.t. final logits

    grads = [None] * len(net.params)
    pi = len(net.params)
    last = len(spec.layers) - 1
    for li in range(last, -1, -1):
        layer = spec.layers[li]
        x, out = acts[li], acts[li + 1]
        if layer.kind == "dense":
            pi -= 1
            if li != last:
                grad = _activation_grad(grad, out, layer.activation)
            w = net.params[pi]
            grads[pi] = x.T @ grad
            grad = grad @ w.T
        elif layer.kind == "conv2d":
            pi -= 1
            grad = _activation_grad(grad, out, layer.activation)
            grads[pi], grad = _conv_backward(x, net.params[pi], grad, layer.padding)
        elif layer.kind == "flatten":
            grad = grad.reshape(x.shape)
        elif layer.kind == "maxpool2d":
            grad = _maxpool_backward(x, out, grad, layer.window, layer.stride)
        else:
            grad = _avgpool_backward(x, grad, layer.window, layer.stride)
    return grads


# --------------------------------------------------------------------------
# optimizers


@dataclass(frozen=True)
class AdamState:
    m: tuple
    v: tuple
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7

    @classmethod
    def for_network(cls, net: Network, lr=0.001, beta1=0.9, beta2=0.999, epsilon=1e-7):
        zeros = tuple(np.zeros_like(p) for p in net.params)
        return cls(zeros, zeros, 0, lr, beta1, beta2, epsilon)


def adam_update(net: Network, grads, state: AdamState):
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    m = tuple(b1 * mi + (1 - b1) * g for mi, g in zip(state.m, grads))
    v = tuple(b2 * vi + (1 - b2) * g * g for vi, g in zip(state.v, grads))
    c1, c2 = 1 - b1 ** t, 1 - b2 ** t
    params = tuple(
        (p - state.lr * (mi / c1) / (np.sqrt(vi / c2) + state.epsilon)).astype(p.dtype)
        for p, mi, vi in zip(net.params, m, v))
    return Network(net.spec, params), AdamState(m, v, t, state.lr, b1, b2, state.epsilon)


def sgd_update(net: Network, grads, lr: float) -> Network:
    return Network(net.spec, tuple((p - lr * g).astype(p.dtype) for p, g in zip(net.params, grads)))


# --------------------------------------------------------------------------
# training loop


@dataclass(frozen=True)
class BaselineConfig:
    optimizer: str = "adam"
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    epochs: int = 3
    max_steps: int | None = None
    batch_size: int = 32
    eval_every: int = 1


def train_step(net, images, labels, config: BaselineConfig, state=None):
    probs, cache = forward_with_cache(net, images)
    grads = backprop(net, cache, labels)
    if config.optimizer == "adam":
        if state is None:
            state = AdamState.for_network(net, config.learning_rate, config.beta1, config.beta2, config.epsilon)
        net, state = adam_update(net, grads, state)
    elif config.optimizer == "sgd":
        net = sgd_update(net, grads, config.learning_rate)
    else:
        raise ContractError(f"unknown optimizer {config.optimizer!r}")
    return net, state


def train_bp(config: BaselineConfig, train: Dataset, eval_set: Dataset, seed: int,
             init: Network | None = None, spec: NetworkSpec | None = None,
             eval_batch_size: int = 32) -> RunHistory:
    """Mini-batch training; one metrics row per ``eval_every`` optimizer steps.

    ``evaluations_so_far`` counts the initial network plus one per step, so
    curves share the x axis convention of the GA runs.
    """
    if init is None:
        if spec is None:
            raise ContractError("pass an initial network or an architecture")
        init = glorot_init(spec, seed)
    net = init
    state = None
    t0 = time.perf_counter()

    def record(step):
        acc, loss = evaluate(net, eval_set.images, eval_set.labels, eval_batch_size)
        return MetricsRecord(step, step + 1, acc, acc, acc, loss, time.perf_counter() - t0)

    records = [record(0)]
    step = 0
    for epoch in range(config.epochs):
        for images, labels in batches(train, config.batch_size, seed=[seed, epoch]):
            net, state = train_step(net, images, labels, config, state)
            step += 1
            if step % config.eval_every == 0:
                records.append(record(step))
            if config.max_steps is not None and step >= config.max_steps:
                break
        if config.max_steps is not None and step >= config.max_steps:
            break
    if records[-1].generation_index != step:
        records.append(record(step))
    return RunHistory(records, population=None, network=net)
