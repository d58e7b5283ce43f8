"""Minimal CNN forward pass over NHWC numpy arrays.

Tensors are plain ``numpy.ndarray`` objects (float32 unless a caller asks for
float64, which the gradient checker does). Conv filter banks are stored
filter-major as ``[filters, kh, kw, in_channels]`` so that one filter is one
contiguous block; dense weights are ``[in_features, out_features]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import truncnorm

from .errors import StructuralError

ACTIVATIONS = ("relu", "sigmoid", "softmax", "linear")
PROB_EPSILON = 1e-7


# --------------------------------------------------------------------------
# layer descriptions


@dataclass(frozen=True)
class Conv2D:
    filters: int
    kernel: tuple[int, int]
    in_channels: int | None = None
    padding: str = "same"
    activation: str = "relu"
    kind: ClassVar[str] = "conv2d"

    @property
    def param_shape(self):
        kh, kw = self.kernel
        return (self.filters, kh, kw, self.in_channels)

    @property
    def fans(self):
        kh, kw = self.kernel
        return kh * kw * self.in_channels, kh * kw * self.filters


@dataclass(frozen=True)
class MaxPool2D:
    window: int = 2
    stride: int | None = None
    kind: ClassVar[str] = "maxpool2d"


@dataclass(frozen=True)
class AvgPool2D:
    window: int = 2
    stride: int | None = None
    kind: ClassVar[str] = "avgpool2d"


@dataclass(frozen=True)
class Flatten:
    kind: ClassVar[str] = "flatten"


@dataclass(frozen=True)
class Dense:
    units: int
    in_features: int | None = None
    activation: str = "relu"
    kind: ClassVar[str] = "dense"

    @property
    def param_shape(self):
        return (self.in_features, self.units)

    @property
    def fans(self):
        return self.in_features, self.units


LayerSpec = Union[Conv2D, MaxPool2D, AvgPool2D, Flatten, Dense]
PARAM_KINDS = ("conv2d", "dense")


def _pool_out(size, window, stride):
    return (size - window) // stride + 1


def _same_pads(kernel):
    # TensorFlow convention: the odd extra row/column goes after
    before = (kernel - 1) // 2
    return before, kernel - 1 - before


def _check_activation(name):
    if name not in ACTIVATIONS:
        raise StructuralError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class NetworkSpec:
    """An ordered, validated layer stack.

    ``in_channels``/``in_features`` left as ``None`` are inferred; explicit
    values that disagree with the incoming shape raise ``StructuralError``.
    """

    name: str
    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]
    class_count: int
    shapes: tuple[tuple[int, ...], ...] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise StructuralError(f"input shape must be (h, w, c), got {self.input_shape}")
        resolved = []
        shapes = [self.input_shape]
        shape = self.input_shape
        flattened = False
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv2D):
                if flattened:
                    raise StructuralError(f"layer {i}: Conv2D after Flatten")
                h, w, c = shape
                if layer.in_channels is not None and layer.in_channels != c:
                    raise StructuralError(
                        f"layer {i}: Conv2D expects {layer.in_channels} channels, input has {c}")
                if layer.padding not in ("same", "valid"):
                    raise StructuralError(f"layer {i}: unknown padding {layer.padding!r}")
                _check_activation(layer.activation)
                kh, kw = layer.kernel
                if layer.padding == "valid":
                    if kh > h or kw > w:
                        raise StructuralError(f"layer {i}: kernel larger than input")
                    h, w = h - kh + 1, w - kw + 1
                layer = Conv2D(layer.filters, (kh, kw), c, layer.padding, layer.activation)
                shape = (h, w, layer.filters)
            elif isinstance(layer, (MaxPool2D, AvgPool2D)):
                if flattened:
                    raise StructuralError(f"layer {i}: pooling after Flatten")
                h, w, c = shape
                stride = layer.stride or layer.window
                if layer.window > h or layer.window > w:
                    raise StructuralError(f"layer {i}: pool window {layer.window} larger than input {h}x{w}")
                layer = type(layer)(layer.window, stride)
                shape = (_pool_out(h, layer.window, stride), _pool_out(w, layer.window, stride), c)
            elif isinstance(layer, Flatten):
                if flattened:
                    raise StructuralError(f"layer {i}: second Flatten")
                flattened = True
                shape = (int(np.prod(shape)),)
            elif isinstance(layer, Dense):
                if not flattened:
                    raise StructuralError(f"layer {i}: Dense before Flatten")
                (n,) = shape
                if layer.in_features is not None and layer.in_features != n:
                    raise StructuralError(
                        f"layer {i}: Dense expects {layer.in_features} inputs, got {n}")
                _check_activation(layer.activation)
                layer = Dense(layer.units, n, layer.activation)
                shape = (layer.units,)
            else:
                raise StructuralError(f"layer {i}: unsupported layer {layer!r}")
            resolved.append(layer)
            shapes.append(shape)
        if not flattened:
            raise StructuralError("network has no Flatten layer")
        last = resolved[-1] if resolved else None
        if not isinstance(last, Dense) or last.units != self.class_count:
            raise StructuralError(f"last layer must be Dense with {self.class_count} units")
        if last.activation != "softmax":
            raise StructuralError("last Dense layer must use softmax")
        object.__setattr__(self, "layers", tuple(resolved))
        object.__setattr__(self, "shapes", tuple(shapes))

    @property
    def param_layers(self):
        return [layer for layer in self.layers if layer.kind in PARAM_KINDS]

    @property
    def param_shapes(self):
        return [layer.param_shape for layer in self.param_layers]

    @property
    def param_count(self):
        return sum(int(np.prod(s)) for s in self.param_shapes)

    @property
    def flatten_index(self):
        return next(i for i, layer in enumerate(self.layers) if layer.kind == "flatten")

    def to_dict(self):
        layers = []
        for layer in self.layers:
            entry = {"type": layer.kind}
            if isinstance(layer, Conv2D):
                entry.update(filters=layer.filters, kernel=list(layer.kernel),
                             padding=layer.padding, activation=layer.activation)
            elif isinstance(layer, (MaxPool2D, AvgPool2D)):
                entry.update(window=layer.window, stride=layer.stride)
            elif isinstance(layer, Dense):
                entry.update(units=layer.units, activation=layer.activation)
            layers.append(entry)
        return {"name": self.name, "input_shape": list(self.input_shape),
                "class_count": self.class_count, "layers": layers}

    @classmethod
    def from_dict(cls, doc):
        builders = {
            "conv2d": lambda d: Conv2D(int(d["filters"]), _kernel(d["kernel"]),
                                       padding=d.get("padding", "same"),
                                       activation=d.get("activation", "relu")),
            "maxpool2d": lambda d: MaxPool2D(int(d.get("window", 2)), d.get("stride")),
            "avgpool2d": lambda d: AvgPool2D(int(d.get("window", 2)), d.get("stride")),
            "flatten": lambda d: Flatten(),
            "dense": lambda d: Dense(int(d["units"]), activation=d.get("activation", "relu")),
        }
        try:
            layers = tuple(builders[d["type"]](d) for d in doc["layers"])
            return cls(doc.get("name", "inline"), tuple(doc["input_shape"]), layers,
                       int(doc["class_count"]))
        except KeyError as exc:
            raise StructuralError(f"architecture description is missing {exc}") from None


def _kernel(value):
    if isinstance(value, int):
        return (value, value)
    return tuple(int(v) for v in value)


@dataclass(frozen=True, eq=False)
class Network:
    """A spec plus one parameter tensor per Conv2D/Dense layer (read-only)."""

    spec: NetworkSpec
    params: tuple[np.ndarray, ...]

    def __post_init__(self):
        expected = self.spec.param_shapes
        if len(self.params) != len(expected):
            raise StructuralError(f"expected {len(expected)} parameter tensors, got {len(self.params)}")
        frozen = []
        for i, (p, shape) in enumerate(zip(self.params, expected)):
            p = np.asarray(p)
            if p.shape != tuple(shape):
                raise StructuralError(f"parameter {i} has shape {p.shape}, expected {tuple(shape)}")
            if p.flags.writeable:
                p = p.copy()
                p.flags.writeable = False
            frozen.append(p)
        object.__setattr__(self, "params", tuple(frozen))

    @property
    def dtype(self):
        return self.params[0].dtype

    def astype(self, dtype):
        return Network(self.spec, tuple(p.astype(dtype) for p in self.params))

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return self.spec == other.spec and all(
            a.dtype == b.dtype and np.array_equal(a, b) for a, b in zip(self.params, other.params))


# --------------------------------------------------------------------------
# initialisation


def glorot_stddev(layer):
    fan_in, fan_out = layer.fans
    return float(np.sqrt(2.0 / (fan_in + fan_out)))


def truncated_normal(rng, stddev, size, bound=2.0):
    """Zero-mean normal of scale ``stddev`` truncated at ``±bound·stddev``."""
    return truncnorm.rvs(-bound, bound, scale=stddev, size=size, random_state=rng)


def glorot_init(spec: NetworkSpec, seed, dtype=np.float32) -> Network:
    rng = np.random.default_rng(seed)
    params = [truncated_normal(rng, glorot_stddev(layer), layer.param_shape).astype(dtype)
              for layer in spec.param_layers]
    return Network(spec, tuple(params))


def zeros_like_spec(spec: NetworkSpec, dtype=np.float32) -> Network:
    return Network(spec, tuple(np.zeros(s, dtype) for s in spec.param_shapes))


# --------------------------------------------------------------------------
# activations


def relu(x):
    return np.maximum(x, 0)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x)))


def softmax(logits, axis=-1):
    z = np.asarray(logits)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def activate(x, name, inplace=False):
    if name == "relu":
        return np.maximum(x, 0, out=x) if inplace else relu(x)
    if name == "sigmoid":
        return sigmoid(x)
    if name == "softmax":
        return softmax(x)
    if name == "linear":
        return x
    raise StructuralError(f"unknown activation {name!r}")


# --------------------------------------------------------------------------
# layer kernels


def pad_same(x, kh, kw):
    (t, b), (l, r) = _same_pads(kh), _same_pads(kw)
    if t == b == l == r == 0:
        return x
    return np.pad(x, ((0, 0), (t, b), (l, r), (0, 0)))


def im2col(x, kh, kw):
    """``[n, h, w, c]`` (already padded) -> ``[n*ho*wo, kh*kw*c]`` patches."""
    n, h, w, c = x.shape
    ho, wo = h - kh + 1, w - kw + 1
    if kh == kw == 1:
        return x.reshape(n * h * w, c)
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))  # n, ho, wo, c, kh, kw
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n * ho * wo, kh * kw * c)


def conv2d_linear(x, filters, padding="same"):
    if x.ndim != 4:
        raise StructuralError(f"conv2d expects an [n, h, w, c] input, got shape {x.shape}")
    f, kh, kw, c = filters.shape
    if x.shape[3] != c:
        raise StructuralError(f"conv2d: input has {x.shape[3]} channels, filters expect {c}")
    if padding == "same":
        x = pad_same(x, kh, kw)
    elif padding != "valid":
        raise StructuralError(f"unknown padding {padding!r}")
    n, h, w, _ = x.shape
    ho, wo = h - kh + 1, w - kw + 1
    if ho < 1 or wo < 1:
        raise StructuralError("conv2d: kernel larger than input")
    out = im2col(x, kh, kw) @ filters.reshape(f, kh * kw * c).T
    return out.reshape(n, ho, wo, f)


def conv2d_forward(x, filters, padding="same", activation="relu"):
    return activate(conv2d_linear(np.asarray(x), np.asarray(filters), padding), activation, inplace=True)


def _pool_windows(x, window, stride):
    n, h, w, c = x.shape
    if window > h or window > w:
        raise StructuralError(f"pool window {window} larger than input {h}x{w}")
    ho, wo = _pool_out(h, window, stride), _pool_out(w, window, stride)
    for i in range(window):
        for j in range(window):
            yield i, j, x[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride, :]


def maxpool2d(x, window=2, stride=None):
    x = np.asarray(x)
    out = None
    for _, _, view in _pool_windows(x, window, stride or window):
        out = view.copy() if out is None else np.maximum(out, view)
    return out


def avgpool2d(x, window=2, stride=None):
    x = np.asarray(x)
    out = None
    for _, _, view in _pool_windows(x, window, stride or window):
        out = view.copy() if out is None else out + view
    return out / np.asarray(window * window, dtype=out.dtype)


def dense_forward(x, weights, activation="relu"):
    x = np.asarray(x)
    weights = np.asarray(weights)
    if x.shape[-1] != weights.shape[0]:
        raise StructuralError(f"dense: input has {x.shape[-1]} features, weights expect {weights.shape[0]}")
    return activate(x @ weights, activation, inplace=True)


# --------------------------------------------------------------------------
# whole network


def forward_layers(net: Network, batch, cache=None):
    """Run every layer; when ``cache`` is a list, append each layer's output to it."""
    spec = net.spec
    x = np.asarray(batch, dtype=net.dtype)
    if x.ndim == 3:
        x = x[None]
    if x.shape[1:] != spec.input_shape:
        raise StructuralError(f"batch shape {x.shape[1:]} does not match input {spec.input_shape}")
    if cache is not None:
        cache.append(x)
    params = iter(net.params)
    for layer in spec.layers:
        if layer.kind == "conv2d":
            x = conv2d_forward(x, next(params), layer.padding, layer.activation)
        elif layer.kind == "maxpool2d":
            x = maxpool2d(x, layer.window, layer.stride)
        elif layer.kind == "avgpool2d":
            x = avgpool2d(x, layer.window, layer.stride)
        elif layer.kind == "flatten":
            x = x.reshape(x.shape[0], -1)
        else:
            x = dense_forward(x, next(params), layer.activation)
        if cache is not None:
            cache.append(x)
    return x


def network_forward(net: Network, batch) -> np.ndarray:
    """Class probabilities ``[n, class_count]`` for an ``[n, h, w, c]`` batch."""
    return forward_layers(net, batch)


# --------------------------------------------------------------------------
# scoring


def categorical_crossentropy(probs, labels) -> float:
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    picked = probs[np.arange(len(labels)), labels]
    return float(np.mean(-np.log(np.clip(picked.astype(np.float64), PROB_EPSILON, 1.0))))


def accuracy(probs, labels) -> float:
    # np.argmax returns the first maximum, so ties go to the lowest class index
    return float(np.mean(np.argmax(probs, axis=1) == np.asarray(labels)))


def evaluate(net: Network, images, labels, batch_size=32):
    """(accuracy, mean cross-entropy) of ``net`` over a labelled set, batch by batch."""
    n = len(labels)
    correct = 0
    loss_sum = 0.0
    for start in range(0, n, batch_size):
        probs = network_forward(net, images[start:start + batch_size])
        y = labels[start:start + batch_size]
        correct += int(np.sum(np.argmax(probs, axis=1) == y))
        picked = probs[np.arange(len(y)), y].astype(np.float64)
        loss_sum += float(np.sum(-np.log(np.clip(picked, PROB_EPSILON, 1.0))))
    return correct / n, loss_sum / n


# --------------------------------------------------------------------------
# architecture registry


def mnist_custom() -> NetworkSpec:
    # Reconstructed channel plan 1->40->40->5->1 with 2x2 kernels: the source table's
    # conv2d_2/conv2d_3 counts cannot all hold at once, see MNIST_PARAM_NOTE.
    return NetworkSpec(
        "mnist-custom", (28, 28, 1),
        (Conv2D(40, (2, 2)), MaxPool2D(2),
         Conv2D(40, (2, 2)), MaxPool2D(2),
         Conv2D(5, (2, 2)), MaxPool2D(2),
         Conv2D(1, (2, 2)), Flatten(),
         Dense(40), Dense(10, activation="softmax")),
        10)


MNIST_PARAM_NOTE = (
    "mnist-custom holds 8140 scalars (160 + 6400 + 800 + 20 + 360 + 400), not the "
    "4540 printed for the original model: conv2d_2 and conv2d_3 see 40 input channels here."
)


def lenet_cifar10() -> NetworkSpec:
    # conv2d_1 = 6 x 5 x 5 x 1 = 150 weights, so the network reads single-channel 32x32 images
    return NetworkSpec(
        "lenet-cifar10", (32, 32, 1),
        (Conv2D(6, (5, 5)), AvgPool2D(2),
         Conv2D(16, (5, 5)), AvgPool2D(2),
         Conv2D(120, (5, 5)), AvgPool2D(2),
         Flatten(),
         Dense(120), Dense(84), Dense(10, activation="softmax")),
        10)


def tiny(classes=2, size=16) -> NetworkSpec:
    """Small net for synthetic desk-scale runs."""
    return NetworkSpec(
        f"tiny-{classes}x{size}", (size, size, 1),
        (Conv2D(4, (3, 3)), MaxPool2D(2),
         Conv2D(4, (3, 3)), MaxPool2D(2),
         Flatten(),
         Dense(8), Dense(classes, activation="softmax")),
        classes)


ARCHITECTURES = {
    "mnist-custom": mnist_custom,
    "lenet-cifar10": lenet_cifar10,
    "tiny": tiny,
}


def get_architecture(name_or_doc: Union[str, dict, NetworkSpec]) -> NetworkSpec:
    if isinstance(name_or_doc, NetworkSpec):
        return name_or_doc
    if isinstance(name_or_doc, dict):
        try:
            return NetworkSpec.from_dict(name_or_doc)
        except StructuralError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise StructuralError(f"malformed architecture description: {exc!r}") from None
    if name_or_doc in ARCHITECTURES:
        return ARCHITECTURES[name_or_doc]()
    if isinstance(name_or_doc, str) and name_or_doc.startswith("tiny-"):
        try:
            classes, size = (int(v) for v in name_or_doc[5:].split("x"))
        except ValueError:
            raise StructuralError(f"tiny architectures are named tiny-<classes>x<size>, got {name_or_doc!r}") from None
        return tiny(classes, size)
    raise StructuralError(f"unknown architecture {name_or_doc!r}; known: {sorted(ARCHITECTURES)}")


def describe(spec: NetworkSpec) -> str:
    """Keras-style summary table."""
    lines = [f"{'Layer':<14}{'Output shape':<22}{'Params':>10}"]
    for layer, shape in zip(spec.layers, spec.shapes[1:]):
        n = int(np.prod(layer.param_shape)) if layer.kind in PARAM_KINDS else 0
        lines.append(f"{layer.kind:<14}{str((None,) + tuple(shape)):<22}{n:>10}")
    lines.append(f"Total parameters : {spec.param_count}")
    return "\n".join(lines)
