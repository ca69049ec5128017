"""Reference victim models and the differentiable-model contract.

Three desk-scale victims are shipped: a ReLU MLP classifier, a two-conv CNN
classifier, and a small encoder-decoder segmenter with skip concatenation.
All parameters are float64; `forward` is pure (same model + batch give
bit-identical output). Checkpoints use a self-describing binary container
(see `save_checkpoint`).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag

CHECKPOINT_MAGIC = b"SMCK\x01"


@dataclass
class Prediction:
    """Softmax probabilities: (N, K) for classification, (N, K, H, W) for
    segmentation."""
    probs: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.shape[1] != self.num_classes:
            raise ValueError("class axis does not match num_classes")
        sums = self.probs.sum(axis=1)
        if not np.allclose(sums, 1.0, atol=1e-9):
            raise ValueError("probabilities do not sum to 1 on the class axis")
        if (self.probs < 0).any():
            raise ValueError("negative probability encountered")

    @property
    def is_segmentation(self) -> bool:
        return self.probs.ndim == 4


def _he_init(rng, fan_in, shape):
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class Model:
    """Base class: ordered named parameters plus a graph-building forward.

    `forward_graph` maps an input Tensor (N, C, H, W) to logits with the
    class axis at position 1. Subclasses define `arch` (a JSON-serializable
    descriptor) and `input_shape` (C, H, W); segmenters set
    `segmentation = True`.
    """

    segmentation = False

    def __init__(self):
        self.params: dict[str, ag.Tensor] = {}

    def param(self, name, array):
        t = ag.Tensor(np.asarray(array, dtype=np.float64))
        self.params[name] = t
        return t

    def forward_graph(self, x: ag.Tensor) -> ag.Tensor:
        raise NotImplementedError

    def check_batch(self, batch: np.ndarray):
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 4:
            raise ValueError(f"expected (N, C, H, W) batch, got shape {batch.shape}")
        c, h, w = self.input_shape
        if batch.shape[1] != c:
            raise ValueError(
                f"batch has {batch.shape[1]} channels, model expects {c}")
        if not self.spatial_free and batch.shape[2:] != (h, w):
            raise ValueError(
                f"batch spatial dims {batch.shape[2:]} != model input {(h, w)}")
        return batch

    # Fully-convolutional models accept any even spatial extent.
    spatial_free = False

    def parameter_vector(self) -> np.ndarray:
        return np.concatenate([t.data.ravel() for t in self.params.values()])

    def set_parameter_vector(self, vec: np.ndarray):
        off = 0
        for t in self.params.values():
            n = t.data.size
            t.data = vec[off:off + n].reshape(t.data.shape).astype(np.float64)
            off += n
        if off != vec.size:
            raise ValueError("parameter vector length mismatch")


class MlpClassifier(Model):
    """784 -> hidden -> K fully-connected ReLU classifier."""

    def __init__(self, in_shape=(1, 28, 28), hidden=256, num_classes=10, seed=0):
        super().__init__()
        self.input_shape = tuple(in_shape)
        self.hidden = hidden
        self.num_classes = num_classes
        d = int(np.prod(in_shape))
        rng = np.random.default_rng(seed)
        self.param("w1", _he_init(rng, d, (d, hidden)))
        self.param("b1", np.zeros(hidden))
        self.param("w2", _he_init(rng, hidden, (hidden, num_classes)))
        self.param("b2", np.zeros(num_classes))

    @property
    def arch(self):
        return {"kind": "mlp", "in_shape": list(self.input_shape),
                "hidden": self.hidden, "num_classes": self.num_classes}

    def forward_graph(self, x):
        n = x.data.shape[0]
        h = ag.relu(ag.reshape(x, (n, -1)) @ self.params["w1"] + self.params["b1"])
        return h @ self.params["w2"] + self.params["b2"]


class ConvClassifier(Model):
    """Two 3x3 conv layers (8 and 16 channels) with 2x2 max pooling, then a
    dense readout."""

    def __init__(self, in_shape=(1, 28, 28), num_classes=10, seed=0):
        super().__init__()
        self.input_shape = tuple(in_shape)
        self.num_classes = num_classes
        c, h, w = in_shape
        if h % 4 or w % 4:
            raise ValueError("input spatial dims must be divisible by 4")
        rng = np.random.default_rng(seed)
        self.param("conv1_w", _he_init(rng, c * 9, (8, c, 3, 3)))
        self.param("conv1_b", np.zeros(8))
        self.param("conv2_w", _he_init(rng, 8 * 9, (16, 8, 3, 3)))
        self.param("conv2_b", np.zeros(16))
        flat = 16 * (h // 4) * (w // 4)
        self.param("fc_w", _he_init(rng, flat, (flat, num_classes)))
        self.param("fc_b", np.zeros(num_classes))

    @property
    def arch(self):
        return {"kind": "cnn", "in_shape": list(self.input_shape),
                "num_classes": self.num_classes}

    def forward_graph(self, x):
        n = x.data.shape[0]
        h = ag.maxpool2(ag.relu(ag.conv2d(x, self.params["conv1_w"],
                                          self.params["conv1_b"], pad=1)))
        h = ag.maxpool2(ag.relu(ag.conv2d(h, self.params["conv2_w"],
                                          self.params["conv2_b"], pad=1)))
        h = ag.reshape(h, (n, -1))
        return h @ self.params["fc_w"] + self.params["fc_b"]


class LinearSoftmax(Model):
    """Single dense layer + softmax; analytic gradients make it the
    workhorse for oracle tests and diagnostics."""

    def __init__(self, in_shape, num_classes, seed=0, scale=1.0):
        super().__init__()
        self.input_shape = tuple(in_shape)
        self.num_classes = num_classes
        d = int(np.prod(in_shape))
        rng = np.random.default_rng(seed)
        self.param("w", rng.standard_normal((d, num_classes)) * scale)
        self.param("b", np.zeros(num_classes))

    @property
    def arch(self):
        return {"kind": "linear", "in_shape": list(self.input_shape),
                "num_classes": self.num_classes}

    def forward_graph(self, x):
        n = x.data.shape[0]
        return ag.reshape(x, (n, -1)) @ self.params["w"] + self.params["b"]


class EllipseSegmenter(Model):
    """Small encoder-decoder: two downsamplings, two upsamplings, skip
    concatenation, per-pixel softmax over K classes."""

    segmentation = True
    spatial_free = True

    def __init__(self, in_channels=1, num_classes=2, seed=0):
        super().__init__()
        self.input_shape = (in_channels, 64, 64)
        self.num_classes = num_classes
        rng = np.random.default_rng(seed)

        def conv(name, cin, cout):
            self.param(f"{name}_w", _he_init(rng, cin * 9, (cout, cin, 3, 3)))
            self.param(f"{name}_b", np.zeros(cout))

        conv("enc1", in_channels, 8)
        conv("enc2", 8, 16)
        conv("mid", 16, 16)
        conv("dec1", 32, 16)   # upsampled mid (16) + enc2 skip (16)
        conv("dec2", 24, 8)    # upsampled dec1 (16) + enc1 skip (8)
        conv("head", 8, num_classes)

    @property
    def arch(self):
        return {"kind": "segmenter", "in_channels": self.input_shape[0],
                "num_classes": self.num_classes}

    def _conv(self, name, x):
        return ag.conv2d(x, self.params[f"{name}_w"], self.params[f"{name}_b"], pad=1)

    def forward_graph(self, x):
        h, w = x.data.shape[2], x.data.shape[3]
        if h % 4 or w % 4:
            raise ValueError("segmenter input dims must be divisible by 4")
        e1 = ag.relu(self._conv("enc1", x))
        e2 = ag.relu(self._conv("enc2", ag.maxpool2(e1)))
        m = ag.relu(self._conv("mid", ag.maxpool2(e2)))
        d1 = ag.relu(self._conv("dec1", ag.concat_channels(ag.upsample2(m), e2)))
        d2 = ag.relu(self._conv("dec2", ag.concat_channels(ag.upsample2(d1), e1)))
        return self._conv("head", d2)


def forward(model: Model, batch: np.ndarray) -> Prediction:
    """Evaluate the model on a batch, returning simplex probabilities."""
    batch = model.check_batch(batch)
    logits = model.forward_graph(ag.Tensor(batch))
    if not np.isfinite(logits.data).all():
        raise FloatingPointError("non-finite logits in forward pass")
    probs = ag.softmax(logits, axis=1).data
    return Prediction(probs=probs, num_classes=model.num_classes)


def predict_labels(pred: Prediction) -> np.ndarray:
    """Argmax over the class axis; ties go to the lowest class index."""
    return pred.probs.argmax(axis=1)


def build_model(arch: dict, seed=0) -> Model:
    kind = arch["kind"]
    if kind == "mlp":
        return MlpClassifier(tuple(arch["in_shape"]), arch.get("hidden", 256),
                             arch["num_classes"], seed=seed)
    if kind == "cnn":
        return ConvClassifier(tuple(arch["in_shape"]), arch["num_classes"], seed=seed)
    if kind == "linear":
        return LinearSoftmax(tuple(arch["in_shape"]), arch["num_classes"], seed=seed)
    if kind == "segmenter":
        return EllipseSegmenter(arch["in_channels"], arch["num_classes"], seed=seed)
    raise ValueError(f"unknown architecture kind: {kind!r}")


def save_checkpoint(path, model: Model, seed: int):
    """Binary container: magic "SMCK\\x01", little-endian u64 header length,
    UTF-8 JSON header {arch, seed, tensors: [{name, shape}]}, then the
    tensors' float64 little-endian payloads in listed order."""
    header = {
        "arch": model.arch,
        "seed": int(seed),
        "tensors": [{"name": k, "shape": list(v.data.shape)}
                    for k, v in model.params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for t in model.params.values():
            f.write(t.data.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[Model, int]:
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen))
        model = build_model(header["arch"])
        for spec in header["tensors"]:
            shape = tuple(spec["shape"])
            n = int(np.prod(shape))
            raw = f.read(n * 8)
            if len(raw) != n * 8:
                raise ValueError(f"{path}: truncated tensor {spec['name']}")
            model.params[spec["name"]].data = np.frombuffer(
                raw, dtype="<f8").reshape(shape).astype(np.float64)
    return model, header["seed"]
