"""Small fully connected networks with hand-written backpropagation.

Parameters live in plain ``dict[str, ndarray]`` objects so that training code
can copy, compare and checkpoint them without touching the architecture.
"""

import json
import struct

import numpy as np

from .exceptions import ValidationError

LEAK = 0.2
OUTPUTS = ("linear", "tanh", "sigmoid", "softmax")


def sigmoid(a):
    out = np.empty_like(a, dtype=np.float64)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def softmax(a):
    a = a - a.max(axis=-1, keepdims=True)
    e = np.exp(a)
    return e / e.sum(axis=-1, keepdims=True)


class Network:
    """MLP whose first layer sees ``[x, code_embedding, label_embedding]``.

    ``forward`` returns the post-activation output for ``linear``/``tanh``
    heads and raw logits for ``sigmoid``/``softmax`` heads, so that losses can
    work on logits directly.
    """

    def __init__(self, in_dim, out_dim, hidden=(64, 64), n_codes=0, n_classes=0,
                 embed_dim=8, output="linear"):
        if output not in OUTPUTS:
            raise ValidationError(f"output must be one of {OUTPUTS}")
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.n_codes = int(n_codes)
        self.n_classes = int(n_classes)
        self.embed_dim = int(embed_dim)
        self.output = output

    @property
    def n_layers(self):
        return len(self.hidden) + 1

    def config(self):
        return {
            "in_dim": self.in_dim, "out_dim": self.out_dim, "hidden": list(self.hidden),
            "n_codes": self.n_codes, "n_classes": self.n_classes,
            "embed_dim": self.embed_dim, "output": self.output,
        }

    @classmethod
    def from_config(cls, cfg):
        return cls(**cfg)

    def _first_width(self):
        width = self.in_dim
        if self.n_codes:
            width += self.embed_dim
        if self.n_classes:
            width += self.embed_dim
        return width

    def init_params(self, rng):
        params = {}
        if self.n_codes:
            params["code_embed"] = rng.uniform(-1.0, 1.0, (self.n_codes, self.embed_dim))
        if self.n_classes:
            params["label_embed"] = rng.uniform(-1.0, 1.0, (self.n_classes, self.embed_dim))
        widths = (self._first_width(),) + self.hidden + (self.out_dim,)
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            params[f"W{i}"] = rng.uniform(-bound, bound, (fan_in, fan_out))
            params[f"b{i}"] = rng.uniform(-bound, bound, fan_out)
        return params

    def _input(self, params, x, codes, labels):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValidationError(f"expected input of shape (n, {self.in_dim}), got {x.shape}")
        parts = [x]
        if self.n_codes:
            if codes is None:
                raise ValidationError("this network needs membership codes")
            codes = np.asarray(codes, dtype=np.int64).reshape(-1)
            if codes.shape != (x.shape[0],):
                raise ValidationError("one code per row is required")
            if codes.size and (codes.min() < 1 or codes.max() > self.n_codes):
                raise ValidationError(f"codes must lie in 1..{self.n_codes}")
            parts.append(params["code_embed"][codes - 1])
        if self.n_classes:
            if labels is None:
                raise ValidationError("this network needs class labels")
            labels = np.asarray(labels, dtype=np.int64).reshape(-1)
            if labels.shape != (x.shape[0],):
                raise ValidationError("one label per row is required")
            if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
                raise ValidationError(f"labels must lie in 0..{self.n_classes - 1}")
            parts.append(params["label_embed"][labels])
        return np.concatenate(parts, axis=1) if len(parts) > 1 else x, codes, labels

    def forward(self, params, x, codes=None, labels=None):
        h, codes, labels = self._input(params, x, codes, labels)
        inputs, pre = [], []
        for i in range(self.n_layers):
            inputs.append(h)
            a = h @ params[f"W{i}"] + params[f"b{i}"]
            pre.append(a)
            if i < self.n_layers - 1:
                h = np.where(a > 0, a, LEAK * a)
            else:
                h = np.tanh(a) if self.output == "tanh" else a
        cache = {"inputs": inputs, "pre": pre, "out": h, "codes": codes, "labels": labels}
        return h, cache

    def predict(self, params, x, codes=None, labels=None):
        out, _ = self.forward(params, x, codes, labels)
        if self.output == "sigmoid":
            return sigmoid(out[:, 0])
        if self.output == "softmax":
            return softmax(out)
        return out

    def embed(self, params, x, codes=None, labels=None):
        """Activations of the last hidden layer."""
        _, cache = self.forward(params, x, codes, labels)
        return cache["inputs"][-1]

    def backward(self, params, cache, grad_out):
        """Gradients of a scalar w.r.t. params and the raw input ``x``."""
        g = np.asarray(grad_out, dtype=np.float64)
        if self.output == "tanh":
            g = g * (1.0 - cache["out"] ** 2)
        grads = {}
        for i in reversed(range(self.n_layers)):
            h = cache["inputs"][i]
            grads[f"W{i}"] = h.T @ g
            grads[f"b{i}"] = g.sum(axis=0)
            g = g @ params[f"W{i}"].T
            if i > 0:
                a = cache["pre"][i - 1]
                g = g * np.where(a > 0, 1.0, LEAK)
        grad_x = g[:, :self.in_dim]
        col = self.in_dim
        if self.n_codes:
            ge = np.zeros_like(params["code_embed"])
            np.add.at(ge, cache["codes"] - 1, g[:, col:col + self.embed_dim])
            grads["code_embed"] = ge
            col += self.embed_dim
        if self.n_classes:
            gl = np.zeros_like(params["label_embed"])
            np.add.at(gl, cache["labels"], g[:, col:col + self.embed_dim])
            grads["label_embed"] = gl
        return grads, grad_x


def n_parameters(params):
    return int(sum(v.size for v in params.values()))


def copy_params(params):
    return {k: v.copy() for k, v in params.items()}


def params_equal(a, b):
    return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)


class Adam:
    """Adam with bias correction. ``step`` updates ``params`` in place."""

    def __init__(self, learning_rate=2e-4, beta1=0.5, beta2=0.999, eps=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads, ascend=False):
        self.t += 1
        lr = self.learning_rate * np.sqrt(1 - self.beta2 ** self.t) / (1 - self.beta1 ** self.t)
        sign = 1.0 if ascend else -1.0
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            params[k] += sign * lr * self.m[k] / (np.sqrt(self.v[k]) + self.eps)


# Checkpoint layout, little-endian:
#   b"PGCK" | u32 version | u32 meta_len | meta JSON (utf-8) | u32 n_arrays |
#   per array: u16 name_len | name | u8 ndim | u32 dims[ndim] | f32 data
_CK_MAGIC = b"PGCK"
_CK_VERSION = 1


def save_checkpoint(path, params, meta=None):
    meta_blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CK_MAGIC)
        fh.write(struct.pack("<II", _CK_VERSION, len(meta_blob)))
        fh.write(meta_blob)
        fh.write(struct.pack("<I", len(params)))
        for name, arr in params.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _CK_MAGIC:
        raise ValidationError(f"{path}: not a checkpoint file")
    version, meta_len = struct.unpack_from("<II", blob, 4)
    if version != _CK_VERSION:
        raise ValidationError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    meta = json.loads(blob[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    params = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f4", count=size, offset=pos).reshape(shape)
        pos += 4 * size
        params[name] = arr.astype(np.float64)
    return params, meta
