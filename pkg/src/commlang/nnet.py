"""Layers, optimizer, and checkpoint format for the fixed agent architecture."""

from __future__ import annotations

import io
import json
import zipfile

import numpy as np

from .tensor import (Tensor, add, log_softmax, matmul, mul, parameter,
                     sigmoid, tanh)


def uniform_init(rng: np.random.Generator, shape, fan_in: int, dtype=np.float64,
                 name: str | None = None) -> Tensor:
    """Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], the recurrent-net default."""
    bound = 1.0 / np.sqrt(fan_in)
    return parameter(rng.uniform(-bound, bound, size=shape).astype(dtype), name=name)


class Linear:
    """y = x @ W + b with W of shape (n_in, n_out)."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 dtype=np.float64, name: str = "linear"):
        self.W = uniform_init(rng, (n_in, n_out), n_in, dtype, f"{name}.W")
        self.b = uniform_init(rng, (n_out,), n_in, dtype, f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.W), self.b)

    def parameters(self) -> list[Tensor]:
        return [self.W, self.b]


class GruCell:
    """Single gated recurrent cell.

    Convention used throughout: update gate z, reset gate r, candidate
    n = tanh(x Wn + (r*h) Un + bn), and output h' = (1-z)*n + z*h, so with
    all-zero parameters one step halves the hidden state.
    """

    GATES = ("z", "r", "n")

    def __init__(self, n_in: int, n_hidden: int, rng: np.random.Generator,
                 dtype=np.float64, name: str = "gru"):
        self.n_in = n_in
        self.n_hidden = n_hidden
        for gate in self.GATES:
            setattr(self, f"W{gate}", uniform_init(rng, (n_in, n_hidden), n_in,
                                                   dtype, f"{name}.W{gate}"))
            setattr(self, f"U{gate}", uniform_init(rng, (n_hidden, n_hidden), n_hidden,
                                                   dtype, f"{name}.U{gate}"))
            setattr(self, f"b{gate}", uniform_init(rng, (n_hidden,), n_hidden,
                                                   dtype, f"{name}.b{gate}"))

    def step(self, x: Tensor, h: Tensor) -> Tensor:
        """One recurrence step for a batch: x (B, n_in), h (B, n_hidden)."""
        if x.data.shape[-1] != self.n_in or h.data.shape[-1] != self.n_hidden:
            raise ValueError(f"gru step dims {x.data.shape}/{h.data.shape} do not "
                             f"match ({self.n_in}, {self.n_hidden})")
        z = sigmoid(add(add(matmul(x, self.Wz), matmul(h, self.Uz)), self.bz))
        r = sigmoid(add(add(matmul(x, self.Wr), matmul(h, self.Ur)), self.br))
        n = tanh(add(add(matmul(x, self.Wn), matmul(mul(r, h), self.Un)), self.bn))
        return add(mul(add(1.0, -z), n), mul(z, h))

    def parameters(self) -> list[Tensor]:
        out = []
        for gate in self.GATES:
            out += [getattr(self, f"W{gate}"), getattr(self, f"U{gate}"),
                    getattr(self, f"b{gate}")]
        return out


def softmax_cross_entropy(logits: Tensor, target: int) -> Tensor:
    """-log softmax(logits)[target] for a single score vector."""
    logits = logits if isinstance(logits, Tensor) else Tensor(np.asarray(logits))
    k = logits.data.shape[-1]
    if not 0 <= target < k:
        raise IndexError(f"target {target} out of range for {k} classes")
    onehot = np.zeros(logits.data.shape, dtype=logits.data.dtype)
    onehot[..., target] = 1.0
    return mul(mul(log_softmax(logits), onehot).sum(), -1.0)


class Adam:
    """Adam with bias correction; ``step()`` consumes and zeroes gradients."""

    def __init__(self, params: list[Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 clip_norm: float | None = None):
        self.params = list(params)
        if len({id(p) for p in self.params}) != len(self.params):
            raise ValueError("duplicate parameter in optimizer")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm  # off by default; kept as a knob only
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        if self.clip_norm is not None:
            self._clip()
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad if p.grad is not None else 0.0
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.grad = None

    def _clip(self):
        total = 0.0
        for p in self.params:
            if p.grad is not None:
                total += float(np.sum(np.square(p.grad)))
        norm = np.sqrt(total)
        if norm > self.clip_norm:
            scale = self.clip_norm / norm
            for p in self.params:
                if p.grad is not None:
                    p.grad *= scale


def save_checkpoint(path, tensors: dict[str, Tensor | np.ndarray], meta: dict):
    """Write named arrays plus a JSON manifest; round-trips bit-exactly."""
    manifest = {"meta": meta, "tensors": {}}
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name, t in tensors.items():
            arr = t.data if isinstance(t, Tensor) else np.asarray(t)
            manifest["tensors"][name] = {"shape": list(arr.shape),
                                         "dtype": str(arr.dtype)}
            buf = io.BytesIO()
            np.save(buf, arr, allow_pickle=False)
            zf.writestr(f"tensors/{name}.npy", buf.getvalue())
        zf.writestr("manifest.json", json.dumps(manifest, sort_keys=True, indent=1))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with zipfile.ZipFile(path, "r") as zf:
        manifest = json.loads(zf.read("manifest.json"))
        tensors = {}
        for name, spec in manifest["tensors"].items():
            arr = np.load(io.BytesIO(zf.read(f"tensors/{name}.npy")),
                          allow_pickle=False)
            if list(arr.shape) != spec["shape"] or str(arr.dtype) != spec["dtype"]:
                raise ValueError(f"manifest mismatch for tensor {name!r}")
            tensors[name] = arr
    return tensors, manifest["meta"]
