"""Minimizing the spectral contrastive loss.

Two routes: full-batch gradient descent on a per-vertex feature table, and
minibatch SGD on a small parametric map evaluated on vertex payloads.
"""

import json
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .contrastive import population_loss
from .errors import Divergence, MalformedPayload, MissingPayload, ShapeMismatch
from .graph import AugmentationGraph

logger = logging.getLogger(__name__)

MAX_HALVINGS = 30
DESCENT_SLACK = 1e-9


@dataclass
class TrainConfig:
    k: int
    learning_rate: float
    max_steps: int = 5000
    grad_tolerance: float = 1e-8
    init_scale: Optional[float] = None
    seed: int = 0
    mode: str = "full_population"
    batch_size: int = 32
    sphere_radius_sq: Optional[float] = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.grad_tolerance <= 0:
            raise ValueError("grad_tolerance must be positive")
        if self.init_scale is None:
            self.init_scale = 0.1 / math.sqrt(self.k)
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")
        if self.mode not in ("full_population", "minibatch"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "minibatch" and self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 in minibatch mode")
        if self.sphere_radius_sq is not None and self.sphere_radius_sq <= 0:
            raise ValueError("sphere_radius_sq must be positive")


def analytic_gradient(g: AugmentationGraph, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.ndim != 2 or f.shape[0] != g.N:
        raise ShapeMismatch(f"feature table has shape {f.shape}, expected ({g.N}, k)")
    wx = g.vertex_weights
    second = f @ (f.T @ (wx[:, None] * f))
    return -4.0 * (g.pair_weights @ f) + 4.0 * wx[:, None] * second


def suggested_learning_rate(g: AugmentationGraph) -> float:
    """Step size scaled to the largest vertex weight, which sets the curvature."""
    return 0.1 / float(np.max(g.vertex_weights))


def train_nonparametric(g: AugmentationGraph, cfg: TrainConfig, init=None):
    """Gradient descent with step halving on the full N x k table.

    Returns ``(table, loss_history)``; the history holds the loss before the
    first step and after every accepted step.
    """
    if cfg.k > g.N:
        logger.warning("k=%d exceeds the vertex count %d", cfg.k, g.N)
    if init is None:
        rng = np.random.default_rng(cfg.seed)
        f = rng.normal(size=(g.N, cfg.k)) * cfg.init_scale
    else:
        f = np.array(init, dtype=float)
    loss = population_loss(g, f)
    if not np.isfinite(loss):
        raise Divergence("initial loss is not finite")
    initial = loss
    history = [loss]
    lr = cfg.learning_rate
    for _ in range(cfg.max_steps):
        grad = analytic_gradient(g, f)
        if np.max(np.abs(grad)) < cfg.grad_tolerance or lr == 0:
            break
        step = lr
        for _ in range(MAX_HALVINGS + 1):
            cand = f - step * grad
            cand_loss = population_loss(g, cand)
            if np.isfinite(cand_loss) and cand_loss <= loss + DESCENT_SLACK:
                break
            step /= 2
        else:
            logger.info("no descent after %d halvings; stopping", MAX_HALVINGS)
            break
        if cand_loss > 10 * abs(initial) and cand_loss > initial:
            raise Divergence(f"loss {cand_loss!r} from initial {initial!r}")
        lr = step
        f, loss = cand, cand_loss
        history.append(loss)
    if lr == 0:
        history.extend([loss] * cfg.max_steps)
    return f, np.array(history)


# --- parametric route --------------------------------------------------------

class FeatureMap:
    """Affine chain with tanh between layers and an optional sphere projection.

    ``weights[i]`` has shape ``(d_in, d_out)``; the last layer outputs R^k.
    """

    def __init__(self, weights, biases, radius_sq=None):
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        self.radius_sq = radius_sq
        for a, b in zip(self.weights, self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ShapeMismatch("layer dimensions do not compose")
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[1],):
                raise ShapeMismatch("bias does not match layer output")

    @classmethod
    def random(cls, dims, seed=0, radius_sq=None, scale=None):
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for d_in, d_out in zip(dims, dims[1:]):
            s = scale if scale is not None else 1.0 / math.sqrt(d_in)
            weights.append(rng.normal(size=(d_in, d_out)) * s)
            biases.append(np.zeros(d_out))
        return cls(weights, biases, radius_sq)

    @property
    def k(self):
        return self.weights[-1].shape[1]

    def __call__(self, x):
        h = np.asarray(x, dtype=float)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.tanh(h)
        if self.radius_sq is not None:
            h = math.sqrt(self.radius_sq) * h / np.linalg.norm(h, axis=-1, keepdims=True)
        return h

    def table(self, g: AugmentationGraph) -> np.ndarray:
        if g.payloads is None:
            raise MissingPayload("graph has no vertex payloads")
        return self(g.payloads)

    def named_parameters(self):
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"layer{i}.weight", w))
            out.append((f"layer{i}.bias", b))
        return out

    def copy(self):
        return FeatureMap(self.weights, self.biases, self.radius_sq)


def _torch_minibatch_loss(z, zp):
    n = z.shape[0]
    s = z @ zp.T
    diag = s.diagonal()
    return -2.0 * diag.sum() / n + ((s * s).sum() - (diag * diag).sum()) / (n * (n - 1))


def sample_pairs(g: AugmentationGraph, batch_size: int, rng):
    """Inverse-CDF draws of natural points and two augmentations of each."""
    nat_cdf = np.cumsum(g.natural_probs)
    nat = np.searchsorted(nat_cdf, rng.random(batch_size) * nat_cdf[-1], side="right")
    nat = np.minimum(nat, g.n_naturals - 1)
    rows = np.cumsum(g.kernel[nat], axis=1)
    u = rng.random((batch_size, 2)) * rows[:, -1:]
    first = np.array([np.searchsorted(rows[i], u[i, 0], side="right") for i in range(batch_size)])
    second = np.array([np.searchsorted(rows[i], u[i, 1], side="right") for i in range(batch_size)])
    first = np.minimum(first, g.N - 1)
    second = np.minimum(second, g.N - 1)
    return nat, first, second


def train_minibatch(g: AugmentationGraph, fmap: FeatureMap, cfg: TrainConfig):
    """Minibatch SGD on the parametric map; returns ``(trained_map, loss_history)``.

    Batch ``t`` is drawn with a generator keyed by ``(cfg.seed, t)``, so runs are
    reproducible and any step can be replayed on its own.
    """
    import torch

    if g.payloads is None:
        raise MissingPayload("graph has no vertex payloads")
    if cfg.batch_size < 2:
        raise ValueError("batch_size must be at least 2")
    radius_sq = cfg.sphere_radius_sq if cfg.sphere_radius_sq is not None else fmap.radius_sq
    params = [torch.tensor(p, dtype=torch.float64, requires_grad=True)
              for _, p in fmap.named_parameters()]
    payloads = torch.tensor(np.asarray(g.payloads), dtype=torch.float64)
    n_layers = len(fmap.weights)

    def forward(x):
        h = x
        for i in range(n_layers):
            h = h @ params[2 * i] + params[2 * i + 1]
            if i < n_layers - 1:
                h = torch.tanh(h)
        if radius_sq is not None:
            h = math.sqrt(radius_sq) * h / h.norm(dim=-1, keepdim=True)
        return h

    history = []
    initial = None
    for step in range(cfg.max_steps):
        rng = np.random.default_rng([cfg.seed, step])
        _, a, b = sample_pairs(g, cfg.batch_size, rng)
        loss = _torch_minibatch_loss(forward(payloads[a]), forward(payloads[b]))
        value = float(loss.detach())
        if initial is None:
            initial = value
        if not math.isfinite(value) or value > 10 * max(abs(initial), 1.0):
            raise Divergence(f"minibatch loss {value!r} at step {step}")
        history.append(value)
        for p in params:
            p.grad = None
        loss.backward()
        with torch.no_grad():
            for p in params:
                p -= cfg.learning_rate * p.grad
    values = [p.detach().numpy().copy() for p in params]
    trained = FeatureMap(values[0::2], values[1::2], radius_sq)
    return trained, np.array(history)


# --- checkpoints -------------------------------------------------------------

def _dec(x):
    return format(float(x), ".17g")


def save_checkpoint(path, tensors, meta=None):
    """Write ``[(name, array), ...]`` as a flat list of named tensors."""
    doc = {"tensors": [{"name": name, "shape": list(np.shape(arr)),
                        "values": [_dec(v) for v in np.ravel(arr)]}
                       for name, arr in tensors],
           "meta": meta or {}}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_checkpoint(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
        tensors = {t["name"]: np.array([float(v) for v in t["values"]]).reshape(t["shape"])
                   for t in doc["tensors"]}
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedPayload(f"bad checkpoint: {exc!r}") from None
    return tensors, doc.get("meta", {})


def feature_map_from_tensors(tensors, radius_sq=None) -> FeatureMap:
    n = len([k for k in tensors if k.endswith(".weight")])
    return FeatureMap([tensors[f"layer{i}.weight"] for i in range(n)],
                      [tensors[f"layer{i}.bias"] for i in range(n)], radius_sq)
