"""Exact finite population augmentation graphs.

A graph is built from a finite natural distribution and a finite augmentation
kernel.  The pair weight of two augmented points is the probability that one
random natural point is augmented into both of them.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DegenerateGraph,
    InvariantViolation,
    MalformedPayload,
    NonStochasticInput,
    UnknownNatural,
    ZeroDegree,
)

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
STOCHASTIC_TOL = 1e-12
TOTAL_WEIGHT_TOL = 1e-10


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NaturalDistribution:
    """Finite distribution over natural points with class labels in ``range(r)``."""

    ids: tuple
    probs: np.ndarray
    labels: np.ndarray
    r: int

    def __init__(self, items: Sequence, r: Optional[int] = None):
        ids, probs, labels = [], [], []
        for nid, p, c in items:
            ids.append(str(nid))
            probs.append(float(p))
            labels.append(int(c))
        if len(set(ids)) != len(ids):
            raise InvariantViolation("duplicate natural ids")
        if r is None:
            r = max(labels) + 1 if labels else 0
        object.__setattr__(self, "ids", tuple(ids))
        object.__setattr__(self, "probs", _frozen(probs))
        object.__setattr__(self, "labels", _frozen(labels, dtype=np.int64))
        object.__setattr__(self, "r", int(r))
        self.validate()

    def validate(self):
        if len(self.ids) == 0:
            raise NonStochasticInput("empty natural distribution")
        if np.any(self.probs < 0) or not np.all(np.isfinite(self.probs)):
            raise NonStochasticInput("natural probabilities must be finite and nonnegative")
        if abs(self.probs.sum() - 1.0) > STOCHASTIC_TOL:
            raise NonStochasticInput(
                f"natural probabilities sum to {self.probs.sum()!r}, not 1")
        if np.any(self.labels < 0) or np.any(self.labels >= self.r):
            raise InvariantViolation(f"class labels must lie in [0, {self.r})")
        missing = set(range(self.r)) - set(self.labels.tolist())
        if missing:
            raise InvariantViolation(f"classes without any natural point: {sorted(missing)}")

    def __len__(self):
        return len(self.ids)

    def index(self, natural_id) -> int:
        return self.ids.index(str(natural_id))


@dataclass(frozen=True)
class AugmentationKernel:
    """Conditional augmentation distributions, one finite row per natural point."""

    rows: dict

    def __init__(self, rows: dict):
        clean = {}
        for nid, entries in rows.items():
            row = {}
            for vid, p in entries:
                row[str(vid)] = row.get(str(vid), 0.0) + float(p)
            clean[str(nid)] = tuple(row.items())
        object.__setattr__(self, "rows", clean)
        self.validate()

    def validate(self):
        for nid, entries in self.rows.items():
            ps = np.array([p for _, p in entries], dtype=float)
            if ps.size == 0:
                raise NonStochasticInput(f"kernel row {nid!r} is empty")
            if np.any(ps < 0) or not np.all(np.isfinite(ps)):
                raise NonStochasticInput(f"kernel row {nid!r} has negative or non-finite mass")
            if abs(ps.sum() - 1.0) > STOCHASTIC_TOL:
                raise NonStochasticInput(f"kernel row {nid!r} sums to {ps.sum()!r}, not 1")

    def vertex_ids(self):
        seen = {}
        for entries in self.rows.values():
            for vid, _ in entries:
                seen.setdefault(vid, None)
        return list(seen)


@dataclass(frozen=True, eq=False)
class AugmentationGraph:
    """Immutable augmentation graph over the retained (positive weight) vertices.

    ``kernel`` is the dense ``n_naturals x N`` matrix of A(x | natural) restricted
    to retained vertices; ``class_mass[x, c]`` is the joint probability that a
    random (natural, augmentation) draw lands on ``x`` with label ``c``.
    """

    vertex_ids: tuple
    pair_weights: np.ndarray
    vertex_weights: np.ndarray
    class_mass: np.ndarray
    natural_ids: tuple
    natural_probs: np.ndarray
    natural_labels: np.ndarray
    kernel: np.ndarray
    r: int
    payloads: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.vertex_ids)

    @property
    def class_posterior(self) -> np.ndarray:
        return self.class_mass / self.vertex_weights[:, None]

    @property
    def n_naturals(self) -> int:
        return len(self.natural_ids)

    def natural_index(self, natural_id) -> int:
        try:
            return self.natural_ids.index(str(natural_id))
        except ValueError:
            raise UnknownNatural(natural_id) from None

    def check_invariants(self):
        w = self.pair_weights
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise InvariantViolation("pair_weights must be square")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvariantViolation("pair_weights must be finite and nonnegative")
        if not np.array_equal(w, w.T):
            raise InvariantViolation("pair_weights are not exactly symmetric")
        if abs(w.sum() - 1.0) > TOTAL_WEIGHT_TOL:
            raise InvariantViolation(f"pair weights sum to {w.sum()!r}, not 1")
        if np.max(np.abs(self.vertex_weights - w.sum(axis=1)), initial=0.0) > STOCHASTIC_TOL:
            raise InvariantViolation("vertex_weights differ from pair_weights row sums")
        if np.any(self.vertex_weights <= 0):
            raise InvariantViolation("zero-weight vertex retained")

    def equals(self, other) -> bool:
        """Field-by-field equality, arrays compared exactly."""
        if not isinstance(other, AugmentationGraph):
            return False
        arrays = ("pair_weights", "vertex_weights", "class_mass", "natural_probs",
                  "natural_labels", "kernel")
        if self.vertex_ids != other.vertex_ids or self.natural_ids != other.natural_ids:
            return False
        if self.r != other.r:
            return False
        if any(not np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays):
            return False
        if (self.payloads is None) != (other.payloads is None):
            return False
        return self.payloads is None or np.array_equal(self.payloads, other.payloads)

    def with_payloads(self, payloads) -> "AugmentationGraph":
        payloads = _frozen(payloads)
        if payloads.ndim != 2 or payloads.shape[0] != self.N:
            raise InvariantViolation("payloads must be an N x p array")
        return AugmentationGraph(
            self.vertex_ids, self.pair_weights, self.vertex_weights, self.class_mass,
            self.natural_ids, self.natural_probs, self.natural_labels, self.kernel,
            self.r, payloads, dict(self.meta))

    def digest(self) -> str:
        return hashlib.sha256(serialize_graph(self)).hexdigest()


@dataclass(frozen=True, eq=False)
class NormalizedMatrices:
    adjacency: np.ndarray
    laplacian: np.ndarray
    sqrt_degrees: np.ndarray


def _assemble(vertex_ids, natural_ids, probs, labels, r, K, payloads=None, meta=None):
    """Build the graph from a dense kernel matrix, pruning zero-weight vertices."""
    pK = K * probs[:, None]
    w = pK.T @ K
    w = (w + w.T) / 2.0
    wx = w.sum(axis=1)
    keep = wx > 0
    if not np.all(keep):
        dropped = [vertex_ids[i] for i in np.flatnonzero(~keep)]
        logger.warning("pruning %d zero-weight vertices: %s", len(dropped), dropped[:10])
    if keep.sum() < 2:
        raise DegenerateGraph(f"{int(keep.sum())} vertex(es) survive pruning; need at least 2")
    idx = np.flatnonzero(keep)
    K = K[:, idx]
    w = w[np.ix_(idx, idx)]
    wx = w.sum(axis=1)
    onehot = np.zeros((len(natural_ids), r))
    onehot[np.arange(len(natural_ids)), labels] = 1.0
    class_mass = pK[:, idx].T @ onehot
    if payloads is not None:
        payloads = _frozen(np.asarray(payloads, dtype=float)[idx])
    g = AugmentationGraph(
        vertex_ids=tuple(vertex_ids[i] for i in idx),
        pair_weights=_frozen(w),
        vertex_weights=_frozen(wx),
        class_mass=_frozen(class_mass),
        natural_ids=tuple(natural_ids),
        natural_probs=_frozen(probs),
        natural_labels=_frozen(labels, dtype=np.int64),
        kernel=_frozen(K),
        r=int(r),
        payloads=payloads,
        meta=dict(meta or {}),
    )
    g.check_invariants()
    return g


def build_graph(dist: NaturalDistribution, kernel: AugmentationKernel,
                payloads: Optional[dict] = None) -> AugmentationGraph:
    """w[x, x'] = sum over naturals of P(natural) A(x | natural) A(x' | natural)."""
    dist.validate()
    kernel.validate()
    missing = [nid for nid in dist.ids if nid not in kernel.rows]
    if missing:
        raise NonStochasticInput(f"natural points without a kernel row: {missing[:5]}")
    vertex_ids = kernel.vertex_ids()
    col = {vid: j for j, vid in enumerate(vertex_ids)}
    K = np.zeros((len(dist), len(vertex_ids)))
    for i, nid in enumerate(dist.ids):
        for vid, p in kernel.rows[nid]:
            K[i, col[vid]] += p
    P = None
    if payloads is not None:
        P = np.array([payloads[v] for v in vertex_ids], dtype=float)
        if P.ndim == 1:
            P = P[:, None]
    return _assemble(vertex_ids, dist.ids, dist.probs, dist.labels, dist.r, K, P)


def graph_from_arrays(probs, labels, K, r=None, vertex_ids=None, payloads=None,
                      meta=None) -> AugmentationGraph:
    """Convenience constructor from a dense ``n_naturals x n_vertices`` kernel."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    K = np.asarray(K, dtype=float)
    r = int(labels.max()) + 1 if r is None else int(r)
    if abs(probs.sum() - 1.0) > STOCHASTIC_TOL or np.any(probs < 0):
        raise NonStochasticInput("natural probabilities must be nonnegative and sum to 1")
    if np.any(K < 0) or np.max(np.abs(K.sum(axis=1) - 1.0)) > STOCHASTIC_TOL:
        raise NonStochasticInput("kernel rows must be nonnegative and sum to 1")
    if vertex_ids is None:
        vertex_ids = [f"x{j}" for j in range(K.shape[1])]
    natural_ids = [f"n{i}" for i in range(K.shape[0])]
    return _assemble(list(vertex_ids), natural_ids, probs, labels, r, K, payloads, meta)


def normalized_matrices(g: AugmentationGraph) -> NormalizedMatrices:
    wx = g.vertex_weights
    if np.any(wx <= 0):
        raise ZeroDegree("vertex with zero weight reached normalization")
    s = np.sqrt(wx)
    abar = g.pair_weights / s[:, None] / s[None, :]
    abar = (abar + abar.T) / 2.0
    lap = np.eye(g.N) - abar
    return NormalizedMatrices(_frozen(abar), _frozen(lap), _frozen(s))


# --- file format -----------------------------------------------------------

def _dec(x) -> str:
    return format(float(x), ".17g")


def _graph_document(g: AugmentationGraph, sparse=None) -> dict:
    N = g.N
    w = g.pair_weights
    if sparse is None:
        sparse = np.count_nonzero(w) < 0.25 * N * N
    sources = [[] for _ in range(N)]
    for i, nid in enumerate(g.natural_ids):
        for j in np.flatnonzero(g.kernel[i]):
            sources[j].append(nid)
    doc = {
        "version": FORMAT_VERSION,
        "r": g.r,
        "vertices": [{"id": vid, "natural_sources": sources[j]}
                     for j, vid in enumerate(g.vertex_ids)],
        "naturals": [{"id": nid, "prob": _dec(p), "class": int(c)}
                     for nid, p, c in zip(g.natural_ids, g.natural_probs, g.natural_labels)],
        "kernel_rows": {
            nid: [[g.vertex_ids[j], _dec(g.kernel[i, j])] for j in np.flatnonzero(g.kernel[i])]
            for i, nid in enumerate(g.natural_ids)
        },
        "vertex_weights": [_dec(v) for v in g.vertex_weights],
    }
    if sparse:
        ii, jj = np.nonzero(w)
        doc["pair_weights"] = {"format": "sparse",
                               "triplets": [[int(i), int(j), _dec(w[i, j])] for i, j in zip(ii, jj)]}
    else:
        doc["pair_weights"] = {"format": "dense", "rows": [[_dec(v) for v in row] for row in w]}
    if g.payloads is not None:
        doc["payloads"] = [[_dec(v) for v in row] for row in g.payloads]
    if g.meta:
        doc["meta"] = g.meta
    return doc


def serialize_graph(g: AugmentationGraph, sparse=None) -> bytes:
    return json.dumps(_graph_document(g, sparse), sort_keys=True, indent=1).encode("utf-8")


def deserialize_graph(data) -> AugmentationGraph:
    try:
        doc = json.loads(data)
    except (ValueError, TypeError) as exc:
        raise MalformedPayload(f"not a JSON document: {exc}") from None
    try:
        return _graph_from_document(doc)
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        if isinstance(exc, (InvariantViolation, NonStochasticInput)):
            raise
        raise MalformedPayload(f"bad graph document: {exc!r}") from None


def _graph_from_document(doc) -> AugmentationGraph:
    if doc.get("version") != FORMAT_VERSION:
        raise MalformedPayload(f"unsupported version {doc.get('version')!r}")
    vertex_ids = tuple(str(v["id"]) for v in doc["vertices"])
    N = len(vertex_ids)
    col = {v: j for j, v in enumerate(vertex_ids)}
    naturals = doc["naturals"]
    natural_ids = tuple(str(n["id"]) for n in naturals)
    probs = np.array([float(n["prob"]) for n in naturals])
    labels = np.array([int(n["class"]) for n in naturals], dtype=np.int64)
    r = int(doc.get("r", labels.max() + 1))

    K = np.zeros((len(natural_ids), N))
    for i, nid in enumerate(natural_ids):
        for vid, p in doc["kernel_rows"][nid]:
            K[i, col[str(vid)]] = float(p)

    pw = doc["pair_weights"]
    w = np.zeros((N, N))
    if pw["format"] == "dense":
        w[:] = np.array([[float(v) for v in row] for row in pw["rows"]])
    elif pw["format"] == "sparse":
        for i, j, v in pw["triplets"]:
            w[int(i), int(j)] = float(v)
    else:
        raise MalformedPayload(f"unknown pair_weights format {pw['format']!r}")
    if not np.array_equal(w, w.T):
        raise InvariantViolation("pair_weights are not exactly symmetric")

    if "vertex_weights" in doc:
        wx = np.array([float(v) for v in doc["vertex_weights"]])
    else:
        wx = w.sum(axis=1)
    onehot = np.zeros((len(natural_ids), r))
    onehot[np.arange(len(natural_ids)), labels] = 1.0
    class_mass = (K * probs[:, None]).T @ onehot
    payloads = None
    if "payloads" in doc:
        payloads = _frozen([[float(v) for v in row] for row in doc["payloads"]])
    g = AugmentationGraph(
        vertex_ids=vertex_ids,
        pair_weights=_frozen(w),
        vertex_weights=_frozen(wx),
        class_mass=_frozen(class_mass),
        natural_ids=natural_ids,
        natural_probs=_frozen(probs),
        natural_labels=_frozen(labels, dtype=np.int64),
        kernel=_frozen(K),
        r=r,
        payloads=payloads,
        meta=dict(doc.get("meta", {})),
    )
    g.check_invariants()
    return g


def load_graph(path) -> AugmentationGraph:
    with open(path, "rb") as fh:
        return deserialize_graph(fh.read())


def save_graph(g: AugmentationGraph, path):
    with open(path, "wb") as fh:
        fh.write(serialize_graph(g))


def two_block_graph() -> AugmentationGraph:
    """Two natural points, each augmented uniformly onto its own pair of vertices."""
    dist = NaturalDistribution([("a", 0.5, 0), ("b", 0.5, 1)])
    kernel = AugmentationKernel({
        "a": [("x1", 0.5), ("x2", 0.5)],
        "b": [("x3", 0.5), ("x4", 0.5)],
    })
    return build_graph(dist, kernel)
