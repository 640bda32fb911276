"""Seeded synthetic augmentation graphs."""

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .errors import DegenerateDiscretization, SpecValidationError
from .graph import AugmentationGraph, graph_from_arrays


# --- block graphs ------------------------------------------------------------

@dataclass
class BlockSpec:
    """Classes split into blocks (sub-classes) of naturals sharing augmentations.

    Inside a block, natural ``j`` spreads uniformly over a sliding window of
    ``augmentations_per_natural`` vertices, so each block is connected.  A
    fraction ``cross_block_mass`` of every row goes uniformly to the vertices of
    a sibling block of the same class, and ``cross_class_mass`` to a block of
    another class.  ``prob_jitter`` perturbs the natural probabilities.
    """

    r: int = 2
    blocks_per_class: int = 1
    naturals_per_block: int = 2
    augmentations_per_natural: int = 2
    cross_block_mass: float = 0.0
    cross_class_mass: float = 0.0
    prob_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("r", "blocks_per_class", "naturals_per_block", "augmentations_per_natural"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise SpecValidationError(name, f"must be a positive integer, got {v!r}")
        if self.naturals_per_block > 1 and self.augmentations_per_natural < 2:
            raise SpecValidationError("augmentations_per_natural",
                                      "must be at least 2 when a block has several naturals")
        for name in ("cross_block_mass", "cross_class_mass", "prob_jitter"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not 0.0 <= v < 1.0:
                raise SpecValidationError(name, f"must lie in [0, 1), got {v!r}")
        if self.cross_block_mass + self.cross_class_mass >= 1.0:
            raise SpecValidationError("cross_class_mass", "leak fractions must sum below 1")
        if self.cross_class_mass > 0 and self.r < 2:
            raise SpecValidationError("cross_class_mass", "needs at least two classes")


def gen_blocks(spec: BlockSpec) -> AugmentationGraph:
    rng = np.random.default_rng(spec.seed)
    nb, a = spec.naturals_per_block, spec.augmentations_per_natural
    pool = nb + a - 1
    n_blocks = spec.r * spec.blocks_per_class
    block_class = np.repeat(np.arange(spec.r), spec.blocks_per_class)
    N = n_blocks * pool
    K = np.zeros((n_blocks * nb, N))
    labels = np.zeros(n_blocks * nb, dtype=np.int64)
    for b in range(n_blocks):
        c = block_class[b]
        siblings = [s for s in range(n_blocks) if block_class[s] == c and s != b]
        others = [s for s in range(n_blocks) if block_class[s] != c]
        sib = siblings[rng.integers(len(siblings))] if siblings else None
        oth = others[rng.integers(len(others))] if others else None
        stay = 1.0 - spec.cross_class_mass - (spec.cross_block_mass if sib is not None else 0.0)
        for j in range(nb):
            row = K[b * nb + j]
            row[b * pool + j: b * pool + j + a] += stay / a
            if sib is not None:
                row[sib * pool: (sib + 1) * pool] += spec.cross_block_mass / pool
            if oth is not None:
                row[oth * pool: (oth + 1) * pool] += spec.cross_class_mass / pool
            labels[b * nb + j] = c
    K /= K.sum(axis=1, keepdims=True)
    probs = 1.0 + spec.prob_jitter * rng.uniform(-1.0, 1.0, size=len(labels))
    probs /= probs.sum()
    vertex_ids = [f"b{b}v{v}" for b in range(n_blocks) for v in range(pool)]
    meta = {"generator": "blocks", "spec": asdict(spec)}
    return graph_from_arrays(probs, labels, K, r=spec.r, vertex_ids=vertex_ids, meta=meta)


# --- mixture of manifolds ----------------------------------------------------

@dataclass
class ManifoldSpec:
    """Latent Gaussian mixture pushed through a generator, augmented by Gaussian noise.

    Latent class ``i`` is ``N(mu_i, I / d_latent)``; the generator maps R^d_latent
    to R^d (``identity`` pads with zeros).  Augmentation adds ``N(0, sigma^2 / d)``.
    ``means`` defaults to points on a circle of diameter ``mean_separation``.
    """

    r: int = 2
    d: int = 8
    d_latent: int = 2
    sigma: float = 0.1
    n_naturals: int = 40
    atoms_per_natural: int = 4
    mean_separation: float = 3.0
    means: Optional[list] = None
    generator: str = "identity"
    seed: int = 7

    def __post_init__(self):
        for name in ("r", "d", "d_latent", "n_naturals", "atoms_per_natural"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise SpecValidationError(name, f"must be a positive integer, got {v!r}")
        if self.r > self.d:
            raise SpecValidationError("r", "must not exceed d")
        if self.d_latent > self.d:
            raise SpecValidationError("d_latent", "must not exceed d")
        if not isinstance(self.sigma, (int, float)) or self.sigma <= 0:
            raise SpecValidationError("sigma", f"must be positive, got {self.sigma!r}")
        if self.generator not in ("identity", "random_smooth"):
            raise SpecValidationError("generator", f"unknown generator {self.generator!r}")
        if self.n_naturals < self.r:
            raise SpecValidationError("n_naturals", "need at least one natural per class")
        if self.means is not None:
            m = np.asarray(self.means, dtype=float)
            if m.shape != (self.r, self.d_latent):
                raise SpecValidationError("means", f"expected shape ({self.r}, {self.d_latent})")

    def latent_means(self) -> np.ndarray:
        if self.means is not None:
            return np.asarray(self.means, dtype=float)
        mu = np.zeros((self.r, self.d_latent))
        radius = self.mean_separation / 2.0
        if self.d_latent == 1:
            mu[:, 0] = np.linspace(-radius, radius, self.r) if self.r > 1 else 0.0
            return mu
        angles = 2 * np.pi * np.arange(self.r) / self.r
        mu[:, 0] = radius * np.cos(angles)
        mu[:, 1] = radius * np.sin(angles)
        return mu


class _SmoothMap:
    """z -> A z + 0.3 * tanh(B z) with orthonormal A; bi-Lipschitz for small B."""

    def __init__(self, d_latent, d, rng):
        A, _ = np.linalg.qr(rng.normal(size=(d, d_latent)))
        self.A = A
        self.B = rng.normal(size=(d_latent, d_latent)) / math.sqrt(d_latent)
        self.C = rng.normal(size=(d, d_latent)) / math.sqrt(d)

    def __call__(self, z):
        return z @ self.A.T + 0.3 * np.tanh(z @ self.B.T) @ self.C.T


def _identity_map(d_latent, d):
    def apply(z):
        out = np.zeros((z.shape[0], d))
        out[:, :d_latent] = z
        return out
    return apply


def estimate_kappa(Q, d_latent, rng, n_pairs=2000, scale=2.0) -> float:
    """Empirical bi-Lipschitz constant of ``Q`` over random latent pairs."""
    z1 = rng.normal(size=(n_pairs, d_latent)) * scale
    z2 = z1 + rng.normal(size=(n_pairs, d_latent)) * rng.uniform(0.01, 1.0, size=(n_pairs, 1))
    ratio = np.linalg.norm(Q(z1) - Q(z2), axis=1) / np.linalg.norm(z1 - z2, axis=1)
    return float(max(ratio.max(), 1.0 / ratio.min()))


def _log_gauss(diff, var):
    return -0.5 * np.sum(diff * diff, axis=-1) / var


def gen_manifold(spec: ManifoldSpec) -> AugmentationGraph:
    """Discretized mixture-of-manifolds graph.

    Every natural ``j`` draws ``atoms_per_natural`` noise atoms around itself.
    Its kernel row covers all atoms, with mass proportional to the noise
    density at each atom (self-normalized importance weights).  Labels are
    the generating mixture index; disagreements with the density argmax rule
    are counted in ``meta``.
    """
    rng = np.random.default_rng(spec.seed)
    mu = spec.latent_means()
    if spec.generator == "identity":
        Q = _identity_map(spec.d_latent, spec.d)
        kappa = 1.0
    else:
        Q = _SmoothMap(spec.d_latent, spec.d, rng)
        kappa = estimate_kappa(Q, spec.d_latent, np.random.default_rng(spec.seed + 1))
    n = spec.n_naturals
    labels = np.concatenate([np.arange(spec.r), rng.integers(spec.r, size=n - spec.r)])
    z = mu[labels] + rng.normal(size=(n, spec.d_latent)) / math.sqrt(spec.d_latent)
    naturals = Q(z)
    noise_var = spec.sigma ** 2 / spec.d
    a = spec.atoms_per_natural
    atoms = np.repeat(naturals, a, axis=0) + rng.normal(size=(n * a, spec.d)) * math.sqrt(noise_var)

    logw = _log_gauss(naturals[:, None, :] - atoms[None, :, :], noise_var)
    logw -= logw.max(axis=1, keepdims=True)
    K = np.exp(logw)
    if np.any(K.sum(axis=0) == 0):
        lost = int(np.sum(K.sum(axis=0) == 0))
        raise DegenerateDiscretization(f"{lost} atom(s) receive no kernel mass")
    K /= K.sum(axis=1, keepdims=True)

    # density-argmax label in latent space (the generator is injective)
    latent_logp = _log_gauss(z[:, None, :] - mu[None, :, :], 1.0 / spec.d_latent)
    argmax_labels = np.argmax(latent_logp, axis=1)
    pair_d = np.linalg.norm(mu[:, None] - mu[None], axis=-1)
    min_sep = float(pair_d[~np.eye(spec.r, dtype=bool)].min()) if spec.r > 1 else float("inf")
    meta = {
        "generator": "manifold",
        "spec": asdict(spec),
        "kappa_estimate": kappa,
        "min_mean_distance": min_sep,
        "label_rule": "generating_index",
        "argmax_label_divergences": int(np.sum(argmax_labels != labels)),
        "discretization": "self_normalized_noise_density",
    }
    probs = np.full(n, 1.0 / n)
    vertex_ids = [f"n{j}a{t}" for j in range(n) for t in range(a)]
    return graph_from_arrays(probs, labels, K, r=spec.r, vertex_ids=vertex_ids,
                             payloads=atoms, meta=meta)


# --- random graphs -----------------------------------------------------------

def gen_random(n_naturals: int, n_vertices: int, r: int = 2, seed: int = 0,
               max_support: int = 4) -> AugmentationGraph:
    """Random stochastic kernel on a random support; every vertex is reachable."""
    if n_vertices < 2:
        raise ValueError("n_vertices must be at least 2")
    if n_naturals < r:
        raise ValueError("need at least one natural per class")
    rng = np.random.default_rng(seed)
    K = np.zeros((n_naturals, n_vertices))
    owner = np.concatenate([np.arange(n_naturals),
                            rng.integers(n_naturals, size=max(n_vertices - n_naturals, 0))])
    owner = rng.permutation(owner)[:n_vertices]
    K[owner, np.arange(n_vertices)] = rng.uniform(0.2, 1.0, size=n_vertices)
    for i in range(n_naturals):
        extra = rng.choice(n_vertices, size=rng.integers(0, min(max_support, n_vertices)), replace=False)
        K[i, extra] += rng.uniform(0.05, 1.0, size=len(extra))
        if K[i].sum() == 0:
            K[i, rng.integers(n_vertices)] = 1.0
    K /= K.sum(axis=1, keepdims=True)
    probs = rng.dirichlet(np.ones(n_naturals) * 2.0)
    labels = np.concatenate([np.arange(r), rng.integers(r, size=n_naturals - r)])
    labels = rng.permutation(labels)
    meta = {"generator": "random", "n_naturals": n_naturals, "n_vertices": n_vertices,
            "r": r, "seed": seed}
    return graph_from_arrays(probs, labels, K, r=r, meta=meta)


# --- spec files --------------------------------------------------------------

FAMILIES = {"blocks": (BlockSpec, gen_blocks), "manifold": (ManifoldSpec, gen_manifold)}


def spec_from_dict(doc: dict):
    if not isinstance(doc, dict):
        raise SpecValidationError("family", "spec must be a mapping")
    doc = dict(doc)
    family = doc.pop("family", None)
    if family == "random":
        for name in ("n_naturals", "n_vertices"):
            if not isinstance(doc.get(name), int):
                raise SpecValidationError(name, "required integer field")
        return family, doc
    if family not in FAMILIES:
        raise SpecValidationError("family", f"expected one of blocks, manifold, random; got {family!r}")
    cls = FAMILIES[family][0]
    known = set(cls.__dataclass_fields__)
    for name in doc:
        if name not in known:
            raise SpecValidationError(name, "unknown field")
    try:
        return family, cls(**doc)
    except TypeError as exc:
        raise SpecValidationError("family", str(exc)) from None


def generate_from_spec(doc: dict) -> AugmentationGraph:
    family, spec = spec_from_dict(doc)
    if family == "random":
        return gen_random(**spec)
    return FAMILIES[family][1](spec)


def load_spec(path) -> dict:
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecValidationError("<file>", f"not valid JSON: {exc}") from None
