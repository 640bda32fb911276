"""Spectral contrastive losses: exact population, empirical, minibatch, and a SimCLR baseline.

Feature tables are plain ``N x k`` arrays whose row ``x`` is f(x).
"""

import numpy as np

from .errors import ShapeMismatch, TooFewSamples
from .graph import AugmentationGraph


def _check_features(g: AugmentationGraph, f):
    f = np.asarray(f, dtype=float)
    if f.ndim != 2 or f.shape[0] != g.N:
        raise ShapeMismatch(f"feature table has shape {f.shape}, expected ({g.N}, k)")
    return f


def population_loss(g: AugmentationGraph, f) -> float:
    """-2 sum w[x,x'] f(x).f(x') + sum w_x w_x' (f(x).f(x'))^2, both double sums exact."""
    f = _check_features(g, f)
    gram = f @ f.T
    wx = g.vertex_weights
    attract = np.sum(g.pair_weights * gram)
    repel = wx @ (gram * gram) @ wx
    return float(-2.0 * attract + repel)


def loss_constant(g: AugmentationGraph) -> float:
    """sum w[x,x']^2 / (w_x w_x'), the squared Frobenius norm of the normalized adjacency."""
    wx = g.vertex_weights
    return float(np.sum(g.pair_weights ** 2 / np.outer(wx, wx)))


def positive_pair_probs(g: AugmentationGraph) -> np.ndarray:
    """Joint law of a positive pair; re-derived from the kernel, never cached."""
    pK = g.kernel * g.natural_probs[:, None]
    return pK.T @ g.kernel


def empirical_loss(samples, g: AugmentationGraph, f, rng_seed=None) -> float:
    """Empirical loss on a list of natural points with exact inner expectations.

    ``rng_seed`` is accepted for interface symmetry; no randomness is used because
    expectations over the finite kernel are evaluated exactly.
    """
    f = _check_features(g, f)
    idx = np.array([s if isinstance(s, (int, np.integer)) else g.natural_index(s)
                    for s in samples], dtype=np.int64)
    n = len(idx)
    if n < 2:
        raise TooFewSamples(f"need at least 2 samples, got {n}")
    K = g.kernel[idx]
    means = K @ f
    attract = np.sum(means * means) / n
    gram = f @ f.T
    cross = K @ (gram * gram) @ K.T
    repel = (cross.sum() - np.trace(cross)) / (n * (n - 1))
    return float(-2.0 * attract + repel)


def minibatch_loss(z, z_pos) -> float:
    """Minibatch loss on paired embeddings ``z[i]``, ``z_pos[i]`` of the same natural point."""
    z = np.asarray(z, dtype=float)
    z_pos = np.asarray(z_pos, dtype=float)
    if z.shape != z_pos.shape or z.ndim != 2:
        raise ShapeMismatch("z and z_pos must be matching (n, k) arrays")
    n = z.shape[0]
    if n < 2:
        raise TooFewSamples(f"batch size {n} < 2")
    s = z @ z_pos.T
    pos = np.trace(s)
    neg = np.sum(s * s) - np.sum(np.diag(s) ** 2)
    return float(-2.0 * pos / n + neg / (n * (n - 1)))


def simclr_loss(anchors, positives, temperature=1.0) -> float:
    """Mean over anchors of -s+ + log(exp(s+) + sum_j exp(s_j)).

    Negatives of anchor ``i`` are the positives of the other batch entries.
    """
    a = np.asarray(anchors, dtype=float)
    p = np.asarray(positives, dtype=float)
    if a.shape != p.shape or a.ndim != 2:
        raise ShapeMismatch("anchors and positives must be matching (n, k) arrays")
    n = a.shape[0]
    if n < 2:
        raise TooFewSamples(f"batch size {n} < 2")
    s = (a @ p.T) / temperature
    pos = np.diag(s).copy()
    total = 0.0
    for i in range(n):
        terms = np.concatenate(([pos[i]], np.delete(s[i], i)))
        top = terms.max()
        total += -pos[i] + top + np.log(np.sum(np.exp(terms - top)))
    return float(total / n)
