"""Conductance, sparsest multiway partitions, extended labelings and eigenvector lemmas.

Two self-loop conventions are supported wherever conductance appears.  The
literal one divides by the full vertex weight w_x, which includes w[x, x].
With ``exclude_self_loops`` the denominator drops w[x, x], which makes every
singleton have conductance exactly 1.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptySet,
    RankDeficient,
    TooLargeForExact,
    ZeroSpectralGap,
    ZeroVector,
)
from .graph import AugmentationGraph, NormalizedMatrices
from .spectral import SpectralDecomposition

logger = logging.getLogger(__name__)

EXACT_CAP = 14


@dataclass
class PartitionResult:
    m: int
    best_partition: list
    rho: float
    enumeration_count: int
    exact: bool = True
    part_conductances: list = field(default_factory=list)


def _as_mask(g: AugmentationGraph, S) -> np.ndarray:
    S = np.asarray(S)
    if S.dtype == bool:
        if S.shape != (g.N,):
            raise ValueError("boolean set mask must have length N")
        return S.copy()
    mask = np.zeros(g.N, dtype=bool)
    mask[S.astype(np.int64)] = True
    return mask


def _denominators(g: AugmentationGraph, exclude_self_loops: bool) -> np.ndarray:
    wx = np.array(g.vertex_weights)
    if exclude_self_loops:
        wx = wx - np.diag(g.pair_weights)
    return wx


def conductance(g: AugmentationGraph, S, exclude_self_loops: bool = False) -> float:
    """Boundary weight of ``S`` divided by its (convention-dependent) volume."""
    mask = _as_mask(g, S)
    if not mask.any():
        raise EmptySet("conductance of the empty set is undefined")
    if mask.all():
        logger.info("conductance of the full vertex set is 0 by convention")
    cut = g.pair_weights[np.ix_(mask, ~mask)].sum()
    vol = _denominators(g, exclude_self_loops)[mask].sum()
    if vol <= 0:
        return 0.0
    return float(cut / vol)


def all_subset_conductances(g: AugmentationGraph, exclude_self_loops: bool = False) -> np.ndarray:
    """Conductance of every nonempty subset, indexed by bitmask (bit j = vertex j)."""
    N = g.N
    masks = np.arange(1 << N, dtype=np.int64)
    member = ((masks[:, None] >> np.arange(N)) & 1).astype(float)
    W = np.asarray(g.pair_weights)
    cut = np.einsum("si,si->s", member @ W, 1.0 - member)
    denom = member @ _denominators(g, exclude_self_loops)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(denom > 0, cut / np.where(denom > 0, denom, 1.0), 0.0)
    phi[0] = np.inf
    return phi


def set_partitions(n: int, m: int = None):
    """Yield restricted growth strings of length ``n`` (optionally with exactly ``m`` blocks).

    A restricted growth string ``a`` has ``a[0] = 0`` and ``a[i] <= 1 + max(a[:i])``;
    these are in bijection with set partitions of ``range(n)``.
    """
    if n == 0:
        if m in (None, 0):
            yield ()
        return
    a = [0] * n

    def rec(i, top):
        if i == n:
            if m is None or top + 1 == m:
                yield tuple(a)
            return
        if m is not None and (top + 1) + (n - i) < m:
            return
        limit = top + 1 if m is None else min(top + 1, m - 1)
        for v in range(limit + 1):
            a[i] = v
            yield from rec(i + 1, max(top, v))

    yield from rec(1, 0)


def _blocks(labels):
    parts = {}
    for i, c in enumerate(labels):
        parts.setdefault(int(c), []).append(i)
    return [parts[c] for c in sorted(parts)]


def sparsest_m_partition_bruteforce(g: AugmentationGraph, m: int,
                                    exclude_self_loops: bool = False) -> PartitionResult:
    """Direct enumeration of all m-block set partitions; only for small graphs."""
    if not 2 <= m <= g.N:
        raise ValueError(f"m={m} outside [2, {g.N}]")
    phi = all_subset_conductances(g, exclude_self_loops)
    weights = 1 << np.arange(g.N)
    best, best_rgs, count = np.inf, None, 0
    for rgs in set_partitions(g.N, m):
        count += 1
        lab = np.asarray(rgs)
        worst = max(phi[int(weights[lab == c].sum())] for c in range(m))
        if worst < best:
            best, best_rgs = worst, rgs
    parts = _blocks(best_rgs)
    return PartitionResult(m, parts, float(best), count, True,
                           [conductance(g, p, exclude_self_loops) for p in parts])


class _PartitionTable:
    """Min-max dynamic program over vertex subsets.

    ``value[j, mask]`` is the smallest achievable maximum part conductance over
    partitions of ``mask`` into ``j`` nonempty parts (conductance always taken
    in the whole graph).  Parts are peeled off in a canonical order: the part
    holding the lowest vertex of ``mask`` first, so each partition is met once.
    """

    def __init__(self, g: AugmentationGraph, m_max: int, exclude_self_loops: bool):
        N = g.N
        full = (1 << N) - 1
        phi = all_subset_conductances(g, exclude_self_loops)
        value = np.full((m_max + 1, 1 << N), np.inf)
        value[0, 0] = 0.0
        choice = np.zeros((m_max + 1, 1 << N), dtype=np.int64)
        combos = {}
        count = 0
        for mask in range(1, full + 1):
            low = mask & -mask
            others = [1 << b for b in range(N) if (mask >> b) & 1 and (1 << b) != low]
            p = len(others)
            if p not in combos:
                idx = np.arange(1 << p, dtype=np.int64)
                combos[p] = ((idx[:, None] >> np.arange(p)) & 1).astype(np.int64)
            subs = low + combos[p] @ np.asarray(others, dtype=np.int64) if p else np.array([low])
            rest = mask - subs
            cand = np.maximum(phi[subs][None, :], value[:m_max, rest])
            best = np.argmin(cand, axis=1)
            value[1:, mask] = cand[np.arange(m_max), best]
            choice[1:, mask] = subs[best]
            count += len(subs) * m_max
        self.N = N
        self.value = value
        self.choice = choice
        self.count = count
        self.full = full

    def partition(self, m):
        parts, mask = [], self.full
        for j in range(m, 0, -1):
            s = int(self.choice[j, mask])
            parts.append([b for b in range(self.N) if (s >> b) & 1])
            mask -= s
        return sorted(parts)


def sparsest_partition_profile(g: AugmentationGraph, m_max: int = None,
                               exclude_self_loops: bool = False) -> dict:
    """Exact ``rho_m`` and an optimal partition for every ``2 <= m <= m_max``."""
    N = g.N
    if N > EXACT_CAP:
        raise TooLargeForExact(f"N={N} exceeds the exact cap {EXACT_CAP}")
    m_max = N if m_max is None else m_max
    table = _PartitionTable(g, m_max, exclude_self_loops)
    out = {}
    for m in range(2, m_max + 1):
        parts = table.partition(m)
        phis = [conductance(g, p, exclude_self_loops) for p in parts]
        # report the directly recomputed max; the table value agrees to rounding
        out[m] = PartitionResult(m, parts, float(max(phis)), table.count, True, phis)
    return out


def sparsest_m_partition(g: AugmentationGraph, m: int, exclude_self_loops: bool = False,
                         allow_heuristic: bool = False, seed: int = 0) -> PartitionResult:
    if not 2 <= m <= g.N:
        raise ValueError(f"m={m} outside [2, {g.N}]")
    if g.N > EXACT_CAP:
        if not allow_heuristic:
            raise TooLargeForExact(f"N={g.N} exceeds the exact cap {EXACT_CAP}")
        return sparsest_m_partition_local_search(g, m, exclude_self_loops, seed=seed)
    return sparsest_partition_profile(g, m, exclude_self_loops)[m]


def _kmeans(X, m, rng, iters=50):
    centers = [X[rng.integers(len(X))]]
    for _ in range(1, m):
        d = np.min([np.sum((X - c) ** 2, axis=1) for c in centers], axis=0)
        centers.append(X[int(np.argmax(d))])
    C = np.array(centers)
    lab = np.zeros(len(X), dtype=np.int64)
    for _ in range(iters):
        lab = np.argmin(((X[:, None, :] - C[None]) ** 2).sum(-1), axis=1)
        for c in range(m):
            if np.any(lab == c):
                C[c] = X[lab == c].mean(axis=0)
    return lab


def sparsest_m_partition_local_search(g: AugmentationGraph, m: int,
                                      exclude_self_loops: bool = False,
                                      restarts: int = 8, seed: int = 0,
                                      max_passes: int = 50) -> PartitionResult:
    """Heuristic upper bound on ``rho_m``; the result is marked ``exact=False``.

    Starts from a k-means split of the spectral embedding (and random splits on
    later restarts) and moves single vertices while the objective
    ``max conductance + 1e-3 * sum conductance`` decreases.
    """
    N = g.N
    W = np.asarray(g.pair_weights)
    den = _denominators(g, exclude_self_loops)
    wx = np.asarray(g.vertex_weights)
    rng = np.random.default_rng(seed)
    s = np.sqrt(wx)
    vals, vecs = np.linalg.eigh(W / s[:, None] / s[None, :])
    emb = vecs[:, ::-1][:, :m] / s[:, None]
    emb /= np.maximum(np.linalg.norm(emb, axis=1, keepdims=True), 1e-300)

    def score(cut, vol):
        phi = np.where(vol > 0, cut / np.where(vol > 0, vol, 1.0), np.inf)
        return phi.max() + 1e-3 * phi.sum(), phi

    best = (np.inf, None)
    evaluations = 0
    for attempt in range(restarts):
        lab = _kmeans(emb, m, rng) if attempt == 0 else rng.integers(m, size=N)
        for c in range(m):
            if not np.any(lab == c):
                lab[rng.integers(N)] = c
        onehot = np.eye(m)[lab]
        link = W @ onehot                      # link[v, c] = weight from v into part c
        vol = den @ onehot
        inner = np.einsum("vc,vc->c", link, onehot)
        cut = (wx @ onehot) - inner
        cur, _ = score(cut, vol)
        for _ in range(max_passes):
            improved = False
            for v in rng.permutation(N):
                a = lab[v]
                if np.sum(lab == a) == 1:
                    continue
                for b in range(m):
                    if b == a:
                        continue
                    evaluations += 1
                    cut2, vol2 = cut.copy(), vol.copy()
                    # moving v from a to b
                    cut2[a] += -wx[v] + W[v, v] + 2 * link[v, a] - 2 * W[v, v]
                    cut2[b] += wx[v] - W[v, v] - 2 * link[v, b]
                    vol2[a] -= den[v]
                    vol2[b] += den[v]
                    new, _ = score(cut2, vol2)
                    if new < cur - 1e-15:
                        lab[v] = b
                        link[:, a] -= W[:, v]
                        link[:, b] += W[:, v]
                        cut, vol, cur = cut2, vol2, new
                        improved = True
                        a = b
            if not improved:
                break
        _, phi = score(cut, vol)
        if phi.max() < best[0]:
            best = (float(phi.max()), lab.copy())
    parts = _blocks(best[1])
    phis = [conductance(g, p, exclude_self_loops) for p in parts]
    return PartitionResult(m, parts, float(max(phis)), evaluations, False, phis)


# --- labelings ---------------------------------------------------------------

def bayes_alpha(g: AugmentationGraph):
    """Smallest error of any vertex classifier, and the labeling achieving it."""
    labeling = np.argmax(g.class_mass, axis=1)
    alpha = 1.0 - g.class_mass.max(axis=1).sum()
    return max(float(alpha), 0.0), labeling


def phi_hat(g: AugmentationGraph, yhat) -> float:
    yhat = np.asarray(yhat)
    differ = yhat[:, None] != yhat[None, :]
    return float(np.sum(g.pair_weights * differ))


def phi_class(g: AugmentationGraph, yhat, i) -> float:
    """Edge mass leaving the vertices labeled ``i``, over their total weight."""
    inside = np.asarray(yhat) == i
    cut = g.pair_weights[np.ix_(inside, ~inside)].sum() * 2.0
    return float(cut / g.vertex_weights[inside].sum())


def delta_mismatch(g: AugmentationGraph, yhat) -> float:
    yhat = np.asarray(yhat, dtype=np.int64)
    return max(float(1.0 - g.class_mass[np.arange(g.N), yhat].sum()), 0.0)


def class_indicator_vector(g: AugmentationGraph, yhat, i) -> np.ndarray:
    return np.sqrt(g.vertex_weights) * (np.asarray(yhat) == i)


def rayleigh_quotient(m: NormalizedMatrices, u) -> float:
    u = np.asarray(u, dtype=float)
    nrm = u @ u
    if nrm == 0:
        raise ZeroVector("Rayleigh quotient of the zero vector")
    return float(u @ m.laplacian @ u / nrm)


def rayleigh_quotient_of_function(g: AugmentationGraph, f) -> float:
    """Same quotient for ``u = sqrt(w) * f`` written as an edge sum."""
    f = np.asarray(f, dtype=float)
    den = g.vertex_weights @ (f * f)
    if den == 0:
        raise ZeroVector("Rayleigh quotient of the zero function")
    diff = f[:, None] - f[None, :]
    return float(0.5 * np.sum(g.pair_weights * diff * diff) / den)


def approximate_in_span(dec: SpectralDecomposition, u, k: int, check: bool = True):
    """Coefficients of ``u`` on the top-k eigenvectors and the squared residual.

    Also checks ``residual <= R(u) / lambda_{k+1} * ||u||^2`` and ``||b|| <= ||u||``.
    """
    u = np.asarray(u, dtype=float)
    nrm = float(u @ u)
    if nrm == 0:
        raise ZeroVector("cannot approximate the zero vector")
    if k >= dec.N:
        raise ValueError("k must be smaller than N")
    lam_next = float(dec.lambdas[k])
    if lam_next <= 1e-12:
        raise ZeroSpectralGap(f"lambda_{k + 1} = {lam_next:.3e}")
    V = dec.eigenvectors[:, :k]
    b = V.T @ u
    resid = u - V @ b
    residual_sq = float(resid @ resid)
    if check:
        coeffs = dec.eigenvectors.T @ u
        rq = float(np.sum(dec.lambdas * coeffs ** 2) / nrm)
        bound = rq / lam_next * nrm
        assert residual_sq <= bound + 1e-10 * nrm, (residual_sq, bound)
        assert float(b @ b) <= nrm * (1 + 1e-12), (b @ b, nrm)
    return b, residual_sq


def projection_residuals(F, dec: SpectralDecomposition, k: int = None) -> np.ndarray:
    """``||P_perp v_i||^2`` for the first ``k`` eigenvectors, P_perp projecting off span(F)."""
    F = np.asarray(F, dtype=float)
    k = F.shape[1] if k is None else k
    sv = np.linalg.svd(F, compute_uv=False)
    if sv.size == 0 or sv[-1] <= 1e-10:
        raise RankDeficient(f"smallest singular value {sv[-1] if sv.size else 0:.3e}")
    Qf, _ = np.linalg.qr(F)
    V = dec.eigenvectors[:, :k]
    resid = V - Qf @ (Qf.T @ V)
    return np.sum(resid * resid, axis=0)


def projection_residual(F, dec: SpectralDecomposition, i: int) -> float:
    """Residual for eigenvector ``i`` (0-based, ``i < F.shape[1]``)."""
    F = np.asarray(F, dtype=float)
    if not 0 <= i < F.shape[1]:
        raise ValueError(f"i={i} outside [0, {F.shape[1]})")
    return float(projection_residuals(F, dec, i + 1)[i])
