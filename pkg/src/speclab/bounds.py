"""Explicit linear-probe error bounds evaluated against measured errors.

Every evaluation recomputes its spectral and labeling inputs from the graph.
A caller-supplied decomposition is accepted only if it matches the
recomputed spectrum.
"""

import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .contrastive import loss_constant, population_loss
from .errors import (
    DimensionTooLarge,
    EpsilonTooLarge,
    InvariantViolation,
    ZeroRho,
    ZeroSpectralGap,
)
from .graph import AugmentationGraph, normalized_matrices
from .partition import delta_mismatch, phi_hat
from .probe import augmented_error, fit_probe_capped
from .spectral import (
    SpectralDecomposition,
    best_rank_k_value,
    eckart_young_minimizer,
    eigendecompose,
)

HOLD_TOL = 1e-9
GAP_TOL = 1e-12


@dataclass
class BoundEvaluation:
    name: str
    bound_value: float
    measured_value: float
    inputs: dict
    holds: bool = field(init=False)
    margin: float = field(init=False)
    checks: dict = field(default_factory=dict)

    def __post_init__(self):
        self.holds = bool(self.measured_value <= self.bound_value + HOLD_TOL)
        self.margin = float(self.bound_value - self.measured_value)

    def to_dict(self):
        return _jsonable(asdict(self))


@dataclass
class VerificationReport:
    theorem: str
    inputs: dict
    bound: float
    measured: float
    holds: bool
    seed: Optional[int]
    graph_digest: str
    tolerances: dict
    details: dict = field(default_factory=dict)

    @classmethod
    def from_evaluation(cls, ev: BoundEvaluation, g: AugmentationGraph, seed=None):
        return cls(ev.name, ev.inputs, ev.bound_value, ev.measured_value, ev.holds,
                   seed, g.digest(), {"holds": HOLD_TOL}, {"checks": ev.checks})

    def to_dict(self):
        return _jsonable(asdict(self))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _decomposition(g: AugmentationGraph, k: int, dec: Optional[SpectralDecomposition]):
    fresh = eigendecompose(normalized_matrices(g), k)
    if dec is not None and (dec.eigenvalues.shape != fresh.eigenvalues.shape
                            or not np.allclose(dec.eigenvalues, fresh.eigenvalues, atol=1e-8)):
        raise InvariantViolation("supplied decomposition does not match the graph")
    if k >= fresh.N:
        raise DimensionTooLarge(f"k={k} leaves no lambda_(k+1) for N={fresh.N}")
    return fresh


def _clean(lam):
    return 0.0 if abs(lam) < GAP_TOL else float(lam)


def population_minimizer(g: AugmentationGraph, k: int, dec=None) -> np.ndarray:
    """Exact population minimizer: Eckart-Young factor rescaled by 1/sqrt(w_x)."""
    dec = dec if dec is not None else eigendecompose(normalized_matrices(g), k)
    F = eckart_young_minimizer(dec.with_k(k), k)
    return F / np.sqrt(g.vertex_weights)[:, None]


def quadratic_probe_loss(f, B, g: AugmentationGraph) -> float:
    """E ||onehot(y(natural)) - f(x) B||^2 over natural points and augmentations."""
    logits = np.asarray(f, dtype=float) @ np.asarray(B, dtype=float)
    total = 0.0
    for c in range(g.r):
        res = logits.copy()
        res[:, c] -= 1.0
        total += g.class_mass[:, c] @ np.sum(res * res, axis=1)
    return float(total)


def procrustes_alignment(F_target, F_mf):
    """Orthogonal Q minimizing ||F_target Q - F_mf||_F, with the residual."""
    M = F_target.T @ F_mf
    U, _, Vt = np.linalg.svd(M)
    Q = U @ Vt
    return Q, float(np.linalg.norm(F_target @ Q - F_mf))


def constructed_probe(g: AugmentationGraph, dec: SpectralDecomposition, yhat, k: int, f):
    """Probe built from eigenvector coefficients of the class indicators.

    ``b_i`` holds the top-k eigen-coefficients of ``sqrt(w) * 1[yhat = i]``.
    The probe maps features to these coefficients through the Procrustes
    alignment between ``sqrt(w) f`` and ``V_k diag(sqrt(gamma))``; eigen
    directions with gamma = 0 carry no signal and get zero weight.
    """
    yhat = np.asarray(yhat, dtype=np.int64)
    s = np.sqrt(g.vertex_weights)
    U = np.stack([s * (yhat == i) for i in range(g.r)], axis=1)
    V = dec.eigenvectors[:, :k]
    gam = np.clip(dec.eigenvalues[:k], 0.0, None)
    coef = V.T @ U
    root = np.sqrt(gam)
    F_mf = s[:, None] * np.asarray(f, dtype=float)
    Q, resid = procrustes_alignment(V * root, F_mf)
    inv = np.where(root > 1e-12, 1.0 / np.where(root > 1e-12, root, 1.0), 0.0)
    B = Q.T @ (inv[:, None] * coef)
    return B, resid


def _regression_probe(f, g: AugmentationGraph, yhat):
    """Weighted least squares of onehot(yhat) on f, weights w_x."""
    f = np.asarray(f, dtype=float)
    onehot = np.eye(g.r)[np.asarray(yhat, dtype=np.int64)]
    w = g.vertex_weights
    gram = f.T @ (w[:, None] * f)
    return np.linalg.pinv(gram) @ (f.T @ (w[:, None] * onehot))


def _measured_error(f, g, candidates):
    errs = {name: augmented_error(f, B, g) for name, B in candidates.items()}
    best = min(errs, key=errs.get)
    return max(errs[best], 0.0), best, errs


def bound_B2(g: AugmentationGraph, yhat, k: int, features=None, dec=None) -> BoundEvaluation:
    """Bound ``2 phi/lambda_(k+1) + 8 Delta`` on the augmented 0-1 error of a minimizer.

    ``features`` defaults to the exact population minimizer.  The measured
    error is the best over the constructed probe, a regression probe and a
    capped-loss fit.  The quadratic-loss form and the probe norm bound are
    checked for the constructed probe and reported in ``checks``.
    """
    dec = _decomposition(g, k, dec)
    lam = dec.lambdas
    lam_next = _clean(lam[k])
    if lam_next <= 0:
        raise ZeroSpectralGap(f"lambda_{k + 1} = {lam[k]:.3e}")
    f = population_minimizer(g, k, dec) if features is None else np.asarray(features, dtype=float)
    phi = phi_hat(g, yhat)
    delta = delta_mismatch(g, yhat)
    bound = 2.0 * phi / lam_next + 8.0 * delta

    B, align_resid = constructed_probe(g, dec, yhat, k, f)
    quad = quadratic_probe_loss(f, B, g)
    quad_bound = phi / lam_next + 4.0 * delta
    gamma_k = 1.0 - lam[k - 1]
    norm_bound = 1.0 / gamma_k if gamma_k > GAP_TOL else math.inf
    norm = float(np.linalg.norm(B))
    candidates = {
        "constructed": B,
        "regression": _regression_probe(f, g, yhat),
        "capped_fit": fit_probe_capped(f, g, 1e-6).B,
    }
    measured, which, errs = _measured_error(f, g, candidates)
    checks = {
        "quadratic_loss": quad,
        "quadratic_bound": quad_bound,
        "quadratic_holds": bool(quad <= quad_bound + 1e-6),
        "probe_norm": norm,
        "probe_norm_bound": norm_bound,
        "norm_holds": bool(norm <= norm_bound + 1e-6),
        "alignment_residual": align_resid,
        "probe_errors": errs,
        "best_probe": which,
    }
    inputs = {"k": k, "r": g.r, "lambda_k": float(lam[k - 1]), "lambda_k+1": lam_next,
              "phi_hat": phi, "delta": delta}
    return BoundEvaluation("B2", float(bound), measured, inputs, checks)


def contrastive_suboptimality(g: AugmentationGraph, f, dec: SpectralDecomposition) -> float:
    """``L(f) - min L`` over k-dim features, using the matrix-factorization optimum."""
    k = np.asarray(f).shape[1]
    optimum = best_rank_k_value(dec, k) - loss_constant(g)
    return max(population_loss(g, f) - optimum, 0.0)


def d2_terms(phi, epsilon, lambdas, k):
    """Terms ``2 phi/lambda_(k'+1) + 4 k' eps/(lambda_(k+1) - lambda_k')^2`` for k' = 1..k.

    A zero numerator makes its term zero even over a zero denominator.
    """
    out = []
    lk1 = _clean(lambdas[k])
    for kp in range(1, k + 1):
        lam_kp1 = _clean(lambdas[kp])
        gap = lk1 - _clean(lambdas[kp - 1])
        first = 0.0 if phi == 0 else (2.0 * phi / lam_kp1 if lam_kp1 > 0 else math.inf)
        second = 0.0 if epsilon == 0 else (4.0 * kp * epsilon / gap ** 2 if gap > 0 else math.inf)
        out.append(first + second)
    return out


def bound_D2(g: AugmentationGraph, yhat, k: int, features, epsilon=None, dec=None) -> BoundEvaluation:
    """Bound for an epsilon-optimal minimizer, minimized over k' explicitly.

    ``epsilon`` is measured from ``features``; a supplied value must agree.
    """
    dec = _decomposition(g, k, dec)
    f = np.asarray(features, dtype=float)
    measured_eps = contrastive_suboptimality(g, f, dec)
    if epsilon is not None and abs(epsilon - measured_eps) > 1e-9 * max(1.0, abs(measured_eps)):
        raise InvariantViolation(f"epsilon {epsilon!r} differs from measured {measured_eps!r}")
    eps = measured_eps
    gamma_k = 1.0 - dec.lambdas[k - 1]
    if not eps < gamma_k ** 2:
        raise EpsilonTooLarge(f"epsilon {eps:.3e} >= gamma_k^2 = {gamma_k ** 2:.3e}")
    phi = phi_hat(g, yhat)
    delta = delta_mismatch(g, yhat)
    terms = d2_terms(phi, eps, dec.lambdas, k)
    best_kp = int(np.argmin(terms)) + 1
    bound = min(terms) + delta
    candidates = {
        "regression": _regression_probe(f, g, yhat),
        "capped_fit": fit_probe_capped(f, g, 1e-6).B,
    }
    measured, which, errs = _measured_error(f, g, candidates)
    inputs = {"k": k, "r": g.r, "epsilon": eps, "phi_hat": phi, "delta": delta,
              "best_k_prime": best_kp, "lambda_k+1": float(dec.lambdas[k])}
    checks = {"terms": terms, "probe_errors": errs, "best_probe": which}
    return BoundEvaluation("D2", float(bound), measured, inputs, checks)


def bound_3_7_shape(alpha: float, rho: float, k: int) -> float:
    """``alpha * log(k) / rho^2``: the bound's shape with its hidden constant dropped."""
    if rho <= 0:
        raise ZeroRho("rho must be positive")
    if k < 1:
        raise ValueError("k must be positive")
    return float(alpha * math.log(k) / rho ** 2)
