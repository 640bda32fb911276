"""Linear probes on frozen features.

Classes are 0-based indices.  ``B`` is ``k x r`` and the prediction for a
vertex is the argmax of ``f(x) @ B``; ties go to the lowest class index.
"""

from dataclasses import dataclass, asdict
from typing import NamedTuple, Optional

import numpy as np

from .errors import Divergence, ShapeMismatch, SingularQ, UnknownNatural
from .graph import AugmentationGraph

TIE_RTOL = 1e-9


@dataclass
class LinearProbe:
    B: np.ndarray
    C_lambda: Optional[float] = None

    def __post_init__(self):
        self.B = np.asarray(self.B, dtype=float)
        if not np.all(np.isfinite(self.B)):
            raise ValueError("probe weights must be finite")
        if self.C_lambda is not None and np.linalg.norm(self.B) > 1.0 / self.C_lambda + 1e-9:
            raise ValueError("probe violates its norm budget")


@dataclass
class ProbeReport:
    augmented_error: float
    ensemble_error: float
    capped_loss: float
    feature_sq_norm: float
    estimate: str = "given_probe"

    def __post_init__(self):
        for name in ("augmented_error", "ensemble_error"):
            v = getattr(self, name)
            if not -1e-12 <= v <= 1 + 1e-12:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def to_dict(self):
        return asdict(self)


def _argmax_low(scores, rtol=TIE_RTOL):
    """Row-wise argmax; entries within ``rtol`` of the row max count as ties."""
    scores = np.atleast_2d(scores)
    top = scores.max(axis=1, keepdims=True)
    scale = np.maximum(np.abs(scores).max(axis=1, keepdims=True), 1e-300)
    tied = scores >= top - rtol * scale
    return np.argmax(tied, axis=1)


def _weights(B):
    return B.B if isinstance(B, LinearProbe) else np.asarray(B, dtype=float)


def predict_all(f, B) -> np.ndarray:
    f = np.atleast_2d(np.asarray(f, dtype=float))
    B = _weights(B)
    if f.shape[1] != B.shape[0]:
        raise ShapeMismatch(f"features are {f.shape[1]}-dim, probe expects {B.shape[0]}")
    return _argmax_low(f @ B)


def predict(f, B, x=None) -> int:
    """Class of a single vertex: ``f`` may be a table (with index ``x``) or one vector."""
    f = np.asarray(f, dtype=float)
    row = f if x is None else f[x]
    return int(predict_all(row[None, :], B)[0])


def ensemble_predict_all(f, B, g: AugmentationGraph) -> np.ndarray:
    preds = predict_all(f, B)
    onehot = np.zeros((g.N, _weights(B).shape[1]))
    onehot[np.arange(g.N), preds] = 1.0
    votes = g.kernel @ onehot
    return _argmax_low(votes, rtol=1e-12)


def ensemble_predict(f, B, natural_id, g: AugmentationGraph) -> int:
    i = natural_id if isinstance(natural_id, (int, np.integer)) else g.natural_index(natural_id)
    if not 0 <= i < g.n_naturals:
        raise UnknownNatural(natural_id)
    return int(ensemble_predict_all(f, B, g)[i])


def capped_loss(f, B, mass) -> float:
    """Sum over (x, c) of ``mass[x, c] * sum_j min((f(x) B - e_c)_j^2, 1)``."""
    logits = np.asarray(f, dtype=float) @ _weights(B)
    r = logits.shape[1]
    total = 0.0
    for c in range(r):
        res = logits.copy()
        res[:, c] -= 1.0
        total += mass[:, c] @ np.minimum(res * res, 1.0).sum(axis=1)
    return float(total)


def _capped_grad(f, B, mass):
    logits = f @ B
    G = np.zeros_like(logits)
    for c in range(B.shape[1]):
        res = logits.copy()
        res[:, c] -= 1.0
        active = res * res < 1.0
        G += mass[:, c:c + 1] * 2.0 * res * active
    return f.T @ G


def feature_sq_norm(f, g: AugmentationGraph) -> float:
    f = np.asarray(f, dtype=float)
    return float(g.vertex_weights @ np.sum(f * f, axis=1))


def augmented_error(f, B, g: AugmentationGraph) -> float:
    preds = predict_all(f, B)
    return float(1.0 - g.class_mass[np.arange(g.N), preds].sum())


def probe_error(f, B, g: AugmentationGraph, estimate="given_probe") -> ProbeReport:
    f = np.asarray(f, dtype=float)
    if f.shape[0] != g.N:
        raise ShapeMismatch(f"feature table has {f.shape[0]} rows, graph has {g.N} vertices")
    ens = ensemble_predict_all(f, B, g)
    ens_err = float(g.natural_probs @ (ens != g.natural_labels))
    return ProbeReport(
        augmented_error=max(augmented_error(f, B, g), 0.0),
        ensemble_error=ens_err,
        capped_loss=capped_loss(f, B, g.class_mass),
        feature_sq_norm=feature_sq_norm(f, g),
        estimate=estimate,
    )


@dataclass
class ProbeFitConfig:
    steps: int = 500
    init: str = "least_squares"


def labeled_mass(g: AugmentationGraph, samples) -> np.ndarray:
    """Empirical ``N x r`` mass from labeled ``(vertex_index, class)`` samples."""
    mass = np.zeros((g.N, g.r))
    for x, c in samples:
        mass[int(x), int(c)] += 1.0
    return mass / max(len(samples), 1)


def sample_labeled(g: AugmentationGraph, n: int, rng):
    """Draw ``n`` labeled augmentations: natural point, one augmentation, its label."""
    nat = rng.choice(g.n_naturals, size=n, p=g.natural_probs)
    out = []
    for i in nat:
        x = rng.choice(g.N, p=g.kernel[i] / g.kernel[i].sum())
        out.append((int(x), int(g.natural_labels[i])))
    return out


def _project(B, radius):
    norm = np.linalg.norm(B)
    return B if norm <= radius else B * (radius / norm)


def fit_probe_capped(f, g: AugmentationGraph, C_lambda: float, opt_cfg: ProbeFitConfig = None,
                     samples=None) -> LinearProbe:
    """Projected gradient descent on the capped quadratic loss over ``||B||_F <= 1/C_lambda``.

    With ``samples`` the loss is the empirical one over those labeled points;
    otherwise it is the exact population loss.  Returns the best iterate.
    """
    if C_lambda <= 0:
        raise ValueError("C_lambda must be positive")
    opt_cfg = opt_cfg or ProbeFitConfig()
    f = np.asarray(f, dtype=float)
    mass = g.class_mass if samples is None else labeled_mass(g, samples)
    radius = 1.0 / C_lambda
    k, r = f.shape[1], g.r
    m = mass.sum(axis=1)
    gram = f.T @ (m[:, None] * f)
    if opt_cfg.init == "least_squares":
        B = np.linalg.pinv(gram) @ (f.T @ mass)
    else:
        B = np.zeros((k, r))
    B = _project(B, radius)
    lip = 2.0 * float(np.linalg.eigvalsh(gram)[-1]) if k else 0.0
    step = 1.0 / lip if lip > 0 else 0.0
    best_B, best = B, capped_loss(f, B, mass)
    for _ in range(opt_cfg.steps):
        if step == 0:
            break
        B = _project(B - step * _capped_grad(f, B, mass), radius)
        val = capped_loss(f, B, mass)
        if not np.isfinite(val):
            raise Divergence("capped loss became non-finite")
        if val < best:
            best, best_B = val, B
    return LinearProbe(best_B, C_lambda)


def search_probe_error(f, g: AugmentationGraph, trials=2000, seed=0, scale=None):
    """Smallest ensemble error over random probes; a crude cross-check of the best probe."""
    f = np.asarray(f, dtype=float)
    rng = np.random.default_rng(seed)
    k, r = f.shape[1], g.r
    if scale is None:
        scale = 1.0 / max(np.sqrt(np.mean(np.sum(f * f, axis=1))), 1e-12)
    best, best_B = np.inf, None
    for _ in range(trials):
        B = rng.normal(size=(k, r)) * scale
        ens = ensemble_predict_all(f, B, g)
        err = float(g.natural_probs @ (ens != g.natural_labels))
        if err < best:
            best, best_B = err, B
    return best, best_B


def linear_probe_error(f, g: AugmentationGraph, C_lambda=None, search_trials=2000, seed=0):
    """Upper estimate of the best-probe ensemble error.

    Uses the capped-quadratic fit; when ``k * r <= 6`` a random search over probes
    is also run and the better of the two is reported, labeled in ``estimate``.
    """
    f = np.asarray(f, dtype=float)
    if C_lambda is None:
        C_lambda = 1e-6
    probe = fit_probe_capped(f, g, C_lambda)
    report = probe_error(f, probe.B, g, estimate="capped_fit")
    if f.shape[1] * g.r <= 6 and search_trials:
        err, B = search_probe_error(f, g, search_trials, seed)
        if err < report.ensemble_error:
            report = probe_error(f, B, g, estimate="capped_fit+random_search")
            return report, LinearProbe(B)
        report.estimate = "capped_fit+random_search"
    return report, probe


class TransformedProbe(NamedTuple):
    features: np.ndarray
    probe: np.ndarray
    condition_number: float


def transform_probe(F, B, D, Q) -> TransformedProbe:
    """Return ``(D F Q, Q^-1 B, cond(Q))``; predictions are unchanged."""
    F = np.asarray(F, dtype=float)
    B = _weights(B)
    d = np.asarray(D, dtype=float)
    if d.ndim == 2:
        d = np.diag(d)
    if np.any(d <= 0):
        raise ValueError("D must have a positive diagonal")
    Q = np.asarray(Q, dtype=float)
    cond = float(np.linalg.cond(Q))
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularQ(f"Q is singular or numerically singular (cond={cond:.3e})")
    return TransformedProbe(d[:, None] * F @ Q, np.linalg.solve(Q, B), cond)
