"""Command-line entry point.

Exit codes: 0 success, 1 a verified bound was violated, 2 usage or input error.
"""

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .bounds import VerificationReport, bound_B2, bound_D2, contrastive_suboptimality
from .contrastive import loss_constant
from .errors import EpsilonTooLarge, SpeclabError, SpecValidationError
from .generators import generate_from_spec, load_spec
from .graph import load_graph, normalized_matrices, save_graph
from .partition import (
    EXACT_CAP,
    approximate_in_span,
    bayes_alpha,
    class_indicator_vector,
    conductance,
    delta_mismatch,
    phi_class,
    phi_hat,
    projection_residuals,
    rayleigh_quotient,
    sparsest_partition_profile,
)
from .probe import (
    ProbeFitConfig,
    fit_probe_capped,
    linear_probe_error,
    probe_error,
    sample_labeled,
)
from .spectral import best_rank_k_value, eigendecompose
from .trainer import (
    FeatureMap,
    TrainConfig,
    feature_map_from_tensors,
    load_checkpoint,
    save_checkpoint,
    suggested_learning_rate,
    train_minibatch,
    train_nonparametric,
)

SEED_ENV = "SPECLAB_SEED"
SUITES = ("b2", "d2", "lemmas", "partitions", "all")

logger = logging.getLogger("speclab")


class UsageError(Exception):
    pass


def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _manifest(args, started, digest=None):
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    return {
        "command": args.command,
        "flags": flags,
        "seed": getattr(args, "seed", None),
        "graph_digest": digest,
        "version": __version__,
        "wall_time_s": round(time.time() - started, 6),
    }


def _emit(doc, out=None):
    text = json.dumps(doc, indent=2, sort_keys=True, default=_default)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(type(obj).__name__)


# --- commands ----------------------------------------------------------------

def cmd_generate(args, started):
    g = generate_from_spec(load_spec(args.spec))
    save_graph(g, args.out)
    _emit({"manifest": _manifest(args, started, g.digest()), "N": g.N,
           "n_naturals": g.n_naturals, "r": g.r}, args.report)
    return 0


def cmd_check(args, started):
    g = load_graph(args.graph)
    g.check_invariants()
    normalized_matrices(g)
    _emit({"manifest": _manifest(args, started, g.digest()), "ok": True, "N": g.N})
    return 0


def cmd_spectral(args, started):
    g = load_graph(args.graph)
    if not 1 <= args.k <= g.N:
        raise UsageError(f"--k must lie in [1, {g.N}]")
    dec = eigendecompose(normalized_matrices(g), args.k)
    doc = {
        "manifest": _manifest(args, started, g.digest()),
        "k": args.k,
        "eigenvalues": dec.eigenvalues,
        "laplacian_eigenvalues": np.sort(dec.lambdas),
        "lambda_1": float(dec.lambdas[0]),
        "best_rank_k_value": best_rank_k_value(dec, args.k),
        "loss_constant": loss_constant(g),
    }
    _emit(doc, args.out)
    return 0


def _write_trace(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss"])
        for i, v in enumerate(history):
            w.writerow([i, format(float(v), ".17g")])


def cmd_train(args, started):
    g = load_graph(args.graph)
    lr = suggested_learning_rate(g) if args.lr is None else args.lr
    cfg = TrainConfig(k=args.k, learning_rate=lr, max_steps=args.steps, seed=args.seed,
                      mode=args.mode, batch_size=args.batch_size, sphere_radius_sq=args.mu)
    meta = {"mode": args.mode, "k": args.k, "seed": args.seed, "graph_digest": g.digest()}
    if args.mode == "full_population":
        f, history = train_nonparametric(g, cfg)
        save_checkpoint(args.out, [("features", f)], meta)
    else:
        if g.payloads is None:
            raise UsageError("minibatch mode needs a graph with vertex payloads")
        dims = [g.payloads.shape[1], args.hidden, args.k]
        fmap = FeatureMap.random(dims, seed=args.seed, radius_sq=args.mu)
        fmap, history = train_minibatch(g, fmap, cfg)
        meta["radius_sq"] = args.mu
        save_checkpoint(args.out, fmap.named_parameters(), meta)
    _write_trace(args.loss_csv, history)
    _emit({"manifest": _manifest(args, started, g.digest()),
           "final_loss": float(history[-1]), "steps": len(history) - 1}, args.report)
    return 0


def _features_from_checkpoint(g, path):
    if not os.path.exists(path):
        raise UsageError(f"checkpoint {path!r} not found")
    tensors, meta = load_checkpoint(path)
    if "features" in tensors:
        f = tensors["features"]
        if f.shape[0] != g.N:
            raise UsageError("checkpoint features do not match the graph")
        return f
    return feature_map_from_tensors(tensors, meta.get("radius_sq")).table(g)


def cmd_probe(args, started):
    g = load_graph(args.graph)
    f = _features_from_checkpoint(g, args.checkpoint)
    doc = {"manifest": _manifest(args, started, g.digest())}
    if not args.n_labeled:
        report, _ = linear_probe_error(f, g, C_lambda=args.c_lambda, seed=args.seed)
        doc["report"] = report.to_dict()
    else:
        rows = []
        for n in args.n_labeled:
            rng = np.random.default_rng([args.seed, n])
            samples = sample_labeled(g, n, rng)
            probe = fit_probe_capped(f, g, args.c_lambda, ProbeFitConfig(), samples)
            rep = probe_error(f, probe.B, g, estimate=f"capped_fit_n={n}")
            rows.append({"n_labeled": n, **rep.to_dict()})
        doc["sweep"] = rows
        if args.csv:
            with open(args.csv, "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=["n_labeled", "ensemble_error", "augmented_error"])
                w.writeheader()
                for row in rows:
                    w.writerow({k: row[k] for k in w.fieldnames})
    _emit(doc, args.out)
    return 0


def _suite_b2(g, k, seed):
    _, y = bayes_alpha(g)
    ev = bound_B2(g, y, k)
    rep = VerificationReport.from_evaluation(ev, g, seed).to_dict()
    ok = ev.holds and ev.checks["quadratic_holds"] and ev.checks["norm_holds"]
    return rep, ok


def _trained(g, k, seed, steps):
    cfg = TrainConfig(k=k, learning_rate=suggested_learning_rate(g), max_steps=steps, seed=seed)
    return train_nonparametric(g, cfg)[0]


def _suite_d2(g, k, seed, steps):
    _, y = bayes_alpha(g)
    f = _trained(g, k, seed, steps)
    try:
        ev = bound_D2(g, y, k, f)
    except EpsilonTooLarge as exc:
        return {"theorem": "D2", "skipped": str(exc)}, True
    return VerificationReport.from_evaluation(ev, g, seed).to_dict(), ev.holds


def _suite_lemmas(g, k, seed, steps):
    m = normalized_matrices(g)
    dec = eigendecompose(m, k)
    alpha, y = bayes_alpha(g)
    out = {"alpha": alpha, "phi_hat": phi_hat(g, y), "delta": delta_mismatch(g, y)}
    out["phi_le_2alpha"] = out["phi_hat"] <= 2 * alpha + 1e-10
    out["delta_le_alpha"] = out["delta"] <= alpha + 1e-10
    identity = []
    for i in range(g.r):
        if np.any(y == i):
            u = class_indicator_vector(g, y, i)
            identity.append(abs(rayleigh_quotient(m, u) - 0.5 * phi_class(g, y, i)))
    out["rayleigh_identity_max_err"] = max(identity) if identity else 0.0
    out["rayleigh_identity"] = out["rayleigh_identity_max_err"] <= 1e-10
    rng = np.random.default_rng(seed)
    ok_span = True
    if dec.lambdas[k] > 1e-12:
        for _ in range(50):
            try:
                approximate_in_span(dec, rng.normal(size=g.N), k)
            except AssertionError:
                ok_span = False
    out["span_residual_bound"] = ok_span
    f = _trained(g, k, seed, steps)
    F = np.sqrt(g.vertex_weights)[:, None] * f
    eps = contrastive_suboptimality(g, f, dec)
    lam = dec.lambdas
    ok_proj = True
    if eps < (1 - lam[k - 1]) ** 2:
        resid = projection_residuals(F, dec, k)
        for i in range(k):
            gap = lam[k] - lam[i]
            if gap > 0 and resid[i] > eps / gap ** 2 + 1e-8:
                ok_proj = False
        out["projection_residuals"] = resid
    out["epsilon"] = eps
    out["projection_bound"] = ok_proj
    keys = ("phi_le_2alpha", "delta_le_alpha", "rayleigh_identity", "span_residual_bound",
            "projection_bound")
    ok = all(bool(out[key]) for key in keys)
    return {"theorem": "lemmas", **out, "holds": ok}, ok


def _suite_partitions(g):
    if g.N > EXACT_CAP:
        return {"theorem": "partitions", "skipped": f"N={g.N} above exact cap"}, True
    lit = sparsest_partition_profile(g)
    exc = sparsest_partition_profile(g, exclude_self_loops=True)
    rho = [lit[m].rho for m in sorted(lit)]
    mono = all(a <= b + 1e-12 for a, b in zip(rho, rho[1:]))
    singles = [conductance(g, [x], True) for x in range(g.N)]
    single_ok = all(abs(s - 1.0) <= 1e-12 for s in singles if s > 0)
    rho_N = exc[g.N].rho
    ok = mono and single_ok and abs(rho_N - 1.0) <= 1e-12
    doc = {"theorem": "partitions", "rho_literal": dict(zip(sorted(lit), rho)),
           "rho_exclude_self_loops": {m: exc[m].rho for m in sorted(exc)},
           "nondecreasing": mono, "singleton_conductance_one": single_ok,
           "rho_N_exclude": rho_N, "holds": ok}
    return doc, ok


def cmd_verify(args, started):
    if args.suite not in SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
    g = load_graph(args.graph)
    k = args.k if args.k is not None else min(g.r, g.N - 1)
    if not 1 <= k < g.N:
        raise UsageError(f"--k must lie in [1, {g.N - 1}]")
    chosen = ("b2", "d2", "lemmas", "partitions") if args.suite == "all" else (args.suite,)
    results, all_ok = {}, True
    for name in chosen:
        if name == "b2":
            doc, ok = _suite_b2(g, k, args.seed)
        elif name == "d2":
            doc, ok = _suite_d2(g, k, args.seed, args.steps)
        elif name == "lemmas":
            doc, ok = _suite_lemmas(g, k, args.seed, args.steps)
        else:
            doc, ok = _suite_partitions(g)
        results[name] = doc
        all_ok = all_ok and ok
    _emit({"manifest": _manifest(args, started, g.digest()), "k": k, "results": results,
           "holds": all_ok}, args.out)
    return 0 if all_ok else 1


# --- parser ------------------------------------------------------------------

def build_parser():
    seed = _default_seed()
    p = argparse.ArgumentParser(prog="speclab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("generate", help="build a graph from a JSON spec file")
    s.add_argument("spec")
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("check", help="validate a graph file")
    s.add_argument("graph")
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("spectral", help="eigendecomposition report")
    s.add_argument("graph")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_spectral)

    s = sub.add_parser("train", help="minimize the spectral contrastive loss")
    s.add_argument("graph")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--mode", choices=("full_population", "minibatch"), default="full_population")
    s.add_argument("--lr", type=float, default=None)
    s.add_argument("--steps", type=int, default=2000)
    s.add_argument("--seed", type=int, default=seed)
    s.add_argument("--mu", type=float, default=None, help="squared sphere radius")
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--hidden", type=int, default=32)
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--loss-csv", required=True)
    s.add_argument("--report")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("verify", help="evaluate bounds and lemma checks")
    s.add_argument("graph")
    s.add_argument("--suite", default="all")
    s.add_argument("--k", type=int, default=None)
    s.add_argument("--steps", type=int, default=300)
    s.add_argument("--seed", type=int, default=seed)
    s.add_argument("--out")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("probe", help="linear probe error of trained features")
    s.add_argument("graph")
    s.add_argument("checkpoint")
    s.add_argument("--c-lambda", type=float, default=1e-6)
    s.add_argument("--n-labeled", type=int, nargs="*", default=None)
    s.add_argument("--seed", type=int, default=seed)
    s.add_argument("--csv")
    s.add_argument("--out")
    s.set_defaults(func=cmd_probe)
    return p


def main(argv=None):
    started = time.time()
    try:
        parser = build_parser()
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args, started)
    except SpecValidationError as exc:
        print(f"error: invalid spec field {exc.field!r}: {exc}", file=sys.stderr)
        return 2
    except (UsageError, SpeclabError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
