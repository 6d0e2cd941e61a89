"""Command line entry point.

Four subcommands: `generate` writes generating-set instances, `verify` runs a
named verification suite and exits 0 only on pass, `run` executes a pipeline
and writes its report, `calibrate` manages the record of tunable constants.
Reports are deterministic functions of config + seed, so identical invocations
produce byte-identical files.  Calibrated constants always appear under a
"calibration" key, separate from formula targets; a passing run certifies the
emitted certificates, not the constants.

Exit codes: 0 pass, 1 verification failure, 2 bad input, 3 numerical or phase
failure, 4 search budget exhausted.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field, fields

import numpy as np

from . import __version__
from .balance import type1_represent
from .bodies import (GeneratingSet, PBody, delta_nonconvexity, envelope_gauge,
                     fmt17, lp_ball_body, load_generating_set_json,
                     save_generating_set_json)
from .cube import (Calibration, VertexSet, alesker_chain, chain_constants,
                   chain_cube_certificate, counting_select,
                   cube_quotient, cubic_quotient_from_nonconvexity,
                   l1_to_cube_operator, pnormed_quotient, vector_of_mask,
                   vertex_generating_set, vertex_set_from_generating_set)
from .dvoretzky import dvoretzky_search, ellipsoid_gamma_represent
from .errors import (BudgetError, ContractionError, InputError,
                     NumericalError, PhaseError)
from .hulls import approx2_transform, verify_pconv_contraction

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_BUDGET = 4

CONST_NAMES = ("c", "C", "c0", "c1", "c2")


@dataclass
class RunConfig:
    """Merged view of config file, command line, and defaults."""

    command: str = ""
    target: str = ""
    input: str | None = None
    out: str | None = None
    format: str = "json"
    seed: int = 0
    tol: float = 1e-6
    n: int | None = None
    p: float | None = None
    k: int | None = None
    m: int | None = None
    count: int | None = None
    eps: float = 0.5
    theta: float = 0.75
    eta: float = 0.2
    trials: int = 64
    queries: int = 32
    samples: int = 1000
    budget: int = 10 ** 7
    coords: str | None = None
    calibration: Calibration = field(default_factory=Calibration)

    def coord_list(self):
        if self.coords is None:
            return None
        try:
            return [int(t) for t in self.coords.split(",") if t.strip()]
        except ValueError:
            raise InputError(f"bad coordinate list {self.coords!r}")


def _parse_scalar(text):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_config_file(path):
    """Flat key=value lines; # starts a comment; later keys win."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip()] = _parse_scalar(value)
    return out


def build_config(args) -> RunConfig:
    """Defaults, then config file, then explicit command-line flags."""
    merged = {}
    if getattr(args, "config", None):
        file_cfg = read_config_file(args.config)
        const_file = {}
        for key in list(file_cfg):
            name = key[6:] if key.startswith("const.") else key
            if name in CONST_NAMES:
                const_file[name] = float(file_cfg.pop(key))
        merged.update(file_cfg)
        merged["calibration"] = Calibration.from_mapping(const_file) \
            if const_file else Calibration()
    field_names = {f.name for f in fields(RunConfig)}
    for key, value in vars(args).items():
        if key in ("config", "func") or key.startswith("const_"):
            continue
        if value is None:
            continue
        if key not in field_names:
            continue
        merged[key] = value
    overrides = {name: getattr(args, f"const_{name}")
                 for name in CONST_NAMES
                 if getattr(args, f"const_{name}", None) is not None}
    if overrides:
        base = merged.get("calibration", Calibration()).as_dict()
        base.update(overrides)
        merged["calibration"] = Calibration.from_mapping(base)
    unknown = set(merged) - field_names
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(**merged)
    if cfg.format not in ("json", "csv"):
        raise InputError(f"unknown output format {cfg.format!r}")
    cfg.seed = int(cfg.seed)
    return cfg


# ---------------------------------------------------------------------------
# output plumbing
# ---------------------------------------------------------------------------

def _json_text(payload):
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _csv_text(rows):
    keys = []
    for row in rows:
        for key in row:
            if key not in keys:
                keys.append(key)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n",
                            restval="")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: fmt17(v) if isinstance(v, float) else v
                         for k, v in row.items()})
    return buf.getvalue()


def emit(payload, rows, cfg: RunConfig):
    """Write the JSON payload or its CSV flattening to --out or stdout."""
    text = _csv_text(rows) if cfg.format == "csv" else _json_text(payload)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _loaded_input(cfg: RunConfig):
    if not cfg.input:
        raise InputError(f"{cfg.command} {cfg.target} needs --input")
    return load_generating_set_json(cfg.input)


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def _sample_vertex_subset(n, count, seed):
    if n < 1 or n > 16:
        raise InputError("vertex sampling capped at dimension 16")
    if count > 2 ** n:
        raise InputError(f"cannot draw {count} distinct vertices from "
                         f"{2 ** n}")
    rng = np.random.default_rng(seed)
    masks = rng.choice(2 ** n, size=count, replace=False)
    return VertexSet(n, frozenset(int(m) for m in masks))


def cmd_generate(cfg: RunConfig):
    kind = cfg.target
    if kind == "lp-ball":
        if cfg.n is None or cfg.p is None:
            raise InputError("lp-ball needs --n and --p")
        body = lp_ball_body(cfg.n, cfg.p)
        S, p = body.generators, body.p
    elif kind == "cube-vertices":
        if cfg.n is None:
            raise InputError("cube-vertices needs --n")
        if cfg.n > 14:
            raise InputError("cube-vertices capped at dimension 14")
        S = vertex_generating_set(VertexSet.full(cfg.n), label="cube-vertices")
        p = cfg.p
    elif kind == "random-vertex-subset":
        if cfg.n is None:
            raise InputError("random-vertex-subset needs --n")
        count = cfg.count
        if count is None:
            count = math.ceil(2.0 ** (cfg.n * (1.0 - cfg.calibration.c * cfg.eps)))
        V = _sample_vertex_subset(cfg.n, count, cfg.seed)
        S = vertex_generating_set(V, label="random-vertex-subset")
        p = cfg.p
    elif kind == "sphere-sample":
        if cfg.n is None:
            raise InputError("sphere-sample needs --n")
        count = cfg.count if cfg.count is not None else 10 * cfg.n
        rng = np.random.default_rng(cfg.seed)
        pts = rng.standard_normal((count, cfg.n))
        norms = np.linalg.norm(pts, axis=1, keepdims=True)
        if norms.min() < 1e-12:
            raise NumericalError("degenerate sphere sample")
        S = GeneratingSet(cfg.n, pts / norms, label="sphere-sample")
        p = cfg.p
    else:
        raise InputError(f"unknown generate kind {kind!r}")
    if cfg.format == "csv":
        rows = []
        for i, row in enumerate(S.points):
            rec = {"index": i}
            rec.update({f"x{j}": float(v) for j, v in enumerate(row)})
            if p is not None:
                rec["p"] = float(p)
            rows.append(rec)
        emit(None, rows, cfg)
    elif cfg.out:
        save_generating_set_json(S, cfg.out, p=p)
    else:
        from .bodies import generating_set_to_json
        sys.stdout.write(generating_set_to_json(S, p=p))
    return EXIT_PASS


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _finish_verify(report, cfg: RunConfig, rows=None):
    report.setdefault("seed", cfg.seed)
    report["calibration"] = cfg.calibration.as_dict()
    emit(report, rows if rows is not None else [
        {"lemma": report.get("lemma", cfg.target),
         "pass": report["pass"]}], cfg)
    return EXIT_PASS if report["pass"] else EXIT_FAIL


def _body_from(S, p):
    """PBody with the closed-form gauge when S is exactly the signed basis."""
    try:
        return PBody(S, p, analytic_kind="lp_ball")
    except InputError:
        return PBody(S, p)


def verify_delta(cfg: RunConfig):
    S, p = _loaded_input(cfg)
    if p is None:
        raise InputError("delta verification needs a generating set with p")
    body = _body_from(S, p)
    if body.analytic_kind != "lp_ball":
        raise InputError("delta verification expects the signed basis vectors")
    n = S.dimension
    expected = float(n) ** (1.0 / p - 1.0)
    realized = {"analytic": delta_nonconvexity(body, method="analytic")}
    realized["search"] = delta_nonconvexity(body, method="search",
                                            seed=cfg.seed)
    analytic_ok = abs(realized["analytic"] - expected) <= 1e-12
    search_ok = realized["search"] >= expected * (1 - 1e-3) - cfg.tol
    report = {
        "lemma": "delta",
        "constants": {"n": n, "p": p},
        "target": {"delta": expected},
        "realized": realized,
        "pass": bool(analytic_ok and search_ok),
    }
    return _finish_verify(report, cfg)


def verify_pconv(cfg: RunConfig):
    if cfg.input:
        S, p = _loaded_input(cfg)
        if p is None:
            raise InputError("pconv verification needs a generating set with p")
        body = PBody(S, p)
    else:
        # no instance file: check the signed basis in dimension n (default 3)
        if cfg.p is None:
            raise InputError("verify pconv needs --input or --p")
        body = lp_ball_body(cfg.n if cfg.n is not None else 3, cfg.p)
    result = verify_pconv_contraction(body, cfg.theta, samples=cfg.samples,
                                      seed=cfg.seed)
    report = {
        "lemma": "pconv",
        "constants": result["params"],
        "target": {"bound": result["bound"]},
        "realized": {"max_ratio": result["max_ratio"],
                     "samples": result["samples"]},
        "pass": result["pass"],
    }
    return _finish_verify(report, cfg)


def _random_hull_element(S, theta, m, depth, rng):
    """A random average-of-averages series element, as nested certificates."""
    from .hulls import DeltaMCertificate, GammaOverDeltaM
    k = S.count
    terms = []
    for level in range(depth):
        idx = rng.integers(0, k, size=m)
        alphas_full = np.zeros(k)
        mult = np.bincount(idx, minlength=k)
        signs = rng.uniform(-1.0, 1.0, size=m)
        for slot, i in enumerate(idx):
            alphas_full[i] += signs[slot]
        lam = rng.uniform(-1.0, 1.0)
        cert = DeltaMCertificate(m=m, multiplicities=mult, alphas=alphas_full)
        terms.append((level, lam, cert))
    return GammaOverDeltaM(theta=theta, m=m, terms=terms,
                           truncation_depth=depth - 1)


def verify_approx2(cfg: RunConfig):
    if cfg.input:
        S, _ = _loaded_input(cfg)
    else:
        angles = np.linspace(0.0, 2.0 * math.pi, 9)[:-1]
        S = GeneratingSet(2, np.column_stack([np.cos(angles), np.sin(angles)]),
                          label="circle-8")
    theta = cfg.theta
    rng = np.random.default_rng(cfg.seed)
    trials = min(cfg.trials, 200)
    worst_scale, worst_err, samples = 0.0, 0.0, []
    target = None
    for t in range(trials):
        m = int(rng.choice([2, 3, 5]))
        outer = _random_hull_element(S, theta, m, depth=6, rng=rng)
        rep, scale = approx2_transform(S, theta, outer)
        phi = theta ** (1.0 / m)
        target = (1.0 - theta) * phi ** (1 - m) / (m * (1.0 - phi))
        err = float(np.linalg.norm(scale * rep.evaluate(S) - outer.evaluate(S)))
        worst_scale = max(worst_scale, scale)
        worst_err = max(worst_err, err)
        samples.append({"trial": t, "m": m, "scale": scale, "error": err})
    report = {
        "lemma": "approx2",
        "constants": {"theta": theta, "trials": trials},
        "target": {"scale_max": 1.2},
        "realized": {"scale_max": worst_scale, "reconstruction_max": worst_err},
        "pass": bool(worst_scale <= 1.2 + 1e-12 and worst_err <= cfg.tol),
    }
    return _finish_verify(report, cfg, rows=samples)


def verify_type1(cfg: RunConfig):
    if cfg.input:
        S, _ = _loaded_input(cfg)
    else:
        angles = np.linspace(0.0, 2.0 * math.pi, 33)[:-1]
        S = GeneratingSet(2, np.column_stack([np.cos(angles), np.sin(angles)]),
                          label="circle-32")
    theta = cfg.theta if cfg.theta > 1.0 / 3.0 else 0.5
    m = cfg.m if cfg.m else 4
    rng = np.random.default_rng(cfg.seed)
    trials = min(cfg.trials, 200)
    worst_err, worst_defect_ratio, samples = 0.0, 0.0, []
    for t in range(trials):
        w = rng.dirichlet(np.ones(S.count)) * rng.uniform(0.2, 1.0)
        signs = rng.choice([-1.0, 1.0], size=S.count)
        x = (signs * w) @ S.points
        trace = []
        rep, scale = type1_represent(S, theta, m, x, trace=trace)
        err = float(np.linalg.norm(scale * rep.evaluate(S) - x))
        for rec in trace:
            bound = 1.0 / math.sqrt(rec["input_terms"])
            worst_defect_ratio = max(worst_defect_ratio,
                                     rec["defect"] / bound)
        worst_err = max(worst_err, err)
        samples.append({"trial": t, "scale": scale, "error": err})
    report = {
        "lemma": "type1",
        "constants": {"theta": theta, "m": m, "trials": trials},
        "target": {"reconstruction": cfg.tol, "defect_ratio": 1.0},
        "realized": {"reconstruction_max": worst_err,
                     "defect_ratio_max": worst_defect_ratio},
        "pass": bool(worst_err <= cfg.tol
                     and worst_defect_ratio <= 1.0 + 1e-9),
    }
    return _finish_verify(report, cfg, rows=samples)


def verify_alesker(cfg: RunConfig):
    if cfg.input:
        S, _ = _loaded_input(cfg)
        V = vertex_set_from_generating_set(S)
    else:
        n = cfg.n if cfg.n else 10
        count = math.ceil(2.0 ** (n * (1.0 - cfg.calibration.c * cfg.eps)))
        V = _sample_vertex_subset(n, count, cfg.seed)
        S = vertex_generating_set(V, label="random-vertex-subset")
    chain = alesker_chain(V, cfg.eps, density_c=cfg.calibration.c,
                          node_budget=cfg.budget)
    certs = chain_cube_certificate(chain, S, C=cfg.calibration.C)
    levels = len(chain.sigma) - 1
    want_a, want_b = chain_constants(levels)
    report = {
        "lemma": "alesker",
        "constants": {
            "n": V.n, "members": V.count, "epsilon": cfg.eps,
            "levels": levels, "scale": certs.scale, "m": certs.m,
            "sigma_size": len(chain.sigma[-1]),
        },
        "target": {"scale": want_a, "m": want_b,
                   "scale_budget": certs.scale_target,
                   "m_budget": certs.m_target},
        "realized": {"vertices_certified": len(certs.certificates),
                     "calibration_ok": certs.calibration_ok},
        "pass": bool(certs.scale == want_a and certs.m == want_b
                     and len(certs.certificates)
                     == 2 ** len(chain.sigma[-1])),
    }
    return _finish_verify(report, cfg)


def verify_counting(cfg: RunConfig):
    n = cfg.n if cfg.n else 8
    if n > 12:
        raise InputError("counting verification capped at dimension 12")
    rng = np.random.default_rng(cfg.seed)
    samples = []
    ok = True
    for k in (n - 1, n - 2):
        candidates = {}
        for mask in range(2 ** n):
            coords = rng.choice(n, size=k, replace=False)
            candidates[mask] = frozenset(int(c) for c in coords)
        tau, T = counting_select(candidates, k)
        bound = 2.0 ** n / (2.0 ** (n - k) * math.comb(n, k))
        ratio = T.count / bound
        ok = ok and T.count >= bound - 1e-9
        samples.append({"n": n, "k": k, "selected": T.count,
                        "bound": bound, "ratio": ratio})
    report = {
        "lemma": "counting",
        "constants": {"n": n},
        "target": {"ratio_min": 1.0},
        "realized": {"cases": samples},
        "pass": bool(ok),
    }
    return _finish_verify(report, cfg, rows=samples)


def verify_main(cfg: RunConfig):
    S, _ = _loaded_input(cfg)
    report_obj = cube_quotient(S, cfg.eps, calibration=cfg.calibration,
                               seed=cfg.seed, queries=cfg.queries,
                               query_tolerance=cfg.tol, node_budget=cfg.budget)
    payload = json.loads(report_obj.to_json())
    ok = (report_obj.verified_fraction >= 0.99
          and report_obj.variance_check.get("pass", False))
    report = {
        "lemma": "main",
        "constants": {
            "epsilon": cfg.eps, "sigma": list(report_obj.sigma),
            "m": report_obj.flat_m, "chain_levels": report_obj.chain_levels,
        },
        "target": {"verified_fraction": 0.99,
                   "theta_formula": report_obj.theta_formula},
        "realized": {"verified_fraction": report_obj.verified_fraction,
                     "theta": report_obj.theta,
                     "C_over_eps": report_obj.C_over_eps,
                     "variance_check": report_obj.variance_check},
        "report": payload,
        "pass": bool(ok),
    }
    rows = [{"record": "query", "index": i,
             "residual": q["residual"], "verified": q["verified"]}
            for i, q in enumerate(report_obj.certificates)]
    return _finish_verify(report, cfg, rows=rows)


def verify_dvoretzky(cfg: RunConfig):
    if cfg.input:
        S, _ = _loaded_input(cfg)
    else:
        n = cfg.n if cfg.n else 40
        count = cfg.count if cfg.count else 500
        rng = np.random.default_rng(cfg.seed + 1)
        pts = rng.standard_normal((count, n))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        S = GeneratingSet(n, pts, label="sphere-sample")
    k = cfg.k if cfg.k else 3
    result = dvoretzky_search(S, k, cfg.eta, cfg.trials, cfg.seed)
    eta_real = result.ellipticity - 1.0
    theta = 0.5
    proj = GeneratingSet(k, S.points @ result.projection_matrix.T,
                         label="projected")
    rng = np.random.default_rng(cfg.seed + 2)
    Minv = np.linalg.inv(result.ellipsoid.shape_matrix
                         / result.ellipsoid.scale)
    L = np.linalg.cholesky(Minv)
    rep_fail = 0
    n_rep = 20
    for _ in range(n_rep):
        u = rng.standard_normal(k)
        u /= np.linalg.norm(u)
        y = (1 - theta) * rng.uniform(0, 1) ** (1.0 / k) * (L @ u)
        try:
            ellipsoid_gamma_represent(proj, result.ellipsoid, theta, y,
                                      eta=max(eta_real, 1e-9))
        except ContractionError:
            rep_fail += 1
    report = {
        "lemma": "dvoretzky",
        "constants": {"k": k, "trials": cfg.trials, "eta": cfg.eta,
                      "theta": theta},
        "target": {"ellipticity": 1.0 + cfg.eta, "representation_failures": 0},
        "realized": {"ellipticity": result.ellipticity,
                     "winning_trial": result.trial,
                     "representation_failures": rep_fail,
                     "representation_samples": n_rep},
        "pass": bool(result.success and rep_fail == 0),
    }
    return _finish_verify(report, cfg)


VERIFIERS = {
    "pconv": verify_pconv,
    "approx2": verify_approx2,
    "type1": verify_type1,
    "alesker": verify_alesker,
    "counting": verify_counting,
    "main": verify_main,
    "dvoretzky": verify_dvoretzky,
    "delta": verify_delta,
}


def cmd_verify(cfg: RunConfig):
    return VERIFIERS[cfg.target](cfg)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _quotient_rows(payload):
    rows = []
    for pattern in sorted(payload.get("vertex_certificates", {})):
        cert = payload["vertex_certificates"][pattern]
        rows.append({"record": "vertex-certificate", "key": pattern,
                     "m": cert["m"], "entries": len(cert["entries"]),
                     "scale": cert["scale"],
                     "snap_residual": cert["snap_residual"]})
    for i, q in enumerate(payload.get("certificates", [])):
        rows.append({"record": "query", "key": i, "residual": q["residual"],
                     "verified": q["verified"], "terms": q["terms"]})
    return rows


def run_cube_quotient(cfg: RunConfig):
    S, _ = _loaded_input(cfg)
    report = cube_quotient(S, cfg.eps, calibration=cfg.calibration,
                           seed=cfg.seed, queries=cfg.queries,
                           query_tolerance=cfg.tol, node_budget=cfg.budget)
    payload = json.loads(report.to_json())
    emit(payload, _quotient_rows(payload), cfg)
    return EXIT_PASS


def run_pnormed_quotient(cfg: RunConfig):
    S, p = _loaded_input(cfg)
    if p is None:
        raise InputError("pnormed-quotient needs a generating set with p")
    body = PBody(S, p)
    report, distance = pnormed_quotient(body, cfg.eps,
                                        calibration=cfg.calibration,
                                        seed=cfg.seed, queries=cfg.queries,
                                        query_tolerance=cfg.tol)
    payload = {"quotient": json.loads(report.to_json()), "distance": distance}
    rows = _quotient_rows(payload["quotient"])
    rows.append({"record": "distance", **{k: v for k, v in distance.items()}})
    emit(payload, rows, cfg)
    return EXIT_PASS


def run_cubic_from_delta(cfg: RunConfig):
    S, p = _loaded_input(cfg)
    if p is None:
        raise InputError("cubic-from-delta needs a generating set with p")
    coords = cfg.coord_list()
    if coords is None:
        raise InputError("cubic-from-delta needs --coords i,j,...")
    body = _body_from(S, p)
    report, summary = cubic_quotient_from_nonconvexity(
        body, coords, calibration=cfg.calibration, seed=cfg.seed,
        queries=cfg.queries, query_tolerance=cfg.tol)
    payload = {"quotient": json.loads(report.to_json()), "summary": summary}
    rows = _quotient_rows(payload["quotient"])
    rows.append({"record": "summary", **{k: ("" if v is None else v)
                                         for k, v in summary.items()}})
    emit(payload, rows, cfg)
    return EXIT_PASS


def run_dvoretzky_search(cfg: RunConfig):
    S, _ = _loaded_input(cfg)
    k = cfg.k if cfg.k else 3
    result = dvoretzky_search(S, k, cfg.eta, cfg.trials, cfg.seed)
    payload = json.loads(result.to_json())
    payload["calibration"] = cfg.calibration.as_dict()
    rows = [{"record": "projection", "rank": result.rank,
             "ellipticity": result.ellipticity, "trial": result.trial,
             "success": result.success, "seed": result.seed}]
    emit(payload, rows, cfg)
    return EXIT_PASS


PIPELINES = {
    "cube-quotient": run_cube_quotient,
    "pnormed-quotient": run_pnormed_quotient,
    "cubic-from-delta": run_cubic_from_delta,
    "dvoretzky-search": run_dvoretzky_search,
}


def cmd_run(cfg: RunConfig):
    return PIPELINES[cfg.target](cfg)


def cmd_calibrate(cfg: RunConfig):
    record = cfg.calibration.as_dict()
    payload = {
        "calibration": record,
        "seed": cfg.seed,
        "note": "tunable constants; formula targets are reported separately",
    }
    if cfg.out:
        lines = [f"{name}={fmt17(record[name])}\n" for name in CONST_NAMES]
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.writelines(lines)
    sys.stdout.write(_json_text(payload))
    return EXIT_PASS


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(parser):
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--input", default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--format", choices=("json", "csv"), default=None)
    parser.add_argument("--tol", type=float, default=None, dest="tol")
    parser.add_argument("--n", type=int, default=None)
    parser.add_argument("--p", type=float, default=None)
    parser.add_argument("--k", type=int, default=None)
    parser.add_argument("--m", type=int, default=None)
    parser.add_argument("--count", type=int, default=None)
    parser.add_argument("--eps", type=float, default=None)
    parser.add_argument("--theta", type=float, default=None)
    parser.add_argument("--eta", type=float, default=None)
    parser.add_argument("--trials", type=int, default=None)
    parser.add_argument("--queries", type=int, default=None)
    parser.add_argument("--samples", type=int, default=None)
    parser.add_argument("--budget", type=int, default=None)
    parser.add_argument("--coords", default=None)
    for name in CONST_NAMES:
        parser.add_argument(f"--const.{name}", type=float, default=None,
                            dest=f"const_{name}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="geomhull",
        description="hull certificates, cube quotients, and projection search")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a generating-set instance")
    gen.add_argument("target", choices=("lp-ball", "cube-vertices",
                                        "random-vertex-subset",
                                        "sphere-sample"))
    _add_common(gen)
    gen.set_defaults(func=cmd_generate)

    ver = sub.add_parser("verify", help="run a verification suite")
    ver.add_argument("target", choices=tuple(VERIFIERS))
    _add_common(ver)
    ver.set_defaults(func=cmd_verify)

    run = sub.add_parser("run", help="execute a pipeline, write its report")
    run.add_argument("target", choices=tuple(PIPELINES))
    _add_common(run)
    run.set_defaults(func=cmd_run)

    cal = sub.add_parser("calibrate", help="print or write the constant record")
    cal.set_defaults(target="calibrate")
    _add_common(cal)
    cal.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
        cfg.command = args.command
        cfg.target = getattr(args, "target", "")
        return args.func(cfg)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BudgetError as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (NumericalError, PhaseError, ContractionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
