"""Generating sets and the bodies they span.

A GeneratingSet is a finite spanning family of points, always treated as
closed under negation.  Its absolutely convex hull is the envelope ball;
for 0 < p <= 1 the p-convex hull is the unit ball of a quasi-normed body.
Both gauges come with representation certificates, and the gap between them
is the non-convexity measure computed by delta_nonconvexity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, InputError, NumericalError, PhaseError
from .optim import _simplex_standard, max_gauge_over_polytope, mvee


def fmt17(x):
    """Format a float with 17 significant digits (round-trip exact)."""
    return format(float(x), ".17g")


@dataclass
class GeneratingSet:
    """k points spanning an n-dimensional space, one per row."""

    dimension: int
    points: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.shape[0] < 1:
            raise InputError("a generating set needs at least one point")
        if self.points.shape[1] != self.dimension:
            raise InputError("point width does not match the declared dimension")
        if not np.isfinite(self.points).all():
            raise InputError("generating points must be finite")
        if np.linalg.matrix_rank(self.points) < self.dimension:
            raise DegeneracyError("generating points do not span the space")

    @property
    def count(self):
        return self.points.shape[0]

    def with_negations(self):
        """Rows stacked with their negations (the implicit symmetrization)."""
        return np.vstack([self.points, -self.points])


@dataclass
class PBody:
    """Unit ball of the p-convex hull of a generating set, 0 < p <= 1.

    analytic_kind == "lp_ball" marks the special case where the generators
    are exactly the +- standard basis vectors, so the gauge has a closed form.
    """

    generators: GeneratingSet
    p: float
    analytic_kind: str = "generic"

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise InputError("p must lie in (0, 1]")
        if self.analytic_kind not in ("lp_ball", "generic"):
            raise InputError(f"unknown analytic_kind {self.analytic_kind!r}")
        if self.analytic_kind == "lp_ball":
            n = self.generators.dimension
            pts = self.generators.points
            if pts.shape[0] != 2 * n:
                raise InputError("lp_ball requires exactly the 2n signed basis vectors")
            seen = {}
            for r, row in enumerate(pts):
                nz = np.flatnonzero(row)
                if nz.size != 1 or abs(row[nz[0]]) != 1.0:
                    raise InputError("lp_ball generators must be signed basis vectors")
                key = (int(nz[0]), 1 if row[nz[0]] > 0 else -1)
                if key in seen:
                    raise InputError("duplicate signed basis vector")
                seen[key] = r
            self._basis_rows = seen

    def batch_gauge(self, X):
        """Gauge of each row of X (analytic for lp_ball, search otherwise)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.analytic_kind == "lp_ball":
            return (np.abs(X) ** self.p).sum(axis=1) ** (1.0 / self.p)
        return np.array([p_gauge_upper(self, x).value for x in X])


def lp_ball_body(n, p):
    """The unit ball of l_p^n as a PBody over the signed basis vectors."""
    pts = np.vstack([np.eye(n), -np.eye(n)])
    gs = GeneratingSet(dimension=n, points=pts, label=f"lp_ball(n={n}, p={p})")
    return PBody(generators=gs, p=p, analytic_kind="lp_ball")


@dataclass
class GaugeCertificate:
    """A representation x = sum coefficients[i] * s_i witnessing a gauge value."""

    value: float
    coefficients: np.ndarray
    residual: float


# ---------------------------------------------------------------------------
# gauges
# ---------------------------------------------------------------------------

def envelope_gauge(S: GeneratingSet, x) -> GaugeCertificate:
    """Gauge of x in the envelope ball (absolutely convex hull) of S.

    Exact LP: minimize sum |lambda_i| subject to sum lambda_i s_i = x.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (S.dimension,):
        raise InputError("point dimension mismatch")
    k = S.count
    A = np.hstack([S.points.T, -S.points.T])
    c = np.ones(2 * k)
    status, z, _, _ = _simplex_standard(c, A, x)
    if status != "optimal":
        raise NumericalError(f"envelope gauge LP returned {status}")
    lam = z[:k] - z[k:]
    residual = float(np.linalg.norm(S.points.T @ lam - x))
    return GaugeCertificate(value=float(np.abs(z).sum()), coefficients=lam,
                            residual=residual)


def _null_space(A, rcond=1e-12):
    u, s, vt = np.linalg.svd(A)
    rank = int((s > rcond * s.max(initial=1.0)).sum())
    return vt[rank:].T


def p_gauge_upper(body: PBody, x, restarts=8, seed=0) -> GaugeCertificate:
    """Upper bound on the p-gauge of x, with a witnessing representation.

    Analytic for lp_ball.  Otherwise any representation x = sum lambda_i s_i
    gives the upper bound (sum |lambda_i|^p)^(1/p); the search starts from
    the envelope LP solution and descends along the representation null
    space, keeping the best over `restarts` perturbed starts.
    """
    x = np.asarray(x, dtype=float)
    p = body.p
    S = body.generators
    if body.analytic_kind == "lp_ball":
        lam = np.zeros(S.count)
        for i, xi in enumerate(x):
            row = body._basis_rows[(i, 1)]
            lam[row] = xi
        value = float((np.abs(x) ** p).sum() ** (1.0 / p))
        return GaugeCertificate(value=value, coefficients=lam, residual=0.0)

    base = envelope_gauge(S, x)
    if p == 1.0:
        return base
    Z = _null_space(S.points.T)
    rng = np.random.default_rng(seed)
    spread = max(1.0, np.abs(base.coefficients).max())
    best = None
    for trial in range(restarts + 1):
        lam0 = base.coefficients.copy()
        if trial > 0 and Z.shape[1] > 0:
            lam0 = lam0 + Z @ rng.standard_normal(Z.shape[1]) * spread * 0.5
        lam = _pnorm_descent(lam0, Z, p)
        cost = (np.abs(lam) ** p).sum()
        if best is None or cost < best[0]:
            best = (cost, lam)
    cost, lam = best
    residual = float(np.linalg.norm(S.points.T @ lam - x))
    return GaugeCertificate(value=float(cost ** (1.0 / p)), coefficients=lam,
                            residual=residual)


def _pnorm_descent(lam, Z, p, iterations=300):
    """Descend sum |lam|^p along the null-space directions Z (feasibility-preserving)."""
    if Z.shape[1] == 0:
        return lam
    lam = lam.copy()
    f = (np.abs(lam) ** p).sum()
    step = 0.25 * max(1.0, np.abs(lam).max())
    for _ in range(iterations):
        g = p * np.sign(lam) * (np.abs(lam) + 1e-12) ** (p - 1.0)
        d = Z @ (Z.T @ g)
        norm = np.linalg.norm(d)
        if norm < 1e-14:
            break
        trial = lam - step * d / norm
        f_trial = (np.abs(trial) ** p).sum()
        if f_trial < f - 1e-15:
            lam, f = trial, f_trial
            step *= 1.2
        else:
            step *= 0.5
            if step < 1e-14:
                break
    return lam


def delta_nonconvexity(body: PBody, restarts=32, seed=0, method="auto"):
    """Largest p-gauge over the envelope ball: how non-convex the body is.

    Analytic for lp_ball (n^(1/p-1)); otherwise a multi-start search lower
    bound over the envelope ball's vertex description (+- generators).
    """
    if method not in ("auto", "analytic", "search"):
        raise InputError(f"unknown method {method!r}")
    if method == "analytic" and body.analytic_kind != "lp_ball":
        raise InputError("analytic delta only available for lp_ball bodies")
    if body.analytic_kind == "lp_ball" and method != "search":
        n = body.generators.dimension
        return float(n) ** (1.0 / body.p - 1.0)
    value, _ = max_gauge_over_polytope(body, body.generators.with_negations(),
                                       restarts=restarts, seed=seed)
    return max(value, 1.0)  # the p-hull ball itself sits inside the envelope


def cube_sandwich(S: GeneratingSet, tolerance=1e-8):
    """Check B_infty subset of the envelope ball; return the outer scale d.

    Every vertex of {-1,1}^n must have envelope gauge <= 1 (vertices that
    are themselves generators are certified directly; the rest by LP), and
    d = max_i ||s_i||_infty so that the envelope ball sits inside d*B_infty.
    """
    n = S.dimension
    if n > 20:
        raise InputError("cube sandwich is capped at dimension 20")
    generator_rows = {tuple(row) for row in S.points}
    for mask in range(2 ** (n - 1)):  # vertex and its negation share a gauge
        bits = [(mask >> j) & 1 for j in range(n - 1)] + [1]
        a = np.where(bits, 1.0, -1.0)
        key = tuple(a)
        if key in generator_rows or tuple(-a) in generator_rows:
            continue
        cert = envelope_gauge(S, a)
        if cert.value > 1.0 + tolerance:
            raise PhaseError("cube-sandwich",
                             f"cube vertex outside the envelope (gauge {cert.value:.6g})",
                             vertex=a.tolist())
    return float(np.abs(S.points).max())


def dx_estimate(S: GeneratingSet, tolerance=1e-7, seed=0, directions=100):
    """Euclidean-distance estimate of the envelope ball via its enclosing ellipsoid.

    Computes the minimum-volume ellipsoid E of +-S and the smallest r with
    E/r inside the envelope ball, i.e. the maximum envelope gauge over the
    boundary of E.  The maximum of this convex function is attained at a
    vertex of the dual polytope {u : |<u, s_i>| <= 1}; vertices are reached
    by linearized ascent where each step's LP is the envelope-gauge dual.
    Axis points and sampled support ratios are folded in as lower bounds.
    """
    E = mvee(S.points, tolerance=tolerance)
    Q = E.scale * np.linalg.inv(E.shape_matrix)
    Q = 0.5 * (Q + Q.T)
    n = S.dimension
    rng = np.random.default_rng(seed)

    eigval, eigvec = np.linalg.eigh(Q)
    starts = [eigvec[:, i] for i in range(n)]
    starts += [rng.standard_normal(n) for _ in range(8)]
    best_sq = 0.0
    for u in starts:
        u = u / np.linalg.norm(u)
        for _ in range(50):
            w = Q @ u
            cert_dual = _dual_vertex(S, w)
            if cert_dual is None:
                break
            val_new = float(cert_dual @ Q @ cert_dual)
            if val_new <= u @ Q @ u + 1e-12:
                u = cert_dual
                break
            u = cert_dual
        best_sq = max(best_sq, float(u @ Q @ u))

    r = np.sqrt(best_sq)
    for y in E.axis_points():
        r = max(r, envelope_gauge(S, y).value)
    for _ in range(directions):
        u = rng.standard_normal(n)
        h_hull = np.abs(S.points @ u).max()
        r = max(r, E.support(u) / h_hull)
    return max(r, 1.0)


def _dual_vertex(S, w):
    """Maximizer of <w, u> over {u : |<u, s_i>| <= 1}: the envelope LP dual."""
    k = S.count
    A = np.hstack([S.points.T, -S.points.T])
    status, _, y, _ = _simplex_standard(np.ones(2 * k), A, np.asarray(w, dtype=float))
    if status != "optimal" or y is None:
        return None
    return y


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def save_generating_set_csv(S: GeneratingSet, path):
    with open(path, "w") as fh:
        for row in S.points:
            fh.write(",".join(fmt17(v) for v in row) + "\n")


def load_generating_set_csv(path, label="") -> GeneratingSet:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rows.append([float(tok) for tok in line.split(",")])
    if not rows:
        raise InputError(f"{path}: no points")
    pts = np.asarray(rows, dtype=float)
    return GeneratingSet(dimension=pts.shape[1], points=pts, label=label)


def generating_set_to_json(S: GeneratingSet, p=None):
    """Serialize to the interchange object; floats carry 17 significant digits."""
    lines = ["{"]
    lines.append(f'  "dimension": {S.dimension},')
    point_rows = ",\n".join(
        "    [" + ", ".join(fmt17(v) for v in row) + "]" for row in S.points)
    lines.append('  "points": [\n' + point_rows + "\n  ]" + ("," if p is not None or S.label else ""))
    if p is not None:
        lines.append(f'  "p": {fmt17(p)}' + ("," if S.label else ""))
    if S.label:
        lines.append(f'  "label": {json.dumps(S.label)}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def save_generating_set_json(S: GeneratingSet, path, p=None):
    with open(path, "w") as fh:
        fh.write(generating_set_to_json(S, p=p))


def load_generating_set_json(path):
    """Read a generating set; returns (GeneratingSet, p-or-None)."""
    with open(path) as fh:
        obj = json.load(fh)
    try:
        pts = np.asarray(obj["points"], dtype=float)
        gs = GeneratingSet(dimension=int(obj["dimension"]), points=pts,
                           label=obj.get("label", ""))
    except KeyError as exc:
        raise InputError(f"{path}: missing field {exc}")
    p = obj.get("p")
    return gs, (float(p) if p is not None else None)
