"""Optimization kernel: dense revised simplex, minimum-volume enclosing
ellipsoid, and multi-start gauge maximization over polytopes.

Everything here is self-contained on top of numpy.  The LP solver is the
workhorse behind every hull membership check in the package, so it returns
primal and dual vectors and is verified against strong duality by its tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, InputError, NumericalError

FEAS_TOL = 1e-9
OPT_TOL = 1e-9


# ---------------------------------------------------------------------------
# linear programming
# ---------------------------------------------------------------------------

@dataclass
class LPProblem:
    """min objective @ x  subject to  equality_matrix @ x = equality_rhs
    and variable_bounds[j][0] <= x[j] <= variable_bounds[j][1] (None = free).
    """

    objective: np.ndarray
    equality_matrix: np.ndarray
    equality_rhs: np.ndarray
    variable_bounds: list

    def __post_init__(self):
        self.objective = np.atleast_1d(np.asarray(self.objective, dtype=float))
        self.equality_matrix = np.atleast_2d(np.asarray(self.equality_matrix, dtype=float))
        self.equality_rhs = np.atleast_1d(np.asarray(self.equality_rhs, dtype=float))
        m, n = self.equality_matrix.shape
        if self.objective.shape != (n,):
            raise InputError("objective length does not match column count")
        if self.equality_rhs.shape != (m,):
            raise InputError("rhs length does not match row count")
        if len(self.variable_bounds) != n:
            raise InputError("one bound pair per variable required")
        for lo, hi in self.variable_bounds:
            if lo is not None and hi is not None and lo > hi:
                raise InputError(f"bound pair ({lo}, {hi}) has lower > upper")
        if not (np.isfinite(self.equality_matrix).all()
                and np.isfinite(self.equality_rhs).all()
                and np.isfinite(self.objective).all()):
            raise InputError("LP data must be finite")


@dataclass
class LPSolution:
    status: str                 # "optimal" | "infeasible" | "unbounded"
    value: float = None
    x: np.ndarray = None
    y: np.ndarray = None        # duals of the original equality rows
    certificate: np.ndarray = None  # Farkas vector (equality rows) when infeasible


def _pivot_loop(c, A, b, basis, tol, max_iter, bland_after=60):
    """Revised simplex on  min c@x, A@x = b, x >= 0  from a feasible basis.

    Dantzig pricing with a Bland's-rule fallback after a run of degenerate
    pivots, which guarantees termination.  Returns (status, basis, xB, y).
    """
    m, n = A.shape
    bland = False
    degenerate_run = 0
    for _ in range(max_iter):
        B = A[:, basis]
        try:
            xB = np.linalg.solve(B, b)
            y = np.linalg.solve(B.T, c[basis])
        except np.linalg.LinAlgError:
            raise NumericalError("working basis became singular")
        reduced = c - y @ A
        reduced[basis] = 0.0
        if bland:
            eligible = np.flatnonzero(reduced < -tol)
            if eligible.size == 0:
                return "optimal", basis, xB, y
            j = int(eligible[0])
        else:
            j = int(np.argmin(reduced))
            if reduced[j] >= -tol:
                return "optimal", basis, xB, y
        d = np.linalg.solve(B, A[:, j])
        positive = d > tol
        if not positive.any():
            return "unbounded", basis, xB, y
        ratios = np.full(m, np.inf)
        ratios[positive] = xB[positive] / d[positive]
        r = int(np.argmin(ratios))
        if bland:
            ties = np.flatnonzero(ratios <= ratios[r] + tol)
            r = int(ties[np.argmin(np.asarray(basis)[ties])])
        if ratios[r] <= tol:
            degenerate_run += 1
            if degenerate_run > bland_after:
                bland = True
        else:
            degenerate_run = 0
        basis[r] = j
    raise NumericalError("cycling guard exceeded (simplex iteration cap)")


def _simplex_standard(c, A, b, tol=FEAS_TOL):
    """Two-phase simplex for  min c@x, A@x = b, x >= 0  (dense).

    Returns (status, x, y, certificate); `y` are the equality duals, and
    `certificate` is the Farkas vector when infeasible.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    c = np.array(c, dtype=float)
    m, n = A.shape
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0
    sign = np.where(flip, -1.0, 1.0)

    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    max_iter = max(20000, 80 * (m + n))

    # phase 1: artificial basis
    A1 = np.hstack([A, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = list(range(n, n + m))
    status, basis, xB, y1 = _pivot_loop(c1, A1, b, basis, tol, max_iter)
    if status != "optimal":
        raise NumericalError("phase-1 simplex did not converge")
    phase1_value = float(c1[basis] @ xB)
    if phase1_value > tol * scale * max(1, m):
        # Farkas: y1 @ A <= tol componentwise and y1 @ b > 0
        return "infeasible", None, None, sign * y1

    # drive artificial variables out of the basis; a stuck artificial marks
    # its own row (its column is that row's unit vector) as redundant
    rows = list(range(m))
    drop_positions = []
    for pos in range(len(basis)):
        if basis[pos] < n:
            continue
        B = A1[np.ix_(rows, basis)]
        try:
            tab_row = np.linalg.solve(B, A1[np.ix_(rows, list(range(n)))])[pos]
        except np.linalg.LinAlgError:
            raise NumericalError("degenerate phase-1 basis")
        candidates = [j for j in np.flatnonzero(np.abs(tab_row) > 1e-7)
                      if j not in basis]
        if candidates:
            basis[pos] = int(candidates[0])
        else:
            drop_positions.append(pos)
    if drop_positions:
        redundant = sorted((basis[pos] - n for pos in drop_positions), reverse=True)
        for pos in sorted(drop_positions, reverse=True):
            del basis[pos]
        for i in redundant:
            rows.remove(i)
    A = A[rows]
    b = b[rows]
    row_index = rows

    status, basis, xB, y = _pivot_loop(c, A, b, list(basis), tol, max_iter)
    x = np.zeros(n)
    x[basis] = xB
    if status == "unbounded":
        return "unbounded", x, None, None
    y_full = np.zeros(m)
    y_full[row_index] = y
    # complementary slackness sanity check on the reduced costs
    reduced = c - y @ A
    if np.abs(reduced[basis]).max(initial=0.0) > 1e-6:
        raise NumericalError("complementary slackness violated at optimum")
    return "optimal", x, sign * y_full, None


def solve_lp(problem: LPProblem) -> LPSolution:
    """Solve an LP with general variable bounds.

    The problem is shifted/split into standard form internally.  On
    "optimal" the solution carries primal x, equality duals y, and the
    objective value; on "infeasible" a Farkas certificate for the equality
    rows of the internal standard form.
    """
    A = problem.equality_matrix
    b = problem.equality_rhs
    c = problem.objective
    m, n = A.shape

    cols = []           # columns of the standard-form matrix (over m rows)
    cost = []
    recover = []        # (kind, j, data) to map standard x back
    shift = np.zeros(n)
    ranged = []         # (std_col, width) pairs needing an extra row
    for j, (lo, hi) in enumerate(problem.variable_bounds):
        if lo is None and hi is None:
            cols.append(A[:, j]); cost.append(c[j]); recover.append(("+", j))
            cols.append(-A[:, j]); cost.append(-c[j]); recover.append(("-", j))
        elif lo is not None and hi is None:
            shift[j] = lo
            cols.append(A[:, j]); cost.append(c[j]); recover.append(("+", j))
        elif lo is None and hi is not None:
            shift[j] = hi
            cols.append(-A[:, j]); cost.append(-c[j]); recover.append(("-", j))
        else:
            shift[j] = lo
            ranged.append((len(cols), hi - lo))
            cols.append(A[:, j]); cost.append(c[j]); recover.append(("+", j))

    A_std = np.column_stack(cols) if cols else np.zeros((m, 0))
    b_std = b - A @ shift
    c_std = np.asarray(cost, dtype=float)

    if ranged:
        k = len(ranged)
        A_std = np.vstack([A_std, np.zeros((k, A_std.shape[1]))])
        A_std = np.hstack([A_std, np.zeros((m + k, k))])
        b_std = np.concatenate([b_std, [w for _, w in ranged]])
        c_std = np.concatenate([c_std, np.zeros(k)])
        for i, (col, _) in enumerate(ranged):
            A_std[m + i, col] = 1.0
            A_std[m + i, A_std.shape[1] - k + i] = 1.0

    status, x_std, y_std, cert = _simplex_standard(c_std, A_std, b_std)
    if status == "infeasible":
        return LPSolution(status="infeasible", certificate=cert[:m])
    x = shift.copy()
    for col, tag in enumerate(recover):
        if tag[0] == "+":
            x[tag[1]] += x_std[col]
        else:
            x[tag[1]] -= x_std[col]
    if status == "unbounded":
        return LPSolution(status="unbounded", x=x)
    residual = np.abs(A @ x - b).max(initial=0.0)
    if residual > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)) * 10:
        raise NumericalError(f"primal residual {residual:.3e} out of tolerance")
    return LPSolution(status="optimal", value=float(c @ x), x=x, y=y_std[:m])


# ---------------------------------------------------------------------------
# minimum-volume enclosing ellipsoid (origin-symmetric)
# ---------------------------------------------------------------------------

@dataclass
class Ellipsoid:
    """Origin-centered ellipsoid { y : y @ shape_matrix @ y <= scale }."""

    shape_matrix: np.ndarray
    scale: float

    def __post_init__(self):
        M = np.asarray(self.shape_matrix, dtype=float)
        if np.abs(M - M.T).max(initial=0.0) > 1e-9 * max(1.0, np.abs(M).max()):
            raise InputError("shape matrix must be symmetric")
        self.shape_matrix = 0.5 * (M + M.T)
        if np.linalg.eigvalsh(self.shape_matrix).min() <= 0:
            raise InputError("shape matrix must be positive definite")
        if not self.scale > 0:
            raise InputError("scale must be positive")

    def enorm(self, y):
        y = np.asarray(y, dtype=float)
        return float(np.sqrt((y @ self.shape_matrix @ y) / self.scale))

    def support(self, u):
        u = np.asarray(u, dtype=float)
        w = np.linalg.solve(self.shape_matrix, u)
        return float(np.sqrt(self.scale * (u @ w)))

    def contains(self, y, tolerance=1e-9):
        y = np.asarray(y, dtype=float)
        return float(y @ self.shape_matrix @ y) <= self.scale * (1 + tolerance)

    def axis_points(self):
        """Boundary points along the principal axes, one per eigen-direction."""
        eigval, eigvec = np.linalg.eigh(self.shape_matrix)
        return (np.sqrt(self.scale / eigval) * eigvec).T


def mvee(points, tolerance=1e-7, max_iter=100000) -> Ellipsoid:
    """Minimum-volume origin-symmetric ellipsoid enclosing the given points.

    Points are treated with their negations (the centered formulation makes
    the symmetrization implicit).  Khachiyan barycentric-coordinate ascent
    with Wolfe-Atwood away steps; terminates when the duality gap
    max_i x_i V^{-1} x_i / n - 1 drops below `tolerance`.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    k, n = X.shape
    if np.linalg.matrix_rank(X) < n:
        raise DegeneracyError("points do not span the space")
    u = np.full(k, 1.0 / k)
    for _ in range(max_iter):
        V = X.T @ (u[:, None] * X)
        try:
            W = np.linalg.solve(V, X.T)
        except np.linalg.LinAlgError:
            raise DegeneracyError("weight matrix became singular")
        g = np.einsum("ij,ji->i", X, W)
        j_up = int(np.argmax(g))
        gap_up = g[j_up] / n - 1.0
        if gap_up <= tolerance:
            M = np.linalg.inv(V)
            return Ellipsoid(shape_matrix=0.5 * (M + M.T), scale=float(n))
        support_idx = np.flatnonzero(u > 1e-12)
        j_dn = int(support_idx[np.argmin(g[support_idx])])
        gap_dn = 1.0 - g[j_dn] / n
        if gap_up >= gap_dn:
            step = (g[j_up] - n) / (n * (g[j_up] - 1.0))
            u *= 1.0 - step
            u[j_up] += step
        else:
            denom = g[j_dn] - 1.0
            drop = -u[j_dn] / (1.0 - u[j_dn]) if u[j_dn] < 1.0 else 0.0
            step = drop if denom <= 1e-15 else max(
                (g[j_dn] - n) / (n * denom), drop)
            u *= 1.0 - step
            u[j_dn] += step
            np.clip(u, 0.0, None, out=u)
            u /= u.sum()
    raise NumericalError("ellipsoid ascent hit the iteration cap before the gap closed")


# ---------------------------------------------------------------------------
# gauge maximization over a polytope
# ---------------------------------------------------------------------------

def _project_rows_to_simplex(W):
    """Euclidean projection of each row of W onto the probability simplex."""
    sorted_W = np.sort(W, axis=1)[:, ::-1]
    css = np.cumsum(sorted_W, axis=1) - 1.0
    idx = np.arange(1, W.shape[1] + 1)
    cond = sorted_W - css / idx > 0
    rho = cond.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(W.shape[0]), rho] / (rho + 1)
    return np.maximum(W - theta[:, None], 0.0)


def max_gauge_over_polytope(body, polytope_vertices, restarts=32, seed=0,
                            iterations=500):
    """Lower-bound the maximum of the body's gauge over a polytope hull.

    Multi-start projected ascent over barycentric weights: starts are the
    barycenter, every vertex-pair midpoint, and `restarts` Dirichlet samples.
    Returns (value, point); the value is the body's gauge at the returned
    point, and the point's membership in the hull is re-checked by LP.
    """
    V = np.atleast_2d(np.asarray(polytope_vertices, dtype=float))
    v, n = V.shape
    if v < 1:
        raise InputError("polytope needs at least one vertex")
    gauge = body.batch_gauge

    rng = np.random.default_rng(seed)
    starts = [np.full((1, v), 1.0 / v)]
    eye = np.eye(v)
    pair_mid = [(eye[i] + eye[j]) / 2.0 for i in range(v) for j in range(i, v)]
    starts.append(np.asarray(pair_mid))
    if restarts > 0:
        starts.append(rng.dirichlet(np.ones(v), size=restarts))
    W = np.vstack(starts)
    rows = W.shape[0]

    step = np.full(rows, 0.25)
    X = W @ V
    f = gauge(X)
    best_val = f.copy()
    best_X = X.copy()
    h = 1e-7
    for _ in range(iterations):
        # finite-difference gradient in point space, mapped back to weights
        Gx = np.empty_like(X)
        for d in range(n):
            Xp = X.copy(); Xp[:, d] += h
            Xm = X.copy(); Xm[:, d] -= h
            Gx[:, d] = (gauge(Xp) - gauge(Xm)) / (2 * h)
        Gw = Gx @ V.T
        norms = np.linalg.norm(Gw, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        W_try = _project_rows_to_simplex(W + step[:, None] * Gw / norms)
        X_try = W_try @ V
        f_try = gauge(X_try)
        improved = f_try > f + 1e-14
        W[improved] = W_try[improved]
        X[improved] = X_try[improved]
        f[improved] = f_try[improved]
        step[improved] *= 1.2
        step[~improved] *= 0.5
        better = f > best_val
        best_val[better] = f[better]
        best_X[better] = X[better]
        if step.max() < 1e-14:
            break
    i = int(np.argmax(best_val))
    point = best_X[i]
    value = float(gauge(point[None, :])[0])
    _check_hull_membership(V, point)
    return value, point


def _check_hull_membership(V, point, tol=FEAS_TOL):
    """Assert `point` is a convex combination of the rows of V (via LP)."""
    v, n = V.shape
    A = np.vstack([V.T, np.ones((1, v))])
    b = np.concatenate([point, [1.0]])
    problem = LPProblem(
        objective=np.zeros(v),
        equality_matrix=A,
        equality_rhs=b,
        variable_bounds=[(0.0, None)] * v,
    )
    sol = solve_lp(problem)
    if sol.status != "optimal":
        raise NumericalError("ascent left the polytope (barycentric LP infeasible)")
