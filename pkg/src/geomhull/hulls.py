"""Hull membership oracles and representation transforms.

Three hulls of a generating set S appear here: the envelope ball (handled in
bodies), the m-term average hull (points (1/m) sum alpha_i s_i with integer
multiplicity budget m), and the theta-geometric hull (series
(1-theta) sum theta^k lambda_k s_k with |lambda_k| <= 1).  Membership in the
average hull is decided exactly by branch-and-bound; geometric-hull
membership is one-sided, so verdicts are member / unknown.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass

import numpy as np

from .bodies import GeneratingSet, PBody, fmt17
from .errors import InputError
from .optim import LPProblem, solve_lp


@dataclass
class GammaRepresentation:
    """Truncated geometric-series representation of a point over a generating set.

    Terms are (level, lambda, generator_index) with strictly increasing levels;
    the point is (1-theta) sum theta^level * lambda * s_index plus a residual
    of Euclidean norm residual_norm.
    """

    theta: float
    terms: list
    truncation_depth: int
    residual_norm: float = 0.0

    def __post_init__(self):
        if not 0 < self.theta < 1:
            raise InputError("theta must lie in (0, 1)")
        last = -1
        for level, lam, idx in self.terms:
            if level <= last:
                raise InputError("levels must be strictly increasing")
            if level > self.truncation_depth:
                raise InputError("level exceeds the truncation depth")
            if abs(lam) > 1 + 1e-12:
                raise InputError(f"|lambda| = {abs(lam)} exceeds 1")
            last = level

    def evaluate(self, S: GeneratingSet):
        x = np.zeros(S.dimension)
        for level, lam, idx in self.terms:
            x += (1.0 - self.theta) * self.theta ** level * lam * S.points[idx]
        return x

    def to_json(self):
        rows = ",\n".join(
            f"    [{level}, {fmt17(lam)}, {idx}]" for level, lam, idx in self.terms)
        body = "" if not self.terms else "\n" + rows + "\n  "
        return ("{\n"
                f'  "theta": {fmt17(self.theta)},\n'
                f'  "truncation_depth": {self.truncation_depth},\n'
                f'  "residual_norm": {fmt17(self.residual_norm)},\n'
                f'  "terms": [{body}]\n'
                "}\n")

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        terms = [(int(k), float(l), int(i)) for k, l, i in obj["terms"]]
        return cls(theta=float(obj["theta"]), terms=terms,
                   truncation_depth=int(obj["truncation_depth"]),
                   residual_norm=float(obj["residual_norm"]))


@dataclass
class DeltaMCertificate:
    """Witness that a point lies in the m-term average hull: x = (1/m) sum alpha_i s_i."""

    m: int
    multiplicities: np.ndarray
    alphas: np.ndarray

    def __post_init__(self):
        self.multiplicities = np.asarray(self.multiplicities, dtype=int)
        self.alphas = np.asarray(self.alphas, dtype=float)
        if self.m < 1:
            raise InputError("m must be at least 1")
        if (self.multiplicities < 0).any():
            raise InputError("multiplicities must be nonnegative")
        if self.multiplicities.sum() > self.m:
            raise InputError("multiplicities exceed the budget m")
        if (np.abs(self.alphas) > self.multiplicities + 1e-9).any():
            raise InputError("alpha exceeds its multiplicity")

    def evaluate(self, S: GeneratingSet):
        return S.points.T @ self.alphas / self.m

    def slots(self):
        """Expand into exactly m unit-coefficient slots (index, coefficient)."""
        out = []
        for i, mult in enumerate(self.multiplicities):
            if mult > 0:
                out.extend([(i, self.alphas[i] / mult)] * int(mult))
        out.extend([(0, 0.0)] * (self.m - len(out)))
        return out


@dataclass
class DeltaMVerdict:
    """Outcome of the average-hull membership search."""

    status: str  # member | non-member | undecided
    certificate: DeltaMCertificate | None
    optimum: int | None
    nodes: int


def _node_lp(S, target, caps, commits):
    """min sum_i max(|alpha_i|, commits_i) s.t. S^T alpha = target, |alpha_i| <= caps_i.

    Split alpha = a - b and introduce t_i >= a_i + b_i, t_i >= commits_i; the
    slack row a_i + b_i - t_i + w_i = 0 keeps everything in equality form.
    """
    k = S.count
    n = S.dimension
    A = np.vstack([
        np.hstack([S.points.T, -S.points.T, np.zeros((n, 2 * k))]),
        np.hstack([np.eye(k), np.eye(k), -np.eye(k), np.eye(k)]),
    ])
    rhs = np.concatenate([np.asarray(target, dtype=float), np.zeros(k)])
    cost = np.concatenate([np.zeros(2 * k), np.ones(k), np.zeros(k)])
    bounds = ([(0.0, float(u)) for u in caps] * 2
              + [(float(c), None) for c in commits]
              + [(0.0, None)] * k)
    sol = solve_lp(LPProblem(objective=cost, equality_matrix=A,
                             equality_rhs=rhs, variable_bounds=bounds))
    if sol.status != "optimal":
        return None, None
    return sol.value, sol.x[:k] - sol.x[k:2 * k]


def delta_m_membership(S: GeneratingSet, m: int, x, node_budget=10 ** 6) -> DeltaMVerdict:
    """Decide whether x lies in the m-term average hull of S.

    Minimizes sum ceil(|alpha_i|) subject to sum alpha_i s_i = m x by
    branch-and-bound: nodes carry per-generator caps and committed lower
    counts, each bounded below by the ceiling of an LP relaxation of
    sum max(|alpha_i|, committed_i).  Membership holds iff the optimum is
    <= m.  Exhausting the node budget yields an undecided verdict, which is
    distinct from non-membership.
    """
    if m < 1:
        raise InputError("m must be at least 1")
    x = np.asarray(x, dtype=float)
    if x.shape != (S.dimension,):
        raise InputError("point dimension mismatch")
    k = S.count
    target = m * x
    best_val = None
    best_alpha = None
    nodes = 0
    heap = [(0, 0, np.full(k, m), np.zeros(k, dtype=int))]
    tiebreak = 1
    while heap:
        if nodes >= node_budget:
            return DeltaMVerdict("undecided", None, None, nodes)
        parent_bound, _, caps, commits = heapq.heappop(heap)
        if best_val is not None and parent_bound >= best_val:
            continue
        nodes += 1
        value, alpha = _node_lp(S, target, caps, commits)
        if value is None:
            continue
        lower = math.ceil(value - 1e-9)
        if lower > m or (best_val is not None and lower >= best_val):
            continue
        cand = int(np.ceil(np.abs(alpha) - 1e-9).sum())
        if best_val is None or cand < best_val:
            best_val, best_alpha = cand, alpha.copy()
            if best_val <= m:
                break
        branch = None
        for i in range(k):
            mag = abs(alpha[i])
            frac = mag - math.floor(mag + 1e-9)
            if 1e-7 < frac < 1 - 1e-7 and math.ceil(mag - 1e-9) > commits[i]:
                branch = i
                break
        if branch is None:
            continue  # LP already integral here; cand banked the node exactly
        f = math.floor(abs(alpha[branch]))
        caps_a = caps.copy()
        caps_a[branch] = f
        commits_a = commits.copy()
        commits_a[branch] = min(commits_a[branch], f)
        heapq.heappush(heap, (lower, tiebreak, caps_a, commits_a))
        commits_b = commits.copy()
        commits_b[branch] = f + 1
        heapq.heappush(heap, (lower, tiebreak + 1, caps, commits_b))
        tiebreak += 2
    if best_val is not None and best_val <= m:
        mult = np.ceil(np.abs(best_alpha) - 1e-9).astype(int)
        cert = DeltaMCertificate(m=m, multiplicities=mult, alphas=best_alpha)
        return DeltaMVerdict("member", cert, best_val, nodes)
    return DeltaMVerdict("non-member", None, best_val, nodes)


# ---------------------------------------------------------------------------
# geometric hull
# ---------------------------------------------------------------------------

def default_truncation_depth(S: GeneratingSet, theta, tolerance):
    """Depth K with tail (1-theta) sum_{k>K} theta^k max||s|| below tolerance."""
    diameter = float(np.linalg.norm(S.points, axis=1).max())
    if tolerance >= diameter:
        return 0
    return max(0, math.ceil(math.log(tolerance / diameter) / math.log(theta)))


def gamma_greedy_represent(S: GeneratingSet, theta, x, K=None,
                           tolerance=1e-9) -> GammaRepresentation:
    """Greedy geometric-series representation of x over S.

    At level k with residual r, picks the generator s and coefficient
    lambda = clamp(<r,s> / ((1-theta) theta^k ||s||^2), [-1,1]) that minimize
    the next residual, lowest index first on ties.  Always returns the best
    representation found; success means residual_norm <= tolerance.
    """
    if not 0 < theta < 1:
        raise InputError("theta must lie in (0, 1)")
    x = np.asarray(x, dtype=float)
    if x.shape != (S.dimension,):
        raise InputError("point dimension mismatch")
    if K is None:
        K = default_truncation_depth(S, theta, tolerance)
    P = S.points
    sq = (P * P).sum(axis=1)
    r = x.copy()
    terms = []
    for k in range(K + 1):
        if np.linalg.norm(r) <= tolerance:
            break
        w = (1.0 - theta) * theta ** k
        lam = np.clip(P @ r / (w * sq), -1.0, 1.0)
        # residual^2 after subtracting w*lam_i*s_i, evaluated for every generator
        new_sq = (r @ r) - 2.0 * w * lam * (P @ r) + (w * lam) ** 2 * sq
        i = int(np.argmin(np.round(new_sq, 12)))  # rounding keeps ties index-stable
        if abs(lam[i]) > 1e-15:
            terms.append((k, float(lam[i]), i))
            r = r - w * lam[i] * P[i]
    return GammaRepresentation(theta=theta, terms=terms, truncation_depth=K,
                               residual_norm=float(np.linalg.norm(r)))


@dataclass
class GammaMembership:
    """One-sided geometric-hull verdict: member (with witness) or unknown."""

    status: str  # member | unknown
    representation: GammaRepresentation


def gamma_membership(S: GeneratingSet, theta, x, K=None,
                     tolerance=1e-9) -> GammaMembership:
    rep = gamma_greedy_represent(S, theta, x, K=K, tolerance=tolerance)
    status = "member" if rep.residual_norm <= tolerance else "unknown"
    return GammaMembership(status=status, representation=rep)


def gamma_rescale(rep: GammaRepresentation, new_theta):
    """Re-express a theta-hull representation at a larger theta.

    Returns (representation, scale) with scale = (1-alpha)/(1-theta) for
    alpha = rep.theta: coefficients shrink by (alpha/theta)^level and the new
    representation evaluates to 1/scale times the old value.
    """
    alpha = rep.theta
    if not new_theta > alpha:
        raise InputError("new theta must exceed the representation's theta")
    if not new_theta < 1:
        raise InputError("theta must lie in (0, 1)")
    scale = (1.0 - alpha) / (1.0 - new_theta)
    terms = [(level, lam * (alpha / new_theta) ** level, idx)
             for level, lam, idx in rep.terms]
    out = GammaRepresentation(theta=new_theta, terms=terms,
                              truncation_depth=rep.truncation_depth,
                              residual_norm=rep.residual_norm / scale)
    return out, scale


def pconv_contraction_bound(p, theta):
    """How far the geometric hull of a p-ball can stick out: p^(-1/p)(1-theta)^(1-1/p)."""
    if not 0 < p <= 1:
        raise InputError("p must lie in (0, 1]")
    if not 0 < theta < 1:
        raise InputError("theta must lie in (0, 1)")
    if p == 1.0:
        return 1.0
    return p ** (-1.0 / p) * (1.0 - theta) ** (1.0 - 1.0 / p)


def verify_pconv_contraction(body: PBody, theta, samples=1000, seed=0,
                             depth=64):
    """Monte-Carlo check that geometric-hull points stay inside the bound.

    Draws random truncated series elements (uniform lambda in [-1,1], uniform
    generator picks, the given depth), measures their p-gauge, and compares
    the worst against pconv_contraction_bound(p, theta).
    """
    if not 0 < theta < 1:
        raise InputError("theta must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    P = body.generators.points
    idx = rng.integers(0, P.shape[0], size=(samples, depth))
    lam = rng.uniform(-1.0, 1.0, size=(samples, depth))
    weights = lam * theta ** np.arange(depth)
    X = (1.0 - theta) * np.einsum("tk,tkn->tn", weights, P[idx])
    gauges = body.batch_gauge(X)
    bound = pconv_contraction_bound(body.p, theta)
    max_gauge = float(gauges.max())
    return {
        "lemma": "pconv-contraction",
        "params": {"p": body.p, "theta": theta, "depth": depth, "seed": seed},
        "samples": int(samples),
        "max_ratio": max_gauge / bound,
        "bound": bound,
        "pass": bool(max_gauge <= bound + 1e-6),
    }


# ---------------------------------------------------------------------------
# average-hull levels into geometric-hull levels
# ---------------------------------------------------------------------------

@dataclass
class GammaOverDeltaM:
    """Geometric series whose terms are average-hull points, not single generators."""

    theta: float
    m: int
    terms: list  # (level, lambda, DeltaMCertificate)
    truncation_depth: int

    def evaluate(self, S: GeneratingSet):
        x = np.zeros(S.dimension)
        for level, lam, cert in self.terms:
            x += (1.0 - self.theta) * self.theta ** level * lam * cert.evaluate(S)
        return x


def approx2_transform(S: GeneratingSet, theta, outer: GammaOverDeltaM):
    """Flatten a geometric series over m-term averages into a plain series.

    Each level-k average splits into its m unit slots at levels km..km+m-1 of
    a representation with ratio theta^(1/m); the exact scale
    (1-theta) * theta^((1-m)/m) / (m (1 - theta^(1/m)))
    never exceeds 2 theta / (3 theta - 1) once theta > 1/3.
    Returns (representation, scale) with scale * eval(rep) = eval(outer).
    """
    if not 1.0 / 3.0 < theta < 1:
        raise InputError("theta must lie in (1/3, 1)")
    m = outer.m
    if m < 1:
        raise InputError("m must be at least 1")
    phi = theta ** (1.0 / m)
    scale = (1.0 - theta) * phi ** (1 - m) / (m * (1.0 - phi))
    terms = []
    for level, lam, cert in outer.terms:
        if abs(lam) > 1 + 1e-12:
            raise InputError("outer lambda exceeds 1")
        if cert.m != m:
            raise InputError("certificate budget differs from the container's m")
        for j, (gen, beta) in enumerate(cert.slots()):
            mu = lam * beta * phi ** (m - 1 - j)
            if mu != 0.0:
                terms.append((level * m + j, float(mu), gen))
    rep = GammaRepresentation(theta=phi, terms=terms,
                              truncation_depth=outer.truncation_depth * m + m - 1,
                              residual_norm=0.0)
    return rep, scale
