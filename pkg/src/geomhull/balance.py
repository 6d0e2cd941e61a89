"""Sign balancing and the constants it feeds.

Sequential and exhaustive sign choices for vector tuples, the balancing
constant and equal-norm type constant estimates built on them, the halving
step that turns a 2N-term average into an N-term average plus a small
defect, and the end-to-end pipeline that converts envelope-ball membership
into a geometric-series representation.  Also the closed-form theta and
subspace-dimension formulas used when calibrating that pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bodies import GeneratingSet, envelope_gauge
from .errors import InputError, NumericalError, PhaseError
from .hulls import DeltaMCertificate, GammaOverDeltaM, approx2_transform


@dataclass
class GaugeSpace:
    """A dimension with a batch gauge callback (rows in, values out).

    family tags spaces with known closed-form behavior: "euclidean" or "l1";
    None means nothing is assumed beyond the callback.
    """

    dimension: int
    gauge: object
    family: str | None = None


def euclidean_space(n):
    return GaugeSpace(n, lambda X: np.linalg.norm(np.atleast_2d(X), axis=1),
                      family="euclidean")


def l1_space(n):
    return GaugeSpace(n, lambda X: np.abs(np.atleast_2d(X)).sum(axis=1),
                      family="l1")


@dataclass
class BalanceReport:
    N: int
    signs: np.ndarray
    sum_norm: float
    bound_used: float
    method: str


def greedy_signs(vectors, norm=None) -> BalanceReport:
    """Pick signs sequentially, each minimizing the norm of the partial sum.

    With the default Euclidean norm the choice is sign = -sign(<partial, x>),
    the square never grows faster than sum ||x_k||^2, and the final sum obeys
    ||sum eps x|| <= sqrt(N) max||x|| (both asserted).  A batch gauge callback
    switches the comparison to that gauge.
    """
    X = np.atleast_2d(np.asarray(vectors, dtype=float))
    N = X.shape[0]
    if N < 1:
        raise InputError("need at least one vector")
    signs = np.ones(N)
    partial = np.zeros(X.shape[1])
    if norm is None:
        budget = 0.0
        for k in range(N):
            dot = partial @ X[k]
            if dot > 0:
                signs[k] = -1.0
            partial = partial + signs[k] * X[k]
            budget += X[k] @ X[k]
            if partial @ partial > budget * (1 + 1e-9) + 1e-12:
                raise NumericalError("greedy square growth invariant violated")
        sum_norm = float(np.linalg.norm(partial))
        bound = math.sqrt(N) * float(np.linalg.norm(X, axis=1).max())
        if sum_norm > bound * (1 + 1e-9) + 1e-12:
            raise NumericalError("greedy final bound violated")
    else:
        for k in range(N):
            two = norm(np.vstack([partial + X[k], partial - X[k]]))
            if two[1] < two[0]:
                signs[k] = -1.0
            partial = partial + signs[k] * X[k]
        sum_norm = float(norm(partial[None, :])[0])
        bound = float(norm(X).sum())  # one-term-at-a-time triangle estimate
    return BalanceReport(N=N, signs=signs, sum_norm=sum_norm,
                         bound_used=bound, method="greedy")


def _half_sign_chunks(N, chunk=1 << 18):
    """All sign patterns with the first sign fixed +1, in manageable blocks."""
    total = 1 << (N - 1)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        bits = (idx[:, None] >> np.arange(N - 1)[None, :]) & 1
        yield np.hstack([np.ones((idx.size, 1)), 1.0 - 2.0 * bits])


def exhaustive_signs(vectors, norm=None) -> BalanceReport:
    """Best sign assignment by full enumeration (first sign +1 by symmetry)."""
    X = np.atleast_2d(np.asarray(vectors, dtype=float))
    N = X.shape[0]
    if N > 24:
        raise InputError("exhaustive sign search is capped at 24 vectors")
    if norm is None:
        norm = lambda Y: np.linalg.norm(Y, axis=1)
    best = None
    for E in _half_sign_chunks(N):
        vals = norm(E @ X)
        j = int(np.argmin(vals))
        if best is None or vals[j] < best[0]:
            best = (float(vals[j]), E[j].copy())
    bound = math.sqrt(N) * float(np.linalg.norm(X, axis=1).max())
    return BalanceReport(N=N, signs=best[1], sum_norm=best[0],
                         bound_used=bound, method="exhaustive")


def _sign_average(X, norm):
    total = 0.0
    count = 0
    for E in _half_sign_chunks(X.shape[0]):
        vals = norm(E @ X)
        total += float(vals.sum())
        count += vals.size
    return total / count


def _tuple_candidates(space: GaugeSpace, N, trials, rng):
    """Unit-gauge tuples worth trying: basis cycles, random, and perturbations."""
    n = space.dimension
    basis = np.eye(n)[np.arange(N) % n]
    cands = [basis]
    for _ in range(trials):
        cands.append(rng.standard_normal((N, n)))
    out = []
    for T in cands:
        g = space.gauge(T)
        if (g < 1e-12).any():
            continue
        out.append(T / g[:, None])
    return out


def bN_estimate(space: GaugeSpace, N, trials=20, seed=0):
    """Estimate the balancing constant: best signs make averages this small.

    Lower estimate: max over candidate tuples of
    min_signs ||sum eps x|| / (N max gauge), exhaustive when N <= 24 and
    greedy beyond.  Upper estimate: the Euclidean greedy guarantee N^(-1/2)
    when the space is Euclidean, else the trivial 1.
    """
    if N < 1:
        raise InputError("N must be at least 1")
    rng = np.random.default_rng(seed)
    lower = 0.0
    for T in _tuple_candidates(space, N, trials, rng):
        if N <= 24:
            rep = exhaustive_signs(T, norm=space.gauge)
        else:
            rep = greedy_signs(T, norm=space.gauge)
        lower = max(lower, rep.sum_norm / N)
    upper = N ** -0.5 if space.family == "euclidean" else 1.0
    return lower, upper


@dataclass
class TypeConstantReport:
    q: float
    q_prime: float
    N: int
    Tq_lower: float
    method: str
    witness: np.ndarray


def Tq_estimate(space: GaugeSpace, q, N, trials=20, seed=0) -> TypeConstantReport:
    """Lower estimate of the equal-norm type constant by exact sign averages.

    For each candidate unit-gauge tuple, the average of ||sum eps x|| over
    all 2^N sign patterns is computed exactly by enumeration and divided by
    N^(1/q); the report keeps the best tuple as witness.
    """
    if not 1 < q <= 2:
        raise InputError("q must lie in (1, 2]")
    if N > 20:
        raise InputError("exact sign-average enumeration is capped at N = 20")
    if N < 1:
        raise InputError("N must be at least 1")
    rng = np.random.default_rng(seed)
    best = (0.0, None)
    for T in _tuple_candidates(space, N, trials, rng):
        ratio = _sign_average(T, space.gauge) / N ** (1.0 / q)
        if ratio > best[0]:
            best = (ratio, T)
    q_prime = q / (q - 1.0)
    return TypeConstantReport(q=q, q_prime=q_prime, N=N, Tq_lower=best[0],
                              method="exhaustive-average", witness=best[1])


# ---------------------------------------------------------------------------
# halving
# ---------------------------------------------------------------------------

def halving_step(S: GeneratingSet, terms):
    """Split a 2N-term star-hull average into an N-term average plus a defect.

    terms are (generator_index, scalar) pairs with |scalar| <= 1.  Signs come
    from greedy_signs on the term vectors; the minority sign class (at most N
    terms) averages to v in the N-term hull, and the defect
    ||u - v|| = ||(1/2N) sum eps_k x_k|| is checked as an identity.
    """
    if len(terms) < 2 or len(terms) % 2 != 0:
        raise InputError("need an even number of terms, at least 2")
    N = len(terms) // 2
    k = S.count
    idx = np.array([t[0] for t in terms], dtype=int)
    scal = np.array([t[1] for t in terms], dtype=float)
    if idx.min() < 0 or idx.max() >= k:
        raise InputError("generator index out of range")
    if (np.abs(scal) > 1 + 1e-12).any():
        raise InputError("term scalar exceeds 1: not a star-hull element")
    X = scal[:, None] * S.points[idx]
    rep = greedy_signs(X)
    plus = int((rep.signs > 0).sum())
    minority_sign = 1.0 if plus <= N else -1.0
    mask = rep.signs == minority_sign
    mult = np.bincount(idx[mask], minlength=k)
    alphas = np.bincount(idx[mask], weights=scal[mask], minlength=k)
    cert = DeltaMCertificate(m=N, multiplicities=mult, alphas=alphas)
    u = X.sum(axis=0) / (2 * N)
    v = cert.evaluate(S)
    defect = float(np.linalg.norm(u - v))
    eps = np.where(mask, -1.0, 1.0)
    identity = (eps[:, None] * X).sum(axis=0) / (2 * N)
    if np.linalg.norm((u - v) - identity) > 1e-10 * max(1.0, np.linalg.norm(u)):
        raise NumericalError("halving defect identity violated")
    return cert, defect


def _exact_slots(coefficients, capacity):
    """Split per-generator weights into <= capacity unit slots, exactly.

    Each weight |c_i| becomes floor(|c_i|) full slots of sign(c_i) plus one
    fractional slot, grouped by generator so equal slots sit adjacent (greedy
    signs then cancel them pairwise).  Returns None if it does not fit.
    """
    slots = []
    for i, ci in enumerate(coefficients):
        a = abs(ci)
        if a < 1e-15:
            continue
        sign = 1.0 if ci > 0 else -1.0
        full = int(math.floor(a + 1e-12))
        frac = a - full
        slots.extend([(i, sign)] * full)
        if frac > 1e-12:
            slots.append((i, sign * frac))
    if len(slots) > capacity:
        return None
    slots.extend([(0, 0.0)] * (capacity - len(slots)))
    return slots


def type1_represent(S: GeneratingSet, theta, m, x, levels=40, tolerance=1e-9,
                    halvings=None, trace=None):
    """Represent an envelope-ball point as a scaled geometric series over S.

    Pipeline per series level: LP-decompose the current residual, round it
    into an equal-weight average over 2^halvings * m slots (lossless slot
    split; any unplaced mass joins the defect), halve down to m terms, emit
    the m-term certificate at coefficient 1, and pass the accumulated defect
    divided by theta to the next level.  The level defect must have envelope
    gauge <= theta or the pipeline fails with diagnostics.  Finally the
    level certificates flatten into a representation with ratio theta^(1/m).

    Returns (representation, scale) with scale * eval(rep) = x up to the
    representation's residual_norm * scale; the scale never exceeds
    2 theta / ((3 theta - 1)(1 - theta)).  Pass a list as `trace` to collect
    one record per halving step (level, halving, input_terms, defect).
    """
    if not 1.0 / 3.0 < theta < 1:
        raise InputError("theta must lie in (1/3, 1)")
    if m < 1:
        raise InputError("m must be at least 1")
    x = np.asarray(x, dtype=float)
    start = envelope_gauge(S, x)
    if start.value > 1 + 1e-9:
        raise InputError(f"envelope gauge {start.value:.6g} exceeds 1")
    if halvings is None:
        halvings = max(1, math.ceil(math.log2(max(2.0, 16.0 * S.dimension / m))))
    M = 2 ** halvings * m
    r = x.copy()
    out_terms = []
    defect_log = []
    for level in range(levels):
        norm_r = np.linalg.norm(r)
        if norm_r <= 1e-15 or theta ** level * norm_r <= tolerance:
            break
        cert = envelope_gauge(S, r)
        lam = cert.coefficients * M
        slots = _exact_slots(lam, M)
        shrink = 1.0
        while slots is None:  # mass does not fit; shed a little to the defect
            shrink *= 0.95
            slots = _exact_slots(lam * shrink, M)
        for h in range(halvings):
            n_in = len(slots)
            vcert, d = halving_step(S, slots)
            defect_log.append(d)
            if trace is not None:
                trace.append({"level": level, "halving": h,
                              "input_terms": n_in, "defect": d})
            slots = vcert.slots()
        y = vcert.evaluate(S)
        w = r - y
        gauge_w = envelope_gauge(S, w).value
        if gauge_w > theta * (1 + 1e-9):
            raise PhaseError(
                "halving-convergence",
                f"level {level} defect gauge {gauge_w:.6g} exceeds theta {theta}",
                level=level, defect_gauge=gauge_w, theta=theta,
                defects=defect_log, m=m, halvings=halvings)
        out_terms.append((level, 1.0, vcert))
        r = w / theta
    depth = max(len(out_terms) - 1, 0)
    container = GammaOverDeltaM(theta=theta, m=m,
                                terms=out_terms, truncation_depth=depth)
    rep, flatten_scale = approx2_transform(S, theta, container)
    total_scale = flatten_scale / (1.0 - theta)
    tail = theta ** len(out_terms) * np.linalg.norm(r) if out_terms else np.linalg.norm(r)
    rep.residual_norm = float(tail / total_scale)
    return rep, total_scale


# ---------------------------------------------------------------------------
# closed-form theta and dimension formulas
# ---------------------------------------------------------------------------

def type2_theta(q, Tq):
    """Theta from the type constant, with the companion envelope scale 12."""
    if not 1 < q <= 2:
        raise InputError("q must lie in (1, 2]")
    if Tq < 1:
        raise InputError("type constants are at least 1")
    q_prime = q / (q - 1.0)
    theta = 1.0 - 0.25 * ((2.0 ** (1.0 / q_prime) - 1.0) / (2.0 * Tq)) ** q_prime
    return theta, 12.0


def elton_theta(m, c0=0.9, C=10.0):
    """Theta from the dimension of a nearly-l1 subspace (calibrated constants).

    The constants c0 and C are calibration entries, not derived values; the
    formula is 1 - (1/2)(Cm)^(-C ln ln(Cm)) with natural logarithms.
    """
    if m < 2:
        raise InputError("m must be at least 2")
    if C < 1:
        raise InputError("C must be at least 1")
    if not 0.5 <= c0 < 1:
        raise InputError("c0 must lie in [1/2, 1)")
    if C * m <= math.e:
        raise InputError("C*m must exceed e for the iterated logarithm")
    return 1.0 - 0.5 * (C * m) ** (-C * math.log(math.log(C * m)))


def corollary_l1_bound(delta, p, c=0.1, C=8.0):
    """Dimension lower bound for a nearly-l1 subspace from the non-convexity.

    Returns (bound, A) with A = C * delta^(p/(1-p)) and
    bound = c * p * exp(ln A / ln ln A).  Reporting only.
    """
    if not 0 < p < 1:
        raise InputError("p must lie in (0, 1)")
    if delta < 1:
        raise InputError("non-convexity is at least 1")
    A = C * delta ** (p / (1.0 - p))
    if A <= math.e ** math.e:
        raise InputError(f"A = {A:.6g} must exceed e^e for the bound to apply")
    bound = c * p * math.exp(math.log(A) / math.log(math.log(A)))
    return bound, A
