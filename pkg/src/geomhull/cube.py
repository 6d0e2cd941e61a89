"""Exact cube-vertex combinatorics and the randomized cube-quotient pipeline.

Everything that touches vertex patterns runs in exact integer or rational
arithmetic: the shattered-subset search, the anchored chain construction with
its dyadic representation tables, and the pattern-counting selection.
Floating point enters only through the LP decomposition and subsampling
phases of the quotient pipeline, and every float result is re-checked against
the exact combinatorial certificate it came from.

Vertices are bitmasks: bit j set means coordinate j equals -1, so mask 0 is
the all-plus vertex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .bodies import GeneratingSet, PBody, delta_nonconvexity, envelope_gauge
from .errors import BudgetError, InputError, NumericalError, PhaseError
from .hulls import (DeltaMCertificate, GammaOverDeltaM, GammaRepresentation,
                    approx2_transform, pconv_contraction_bound)


# ---------------------------------------------------------------------------
# calibration record
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Calibration:
    """Named constants of the quotient constructions, with fitted defaults.

    The underlying results prove that absolute constants exist without
    supplying values.  These defaults were fitted on random instances; reports
    always show them next to the realized quantities and never claim them as
    proven.

      c   final-ratio and density constant
      C   chain scale target (scale <= C/eps, slot count <= C/eps^2)
      c0  balancing success-rate floor (reported only)
      c1  snapping factor, delta = c1 * eps  (chosen so C * c1 = 1/4)
      c2  subsample budget factor, m = smallest integer > c2 d^2 eps^-3 (1 - ln eps)
    """

    c: float = 0.1
    C: float = 8.0
    c0: float = 0.9
    c1: float = 0.03125
    c2: float = 1.0

    def as_dict(self):
        return {"c": self.c, "C": self.C, "c0": self.c0,
                "c1": self.c1, "c2": self.c2}

    @classmethod
    def from_mapping(cls, mapping):
        if mapping is None:
            return cls()
        if isinstance(mapping, cls):
            return mapping
        values = cls().as_dict()
        for key, value in dict(mapping).items():
            if key not in values:
                raise InputError(f"unknown calibration constant {key!r}")
            values[key] = float(value)
            if not math.isfinite(values[key]):
                raise InputError(f"calibration constant {key!r} must be finite")
        return cls(**values)


# ---------------------------------------------------------------------------
# vertex sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VertexSet:
    """A set of cube vertices, each encoded as a bitmask (set bit = -1)."""

    n: int
    members: frozenset

    def __post_init__(self):
        if not 1 <= self.n <= 20:
            raise InputError("vertex dimension must lie in 1..20")
        members = frozenset(int(m) for m in self.members)
        for m in members:
            if not 0 <= m < 1 << self.n:
                raise InputError(f"mask {m} out of range for dimension {self.n}")
        object.__setattr__(self, "members", members)

    @property
    def count(self):
        return len(self.members)

    @classmethod
    def full(cls, n):
        return cls(n=n, members=frozenset(range(1 << n)))

    @classmethod
    def from_points(cls, points):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2:
            raise InputError("expected a 2-d array of vertices")
        if not np.all(np.abs(points) == 1.0):
            raise InputError("vertex coordinates must be exactly +-1")
        n = points.shape[1]
        masks = frozenset(mask_of_vector(row) for row in points)
        return cls(n=n, members=masks)

    def vector(self, mask):
        return vector_of_mask(self.n, mask)

    def to_points(self):
        return np.array([self.vector(m) for m in sorted(self.members)], dtype=float)

    def pattern(self, mask):
        return "".join("-" if (mask >> j) & 1 else "+" for j in range(self.n))


def mask_of_vector(row):
    mask = 0
    for j, value in enumerate(row):
        if value < 0:
            mask |= 1 << j
    return mask


def vector_of_mask(n, mask):
    return np.array([1.0 - 2.0 * ((mask >> j) & 1) for j in range(n)])


def save_vertex_set(V: VertexSet, path):
    with open(path, "w") as fh:
        for mask in sorted(V.members):
            fh.write(V.pattern(mask) + "\n")


def load_vertex_set(path) -> VertexSet:
    masks = set()
    n = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if n is None:
                n = len(line)
            elif len(line) != n:
                raise InputError("inconsistent vertex line lengths")
            mask = 0
            for j, ch in enumerate(line):
                if ch == "-":
                    mask |= 1 << j
                elif ch != "+":
                    raise InputError(f"bad vertex character {ch!r}")
            masks.add(mask)
    if n is None:
        raise InputError("empty vertex file")
    return VertexSet(n=n, members=frozenset(masks))


def vertex_set_from_generating_set(S: GeneratingSet) -> VertexSet:
    return VertexSet.from_points(S.points)


def vertex_generating_set(V: VertexSet, label="") -> GeneratingSet:
    return GeneratingSet(dimension=V.n, points=V.to_points(), label=label)


# ---------------------------------------------------------------------------
# shattered subsets
# ---------------------------------------------------------------------------

def _split_classes(classes, j):
    """Refine a pattern partition by coordinate j; None when a class misses a sign."""
    out = []
    for cls in classes:
        plus = [m for m in cls if not (m >> j) & 1]
        minus = [m for m in cls if (m >> j) & 1]
        if not plus or not minus:
            return None
        out.append(plus)
        out.append(minus)
    return out


def find_shattered(V: VertexSet, target_size, node_budget=10 ** 7):
    """Lexicographically first coordinate subset of the given size shattered by V.

    Depth-first over subsets in lexicographic order, pruning prefixes that
    already fail -- shattering is closed under taking subsets, so a failed
    prefix kills the whole branch.  Returns None only when the search ran to
    completion, so absence is proven; exceeding the node budget raises
    BudgetError instead.
    """
    if not 0 <= target_size <= V.n:
        raise InputError("target size out of range")
    if target_size == 0:
        return ()
    if V.count < (1 << target_size):
        return None
    nodes = 0
    root = [list(V.members)]

    def extend(coords, classes, start):
        nonlocal nodes
        for j in range(start, V.n - (target_size - len(coords) - 1)):
            nodes += 1
            if nodes > node_budget:
                raise BudgetError("shattered-subset search budget exhausted",
                                  nodes=nodes)
            refined = _split_classes(classes, j)
            if refined is None:
                continue
            picked = coords + (j,)
            if len(picked) == target_size:
                return picked
            found = extend(picked, refined, j + 1)
            if found is not None:
                return found
        return None

    return extend((), root, 0)


def _max_shattered(V: VertexSet, node_budget=10 ** 7):
    """Largest shattered subset, lexicographically first among the largest."""
    nodes = 0
    best = ()
    root = [list(V.members)]

    def extend(coords, classes, start):
        nonlocal nodes, best
        if len(coords) > len(best):
            best = coords
        for j in range(start, V.n):
            if len(coords) + (V.n - j) <= len(best):
                break
            nodes += 1
            if nodes > node_budget:
                raise BudgetError("shattered-subset search budget exhausted",
                                  nodes=nodes)
            refined = _split_classes(classes, j)
            if refined is not None:
                extend(coords + (j,), refined, j + 1)

    extend((), root, 0)
    return best


# ---------------------------------------------------------------------------
# anchored chain
# ---------------------------------------------------------------------------

def chain_constants(k):
    """Closed-form scale and slot count at chain level k."""
    return 2 ** (k + 1) - 1, 2 * 4 ** k - 2 ** k


@dataclass
class ShatterChain:
    """Anchored increasing chain of coordinate subsets with exact dyadic tables.

    sigma[0] is shattered outright; each later sigma[k] adds tau[k-1], a set
    on which the members agreeing with the anchor on sigma[k-1] still realize
    every pattern.  rep_table maps each pattern over sigma[-1] to a dyadic
    combination of members whose projection equals the pattern exactly, within
    the level budget: sum of ceil(|coef| * 2^levels) is at most the slot count.
    """

    levels: int
    sigma: list
    tau: list
    anchor: tuple
    fiber_tables: list
    rep_table: dict
    epsilon: float
    n: int

    def __post_init__(self):
        if self.levels < 0 or len(self.sigma) != self.levels + 1:
            raise InputError("sigma must hold one subset per level")
        if len(self.tau) != self.levels or len(self.fiber_tables) != self.levels:
            raise InputError("tau and fiber tables must cover every growth level")
        for k in range(self.levels):
            grown = tuple(sorted(set(self.sigma[k]) | set(self.tau[k])))
            if grown != tuple(sorted(self.sigma[k + 1])):
                raise InputError("sigma must grow by exactly tau at each level")
            if set(self.sigma[k]) & set(self.tau[k]):
                raise InputError("tau overlaps the previous sigma")
            if not self.tau[k]:
                raise InputError("empty tau level")
        if len(self.anchor) != self.n:
            raise InputError("anchor length mismatch")

    @property
    def scale(self):
        return chain_constants(self.levels)[0]

    @property
    def slot_count(self):
        return chain_constants(self.levels)[1]

    def verify(self, V: VertexSet):
        """Re-check every representation entry in exact rational arithmetic."""
        sigma = self.sigma[-1]
        if len(self.rep_table) != 1 << len(sigma):
            raise NumericalError("representation table does not cover the cube")
        a_s, b_s = chain_constants(self.levels)
        weight = 1 << self.levels
        for pattern, combo in self.rep_table.items():
            slots = 0
            for member, coef in combo.items():
                if member not in V.members:
                    raise NumericalError("representation uses a non-member")
                scaled = abs(coef) * weight
                slots += -(-scaled.numerator // scaled.denominator)
            if slots > b_s:
                raise NumericalError(f"slot budget {slots} exceeds {b_s}")
            for pos, coord in enumerate(sigma):
                total = Fraction(0)
                for member, coef in combo.items():
                    sign = -1 if (member >> coord) & 1 else 1
                    total += coef * sign
                if total != pattern[pos]:
                    raise NumericalError("projection mismatch in the chain table")
        return True


def _group_by_projection(members, coords):
    groups = {}
    for m in members:
        key = tuple(1 - 2 * ((m >> c) & 1) for c in coords)
        groups.setdefault(key, []).append(m)
    return groups


def _grow_tau(fiber, taken, n):
    """Greedy coordinate additions keeping the fiber's projection full."""
    tau = []
    classes = [sorted(fiber)]
    for j in range(n):
        if j in taken:
            continue
        refined = _split_classes(classes, j)
        if refined is not None:
            tau.append(j)
            classes = refined
    return tuple(tau)


def _fiber_pairs(fiber, tau):
    """For every tau-pattern, a member pair realizing it and its negation."""
    groups = _group_by_projection(fiber, tau)
    table = {}
    for pattern in groups:
        negated = tuple(-v for v in pattern)
        if negated not in groups:
            return None
        table[pattern] = (min(groups[pattern]), min(groups[negated]))
    if len(table) != 1 << len(tau):
        return None
    return table


def alesker_chain(V: VertexSet, epsilon, density_c=0.2, enforce_density=True,
                  node_budget=10 ** 7) -> ShatterChain:
    """Build the anchored chain: shattered core, then anchored fiber growth.

    The core sigma[0] is the largest shattered subset.  Each growth level
    fixes the anchor pattern on the current sigma and adds the largest tau on
    which the anchored fiber still realizes every pattern; representation
    tables then follow the three-part induction (previous representation,
    its tau-negation assembled from half-differences of fiber pairs, and one
    fresh half-difference for the target pattern), all in dyadic rationals.
    Anchor extensions are ranked by fiber size with lexicographic ties, and
    the first ranking that completes every level wins.

    Runs for ceil(log2(1/epsilon)) levels, stopping early once sigma is
    everything.  Fails with the level reached when no anchor extension grows.
    """
    if not 0 < epsilon <= 1:
        raise InputError("epsilon must lie in (0, 1]")
    if V.n > 14:
        raise InputError("chain construction is limited to dimension 14")
    if V.count == 0:
        raise InputError("empty vertex set")
    threshold = 2 ** (V.n * (1.0 - density_c * epsilon))
    if enforce_density and V.count < threshold:
        raise InputError(
            f"vertex set too sparse: {V.count} < 2^(n(1-c eps)) = {threshold:.1f}")
    levels_wanted = max(0, math.ceil(math.log2(1.0 / epsilon)))
    sigma0 = _max_shattered(V, node_budget)
    if not sigma0:
        raise PhaseError("chain", "no shattered coordinate found", level=0)

    members = sorted(V.members)
    best_state = {"level": 0}

    def search(level, sigma, anchor_bits, free_coords):
        """Returns (sigma_list, tau_list, fiber_tables, anchor) or None."""
        if level > levels_wanted or len(sigma) == V.n:
            return [tuple(sigma)], [], [], anchor_bits
        fiber_all = [m for m in members
                     if all(((m >> c) & 1) == ((anchor_bits >> c) & 1)
                            for c in sigma)]
        # rank the anchor's free pattern choices on the newly pinned coords
        groups = _group_by_projection(fiber_all, free_coords) if free_coords \
            else {(): fiber_all}
        ranked = sorted(groups.items(), key=lambda kv: (-len(kv[1]), kv[0]))
        taken = set(sigma)
        for pattern, fiber in ranked:
            bits = anchor_bits
            for pos, coord in enumerate(free_coords):
                if pattern[pos] < 0:
                    bits |= 1 << coord
                else:
                    bits &= ~(1 << coord)
            tau = _grow_tau(fiber, taken, V.n)
            if not tau:
                continue
            pairs = _fiber_pairs(fiber, tau)
            if pairs is None:
                continue
            best_state["level"] = max(best_state["level"], level)
            grown = tuple(sorted(set(sigma) | set(tau)))
            deeper = search(level + 1, grown, bits, tau)
            if deeper is not None:
                sig, taus, tables, anchor = deeper
                return [tuple(sigma)] + sig, [tau] + taus, [pairs] + tables, anchor
        return None

    if levels_wanted == 0 or len(sigma0) == V.n:
        outcome = [tuple(sigma0)], [], [], 0
    else:
        outcome = search(1, sigma0, 0, sigma0)
    if outcome is None:
        raise PhaseError("chain", "no anchor extension grows the chain",
                         level=best_state["level"] + 1, sigma0=sigma0)
    sigma_list, tau_list, fiber_tables, anchor_bits = outcome
    levels = len(tau_list)
    anchor = tuple(1 - 2 * ((anchor_bits >> j) & 1) for j in range(V.n))

    # level-0 table: each core pattern maps to one witness with coefficient 1
    core_groups = _group_by_projection(members, sigma_list[0])
    table = {pattern: {min(group): Fraction(1)}
             for pattern, group in core_groups.items()}

    half = Fraction(1, 2)
    for k in range(levels):
        prev_sigma, tau = sigma_list[k], tau_list[k]
        pairs = fiber_tables[k]
        new_sigma = sigma_list[k + 1]
        prev_pos = [new_sigma.index(c) for c in prev_sigma]
        tau_pos = [new_sigma.index(c) for c in tau]
        grown = {}
        for pattern in _all_patterns(len(new_sigma)):
            prev_pat = tuple(pattern[i] for i in prev_pos)
            tau_pat = tuple(pattern[i] for i in tau_pos)
            combo = dict(table[prev_pat])
            additions = []
            for member, coef in table[prev_pat].items():
                t = tuple(1 - 2 * ((member >> c) & 1) for c in tau)
                u, v = pairs[t]
                additions.append((u, -coef * half))
                additions.append((v, coef * half))
            u, v = pairs[tau_pat]
            additions.append((u, half))
            additions.append((v, -half))
            for member, coef in additions:
                combo[member] = combo.get(member, Fraction(0)) + coef
            grown[pattern] = {m: c for m, c in combo.items() if c != 0}
        table = grown

    chain = ShatterChain(levels=levels, sigma=sigma_list, tau=tau_list,
                         anchor=anchor, fiber_tables=fiber_tables,
                         rep_table=table, epsilon=float(epsilon), n=V.n)
    chain.verify(V)
    return chain


def _all_patterns(k):
    for mask in range(1 << k):
        yield tuple(1 - 2 * ((mask >> i) & 1) for i in range(k))


# ---------------------------------------------------------------------------
# chain certificates over a generating set
# ---------------------------------------------------------------------------

@dataclass
class ChainCertificates:
    """Average-hull certificates for every pattern the chain reaches."""

    sigma: tuple
    scale: int
    m: int
    certificates: dict
    calibration_ok: bool
    scale_target: float
    m_target: float


def chain_cube_certificate(chain: ShatterChain, S: GeneratingSet,
                           C=8.0) -> ChainCertificates:
    """Convert chain tables into average-hull certificates over S.

    Every table entry becomes a certificate with slot count b and scale a for
    the chain's level constants; the projection identity is re-verified in
    exact rationals.  Scales beyond the calibrated targets are flagged, not
    fatal -- the calibration is a fitted record, not a guarantee.
    """
    index = {}
    for i, row in enumerate(S.points):
        if not np.all(np.abs(row) == 1.0):
            raise InputError("generating set must consist of cube vertices")
        index[mask_of_vector(row)] = i
    a_s, b_s = chain_constants(chain.levels)
    weight = 1 << chain.levels
    sigma = tuple(chain.sigma[-1])
    certificates = {}
    for pattern, combo in chain.rep_table.items():
        mult = np.zeros(S.count, dtype=int)
        alphas = np.zeros(S.count)
        for member, coef in combo.items():
            if member not in index:
                raise InputError("chain member missing from the generating set")
            scaled = coef * weight
            if scaled.denominator != 1:
                raise NumericalError("non-dyadic chain coefficient")
            mult[index[member]] = abs(scaled.numerator)
            alphas[index[member]] = float(scaled.numerator)
        if int(mult.sum()) > b_s:
            raise NumericalError("certificate exceeds the slot budget")
        cert = DeltaMCertificate(m=b_s, multiplicities=mult, alphas=alphas)
        # exact projection check, independently of the chain's own verify
        for pos, coord in enumerate(sigma):
            total = Fraction(0)
            for member, coef in combo.items():
                total += coef * (-1 if (member >> coord) & 1 else 1)
            if total != pattern[pos]:
                raise NumericalError("certificate projection mismatch")
        certificates[pattern] = cert
    eps = chain.epsilon
    calibration_ok = a_s <= C / eps + 1e-9 and b_s <= C / eps ** 2 + 1e-9
    return ChainCertificates(sigma=sigma, scale=a_s, m=b_s,
                             certificates=certificates,
                             calibration_ok=calibration_ok,
                             scale_target=C / eps, m_target=C / eps ** 2)


# ---------------------------------------------------------------------------
# counting selection
# ---------------------------------------------------------------------------

def counting_select(candidates, k):
    """Pick the k-subset carrying the most distinct agreement patterns.

    Each vertex's agreement set is trimmed to its k lowest coordinates; the
    vertices are grouped by trimmed set and the group realizing the most
    distinct patterns wins, ties to the lexicographically smallest subset.
    When the candidates cover the whole vertex set, a pigeonhole count over
    the C(n,k) possible subsets gives |T| >= 2^n / (2^(n-k) C(n,k)).
    """
    if not candidates:
        raise InputError("no candidates")
    if k < 1:
        raise InputError("k must be positive")
    groups = {}
    for mask, agreement in candidates.items():
        coords = tuple(sorted(set(int(c) for c in agreement)))
        if len(coords) < k:
            raise InputError(f"agreement set smaller than {k}")
        tau = coords[:k]
        pattern = 0
        for pos, c in enumerate(tau):
            if (int(mask) >> c) & 1:
                pattern |= 1 << pos
        groups.setdefault(tau, set()).add(pattern)
    tau = min(groups, key=lambda t: (-len(groups[t]), t))
    return tau, VertexSet(n=k, members=frozenset(groups[tau]))


# ---------------------------------------------------------------------------
# subsampling and snapping
# ---------------------------------------------------------------------------

@dataclass
class SubsampleFit:
    """Best m-subset average of a decomposition, with its deviation statistics."""

    x: np.ndarray
    chosen: tuple
    agreement_set: tuple
    agreement_count: int
    mean_square_vs_average: float
    mean_square_vs_vertex: float
    deviation_variance: float
    variance_bound: float
    trials: int
    m: int


def subsample_vertex_fit(elements, vertex, delta, m, trials, seed) -> SubsampleFit:
    """Sample uniform m-subsets of the decomposition, keep the best agreement.

    The winning average maximizes the number of coordinates within delta of
    the target vertex (first winner kept on ties).  The mean squared distance
    of the subset average to the full average is reported against the n d^2/m
    allowance, d being the largest sup-norm among the elements.
    """
    elements = np.asarray(elements, dtype=float)
    vertex = np.asarray(vertex, dtype=float)
    if elements.ndim != 2 or elements.shape[1] != vertex.shape[0]:
        raise InputError("decomposition and vertex dimensions differ")
    N, n = elements.shape
    if not 1 <= m <= N:
        raise InputError("subset size must lie in 1..N")
    if trials < 1:
        raise InputError("at least one trial required")
    rng = np.random.default_rng(seed)
    average = elements.mean(axis=0)
    d = float(np.abs(elements).max())
    best = None
    sq_avg = np.empty(trials)
    sq_vertex = np.empty(trials)
    for t in range(trials):
        chosen = rng.choice(N, size=m, replace=False)
        x = elements[chosen].mean(axis=0)
        count = int((np.abs(x - vertex) <= delta + 1e-12).sum())
        sq_avg[t] = float(((x - average) ** 2).sum())
        sq_vertex[t] = float(((x - vertex) ** 2).sum())
        if best is None or count > best[0]:
            best = (count, x, tuple(int(i) for i in np.sort(chosen)))
    count, x, chosen = best
    agreement = tuple(int(j) for j in
                      np.nonzero(np.abs(x - vertex) <= delta + 1e-12)[0])
    variance = float(sq_vertex.var(ddof=1)) if trials > 1 else 0.0
    return SubsampleFit(x=x, chosen=chosen, agreement_set=agreement,
                        agreement_count=count,
                        mean_square_vs_average=float(sq_avg.mean()),
                        mean_square_vs_vertex=float(sq_vertex.mean()),
                        deviation_variance=variance,
                        variance_bound=n * d * d / m, trials=trials, m=m)


@dataclass
class SnapEntry:
    """One vertex's subsampled point, its snapped version, and the certificate."""

    x: np.ndarray
    y: np.ndarray
    agreement_set: tuple
    certificate: DeltaMCertificate


@dataclass
class SnapTable:
    """Snapped per-vertex averages: y agrees with the vertex on the agreement set."""

    delta: float
    entries: dict

    def verify(self):
        for mask, entry in self.entries.items():
            n = entry.x.shape[0]
            a = vector_of_mask(n, mask)
            agree = np.zeros(n, dtype=bool)
            agree[list(entry.agreement_set)] = True
            if not np.array_equal(entry.y[agree], a[agree]):
                raise NumericalError("snapped coordinates do not match the vertex")
            if not np.array_equal(entry.y[~agree], entry.x[~agree]):
                raise NumericalError("snapping touched a non-agreement coordinate")
            if np.abs(entry.y - entry.x).max() > self.delta + 1e-12:
                raise NumericalError("snap displacement exceeds delta")
        return True


def _snap(x, vertex, agreement):
    y = x.copy()
    idx = list(agreement)
    y[idx] = vertex[idx]
    return y


# ---------------------------------------------------------------------------
# quotient pipeline
# ---------------------------------------------------------------------------

@dataclass
class _VertexEntry:
    certificate: DeltaMCertificate
    snap_residual: np.ndarray
    snap_residual_sigma: np.ndarray


@dataclass
class QuotientReport:
    """Outcome of the cube-quotient pipeline, serializable and re-queryable."""

    sigma: tuple
    epsilon: float
    theta: float
    C_over_eps: float
    constants_used: dict
    certificates: list
    verified_fraction: float
    tau: tuple = ()
    theta_formula: float = 0.0
    chain_levels: int = 0
    density_ok: bool = True
    variance_check: dict = field(default_factory=dict)
    vertex_residual_max: float = 0.0
    seed: int = 0
    query_tolerance: float = 1e-6
    calibration: dict = field(default_factory=dict)
    vertex_certificates: dict = field(default_factory=dict)
    assembly_theta: float = 0.75
    flat_m: int = 1
    _entries: dict = field(default_factory=dict, repr=False)

    def to_json(self):
        payload = {
            "sigma": list(self.sigma),
            "tau": list(self.tau),
            "epsilon": self.epsilon,
            "theta": self.theta,
            "theta_formula": self.theta_formula,
            "C_over_eps": self.C_over_eps,
            "constants_used": self.constants_used,
            "calibration": self.calibration,
            "chain_levels": self.chain_levels,
            "density_ok": self.density_ok,
            "variance_check": self.variance_check,
            "vertex_residual_max": self.vertex_residual_max,
            "verified_fraction": self.verified_fraction,
            "seed": self.seed,
            "query_tolerance": self.query_tolerance,
            "assembly_theta": self.assembly_theta,
            "flat_m": self.flat_m,
            "vertex_certificates": self.vertex_certificates,
            "certificates": self.certificates,
        }
        import json as _json
        return _json.dumps(_sanitize(payload), sort_keys=True, indent=2) + "\n"


def _sanitize(obj):
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def _sparse_cert(cert: DeltaMCertificate, extra=None):
    entries = [[int(i), int(cert.multiplicities[i]), float(cert.alphas[i])]
               for i in np.nonzero(cert.multiplicities)[0]]
    out = {"m": int(cert.m), "entries": entries}
    if extra:
        out.update(extra)
    return out


def _decompose_vertex(S, a, m, singleton_index):
    """Equal-weight star decomposition of a vertex: slot list and element array.

    Members of S get the one-slot fast path; otherwise the envelope LP
    coefficients are split into at most N equal slots after a slight shrink
    that keeps the slot count within budget.  The shrink error is charged
    against the subsample variance allowance by the caller.
    """
    key = mask_of_vector(a)
    if key in singleton_index:
        idx, sign = singleton_index[key]
        slots = [(idx, float(sign))] * m
        return slots, np.tile(a, (m, 1)), 0.0
    cert = envelope_gauge(S, a)
    gauge = cert.value
    if gauge > 1.0 + 1e-6:
        raise PhaseError("sandwich", "a cube vertex escapes the envelope",
                         vertex=a.tolist(), gauge=gauge)
    lam = cert.coefficients
    nz = np.nonzero(np.abs(lam) > 1e-12)[0]
    N = max(2 * m, 8 * len(nz))
    rho = min(1.0, (N - len(nz)) / (N * max(gauge, 1e-12)))
    slots = []
    for i in nz:
        weight = rho * abs(lam[i]) * N
        count = max(1, math.ceil(weight - 1e-12))
        slots.extend([(int(i), float(np.sign(lam[i]) * weight / count))] * count)
    if len(slots) > N:
        raise NumericalError("slot split exceeded its budget")
    slots.extend([(0, 0.0)] * (N - len(slots)))
    elements = np.array([s * S.points[i] for i, s in slots])
    shrink_error = float(np.linalg.norm(a - elements.mean(axis=0)))
    return slots, elements, shrink_error


def cube_quotient(S: GeneratingSet, epsilon, calibration=None, seed=0,
                  queries=32, subsample_trials=64, query_tolerance=1e-6,
                  density_c=0.2, node_budget=10 ** 7) -> QuotientReport:
    """Full randomized pipeline from a cube-sandwiched set to a cube quotient.

    Phases: per-vertex decomposition (doubling as the sandwich check),
    subsampling to short averages, snapping at delta = c1 * eps, counting
    selection of the agreement coordinates, the anchored chain over the
    selected patterns, exact lifting of the chain tables to certificates, and
    the splitting iteration that turns them into geometric representations.
    Fails loudly with the phase name; every certificate is verified before
    the report is returned.
    """
    cal = Calibration.from_mapping(calibration)
    n = S.dimension
    if n > 14:
        raise InputError("the combinatorial phase is limited to dimension 14")
    if not 0 < epsilon <= 1:
        raise InputError("epsilon must lie in (0, 1]")
    d = float(np.abs(S.points).max())
    m = int(math.floor(cal.c2 * d * d * epsilon ** -3
                       * (1.0 - math.log(epsilon)))) + 1
    delta = cal.c1 * epsilon
    quota = math.ceil(n * (1.0 - epsilon))

    singleton_index = {}
    for i, row in enumerate(S.points):
        if np.all(np.abs(row) == 1.0):
            singleton_index.setdefault(mask_of_vector(row), (i, 1.0))
            singleton_index.setdefault(mask_of_vector(-row), (i, -1.0))

    ss = np.random.SeedSequence(seed)
    half = 1 << (n - 1)
    children = ss.spawn(half + 1)
    full_mask = (1 << n) - 1

    entries = {}
    candidates = {}
    pooled_sq = []
    pooled_var = []
    allowance = n * d * d / m
    for mask in range(half):
        a = vector_of_mask(n, mask)
        slots, elements, shrink_error = _decompose_vertex(S, a, m, singleton_index)
        if shrink_error ** 2 > allowance + 1e-9:
            raise PhaseError("decompose", "rounding error exceeds the allowance",
                             vertex=a.tolist(), error=shrink_error,
                             allowance=allowance)
        fit = subsample_vertex_fit(elements, a, delta, m, subsample_trials,
                                   children[mask])
        idx = np.array([s[0] for s in slots], dtype=int)
        scal = np.array([s[1] for s in slots])
        chosen = np.array(fit.chosen, dtype=int)
        mult = np.bincount(idx[chosen], minlength=S.count)
        alphas = np.bincount(idx[chosen], weights=scal[chosen], minlength=S.count)
        cert = DeltaMCertificate(m=m, multiplicities=mult, alphas=alphas)
        y = _snap(fit.x, a, fit.agreement_set)
        entries[mask] = SnapEntry(x=fit.x, y=y, agreement_set=fit.agreement_set,
                                  certificate=cert)
        mirror = DeltaMCertificate(m=m, multiplicities=mult, alphas=-alphas)
        entries[full_mask ^ mask] = SnapEntry(
            x=-fit.x, y=-y, agreement_set=fit.agreement_set, certificate=mirror)
        candidates[mask] = fit.agreement_set
        candidates[full_mask ^ mask] = fit.agreement_set
        pooled_sq.append(fit.mean_square_vs_vertex)
        pooled_var.append(fit.deviation_variance)

    snap_table = SnapTable(delta=delta, entries=entries)
    snap_table.verify()
    mean_square = float(np.mean(pooled_sq))
    total_trials = subsample_trials * half
    standard_error = float(math.sqrt(max(np.mean(pooled_var), 0.0) / total_trials))
    variance_bound = 4.0 * n * d * d / m
    variance_check = {
        "mean_square": mean_square,
        "bound": variance_bound,
        "standard_error": standard_error,
        "trials": total_trials,
        "pass": mean_square <= variance_bound + 3.0 * standard_error,
    }

    k_agree = min(len(c) for c in candidates.values())
    if k_agree < quota:
        raise PhaseError("select", "agreement floor below the coordinate quota",
                         agreement=k_agree, quota=quota, delta=delta)
    tau, T = counting_select(candidates, k_agree)
    witnesses = {}
    for mask, agreement in sorted(candidates.items()):
        trimmed = tuple(sorted(agreement))[:k_agree]
        if trimmed != tau:
            continue
        pattern = 0
        for pos, c in enumerate(tau):
            if (mask >> c) & 1:
                pattern |= 1 << pos
        witnesses.setdefault(pattern, mask)
    density_ok = T.count >= 2 ** (k_agree * (1.0 - density_c * epsilon))

    chain = alesker_chain(T, epsilon, density_c=density_c,
                          enforce_density=False, node_budget=node_budget)
    sigma_rel = chain.sigma[-1]
    sigma = tuple(tau[i] for i in sigma_rel)
    if len(sigma) < quota:
        raise PhaseError("chain", "selected coordinate set is below the quota",
                         sigma=sigma, quota=quota, chain_levels=chain.levels)
    a_s, b_s = chain_constants(chain.levels)
    if a_s * delta > 0.25 + 1e-12:
        raise PhaseError("certify", "snap budget exceeds the splitting margin",
                         scale=a_s, delta=delta)

    weight = 1 << chain.levels
    M = b_s * m
    sigma_idx = np.array(sigma, dtype=int)
    vertex_entries = {}
    vertex_certificates = {}
    vertex_residual_max = 0.0
    for pattern, combo in sorted(chain.rep_table.items()):
        mult = np.zeros(S.count, dtype=int)
        alphas = np.zeros(S.count)
        rvec = np.zeros(n)
        for member, coef in combo.items():
            scaled = coef * weight
            if scaled.denominator != 1:
                raise NumericalError("non-dyadic chain coefficient")
            w = witnesses[member]
            entry = entries[w]
            mult += abs(scaled.numerator) * entry.certificate.multiplicities
            alphas += scaled.numerator * entry.certificate.alphas
            rvec += float(coef) * (entry.y - entry.x)
        if int(mult.sum()) > M:
            raise PhaseError("certify", "lifted certificate exceeds its budget",
                             pattern=pattern)
        cert = DeltaMCertificate(m=M, multiplicities=mult, alphas=alphas)
        snap_norm = float(np.abs(rvec).max())
        if snap_norm > a_s * delta + 1e-9:
            raise PhaseError("certify", "snap residual exceeds its budget",
                             pattern=pattern, residual=snap_norm)
        vertex_residual_max = max(vertex_residual_max, snap_norm)
        target = np.array(pattern, dtype=float)
        achieved = a_s * cert.evaluate(S)[sigma_idx] + rvec[sigma_idx]
        if np.abs(achieved - target).max() > 1e-9:
            raise PhaseError("certify", "vertex certificate mismatch",
                             pattern=pattern)
        mask = 0
        for pos, value in enumerate(pattern):
            if value < 0:
                mask |= 1 << pos
        vertex_entries[mask] = _VertexEntry(
            certificate=cert, snap_residual=rvec,
            snap_residual_sigma=rvec[sigma_idx])
        key = "".join("-" if v < 0 else "+" for v in pattern)
        vertex_certificates[key] = _sparse_cert(
            cert, {"scale": a_s, "snap_residual": snap_norm})

    theta_asm = 0.75
    flat_m = 2 * M
    phi = theta_asm ** (1.0 / flat_m)
    flat_scale = (1.0 - theta_asm) * phi ** (1 - flat_m) / (flat_m * (1.0 - phi))
    C_over_eps = a_s * flat_scale / (1.0 - theta_asm)
    theta_formula = 1.0 - cal.c * d ** -2 * epsilon ** 5 \
        / (1.0 - math.log(epsilon))

    report = QuotientReport(
        sigma=sigma, epsilon=float(epsilon), theta=float(phi),
        C_over_eps=float(C_over_eps),
        constants_used={"n": n, "d": d, "m": m, "N": M, "chain_N": b_s,
                        "chain_scale": a_s, "delta": delta,
                        "k_agreement": k_agree},
        certificates=[], verified_fraction=0.0, tau=tau,
        theta_formula=float(theta_formula), chain_levels=chain.levels,
        density_ok=bool(density_ok), variance_check=variance_check,
        vertex_residual_max=vertex_residual_max, seed=int(seed),
        query_tolerance=float(query_tolerance), calibration=cal.as_dict(),
        vertex_certificates=vertex_certificates, assembly_theta=theta_asm,
        flat_m=flat_m, _entries=vertex_entries)

    rng = np.random.default_rng(children[half])
    points = rng.uniform(-1.0, 1.0, size=(queries, len(sigma)))
    verified = 0
    records = []
    for q in range(queries):
        x = points[q]
        rep = represent_cube_point(report, S, x)
        achieved = C_over_eps * rep.evaluate(S)[sigma_idx]
        residual = float(np.linalg.norm(x - achieved))
        ok = residual <= query_tolerance
        verified += ok
        records.append({"query": [float(v) for v in x],
                        "residual": residual, "verified": bool(ok),
                        "terms": len(rep.terms)})
    report.certificates = records
    report.verified_fraction = verified / queries if queries else 1.0
    if len(sigma) < quota:
        raise PhaseError("assemble", "quota lost after assembly", sigma=sigma)
    return report


def represent_cube_point(report: QuotientReport, S: GeneratingSet,
                         x) -> GammaRepresentation:
    """Geometric representation of a sup-ball point over the quotient coords.

    Each level splits the running point between the two nearest stored
    vertices -- a1 takes +1 where the coordinate is at least 1/2, a2 where it
    is at least -1/2 -- so the midpoint is within 1/2 in sup norm.  The two
    vertex certificates merge into one average term, the snap residuals are
    folded back into the running point, and the level budget contracts by
    3/4.  The flattened representation evaluates to x / C_over_eps on sigma.
    """
    x = np.asarray(x, dtype=float)
    k = len(report.sigma)
    if x.shape != (k,):
        raise InputError("query dimension must match sigma")
    if np.abs(x).max() > 1.0 + 1e-12:
        raise InputError("query point lies outside the sup-norm ball")
    if not report._entries:
        raise InputError("report carries no in-memory vertex tables")
    theta = report.assembly_theta
    M2 = report.flat_m
    tol = report.query_tolerance
    depth = max(1, math.ceil(math.log(0.25 * tol / math.sqrt(k))
                             / math.log(theta)))
    r = x.copy()
    terms = []
    for level in range(depth):
        if theta ** level * math.sqrt(float((r * r).sum())) <= 0.25 * tol:
            break
        a1 = np.where(r >= 0.5, 1.0, -1.0)
        a2 = np.where(r >= -0.5, 1.0, -1.0)
        m1 = sum(1 << i for i in range(k) if a1[i] < 0)
        m2 = sum(1 << i for i in range(k) if a2[i] < 0)
        try:
            e1, e2 = report._entries[m1], report._entries[m2]
        except KeyError:
            missing = m1 if m1 not in report._entries else m2
            raise PhaseError("assemble", "vertex certificate missing",
                             vertex=format(missing, "b")) from None
        merged = DeltaMCertificate(
            m=M2,
            multiplicities=e1.certificate.multiplicities
            + e2.certificate.multiplicities,
            alphas=e1.certificate.alphas + e2.certificate.alphas)
        terms.append((level, 1.0, merged))
        r = (r - 0.5 * (a1 + a2)
             + 0.5 * (e1.snap_residual_sigma + e2.snap_residual_sigma)) / theta
        if np.abs(r).max() > 1.0 + 1e-9:
            raise PhaseError("assemble", "splitting residual left the ball",
                             level=level, residual=float(np.abs(r).max()))
    outer = GammaOverDeltaM(theta=theta, m=M2, terms=terms,
                            truncation_depth=terms[-1][0] if terms else 0)
    rep, flat_scale = approx2_transform(S, theta, outer)
    total = report.constants_used["chain_scale"] * flat_scale / (1.0 - theta)
    if abs(total - report.C_over_eps) > 1e-9 * report.C_over_eps:
        raise NumericalError("assembled scale drifted from the report")
    sigma_idx = np.array(report.sigma, dtype=int)
    achieved = report.C_over_eps * rep.evaluate(S)[sigma_idx]
    rep.residual_norm = float(np.linalg.norm(x - achieved) / report.C_over_eps)
    return rep


# ---------------------------------------------------------------------------
# quasi-normed wrappers
# ---------------------------------------------------------------------------

def pnormed_quotient(body: PBody, epsilon, calibration=None, seed=0, **kwargs):
    """Cube quotient of a p-body plus the two-sided distance estimate.

    The convex pipeline runs on the generators; the contraction bound at the
    realized ratio turns the geometric certificates into a sandwich for the
    projected p-ball, giving distance <= C_over_eps * contraction * d.  The
    closed-form target C p^(-1/p) eps^(4-5/p) (1-ln eps)^(1/p-1) d^(2/p-1)
    is evaluated with the calibrated C and reported alongside, never merged.
    """
    cal = Calibration.from_mapping(calibration)
    report = cube_quotient(body.generators, epsilon, calibration=cal,
                           seed=seed, **kwargs)
    p = body.p
    contraction = pconv_contraction_bound(p, report.theta)
    d = report.constants_used["d"]
    realized = report.C_over_eps * contraction * d
    formula = (cal.C * p ** (-1.0 / p) * epsilon ** (4.0 - 5.0 / p)
               * (1.0 - math.log(epsilon)) ** (1.0 / p - 1.0)
               * d ** (2.0 / p - 1.0))
    distance = {"p": p, "d": d, "theta": report.theta,
                "contraction": contraction, "realized": realized,
                "formula_target": formula}
    return report, distance


def l1_to_cube_operator(m, k):
    """Sign matrix whose columns run through one vertex per antipodal pair.

    The image of the coordinate cross-polytope (the l1 ball) under the matrix
    is then exactly the 2k-dimensional sup-norm ball: every cube vertex or its
    negation appears as a column.  Columns repeat cyclically beyond the
    2^(2k-1) distinct representatives.
    """
    if k < 1:
        raise InputError("k must be positive")
    reps = 1 << (2 * k - 1)
    if reps > m:
        raise InputError(f"need 2^(2k-1) = {reps} <= m = {m}")
    columns = np.empty((2 * k, m))
    for i in range(m):
        r = i % reps
        columns[0, i] = 1.0
        for j in range(1, 2 * k):
            columns[j, i] = -1.0 if (r >> (j - 1)) & 1 else 1.0
    return columns


def cubic_quotient_from_nonconvexity(body: PBody, l1_subspace,
                                     calibration=None, seed=0, **kwargs):
    """Cube quotient of a p-body through a coordinate subspace close to l1.

    The caller supplies the subspace (coordinate indices only -- hunting for
    well-isomorphic l1 subspaces is out of scope); the sign operator pushes
    the generators onto a 2k-cube and the pipeline runs at eps = 1/2.  The
    summary reports the achieved dimension against c ln A / ln ln A with
    A = (p^(1/p) delta / 4)^(p/(1-p)), flagged not-applicable for small A.
    """
    cal = Calibration.from_mapping(calibration)
    try:
        coords = [int(c) for c in l1_subspace]
    except (TypeError, ValueError):
        raise InputError("l1 subspace must be a sequence of coordinate indices")
    if len(set(coords)) != len(coords) or not coords:
        raise InputError("subspace coordinates must be distinct and nonempty")
    if min(coords) < 0 or max(coords) >= body.generators.dimension:
        raise InputError("subspace coordinate out of range")
    m_dim = len(coords)
    k = 0
    while 1 << (2 * (k + 1) - 1) <= m_dim:
        k += 1
    if k < 1:
        raise InputError("subspace too small: need 2^(2k-1) <= dim for k >= 1")
    T = l1_to_cube_operator(m_dim, k)
    pushed = GeneratingSet(dimension=2 * k,
                           points=body.generators.points[:, coords] @ T.T,
                           label=f"{body.generators.label}/cube{2 * k}")
    report = cube_quotient(pushed, 0.5, calibration=cal, seed=seed, **kwargs)
    p = body.p
    contraction = pconv_contraction_bound(p, report.theta)
    realized = report.C_over_eps * contraction * report.constants_used["d"]
    delta = delta_nonconvexity(body)
    A = (p ** (1.0 / p) * delta / 4.0) ** (p / (1.0 - p)) if p < 1 else None
    target = None
    if A is not None and A > math.e ** math.e:
        target = cal.c * math.log(A) / math.log(math.log(A))
    summary = {"operator_k": k, "m": m_dim, "sigma_size": len(report.sigma),
               "p": p, "delta": delta, "A": A, "target_dim": target,
               "realized_distance": realized,
               "distance_formula_target": None if p == 1
               else (cal.c * p) ** (-1.0 / p)}
    return report, summary
