import dataclasses
import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from geomhull.bodies import GeneratingSet, PBody, envelope_gauge
from geomhull.cube import (Calibration, VertexSet, alesker_chain,
                           chain_constants, chain_cube_certificate,
                           counting_select, cube_quotient,
                           cubic_quotient_from_nonconvexity, find_shattered,
                           l1_to_cube_operator, load_vertex_set,
                           mask_of_vector, pnormed_quotient,
                           represent_cube_point, save_vertex_set,
                           subsample_vertex_fit, vector_of_mask,
                           vertex_generating_set, vertex_set_from_generating_set)
from geomhull.errors import BudgetError, InputError, PhaseError


def _cube_points(n):
    return np.array(list(itertools.product([-1.0, 1.0], repeat=n)))


def _hamming_ball(n, t):
    """Vertices with at most t minus coordinates."""
    members = frozenset(m for m in range(2 ** n) if bin(m).count("1") <= t)
    return VertexSet(n, members)


class TestVertexSet:
    def test_mask_roundtrip(self):
        for n in (1, 3, 5):
            for mask in range(2 ** n):
                v = vector_of_mask(n, mask)
                assert mask_of_vector(v) == mask

    def test_from_points_requires_exact_signs(self):
        with pytest.raises(InputError):
            VertexSet.from_points(np.array([[1.0, 0.5]]))

    def test_full_and_count(self):
        V = VertexSet.full(3)
        assert V.count == 8

    def test_file_roundtrip(self, tmp_path):
        V = VertexSet(4, frozenset([0, 3, 9, 15]))
        path = tmp_path / "v.txt"
        save_vertex_set(V, path)
        assert load_vertex_set(path) == V

    def test_generating_set_roundtrip(self):
        V = VertexSet(3, frozenset([0, 5, 6]))
        S = vertex_generating_set(V)
        assert vertex_set_from_generating_set(S) == V

    def test_pattern_string(self):
        V = VertexSet.full(2)
        assert V.pattern(0) == "++"
        assert V.pattern(3) == "--"


class TestFindShattered:
    def test_three_points_shatter_one_not_two(self):
        V = VertexSet.from_points(np.array([[1.0, 1.0], [1.0, -1.0],
                                            [-1.0, 1.0]]))
        assert find_shattered(V, 1) == (0,)
        assert find_shattered(V, 2) is None

    def test_full_cube_shatters_everything(self):
        V = VertexSet.full(3)
        assert find_shattered(V, 3) == (0, 1, 2)

    def test_lexicographically_first_witness(self):
        # shatters {1,2} but not any pair containing 0
        pts = np.array([[1.0, s1, s2] for s1 in (-1.0, 1.0)
                        for s2 in (-1.0, 1.0)])
        V = VertexSet.from_points(pts)
        assert find_shattered(V, 2) == (1, 2)

    def test_sauer_shelah_guarantee(self):
        # |V| > C(n,0) + C(n,1) forces a shattered pair
        rng = np.random.default_rng(0)
        n = 6
        for _ in range(10):
            masks = rng.choice(2 ** n, size=n + 2, replace=False)
            V = VertexSet(n, frozenset(int(m) for m in masks))
            assert find_shattered(V, 2) is not None

    def test_budget_error(self):
        V = VertexSet.full(8)
        with pytest.raises(BudgetError):
            find_shattered(V, 8, node_budget=3)

    def test_target_validation(self):
        assert find_shattered(VertexSet.full(2), 0) == ()
        with pytest.raises(InputError):
            find_shattered(VertexSet.full(2), 3)


class TestChainConstants:
    def test_closed_forms(self):
        assert chain_constants(0) == (1, 1)
        assert chain_constants(1) == (3, 6)
        assert chain_constants(2) == (7, 28)
        assert chain_constants(3) == (15, 120)

    def test_recursions(self):
        for j in range(1, 8):
            a_prev, b_prev = chain_constants(j - 1)
            a, b = chain_constants(j)
            assert a == 2 * a_prev + 1
            assert b == 4 * b_prev + 2 ** j


class TestAleskerChain:
    def test_full_cube_is_level_zero(self):
        V = VertexSet.full(4)
        chain = alesker_chain(V, 0.5, density_c=1.0)
        assert len(chain.sigma) == 1
        assert chain.sigma[0] == (0, 1, 2, 3)
        assert chain.scale == 1
        assert chain.slot_count == 1
        chain.verify(V)

    def test_hamming_ball_grows_three_levels(self):
        V = _hamming_ball(10, 3)
        chain = alesker_chain(V, 0.125, density_c=1.0, enforce_density=False)
        assert len(chain.sigma) - 1 == 3
        assert chain.sigma[-1] == tuple(range(10))
        assert (chain.scale, chain.slot_count) == (15, 120)
        chain.verify(V)   # exact rational identity at all 1024 patterns

    def test_rep_table_is_dyadic_rational(self):
        V = _hamming_ball(5, 2)
        chain = alesker_chain(V, 0.25, density_c=1.0, enforce_density=False)
        s = len(chain.sigma) - 1
        for combo in chain.rep_table.values():
            for coef in combo.values():
                assert isinstance(coef, Fraction)
                assert (2 ** s) % coef.denominator == 0

    def test_parity_set_cannot_grow(self):
        members = frozenset(m for m in range(16) if bin(m).count("1") % 2 == 0)
        V = VertexSet(4, members)
        with pytest.raises(PhaseError) as err:
            alesker_chain(V, 0.5, density_c=1.0)
        assert err.value.phase == "chain"

    def test_density_gate(self):
        members = frozenset(m for m in range(16) if bin(m).count("1") % 2 == 0)
        with pytest.raises(InputError):
            alesker_chain(VertexSet(4, members), 0.5)  # 8 < 2^3.6

    def test_epsilon_domain(self):
        with pytest.raises(InputError):
            alesker_chain(VertexSet.full(2), 0.0)


class TestChainCertificates:
    def test_level_one_constants(self):
        V = _hamming_ball(4, 1)
        chain = alesker_chain(V, 0.5, density_c=1.0, enforce_density=False)
        assert len(chain.sigma) - 1 == 1
        S = vertex_generating_set(V)
        certs = chain_cube_certificate(chain, S)
        assert certs.scale == 3 and certs.m == 6
        assert len(certs.certificates) == 2 ** len(chain.sigma[-1])
        # every certificate hits its vertex exactly on sigma
        sig = list(chain.sigma[-1])
        for pattern, cert in certs.certificates.items():
            got = certs.scale * cert.evaluate(S)
            want = np.array(pattern, dtype=float)
            assert np.abs(got[sig] - want).max() < 1e-12

    def test_non_vertex_generators_rejected(self):
        chain = alesker_chain(VertexSet.full(2), 0.5, density_c=1.0)
        with pytest.raises(InputError):
            chain_cube_certificate(chain, GeneratingSet(2, 0.5 * np.eye(2)))


class TestCountingSelect:
    def test_bound_on_full_cover(self):
        n, k = 6, 4
        rng = np.random.default_rng(1)
        candidates = {m: frozenset(int(c) for c in
                                   rng.choice(n, size=k, replace=False))
                      for m in range(2 ** n)}
        tau, T = counting_select(candidates, k)
        bound = 2 ** n / (2 ** (n - k) * math.comb(n, k))
        assert len(tau) == k
        assert T.count >= bound - 1e-9
        assert T.n == k

    def test_oversized_agreements_trimmed(self):
        candidates = {0: frozenset({0, 1, 2}), 7: frozenset({0, 1, 2})}
        tau, T = counting_select(candidates, 2)
        assert len(tau) == 2
        assert T.n == 2

    def test_small_agreement_rejected(self):
        with pytest.raises(InputError):
            counting_select({0: frozenset({0})}, 2)


class TestSubsample:
    def test_exact_elements_have_zero_deviation(self):
        vertex = np.array([1.0, -1.0, 1.0])
        elements = np.tile(vertex, (10, 1))
        fit = subsample_vertex_fit(elements, vertex, delta=0.01, m=4,
                                   trials=8, seed=0)
        assert fit.agreement_count == 3
        assert fit.mean_square_vs_average == pytest.approx(0.0, abs=1e-18)
        assert fit.variance_bound == pytest.approx(3 * 1.0 / 4)

    def test_variance_bound_formula(self):
        rng = np.random.default_rng(2)
        elements = rng.uniform(-2, 2, size=(30, 4))
        d = float(np.abs(elements).max())
        fit = subsample_vertex_fit(elements, np.ones(4), delta=0.5, m=10,
                                   trials=16, seed=3)
        assert fit.variance_bound == pytest.approx(4 * d * d / 10)
        assert fit.m == 10 and fit.trials == 16


class TestOperator:
    @pytest.mark.parametrize("k", [1, 2])
    def test_image_is_exactly_the_cube(self, k):
        m = 2 ** (2 * k - 1)
        T = l1_to_cube_operator(m, k)
        assert T.shape == (2 * k, m)
        cols = GeneratingSet(2 * k, T.T, label="columns")
        for vertex in _cube_points(2 * k):
            cert = envelope_gauge(cols, vertex)
            assert cert.value == pytest.approx(1.0, abs=1e-9)

    def test_antipodal_pairs_present(self):
        k = 2
        T = l1_to_cube_operator(2 ** (2 * k - 1), k)
        colset = {tuple(c) for c in T.T}
        for c in T.T:
            assert tuple(-c) in colset or tuple(c) in colset

    def test_insufficient_columns_rejected(self):
        with pytest.raises(InputError):
            l1_to_cube_operator(4, 2)   # needs 2^3 = 8


class TestCubeQuotient:
    def test_cube_vertices_trivial_instance(self):
        S = GeneratingSet(4, _cube_points(4), label="cube")
        report = cube_quotient(S, 0.5, seed=0, queries=8)
        assert report.sigma == (0, 1, 2, 3)
        assert report.verified_fraction == 1.0
        assert report.chain_levels == 0
        assert report.C_over_eps == pytest.approx(4.6110, abs=1e-3)
        assert report.variance_check["pass"]
        assert report.vertex_residual_max == 0.0

    def test_generic_lp_decomposition_path(self):
        rng = np.random.default_rng(20)
        Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        S = GeneratingSet(3, 2.0 * _cube_points(3) @ Q.T, label="rotated")
        report = cube_quotient(S, 0.75, seed=3, queries=8)
        assert len(report.sigma) >= 1
        assert report.verified_fraction == 1.0
        assert 0.0 < report.vertex_residual_max <= \
            report.constants_used["chain_scale"] * report.constants_used["delta"]

    def test_select_gate_fails_honestly(self):
        S = GeneratingSet(3, 3.0 * np.eye(3), label="scaled-basis")
        with pytest.raises(PhaseError) as err:
            cube_quotient(S, 0.5, seed=0, queries=4)
        assert err.value.phase == "select"

    def test_sandwich_gate(self):
        S = GeneratingSet(2, np.eye(2))
        with pytest.raises(PhaseError) as err:
            cube_quotient(S, 0.5, seed=0)
        assert err.value.phase == "sandwich"

    def test_dimension_cap(self):
        with pytest.raises(InputError):
            cube_quotient(GeneratingSet(15, np.eye(15) * 15), 0.5)

    def test_reports_are_byte_identical(self):
        S = GeneratingSet(4, _cube_points(4))
        r1 = cube_quotient(S, 0.5, seed=7, queries=6)
        r2 = cube_quotient(S, 0.5, seed=7, queries=6)
        assert r1.to_json() == r2.to_json()

    def test_calibration_recorded_in_report(self):
        S = GeneratingSet(4, _cube_points(4))
        cal = Calibration.from_mapping({"c2": 2.0})
        report = cube_quotient(S, 0.5, calibration=cal, seed=0, queries=4)
        assert report.calibration["c2"] == 2.0
        assert json_has_seed(report)


def json_has_seed(report):
    import json
    return json.loads(report.to_json())["seed"] == report.seed


@pytest.fixture(scope="module")
def report_and_set():
    S = GeneratingSet(4, _cube_points(4), label="cube")
    return cube_quotient(S, 0.5, seed=0, queries=4), S


class TestRepresentCubePoint:
    def test_interior_point(self, report_and_set):
        report, S = report_and_set
        x = np.array([0.6, -0.7, 0.0, 0.25])
        rep = represent_cube_point(report, S, x)
        sig = list(report.sigma)
        got = report.C_over_eps * rep.evaluate(S)[sig]
        assert np.abs(got - x).max() < 1e-6
        assert rep.residual_norm < 1e-6

    def test_vertex_point(self, report_and_set):
        report, S = report_and_set
        x = np.array([1.0, 1.0, -1.0, 1.0])
        rep = represent_cube_point(report, S, x)
        got = report.C_over_eps * rep.evaluate(S)[list(report.sigma)]
        assert np.abs(got - x).max() < 1e-9

    def test_outside_ball_rejected(self, report_and_set):
        report, S = report_and_set
        with pytest.raises(InputError):
            represent_cube_point(report, S, np.array([1.5, 0.0, 0.0, 0.0]))

    def test_requires_in_memory_tables(self, report_and_set):
        report, S = report_and_set
        stripped = dataclasses.replace(report, _entries={})
        with pytest.raises(InputError):
            represent_cube_point(stripped, S, np.zeros(4))


class TestPNormedQuotient:
    def test_p1_reduces_to_cube_scale(self):
        body = PBody(GeneratingSet(4, _cube_points(4)), 1.0)
        report, distance = pnormed_quotient(body, 0.5, seed=0, queries=4)
        assert distance["p"] == 1.0
        assert distance["contraction"] == 1.0
        assert distance["realized"] == pytest.approx(
            report.C_over_eps * distance["d"])

    def test_contraction_formula_for_small_p(self):
        body = PBody(GeneratingSet(3, _cube_points(3)), 0.5)
        report, distance = pnormed_quotient(body, 0.5, seed=1, queries=4)
        theta = report.theta
        want = 0.5 ** -2.0 * (1 - theta) ** (1 - 2.0)
        assert distance["contraction"] == pytest.approx(want, rel=1e-9)


class TestCubicFromDelta:
    def test_coordinate_subspace_instance(self):
        from geomhull.bodies import lp_ball_body
        body = lp_ball_body(4, 0.5)
        report, summary = cubic_quotient_from_nonconvexity(
            body, [0, 1, 2, 3], seed=2, queries=4)
        assert summary["operator_k"] == 1
        assert summary["m"] == 4
        assert summary["delta"] == pytest.approx(4.0)
        assert summary["A"] == pytest.approx(0.25)
        # desk-scale A never clears e^e, so the dimension bound stays empty
        assert summary["target_dim"] is None
        assert summary["realized_distance"] > 0

    def test_matrix_subspace_rejected(self):
        from geomhull.bodies import lp_ball_body
        body = lp_ball_body(4, 0.5)
        with pytest.raises(InputError):
            cubic_quotient_from_nonconvexity(body, np.eye(4)[:2], seed=0)

    def test_duplicate_coords_rejected(self):
        from geomhull.bodies import lp_ball_body
        body = lp_ball_body(4, 0.5)
        with pytest.raises(InputError):
            cubic_quotient_from_nonconvexity(body, [0, 0, 1, 2], seed=0)


class TestCalibration:
    def test_defaults(self):
        cal = Calibration()
        assert cal.as_dict() == {"c": 0.1, "C": 8.0, "c0": 0.9,
                                 "c1": 0.03125, "c2": 1.0}

    def test_unknown_key_rejected(self):
        with pytest.raises(InputError):
            Calibration.from_mapping({"c3": 1.0})

    def test_passthrough_and_none(self):
        cal = Calibration.from_mapping(None)
        assert cal == Calibration()
        assert Calibration.from_mapping(cal) is cal
