import warnings

import numpy as np
import pytest

from conftest import small_random
from gdpq.gen import (
    CLAY_DEMO,
    ClayInstance,
    CstrParams,
    KmeansParams,
    RandomGdpParams,
    cstr_balanced_point,
    cstr_logic,
    gen_clay,
    gen_cstr,
    gen_kmeans,
    gen_random,
    random_polynomial,
    random_quadratic,
    shift_psd,
)
from gdpq.io import write_model
from gdpq.model import validate
from gdpq.oracle import assignment_consistent, consistent_assignments, gdp_residual


def all_quadratics(gdp):
    yield gdp.objective
    for c in gdp.global_constraints:
        yield c.body
    for d in gdp.disjunctions:
        for dj in d.disjuncts:
            for c in dj.constraints:
                yield c.body


class TestRandom:
    def test_convex_eigenvalues(self):
        gdp = small_random(3)
        for q in all_quadratics(gdp):
            assert np.linalg.eigvalsh(q.Q).min() >= -1e-12

    def test_injected_points_feasible(self):
        gdp = small_random(4)
        pts = gdp.metadata["feasible_points"]
        for x, chosen in zip(pts, gdp.metadata["designated_disjuncts"]):
            active = {gdp.disjunctions[k].disjuncts[i].indicator for k, i in enumerate(chosen)}
            assert gdp_residual(gdp, x, active)[0] <= 0

    def test_deterministic(self):
        assert write_model(small_random(5)) == write_model(small_random(5))
        assert write_model(small_random(5)) != write_model(small_random(6))

    def test_nonconvex_has_indefinite(self):
        gdp = small_random(0, convex=False)
        assert min(np.linalg.eigvalsh(q.Q).min() for q in all_quadratics(gdp)) < 0

    def test_shape_and_warning(self):
        with pytest.warns(UserWarning):
            gdp = gen_random(RandomGdpParams(2, 2, 3, 4, seed=0))
        assert gdp.n == 2 and len(gdp.disjunctions) == 2
        assert all(len(dj.constraints) == 4 for d in gdp.disjunctions for dj in d.disjuncts)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            gen_random(RandomGdpParams(3, 3, 10, 10, seed=0))

    def test_shift_psd(self, rng):
        Q = shift_psd(rng.normal(size=(4, 4)))
        assert np.allclose(Q, Q.T) and np.linalg.eigvalsh(Q).min() > 0


class TestKmeans:
    def test_structure(self):
        gdp = gen_kmeans(KmeansParams(K=3, n_points=10, n_dims=2, seed=1))
        assert len(gdp.disjunctions) == 10
        assert all(len(d.disjuncts) == 3 for d in gdp.disjunctions)
        assert len(gdp.global_constraints) == 2  # K - 1 ordering rows
        assert validate(gdp) == []

    def test_disjunct_is_squared_distance(self):
        gdp = gen_kmeans(KmeansParams(K=2, n_points=4, n_dims=2, seed=2))
        P = np.array(gdp.metadata["points"])
        for i, d in enumerate(gdp.disjunctions):
            for k, dj in enumerate(d.disjuncts):
                (con,) = dj.constraints
                q = con.body
                ck = [gdp.var_index(f"c[{k},{j}]") for j in range(2)]
                di = gdp.var_index(f"d[{i}]")
                assert np.allclose(q.Q[np.ix_(ck, ck)], np.eye(2))
                assert np.count_nonzero(q.Q) == 2
                assert q.lin_dict()[di] == -1.0
                assert q.d == pytest.approx(float(P[i] @ P[i]))

    def test_explicit_points(self):
        gdp = gen_kmeans(KmeansParams(K=2, points=((0, 0), (1, 0), (5, 5))))
        assert gdp.metadata["points"] == [[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]]

    def test_bad_k(self):
        with pytest.raises(ValueError):
            gen_kmeans(KmeansParams(K=5, n_points=3))


class TestCstr:
    @pytest.mark.parametrize("NT", [1, 2, 3])
    def test_degree_at_most_two(self, NT):
        assert max(q.degree for q in all_quadratics(gen_cstr(CstrParams(NT=NT)))) <= 2

    def test_nt1_forces_single_reactor(self):
        gdp = gen_cstr(CstrParams(NT=1))
        assert [d.name for d in gdp.disjunctions] == ["unit[1]", "recycle[1]"]
        feasible = list(consistent_assignments(gdp))
        assert feasible == [frozenset({"YF[1]", "YP[1]", "YR[1]"})]

    def test_logic_semantics(self):
        # YP[n] <=> (no feed at stages <= n) or YF[n]; YR[n] => YP[n]; exactly one YF and one YR
        NT = 3
        gdp = gen_cstr(CstrParams(NT=NT))
        for active in consistent_assignments(gdp):
            feed = [n for n in range(1, NT + 1) if f"YF[{n}]" in active]
            rec = [n for n in range(1, NT + 1) if f"YR[{n}]" in active]
            assert len(feed) == 1 and len(rec) == 1
            for n in range(1, NT + 1):
                assert (f"YP[{n}]" in active) == (n <= feed[0])  # flow runs from stage NT to 1
            assert f"YP[{rec[0]}]" in active
        assert len(list(consistent_assignments(gdp))) == 6  # feed stage f leaves f recycle choices: 1 + 2 + 3

    def test_clauses_are_cnf(self):
        assert all(c.positive or c.negative for c in cstr_logic(4))

    def test_balanced_point(self):
        p = CstrParams(NT=1)
        pt = cstr_balanced_point(p)
        gdp = gen_cstr(p)
        x = np.array([pt["x"][v.name] for v in gdp.variables])
        assert np.all(x >= gdp.lower) and np.all(x <= gdp.upper)
        assert assignment_consistent(gdp, pt["active"])
        assert gdp_residual(gdp, x, pt["active"])[0] < 1e-8


class TestClay:
    def test_four_rectangles(self):
        inst = ClayInstance(((2, 1), (1, 1), (1, 2), (2, 2)), ((0, 0, 10), (30, 0, 10)))
        gdp = gen_clay(inst)
        names = [d.name for d in gdp.disjunctions]
        assert sum(n.startswith("no_overlap") for n in names) == 6
        assert sum(n.startswith("inside") for n in names) == 4
        for d in gdp.disjunctions:
            if d.name.startswith("no_overlap"):
                assert len(d.disjuncts) == 4
            else:
                assert all(len(dj.constraints) == 4 and all(c.body.degree == 2 for c in dj.constraints)
                           for dj in d.disjuncts)

    def test_hand_placed_layout(self):
        # two unit squares side by side inside the first circle
        inst = ClayInstance(((1, 1), (1, 1)), ((0, 0, 3), (10, 0, 1)), {(0, 1): 1.0})
        gdp = gen_clay(inst)
        vals = {"x[0]": -1.0, "y[0]": 0.0, "x[1]": 1.0, "y[1]": 0.0, "dx[0,1]": 2.0, "dy[0,1]": 0.0}
        x = np.array([vals[v.name] for v in gdp.variables])
        active = {"Y[0,1,1]", "W[0,0]", "W[1,0]"}
        assert assignment_consistent(gdp, active)
        assert gdp_residual(gdp, x, active)[0] <= 0
        # the same layout cannot sit in the small circle
        assert gdp_residual(gdp, x, {"Y[0,1,1]", "W[0,1]", "W[1,0]"})[0] > 0
        assert gdp.objective.evaluate(x) == pytest.approx(2.0)

    def test_l2_lifting(self):
        gdp = gen_clay(ClayInstance.from_json(CLAY_DEMO, "l2"))
        assert set(gdp.metadata["aux_norm"]) == {"t[0,1]", "t[0,2]", "t[1,2]"}
        assert sum(c.name.startswith("norm") for c in gdp.global_constraints) == 3

    def test_demo_is_labelled_synthetic(self):
        inst = ClayInstance.from_json(CLAY_DEMO)
        assert "NOT" in inst.provenance and validate(gen_clay(inst)) == []

    def test_rejects_bad_data(self):
        with pytest.raises(ValueError):
            ClayInstance(((1, -1),), ((0, 0, 1),))
        with pytest.raises(ValueError):
            ClayInstance(((1, 1),), ((0, 0, 1),), norm="linf")


class TestSingleExpressions:
    def test_random_quadratic(self, rng):
        assert np.linalg.eigvalsh(random_quadratic(rng, 4, psd=True).Q).min() >= 0
        assert random_quadratic(rng, 4, psd=False).n == 4

    @pytest.mark.parametrize("degree", [3, 4])
    def test_random_polynomial(self, rng, degree):
        h = random_polynomial(rng, 3, degree)
        assert h.degree == degree and h.constant_term < 0
