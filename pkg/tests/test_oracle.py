import numpy as np
import pytest

from conftest import kmeans_exhaustive, small_random, x2_minus_1
from gdpq.gen import KmeansParams, gen_kmeans, random_quadratic
from gdpq.model import (
    Constraint,
    Disjunct,
    Disjunction,
    GdpModel,
    LogicClause,
    PolynomialExpr,
    QuadraticExpr,
    Variable,
)
from gdpq.oracle import (
    BruteForceBudget,
    ClosureDomainError,
    InconsistentAssignment,
    PerspectivePoint,
    brute_force_solve,
    check_containment,
    check_eps_containment,
    check_s1_s2,
    closure_values,
    consistent_assignments,
    eval_perspective_closure,
    fixed_binary_check,
    sample_perspective,
    transform_row,
)
from gdpq.reform import METHODS, ReformConfig, reformulate


def cubic():
    x = PolynomialExpr.variable(0, 1)
    return x ** 3 - x


class TestClosure:
    def test_boundary(self):
        assert eval_perspective_closure(x2_minus_1(), PerspectivePoint([0.5], 0.5)) == 0.0

    def test_origin(self):
        assert eval_perspective_closure(cubic(), PerspectivePoint([0.0], 0.0)) == 0.0

    def test_cubic(self):
        # 0.4 * ((0.5)^3 - 0.5)
        assert eval_perspective_closure(cubic(), PerspectivePoint([0.2], 0.4)) == pytest.approx(-0.15, abs=1e-15)

    def test_domain(self):
        with pytest.raises(ClosureDomainError):
            eval_perspective_closure(cubic(), PerspectivePoint([0.1], 0.0))
        with pytest.raises(ValueError):
            PerspectivePoint([0.1], 1.5)

    def test_vectorized_matches_scalar(self, rng):
        v, y = sample_perspective(rng, [-2.0], [2.0], 200)
        vals = closure_values(cubic(), v, y)
        for k in range(0, 200, 17):
            assert vals[k] == pytest.approx(eval_perspective_closure(cubic(), PerspectivePoint(v[k], y[k])))

    def test_sampler_strata(self, rng):
        v, y = sample_perspective(rng, [-1.0, 0.5], [1.0, 2.0], 10_000)
        assert np.sum(y == 0) == 100 and np.sum(np.isin(y, [1e-6, 1e-4, 1e-2])) >= 500
        assert np.all(v[:, 1] >= 0.5 * y - 1e-15) and np.all(v[:, 1] <= 2.0 * y + 1e-15)


class TestS1S2:
    def test_x2_minus_1(self):
        rep = check_s1_s2(x2_minus_1(), [-1.0], [1.0], 10_000, 0)
        assert rep.clean and rep.samples_total == 10_000

    def test_indefinite(self, rng):
        h = random_quadratic(rng, 3, psd=False)
        assert np.linalg.eigvalsh(h.Q).min() < 0
        assert check_s1_s2(h, -2 * np.ones(3), 2 * np.ones(3), 10_000, 1).clean

    def test_cubic_poly(self):
        assert check_s1_s2(cubic(), [-1.5], [1.5], 1000, 2).clean

    def test_bigm_row_is_not_the_closure(self):
        # the oracle must be able to fail: Big-M rows differ from the closure at fractional y
        rep = check_s1_s2(QuadraticExpr(1, {(0, 0): 1.0}, {}, -0.25), [-1.0], [1.0], 2000, 0, method="bigm")
        assert not rep.clean

    def test_origin_agrees(self):
        row, pack = transform_row(x2_minus_1(), [-1.0], [1.0], "hull-exact")
        assert row.residual(pack(np.zeros((1, 1)), 0.0))[0] == 0.0


class TestContainment:
    def test_eps_contains_exact(self):
        rep = check_eps_containment(x2_minus_1(), [-1.0], [1.0], 10_000, 0)
        assert rep.clean and rep.excluded < rep.samples_total

    def test_reflexive(self):
        row, pack = transform_row(x2_minus_1(), [-1.0], [1.0], "hull-exact")

        def sampler(rng, n):
            return pack(*sample_perspective(rng, [-1.0], [1.0], n))

        assert check_containment([row], [row], sampler, 5000, 0).clean

    def test_detects_violation(self):
        # exact hull is not contained in itself shifted inward
        row, pack = transform_row(x2_minus_1(), [-1.0], [1.0], "hull-exact")
        tight, _ = transform_row(QuadraticExpr(1, {(0, 0): 1.0}, {}, -0.5), [-1.0], [1.0], "hull-exact")

        def sampler(rng, n):
            return pack(*sample_perspective(rng, [-1.0], [1.0], n))

        assert not check_containment([row], [tight], sampler, 5000, 0).clean


class TestBinaryFix:
    @pytest.mark.parametrize("method", METHODS)
    def test_toy(self, toy, method):
        minlp, _ = reformulate(toy, method)
        for active in consistent_assignments(toy):
            rep = fixed_binary_check(toy, minlp, active, 1000, 0)
            assert rep.clean and rep.samples_total == 1000

    def test_inconsistent(self, toy):
        minlp, _ = reformulate(toy, "bigm")
        with pytest.raises(InconsistentAssignment, match="INCONSISTENT_ASSIGNMENT"):
            fixed_binary_check(toy, minlp, {"L", "R"})
        logic = GdpModel(toy.variables, toy.objective, (), toy.disjunctions, (LogicClause({"R"}, set()),))
        with pytest.raises(InconsistentAssignment):
            fixed_binary_check(logic, reformulate(logic, "bigm")[0], {"L"})

    def test_detects_wrong_transform(self, toy):
        # pairing the GDP with the MINLP of a different model must show disagreements
        shifted = GdpModel(toy.variables, toy.objective, (), (Disjunction("D", (
            Disjunct("L", (Constraint(QuadraticExpr(2, {(0, 0): 1, (1, 1): 1}, {}, -4.0)),)),
            toy.disjunctions[0].disjuncts[1])),))
        minlp, _ = reformulate(shifted, "hull-exact")
        assert not fixed_binary_check(toy, minlp, {"L"}, 2000, 0).clean

    def test_s3_at_binaries(self):
        gdp = small_random(1)
        minlp, report = reformulate(gdp, ReformConfig("hull-exact", emit_s3=True))
        assert report.counts["glover_vars"] > 0
        for k, active in enumerate(consistent_assignments(gdp, 9)):
            assert fixed_binary_check(gdp, minlp, active, 300, k).clean


class TestBruteForce:
    def test_kmeans_tiny(self):
        gdp = gen_kmeans(KmeansParams(K=2, n_points=4, n_dims=2, seed=3))
        minlp, _ = reformulate(gdp, "hull-exact")
        res = brute_force_solve(minlp)
        assert res.status == "heuristic-feasible"
        assert res.objective == pytest.approx(kmeans_exhaustive(gdp.metadata["points"], 2), abs=1e-6)

    def test_infeasible(self):
        x = PolynomialExpr.variable(0, 1)
        disj = Disjunction("D", (Disjunct("A", (Constraint(x - 1),)), Disjunct("B", (Constraint(-x + 2),))))
        gdp = GdpModel((Variable("x", -5, 5),), QuadraticExpr(1), (), (disj,),
                       (LogicClause(set(), {"A"}), LogicClause(set(), {"B"})))
        minlp, _ = reformulate(gdp, "bigm")
        res = brute_force_solve(minlp)
        assert res.infeasible and res.objective is None

    def test_analytic_minimum(self):
        x = PolynomialExpr.variable(0, 1)
        disj = Disjunction("D", (Disjunct("A", (Constraint(x - 3),)),))
        gdp = GdpModel((Variable("x", -2, 3),), QuadraticExpr(1, {(0, 0): 1.0}), (), (disj,))
        for method in METHODS:
            res = brute_force_solve(reformulate(gdp, method)[0])
            assert res.objective == pytest.approx(0.0, abs=1e-8)

    def test_toy_optimum(self, toy):
        # minimize x0 over two unit discs centred at 0 and 3: optimum -1 in the left disc
        res = brute_force_solve(reformulate(toy, "hull-exact")[0], BruteForceBudget(seed=1))
        assert res.objective == pytest.approx(-1.0, abs=1e-6)
        assert res.assignment == ("y[L]",)
