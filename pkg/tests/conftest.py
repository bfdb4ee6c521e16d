import warnings

import numpy as np
import pytest

from gdpq.gen import RandomGdpParams, gen_random
from gdpq.model import Constraint, Disjunct, Disjunction, GdpModel, PolynomialExpr, QuadraticExpr, Variable


def x2_minus_1() -> QuadraticExpr:
    """``x^2 - 1`` in one variable."""
    return QuadraticExpr(1, {(0, 0): 1.0}, {}, -1.0)


def small_random(seed: int, convex: bool = True) -> GdpModel:
    """Three disjunctions of three disjuncts with two constraints each, in three dimensions."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return gen_random(RandomGdpParams(3, 3, 3, 2, convex=convex, seed=seed))


def two_disjunct_toy() -> GdpModel:
    """``[x0^2 + x1^2 <= 1] xor [(x0 - 3)^2 + x1^2 <= 1]`` on the box [-5, 5]^2."""
    x0, x1 = PolynomialExpr.variable(0, 2), PolynomialExpr.variable(1, 2)
    left = x0 ** 2 + x1 ** 2 - 1
    right = (x0 - 3) ** 2 + x1 ** 2 - 1
    disj = Disjunction("D", (Disjunct("L", (Constraint(left, "left"),)), Disjunct("R", (Constraint(right, "right"),))))
    obj = QuadraticExpr(2, {}, {0: 1.0})
    return GdpModel((Variable("x0", -5, 5), Variable("x1", -5, 5)), obj, (), (disj,),
                    metadata={"feasible_points": [[0.0, 0.0], [3.0, 0.0]]})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy():
    return two_disjunct_toy()


def kmeans_exhaustive(points, K: int) -> float:
    """Minimum within-cluster sum of squares over every labelling, with centroids at cluster means.

    Relabelling so that centroids are sorted by their first coordinate satisfies the
    ordering rows without changing the objective, so the plain minimum is the optimum.
    """
    import itertools

    P = np.asarray(points, dtype=float)
    best = np.inf
    for labels in itertools.product(range(K), repeat=len(P)):
        labels = np.array(labels)
        total = 0.0
        for k in range(K):
            members = P[labels == k]
            if len(members):
                total += float(np.sum((members - members.mean(axis=0)) ** 2))
        best = min(best, total)
    return best


ACCEPTANCE_LINES: list = []


def report_criterion(number: int, ok: bool, detail: str, status: str | None = None) -> bool:
    """Record and print one acceptance line; returns ``ok`` so callers can assert on it."""
    line = f"criterion {number:>2}: {status or ('PASS' if ok else 'FAIL')}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
