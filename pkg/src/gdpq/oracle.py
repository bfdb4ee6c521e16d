"""Solver-free correctness oracles.

Everything here is evaluated directly from expression values, independently
of the transform algebra in :mod:`gdpq.reform`: the perspective closure, sampled
set-membership comparisons, binary-fixing equivalence and a tiny brute-force
incumbent finder for desk-scale instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .model import (
    FEAS_TOL,
    Constraint,
    Disjunct,
    Disjunction,
    GdpError,
    GdpModel,
    MinlpModel,
    QuadraticExpr,
    Variable,
    as_body,
)
from .reform import ReformConfig, reformulate

BOUNDARY_BAND = 1e-9
PINNED_Y = (1e-6, 1e-4, 1e-2)
PINNED_FRACTION = 0.05
ZERO_Y_FRACTION = 0.01


class ClosureDomainError(GdpError, ValueError):
    """``y = 0`` with ``v != 0``: outside the domain of the closed perspective."""


class InconsistentAssignment(GdpError, ValueError):
    code = "INCONSISTENT_ASSIGNMENT"


class EnumerationLimitError(GdpError):
    pass


@dataclass(frozen=True)
class PerspectivePoint:
    v: np.ndarray
    y: float

    def __post_init__(self):
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, dtype=float)))
        if not 0.0 <= self.y <= 1.0:
            raise ValueError(f"y={self.y} outside [0, 1]")


@dataclass
class MembershipReport:
    samples_total: int = 0
    agree: int = 0
    disagree: list = field(default_factory=list)  # (point, lhs values)
    max_abs_gap: float = 0.0
    excluded: int = 0  # inside the boundary band, counted as agreeing

    @property
    def clean(self) -> bool:
        return not self.disagree

    def merge(self, other: MembershipReport) -> MembershipReport:
        return MembershipReport(self.samples_total + other.samples_total, self.agree + other.agree,
                                self.disagree + other.disagree, max(self.max_abs_gap, other.max_abs_gap),
                                self.excluded + other.excluded)

    def summary(self) -> dict:
        return {"samples_total": self.samples_total, "agree": self.agree, "disagree": len(self.disagree),
                "max_abs_gap": self.max_abs_gap, "excluded": self.excluded}


# ---------------------------------------------------------------------------
# perspective closure
# ---------------------------------------------------------------------------


def eval_perspective_closure(h, p: PerspectivePoint) -> float:
    """``y h(v / y)`` for ``y > 0`` and ``0`` at ``(v, y) = (0, 0)``."""
    if p.y == 0.0:
        if np.any(p.v != 0.0):
            raise ClosureDomainError("closure is undefined at y = 0 with v != 0")
        return 0.0
    return p.y * float(h.evaluate(p.v / p.y))


def closure_values(h, v: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Vectorized closure over sample rows; ``y == 0`` rows must carry ``v == 0``."""
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(len(y))
    pos = y > 0
    if np.any(~pos & np.any(v != 0.0, axis=1)):
        raise ClosureDomainError("closure is undefined at y = 0 with v != 0")
    out[pos] = y[pos] * h.evaluate(v[pos] / y[pos, None])
    return out


def sample_perspective(rng: np.random.Generator, lower, upper, n: int):
    """Stratified ``(v, y)`` samples.

    y is uniform on (0, 1] except for a small ``y = 0`` stratum and 5% pinned to
    tiny values; v is uniform in ``[lower y, upper y]``.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    y = 1.0 - rng.random(n)  # (0, 1]
    n_zero = max(1, int(round(ZERO_Y_FRACTION * n)))
    n_pin = int(round(PINNED_FRACTION * n))
    y[:n_zero] = 0.0
    y[n_zero:n_zero + n_pin] = rng.choice(PINNED_Y, size=n_pin)
    u = rng.random((n, lower.size))
    v = (lower + u * (upper - lower)) * y[:, None]
    return v, y


# ---------------------------------------------------------------------------
# set comparisons
# ---------------------------------------------------------------------------


def single_constraint_model(h, lower, upper) -> GdpModel:
    """One-disjunct GDP holding only ``h <= 0``; used to obtain transform rows for ``h``."""
    h = as_body(h)
    variables = tuple(Variable(f"x{i}", float(lo), float(hi)) for i, (lo, hi) in enumerate(zip(lower, upper)))
    disj = Disjunction("D", (Disjunct("Y", (Constraint(h, "h"),)),))
    return GdpModel(variables, QuadraticExpr(len(variables)), (), (disj,))


def transform_row(h, lower, upper, method: str, eps: float = 1e-4):
    """The single row a transform emits for ``h`` plus a packer ``(v, y) -> joint vector``."""
    gdp = single_constraint_model(h, lower, upper)
    minlp, _ = reformulate(gdp, ReformConfig(method, eps=eps))
    (row,) = [r for r in minlp.all_rows() if r.source and r.source[0] == "disjunct"]
    y_idx = minlp.indicator_index()["Y"]
    v_idx = {}
    for i, role in minlp.provenance.items():
        if role[0] == "disaggregated":
            v_idx[gdp.var_index(role[1])] = i

    def pack(v, y):
        v = np.atleast_2d(v)
        out = np.zeros((v.shape[0], minlp.n))
        out[:, y_idx] = y
        for j, i in v_idx.items():
            out[:, i] = v[:, j]
        return out

    return row, pack


def _sign_compare(report: MembershipReport, a, b, points, band):
    """Record agreement of ``a <= 0`` and ``b <= 0`` sample by sample."""
    in_band = (np.abs(a) <= band) | (np.abs(b) <= band)
    same = (a <= 0) == (b <= 0)
    report.samples_total += len(a)
    report.excluded += int(np.sum(in_band & ~same))
    bad = ~same & ~in_band
    report.agree += len(a) - int(np.sum(bad))
    for k in np.flatnonzero(bad):
        report.disagree.append((points(k), (float(a[k]), float(b[k]))))
        report.max_abs_gap = max(report.max_abs_gap, min(abs(a[k]), abs(b[k])))
    return report


def check_s1_s2(h, lower, upper, n_samples: int = 10_000, seed: int = 0, method: str | None = None,
                band: float = BOUNDARY_BAND) -> MembershipReport:
    """Compare the closure row (S1) with the homogenized hull row (S2) on sampled ``(v, y)``.

    ``method`` defaults to ``hull-exact`` for quadratics and ``hull-poly`` otherwise;
    the S2 values come from the row that transform actually emits.
    """
    h = as_body(h)
    method = method or ("hull-exact" if h.degree <= 2 else "hull-poly")
    row, pack = transform_row(h, lower, upper, method)
    rng = np.random.default_rng(seed)
    v, y = sample_perspective(rng, lower, upper, n_samples)
    s1 = closure_values(h, v, y)
    s2 = row.residual(pack(v, y))
    return _sign_compare(MembershipReport(), s1, s2, lambda k: (v[k].tolist(), float(y[k])), band)


def _rows_residual(rows, x) -> np.ndarray:
    x = np.atleast_2d(x)
    worst = np.full(x.shape[0], -np.inf)
    for r in rows:
        worst = np.maximum(worst, r.residual(x) if hasattr(r, "residual") else r.evaluate(x))
    return worst


def check_containment(inner, outer, sampler, n: int = 10_000, seed: int = 0, inner_tol: float = 0.0,
                      outer_tol: float = FEAS_TOL) -> MembershipReport:
    """Every sampled point with ``max(inner) <= inner_tol`` must satisfy ``max(outer) <= outer_tol``.

    ``inner``/``outer`` are row sets (anything with ``residual`` or ``evaluate``)
    and ``sampler(rng, n)`` returns an ``(n, dim)`` array.
    """
    rng = np.random.default_rng(seed)
    pts = np.atleast_2d(sampler(rng, n))
    a = _rows_residual(inner, pts)
    b = _rows_residual(outer, pts)
    report = MembershipReport(samples_total=len(pts))
    inside = a <= inner_tol
    bad = inside & (b > outer_tol)
    report.agree = len(pts) - int(np.sum(bad))
    report.excluded = int(np.sum(~inside))
    for k in np.flatnonzero(bad):
        report.disagree.append((pts[k].tolist(), (float(a[k]), float(b[k]))))
        report.max_abs_gap = max(report.max_abs_gap, float(b[k]))
    return report


def check_eps_containment(h, lower, upper, n_samples: int = 10_000, seed: int = 0, eps: float = 1e-4,
                          inner_tol: float = 0.0, outer_tol: float = FEAS_TOL) -> MembershipReport:
    """Sampled ``(v, y)`` inside the exact hull row must satisfy the eps-hull row."""
    inner, pack_i = transform_row(h, lower, upper, "hull-exact")
    outer, pack_o = transform_row(h, lower, upper, "hull-eps", eps)
    rng = np.random.default_rng(seed)
    v, y = sample_perspective(rng, lower, upper, n_samples)
    a = inner.residual(pack_i(v, y))
    b = outer.residual(pack_o(v, y))
    report = MembershipReport(samples_total=len(y))
    inside = a <= inner_tol
    bad = inside & (b > outer_tol)
    report.agree = len(y) - int(np.sum(bad))
    report.excluded = int(np.sum(~inside))
    for k in np.flatnonzero(bad):
        report.disagree.append(((v[k].tolist(), float(y[k])), (float(a[k]), float(b[k]))))
        report.max_abs_gap = max(report.max_abs_gap, float(b[k]))
    return report


# ---------------------------------------------------------------------------
# binary fixing
# ---------------------------------------------------------------------------


def assignment_consistent(gdp: GdpModel, active) -> bool:
    active = set(active)
    if not active <= set(gdp.indicators):
        return False
    for d in gdp.disjunctions:
        if sum(dj.indicator in active for dj in d.disjuncts) != 1:
            return False
    return all(c.satisfied(active) for c in gdp.logic)


def consistent_assignments(gdp: GdpModel, limit: int | None = None):
    """Yield every consistent set of true indicators (one per disjunction, booleans free, logic holds)."""
    choices = [[dj.indicator for dj in d.disjuncts] for d in gdp.disjunctions]
    count = 0
    for pick in itertools.product(*choices):
        for bits in itertools.product((False, True), repeat=len(gdp.booleans)):
            active = set(pick) | {b for b, on in zip(gdp.booleans, bits) if on}
            if all(c.satisfied(active) for c in gdp.logic):
                yield frozenset(active)
                count += 1
                if limit is not None and count >= limit:
                    return


def lift_point(gdp: GdpModel, minlp: MinlpModel, x, active) -> np.ndarray:
    """Canonical MINLP point for GDP point(s) ``x`` at a binary assignment.

    Indicators take 0/1, active copies carry ``x``, inactive copies 0, and
    product variables ``v * y``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.zeros((x.shape[0], minlp.n))
    active = set(active)
    for i, role in minlp.provenance.items():
        kind = role[0]
        if kind in ("original", "aux-norm"):
            out[:, i] = x[:, gdp.var_index(minlp.variables[i].name)]
        elif kind == "indicator":
            out[:, i] = 1.0 if role[1] in active else 0.0
        elif kind in ("disaggregated", "glover"):
            if role[2] in active:
                out[:, i] = x[:, gdp.var_index(role[1])]
    return out


def gdp_residual(gdp: GdpModel, x, active) -> np.ndarray:
    """Max violation of globals and active-disjunct constraints at GDP point(s) ``x``."""
    x = np.atleast_2d(x)
    worst = np.full(x.shape[0], -np.inf)
    active = set(active)
    for con in gdp.global_constraints:
        worst = np.maximum(worst, con.body.evaluate(x))
    for d in gdp.disjunctions:
        for dj in d.disjuncts:
            if dj.indicator in active:
                for con in dj.constraints:
                    worst = np.maximum(worst, con.body.evaluate(x))
    return worst


def box_samples(gdp: GdpModel, rng, n: int) -> np.ndarray:
    """Uniform box samples, half of them (when available) perturbed around known feasible points."""
    lo, hi = gdp.lower, gdp.upper
    pts = lo + rng.random((n, gdp.n)) * (hi - lo)
    seeds = np.asarray(gdp.metadata.get("feasible_points", []), dtype=float)
    if seeds.size:
        m = n // 2
        base = seeds[rng.integers(len(seeds), size=m)]
        scale = 10.0 ** rng.uniform(-4, 0, size=(m, 1)) * (hi - lo)
        pts[:m] = np.clip(base + scale * rng.standard_normal((m, gdp.n)), lo, hi)
    return pts


def fixed_binary_check(gdp: GdpModel, minlp: MinlpModel, assignment, n_samples: int = 1000, seed: int = 0,
                       tol: float = FEAS_TOL, band: float = BOUNDARY_BAND) -> MembershipReport:
    """GDP feasibility under the active disjuncts vs MINLP feasibility with y fixed."""
    active = frozenset(assignment)
    if not assignment_consistent(gdp, active):
        raise InconsistentAssignment(f"{InconsistentAssignment.code}: {sorted(active)}")
    rng = np.random.default_rng(seed)
    x = box_samples(gdp, rng, n_samples)
    g = gdp_residual(gdp, x, active)
    m = minlp.max_violation(lift_point(gdp, minlp, x, active))
    return _sign_compare(MembershipReport(), g - tol, m - tol, lambda k: x[k].tolist(), band)


# ---------------------------------------------------------------------------
# brute force
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BruteForceBudget:
    restarts: int = 3
    iters: int = 300
    step: float = 0.1  # jitter scale (fraction of the box) for restarts around the incumbent
    seed: int = 0
    max_assignments: int = 2 ** 20


@dataclass
class BruteForceResult:
    status: str  # heuristic-feasible | exhausted-infeasible
    objective: float | None = None
    point: np.ndarray | None = None
    assignment: tuple | None = None
    restarts_used: int = 0
    assignments_tried: int = 0

    @property
    def infeasible(self) -> bool:
        return self.status == "exhausted-infeasible"


def _binary_assignments(minlp: MinlpModel, limit: int):
    """Enumerate 0/1 vectors over the binaries satisfying every binary-only linear row."""
    bins = minlp.binary_indices()
    pos = {b: k for k, b in enumerate(bins)}
    only_bin = [r for r in minlp.linear if r.coefs and all(i in pos for i in r.variables())]
    groups, grouped = [], set()
    for r in only_bin:
        idx = r.variables()
        if (r.sense == "==" and r.rhs == 1.0 and all(v == 1.0 for _, v in r.coefs)
                and not grouped & set(idx)):
            groups.append([pos[i] for i in idx])
            grouped |= set(idx)
    free = [pos[b] for b in bins if b not in grouped]
    total = math.prod(len(g) for g in groups) * 2 ** len(free)
    if total > limit:
        raise EnumerationLimitError(f"{total} candidate assignments exceed the enumeration bound {limit}")
    for pick in itertools.product(*groups):
        for bits in itertools.product((0.0, 1.0), repeat=len(free)):
            y = np.zeros(len(bins))
            y[list(pick)] = 1.0
            y[free] = bits
            full = np.zeros(minlp.n)
            full[bins] = y
            if all(r.residual(full) <= FEAS_TOL for r in only_bin):
                yield full


def _presolve_bounds(minlp: MinlpModel, fixed: dict, lo, hi):
    """Tighten bounds from linear rows with one free variable; returns False if a row is violated."""
    lo, hi = lo.copy(), hi.copy()
    for _ in range(3):
        changed = False
        for r in minlp.linear:
            const, free = 0.0, []
            for i, a in r.coefs:
                if i in fixed:
                    const += a * fixed[i]
                elif lo[i] == hi[i]:
                    const += a * lo[i]
                else:
                    free.append((i, a))
            rhs = r.rhs - const
            if not free:
                viol = {"<=": -rhs, ">=": rhs, "==": abs(rhs)}[r.sense]
                if viol > FEAS_TOL:
                    return None
                continue
            if len(free) != 1:
                continue
            i, a = free[0]
            val = rhs / a
            up = r.sense == "==" or (r.sense == "<=") == (a > 0)
            dn = r.sense == "==" or (r.sense == ">=") == (a > 0)
            if up and val < hi[i]:
                hi[i], changed = val, True
            if dn and val > lo[i]:
                lo[i], changed = val, True
            if lo[i] > hi[i] + FEAS_TOL:
                return None
            if lo[i] > hi[i]:
                lo[i] = hi[i] = 0.5 * (lo[i] + hi[i])
        if not changed:
            break
    return lo, hi


def _solve_fixed(minlp: MinlpModel, full0: np.ndarray, bins, budget: BruteForceBudget, rng):
    fixed = {i: full0[i] for i in bins}
    bounds = _presolve_bounds(minlp, fixed, minlp.lower, minlp.upper)
    if bounds is None:
        return None, 0
    lo, hi = bounds
    for i, val in fixed.items():
        lo[i] = hi[i] = val
    free = np.flatnonzero(lo < hi)
    base = np.where(lo < hi, 0.0, lo)

    def full(z):
        x = base.copy()
        x[free] = z
        return x

    free_set = set(free.tolist())
    rows_lin = [r for r in minlp.linear if free_set & set(r.variables())]
    col = {int(i): k for k, i in enumerate(free)}
    A = np.zeros((len(rows_lin), len(free)))
    off = np.zeros(len(rows_lin))
    for k, r in enumerate(rows_lin):
        for i, a in r.coefs:
            if i in col:
                A[k, col[i]] = a
            else:
                off[k] += a * base[i]
        off[k] -= r.rhs
    sense = np.array([r.sense for r in rows_lin])
    rows_nl = list(minlp.rows)
    obj = minlp.objective

    # SLSQP convention: inequality funcs are >= 0
    cons = []
    eq = sense == "=="
    sign = np.where(sense == ">=", 1.0, -1.0)
    if np.any(~eq):
        Ai, oi = A[~eq] * sign[~eq, None], off[~eq] * sign[~eq]
        cons.append({"type": "ineq", "fun": lambda z: Ai @ z + oi, "jac": lambda z: Ai})
    if np.any(eq):
        Ae, oe = A[eq], off[eq]
        cons.append({"type": "eq", "fun": lambda z: Ae @ z + oe, "jac": lambda z: Ae})
    if rows_nl:
        cons.append({"type": "ineq", "fun": lambda z: -np.array([float(r.residual(full(z))) for r in rows_nl]),
                     "jac": lambda z: -np.array([r.body.gradient(full(z))[free] for r in rows_nl])})
    bnds = list(zip(lo[free], hi[free]))
    best, best_val, used = None, np.inf, 0
    if free.size == 0:
        x = full(np.zeros(0))
        return (x, float(obj.evaluate(x))) if minlp.max_violation(x) <= FEAS_TOL else None, 0
    for r in range(max(1, budget.restarts)):
        if r == 0:
            z0 = 0.5 * (lo[free] + hi[free])
        elif best is not None and r % 2 == 0:
            z0 = np.clip(best[free] + budget.step * (hi[free] - lo[free]) * rng.standard_normal(free.size),
                         lo[free], hi[free])
        else:
            z0 = lo[free] + rng.random(free.size) * (hi[free] - lo[free])
        used += 1
        res = minimize(lambda z: float(obj.evaluate(full(z))), z0, jac=lambda z: obj.gradient(full(z))[free],
                       method="SLSQP", bounds=bnds, constraints=cons,
                       options={"maxiter": budget.iters, "ftol": 1e-12})
        x = full(np.clip(res.x, lo[free], hi[free]))
        if minlp.max_violation(x) <= FEAS_TOL:
            val = float(obj.evaluate(x))
            if val < best_val:
                best, best_val = x, val
    return (None if best is None else (best, best_val)), used


def brute_force_solve(minlp: MinlpModel, budget: BruteForceBudget | None = None) -> BruteForceResult:
    """Enumerate consistent binary assignments and run a local NLP solve for each.

    This is an incumbent finder: for non-convex rows the result is an upper
    bound, not a certified optimum.  Every reported point is re-checked against
    all rows at ``FEAS_TOL``.
    """
    budget = budget or BruteForceBudget()
    rng = np.random.default_rng(budget.seed)
    bins = minlp.binary_indices()
    result = BruteForceResult("exhausted-infeasible")
    for full0 in _binary_assignments(minlp, budget.max_assignments):
        result.assignments_tried += 1
        found, used = _solve_fixed(minlp, full0, bins, budget, rng)
        result.restarts_used += used
        if found is None:
            continue
        x, val = found
        if result.objective is None or val < result.objective:
            result.status = "heuristic-feasible"
            result.objective, result.point = val, x
            result.assignment = tuple(minlp.variables[i].name for i in bins if x[i] > 0.5)
    if result.point is not None:
        assert minlp.max_violation(result.point) <= FEAS_TOL
    return result
