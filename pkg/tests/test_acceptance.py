"""Acceptance criteria 1-10.

Each test records one PASS/FAIL line (shown in the "acceptance criteria"
section of the pytest summary) with the measured quantity and its pinned
tolerance, then asserts.
"""

import math
import os
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from conftest import kmeans_exhaustive, report_criterion, x2_minus_1
from gdpq import io
from gdpq.bench import disjunct_anchors, tightness_proxy
from gdpq.gen import (
    CLAY_DEMO,
    ClayInstance,
    CstrParams,
    KmeansParams,
    RandomGdpParams,
    cstr_balanced_point,
    gen_clay,
    gen_cstr,
    gen_kmeans,
    gen_random,
    random_polynomial,
    random_quadratic,
)
from gdpq.oracle import (
    BruteForceBudget,
    MembershipReport,
    brute_force_solve,
    check_eps_containment,
    check_s1_s2,
    consistent_assignments,
    fixed_binary_check,
    gdp_residual,
    lift_point,
    transform_row,
)
from gdpq.reform import METHODS, ReformConfig, reformulate
from gdpq.solver import ENV_COMMAND, SolverRun, run_external_solver

BAND = 1e-9  # boundary band for S1/S2 comparisons
FEAS = 1e-8  # feasibility tolerance
EPS = 1e-4
GOLDEN = Path(__file__).parent / "golden"


def random_instance(seed, convex=True, shape=(3, 3, 3, 2)):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return gen_random(RandomGdpParams(*shape, convex=convex, seed=seed))


def convex_suite():
    return [random_instance(1000 + k) for k in range(25)]


def disjunct_bodies(gdp):
    for d in gdp.disjunctions:
        for dj in d.disjuncts:
            for c in dj.constraints:
                yield c.body


# ---------------------------------------------------------------------------


def test_criterion_01_prop1_suite():
    rng = np.random.default_rng(1)
    lo, hi = -2 * np.ones(3), 2 * np.ones(3)
    psd, indefinite = [], []
    while len(psd) < 50:
        psd.append(random_quadratic(rng, 3, psd=True))
    while len(indefinite) < 50:
        h = random_quadratic(rng, 3, psd=False)
        if np.linalg.eigvalsh(h.Q).min() < 0:
            indefinite.append(h)
    t = time.perf_counter()
    total = MembershipReport()
    for k, h in enumerate(psd + indefinite):
        total = total.merge(check_s1_s2(h, lo, hi, 10_000, k, band=BAND))
    seconds = time.perf_counter() - t
    ok = total.clean and total.samples_total == 100 * 10_000 and seconds < 60
    assert report_criterion(1, ok, f"100 quadratics (50 PSD, 50 indefinite) x 1e4 samples: "
                                   f"{len(total.disagree)} disagreements outside band {BAND:g}, "
                                   f"{total.excluded} in band; {seconds:.1f} s (target < 60 s)")


def test_criterion_02_prop2_suite():
    rng = np.random.default_rng(2)
    lo, hi = -2 * np.ones(3), 2 * np.ones(3)
    total = MembershipReport()
    degrees = []
    for deg in (3, 4):
        for k in range(20):
            h = random_polynomial(rng, 3, deg)
            degrees.append(h.degree)
            total = total.merge(check_s1_s2(h, lo, hi, 10_000, 100 * deg + k, band=BAND))
    identical = 0
    for k in range(20):
        h = random_quadratic(rng, 3, psd=k % 2 == 0)
        a, _ = transform_row(h, lo, hi, "hull-poly")
        b, _ = transform_row(h, lo, hi, "hull-exact")
        identical += a.body == b.body
    ok = total.clean and degrees == [3] * 20 + [4] * 20 and identical == 20
    assert report_criterion(2, ok, f"20 cubics + 20 quartics x 1e4 samples: {len(total.disagree)} disagreements; "
                                   f"degree-2 rows coefficient-identical to hull-exact: {identical}/20")


def test_criterion_03_binary_fixing():
    instances = [random_instance(k, convex=k < 10, shape=(3, 3, 3, 2)) for k in range(20)]
    t = time.perf_counter()
    total = MembershipReport()
    checks = 0
    for gdp in instances:
        assignments = list(consistent_assignments(gdp))
        assert len(assignments) == 27
        for method in METHODS:
            minlp, _ = reformulate(gdp, ReformConfig(method, eps=EPS))
            for a, active in enumerate(assignments):
                total = total.merge(fixed_binary_check(gdp, minlp, active, 1000, a, tol=FEAS))
                checks += 1
    seconds = time.perf_counter() - t
    ok = total.clean and checks == 20 * 27 * 5 and seconds < 120
    assert report_criterion(3, ok, f"{checks} (instance, assignment, transform) checks x 1e3 samples: "
                                   f"{len(total.disagree)} disagreements at tol {FEAS:g}; "
                                   f"{seconds:.1f} s (target < 120 s)")


def test_criterion_04_eps_enlargement():
    total = MembershipReport()
    for k, gdp in enumerate(convex_suite()):
        for j, h in enumerate(disjunct_bodies(gdp)):
            total = total.merge(check_eps_containment(h, gdp.lower, gdp.upper, 10_000, 31 * k + j, EPS,
                                                      inner_tol=0.0, outer_tol=FEAS))
    eps_row, pe = transform_row(x2_minus_1(), [-1.0], [1.0], "hull-eps", EPS)
    exact_row, px = transform_row(x2_minus_1(), [-1.0], [1.0], "hull-exact")
    v, y = np.array([[0.01002]]), 0.01
    eps_val = float(eps_row.residual(pe(v, y))[0])
    exact_val = float(exact_row.residual(px(v, y))[0])
    ok = total.clean and eps_val <= 0 and exact_val >= 1e-7
    assert report_criterion(4, ok, f"S2 within S_eps (eps={EPS:g}) on 25 convex instances: "
                                   f"{len(total.disagree)} violators over {total.samples_total} samples; "
                                   f"witness (0.01002, 0.01): eps row {eps_val:.3e} <= 0, "
                                   f"exact row {exact_val:.3e} >= 1e-7")


@pytest.mark.slow
def test_criterion_05_tightness_ordering():
    worst = -math.inf
    rows = []
    for k, gdp in enumerate(convex_suite()):
        anchors = disjunct_anchors(gdp, k)
        p = {m: tightness_proxy(gdp, reformulate(gdp, ReformConfig(m, eps=EPS))[0], 10_000, k, anchors)
             for m in ("hull-exact", "hull-eps", "bigm")}
        for a, b in (("hull-exact", "hull-eps"), ("hull-eps", "bigm")):
            sigma = math.hypot(p[a][1], p[b][1])
            excess = p[a][0] - p[b][0] - 3 * sigma
            worst = max(worst, excess)
        rows.append(p)
    mean = {m: float(np.mean([r[m][0] for r in rows])) for m in rows[0]}
    ok = worst <= 0
    assert report_criterion(5, ok, "tightness proxy hull-exact <= hull-eps <= bigm within 3 sigma on 25 convex "
                                   f"instances (1e4 samples each): worst excess {worst:+.4f}; mean fractions "
                                   + ", ".join(f"{m} {v:.4f}" for m, v in mean.items()))


def test_criterion_06_kmeans_micro_optimum():
    gdp = gen_kmeans(KmeansParams(K=2, n_points=5, n_dims=2, seed=6))
    minlp, _ = reformulate(gdp, "hull-exact")
    res = brute_force_solve(minlp, BruteForceBudget(seed=6))
    oracle = kmeans_exhaustive(gdp.metadata["points"], 2)
    gap = abs(res.objective - oracle)
    ok = res.status == "heuristic-feasible" and gap <= 1e-6
    assert report_criterion(6, ok, f"k-means N=5, D=2, K=2: brute force {res.objective:.10f} vs exhaustive "
                                   f"{oracle:.10f}, |gap| {gap:.2e} (tol 1e-6)")


def cstr_formulas(NT):
    # 11 continuous variables per stage (F_A, F_B, FR_A, FR_B, Q, QFR, V, c, r_A, r_B, t) + R_A, R_B, P_A, P_B, QR, QP
    n_vars = 11 * NT + 6
    # equalities: last-stage balances 3, interior balances 3 (NT - 1), splitter 3, product ratio 2, purity 1,
    # equal volumes NT - 1, t = Q^2 NT; each split into two inequalities
    n_global = 2 * (3 + 3 * (NT - 1) + 3 + 2 + 1 + (NT - 1) + NT)
    # CNF: two exactly-one families (1 + C(NT, 2) each), per stage n: (n - 1) + 2 clauses, NT recycle implications
    n_clauses = 2 * (1 + NT * (NT - 1) // 2) + sum((n - 1) + 2 for n in range(1, NT + 1)) + NT
    # disjunct rows per stage: reactor 3 eq, bypass 6 eq, recycle 3 eq, no recycle 3 eq, all split
    n_disjunct_rows = 2 * (3 + 6 + 3 + 3) * NT
    binaries = 4 * NT + NT  # YP/notYP, YR/notYR indicators and free YF booleans
    rows_bigm = 2 * NT + n_clauses + n_global + n_disjunct_rows  # + 2 XOR rows per stage
    return n_vars, n_global, n_clauses, n_disjunct_rows, binaries, rows_bigm


def test_criterion_07_cstr_structure():
    mismatches, max_degree = [], 0
    for NT in (1, 2, 3):
        gdp = gen_cstr(CstrParams(NT=NT))
        n_vars, n_global, n_clauses, n_dj, binaries, rows_bigm = cstr_formulas(NT)
        got = (gdp.n, len(gdp.global_constraints), len(gdp.logic),
               sum(len(dj.constraints) for d in gdp.disjunctions for dj in d.disjuncts))
        if got != (n_vars, n_global, n_clauses, n_dj):
            mismatches.append((NT, "gdp", got))
        bigm, rb = reformulate(gdp, "bigm")
        if (rb.counts["binary_vars"], len(bigm.all_rows())) != (binaries, rows_bigm):
            mismatches.append((NT, "bigm", rb.counts))
        hull, rh = reformulate(gdp, "hull-exact")
        # hull adds, per stage, 32 copies with two bound rows each and 16 linking rows
        if (rh.counts["disaggregated_vars"], len(hull.all_rows())) != (32 * NT, rows_bigm + 80 * NT):
            mismatches.append((NT, "hull", rh.counts))
        for m in (gdp, bigm, hull, io.lower_eps_rows(reformulate(gdp, "hull-eps")[0])):
            if isinstance(m, type(gdp)):
                degs = [c.body.degree for c in m.global_constraints] + [c.body.degree for d in m.disjunctions
                                                                        for dj in d.disjuncts for c in dj.constraints]
            else:
                degs = [r.body.degree for r in m.rows]
            max_degree = max(max_degree, *degs)
    p = CstrParams(NT=1)
    pt = cstr_balanced_point(p)
    gdp = gen_cstr(p)
    x = np.array([pt["x"][v.name] for v in gdp.variables])
    residual = float(gdp_residual(gdp, x, pt["active"])[0])
    # equality pairs give residual = |violation|; report the two-sided maximum
    two_sided = max(abs(float(c.body.evaluate(x))) for c in gdp.global_constraints)
    ok = not mismatches and max_degree <= 2 and residual < 1e-8 and two_sided < 1e-8
    assert report_criterion(7, ok, f"CSTR NT=1,2,3 counts vs hand formulas: {len(mismatches)} mismatches"
                                   f"{' ' + str(mismatches) if mismatches else ''}; max row degree {max_degree}; balanced NT=1 point "
                                   f"max residual {two_sided:.2e} (tol 1e-8)")


def test_criterion_08_s3_equivalence():
    total = MembershipReport()
    compared = 0
    for k in range(10):
        gdp = random_instance(800 + k, shape=(3, 1, 4, 2))
        s2, _ = reformulate(gdp, "hull-exact")
        s3, report = reformulate(gdp, ReformConfig("hull-exact", emit_s3=True))
        assert report.counts["glover_vars"] > 0
        rng = np.random.default_rng(k)
        for active in consistent_assignments(gdp):
            x = gdp.lower + rng.random((1000, gdp.n)) * (gdp.upper - gdp.lower)
            a = s2.max_violation(lift_point(gdp, s2, x, active))
            b = s3.max_violation(lift_point(gdp, s3, x, active))
            clear = (np.abs(a - FEAS) > BAND) & (np.abs(b - FEAS) > BAND)
            bad = clear & ((a <= FEAS) != (b <= FEAS))
            total.samples_total += len(x)
            total.disagree += [x[i].tolist() for i in np.flatnonzero(bad)]
            total = total.merge(fixed_binary_check(gdp, s3, active, 1000, k))
            compared += 1
    ok = total.clean and compared == 40
    assert report_criterion(8, ok, f"S3 vs S2 at binaries, 10 convex instances x all {compared // 10} assignments "
                                   f"of one disjunction x 1e3 samples: {len(total.disagree)} disagreements")


CLAY_TARGETS = {"CLay0304": ("l1", 40262.39), "CLay0305": ("l2", 6594.21)}


def test_criterion_09_external_solver(tmp_path):
    command = os.environ.get(ENV_COMMAND)
    clay_dir = os.environ.get("GDPQ_CLAY_DIR")
    missing = [p for p in CLAY_TARGETS if not clay_dir or not (Path(clay_dir) / f"{p}.json").exists()]
    if not command or missing:
        why = f"{ENV_COMMAND} not set" if not command else f"benchmark data missing in GDPQ_CLAY_DIR: {missing}"
        report_criterion(9, True, f"({why}); bundled {CLAY_DEMO.name} is synthetic and not used", status="SKIP")
        pytest.skip(why)
    run = SolverRun(command, time_limit=float(os.environ.get("GDPQ_SOLVER_TIME_LIMIT", 3600)))
    results = []
    for name, (norm, target) in CLAY_TARGETS.items():
        gdp = gen_clay(ClayInstance.from_json(Path(clay_dir) / f"{name}.json", norm))
        for method in ("bigm", "hull-eps", "hull-exact", "hull-poly"):
            lp = tmp_path / f"{name}_{method}.lp"
            lp.write_text(io.export_lp(reformulate(gdp, ReformConfig(method, eps=EPS))[0]))
            res = run_external_solver(lp, run)
            results.append((name, method, res.status, res.objective, target))
    bad = [r for r in results if r[2] != "optimal" or abs(r[3] - r[4]) > 1e-2]
    assert report_criterion(9, not bad, f"CLay objectives within 1e-2 of 40262.39 / 6594.21: "
                                        f"{len(results) - len(bad)}/{len(results)} runs match {bad or ''}")


def test_criterion_10_determinism_round_trip_golden():
    from test_io import golden_cases

    builders = {
        "random": lambda: random_instance(3),
        "random-nonconvex": lambda: random_instance(3, convex=False),
        "kmeans": lambda: gen_kmeans(KmeansParams(K=3, n_points=8, seed=3)),
        "cstr": lambda: gen_cstr(CstrParams(NT=3)),
        "clay-l1": lambda: gen_clay(ClayInstance.from_json(CLAY_DEMO, "l1")),
        "clay-l2": lambda: gen_clay(ClayInstance.from_json(CLAY_DEMO, "l2")),
    }
    failures = []
    for name, build in builders.items():
        a, b = build(), build()
        da, db = io.write_model(a), io.write_model(b)
        if da != db:
            failures.append(f"{name}: generator not deterministic")
        if io.write_model(io.loads(da)) != da or io.loads(da) != a:
            failures.append(f"{name}: gdp round trip")
        for method in METHODS:
            try:
                ma = reformulate(a, ReformConfig(method, eps=EPS))[0]
                mb = reformulate(b, ReformConfig(method, eps=EPS))[0]
            except Exception as exc:  # noqa: BLE001
                failures.append(f"{name}/{method}: {exc}")
                continue
            ja, jb = io.write_model(ma), io.write_model(mb)
            if ja != jb:
                failures.append(f"{name}/{method}: transform not deterministic")
            if io.write_model(io.loads(ja)) != ja:
                failures.append(f"{name}/{method}: minlp round trip")
    golden = 0
    for gname, (gdp, config) in golden_cases().items():
        if (GOLDEN / f"{gname}.lp").read_text() != io.export_lp(reformulate(gdp, config)[0]):
            failures.append(f"golden {gname}")
        golden += 1
    ok = not failures
    assert report_criterion(10, ok, f"{len(builders)} generators x {len(METHODS)} transforms byte-deterministic "
                                    f"and round-trip lossless; {golden} LP golden files stable; "
                                    f"failures: {failures or 'none'}")
