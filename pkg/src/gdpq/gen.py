"""Seeded generators for the benchmark families: random QCGDP, k-means, CSTR network, constrained layout."""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import (
    Constraint,
    Disjunct,
    Disjunction,
    GdpModel,
    LogicClause,
    PolynomialExpr,
    QuadraticExpr,
    Variable,
    split_equality,
)

RANDOM_BOX = (-10.0, 10.0)
EIG_SHIFT = 1e-9
INJECTION_SLACK = 1e-3
CLAY_DEMO = Path(__file__).parent / "data" / "clay_demo.json"  # synthetic, not benchmark data


class _Builder:
    """Collects variables by name so generators can write algebra on named symbols."""

    def __init__(self):
        self.variables: list[Variable] = []
        self._index: dict[str, int] = {}

    def var(self, name, lower, upper, kind="continuous"):
        self._index[name] = len(self.variables)
        self.variables.append(Variable(name, float(lower), float(upper), kind))
        return name

    def __getitem__(self, name) -> PolynomialExpr:
        # dimension is fixed up in finish(); 1 + index keeps construction valid meanwhile
        i = self._index[name]
        return PolynomialExpr.variable(i, i + 1)

    @property
    def n(self):
        return len(self.variables)

    def fix(self, expr):
        return expr.with_dim(self.n)

    def le(self, expr, name=""):
        return Constraint(self.fix(PolynomialExpr.constant(0.0, 1) + expr), name)

    def eq(self, expr, name=""):
        return split_equality(self.fix(PolynomialExpr.constant(0.0, 1) + expr), name)


# ---------------------------------------------------------------------------
# random quadratically constrained GDP
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RandomGdpParams:
    n_dims: int = 3
    n_disjunctions: int = 3
    disjuncts_per: int = 10
    constraints_per: int = 10
    n_feasible_points: int = 10
    convex: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("n_dims", "n_disjunctions", "disjuncts_per", "constraints_per", "n_feasible_points"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def _benchmark_range_warnings(p: RandomGdpParams):
    hi_n = 7 if p.convex else 9
    checks = [
        (3 <= p.n_disjunctions <= 10, "|K| outside 3..10"),
        (10 <= p.disjuncts_per <= 15, "|D_k| outside 10..15"),
        (p.constraints_per == 10, "|J_ik| != 10"),
        (3 <= p.n_dims <= hi_n, f"n outside 3..{hi_n}"),
    ]
    for ok, msg in checks:
        if not ok:
            warnings.warn(f"random instance parameters: {msg} (benchmark ranges)", stacklevel=3)


def shift_psd(Q: np.ndarray, delta: float = EIG_SHIFT) -> np.ndarray:
    """Symmetrize and, if indefinite, add ``(|lambda_min| + delta) I``."""
    Q = (Q + Q.T) / 2.0
    lam = np.linalg.eigvalsh(Q)[0]
    if lam < 0:
        Q = Q + (abs(lam) + delta) * np.eye(Q.shape[0])
    return Q


def gen_random(params: RandomGdpParams) -> GdpModel:
    _benchmark_range_warnings(params)
    rng = np.random.default_rng(params.seed)
    n = params.n_dims
    lo, hi = RANDOM_BOX

    def draw_q():
        Q = rng.uniform(-1.0, 1.0, size=(n, n))
        return shift_psd(Q) if params.convex else (Q + Q.T) / 2.0

    # coefficient arrays: [k][i][j] -> (Q, c, d)
    data = []
    for _k in range(params.n_disjunctions):
        disj = []
        for _i in range(params.disjuncts_per):
            cons = []
            for _j in range(params.constraints_per):
                Q = draw_q()
                c = rng.uniform(-1.0, 1.0, size=n)
                d = rng.uniform(-1.0, 1.0)
                cons.append([Q, c, d])
            disj.append(cons)
        data.append(disj)

    points = rng.uniform(lo, hi, size=(params.n_feasible_points, n))
    designated = []
    for x in points:
        chosen = []
        for k in range(params.n_disjunctions):
            i = int(rng.integers(params.disjuncts_per))
            chosen.append(i)
            for con in data[k][i]:
                Q, c, d = con
                val = x @ Q @ x + c @ x + d
                if val > -INJECTION_SLACK:
                    con[2] = d - (val + INJECTION_SLACK)
        designated.append(chosen)

    Qo = draw_q()
    co = rng.uniform(-1.0, 1.0, size=n)
    objective = QuadraticExpr.from_dense(Qo, co, 0.0)

    variables = tuple(Variable(f"x{i}", lo, hi) for i in range(n))
    disjunctions = []
    for k, disj in enumerate(data):
        disjuncts = []
        for i, cons in enumerate(disj):
            body = tuple(Constraint(QuadraticExpr.from_dense(Q, c, d), f"h[{k},{i},{j}]")
                         for j, (Q, c, d) in enumerate(cons))
            disjuncts.append(Disjunct(f"Y[{k},{i}]", body))
        disjunctions.append(Disjunction(f"D[{k}]", tuple(disjuncts)))

    metadata = {
        "generator": "random",
        "params": {
            "n_dims": n, "n_disjunctions": params.n_disjunctions, "disjuncts_per": params.disjuncts_per,
            "constraints_per": params.constraints_per, "n_feasible_points": params.n_feasible_points,
            "convex": params.convex, "seed": params.seed,
        },
        "box": [lo, hi],
        "eigen_shift": {"applied": params.convex, "delta": EIG_SHIFT, "objective_shifted": params.convex},
        "feasible_points": points.tolist(),
        "designated_disjuncts": designated,
    }
    return GdpModel(variables, objective, (), tuple(disjunctions), (), (), metadata)


def random_quadratic(rng: np.random.Generator, n: int, psd: bool) -> QuadraticExpr:
    """``x'Qx + c'x + d`` with U[-1, 1] entries; ``psd`` shifts Q to be convex."""
    Q = rng.uniform(-1.0, 1.0, size=(n, n))
    Q = shift_psd(Q) if psd else (Q + Q.T) / 2.0
    return QuadraticExpr.from_dense(Q, rng.uniform(-1.0, 1.0, size=n), rng.uniform(-1.0, 0.0))


def random_polynomial(rng: np.random.Generator, n: int, degree: int, n_terms: int = 6) -> PolynomialExpr:
    """Sparse polynomial of exact total ``degree`` with U[-1, 1] coefficients and a negative constant."""
    terms = {}
    for k in range(n_terms):
        deg = degree if k == 0 else int(rng.integers(1, degree + 1))
        counts = np.bincount(rng.integers(n, size=deg), minlength=n)
        mono = tuple((i, int(p)) for i, p in enumerate(counts) if p)
        terms[mono] = terms.get(mono, 0.0) + rng.uniform(-1.0, 1.0)
    terms[()] = rng.uniform(-1.0, 0.0)
    return PolynomialExpr(n, terms)


# ---------------------------------------------------------------------------
# k-means clustering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KmeansParams:
    K: int = 3
    points: tuple | None = None  # N x D; sampled from U[-1, 1] when omitted
    n_points: int = 10
    n_dims: int = 2
    seed: int = 0

    def resolved_points(self) -> np.ndarray:
        if self.points is not None:
            return np.asarray(self.points, dtype=float)
        rng = np.random.default_rng(self.seed)
        return rng.uniform(-1.0, 1.0, size=(self.n_points, self.n_dims))


def gen_kmeans(params: KmeansParams) -> GdpModel:
    P = params.resolved_points()
    N, D = P.shape
    K = params.K
    if K < 2:
        raise ValueError("K must be >= 2")
    if K > N:
        raise ValueError(f"K={K} exceeds the number of points {N}")
    lo, hi = P.min(axis=0), P.max(axis=0)
    pad = 0.1 * np.maximum(hi - lo, 1e-12)
    lo, hi = lo - pad, hi + pad

    b = _Builder()
    for k in range(K):
        for j in range(D):
            b.var(f"c[{k},{j}]", lo[j], hi[j])
    for i in range(N):
        # farthest box corner bounds the squared distance of any centre
        dmax = float(np.sum(np.maximum((P[i] - lo) ** 2, (P[i] - hi) ** 2)))
        b.var(f"d[{i}]", 0.0, dmax)

    globals_ = [b.le(b[f"c[{k - 1},0]"] - b[f"c[{k},0]"], f"order[{k}]") for k in range(1, K)]
    disjunctions = []
    for i in range(N):
        disjuncts = []
        for k in range(K):
            dist = sum(((float(P[i, j]) - b[f"c[{k},{j}]"]) ** 2 for j in range(D)), PolynomialExpr.constant(0, 1))
            disjuncts.append(Disjunct(f"Y[{i},{k}]", (b.le(dist - b[f"d[{i}]"], f"dist[{i},{k}]"),)))
        disjunctions.append(Disjunction(f"assign[{i}]", tuple(disjuncts)))
    objective = b.fix(sum((b[f"d[{i}]"] for i in range(N)), PolynomialExpr.constant(0, 1))).to_quadratic()
    metadata = {"generator": "kmeans", "params": {"K": K, "seed": params.seed}, "points": P.tolist()}
    return GdpModel(tuple(b.variables), objective, tuple(globals_), tuple(disjunctions), (), (), metadata)


# ---------------------------------------------------------------------------
# CSTR superstructure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CstrParams:
    """Reactor network data.  Defaults follow the public gdplib reactor model; the constants are unverified."""

    NT: int = 5
    k_rate: float = 2.0
    Q_F0: float = 1.0
    C0: tuple = (("A", 0.99), ("B", 0.01))
    purity: float = 0.95
    flow_ub: float = 10.0
    volume_ub: float = 10.0
    rate_bounds: tuple = (-10.0, 10.0)
    preset: str = "gdplib-reactor (unverified constants)"

    def __post_init__(self):
        if self.NT < 1:
            raise ValueError("NT must be >= 1")
        if not (self.k_rate > 0 and self.Q_F0 > 0 and all(c > 0 for _, c in self.C0)):
            raise ValueError("physical parameters must be > 0")

    @property
    def F0(self) -> dict:
        return {i: c * self.Q_F0 for i, c in self.C0}


def cstr_logic(NT: int) -> list[LogicClause]:
    """CNF of the stage logic: XOR over YF and over YR, YP_n <=> (AND_{j<=n} ~YF_j) OR YF_n, YR_n => YP_n."""
    N = range(1, NT + 1)
    yf = [f"YF[{n}]" for n in N]
    yr = [f"YR[{n}]" for n in N]
    clauses = []
    for fam in (yf, yr):
        clauses.append(LogicClause(positive=set(fam)))
        clauses += [LogicClause(negative={a, b}) for a, b in itertools.combinations(fam, 2)]
    for n in N:
        P, F = f"YP[{n}]", f"YF[{n}]"
        # YP => OR(...) : for j < n, ~YP or YF_n or ~YF_j  (j = n is a tautology)
        clauses += [LogicClause(positive={F}, negative={P, f"YF[{j}]"}) for j in range(1, n)]
        clauses.append(LogicClause(positive={P}, negative={F}))                     # YF_n => YP_n
        clauses.append(LogicClause(positive={P} | {f"YF[{j}]" for j in range(1, n + 1)}))  # AND ~YF => YP
    clauses += [LogicClause(positive={f"YP[{n}]"}, negative={f"YR[{n}]"}) for n in N]
    return clauses


def gen_cstr(params: CstrParams) -> GdpModel:
    NT = params.NT
    N = range(1, NT + 1)
    I = [c for c, _ in params.C0]
    F0 = params.F0
    ub, rlo, rhi = params.flow_ub, *params.rate_bounds

    b = _Builder()
    for n in N:
        for i in I:
            b.var(f"F[{i},{n}]", 0, ub)
            b.var(f"FR[{i},{n}]", 0, ub)
            b.var(f"r[{i},{n}]", rlo, rhi)
        b.var(f"Q[{n}]", 0, ub)
        b.var(f"QFR[{n}]", 0, ub)
        b.var(f"V[{n}]", 0, params.volume_ub)
        b.var(f"c[{n}]", 0, params.volume_ub)
        b.var(f"t[{n}]", 0, ub ** 2)
    b.var("QR", 0, ub)
    b.var("QP", 0, ub)
    for i in I:
        b.var(f"R[{i}]", 0, ub)
        b.var(f"P[{i}]", 0, ub)

    eqs = []
    for i in I:
        eqs.append((f"feed_mole[{i}]", b[f"F[{i},{NT}]"] - F0[i] - b[f"FR[{i},{NT}]"] - b[f"r[{i},{NT}]"] * b[f"V[{NT}]"]))
    eqs.append(("feed_cont", b[f"Q[{NT}]"] - params.Q_F0 - b[f"QFR[{NT}]"]))
    for n in range(1, NT):
        for i in I:
            eqs.append((f"mole[{i},{n}]", b[f"F[{i},{n}]"] - b[f"F[{i},{n + 1}]"] - b[f"FR[{i},{n}]"]
                        - b[f"r[{i},{n}]"] * b[f"V[{n}]"]))
        eqs.append((f"cont[{n}]", b[f"Q[{n}]"] - b[f"Q[{n + 1}]"] - b[f"QFR[{n}]"]))
    for i in I:
        eqs.append((f"split_mole[{i}]", b[f"F[{i},1]"] - b[f"P[{i}]"] - b[f"R[{i}]"]))
    eqs.append(("split_cont", b["Q[1]"] - b["QP"] - b["QR"]))
    for i in I:
        eqs.append((f"split_conc[{i}]", b[f"P[{i}]"] * b["Q[1]"] - b[f"F[{i},1]"] * b["QP"]))
    eqs.append(("purity", params.purity * b["QP"] - b[f"P[{I[1]}]"]))
    for n in range(2, NT + 1):
        eqs.append((f"equal_volume[{n}]", b[f"V[{n}]"] - b[f"V[{n - 1}]"]))
    for n in N:
        eqs.append((f"square[{n}]", b[f"Q[{n}]"] ** 2 - b[f"t[{n}]"]))
    globals_ = [c for name, e in eqs for c in b.eq(e, name)]

    A, B = I
    disjunctions = []
    for n in N:
        reactor = [(f"rate[{n}]", b[f"r[{A},{n}]"] * b[f"t[{n}]"] + params.k_rate * b[f"F[{A},{n}]"] * b[f"F[{B},{n}]"]),
                   (f"rate_rel[{n}]", b[f"r[{B},{n}]"] + b[f"r[{A},{n}]"]),
                   (f"cost[{n}]", b[f"c[{n}]"] - b[f"V[{n}]"])]
        bypass = ([(f"no_FR[{i},{n}]", b[f"FR[{i},{n}]"]) for i in I]
                  + [(f"no_rate[{i},{n}]", b[f"r[{i},{n}]"]) for i in I]
                  + [(f"no_QFR[{n}]", b[f"QFR[{n}]"]), (f"no_cost[{n}]", b[f"c[{n}]"])])
        disjunctions.append(Disjunction(f"unit[{n}]", (
            Disjunct(f"YP[{n}]", tuple(c for name, e in reactor for c in b.eq(e, name))),
            Disjunct(f"notYP[{n}]", tuple(c for name, e in bypass for c in b.eq(e, name))),
        )))
    for n in N:
        recycle = ([(f"FR_eq_R[{i},{n}]", b[f"FR[{i},{n}]"] - b[f"R[{i}]"]) for i in I]
                   + [(f"QFR_eq_QR[{n}]", b[f"QFR[{n}]"] - b["QR"])])
        no_recycle = ([(f"FR_zero[{i},{n}]", b[f"FR[{i},{n}]"]) for i in I] + [(f"QFR_zero[{n}]", b[f"QFR[{n}]"])])
        disjunctions.append(Disjunction(f"recycle[{n}]", (
            Disjunct(f"YR[{n}]", tuple(c for name, e in recycle for c in b.eq(e, name))),
            Disjunct(f"notYR[{n}]", tuple(c for name, e in no_recycle for c in b.eq(e, name))),
        )))

    objective = b.fix(sum((b[f"c[{n}]"] for n in N), PolynomialExpr.constant(0, 1))).to_quadratic()
    metadata = {
        "generator": "cstr",
        "params": {"NT": NT, "k_rate": params.k_rate, "Q_F0": params.Q_F0, "C0": [list(c) for c in params.C0],
                   "purity": params.purity, "preset": params.preset},
        "rate_rows_use": "stage-local t[n]",
    }
    return GdpModel(tuple(b.variables), objective, tuple(globals_), tuple(disjunctions),
                    tuple(cstr_logic(NT)), tuple(f"YF[{n}]" for n in N), metadata)


def cstr_balanced_point(params: CstrParams) -> dict:
    """Analytic steady state for ``NT = 1`` without recycle flow (reactor active, YR[1] selected)."""
    if params.NT != 1:
        raise ValueError("closed-form point only for NT = 1")
    A, B = [c for c, _ in params.C0]
    F0 = params.F0
    QP = params.Q_F0
    FB = params.purity * QP
    FA = F0[A] + F0[B] - FB
    rA = -params.k_rate * FA * FB / QP ** 2
    V = (FA - F0[A]) / rA
    point = {f"F[{A},1]": FA, f"F[{B},1]": FB, f"FR[{A},1]": 0.0, f"FR[{B},1]": 0.0,
             f"r[{A},1]": rA, f"r[{B},1]": -rA, "Q[1]": QP, "QFR[1]": 0.0, "V[1]": V, "c[1]": V,
             "t[1]": QP ** 2, "QR": 0.0, "QP": QP, f"R[{A}]": 0.0, f"R[{B}]": 0.0, f"P[{A}]": FA, f"P[{B}]": FB}
    active = {"YF[1]", "YP[1]", "YR[1]"}
    return {"x": point, "active": active}


# ---------------------------------------------------------------------------
# constrained layout
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClayInstance:
    rectangles: tuple  # ((L, H), ...)
    circles: tuple  # ((xc, yc, r), ...)
    costs: dict = field(default_factory=dict)  # {(i, j): c_ij} with i < j
    norm: str = "l1"
    name: str = "clay"
    provenance: str = ""

    def __post_init__(self):
        if self.norm not in ("l1", "l2"):
            raise ValueError("norm must be 'l1' or 'l2'")
        if any(L <= 0 or H <= 0 for L, H in self.rectangles) or any(r <= 0 for *_, r in self.circles):
            raise ValueError("rectangle sides and circle radii must be > 0")
        for (i, j) in self.costs:
            if not i < j:
                raise ValueError("costs must be keyed by (i, j) with i < j")

    @classmethod
    def from_json(cls, path, norm: str | None = None) -> ClayInstance:
        raw = json.loads(Path(path).read_text())
        costs = {(int(i), int(j)): float(c) for i, j, c in raw.get("costs", [])}
        return cls(tuple(map(tuple, raw["rectangles"])), tuple(map(tuple, raw["circles"])), costs,
                   norm or raw.get("norm", "l1"), raw.get("name", Path(path).stem), raw.get("provenance", ""))


def gen_clay(inst: ClayInstance) -> GdpModel:
    R = len(inst.rectangles)
    xlo = min(xc - r for xc, _, r in inst.circles)
    xhi = max(xc + r for xc, _, r in inst.circles)
    ylo = min(yc - r for _, yc, r in inst.circles)
    yhi = max(yc + r for _, yc, r in inst.circles)

    b = _Builder()
    for i, (L, H) in enumerate(inst.rectangles):
        b.var(f"x[{i}]", xlo + L / 2, xhi - L / 2)
        b.var(f"y[{i}]", ylo + H / 2, yhi - H / 2)
    pairs = list(itertools.combinations(range(R), 2))
    dx_ub, dy_ub = xhi - xlo, yhi - ylo
    aux = {}
    for i, j in pairs:
        b.var(f"dx[{i},{j}]", 0, dx_ub)
        b.var(f"dy[{i},{j}]", 0, dy_ub)
        if inst.norm == "l2":
            aux[b.var(f"t[{i},{j}]", 0, math.hypot(dx_ub, dy_ub))] = [i, j]

    globals_ = []
    for i, j in pairs:
        x_i, x_j, y_i, y_j = b[f"x[{i}]"], b[f"x[{j}]"], b[f"y[{i}]"], b[f"y[{j}]"]
        dx, dy = b[f"dx[{i},{j}]"], b[f"dy[{i},{j}]"]
        globals_ += [b.le(x_i - x_j - dx), b.le(x_j - x_i - dx), b.le(y_i - y_j - dy), b.le(y_j - y_i - dy)]
        if inst.norm == "l2":
            t = b[f"t[{i},{j}]"]
            globals_.append(b.le(dx ** 2 + dy ** 2 - t ** 2, f"norm[{i},{j}]"))

    disjunctions = []
    for i, j in pairs:
        (Li, Hi), (Lj, Hj) = inst.rectangles[i], inst.rectangles[j]
        x_i, x_j, y_i, y_j = b[f"x[{i}]"], b[f"x[{j}]"], b[f"y[{i}]"], b[f"y[{j}]"]
        sides = [x_i + Li / 2 - (x_j - Lj / 2), x_j + Lj / 2 - (x_i - Li / 2),
                 y_i + Hi / 2 - (y_j - Hj / 2), y_j + Hj / 2 - (y_i - Hi / 2)]
        disjunctions.append(Disjunction(f"no_overlap[{i},{j}]", tuple(
            Disjunct(f"Y[{i},{j},{s + 1}]", (b.le(e),)) for s, e in enumerate(sides))))
    for i, (L, H) in enumerate(inst.rectangles):
        x_i, y_i = b[f"x[{i}]"], b[f"y[{i}]"]
        disjuncts = []
        for t, (xc, yc, r) in enumerate(inst.circles):
            corners = [(sx * L / 2, sy * H / 2) for sx, sy in ((1, 1), (1, -1), (-1, 1), (-1, -1))]
            rows = tuple(b.le((x_i + ox - xc) ** 2 + (y_i + oy - yc) ** 2 - r ** 2, f"corner[{i},{t},{c}]")
                         for c, (ox, oy) in enumerate(corners))
            disjuncts.append(Disjunct(f"W[{i},{t}]", rows))
        disjunctions.append(Disjunction(f"inside[{i}]", tuple(disjuncts)))

    obj = PolynomialExpr.constant(0.0, 1)
    for (i, j), c in sorted(inst.costs.items()):
        if inst.norm == "l1":
            obj = obj + c * (b[f"dx[{i},{j}]"] + b[f"dy[{i},{j}]"])
        else:
            obj = obj + c * b[f"t[{i},{j}]"]
    metadata = {
        "generator": "clay", "instance": inst.name, "norm": inst.norm, "data_provenance": inst.provenance,
        "l2_lifting": "t >= 0, dx^2 + dy^2 - t^2 <= 0" if inst.norm == "l2" else None,
        "aux_norm": aux,
    }
    return GdpModel(tuple(b.variables), b.fix(obj).to_quadratic(), tuple(globals_), tuple(disjunctions), (), (),
                    metadata)
