"""Typed model objects for quadratic/polynomial GDPs and their MINLP reformulations.

Variables are referenced by position.  Every expression carries its dimension ``n``
(the length of the variable vector it is evaluated on); evaluation accepts a single
point of shape ``(n,)`` or a batch of shape ``(m, n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

# feasibility tolerance for "h(x) <= 0" membership tests
FEAS_TOL = 1e-8

Monomial = tuple  # tuple[tuple[int, int], ...], sorted by variable index


class GdpError(Exception):
    """Base class for modelling and transformation errors."""


class DimensionError(GdpError, ValueError):
    pass


class UnknownIndicatorError(GdpError, KeyError):
    pass


class UnboundedVariableError(GdpError, ValueError):
    pass


class ValidationError(GdpError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        codes = ", ".join(d.code for d in self.diagnostics)
        super().__init__(f"model failed validation: {codes}")


# ---------------------------------------------------------------------------
# expressions
# ---------------------------------------------------------------------------


def _as_points(x, n):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise DimensionError(f"point has dimension {x.shape[-1]}, expression expects {n}")
    return x


def _monomial_degree(mono):
    return sum(p for _, p in mono)


def _mono_key(mono):
    return (_monomial_degree(mono), mono)


def _mul_monomials(a, b):
    powers = dict(a)
    for i, p in b:
        powers[i] = powers.get(i, 0) + p
    return tuple(sorted(powers.items()))


class PolynomialExpr:
    """Sparse polynomial: a mapping from monomials to coefficients.

    A monomial is a sorted tuple of ``(variable index, power)`` pairs; the empty
    tuple is the constant term.  Terms are kept in canonical order (total degree,
    then lexicographic), which makes coefficient-level comparisons and
    serialization deterministic.
    """

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: Mapping[Monomial, float] | Iterable = ()):
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict = {}
        for mono, coef in items:
            mono = tuple(sorted((int(i), int(p)) for i, p in mono if int(p) != 0))
            merged: dict = {}
            for i, p in mono:
                if not 0 <= i < n:
                    raise DimensionError(f"variable index {i} outside dimension {n}")
                if p < 0:
                    raise ValueError("negative exponents are not polynomial")
                merged[i] = merged.get(i, 0) + p
            mono = tuple(sorted(merged.items()))
            acc[mono] = acc.get(mono, 0.0) + float(coef)
        self.n = int(n)
        self.terms = {m: c for m, c in sorted(acc.items(), key=lambda t: _mono_key(t[0])) if c != 0.0}

    # construction helpers -------------------------------------------------
    @classmethod
    def variable(cls, index: int, n: int) -> PolynomialExpr:
        return cls(n, {((index, 1),): 1.0})

    @classmethod
    def constant(cls, value: float, n: int) -> PolynomialExpr:
        return cls(n, {(): value})

    def with_dim(self, n: int) -> PolynomialExpr:
        return PolynomialExpr(n, self.terms)

    # algebra --------------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, PolynomialExpr):
            return other
        if isinstance(other, QuadraticExpr):
            return other.to_polynomial()
        if isinstance(other, (int, float, np.floating, np.integer)):
            return PolynomialExpr.constant(float(other), self.n)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        n = max(self.n, other.n)
        return PolynomialExpr(n, list(self.terms.items()) + list(other.terms.items()))

    __radd__ = __add__

    def __neg__(self):
        return PolynomialExpr(self.n, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        n = max(self.n, other.n)
        out = []
        for ma, ca in self.terms.items():
            for mb, cb in other.terms.items():
                out.append((_mul_monomials(ma, mb), ca * cb))
        return PolynomialExpr(n, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        result = PolynomialExpr.constant(1.0, self.n)
        for _ in range(k):
            result = result * self
        return result

    def __eq__(self, other):
        if not isinstance(other, PolynomialExpr):
            return NotImplemented
        return self.n == other.n and list(self.terms.items()) == list(other.terms.items())

    def __repr__(self):
        return f"PolynomialExpr(n={self.n}, terms={self.terms!r})"

    # structure --------------------------------------------------------------
    @property
    def degree(self) -> int:
        return max((_monomial_degree(m) for m in self.terms), default=0)

    @property
    def components(self) -> dict[int, PolynomialExpr]:
        """Homogeneous parts keyed by degree (only nonzero parts are present)."""
        parts: dict[int, dict] = {}
        for mono, coef in self.terms.items():
            parts.setdefault(_monomial_degree(mono), {})[mono] = coef
        return {k: PolynomialExpr(self.n, t) for k, t in sorted(parts.items())}

    @property
    def constant_term(self) -> float:
        return self.terms.get((), 0.0)

    def variables(self) -> list[int]:
        return sorted({i for mono in self.terms for i, _ in mono})

    def remap(self, mapping: Mapping[int, int], n: int) -> PolynomialExpr:
        """Rename variables: index ``i`` becomes ``mapping[i]`` in a space of dimension ``n``."""
        return PolynomialExpr(n, [(tuple((mapping[i], p) for i, p in mono), c) for mono, c in self.terms.items()])

    def to_quadratic(self) -> QuadraticExpr:
        if self.degree > 2:
            raise ValueError(f"degree {self.degree} polynomial is not quadratic")
        quad, lin, const = {}, {}, 0.0
        for mono, coef in self.terms.items():
            if not mono:
                const += coef
            elif len(mono) == 1 and mono[0][1] == 1:
                lin[mono[0][0]] = coef
            elif len(mono) == 1:
                quad[(mono[0][0], mono[0][0])] = coef
            else:
                quad[(mono[0][0], mono[1][0])] = coef
        return QuadraticExpr(self.n, quad, lin, const)

    def to_polynomial(self) -> PolynomialExpr:
        return self

    # evaluation -------------------------------------------------------------
    def evaluate(self, x):
        x = _as_points(x, self.n)
        total = np.zeros(x.shape[:-1])
        for mono, coef in self.terms.items():
            term = coef
            for i, p in mono:
                col = x[..., i]
                term = term * (col if p == 1 else col * col if p == 2 else col ** p)
            total = total + term
        return float(total) if total.ndim == 0 else total

    def gradient(self, x) -> np.ndarray:
        x = _as_points(x, self.n)
        g = np.zeros(self.n)
        for mono, coef in self.terms.items():
            for k, (i, p) in enumerate(mono):
                val = coef * p * x[i] ** (p - 1)
                for kk, (j, q) in enumerate(mono):
                    if kk != k:
                        val *= x[j] ** q
                g[i] += val
        return g


class QuadraticExpr:
    """``x'Qx + c'x + d`` with ``Q`` kept symmetric in upper-triangle storage.

    ``quad`` maps ``(i, j)`` to the entry ``Q[i, j]`` of any square matrix; the
    constructor symmetrizes, so ``{(0, 1): 2.0}`` and ``{(0, 1): 1.0, (1, 0): 1.0}``
    describe the same expression ``2 x0 x1``.  Stored off-diagonal values are the
    symmetrized ones, i.e. the expression is
    ``sum_i Q_ii x_i^2 + sum_{i<j} 2 Q_ij x_i x_j``.
    """

    __slots__ = ("n", "qi", "qj", "qv", "ci", "cv", "d", "_dense")

    def __init__(self, n: int, quad: Mapping | None = None, lin: Mapping | None = None, d: float = 0.0):
        self.n = int(n)
        upper: dict = {}
        for (i, j), v in (quad or {}).items():
            i, j = int(i), int(j)
            if not (0 <= i < n and 0 <= j < n):
                raise DimensionError(f"index ({i}, {j}) outside dimension {n}")
            if i == j:
                upper[(i, i)] = upper.get((i, i), 0.0) + float(v)
            else:
                key = (min(i, j), max(i, j))
                upper[key] = upper.get(key, 0.0) + float(v) / 2.0
        upper = {k: v for k, v in sorted(upper.items()) if v != 0.0}
        self.qi = np.array([k[0] for k in upper], dtype=np.int64)
        self.qj = np.array([k[1] for k in upper], dtype=np.int64)
        self.qv = np.array(list(upper.values()), dtype=float)
        linear: dict = {}
        for i, v in (lin or {}).items():
            i = int(i)
            if not 0 <= i < n:
                raise DimensionError(f"index {i} outside dimension {n}")
            linear[i] = linear.get(i, 0.0) + float(v)
        linear = {k: v for k, v in sorted(linear.items()) if v != 0.0}
        self.ci = np.array(list(linear), dtype=np.int64)
        self.cv = np.array(list(linear.values()), dtype=float)
        self.d = float(d)
        self._dense = None

    @classmethod
    def from_dense(cls, Q=None, c=None, d: float = 0.0) -> QuadraticExpr:
        if Q is None and c is None:
            raise ValueError("need Q or c to fix the dimension")
        n = len(c) if Q is None else np.shape(Q)[0]
        quad = {}
        if Q is not None:
            Q = np.asarray(Q, dtype=float)
            if Q.shape != (n, n):
                raise DimensionError("Q must be square")
            for i, j in zip(*np.nonzero(Q)):
                quad[(int(i), int(j))] = Q[i, j]
        lin = {} if c is None else {i: v for i, v in enumerate(np.asarray(c, dtype=float)) if v != 0}
        return cls(n, quad, lin, d)

    def with_dim(self, n: int) -> QuadraticExpr:
        return QuadraticExpr(n, self.quad_dict(), self.lin_dict(), self.d)

    def quad_dict(self) -> dict:
        """Upper-triangle entries ``(i, j) -> Q_ij`` expanded so that re-construction round-trips."""
        out = {}
        for i, j, v in zip(self.qi.tolist(), self.qj.tolist(), self.qv.tolist()):
            out[(i, j)] = v if i == j else 2.0 * v
        return out

    def lin_dict(self) -> dict:
        return dict(zip(self.ci.tolist(), self.cv.tolist()))

    @property
    def Q(self) -> np.ndarray:
        Q = np.zeros((self.n, self.n))
        Q[self.qi, self.qj] = self.qv
        Q[self.qj, self.qi] = self.qv
        return Q

    @property
    def c(self) -> np.ndarray:
        c = np.zeros(self.n)
        c[self.ci] = self.cv
        return c

    @property
    def degree(self) -> int:
        if self.qv.size:
            return 2
        return 1 if self.cv.size else 0

    @property
    def constant_term(self) -> float:
        return self.d

    def variables(self) -> list[int]:
        return sorted(set(self.qi.tolist()) | set(self.qj.tolist()) | set(self.ci.tolist()))

    def to_polynomial(self) -> PolynomialExpr:
        terms = []
        for i, j, v in zip(self.qi.tolist(), self.qj.tolist(), self.qv.tolist()):
            terms.append((((i, 2),) if i == j else ((i, 1), (j, 1)), v if i == j else 2.0 * v))
        terms += [(((i, 1),), v) for i, v in zip(self.ci.tolist(), self.cv.tolist())]
        terms.append(((), self.d))
        return PolynomialExpr(self.n, terms)

    def to_quadratic(self) -> QuadraticExpr:
        return self

    def remap(self, mapping: Mapping[int, int], n: int) -> QuadraticExpr:
        quad = {}
        for (i, j), v in self.quad_dict().items():
            key = (mapping[i], mapping[j])
            quad[key] = quad.get(key, 0.0) + v
        return QuadraticExpr(n, quad, {mapping[i]: v for i, v in self.lin_dict().items()}, self.d)

    def _block(self):
        # dense (Q, c) restricted to the referenced variables
        if self._dense is None:
            idx = np.array(self.variables(), dtype=np.int64)
            pos = {int(i): k for k, i in enumerate(idx)}
            Q = np.zeros((len(idx), len(idx)))
            for i, j, v in zip(self.qi.tolist(), self.qj.tolist(), self.qv.tolist()):
                Q[pos[i], pos[j]] += v
                if i != j:
                    Q[pos[j], pos[i]] += v
            c = np.zeros(len(idx))
            c[[pos[i] for i in self.ci.tolist()]] = self.cv
            self._dense = (idx, Q, c)
        return self._dense

    def evaluate(self, x):
        x = _as_points(x, self.n)
        idx, Q, c = self._block()
        xs = x[..., idx]
        val = np.einsum("...i,...i->...", xs @ Q + c, xs) + self.d
        return float(val) if np.ndim(val) == 0 else val

    def gradient(self, x) -> np.ndarray:
        x = _as_points(x, self.n)
        g = np.zeros(self.n)
        np.add.at(g, self.ci, self.cv)
        diag = self.qi == self.qj
        np.add.at(g, self.qi[diag], 2.0 * self.qv[diag] * x[self.qi[diag]])
        off = ~diag
        np.add.at(g, self.qi[off], 2.0 * self.qv[off] * x[self.qj[off]])
        np.add.at(g, self.qj[off], 2.0 * self.qv[off] * x[self.qi[off]])
        return g

    def __add__(self, other):
        return self.to_polynomial() + other

    __radd__ = __add__

    def __mul__(self, other):
        return self.to_polynomial() * other

    __rmul__ = __mul__

    def __neg__(self):
        return QuadraticExpr(self.n, {k: -v for k, v in self.quad_dict().items()},
                             {k: -v for k, v in self.lin_dict().items()}, -self.d)

    def __sub__(self, other):
        return self.to_polynomial() - other

    def __rsub__(self, other):
        return other - self.to_polynomial()

    def __eq__(self, other):
        if not isinstance(other, QuadraticExpr):
            return NotImplemented
        return (self.n == other.n and self.d == other.d
                and np.array_equal(self.qi, other.qi) and np.array_equal(self.qj, other.qj)
                and np.array_equal(self.qv, other.qv) and np.array_equal(self.ci, other.ci)
                and np.array_equal(self.cv, other.cv))

    def __repr__(self):
        return f"QuadraticExpr(n={self.n}, quad={self.quad_dict()!r}, lin={self.lin_dict()!r}, d={self.d!r})"


class EpsHullExpr:
    """Epsilon-approximated perspective of ``h`` over disaggregated variables.

    ``body`` is ``h`` already rewritten onto the disaggregated copies ``v``; ``y`` is
    the index of the indicator.  With ``D = (1 - eps) y + eps`` the row is
    ``v'Qv / D + c'v + d y`` for quadratic ``h`` and
    ``D h(v / D) - eps h(0) (1 - y)`` for higher degrees.
    """

    __slots__ = ("body", "y", "eps", "_parts")

    def __init__(self, body: PolynomialExpr, y: int, eps: float):
        if eps <= 0:
            raise ValueError("eps must be > 0")
        self.body = body.to_polynomial()
        self.y = int(y)
        self.eps = float(eps)
        self._parts = None

    def _components(self) -> dict:
        # homogeneous parts, as quadratics where possible for fast evaluation
        if self._parts is None:
            self._parts = {k: as_body(pk) for k, pk in self.body.components.items()}
        return self._parts

    @property
    def n(self) -> int:
        return self.body.n

    @property
    def degree(self) -> int:
        return self.body.degree

    def with_dim(self, n: int) -> EpsHullExpr:
        return EpsHullExpr(self.body.with_dim(n), self.y, self.eps)

    def variables(self) -> list[int]:
        return sorted(set(self.body.variables()) | {self.y})

    def evaluate(self, x):
        x = _as_points(x, self.n)
        y = x[..., self.y]
        D = (1.0 - self.eps) * y + self.eps
        parts = self._components()
        p0 = self.body.constant_term
        if self.degree <= 2:
            val = p0 * y
            if 1 in parts:
                val = val + parts[1].evaluate(x)
            if 2 in parts:
                val = val + parts[2].evaluate(x) / D
        else:
            val = -self.eps * p0 * (1.0 - y) + p0 * D
            for k, pk in parts.items():
                if k:
                    val = val + pk.evaluate(x) * D ** (1 - k)
        return float(val) if np.ndim(val) == 0 else val

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = np.zeros(self.n)
        for i in self.variables():
            h = 1e-7 * max(1.0, abs(x[i]))
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            g[i] = (self.evaluate(xp) - self.evaluate(xm)) / (2 * h)
        return g

    def lowered(self) -> PolynomialExpr:
        """Polynomial row with the same zero-sublevel set on ``y`` in ``[0, 1]``.

        Multiplies through by ``D**(d-1) > 0``; quadratic rows become
        ``v'Qv + (c'v) D + d y D``.
        """
        n, d = self.n, self.degree
        y = PolynomialExpr.variable(self.y, n)
        D = (1.0 - self.eps) * y + self.eps
        parts = self.body.components
        p0 = self.body.constant_term
        if d <= 2:
            out = p0 * (y * D)
            for k, pk in parts.items():
                if k:
                    out = out + pk * D ** (2 - k)
            return out
        out = -self.eps * p0 * ((1.0 - y) * D ** (d - 1)) + p0 * D ** d
        for k, pk in parts.items():
            if k:
                out = out + pk * D ** (d - k)
        return out

    def __eq__(self, other):
        if not isinstance(other, EpsHullExpr):
            return NotImplemented
        return self.body == other.body and self.y == other.y and self.eps == other.eps

    def __repr__(self):
        return f"EpsHullExpr(y={self.y}, eps={self.eps}, body={self.body!r})"


def as_body(expr):
    """Canonical storage for a constraint body: quadratic when possible."""
    if isinstance(expr, (QuadraticExpr, EpsHullExpr)):
        return expr
    if isinstance(expr, PolynomialExpr):
        return expr.to_quadratic() if expr.degree <= 2 else expr
    raise TypeError(f"unsupported expression type {type(expr).__name__}")


def eval_expr(expr, point) -> float:
    """Value of ``expr`` at a single point; raises :class:`DimensionError` on size mismatch."""
    point = np.asarray(point, dtype=float)
    if point.ndim != 1 or point.shape[0] != expr.n:
        raise DimensionError(f"point has shape {point.shape}, expression expects ({expr.n},)")
    return expr.evaluate(point)


# ---------------------------------------------------------------------------
# model components
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Variable:
    name: str
    lower: float
    upper: float
    kind: str = "continuous"  # or "binary"

    def __post_init__(self):
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))


@dataclass(frozen=True)
class Constraint:
    """``body <= 0``.  Equalities are stored as a split pair, see :func:`split_equality`."""

    body: object
    name: str = ""
    origin: str = "user"

    def __post_init__(self):
        object.__setattr__(self, "body", as_body(self.body))


def split_equality(h, name: str = "") -> tuple[Constraint, Constraint]:
    """``h = 0`` as ``h <= 0`` and ``-h <= 0``."""
    h = as_body(h)
    return (Constraint(h, f"{name}.hi" if name else "", "equality-split-hi"),
            Constraint(-h, f"{name}.lo" if name else "", "equality-split-lo"))


@dataclass(frozen=True)
class Disjunct:
    indicator: str
    constraints: tuple = ()


@dataclass(frozen=True)
class Disjunction:
    name: str
    disjuncts: tuple


@dataclass(frozen=True)
class LogicClause:
    """CNF clause: OR over ``positive`` indicators and negated ``negative`` indicators."""

    positive: frozenset = frozenset()
    negative: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "positive", frozenset(self.positive))
        object.__setattr__(self, "negative", frozenset(self.negative))

    def satisfied(self, true_set) -> bool:
        return bool(self.positive & true_set) or bool(self.negative - true_set)


@dataclass(frozen=True)
class GdpModel:
    """Minimize ``objective`` subject to globals, disjunctions (XOR implicit) and logic.

    ``booleans`` are free Boolean variables that appear only in logic clauses.
    """

    variables: tuple
    objective: QuadraticExpr
    global_constraints: tuple = ()
    disjunctions: tuple = ()
    logic: tuple = ()
    booleans: tuple = ()
    metadata: dict = field(default_factory=dict, compare=True)

    @property
    def n(self) -> int:
        return len(self.variables)

    def var_index(self, name: str) -> int:
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise KeyError(name)

    @property
    def indicators(self) -> list[str]:
        names = [dj.indicator for d in self.disjunctions for dj in d.disjuncts]
        return names + list(self.booleans)

    @property
    def lower(self) -> np.ndarray:
        return np.array([v.lower for v in self.variables], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([v.upper for v in self.variables], dtype=float)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    path: str = ""


def validate(model: GdpModel) -> list[Diagnostic]:
    """All invariant violations of ``model``; an empty list means well-formed."""
    out: list[Diagnostic] = []
    n = model.n
    seen = set()
    for k, v in enumerate(model.variables):
        path = f"/variables/{k}"
        if v.name in seen:
            out.append(Diagnostic("DUPLICATE_VARIABLE", f"variable {v.name!r} declared twice", path))
        seen.add(v.name)
        if v.kind not in ("continuous", "binary"):
            out.append(Diagnostic("BAD_VARIABLE_KIND", f"{v.name}: kind {v.kind!r}", path))
        if math.isnan(v.lower) or math.isnan(v.upper):
            out.append(Diagnostic("NAN_BOUND", f"{v.name}: NaN bound", path))
        elif v.lower > v.upper:
            out.append(Diagnostic("BOUND_ORDER", f"{v.name}: lower {v.lower} > upper {v.upper}", path))

    def check_expr(expr, path, continuous_only):
        if expr.n != n:
            out.append(Diagnostic("DIMENSION_MISMATCH", f"expression dimension {expr.n} != {n}", path))
            return []
        refs = expr.variables()
        if continuous_only:
            for i in refs:
                if model.variables[i].kind != "continuous":
                    out.append(Diagnostic("NON_CONTINUOUS_REFERENCE",
                                          f"{model.variables[i].name} is not continuous", path))
        return refs

    check_expr(model.objective, "/objective", True)
    for k, con in enumerate(model.global_constraints):
        check_expr(con.body, f"/global_constraints/{k}", True)

    indicators = set()
    for k, disj in enumerate(model.disjunctions):
        if not disj.disjuncts:
            out.append(Diagnostic("EMPTY_DISJUNCTION", f"disjunction {disj.name!r} has no disjuncts",
                                  f"/disjunctions/{k}"))
        for i, dj in enumerate(disj.disjuncts):
            path = f"/disjunctions/{k}/disjuncts/{i}"
            if dj.indicator in indicators:
                out.append(Diagnostic("DUPLICATE_INDICATOR", f"indicator {dj.indicator!r} reused", path))
            indicators.add(dj.indicator)
            for j, con in enumerate(dj.constraints):
                for vi in check_expr(con.body, f"{path}/constraints/{j}", True):
                    var = model.variables[vi]
                    if not (math.isfinite(var.lower) and math.isfinite(var.upper)):
                        out.append(Diagnostic("UNBOUNDED_DISJUNCT_VAR",
                                              f"{var.name} appears in {dj.indicator} without finite bounds",
                                              f"{path}/constraints/{j}"))
    for name in model.booleans:
        if name in indicators:
            out.append(Diagnostic("DUPLICATE_INDICATOR", f"indicator {name!r} reused", "/booleans"))
        indicators.add(name)

    for k, clause in enumerate(model.logic):
        path = f"/logic/{k}"
        if clause.positive & clause.negative:
            out.append(Diagnostic("CLAUSE_LITERAL_CONFLICT",
                                  f"literals {sorted(clause.positive & clause.negative)} both signs", path))
        for name in sorted(clause.positive | clause.negative):
            if name not in indicators:
                out.append(Diagnostic("UNKNOWN_INDICATOR", f"clause references {name!r}", path))
    return out


# ---------------------------------------------------------------------------
# MINLP
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearRow:
    """``sum coefs[i] * x[i]  <sense>  rhs`` with sense one of ``<=``, ``>=``, ``==``."""

    coefs: tuple  # ((index, value), ...)
    sense: str
    rhs: float
    name: str = ""
    source: tuple = ()

    def __post_init__(self):
        if self.sense not in ("<=", ">=", "=="):
            raise ValueError(f"bad sense {self.sense!r}")
        merged: dict = {}
        for i, v in self.coefs:
            merged[int(i)] = merged.get(int(i), 0.0) + float(v)
        object.__setattr__(self, "coefs", tuple((i, v) for i, v in sorted(merged.items()) if v != 0.0))
        object.__setattr__(self, "rhs", float(self.rhs) + 0.0)  # no -0.0

    @classmethod
    def from_expr(cls, expr, sense="<=", name="", source=()) -> LinearRow:
        """Row for ``expr <sense> 0`` where ``expr`` has degree at most one."""
        q = expr.to_quadratic()
        if q.qv.size:
            raise ValueError("expression is not linear")
        return cls(tuple(q.lin_dict().items()), sense, -q.d, name, source)

    def lhs(self, x):
        x = np.asarray(x, dtype=float)
        idx = [i for i, _ in self.coefs]
        vals = np.array([v for _, v in self.coefs])
        return x[..., idx] @ vals if idx else np.zeros(x.shape[:-1])

    def residual(self, x):
        """Violation-signed value: feasible iff ``residual <= tol``."""
        a = self.lhs(x) - self.rhs
        if self.sense == "<=":
            return a
        if self.sense == ">=":
            return -a
        return np.abs(a)

    def variables(self) -> list[int]:
        return [i for i, _ in self.coefs]


@dataclass(frozen=True)
class Row:
    """Nonlinear row ``body <= 0``."""

    body: object
    name: str = ""
    source: tuple = ()

    def residual(self, x):
        return self.body.evaluate(x)

    def variables(self) -> list[int]:
        return self.body.variables()


@dataclass(frozen=True)
class MinlpModel:
    """Flat MINLP over the joint vector ``(x, y, v, z)``.

    ``provenance`` maps a variable index to its role, e.g.
    ``("disaggregated", var, indicator)``, ``("glover", var, indicator)``,
    ``("indicator", indicator)``, ``("aux-norm", i, j)`` or ``("original", name)``.
    """

    variables: tuple
    objective: QuadraticExpr
    linear: tuple = ()
    rows: tuple = ()
    provenance: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def lower(self) -> np.ndarray:
        return np.array([v.lower for v in self.variables], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([v.upper for v in self.variables], dtype=float)

    def binary_indices(self) -> list[int]:
        return [i for i, v in enumerate(self.variables) if v.kind == "binary"]

    def var_index(self, name: str) -> int:
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise KeyError(name)

    def indicator_index(self) -> dict[str, int]:
        return {role[1]: i for i, role in self.provenance.items() if role[0] == "indicator"}

    def all_rows(self):
        return list(self.linear) + list(self.rows)

    def max_violation(self, x, include_bounds=True):
        x = np.asarray(x, dtype=float)
        worst = np.zeros(x.shape[:-1])
        for row in self.all_rows():
            worst = np.maximum(worst, row.residual(x))
        if include_bounds:
            worst = np.maximum(worst, np.max(self.lower - x, axis=-1))
            worst = np.maximum(worst, np.max(x - self.upper, axis=-1))
        return worst


# ---------------------------------------------------------------------------
# logic and bounds
# ---------------------------------------------------------------------------


def logic_to_linear(clauses: Sequence[LogicClause], indicators) -> list[LinearRow]:
    """One ``>=`` row per clause: ``sum_pos y + sum_neg (1 - y) >= 1``.

    ``indicators`` maps names to variable indices (a sequence is read as
    ``name -> position``).
    """
    if not isinstance(indicators, Mapping):
        indicators = {name: i for i, name in enumerate(indicators)}
    rows = []
    for k, clause in enumerate(clauses):
        coefs = []
        for name in sorted(clause.positive):
            if name not in indicators:
                raise UnknownIndicatorError(name)
            coefs.append((indicators[name], 1.0))
        for name in sorted(clause.negative):
            if name not in indicators:
                raise UnknownIndicatorError(name)
            coefs.append((indicators[name], -1.0))
        rows.append(LinearRow(tuple(coefs), ">=", 1.0 - len(clause.negative), f"logic[{k}]", ("logic", k)))
    return rows


def _pow_interval(lo, hi, p):
    if p % 2 == 0 and lo < 0 < hi:
        return 0.0, max(lo ** p, hi ** p)
    a, b = lo ** p, hi ** p
    return min(a, b), max(a, b)


def _mul_interval(a, b):
    prods = [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]
    return min(prods), max(prods)


def interval_bound(expr, lower, upper) -> tuple[float, float]:
    """Valid (not necessarily tight) range of ``expr`` over the box ``[lower, upper]``.

    Works term by term; a squared variable uses the square of its interval.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    for i in expr.variables():
        if not (math.isfinite(lower[i]) and math.isfinite(upper[i])):
            raise UnboundedVariableError(f"variable {i} has an infinite bound")
    lo = hi = expr.constant_term
    for mono, coef in expr.to_polynomial().terms.items():
        if not mono:
            continue
        iv = (1.0, 1.0)
        for i, p in mono:
            iv = _mul_interval(iv, _pow_interval(lower[i], upper[i], p))
        a, b = sorted((coef * iv[0], coef * iv[1]))
        lo += a
        hi += b
    return float(lo), float(hi)
