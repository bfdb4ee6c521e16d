"""GDP -> MINLP transformations.

All transforms share :func:`scaffold` (indicator binaries, one XOR row per
disjunction, logic rows, objective and globals) and differ only in how the
constraints inside disjuncts are rewritten:

* ``bigm``        ``h(x) - M (1 - y) <= 0``
* ``hull-eps``    epsilon-approximated perspective on disaggregated copies
* ``hull-exact``  ``v'Qv + (c'v) y + d y^2 <= 0`` (quadratic bodies only)
* ``hull-poly``   ``sum_k p_k(v) y^(deg - k) <= 0`` (any polynomial degree >= 1)
* ``binary-mult`` ``y h(x) <= 0``
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.sparse.linalg import eigsh

from .model import (
    GdpError,
    GdpModel,
    LinearRow,
    MinlpModel,
    PolynomialExpr,
    QuadraticExpr,
    EpsHullExpr,
    Row,
    ValidationError,
    Variable,
    as_body,
    interval_bound,
    logic_to_linear,
    validate,
)

logger = logging.getLogger(__name__)

METHODS = ("bigm", "hull-eps", "hull-exact", "hull-poly", "binary-mult")
PSD_TOL = 1e-10


class ReformulationError(GdpError):
    pass


@dataclass(frozen=True)
class ReformConfig:
    method: str = "hull-exact"
    eps: float = 1e-4
    bigm_strategy: str = "interval"  # or "user"
    bigm_values: Mapping[str, float] = field(default_factory=dict)  # "indicator:j" -> M
    emit_s3: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.method == "hull-eps" and not self.eps > 0:
            raise ValueError("eps must be > 0")
        if self.bigm_strategy not in ("interval", "user"):
            raise ValueError(f"unknown bigm strategy {self.bigm_strategy!r}")


@dataclass
class TransformReport:
    method: str
    counts: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    disaggregation: str = "participating-variables"

    def to_dict(self) -> dict:
        return {"method": self.method, "counts": dict(self.counts), "provenance": dict(self.provenance),
                "warnings": list(self.warnings), "disaggregation": self.disaggregation}


def constraint_key(indicator: str, j: int) -> str:
    return f"{indicator}:{j}"


class _Assembly:
    """Mutable working copy used while a transform is running."""

    def __init__(self, base: MinlpModel):
        self.variables = list(base.variables)
        self.linear = list(base.linear)
        self.rows = list(base.rows)
        self.provenance = dict(base.provenance)
        self.metadata = dict(base.metadata)
        self.objective = base.objective

    def add_var(self, var: Variable, role: tuple) -> int:
        self.variables.append(var)
        idx = len(self.variables) - 1
        self.provenance[idx] = role
        return idx

    def add(self, body, name, source):
        """Route ``body <= 0`` to the linear or nonlinear row list."""
        if not isinstance(body, EpsHullExpr) and body.degree <= 1:
            self.linear.append(LinearRow.from_expr(body, "<=", name, source))
        else:
            self.rows.append(Row(as_body(body), name, source))

    def finish(self) -> MinlpModel:
        n = len(self.variables)
        rows = tuple(Row(r.body.with_dim(n), r.name, r.source) for r in self.rows)
        return MinlpModel(tuple(self.variables), self.objective.with_dim(n), tuple(self.linear), rows,
                          self.provenance, self.metadata)


def _check(model: GdpModel):
    diags = validate(model)
    if diags:
        raise ValidationError(diags)


def scaffold(model: GdpModel) -> MinlpModel:
    """Transform-independent part: variables, indicator binaries, XOR and logic rows, globals."""
    _check(model)
    n_x = model.n
    names = model.indicators
    N = n_x + len(names)
    variables = list(model.variables)
    provenance = {i: ("original", v.name) for i, v in enumerate(model.variables)}
    for name, t in model.metadata.get("aux_norm", {}).items():
        provenance[model.var_index(name)] = ("aux-norm", *t)
    y_of = {}
    for k, name in enumerate(names):
        y_of[name] = n_x + k
        variables.append(Variable(f"y[{name}]", 0.0, 1.0, "binary"))
        provenance[n_x + k] = ("indicator", name)

    linear = []
    for disj in model.disjunctions:
        coefs = tuple((y_of[dj.indicator], 1.0) for dj in disj.disjuncts)
        linear.append(LinearRow(coefs, "==", 1.0, f"xor[{disj.name}]", ("xor", disj.name)))
    linear += logic_to_linear(model.logic, y_of)

    rows = []
    for k, con in enumerate(model.global_constraints):
        body = con.body.with_dim(N)
        name = con.name or f"global[{k}]"
        if body.degree <= 1:
            linear.append(LinearRow.from_expr(body, "<=", name, ("global", k)))
        else:
            rows.append(Row(body, name, ("global", k)))
    metadata = {"source": {k: v for k, v in model.metadata.items()}}
    return MinlpModel(tuple(variables), model.objective.with_dim(N), tuple(linear), tuple(rows),
                      provenance, metadata)


def _disjunct_rows(model: GdpModel):
    for disj in model.disjunctions:
        for dj in disj.disjuncts:
            for j, con in enumerate(dj.constraints):
                yield disj, dj, j, con


def _report(method: str, out: MinlpModel, warnings) -> TransformReport:
    roles = Counter(role[0] for role in out.provenance.values())
    counts = {
        "continuous_vars": sum(v.kind == "continuous" for v in out.variables),
        "binary_vars": sum(v.kind == "binary" for v in out.variables),
        "disaggregated_vars": roles.get("disaggregated", 0),
        "glover_vars": roles.get("glover", 0),
        "linear_rows": len(out.linear),
        "quadratic_rows": len(out.rows),
    }
    return TransformReport(method, counts, dict(sorted(roles.items())), list(warnings))


def _stamp(asm: _Assembly, config: ReformConfig):
    asm.metadata["transform"] = {"method": config.method, "eps": config.eps if config.method == "hull-eps" else None,
                                 "emit_s3": bool(config.emit_s3), "disaggregation": "participating-variables"}


# ---------------------------------------------------------------------------
# Big-M
# ---------------------------------------------------------------------------


def reformulate_bigm(model: GdpModel, config: ReformConfig | None = None):
    config = config or ReformConfig("bigm")
    asm = _Assembly(scaffold(model))
    y_of = {name: i for i, name in enumerate(model.indicators, start=model.n)}
    N = model.n + len(y_of)
    lower, upper = model.lower, model.upper
    warnings = []
    big_ms = {}
    for disj, dj, j, con in _disjunct_rows(model):
        key = constraint_key(dj.indicator, j)
        if config.bigm_strategy == "user" and key in config.bigm_values:
            M = float(config.bigm_values[key])
            warnings.append(f"user M={M} trusted for {key}")
            logger.info("using user-supplied M=%s for %s", M, key)
        else:
            M = max(0.0, interval_bound(con.body, lower, upper)[1])
        big_ms[key] = M
        y = PolynomialExpr.variable(y_of[dj.indicator], N)
        body = con.body.with_dim(N).to_polynomial() + M * y - M
        asm.add(body, f"bigm[{key}]", ("disjunct", disj.name, dj.indicator, j))
    asm.metadata["big_m"] = big_ms
    _stamp(asm, config)
    out = asm.finish()
    return out, _report("bigm", out, warnings)


# ---------------------------------------------------------------------------
# binary multiplication
# ---------------------------------------------------------------------------


def reformulate_binary_mult(model: GdpModel, config: ReformConfig | None = None):
    config = config or ReformConfig("binary-mult")
    asm = _Assembly(scaffold(model))
    y_of = {name: i for i, name in enumerate(model.indicators, start=model.n)}
    N = model.n + len(y_of)
    for disj, dj, j, con in _disjunct_rows(model):
        y = PolynomialExpr.variable(y_of[dj.indicator], N)
        body = y * con.body.with_dim(N).to_polynomial()
        asm.add(body, f"bmult[{constraint_key(dj.indicator, j)}]", ("disjunct", disj.name, dj.indicator, j))
    _stamp(asm, config)
    out = asm.finish()
    return out, _report("binary-mult", out, [])


# ---------------------------------------------------------------------------
# hull family
# ---------------------------------------------------------------------------


def homogenize(h: PolynomialExpr, y: int, degree: int | None = None) -> PolynomialExpr:
    """``sum_k p_k * y**(degree - k)``: every monomial gets total degree ``degree``."""
    h = h.to_polynomial()
    d = h.degree if degree is None else degree
    terms = []
    for mono, coef in h.terms.items():
        k = sum(p for _, p in mono)
        terms.append((mono + ((y, d - k),), coef))
    return PolynomialExpr(h.n, terms)


def is_psd(q: QuadraticExpr, tol: float = PSD_TOL) -> bool:
    idx = sorted(set(q.qi.tolist()) | set(q.qj.tolist()))
    if not idx:
        return True
    Q = q.Q[np.ix_(idx, idx)]
    if len(idx) <= 200:
        lam = np.linalg.eigvalsh(Q)[0]
    else:
        lam = eigsh(Q, k=1, which="SA", return_eigenvectors=False)[0]
    return lam >= -tol


def _disaggregate(asm: _Assembly, model: GdpModel, y_of):
    """Add v copies, bound rows and linking rows; return {(indicator): {x index: v index}}."""
    v_maps = {}
    for disj in model.disjunctions:
        support = sorted({i for dj in disj.disjuncts for con in dj.constraints for i in con.body.variables()})
        per_var = {i: [] for i in support}
        for dj in disj.disjuncts:
            vmap = {}
            y = y_of[dj.indicator]
            for i in support:
                var = model.variables[i]
                v = asm.add_var(Variable(f"v[{var.name}][{dj.indicator}]", min(0.0, var.lower),
                                         max(0.0, var.upper)), ("disaggregated", var.name, dj.indicator))
                vmap[i] = v
                per_var[i].append(v)
                src = ("bound", disj.name, dj.indicator, var.name)
                asm.linear.append(LinearRow(((y, var.lower), (v, -1.0)), "<=", 0.0,
                                            f"vlo[{var.name}][{dj.indicator}]", src))
                asm.linear.append(LinearRow(((v, 1.0), (y, -var.upper)), "<=", 0.0,
                                            f"vup[{var.name}][{dj.indicator}]", src))
            v_maps[dj.indicator] = vmap
        for i in support:
            name = model.variables[i].name
            coefs = ((i, 1.0),) + tuple((v, -1.0) for v in per_var[i])
            asm.linear.append(LinearRow(coefs, "==", 0.0, f"link[{name}][{disj.name}]", ("link", disj.name, name)))
    return v_maps


def glover_rows(v: int, z: int, y: int, xl: float, xu: float) -> list[LinearRow]:
    """Exact-at-binary linearization of ``z = v * y`` for ``v`` in ``[xl, xu]``."""
    if not (np.isfinite(xl) and np.isfinite(xu)):
        raise ReformulationError("product linearization needs finite bounds")
    return [
        LinearRow(((z, 1.0), (y, -xu)), "<=", 0.0),                # z <= xu y
        LinearRow(((y, xl), (z, -1.0)), "<=", 0.0),                # z >= xl y
        LinearRow(((z, 1.0), (v, -1.0), (y, -xl)), "<=", -xl),     # z <= v - xl (1 - y)
        LinearRow(((v, 1.0), (z, -1.0), (y, xu)), "<=", xu),       # z >= v - xu (1 - y)
    ]


def convexify_s3(h: QuadraticExpr, v: Mapping[int, int], z: Mapping[int, int], y: int, lower, upper, n: int):
    """Glover-linearized variant of the exact hull row for PSD ``h``.

    ``v`` and ``z`` map original variable indices to the disaggregated copy and
    to the product variable standing for ``v * y``.  Returns ``(body, rows)`` where
    ``body <= 0`` is ``v'Qv + c'z + d y`` and ``rows`` are the four linear rows per
    product variable.
    """
    lin = h.lin_dict()
    missing = [i for i in lin if i not in z]
    if missing:
        raise ReformulationError(f"no product variable for {missing}")
    quad = {(v[i], v[j]): c for (i, j), c in h.quad_dict().items()}
    linear = {z[i]: c for i, c in lin.items()}
    linear[y] = h.d
    rows = []
    for i in sorted(lin):
        rows += glover_rows(v[i], z[i], y, float(lower[i]), float(upper[i]))
    return QuadraticExpr(n, quad, linear), rows


def _hull(model: GdpModel, config: ReformConfig):
    asm = _Assembly(scaffold(model))
    y_of = {name: i for i, name in enumerate(model.indicators, start=model.n)}
    v_maps = _disaggregate(asm, model, y_of)
    warnings = []
    lower, upper = model.lower, model.upper
    z_maps: dict = {}
    for disj, dj, j, con in _disjunct_rows(model):
        key = constraint_key(dj.indicator, j)
        src = ("disjunct", disj.name, dj.indicator, j)
        deg = con.body.degree
        if deg == 0:
            raise ReformulationError(f"{key}: constant constraint body is degenerate")
        if config.method == "hull-exact" and deg > 2:
            raise ReformulationError(f"{key}: hull-exact needs a quadratic body, got degree {deg}")
        y = y_of[dj.indicator]
        vmap = v_maps[dj.indicator]
        N = len(asm.variables)
        h_v = con.body.to_polynomial().remap(vmap, N)
        if config.method == "hull-eps" and deg >= 2:
            asm.add(EpsHullExpr(h_v, y, config.eps), f"hull[{key}]", src)
            continue
        if config.method == "hull-exact" and config.emit_s3 and deg == 2:
            q = con.body.to_quadratic()
            if is_psd(q):
                zmap = z_maps.setdefault(dj.indicator, {})
                for i in sorted(q.lin_dict()):
                    if i in zmap:
                        continue
                    var = model.variables[i]
                    zmap[i] = asm.add_var(Variable(f"z[{var.name}][{dj.indicator}]", min(0.0, var.lower),
                                                   max(0.0, var.upper)), ("glover", var.name, dj.indicator))
                    for t, r in enumerate(glover_rows(vmap[i], zmap[i], y, var.lower, var.upper)):
                        asm.linear.append(LinearRow(r.coefs, r.sense, r.rhs, f"glover{t}[{var.name}][{dj.indicator}]",
                                                    ("glover", disj.name, dj.indicator, var.name)))
                body, _ = convexify_s3(q, vmap, zmap, y, lower, upper, len(asm.variables))
                asm.add(body, f"hull_s3[{key}]", src)
                continue
            warnings.append(f"{key}: Q is not PSD, kept exact-hull row instead of S3")
        asm.add(homogenize(h_v, y), f"hull[{key}]", src)
    _stamp(asm, config)
    out = asm.finish()
    return out, _report(config.method, out, warnings)


def reformulate_hull_exact(model: GdpModel, config: ReformConfig | None = None):
    return _hull(model, config or ReformConfig("hull-exact"))


def reformulate_hull_poly(model: GdpModel, config: ReformConfig | None = None):
    return _hull(model, config or ReformConfig("hull-poly"))


def reformulate_hull_eps(model: GdpModel, config: ReformConfig | None = None):
    return _hull(model, config or ReformConfig("hull-eps"))


_DISPATCH = {
    "bigm": reformulate_bigm,
    "hull-eps": reformulate_hull_eps,
    "hull-exact": reformulate_hull_exact,
    "hull-poly": reformulate_hull_poly,
    "binary-mult": reformulate_binary_mult,
}


def reformulate(model: GdpModel, config: ReformConfig | str):
    """Apply the transform named by ``config.method``; returns ``(MinlpModel, TransformReport)``."""
    if isinstance(config, str):
        config = ReformConfig(config)
    return _DISPATCH[config.method](model, config)
