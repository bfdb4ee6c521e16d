"""Model documents (JSON) and LP-style export.

Documents are canonical JSON: sorted keys, shortest round-trip float repr,
``"inf"``/``"-inf"`` strings for infinite bounds, trailing newline.  The same
model always serializes to the same bytes.
"""

from __future__ import annotations

import copy
import json
import math
import re
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .model import (
    Constraint,
    Disjunct,
    Disjunction,
    EpsHullExpr,
    GdpError,
    GdpModel,
    LinearRow,
    LogicClause,
    MinlpModel,
    PolynomialExpr,
    QuadraticExpr,
    Row,
    Variable,
    as_body,
)

FORMAT = "gdpq-model"
FORMAT_VERSION = 1


class ModelFormatError(GdpError, ValueError):
    """Schema violation; ``diagnostics`` holds ``(json pointer, message)`` pairs."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(f"{p or '/'}: {m}" for p, m in self.diagnostics))


class VersionMismatch(ModelFormatError):
    pass


class ExportError(GdpError, ValueError):
    pass


# ---------------------------------------------------------------------------
# JSON encoding
# ---------------------------------------------------------------------------


def _bound_out(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _bound_in(x) -> float:
    return float(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted(_jsonable(v) for v in obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def expr_to_json(e) -> dict:
    if isinstance(e, QuadraticExpr):
        return {"type": "quadratic",
                "quad": [[i, j, v] for i, j, v in zip(e.qi.tolist(), e.qj.tolist(), e.qv.tolist())],
                "lin": [[i, v] for i, v in zip(e.ci.tolist(), e.cv.tolist())],
                "const": e.d}
    if isinstance(e, PolynomialExpr):
        return {"type": "polynomial", "terms": [[[list(f) for f in mono], c] for mono, c in e.terms.items()]}
    if isinstance(e, EpsHullExpr):
        return {"type": "eps-hull", "y": e.y, "eps": e.eps, "body": expr_to_json(e.body)}
    raise TypeError(f"cannot serialize {type(e).__name__}")


def expr_from_json(doc: dict, n: int):
    kind = doc["type"]
    if kind == "quadratic":
        # stored values are the symmetrized upper triangle; the constructor halves off-diagonals
        quad = {(i, j): (v if i == j else 2.0 * v) for i, j, v in doc["quad"]}
        return QuadraticExpr(n, quad, {i: v for i, v in doc["lin"]}, doc["const"])
    if kind == "polynomial":
        return PolynomialExpr(n, [(tuple(tuple(f) for f in mono), c) for mono, c in doc["terms"]])
    if kind == "eps-hull":
        return EpsHullExpr(expr_from_json(doc["body"], n), doc["y"], doc["eps"])
    raise ModelFormatError([("/type", f"unknown expression type {kind!r}")])


def _var_json(v: Variable) -> dict:
    return {"name": v.name, "lower": _bound_out(v.lower), "upper": _bound_out(v.upper), "kind": v.kind}


def _var_from(d) -> Variable:
    return Variable(d["name"], _bound_in(d["lower"]), _bound_in(d["upper"]), d["kind"])


def _con_json(c: Constraint) -> dict:
    return {"name": c.name, "origin": c.origin, "body": expr_to_json(c.body)}


def _con_from(d, n) -> Constraint:
    return Constraint(expr_from_json(d["body"], n), d["name"], d["origin"])


def gdp_to_json(m: GdpModel) -> dict:
    return {
        "variables": [_var_json(v) for v in m.variables],
        "objective": expr_to_json(m.objective),
        "global_constraints": [_con_json(c) for c in m.global_constraints],
        "disjunctions": [{"name": d.name, "disjuncts": [
            {"indicator": dj.indicator, "constraints": [_con_json(c) for c in dj.constraints]}
            for dj in d.disjuncts]} for d in m.disjunctions],
        "logic": [{"positive": sorted(c.positive), "negative": sorted(c.negative)} for c in m.logic],
        "booleans": list(m.booleans),
    }


def gdp_from_json(d: dict, metadata: dict) -> GdpModel:
    n = len(d["variables"])
    return GdpModel(
        tuple(_var_from(v) for v in d["variables"]),
        expr_from_json(d["objective"], n),
        tuple(_con_from(c, n) for c in d["global_constraints"]),
        tuple(Disjunction(dd["name"], tuple(Disjunct(dj["indicator"], tuple(_con_from(c, n) for c in dj["constraints"]))
                                             for dj in dd["disjuncts"])) for dd in d["disjunctions"]),
        tuple(LogicClause(c["positive"], c["negative"]) for c in d["logic"]),
        tuple(d["booleans"]),
        metadata,
    )


def minlp_to_json(m: MinlpModel) -> dict:
    return {
        "variables": [_var_json(v) for v in m.variables],
        "objective": expr_to_json(m.objective),
        "linear": [{"name": r.name, "coefs": [[i, v] for i, v in r.coefs], "sense": r.sense, "rhs": r.rhs,
                    "source": list(r.source)} for r in m.linear],
        "rows": [{"name": r.name, "body": expr_to_json(r.body), "source": list(r.source)} for r in m.rows],
        "provenance": [[i, *role] for i, role in sorted(m.provenance.items())],
    }


def minlp_from_json(d: dict, metadata: dict) -> MinlpModel:
    n = len(d["variables"])
    return MinlpModel(
        tuple(_var_from(v) for v in d["variables"]),
        expr_from_json(d["objective"], n),
        tuple(LinearRow(tuple((i, v) for i, v in r["coefs"]), r["sense"], r["rhs"], r["name"], tuple(r["source"]))
              for r in d["linear"]),
        tuple(Row(as_body(expr_from_json(r["body"], n)), r["name"], tuple(r["source"])) for r in d["rows"]),
        {p[0]: tuple(p[1:]) for p in d["provenance"]},
        metadata,
    )


def to_document(model) -> dict:
    if isinstance(model, GdpModel):
        kind, payload = "gdp", gdp_to_json(model)
    elif isinstance(model, MinlpModel):
        kind, payload = "minlp", minlp_to_json(model)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return {"format": FORMAT, "format_version": FORMAT_VERSION, "kind": kind,
            "metadata": _jsonable(model.metadata), "model": payload}


def dumps(model) -> bytes:
    """Canonical bytes: sorted keys, compact separators, one trailing newline."""
    text = json.dumps(to_document(model), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return (text + "\n").encode("utf-8")


@lru_cache(maxsize=1)
def schema() -> dict:
    """The published document schema (also shipped under ``docs/schema``)."""
    return json.loads(resources.files("gdpq").joinpath("schema/model.schema.json").read_text())


@lru_cache(maxsize=1)
def _validator():
    # coefficient arrays dominate document size and per-item schema validation is slow,
    # so the structural pass relaxes them and _check_arrays enforces the same item rules
    relaxed = copy.deepcopy(schema())
    defs = relaxed["$defs"]
    for key, prop in (("quadratic", "quad"), ("quadratic", "lin"), ("polynomial", "terms")):
        defs[key]["properties"][prop] = {"type": "array"}
    return jsonschema.Draft202012Validator(relaxed)


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def _is_index(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool) and x >= 0


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _check_arrays(node, path, n, bad):
    """Item-level rules for coefficient arrays plus index range checks."""
    t = node.get("type")
    if t == "quadratic":
        for k, item in enumerate(node["quad"]):
            if not (isinstance(item, list) and len(item) == 3 and _is_index(item[0]) and _is_index(item[1])
                    and _is_number(item[2])):
                bad.append((f"{path}/quad/{k}", f"{item!r} is not an [index, index, number] triple"))
            elif max(item[0], item[1]) >= n:
                bad.append((f"{path}/quad/{k}", f"variable index outside dimension {n}"))
        for k, item in enumerate(node["lin"]):
            if not (isinstance(item, list) and len(item) == 2 and _is_index(item[0]) and _is_number(item[1])):
                bad.append((f"{path}/lin/{k}", f"{item!r} is not an [index, number] pair"))
            elif item[0] >= n:
                bad.append((f"{path}/lin/{k}", f"variable index outside dimension {n}"))
    elif t == "polynomial":
        for k, item in enumerate(node["terms"]):
            ok = isinstance(item, list) and len(item) == 2 and isinstance(item[0], list) and _is_number(item[1])
            ok = ok and all(isinstance(f, list) and len(f) == 2 and _is_index(f[0]) and _is_index(f[1]) and f[1] >= 1
                            for f in item[0])
            if not ok:
                bad.append((f"{path}/terms/{k}", f"{item!r} is not a [[[index, power], ...], number] term"))
            elif any(f[0] >= n for f in item[0]):
                bad.append((f"{path}/terms/{k}", f"variable index outside dimension {n}"))
    elif t == "eps-hull":
        if node["y"] >= n:
            bad.append((f"{path}/y", f"variable index outside dimension {n}"))
        _check_arrays(node["body"], f"{path}/body", n, bad)


def _expressions(model: dict, kind: str):
    """Yield ``(pointer, expression node)`` for every expression in a model payload."""
    yield "/model/objective", model["objective"]
    if kind == "gdp":
        for k, c in enumerate(model["global_constraints"]):
            yield f"/model/global_constraints/{k}/body", c["body"]
        for a, d in enumerate(model["disjunctions"]):
            for b, dj in enumerate(d["disjuncts"]):
                for k, c in enumerate(dj["constraints"]):
                    yield f"/model/disjunctions/{a}/disjuncts/{b}/constraints/{k}/body", c["body"]
    else:
        for k, r in enumerate(model["rows"]):
            yield f"/model/rows/{k}/body", r["body"]


def validate_document(doc) -> None:
    """Raise :class:`ModelFormatError` with JSON-pointer paths for every violation."""
    if isinstance(doc, dict) and "format_version" in doc and doc["format_version"] != FORMAT_VERSION:
        raise VersionMismatch([("/format_version",
                                f"unsupported version {doc['format_version']!r}, expected {FORMAT_VERSION}")])
    errors = sorted(_validator().iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        diags = []
        for e in errors:
            # for oneOf failures the deepest sub-error names the real problem
            best = max(e.context, key=lambda s: len(s.absolute_path)) if e.context else e
            diags.append((_pointer(best.absolute_path), best.message))
        raise ModelFormatError(diags)
    n = len(doc["model"]["variables"])
    bad: list = []
    for path, node in _expressions(doc["model"], doc["kind"]):
        _check_arrays(node, path, n, bad)
    for k, row in enumerate(doc["model"].get("linear", [])):
        for a, item in enumerate(row["coefs"]):
            if item[0] >= n:
                bad.append((f"/model/linear/{k}/coefs/{a}", f"variable index outside dimension {n}"))
    if bad:
        raise ModelFormatError(bad)


def loads(data):
    """Parse document bytes/str into a ``GdpModel`` or ``MinlpModel``."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ModelFormatError([("", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")]) from exc
    validate_document(doc)
    loader = gdp_from_json if doc["kind"] == "gdp" else minlp_from_json
    return loader(doc["model"], doc["metadata"])


def read_model(path):
    return loads(Path(path).read_bytes())


def write_model(model, path=None) -> bytes:
    data = dumps(model)
    if path is not None:
        Path(path).write_bytes(data)
    return data


# ---------------------------------------------------------------------------
# LP export
# ---------------------------------------------------------------------------


def lower_eps_rows(minlp: MinlpModel) -> MinlpModel:
    """Replace rational eps-hull rows by polynomial rows with the same zero sublevel set.

    Multiplying by ``D**(deg-1)`` with ``D = (1 - eps) y + eps >= eps > 0`` keeps
    the feasible set on ``y`` in ``[0, 1]``.  Lowered row names are listed in
    ``metadata["lowered_rows"]``.
    """
    rows, lowered = [], []
    for r in minlp.rows:
        if isinstance(r.body, EpsHullExpr):
            rows.append(Row(as_body(r.body.lowered()), r.name, r.source))
            lowered.append(r.name)
        else:
            rows.append(r)
    if not lowered:
        return minlp
    meta = dict(minlp.metadata)
    meta["lowered_rows"] = lowered
    meta["lowering"] = "multiplied by ((1-eps)*y+eps)^(deg-1)"
    return MinlpModel(minlp.variables, minlp.objective, minlp.linear, tuple(rows), minlp.provenance, meta)


_BAD_CHARS = re.compile(r"[^A-Za-z0-9_]")


def sanitize_names(names) -> list[str]:
    """Map names to unique ``[A-Za-z0-9_]`` identifiers that start with a letter or underscore."""
    out, seen = [], set()
    for name in names:
        s = _BAD_CHARS.sub("_", name) or "_"
        s = s.rstrip("_") or s
        if s[0].isdigit():
            s = "n" + s
        base, k = s, 1
        while s in seen:
            k += 1
            s = f"{base}_{k}"
        seen.add(s)
        out.append(s)
    return out


def _num(x: float) -> str:
    return repr(float(x)).replace("inf", "infinity") if math.isinf(x) else repr(float(x))


def _term(coef: float, body: str, first: bool) -> str:
    sign = "-" if coef < 0 else "+"
    mag = abs(coef)
    txt = body if mag == 1.0 and body else (f"{_num(mag)} {body}" if body else _num(mag))
    return (f"- {txt}" if sign == "-" else txt) if first else f"{sign} {txt}"


def _wrap(tokens, indent="   ", width=8) -> str:
    lines = [" ".join(tokens[i:i + width]) for i in range(0, len(tokens), width)]
    return f"\n{indent}".join(lines)


def _quad_terms(q: QuadraticExpr, names, scale: float) -> list[str]:
    out = []
    for i, j, v in zip(q.qi.tolist(), q.qj.tolist(), q.qv.tolist()):
        coef = scale * (v if i == j else 2.0 * v)
        body = f"{names[i]} ^2" if i == j else f"{names[i]} * {names[j]}"
        out.append(_term(coef, body, not out))
    return out


def _lin_terms(pairs, names) -> list[str]:
    out = []
    for i, v in pairs:
        out.append(_term(v, names[i], not out))
    return out


def _expr_line(q: QuadraticExpr, names, objective: bool) -> list[str]:
    tokens = _lin_terms(zip(q.ci.tolist(), q.cv.tolist()), names)
    quad = _quad_terms(q, names, 2.0 if objective else 1.0)
    if quad:
        if tokens:
            tokens.append("+")
        tokens += ["["] + quad + (["]", "/", "2"] if objective else ["]"])
    return tokens


def export_lp(minlp: MinlpModel) -> str:
    """Deterministic LP-style text (CPLEX LP dialect with bracketed quadratic terms)."""
    m = lower_eps_rows(minlp)
    for r in m.rows:
        if r.body.degree > 2:
            raise ExportError(f"row {r.name!r} has degree {r.body.degree}; use the JSON format")
    names = sanitize_names(v.name for v in m.variables)
    row_names = sanitize_names([r.name or f"r{k}" for k, r in enumerate(m.all_rows())])
    out = ["\\ gdpq LP export", f"\\ method: {m.metadata.get('transform', {}).get('method', 'n/a')}"]
    if m.metadata.get("lowered_rows"):
        out.append(f"\\ lowered eps rows: {len(m.metadata['lowered_rows'])}")
    obj = _expr_line(m.objective, names, objective=True)
    if m.objective.d != 0.0:
        obj.append(_term(m.objective.d, "", not obj))
    if not obj:
        obj = ["0", names[0]] if names else ["0"]
    out += ["MINIMIZE", f" obj: {_wrap(obj)}", "SUBJECT TO"]
    k = 0
    for r in m.linear:
        toks = _lin_terms(r.coefs, names) or ["0", names[0]]
        sense = {"<=": "<=", ">=": ">=", "==": "="}[r.sense]
        out.append(f" {row_names[k]}: {_wrap(toks)} {sense} {_num(r.rhs)}")
        k += 1
    for r in m.rows:
        q = r.body.to_quadratic()
        toks = _expr_line(q, names, objective=False) or ["0", names[0]]
        out.append(f" {row_names[k]}: {_wrap(toks)} <= {_num(-q.d + 0.0)}")
        k += 1
    out.append("BOUNDS")
    for name, v in zip(names, m.variables):
        if v.kind == "binary":
            continue
        if math.isinf(v.lower) and math.isinf(v.upper):
            out.append(f" {name} free")
        else:
            out.append(f" {_num(v.lower)} <= {name} <= {_num(v.upper)}")
    bins = [name for name, v in zip(names, m.variables) if v.kind == "binary"]
    if bins:
        out += ["BINARY", " " + _wrap(bins, indent=" ", width=10)]
    out.append("END")
    return "\n".join(out) + "\n"
