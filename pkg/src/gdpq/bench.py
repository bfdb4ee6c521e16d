"""Benchmark runner: model sizes, reformulation timing, relaxation-tightness proxy, profiles.

The tightness proxy is the Monte-Carlo fraction of uniform box points ``x``
for which a witness of the continuous relaxation is found.  Witnesses are
searched on common random numbers so that methods are compared on exactly the
same candidates:

* per disjunction, the indicator vector ``y`` runs over the simplex vertices
  plus 32 samples, half on edges and half from a Dirichlet law;
* every disjunct ``i`` has a few anchor points inside it (the point minimizing
  its maximum violation and coordinate-wise extreme points); each candidate
  draws one of them as ``a_i``;
* for each ``y`` and each "absorbing" disjunct ``i*``, copies are
  ``v_i = y_i a_i`` for ``i != i*`` and ``v_i* = x - sum_{i != i*} y_i a_i``.

``x`` counts as relaxation-feasible when every disjunction has a candidate
satisfying all of that disjunction's MINLP rows (and globals hold at ``x``).
Methods without copies (Big-M, binary multiplication) simply ignore ``v``.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import tempfile
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .gen import ClayInstance, CstrParams, KmeansParams, RandomGdpParams, gen_clay, gen_cstr, gen_kmeans, gen_random
from .model import FEAS_TOL, GdpError, GdpModel, MinlpModel
from .oracle import consistent_assignments, fixed_binary_check
from .reform import ReformConfig, reformulate

N_SIMPLEX_SAMPLES = 32
WRONG_REL_GAP = 1e-4

CSV_COLUMNS = (
    "instance", "method", "n_vars", "n_continuous", "n_binary", "n_disaggregated", "n_glover", "n_linear_rows",
    "n_quadratic_rows", "quad_nonzeros", "timing_column", "reform_seconds", "tightness", "tightness_stderr",
    "checks", "error", "solver_status", "solver_objective", "solver_bound", "solver_seconds",
)


class ManifestError(GdpError, ValueError):
    pass


# ---------------------------------------------------------------------------
# tightness proxy
# ---------------------------------------------------------------------------


def _slsqp(fun, jac, x0, bounds, cons):
    res = minimize(fun, x0, jac=jac, method="SLSQP", bounds=bounds, constraints=cons,
                   options={"maxiter": 200, "ftol": 1e-12})
    return res.x


def disjunct_anchors(gdp: GdpModel, seed: int = 0, starts: int = 4) -> dict:
    """Per indicator, an ``(L, n)`` array of points inside the disjunct.

    Row 0 minimizes the disjunct's maximum constraint value; the remaining rows
    are extreme points along each coordinate direction of the disjunction's
    support (coordinate-wise enumeration), kept only when feasible.
    """
    rng = np.random.default_rng(seed)
    lo, hi = gdp.lower, gdp.upper
    box = list(zip(lo, hi))
    seeds = [0.5 * (lo + hi)] + [np.asarray(p, dtype=float) for p in gdp.metadata.get("feasible_points", [])]
    anchors = {}
    for d in gdp.disjunctions:
        support = sorted({i for dj in d.disjuncts for c in dj.constraints for i in c.body.variables()})
        for dj in d.disjuncts:
            cons = [c.body for c in dj.constraints]
            if not cons:
                anchors[dj.indicator] = np.array([seeds[0]])
                continue

            def worst(x):
                return max(float(b.evaluate(x)) for b in cons)

            best = min(seeds, key=worst)
            best_val = worst(best)
            if best_val > 0:
                # epigraph form: min s  s.t.  h_j(x) <= s
                epi = [{"type": "ineq", "fun": (lambda z, b=b: z[-1] - b.evaluate(z[:-1])),
                        "jac": (lambda z, b=b: np.append(-b.gradient(z[:-1]), 1.0))} for b in cons]
                e_last = np.eye(gdp.n + 1)[-1]
                for x0 in [best] + [lo + rng.random(gdp.n) * (hi - lo) for _ in range(starts)]:
                    z = _slsqp(lambda z: z[-1], lambda z: e_last, np.append(x0, worst(x0)), box + [(None, None)], epi)
                    x = np.clip(z[:-1], lo, hi)
                    if worst(x) < best_val:
                        best, best_val = x, worst(x)
                    if best_val <= 0:
                        break
            points = [best]
            if best_val <= 0:
                feas = [{"type": "ineq", "fun": (lambda x, b=b: -b.evaluate(x)), "jac": (lambda x, b=b: -b.gradient(x))}
                        for b in cons]
                for i in support:
                    for sign in (1.0, -1.0):
                        e = np.zeros(gdp.n)
                        e[i] = sign
                        x = np.clip(_slsqp(lambda x, e=e: e @ x, lambda x, e=e: e, best, box, feas), lo, hi)
                        if worst(x) <= 0:
                            points.append(x)
            anchors[dj.indicator] = np.array(points)
    return anchors


def simplex_samples(rng, m: int, n: int, k: int = N_SIMPLEX_SAMPLES) -> np.ndarray:
    """``(n, m + k, m)`` indicator vectors: the vertices, then k samples, half on edges and half interior."""
    vertices = np.broadcast_to(np.eye(m), (n, m, m))
    if m == 1:
        return np.ones((n, 1 + k, 1))
    n_edge = k // 2
    edge = np.zeros((n, n_edge, m))
    a = rng.integers(m, size=(n, n_edge))
    b = (a + rng.integers(1, m, size=(n, n_edge))) % m
    t = rng.random((n, n_edge))
    np.put_along_axis(edge, a[..., None], t[..., None], axis=2)
    np.put_along_axis(edge, b[..., None], (1 - t)[..., None], axis=2)
    interior = rng.dirichlet(np.ones(m), size=(n, k - n_edge))
    return np.concatenate([vertices, edge, interior], axis=1)


def _disjunction_rows(minlp: MinlpModel, name: str):
    return [r for r in minlp.all_rows()
            if len(r.source) > 1 and r.source[1] == name and r.source[0] in ("disjunct", "bound", "link", "glover",
                                                                               "xor")]


def tightness_proxy(gdp: GdpModel, minlp: MinlpModel, n_samples: int = 10_000, seed: int = 0,
                    anchors: dict | None = None, tol: float = FEAS_TOL, chunk: int = 1024):
    """Feasible fraction and its binomial standard error; ``None`` when logic couples disjunctions."""
    if gdp.logic or gdp.booleans:
        return None
    anchors = anchors if anchors is not None else disjunct_anchors(gdp, seed)
    rng = np.random.default_rng(seed)
    lo, hi = gdp.lower, gdp.upper
    X = lo + rng.random((n_samples, gdp.n)) * (hi - lo)
    ys = [simplex_samples(rng, len(d.disjuncts), n_samples) for d in gdp.disjunctions]
    picks = [rng.random(y.shape) for y in ys]  # anchor choice per (sample, y, disjunct)

    ok = np.ones(n_samples, dtype=bool)
    for con in gdp.global_constraints:
        ok &= con.body.evaluate(X) <= tol

    x_idx = {}
    for i, role in minlp.provenance.items():
        if role[0] in ("original", "aux-norm"):
            x_idx[gdp.var_index(minlp.variables[i].name)] = i
    y_idx = minlp.indicator_index()
    copies = {}  # indicator -> [(gdp var index, v index, z index or None)]
    zs = {(role[1], role[2]): i for i, role in minlp.provenance.items() if role[0] == "glover"}
    for i, role in minlp.provenance.items():
        if role[0] == "disaggregated":
            copies.setdefault(role[2], []).append((gdp.var_index(role[1]), i, zs.get((role[1], role[2]))))

    for k, d in enumerate(gdp.disjunctions):
        rows = _disjunction_rows(minlp, d.name)
        inds = [dj.indicator for dj in d.disjuncts]
        m = len(inds)
        live = np.flatnonzero(ok)  # samples already excluded need no witness
        found = np.zeros(n_samples, dtype=bool)
        for s0 in range(0, len(live), chunk):
            sl = live[s0:s0 + chunk]
            Xc, Y = X[sl], ys[k][sl]  # (c, n), (c, C, m)
            c, C = Y.shape[:2]
            P = c * C * m
            # candidates flattened over (sample, y, absorbing disjunct); column-major for fast column access
            full = np.zeros((P, minlp.n), order="F")
            for g, j in x_idx.items():
                full[:, j] = np.repeat(Xc[:, g], C * m)
            for i, ind in enumerate(inds):
                full[:, y_idx[ind]] = np.repeat(Y[:, :, i].ravel(), m)
            wa = np.empty((c, C, m, gdp.n))  # y_i a_i
            for i, ind in enumerate(inds):
                pts = anchors[ind]
                choice = (picks[k][sl][:, :, i] * len(pts)).astype(int)
                wa[:, :, i, :] = Y[:, :, i, None] * pts[choice]
            total = wa.sum(axis=2)
            for i, ind in enumerate(inds):
                for g, v, z in copies.get(ind, []):
                    val = np.repeat(wa[:, :, i, g][..., None], m, axis=2)
                    val[:, :, i] = Xc[:, None, g] - (total[:, :, g] - wa[:, :, i, g])
                    full[:, v] = val.ravel()
                    if z is not None:
                        full[:, z] = full[:, v] * full[:, y_idx[ind]]
            worst = np.full(P, -np.inf)
            for r in rows:
                worst = np.maximum(worst, r.residual(full))
            found[sl] = np.any((worst <= tol).reshape(c, C * m), axis=1)
        ok &= found
    p = float(np.mean(ok)) if n_samples else 0.0
    return p, math.sqrt(p * (1 - p) / max(n_samples, 1))


# ---------------------------------------------------------------------------
# manifest and records
# ---------------------------------------------------------------------------


@dataclass
class BenchRecord:
    instance: str
    method: str
    n_vars: int = 0
    n_continuous: int = 0
    n_binary: int = 0
    n_disaggregated: int = 0
    n_glover: int = 0
    n_linear_rows: int = 0
    n_quadratic_rows: int = 0
    quad_nonzeros: int = 0
    timing_column: str = "reformulation"
    reform_seconds: float = 0.0
    tightness: float | None = None
    tightness_stderr: float | None = None
    checks: str = ""
    error: str = ""
    solver_status: str | None = None
    solver_objective: float | None = None
    solver_bound: float | None = None
    solver_seconds: float | None = None

    def row(self) -> dict:
        return {k: ("" if v is None else v) for k, v in asdict(self).items()}


@dataclass
class SuiteManifest:
    instances: list  # [(id, GdpModel)]
    configs: list  # [ReformConfig]
    checks: tuple = ()
    seed: int = 0
    tightness_samples: int = 10_000
    binary_fix_samples: int = 200
    binary_fix_assignments: int = 8
    solver: object = None  # SolverRun

    @classmethod
    def from_dict(cls, doc: dict, base: Path | None = None) -> SuiteManifest:
        """Resolve every entry up front; any failure raises :class:`ManifestError`."""
        from .io import read_model
        from .solver import SolverRun

        base = Path(base or ".")
        instances = []
        for k, spec in enumerate(doc.get("instances", [])):
            iid = spec.get("id", f"instance-{k}")
            try:
                if "path" in spec:
                    model = read_model(base / spec["path"])
                else:
                    model = build_instance(spec["generator"], spec.get("params", {}), base)
            except Exception as exc:  # noqa: BLE001 - any resolution problem is a manifest error
                raise ManifestError(f"instances[{k}] ({iid}): {exc}") from exc
            if not isinstance(model, GdpModel):
                raise ManifestError(f"instances[{k}] ({iid}): not a GDP model")
            instances.append((iid, model))
        configs = []
        for k, m in enumerate(doc.get("methods", [])):
            try:
                configs.append(ReformConfig(m) if isinstance(m, str) else ReformConfig(**m))
            except (TypeError, ValueError) as exc:
                raise ManifestError(f"methods[{k}]: {exc}") from exc
        if not instances or not configs:
            raise ManifestError("manifest needs at least one instance and one method")
        checks = tuple(doc.get("checks", ()))
        unknown = set(checks) - {"binary-fix", "tightness"}
        if unknown:
            raise ManifestError(f"unknown checks {sorted(unknown)}")
        solver = SolverRun(**doc["solver"]) if doc.get("solver") else None
        samples = doc.get("samples", {})
        return cls(instances, configs, checks, int(doc.get("seed", 0)), int(samples.get("tightness", 10_000)),
                   int(samples.get("binary_fix", 200)), int(samples.get("binary_fix_assignments", 8)), solver)

    @classmethod
    def load(cls, path) -> SuiteManifest:
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), path.parent)


def build_instance(generator: str, params: dict, base: Path = Path(".")) -> GdpModel:
    if generator == "random":
        return gen_random(RandomGdpParams(**params))
    if generator == "kmeans":
        p = dict(params)
        if p.get("points") is not None:
            p["points"] = tuple(map(tuple, p["points"]))
        return gen_kmeans(KmeansParams(**p))
    if generator == "cstr":
        p = dict(params)
        if "C0" in p:
            p["C0"] = tuple(map(tuple, p["C0"]))
        return gen_cstr(CstrParams(**p))
    if generator == "clay":
        return gen_clay(ClayInstance.from_json(base / params["instance"], params.get("norm")))
    raise ManifestError(f"unknown generator {generator!r}")


def quad_nonzeros(minlp: MinlpModel) -> int:
    total = int(minlp.objective.qv.size)
    for r in minlp.rows:
        body = r.body.body if hasattr(r.body, "body") else r.body
        total += sum(1 for mono in body.to_polynomial().terms if sum(p for _, p in mono) >= 2)
    return total


def _run_one(iid: str, gdp: GdpModel, config: ReformConfig, manifest: SuiteManifest, anchors) -> BenchRecord:
    rec = BenchRecord(iid, config.method)
    try:
        t0 = time.perf_counter()
        minlp, report = reformulate(gdp, config)
        rec.reform_seconds = time.perf_counter() - t0
        c = report.counts
        rec.n_vars = minlp.n
        rec.n_continuous, rec.n_binary = c["continuous_vars"], c["binary_vars"]
        rec.n_disaggregated, rec.n_glover = c["disaggregated_vars"], c["glover_vars"]
        rec.n_linear_rows, rec.n_quadratic_rows = c["linear_rows"], c["quadratic_rows"]
        rec.quad_nonzeros = quad_nonzeros(minlp)
        verdicts = []
        if "binary-fix" in manifest.checks:
            clean = True
            for a, active in enumerate(consistent_assignments(gdp, limit=manifest.binary_fix_assignments)):
                rep = fixed_binary_check(gdp, minlp, active, manifest.binary_fix_samples, manifest.seed + a)
                clean &= rep.clean
            verdicts.append(f"binary-fix:{'pass' if clean else 'fail'}")
        if "tightness" in manifest.checks:
            res = tightness_proxy(gdp, minlp, manifest.tightness_samples, manifest.seed, anchors)
            if res is None:
                verdicts.append("tightness:n/a")
            else:
                rec.tightness, rec.tightness_stderr = res
        rec.checks = ";".join(verdicts)
        if manifest.solver is not None:
            from .io import export_lp
            from .solver import run_external_solver

            with tempfile.TemporaryDirectory() as tmp:
                lp = Path(tmp) / "model.lp"
                lp.write_text(export_lp(minlp))
                res = run_external_solver(lp, manifest.solver)
            rec.timing_column = "solver"
            rec.solver_status, rec.solver_objective = res.status, res.objective
            rec.solver_bound, rec.solver_seconds = res.bound, res.seconds
    except Exception as exc:  # noqa: BLE001 - failures are isolated per record
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def run_suite(manifest: SuiteManifest) -> list[BenchRecord]:
    """One record per (instance, method), ordered by instance id then method."""
    records = []
    for iid, gdp in sorted(manifest.instances, key=lambda t: t[0]):
        anchors = None
        if "tightness" in manifest.checks and not (gdp.logic or gdp.booleans):
            anchors = disjunct_anchors(gdp, manifest.seed)
        for config in sorted(manifest.configs, key=lambda c: c.method):
            records.append(_run_one(iid, gdp, config, manifest, anchors))
    return records


def records_csv(records) -> str:
    buf = _io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def summary(records, time_limit: float = math.inf) -> dict:
    by_method: dict = {}
    for r in records:
        s = by_method.setdefault(r.method, {"records": 0, "errors": 0, "mean_vars": 0.0, "tightness": []})
        s["records"] += 1
        s["errors"] += bool(r.error)
        s["mean_vars"] += r.n_vars
        if r.tightness is not None:
            s["tightness"].append(r.tightness)
    for s in by_method.values():
        s["mean_vars"] /= max(s["records"], 1)
        t = s.pop("tightness")
        s["mean_tightness"] = float(np.mean(t)) if t else None
    return {"methods": by_method, "profile": {m: [list(p) for p in steps] for m, steps in
                                              performance_profile(records, time_limit).items()}}


# ---------------------------------------------------------------------------
# performance profile
# ---------------------------------------------------------------------------


def _get(r, key):
    return r.get(key) if isinstance(r, dict) else getattr(r, key, None)


def wrong_records(records) -> set:
    """Indices of records whose objective exceeds the per-instance best by more than 1e-4 relative."""
    best: dict = {}
    for r in records:
        obj = _get(r, "solver_objective")
        if obj is not None and _get(r, "solver_status") in ("optimal", "feasible-limit"):
            inst = _get(r, "instance")
            best[inst] = min(best.get(inst, math.inf), obj)
    wrong = set()
    for k, r in enumerate(records):
        obj = _get(r, "solver_objective")
        if obj is None or _get(r, "solver_status") != "optimal":
            continue
        b = best[_get(r, "instance")]
        if (obj - b) / max(abs(b), 1e-10) > WRONG_REL_GAP:
            wrong.add(k)
    return wrong


def performance_profile(records, time_limit: float = math.inf) -> dict:
    """Per method, the non-decreasing step function ``[(t, #solved by t), ...]``.

    With solver fields a record counts when its status is optimal, it is not
    flagged wrong, and its solver time is within ``time_limit``; otherwise the
    reformulation time of error-free records is used.
    """
    wrong = wrong_records(records)
    times: dict = {}
    for k, r in enumerate(records):
        method = _get(r, "method")
        times.setdefault(method, [])
        if _get(r, "solver_status") is not None:
            if _get(r, "solver_status") != "optimal" or k in wrong:
                continue
            t = _get(r, "solver_seconds")
        else:
            if _get(r, "error"):
                continue
            t = _get(r, "reform_seconds")
        if t is not None and t <= time_limit:
            times[method].append(float(t))
    profile = {}
    for method, ts in sorted(times.items()):
        steps = []
        for count, t in enumerate(sorted(ts), start=1):
            if steps and steps[-1][0] == t:
                steps[-1] = (t, count)
            else:
                steps.append((t, count))
        profile[method] = steps
    return profile


def profile_value(steps, t: float) -> int:
    """Right-continuous evaluation of a profile step function."""
    n = 0
    for s, c in steps:
        if s <= t:
            n = c
        else:
            break
    return n
