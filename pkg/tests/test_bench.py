import csv
import io as _io
import json

import numpy as np
import pytest

from conftest import small_random, two_disjunct_toy
from gdpq import io
from gdpq.bench import (
    CSV_COLUMNS,
    BenchRecord,
    ManifestError,
    SuiteManifest,
    disjunct_anchors,
    performance_profile,
    profile_value,
    records_csv,
    run_suite,
    simplex_samples,
    summary,
    tightness_proxy,
    wrong_records,
)
from gdpq.gen import CstrParams, gen_cstr
from gdpq.oracle import gdp_residual
from gdpq.reform import reformulate

RANDOM_SUITE = {
    "seed": 0,
    "instances": [{"id": f"r{s}", "generator": "random",
                   "params": {"n_dims": 3, "n_disjunctions": 3, "disjuncts_per": 3, "constraints_per": 2, "seed": s}}
                  for s in range(4)],
    "methods": ["bigm", "hull-exact", {"method": "hull-eps", "eps": 1e-4}, "binary-mult"],
    "checks": ["binary-fix"],
    "samples": {"binary_fix": 50, "binary_fix_assignments": 3},
}


def rec(instance, method, status="optimal", obj=1.0, t=1.0):
    return {"instance": instance, "method": method, "solver_status": status, "solver_objective": obj,
            "solver_seconds": t}


class TestProfile:
    def test_steps(self):
        rs = [rec("a", "m", t=1), rec("b", "m", t=2), rec("c", "m", t=4)]
        assert performance_profile(rs) == {"m": [(1.0, 1), (2.0, 2), (4.0, 3)]}

    def test_ties_and_evaluation(self):
        steps = performance_profile([rec("a", "m", t=2), rec("b", "m", t=2), rec("c", "m", t=3)])["m"]
        assert steps == [(2.0, 2), (3.0, 3)]
        assert [profile_value(steps, t) for t in (1, 2, 2.5, 10)] == [0, 2, 2, 3]

    def test_wrong_excluded(self):
        rs = [rec("a", "m1", obj=100.0, t=1), rec("a", "m2", obj=100.5, t=0.5), rec("b", "m2", t=2)]
        assert wrong_records(rs) == {1}
        prof = performance_profile(rs)
        assert prof == {"m1": [(1.0, 1)], "m2": [(2.0, 1)]}

    def test_time_limit_and_status(self):
        rs = [rec("a", "m", t=5), rec("b", "m", status="time-limit", obj=None, t=9)]
        assert performance_profile(rs, time_limit=4) == {"m": []}

    def test_empty(self):
        assert performance_profile([]) == {}

    def test_reformulation_timing_fallback(self):
        rs = [BenchRecord("a", "m", reform_seconds=0.1), BenchRecord("b", "m", reform_seconds=0.2, error="boom")]
        assert performance_profile(rs) == {"m": [(0.1, 1)]}


class TestTightness:
    def test_simplex_samples(self, rng):
        ys = simplex_samples(rng, 3, 5)
        assert ys.shape == (5, 3 + 32, 3)
        assert np.allclose(ys.sum(axis=2), 1) and np.all(ys >= 0)
        assert np.allclose(ys[:, :3], np.eye(3))
        assert np.all(np.sum(ys[:, 3:19] > 0, axis=2) == 2)

    def test_anchors_inside(self):
        gdp = small_random(2)
        anchors = disjunct_anchors(gdp, 0)
        for d in gdp.disjunctions:
            for dj in d.disjuncts:
                assert anchors[dj.indicator].shape[1] == gdp.n
                assert len(anchors[dj.indicator]) > 1
                assert np.all(gdp_residual(gdp, anchors[dj.indicator], {dj.indicator}) <= 1e-8)

    def test_ordering_on_toy(self):
        gdp = two_disjunct_toy()
        anchors = disjunct_anchors(gdp, 0)
        vals = {m: tightness_proxy(gdp, reformulate(gdp, m)[0], 4000, 0, anchors)
                for m in ("hull-exact", "hull-eps", "bigm", "binary-mult")}
        assert vals["hull-exact"][0] <= vals["hull-eps"][0] <= vals["bigm"][0]
        # the hull of two discs is strictly larger than their union
        assert vals["hull-exact"][0] > vals["binary-mult"][0]
        # union area / box area = 2 pi / 100
        assert vals["binary-mult"][0] == pytest.approx(2 * np.pi / 100, abs=4 * vals["binary-mult"][1])

    def test_logic_not_applicable(self):
        gdp = gen_cstr(CstrParams(NT=1))
        assert tightness_proxy(gdp, reformulate(gdp, "bigm")[0], 10, 0) is None


class TestSuite:
    def test_random_suite(self):
        records = run_suite(SuiteManifest.from_dict(RANDOM_SUITE))
        assert len(records) == 16
        assert [(r.instance, r.method) for r in records] == sorted((r.instance, r.method) for r in records)
        assert all(r.error == "" and r.checks == "binary-fix:pass" for r in records)
        by = {(r.instance, r.method): r for r in records}
        for s in range(4):
            big = by[(f"r{s}", "bigm")]
            for m in ("hull-exact", "hull-eps"):
                hull = by[(f"r{s}", m)]
                assert hull.n_vars > big.n_vars
                # count identity: variables = continuous + binary, disaggregated copies are continuous
                assert hull.n_vars == hull.n_continuous + hull.n_binary
                assert hull.n_continuous == big.n_continuous + hull.n_disaggregated
            assert big.n_binary == 9

    def test_csv(self):
        records = run_suite(SuiteManifest.from_dict({**RANDOM_SUITE, "instances": RANDOM_SUITE["instances"][:1],
                                                     "checks": ["tightness"], "samples": {"tightness": 500}}))
        rows = list(csv.DictReader(_io.StringIO(records_csv(records))))
        assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 4
        assert all(0 <= float(r["tightness"]) <= 1 for r in rows)
        s = summary(records)
        assert set(s["methods"]) == {"bigm", "binary-mult", "hull-eps", "hull-exact"}

    def test_error_isolated(self, monkeypatch):
        import gdpq.bench as bench

        manifest = SuiteManifest.from_dict({**RANDOM_SUITE, "methods": ["hull-exact", "bigm"],
                                            "instances": RANDOM_SUITE["instances"][:1], "checks": []})
        original = bench.reformulate

        def flaky(gdp, config):
            if config.method == "bigm":
                raise RuntimeError("boom")
            return original(gdp, config)

        monkeypatch.setattr(bench, "reformulate", flaky)
        errs = {r.method: r.error for r in run_suite(manifest)}
        assert errs == {"bigm": "RuntimeError: boom", "hull-exact": ""}

    def test_path_instances(self, tmp_path):
        io.write_model(two_disjunct_toy(), tmp_path / "toy.json")
        doc = {"instances": [{"id": "toy", "path": "toy.json"}], "methods": ["bigm"]}
        (tmp_path / "suite.json").write_text(json.dumps(doc))
        assert SuiteManifest.load(tmp_path / "suite.json").instances[0][0] == "toy"


class TestManifestErrors:
    @pytest.mark.parametrize("doc, match", [
        ({"instances": [], "methods": ["bigm"]}, "at least one"),
        ({"instances": [{"id": "x", "generator": "nope"}], "methods": ["bigm"]}, r"instances\[0\]"),
        ({"instances": [{"id": "x", "path": "missing.json"}], "methods": ["bigm"]}, r"instances\[0\]"),
        ({"instances": RANDOM_SUITE["instances"][:1], "methods": ["magic"]}, r"methods\[0\]"),
        ({"instances": RANDOM_SUITE["instances"][:1], "methods": [{"method": "hull-eps", "eps": 0}]}, "eps"),
        ({"instances": RANDOM_SUITE["instances"][:1], "methods": ["bigm"], "checks": ["vibes"]}, "unknown checks"),
    ])
    def test_fail_fast(self, doc, match, tmp_path):
        with pytest.raises(ManifestError, match=match):
            SuiteManifest.from_dict(doc, tmp_path)
