"""HTTP API behavior via the in-process test client."""
import time

import pytest
from fastapi.testclient import TestClient

from audiocert import __version__
from audiocert.service.app import app

from support import write_corpus, write_dataset

client = TestClient(app)


def wait_for(job_id, timeout=60.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        record = client.get(f"/jobs/{job_id}").json()
        if record["status"] in ("done", "failed"):
            return record
        time.sleep(0.05)
    raise AssertionError(f"job {job_id} did not finish within {timeout}s")


def job_table(manifest_name, *, n=40, k=3, seed=3):
    return {
        "mode": "transform",
        "dataset": manifest_name,
        "scorer": "centroid",
        "seed": seed,
        "budget": {"n": n, "k": k},
        "transform": {"kind": "gaussian_noise", "sigma": [0.0005, 0.02]},
    }


class TestHealth:
    def test_health(self):
        body = client.get("/health").json()
        assert body == {"status": "ok", "version": __version__}


class TestCertifyScores:
    def test_constant_scores_degenerate(self):
        scores = [[0.9] * 25] * 4
        resp = client.post("/certify/scores", json={
            "scores": scores, "n": 25, "k": 4, "delta": 0.9,
            "epsilons": [1e-5, 0.05], "direction": "bona_fide"})
        assert resp.status_code == 200
        certs = resp.json()["certificates"]
        assert len(certs) == 2
        head = certs[0]
        assert head["degenerate"]
        assert head["error_prob"] == 0.0
        assert head["cv_method"] == "degenerate"

    def test_bound_value(self):
        import math
        resp = client.post("/certify/scores", json={
            "scores": [[0.9] * 100], "n": 100, "k": 1, "delta": 0.9,
            "epsilons": [1e-5]})
        head = resp.json()["certificates"][0]
        assert head["bound"] == pytest.approx(math.exp(-20.0) / 0.9, rel=1e-12)
        assert head["t_star"] == -50.0
        assert head["certified"] is True

    def test_spoof_direction(self):
        import math
        resp = client.post("/certify/scores", json={
            "scores": [[0.0] * 100], "n": 100, "k": 1, "delta": 0.9,
            "epsilons": [1e-5], "direction": "spoof"})
        head = resp.json()["certificates"][0]
        assert head["direction"] == "spoof"
        assert head["bound"] == pytest.approx(math.exp(-25.0) / 0.9, rel=1e-12)

    def test_shape_mismatch_is_422(self):
        resp = client.post("/certify/scores", json={
            "scores": [[0.5] * 10], "n": 25, "k": 4, "epsilons": [1e-3]})
        assert resp.status_code == 422

    def test_bad_epsilon_is_422(self):
        resp = client.post("/certify/scores", json={
            "scores": [[0.5] * 10], "n": 10, "k": 1, "epsilons": [2.0]})
        assert resp.status_code == 422


class TestJobs:
    def test_transform_job_lifecycle(self, tmp_path):
        man = write_dataset(tmp_path, 4)
        resp = client.post("/jobs", json={
            "job": job_table(man.name), "base_dir": str(tmp_path)})
        assert resp.status_code == 202
        job_id = resp.json()["job_id"]
        record = wait_for(job_id)
        assert record["status"] == "done", record["error"]
        report = record["reports"][0]
        assert report["mode"] == "transform"
        assert len(report["items"]) == 4
        assert record["artifacts"]["report.csv"].startswith("index,")
        assert "[aggregate]" in record["artifacts"]["report.txt"]
        assert "config_echo" in record["artifacts"]

    def test_report_csv_endpoint(self, tmp_path):
        man = write_dataset(tmp_path, 3)
        job_id = client.post("/jobs", json={
            "job": job_table(man.name), "base_dir": str(tmp_path)}).json()["job_id"]
        record = wait_for(job_id)
        csv_body = client.get(f"/jobs/{job_id}/report.csv")
        assert csv_body.status_code == 200
        assert csv_body.text == record["artifacts"]["report.csv"]
        txt_body = client.get(f"/jobs/{job_id}/report.txt")
        assert txt_body.text == record["artifacts"]["report.txt"]

    def test_overrides_apply(self, tmp_path):
        man = write_dataset(tmp_path, 3)
        job_id = client.post("/jobs", json={
            "job": job_table(man.name), "base_dir": str(tmp_path),
            "overrides": ["budget.n=20", "budget.k=2"]}).json()["job_id"]
        record = wait_for(job_id)
        assert record["status"] == "done", record["error"]
        assert record["reports"][0]["budget"]["n"] == 20
        assert record["reports"][0]["config_echo"]["budget"]["n"] == 20

    def test_corpus_job(self, tmp_path):
        man = write_corpus(tmp_path, {"gen": 70})
        table = {"mode": "corpus", "corpus": man.name, "scorer": "constant:1.0",
                 "seed": 1, "budget": {"n": 30, "k": 2}}
        job_id = client.post("/jobs", json={
            "job": table, "base_dir": str(tmp_path)}).json()["job_id"]
        record = wait_for(job_id)
        assert record["status"] == "done", record["error"]
        report = record["reports"][0]
        assert report["binary_pca"] is not None
        assert all(report["binary_pca"].values())

    def test_sweep_job(self, tmp_path):
        man = write_dataset(tmp_path, 2)
        table = job_table(man.name, n=60, k=2)
        table["sweep"] = {"splits": [[120, 1], [60, 2]]}
        job_id = client.post("/jobs", json={
            "job": table, "base_dir": str(tmp_path)}).json()["job_id"]
        record = wait_for(job_id)
        assert record["status"] == "done", record["error"]
        assert [r["split_label"] for r in record["reports"]] == ["n=120,k=1", "n=60,k=2"]
        assert record["artifacts"]["report.txt"].startswith("[[split]]")

    def test_config_error_reported(self, tmp_path):
        job_id = client.post("/jobs", json={
            "job": {"mode": "nonsense"}, "base_dir": str(tmp_path)}).json()["job_id"]
        record = wait_for(job_id)
        assert record["status"] == "failed"
        assert record["error_kind"] == "config"
        assert "mode" in record["error"]

    def test_scorer_error_reported(self, tmp_path):
        man = write_dataset(tmp_path, 2)
        table = job_table(man.name, n=4, k=1)
        table["scorer"] = "bridge:/nonexistent/child"
        job_id = client.post("/jobs", json={
            "job": table, "base_dir": str(tmp_path)}).json()["job_id"]
        record = wait_for(job_id)
        assert record["status"] == "failed"
        assert record["error_kind"] == "scorer"

    def test_unknown_job_is_404(self):
        assert client.get("/jobs/doesnotexist").status_code == 404

    def test_report_before_done_is_409_or_404(self, tmp_path):
        assert client.get("/jobs/doesnotexist/report.csv").status_code == 404


class TestProbe:
    def test_builtin_probe(self):
        resp = client.post("/probe", json={"scorer": "constant:0.2"})
        assert resp.status_code == 200
        body = resp.json()
        assert body["deterministic"] is True
        assert body["p_bonafide"] == pytest.approx(0.8)
        assert body["initial_class"] == "bona_fide"

    def test_bridge_probe(self, bridge_cmd):
        cmd = " ".join(bridge_cmd("--name", "svc-echo"))
        resp = client.post("/probe", json={"scorer": f"bridge:{cmd}"})
        assert resp.status_code == 200
        assert resp.json()["name"] == "svc-echo"

    def test_bad_spec_is_422(self):
        assert client.post("/probe", json={"scorer": "wat"}).status_code == 422

    def test_dead_bridge_is_502(self):
        resp = client.post("/probe", json={"scorer": "bridge:/nonexistent/child"})
        assert resp.status_code == 502
