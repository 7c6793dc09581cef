"""HTTP surface of the monitoring service."""

from __future__ import annotations

import csv
import json
import random
import warnings

import pytest

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient

from driftmon.baseline import Baseline
from driftmon.service import create_app
from driftmon.timeutil import parse_timestamp
from tests.conftest import utc, write_capture_tree, write_label_tree


@pytest.fixture()
def client():
    return TestClient(create_app())


def _write_dataset(path, n=60, seed=0):
    rng = random.Random(seed)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x", "color", "prediction", "label"])
        for _ in range(n):
            value = rng.gauss(0.0, 1.0)
            writer.writerow(
                [repr(value), rng.choice(["red", "blue"]), repr(value), repr(value + rng.gauss(0, 0.1))]
            )
    return path


def _capture_events(n=30, hour=10):
    rng = random.Random(1)
    return [
        {
            "event_id": f"e{i}",
            "timestamp": f"2021-03-05T{hour:02d}:{i % 60:02d}:00Z",
            "input": {"x": rng.gauss(0.0, 1.0), "color": rng.choice(["red", "blue"])},
            "output": 1.0,
        }
        for i in range(n)
    ]


class TestHealth:
    def test_health(self, client):
        response = client.get("/health")
        assert response.status_code == 200
        body = response.json()
        assert body["status"] == "ok"
        assert body["version"]


class TestBaselineSuggest:
    def test_writes_baseline_file(self, client, tmp_path):
        dataset = _write_dataset(tmp_path / "train.csv")
        out = tmp_path / "baseline.json"
        response = client.post(
            "/baseline/suggest", json={"dataset": str(dataset), "output": str(out)}
        )
        assert response.status_code == 200
        body = response.json()
        assert body["rows"] == 60
        assert body["columns"] == 4
        assert body["constraint_count"] == 4
        assert body["quality_metrics"] == []
        baseline = Baseline.load(out)
        assert baseline.constraints["x"].drift_test == "ks"
        assert baseline.quality_constraints is None

    def test_quality_constraints_from_problem_type(self, client, tmp_path):
        dataset = _write_dataset(tmp_path / "train.csv")
        out = tmp_path / "baseline.json"
        response = client.post(
            "/baseline/suggest",
            json={
                "dataset": str(dataset),
                "output": str(out),
                "problem_type": "regression",
            },
        )
        assert response.status_code == 200
        assert response.json()["quality_metrics"] == ["mae", "mse", "r2", "rmse"]
        baseline = Baseline.load(out)
        assert set(baseline.quality_constraints["regression_constraints"]) == {
            "mae",
            "mse",
            "rmse",
            "r2",
        }
        # prediction/label are quality inputs, not serving features, so the
        # column schema must not demand them from live captures
        assert response.json()["columns"] == 2
        assert set(baseline.constraints) == {"x", "color"}

    def test_missing_dataset_is_404(self, client, tmp_path):
        response = client.post(
            "/baseline/suggest",
            json={"dataset": str(tmp_path / "absent.csv"), "output": str(tmp_path / "b.json")},
        )
        assert response.status_code == 404

    def test_missing_body_field_is_422(self, client):
        assert client.post("/baseline/suggest", json={"dataset": "x"}).status_code == 422


def _suggest_from_events(client, tmp_path, events):
    dataset = tmp_path / "train.csv"
    with dataset.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x", "color"])
        for event in events:
            writer.writerow([repr(event["input"]["x"]), event["input"]["color"]])
    out = tmp_path / "baseline.json"
    response = client.post(
        "/baseline/suggest", json={"dataset": str(dataset), "output": str(out)}
    )
    assert response.status_code == 200
    return out


class TestAnalyze:
    def test_clean_window(self, client, tmp_path):
        events = _capture_events()
        baseline = _suggest_from_events(client, tmp_path, events)
        write_capture_tree(tmp_path / "capture", events)
        response = client.post(
            "/analyze",
            json={
                "baseline": str(baseline),
                "capture_root": str(tmp_path / "capture"),
                "output_root": str(tmp_path / "out"),
                "start": "2021-03-05T10:00:00Z",
                "end": "2021-03-05T11:00:00Z",
            },
        )
        assert response.status_code == 200
        body = response.json()
        assert body["job"]["status"] == "completed"
        assert body["job"]["item_count"] == 30
        assert body["violations"] == []
        assert any(line.startswith("metric item_count") for line in body["metrics_lines"])

    def test_missing_baseline_is_404(self, client, tmp_path):
        response = client.post(
            "/analyze",
            json={
                "baseline": str(tmp_path / "absent.json"),
                "capture_root": str(tmp_path / "capture"),
                "output_root": str(tmp_path / "out"),
                "start": "2021-03-05T10:00:00Z",
                "end": "2021-03-05T11:00:00Z",
            },
        )
        assert response.status_code == 404

    def test_backwards_window_is_400(self, client, tmp_path):
        baseline = _suggest_from_events(client, tmp_path, _capture_events(5))
        response = client.post(
            "/analyze",
            json={
                "baseline": str(baseline),
                "capture_root": str(tmp_path / "capture"),
                "output_root": str(tmp_path / "out"),
                "start": "2021-03-05T11:00:00Z",
                "end": "2021-03-05T10:00:00Z",
            },
        )
        assert response.status_code == 400
        assert "after" in response.json()["detail"]


class TestCapture:
    def test_ingest_then_flush(self, client, tmp_path):
        root = tmp_path / "capture"
        records = [
            {
                "event_id": f"e{i}",
                "timestamp": "2021-03-05T10:00:00Z",
                "input": "{}",
                "output": "1",
            }
            for i in range(4)
        ]
        first = client.post(
            "/capture/records", json={"root": str(root), "records": records[:2]}
        )
        assert first.status_code == 200
        assert first.json() == {"received": 2, "captured": 2, "skipped": 0, "rejected": 0}
        # the session persists between calls, so counts accumulate
        second = client.post(
            "/capture/records", json={"root": str(root), "records": records[2:]}
        )
        assert second.json()["received"] == 4
        assert list(root.rglob("*.jsonl")) == []
        flush = client.post("/capture/flush", json={"root": str(root)})
        assert flush.status_code == 200
        assert len(flush.json()["files"]) == 1
        [written] = root.rglob("*.jsonl")
        assert len(written.read_text().splitlines()) == 4

    def test_flush_unknown_root_is_404(self, client, tmp_path):
        response = client.post("/capture/flush", json={"root": str(tmp_path / "never")})
        assert response.status_code == 404


class TestJoin:
    def test_join_counts(self, client, tmp_path):
        events = _capture_events(6)
        write_capture_tree(tmp_path / "capture", events)
        write_label_tree(
            tmp_path / "labels",
            [
                {"event_id": f"e{i}", "timestamp": "2021-03-05T12:00:00Z", "label": 1.0}
                for i in range(4)
            ],
        )
        response = client.post(
            "/join",
            json={
                "capture_root": str(tmp_path / "capture"),
                "labels_root": str(tmp_path / "labels"),
                "output_root": str(tmp_path / "joined"),
            },
        )
        assert response.status_code == 200
        body = response.json()
        assert body["counts"] == {
            "captured": 6,
            "labeled": 4,
            "joined": 4,
            "unlabeled": 2,
            "orphan_labels": 0,
        }
        assert len(body["files"]) == 1


class TestSchedules:
    def _schedule(self, client, tmp_path, name="mon"):
        events = _capture_events()
        baseline = _suggest_from_events(client, tmp_path, events)
        write_capture_tree(tmp_path / "capture", events)
        model = {
            "name": name,
            "baseline": str(baseline),
            "capture_root": str(tmp_path / "capture"),
            "output_root": str(tmp_path / "out"),
            "jitter_minutes": 10.0,
        }
        assert client.post("/schedules", json=model).status_code == 200
        return model

    def test_create_and_list(self, client, tmp_path):
        model = self._schedule(client, tmp_path)
        listing = client.get("/schedules")
        assert listing.status_code == 200
        [entry] = listing.json()
        assert entry["name"] == model["name"]
        assert entry["cadence"] == "hourly"

    def test_next_run_honors_jitter(self, client, tmp_path):
        self._schedule(client, tmp_path)
        response = client.post(
            "/schedules/mon/next-run", json={"now": "2021-03-05T10:42:00Z"}
        )
        assert response.status_code == 200
        due = parse_timestamp(response.json()["next_run"])
        assert utc(2021, 3, 5, 11) <= due
        assert (due - utc(2021, 3, 5, 11)).total_seconds() < 600

    def test_run_and_job_history(self, client, tmp_path):
        self._schedule(client, tmp_path)
        response = client.post(
            "/schedules/mon/run", json={"window_start": "2021-03-05T10:00:00Z"}
        )
        assert response.status_code == 200
        job = response.json()["job"]
        assert job["status"] == "completed"
        assert job["schedule"] == "mon"
        jobs = client.get("/schedules/mon/jobs")
        assert jobs.status_code == 200
        assert [j["window_start"] for j in jobs.json()["jobs"]] == ["2021-03-05T10:00:00Z"]

    def test_unknown_schedule_is_404(self, client):
        assert (
            client.post("/schedules/ghost/next-run", json={"now": "2021-03-05T10:00:00Z"}).status_code
            == 404
        )
        assert client.get("/schedules/ghost/jobs").status_code == 404

    def test_bad_cadence_is_400(self, client, tmp_path):
        response = client.post(
            "/schedules",
            json={
                "name": "bad",
                "baseline": str(tmp_path / "b.json"),
                "capture_root": str(tmp_path / "c"),
                "output_root": str(tmp_path / "o"),
                "cadence": "daily",
            },
        )
        assert response.status_code == 400


class TestExperiments:
    def test_bias_case_study(self, client, tmp_path):
        out = tmp_path / "cells.csv"
        response = client.post(
            "/experiments/bias-case-study",
            json={
                "output": str(out),
                "pool_advantaged": 1_000,
                "pool_disadvantaged": 1_000,
                "sample_sizes": [100],
                "repeats": 5,
            },
        )
        assert response.status_code == 200
        body = response.json()
        assert body["pool_dpl"] == pytest.approx(-0.2, abs=1e-12)
        labels = [cell["config_label"] for cell in body["cells"]]
        assert labels == ["no_bias", "medium_bias", "high_bias"]
        assert out.exists()

    def test_adaptive(self, client, tmp_path):
        response = client.post(
            "/experiments/adaptive",
            json={"output_dir": str(tmp_path / "exp"), "rounds": 3, "horizon": 300},
        )
        assert response.status_code == 200
        body = response.json()
        assert body["results"] == 6
        assert (tmp_path / "exp/triplets.csv").exists()
        assert (tmp_path / "exp/summary.csv").exists()

    def test_attribution_check(self, client):
        response = client.post(
            "/attribution/check",
            json={
                "baseline_scores": {"f1": 0.6, "f2": 0.3, "f3": 0.1},
                "observed_ranking": ["f2", "f1", "f3"],
            },
        )
        assert response.status_code == 200
        body = response.json()
        assert body["alert"] is True
        assert body["ndcg"] == pytest.approx(0.868075, abs=1e-6)
        assert body["threshold"] == 0.9

    def test_attribution_validation_is_400(self, client):
        response = client.post(
            "/attribution/check",
            json={"baseline_scores": {"f1": -1.0}, "observed_ranking": ["f1"]},
        )
        assert response.status_code == 400
        assert "absolute values" in response.json()["detail"]
