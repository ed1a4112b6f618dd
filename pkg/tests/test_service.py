import time

import pytest
from fastapi.testclient import TestClient

from asal.loop import ExperimentConfig, read_metrics
from asal.service import create_app


def human_config(**overrides):
    base = dict(
        dataset={"variant": "gaussian_mixture", "num_components": 3, "dim": 4,
                 "pool_size": 150, "test_size": 30, "overlap": 0.25, "radius": 4.0},
        strategy="random", budget=16, new_per_cycle=4, initial=8, seeds=(0,),
        oracle="human", classifier_train={"epochs": 4, "learning_rate": 0.01})
    base.update(overrides)
    return ExperimentConfig(**base)


def wait_for(client, predicate, timeout=15.0):
    deadline = time.time() + timeout
    state = None
    while time.time() < deadline:
        state = client.get("/v1/session").json()
        if predicate(state):
            return state
        time.sleep(0.02)
    raise AssertionError(f"timed out; last state {state}")


def next_batch(client, timeout=15.0):
    """Wait until a fresh unresolved batch is up (or the run completed)."""
    deadline = time.time() + timeout
    while time.time() < deadline:
        state = client.get("/v1/session").json()
        if state["status"] == "completed":
            return None
        if state["status"] == "awaiting_labels" and state["batch"]["pending"] > 0:
            return client.get("/v1/batch").json()
        time.sleep(0.02)
    raise AssertionError("timed out waiting for a batch")


def label_batch(client, batch, skip_ids=()):
    labels = {}
    for sample in batch["samples"]:
        labels[str(sample["id"])] = "skip" if sample["id"] in skip_ids else 0
    resp = client.post("/v1/labels", json={"labels": labels})
    assert resp.status_code == 200
    return batch


@pytest.fixture
def client(tmp_path):
    cfg = human_config()
    app = create_app(cfg, seed=0, metrics_path=str(tmp_path / "metrics.jsonl"))
    with TestClient(app) as c:
        c.metrics_file = tmp_path / "metrics.jsonl"
        yield c


class TestAnnotationFlow:
    def test_initial_batch_is_the_seed_set(self, client):
        batch = next_batch(client)
        assert len(batch["samples"]) == 8  # initial labeled set
        sample = batch["samples"][0]
        assert len(sample["values"]) == 4
        assert len(sample["position"]) == 2
        assert client.get("/v1/session").json()["cycle"] == 0

    def test_full_session_runs_to_completion(self, client):
        for _ in range(10):  # initial batch + 2 cycles of 4, with margin
            batch = next_batch(client)
            if batch is None:
                break
            label_batch(client, batch)
        wait_for(client, lambda s: s["status"] == "completed")
        metrics = client.get("/v1/metrics").json()["records"]
        assert metrics[-1]["labeled"] == 16
        assert [m["cycle"] for m in metrics] == [0, 1, 2]
        # served series equals the on-disk metrics of the same run
        on_disk = read_metrics(client.metrics_file)
        assert metrics == on_disk

    def test_cycle_advances_after_batch_completes(self, client):
        label_batch(client, next_batch(client))  # seed set
        batch = next_batch(client)  # cycle 0 selections are up
        assert len(batch["samples"]) == 4
        label_batch(client, batch)
        # the cycle-0 record lands once its batch is fully labeled
        state = wait_for(client, lambda s: len(client.get("/v1/metrics").json()["records"]) == 1)
        rec = client.get("/v1/metrics").json()["records"][0]
        assert rec["cycle"] == 0 and rec["labeled"] == 8

    def test_duplicate_label_post_conflicts(self, client):
        batch = next_batch(client)
        sid = str(batch["samples"][0]["id"])
        assert client.post("/v1/labels", json={"labels": {sid: 1}}).status_code == 200
        resp = client.post("/v1/labels", json={"labels": {sid: 2}})
        assert resp.status_code == 409
        # the first label stands: exactly one sample resolved
        state = client.get("/v1/session").json()
        assert state["batch"]["resolved"] == 1

    def test_mixed_post_accepts_fresh_ids_and_reports_conflicts(self, client):
        batch = next_batch(client)
        a, b = str(batch["samples"][0]["id"]), str(batch["samples"][1]["id"])
        assert client.post("/v1/labels", json={"labels": {a: 0}}).status_code == 200
        resp = client.post("/v1/labels", json={"labels": {a: 1, b: 2}})
        assert resp.status_code == 200
        doc = resp.json()
        assert doc["accepted"] == [int(b)]
        assert doc["conflicts"] == [int(a)]

    def test_malformed_bodies_rejected(self, client):
        batch = next_batch(client)
        sid = str(batch["samples"][0]["id"])
        assert client.post("/v1/labels", json={"nope": 1}).status_code == 422
        assert client.post("/v1/labels", json={"labels": {sid: "maybe"}}).status_code == 400
        assert client.post("/v1/labels", json={"labels": {sid: 99}}).status_code == 400
        assert client.post("/v1/labels", json={"labels": {"abc": 1}}).status_code == 400

    def test_skip_drops_sample_for_random_strategy(self, client):
        batch = next_batch(client)
        skip_id = batch["samples"][0]["id"]
        label_batch(client, batch, skip_ids={skip_id})
        # 7 of 8 initial samples labeled; random has no replacement source,
        # which shows in the cycle-0 record after the next batch completes
        label_batch(client, next_batch(client))
        wait_for(client, lambda s: bool(client.get("/v1/metrics").json()["records"]))
        rec = client.get("/v1/metrics").json()["records"][0]
        assert rec["labeled"] == 7


class TestSkipReplacement:
    def test_asal_skip_is_replaced_by_next_nearest(self):
        cfg = human_config(strategy="asal", extractor="raw",
                           synthesis={"steps": 5})
        app = create_app(cfg, seed=1)
        with TestClient(app) as client:
            label_batch(client, next_batch(client))  # seed set fully labeled
            batch = next_batch(client)  # first selection batch
            assert len(batch["samples"]) == 4
            skip_id = batch["samples"][0]["id"]
            label_batch(client, batch, skip_ids={skip_id})
            # a replacement batch with one sample appears instead of a cycle advance
            replacement = next_batch(client)
            assert len(replacement["samples"]) == 1
            assert replacement["samples"][0]["id"] != skip_id
            label_batch(client, replacement)
            # cycle 1 runs with the full 12-sample training set despite the skip
            cycle1 = next_batch(client)
            assert len(cycle1["samples"]) == 4
            records = client.get("/v1/metrics").json()["records"]
            assert records[0]["labeled"] == 8
            label_batch(client, cycle1)
            state = wait_for(client, lambda s: s["status"] == "completed")
            final = client.get("/v1/metrics").json()["records"][-1]
            assert final["labeled"] == 16


class TestGaalService:
    def test_synthetic_samples_served_for_labeling(self):
        cfg = human_config(strategy="gaal", synthesis={"steps": 5},
                           budget=12, new_per_cycle=4, initial=8)
        app = create_app(cfg, seed=0)
        with TestClient(app) as client:
            label_batch(client, next_batch(client))  # seed pool samples
            batch = next_batch(client)
            assert len(batch["samples"]) == 4  # synthetic, straight from the generator
            label_batch(client, batch)
            state = wait_for(client, lambda s: s["status"] == "completed")
            assert state["labeled"] == 12
