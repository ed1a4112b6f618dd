"""HTTP service exposing the human-annotation loop.

The experiment runs in a worker thread through the exact same loop code as
the simulated oracle; only the oracle backend differs. The human oracle
publishes each cycle's batch and blocks until every sample is labeled or
skipped through the API. Handlers never block on training: while the loop
retrains, /session reports "training" and /batch is empty.

Endpoints (all under /v1, JSON):
  GET  /v1/session   state, cycle, progress
  GET  /v1/batch     pending samples with display payloads
  POST /v1/labels    {"labels": {sample_id: class index or "skip"}}
  GET  /v1/metrics   per-cycle metrics series
"""

from __future__ import annotations

import itertools
import threading

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .features import fit_pca
from .loop import ExperimentConfig, Oracle, run_experiment, write_metrics
from .numerics import as_matrix


class _Pending:
    def __init__(self, sample_id: int, values: np.ndarray, pool_index: int | None):
        self.sample_id = sample_id
        self.values = values
        self.pool_index = pool_index
        self.result: int | None = None
        self.resolved = False


class HumanOracle(Oracle):
    """Blocks the loop until the annotation API resolves every pending sample."""

    def __init__(self, session: "AnnotationSession"):
        self.session = session

    def label_indices(self, indices):
        pool = self.session.pool
        return self.session.publish_and_wait(
            [(int(i), pool.x[int(i)]) for i in np.asarray(indices)])

    def label_points(self, points):
        return self.session.publish_and_wait(
            [(None, row) for row in as_matrix(points)])


class AnnotationSession:
    """Single-tenant experiment state shared between the loop and the API."""

    def __init__(self, cfg: ExperimentConfig, seed: int,
                 metrics_path: str | None = None):
        self.cfg = cfg
        self.seed = seed
        self.metrics_path = metrics_path
        self.lock = threading.Lock()
        self.batch_done = threading.Condition(self.lock)
        self.status = "training"
        self.cycle = 0
        self.labeled = 0
        self.pending: dict[int, _Pending] = {}
        self.records: list[dict] = []
        self.result = None
        self.error: str | None = None
        self.pool = None
        self.display_pca = None
        self._ids = itertools.count(1)
        self._thread: threading.Thread | None = None

    # -- loop side ----------------------------------------------------------

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def _run(self) -> None:
        def oracle_factory(pool, test):
            with self.lock:
                self.pool = pool
                if pool.dim >= 2:
                    self.display_pca = fit_pca(pool.x, 2)
            return HumanOracle(self)

        def on_cycle(rec):
            with self.lock:
                self.records.append(rec.to_json())
                self.cycle = rec.cycle
                self.labeled = rec.labeled
                self.status = "training"

        try:
            self.result = run_experiment(self.cfg, self.seed,
                                         oracle_factory=oracle_factory,
                                         on_cycle=on_cycle)
            if self.metrics_path:
                write_metrics(self.metrics_path, self.result.records)
            with self.lock:
                self.status = "completed"
        except Exception as exc:  # surfaced through /session for operators
            with self.lock:
                self.error = f"{type(exc).__name__}: {exc}"
                self.status = "failed"

    def publish_and_wait(self, items) -> list[int | None]:
        """Called by the oracle from the worker thread with (pool_index, values) pairs."""
        with self.lock:
            batch = [_Pending(next(self._ids), values, idx) for idx, values in items]
            for p in batch:
                self.pending[p.sample_id] = p
            self.status = "awaiting_labels"
            self.batch_done.wait_for(lambda: all(p.resolved for p in batch))
            for p in batch:
                del self.pending[p.sample_id]
            self.status = "training"
            return [p.result for p in batch]

    # -- API side -----------------------------------------------------------

    def snapshot(self) -> dict:
        with self.lock:
            done = sum(1 for p in self.pending.values() if p.resolved)
            return {
                "status": self.status,
                "cycle": self.cycle,
                "labeled": self.labeled,
                "budget": self.cfg.budget,
                "strategy": self.cfg.strategy,
                "num_classes": self.pool.num_classes if self.pool else None,
                "batch": {"pending": len(self.pending) - done, "resolved": done},
                "error": self.error,
            }

    def batch_payload(self) -> dict:
        with self.lock:
            samples = []
            for p in self.pending.values():
                if p.resolved:
                    continue
                entry = {"id": p.sample_id,
                         "values": [float(v) for v in p.values]}
                if self.display_pca is not None:
                    xy = self.display_pca.project(p.values[None, :])[0]
                    entry["position"] = [float(xy[0]), float(xy[1])]
                shape = getattr(self.pool, "image_shape", None)
                if shape is not None:
                    grid = np.asarray(p.values).reshape(shape)
                    entry["pixels"] = [[float(v) for v in row] for row in grid]
                samples.append(entry)
            return {"cycle": self.cycle, "status": self.status,
                    "num_classes": self.pool.num_classes if self.pool else None,
                    "samples": samples}

    def apply_labels(self, labels: dict) -> dict:
        accepted, conflicts = [], []
        with self.lock:
            num_classes = self.pool.num_classes if self.pool else 0
            for key, value in labels.items():
                try:
                    sample_id = int(key)
                except (TypeError, ValueError):
                    raise HTTPException(status_code=400, detail=f"bad sample id {key!r}")
                p = self.pending.get(sample_id)
                if p is None or p.resolved:
                    conflicts.append(sample_id)
                    continue
                if value == "skip":
                    p.result = None
                elif isinstance(value, bool) or not isinstance(value, int):
                    raise HTTPException(status_code=400,
                                        detail=f"label must be a class index or \"skip\", got {value!r}")
                elif not 0 <= value < num_classes:
                    raise HTTPException(status_code=400,
                                        detail=f"class {value} out of range [0, {num_classes})")
                else:
                    p.result = value
                p.resolved = True
                accepted.append(sample_id)
            if accepted:
                self.batch_done.notify_all()
        if conflicts and not accepted:
            raise HTTPException(status_code=409,
                                detail=f"unknown or already-labeled sample ids: {conflicts}")
        return {"accepted": accepted, "conflicts": conflicts}

    def metrics_payload(self) -> dict:
        with self.lock:
            return {"records": list(self.records)}


class LabelRequest(BaseModel):
    labels: dict[str, int | str]


def create_app(cfg: ExperimentConfig, seed: int = 0,
               frontend_dir: str | None = None,
               metrics_path: str | None = None) -> FastAPI:
    session = AnnotationSession(cfg, seed, metrics_path)
    app = FastAPI(title="asal annotation service")
    app.state.session = session

    @app.get("/v1/session")
    def get_session():
        return session.snapshot()

    @app.get("/v1/batch")
    def get_batch():
        return session.batch_payload()

    @app.post("/v1/labels")
    def post_labels(req: LabelRequest):
        return session.apply_labels(req.labels)

    @app.get("/v1/metrics")
    def get_metrics():
        return session.metrics_payload()

    if frontend_dir:
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")

    session.start()
    return app


def serve_annotation(cfg: ExperimentConfig, port: int = 8008, seed: int = 0,
                     frontend_dir: str | None = None) -> None:
    import uvicorn

    app = create_app(cfg, seed, frontend_dir)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
