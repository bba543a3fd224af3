"""HTTP service hosting alignment sessions for the workbench UI.

One project = one S/F pair plus the rolling resolution state. The
state machine realizes the resolution cycle: Idle -> Matching ->
AwaitingResolution -> (Matching | Converged). Matching runs as a
background thread per project with pollable outer-iteration progress.

Persistence is a checkpoint directory per round plus a project
manifest, no database; a restart resumes from the last completed
checkpoint (an in-flight match is simply forgotten).
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Body, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware

from . import __version__
from .errors import PidalignError
from .functional import Vocabulary
from .graph import apply_edits, edit_from_dict, graph_from_dict, graph_to_dict
from .matching import MatchConfig, extract_mapping, mapping_to_dict, match_graphs
from .consistency import (
    InconsistencyStatus,
    get_inconsistencies,
    open_items,
    report_to_dict,
)

STATE_IDLE = "idle"
STATE_MATCHING = "matching"
STATE_AWAITING = "awaiting-resolution"
STATE_CONVERGED = "converged"


def _atomic_write(path: Path, payload: dict) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2) + "\n")
    tmp.replace(path)


@dataclass
class _Job:
    id: str
    project_id: str
    status: str = "running"  # running | done | failed
    iteration: int = 0
    total: int = 0
    error: str | None = None


@dataclass
class _Project:
    """In-memory handle; durable state lives in the directory."""

    root: Path
    lock: threading.Lock = field(default_factory=threading.Lock)


class ProjectStore:
    """Directory-backed project registry with per-project write locks."""

    def __init__(self, root):
        self.root = Path(root)
        (self.root / "projects").mkdir(parents=True, exist_ok=True)
        self._handles: dict[str, _Project] = {}
        self._jobs: dict[str, _Job] = {}
        self._active: dict[str, str] = {}  # project id -> running job id
        self._registry_lock = threading.Lock()

    # -- plumbing ---------------------------------------------------------

    def _dir(self, pid: str) -> Path:
        return self.root / "projects" / pid

    def handle(self, pid: str) -> _Project:
        if not (self._dir(pid) / "manifest.json").exists():
            raise HTTPException(404, f"unknown project {pid!r}")
        with self._registry_lock:
            if pid not in self._handles:
                self._handles[pid] = _Project(self._dir(pid))
            return self._handles[pid]

    def manifest(self, pid: str) -> dict:
        return json.loads((self._dir(pid) / "manifest.json").read_text())

    def _write_manifest(self, pid: str, manifest: dict) -> None:
        _atomic_write(self._dir(pid) / "manifest.json", manifest)

    def round_dir(self, pid: str, n: int) -> Path:
        return self._dir(pid) / "rounds" / str(n)

    def read_round(self, pid: str, n: int) -> dict:
        rdir = self.round_dir(pid, n)
        if not rdir.is_dir():
            raise HTTPException(404, f"project {pid!r} has no round {n}")
        out = {"round": n}
        for key, name in (
            ("source", "S.json"),
            ("target", "F.json"),
            ("mapping", "mapping.json"),
            ("report", "report.json"),
        ):
            f = rdir / name
            out[key] = json.loads(f.read_text()) if f.exists() else None
        return out

    def state_of(self, pid: str, manifest: dict) -> str:
        if pid in self._active:
            return STATE_MATCHING
        return manifest["state"]

    # -- operations -------------------------------------------------------

    def create_project(self, payload: dict) -> dict:
        try:
            source = graph_from_dict(payload["source"])
            target = graph_from_dict(payload["target"])
        except (KeyError, TypeError) as exc:
            raise HTTPException(400, f"payload must carry source and target graphs: {exc}")
        except PidalignError as exc:
            raise HTTPException(400, str(exc))
        if len(source) == 0 or len(target) == 0:
            raise HTTPException(400, "source and target graphs must be non-empty")
        config = payload.get("config", {})
        try:
            MatchConfig(**{k: tuple(v) if k == "bases" else v for k, v in config.items()})
        except (PidalignError, TypeError) as exc:
            raise HTTPException(400, f"bad matcher config: {exc}")

        pid = uuid.uuid4().hex[:12]
        rdir = self.round_dir(pid, 0)
        rdir.mkdir(parents=True)
        _atomic_write(rdir / "S.json", graph_to_dict(source))
        _atomic_write(rdir / "F.json", graph_to_dict(target))
        manifest = {
            "project_id": pid,
            "state": STATE_IDLE,
            "round": 0,
            "accepted": [],
            "pins": [],
            "config": config,
            "vocab": payload.get("vocab"),
        }
        self._write_manifest(pid, manifest)
        return manifest

    def get_state(self, pid: str, round_no: int | None = None) -> dict:
        manifest = self.manifest(pid)
        n = manifest["round"] if round_no is None else round_no
        snapshot = self.read_round(pid, n)
        rounds = sorted(
            int(p.name) for p in (self._dir(pid) / "rounds").iterdir() if p.name.isdigit()
        )
        return {
            "project_id": pid,
            "state": self.state_of(pid, manifest),
            "round": manifest["round"],
            "accepted": manifest["accepted"],
            "pins": manifest["pins"],
            "history": rounds,
            "pending_edits": (self._dir(pid) / "pending" / "S.json").exists(),
            **snapshot,
        }

    def _vocab(self, manifest: dict) -> Vocabulary | None:
        v = manifest.get("vocab")
        if not v:
            return None
        return Vocabulary(v.get("labels", []), v.get("aliases", {}))

    def trigger_match(self, pid: str) -> dict:
        project = self.handle(pid)
        with project.lock:
            manifest = self.manifest(pid)
            if pid in self._active:
                raise HTTPException(409, "a matching job is already running")
            state = manifest["state"]
            if state not in (STATE_IDLE, STATE_AWAITING):
                raise HTTPException(409, f"cannot match from state {state!r}")
            job = _Job(id=uuid.uuid4().hex[:12], project_id=pid)
            self._jobs[job.id] = job
            self._active[pid] = job.id
        thread = threading.Thread(target=self._run_match, args=(pid, job), daemon=True)
        thread.start()
        return {"job_id": job.id, "project_id": pid, "status": job.status}

    def _run_match(self, pid: str, job: _Job) -> None:
        project = self.handle(pid)
        try:
            manifest = self.manifest(pid)
            pdir = self._dir(pid) / "pending"
            if (pdir / "S.json").exists():
                source = graph_from_dict(json.loads((pdir / "S.json").read_text()))
                target = graph_from_dict(json.loads((pdir / "F.json").read_text()))
            else:
                current = self.read_round(pid, manifest["round"])
                source = graph_from_dict(current["source"])
                target = graph_from_dict(current["target"])
            raw_cfg = manifest.get("config") or {}
            cfg = MatchConfig(
                **{k: tuple(v) if k == "bases" else v for k, v in raw_cfg.items()}
            )
            job.total = cfg.outer_iters

            def on_progress(iteration, total):
                job.iteration = iteration
                job.total = total

            coupling = match_graphs(
                source,
                target,
                cfg,
                vocab=self._vocab(manifest),
                pins=[tuple(p) for p in manifest["pins"]],
                progress=on_progress,
            )
            mapping = extract_mapping(coupling, source, target)
            items = get_inconsistencies(
                mapping, source, target, set(manifest["accepted"])
            )
            with project.lock:
                manifest = self.manifest(pid)
                n = manifest["round"] + 1
                rdir = self.round_dir(pid, n)
                rdir.mkdir(parents=True, exist_ok=True)
                _atomic_write(rdir / "S.json", graph_to_dict(source))
                _atomic_write(rdir / "F.json", graph_to_dict(target))
                _atomic_write(rdir / "mapping.json", mapping_to_dict(mapping))
                _atomic_write(rdir / "report.json", report_to_dict(items, n))
                manifest["round"] = n
                manifest["state"] = (
                    STATE_AWAITING if open_items(items) else STATE_CONVERGED
                )
                self._write_manifest(pid, manifest)
                (pdir / "S.json").unlink(missing_ok=True)
                (pdir / "F.json").unlink(missing_ok=True)
            job.status = "done"
        except Exception as exc:  # surfaced through the job handle
            job.status = "failed"
            job.error = str(exc)
        finally:
            self._active.pop(pid, None)

    def job(self, pid: str, job_id: str) -> dict:
        j = self._jobs.get(job_id)
        if j is None or j.project_id != pid:
            raise HTTPException(404, f"unknown job {job_id!r}")
        return {
            "job_id": j.id,
            "project_id": pid,
            "status": j.status,
            "progress": {"iteration": j.iteration, "total": j.total},
            "error": j.error,
        }

    def submit_resolution(self, pid: str, payload: dict) -> dict:
        project = self.handle(pid)
        with project.lock:
            manifest = self.manifest(pid)
            state = self.state_of(pid, manifest)
            if state != STATE_AWAITING:
                raise HTTPException(
                    409, f"resolutions require state {STATE_AWAITING!r}, project is {state!r}"
                )
            token = payload.get("round")
            if token != manifest["round"]:
                raise HTTPException(
                    409, f"stale round token {token!r}, current round is {manifest['round']}"
                )

            current = self.read_round(pid, manifest["round"])
            report = current["report"] or {"items": []}
            known = {it["key"] for it in report["items"]}
            acceptances = payload.get("acceptances", [])
            for key in acceptances:
                if key not in known:
                    raise HTTPException(400, f"acceptance {key!r} matches no reported item")
            open_keys = {
                it["key"] for it in report["items"] if it["status"] == InconsistencyStatus.OPEN.value
            }
            for key in acceptances:
                if key not in open_keys:
                    raise HTTPException(400, f"item {key!r} is not open")

            try:
                edits_source = [edit_from_dict(e) for e in payload.get("edits_source", [])]
                edits_target = [edit_from_dict(e) for e in payload.get("edits_target", [])]
                source = graph_from_dict(current["source"])
                target = graph_from_dict(current["target"])
                if edits_source:
                    source = apply_edits(source, edits_source)
                if edits_target:
                    target = apply_edits(target, edits_target)
            except (PidalignError, KeyError, TypeError, ValueError) as exc:
                raise HTTPException(400, f"invalid edit batch: {exc}")

            pins = [tuple(p) for p in payload.get("pins", [])]
            for s, f in pins:
                if s not in source.attributes or f not in target.attributes:
                    raise HTTPException(400, f"pin ({s!r}, {f!r}) references unknown nodes")

            # round checkpoints are immutable once written; edited graphs
            # wait in pending/ until the next match round checkpoints them
            pdir = self._dir(pid) / "pending"
            pdir.mkdir(exist_ok=True)
            _atomic_write(pdir / "S.json", graph_to_dict(source))
            _atomic_write(pdir / "F.json", graph_to_dict(target))
            manifest["accepted"] = sorted(set(manifest["accepted"]) | set(acceptances))
            manifest["pins"] = [list(p) for p in list(map(tuple, manifest["pins"])) + pins]
            manifest["state"] = STATE_IDLE
            self._write_manifest(pid, manifest)
            return {
                "project_id": pid,
                "state": STATE_IDLE,
                "round": manifest["round"],
                "accepted": manifest["accepted"],
            }


def create_app(root) -> FastAPI:
    store = ProjectStore(root)
    app = FastAPI(title="pidalign service", version=__version__)
    app.state.store = store
    # the workbench page is typically opened from disk or another origin
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": __version__}

    @app.post("/projects", status_code=201)
    def create_project(payload: dict = Body(...)):
        return store.create_project(payload)

    @app.get("/projects/{pid}")
    def get_project(pid: str, round: int | None = None):
        store.handle(pid)
        return store.get_state(pid, round)

    @app.post("/projects/{pid}/match", status_code=202)
    def trigger_match(pid: str):
        store.handle(pid)
        return store.trigger_match(pid)

    @app.get("/projects/{pid}/jobs/{job_id}")
    def get_job(pid: str, job_id: str):
        store.handle(pid)
        return store.job(pid, job_id)

    @app.post("/projects/{pid}/resolutions")
    def submit_resolution(pid: str, payload: dict = Body(...)):
        store.handle(pid)
        return store.submit_resolution(pid, payload)

    @app.get("/projects/{pid}/rounds/{n}")
    def get_round(pid: str, n: int):
        store.handle(pid)
        return store.read_round(pid, n)

    return app
