"""HTTP/JSON service for interactive relation editing and generation.

Sessions are in-memory, one lock each; edits append to a replayable log.
Human edits win over machine-derived entries; the cleared entries are
reported back so a client can show what was overridden.
"""

from __future__ import annotations

import json
import secrets
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .dataset import Corpus, load_corpus
from .errors import (
    BackendContractError,
    ConflictedMatrixError,
    ContractError,
    DocumentParseError,
    EmptyDocumentError,
    InfeasibleLayoutError,
    LayoutLabError,
    UnknownBackendError,
    UnknownNodeError,
)
from .metrics import FeatureExtractor, build_report, train_corruption_classifier
from .model import LayoutGraph, parse_layout, serialize_layout
from .relations import Edit, RelationMatrix, apply_edit, underivable_entries, validate
from .synthesis import GenerationRequest, GenerationResult, insert_random_nodes, synthesize


@dataclass
class ServiceConfig:
    manifest: str | None = None
    checkpoint: str | None = None
    extractor: str | None = None
    snapshot_dir: str | None = None
    host: str = "127.0.0.1"
    port: int = 8321

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**data)


@dataclass
class Session:
    session_id: str
    graph: LayoutGraph
    initial: RelationMatrix
    relations: RelationMatrix
    edit_log: list[Edit] = field(default_factory=list)
    generated: GenerationResult | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)
    generating: bool = False

    def replayed(self) -> RelationMatrix:
        m = self.initial
        for e in self.edit_log:
            m = apply_edit(m, e).matrix
        return m


class EditModel(BaseModel):
    op: str
    channel: str
    i: int
    j: int
    origin: str = "human"


class RandomizeBody(BaseModel):
    count: int = 3
    seed: int = 0


class GenerateBody(BaseModel):
    backend: str = "solver"
    seed: int = 0
    insert_random: int = 0


class CreateBody(BaseModel):
    layout: list | None = None
    corpus_id: str | None = None


class CompareBody(BaseModel):
    a: list[list] = Field(description="layout documents (arrays of node records)")
    b: list[list]
    task: str = "compare"
    dataset: str = "adhoc"


def _error(status: int, code: str, message: str, details=None) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"code": code, "message": message, "details": details or {}},
    )


def _session_payload(session: Session) -> dict:
    conflicts = validate(session.relations)
    return {
        "session_id": session.session_id,
        "canvas": list(session.graph.canvas),
        "layout": json.loads(serialize_layout(session.graph, session.relations)),
        "relations": session.relations.to_dict(),
        "conflicts": [c.to_dict() for c in conflicts],
    }


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="layoutlab", version="0.1.0")
    sessions: dict[str, Session] = {}
    state: dict = {"corpus": None, "extractor": None}

    def corpus() -> Corpus | None:
        if state["corpus"] is None and config.manifest:
            state["corpus"] = load_corpus(config.manifest)
        return state["corpus"]

    def extractor() -> FeatureExtractor | None:
        if state["extractor"] is None:
            if config.extractor and Path(config.extractor).exists():
                state["extractor"] = FeatureExtractor.load(config.extractor)
            else:
                c = corpus()
                if c is not None and len(c) >= 100:
                    state["extractor"] = train_corruption_classifier(
                        [c[i].graph for i in c.ids], seed=0
                    )
        return state["extractor"]

    @app.exception_handler(LayoutLabError)
    async def _domain_error(request: Request, exc: LayoutLabError):
        if isinstance(exc, ConflictedMatrixError):
            return _error(409, "conflicted", str(exc), {"conflicts": [c.to_dict() for c in exc.conflicts]})
        if isinstance(exc, (InfeasibleLayoutError, BackendContractError)):
            return _error(422, "infeasible", str(exc), {"nodes": getattr(exc, "nodes", [])})
        if isinstance(exc, (DocumentParseError, EmptyDocumentError, ContractError, UnknownNodeError, UnknownBackendError)):
            return _error(400, "bad_request", str(exc))
        return _error(400, "error", str(exc))

    @app.post("/sessions")
    def create_session(body: CreateBody):
        if (body.layout is None) == (body.corpus_id is None):
            return _error(400, "bad_request", "provide exactly one of layout or corpus_id")
        if body.layout is not None:
            graph, relations = parse_layout(json.dumps(body.layout))
        else:
            c = corpus()
            if c is None or body.corpus_id not in c.entries:
                return _error(404, "unknown_corpus_id", f"no corpus entry {body.corpus_id!r}")
            entry = c[body.corpus_id]
            graph, relations = entry.graph, entry.relations
        session_id = secrets.token_hex(8)
        sessions[session_id] = Session(session_id, graph, relations, relations)
        return {"session_id": session_id}

    def get_session(session_id: str) -> Session | None:
        return sessions.get(session_id)

    @app.get("/sessions/{session_id}")
    def read_session(session_id: str):
        session = get_session(session_id)
        if session is None:
            return _error(404, "unknown_session", f"no session {session_id}")
        with session.lock:
            return _session_payload(session)

    @app.patch("/sessions/{session_id}/relations")
    def patch_relations(session_id: str, edits: list[EditModel]):
        session = get_session(session_id)
        if session is None:
            return _error(404, "unknown_session", f"no session {session_id}")
        with session.lock:
            cleared = []
            conflicts = []
            for em in edits:
                edit = Edit.from_dict(em.model_dump())
                outcome = apply_edit(session.relations, edit)
                session.relations = outcome.matrix
                session.edit_log.append(edit)
                cleared.extend(c.to_dict() for c in outcome.cleared)
                conflicts = [c.to_dict() for c in outcome.conflicts]
            return {
                "relations": session.relations.to_dict(),
                "conflicts": conflicts,
                "cleared": cleared,
            }

    @app.post("/sessions/{session_id}/randomize")
    def randomize(session_id: str, body: RandomizeBody):
        session = get_session(session_id)
        if session is None:
            return _error(404, "unknown_session", f"no session {session_id}")
        with session.lock:
            rng = np.random.default_rng(body.seed)
            n = session.relations.n
            applied = []
            attempts = 0
            from .relations import CHANNELS

            while len(applied) < body.count and attempts < 60 * max(1, body.count):
                attempts += 1
                if n < 2:
                    break
                i = int(rng.integers(1, n + 1))
                j = int(rng.integers(1, n + 1))
                if i == j:
                    continue
                channel = CHANNELS[int(rng.integers(len(CHANNELS)))]
                op = "clear" if session.relations.channel(channel)[i - 1, j - 1] else "set"
                edit = Edit(op, channel, i, j, origin="machine")
                outcome = apply_edit(session.relations, edit)
                if outcome.conflicts or underivable_entries(outcome.matrix):
                    continue
                session.relations = outcome.matrix
                session.edit_log.append(edit)
                applied.append(edit.to_dict())
            return {
                "relations": session.relations.to_dict(),
                "conflicts": [],
                "toggles": applied,
            }

    @app.post("/sessions/{session_id}/generate")
    def generate(session_id: str, body: GenerateBody):
        session = get_session(session_id)
        if session is None:
            return _error(404, "unknown_session", f"no session {session_id}")
        with session.lock:
            if session.generating:
                return _error(409, "busy", "a generation is already running for this session")
            conflicts = validate(session.relations)
            if conflicts:
                return _error(
                    409, "conflicted", "relation matrix has conflicts",
                    {"conflicts": [c.to_dict() for c in conflicts]},
                )
            session.generating = True
            relations = session.relations
            canvas = session.graph.canvas
        try:
            n = relations.n
            request = GenerationRequest(
                relations, {}, frozenset(range(1, n + 1)), canvas,
                backend=body.backend, seed=body.seed,
            )
            result = synthesize(request)
            if body.insert_random:
                result = insert_random_nodes(result, body.insert_random, body.seed)
        finally:
            with session.lock:
                session.generating = False
        with session.lock:
            session.generated = result
        return result.to_json_dict()

    @app.get("/sessions/{session_id}/export")
    def export(session_id: str):
        session = get_session(session_id)
        if session is None:
            return _error(404, "unknown_session", f"no session {session_id}")
        with session.lock:
            return json.loads(serialize_layout(session.graph, session.relations))

    @app.post("/metrics/compare")
    def compare(body: CompareBody):
        ext = extractor()
        if ext is None:
            return _error(400, "no_extractor", "service has no corpus or extractor configured")
        if len(body.a) != len(body.b) or not body.a:
            return _error(400, "bad_request", "need equal-length non-empty layout lists")
        gen, ref, targets = [], [], []
        for doc_a, doc_b in zip(body.a, body.b):
            ga, _ = parse_layout(json.dumps(doc_a))
            gb, mb = parse_layout(json.dumps(doc_b))
            gen.append(ga)
            ref.append(gb)
            targets.append(mb)
        report = build_report(body.task, body.dataset, gen, ref, targets, ext)
        return report.to_json_dict()

    @app.on_event("shutdown")
    def snapshot():
        if not config.snapshot_dir:
            return
        out = Path(config.snapshot_dir)
        out.mkdir(parents=True, exist_ok=True)
        for session in sessions.values():
            with session.lock:
                blob = {
                    "session_id": session.session_id,
                    "canvas": list(session.graph.canvas),
                    "layout": json.loads(serialize_layout(session.graph, session.initial)),
                    "edit_log": [e.to_dict() for e in session.edit_log],
                    "relations": session.relations.to_dict(),
                }
            (out / f"{session.session_id}.json").write_text(json.dumps(blob), encoding="utf-8")

    app.state.sessions = sessions
    app.state.config = config
    return app
