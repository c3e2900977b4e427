"""HTTP service tying the pipeline together for the UI and for scripts.

Endpoints (base path /api/v1):

    POST /sessions                          create a session
    POST /sessions/{sid}/references        upload a PNG (+ optional sidecar
                                            boxes), run extraction, store SPEC
    POST /sessions/{sid}/compose           assemble a document from selected
                                            fragments of stored references
    POST /sessions/{sid}/edit              apply edit instructions or interpret
                                            free-text intent, under repair
    POST /sessions/{sid}/generate          retrieve exemplars, generate code,
                                            run the debug loop, persist files
    GET  /sessions/{sid}/versions          list the version tree
    POST /sessions/{sid}/rollback          move head (non-destructive)
    GET  /sessions/{sid}/diff?from=&to=    structural diff of two versions

Per-session mutations are serialized behind an exclusive lock; requests for
different sessions run fully in parallel.  Every response is derived from
durable state, so a restarted process resumes exactly where it stopped.
"""
from __future__ import annotations

import base64
import binascii
import json
from typing import Any

from fastapi import FastAPI, HTTPException, Request, UploadFile

from . import codegen as codegen_mod
from . import edit as edit_mod
from . import extraction as extraction_mod
from . import metrics as metrics_mod
from . import retrieval as retrieval_mod
from .clients import ModelClient, SidecarDetector
from .core import (
    EditInstruction,
    SpecDocument,
    SpecPath,
    default_document,
    document_from_tree,
    resolve_in_tree,
)
from .errors import (
    ClientError,
    ConstraintError,
    PathError,
    ProtocolError,
    SchemaError,
    ToolchainUnavailable,
    UispecError,
)
from .sessions import SessionManager, UnknownReference, UnknownSession, UnknownVersion
from .validate import validate

API_PREFIX = "/api/v1"
DEFAULT_EXEMPLAR_K = 2


def create_app(
    data_dir,
    *,
    model_client: ModelClient | None = None,
    detector=None,
    toolchain: codegen_mod.ToolchainSpec | None = None,
    store: retrieval_mod.ExemplarStore | None = None,
    exemplar_k: int = DEFAULT_EXEMPLAR_K,
    vocabulary=None,
    scratch_root=None,
) -> FastAPI:
    app = FastAPI(title="uispec service")
    manager = SessionManager(data_dir, vocabulary=vocabulary)
    app.state.manager = manager
    app.state.model_client = model_client
    app.state.detector = detector
    app.state.toolchain = toolchain or codegen_mod.default_toolchain()
    app.state.store = store
    app.state.exemplar_k = exemplar_k
    app.state.vocabulary = vocabulary
    app.state.scratch_root = scratch_root

    def require_client() -> ModelClient:
        if app.state.model_client is None:
            raise HTTPException(502, detail="no model client configured")
        return app.state.model_client

    def get_session(session_id: str):
        try:
            manager.head(session_id)
        except UnknownSession:
            raise HTTPException(404, detail=f"unknown session {session_id!r}")

    # -- sessions -----------------------------------------------------------

    @app.post(API_PREFIX + "/sessions")
    def create_session() -> dict[str, str]:
        return {"session_id": manager.create_session()}

    @app.post(API_PREFIX + "/sessions/{session_id}/references")
    async def upload_reference(session_id: str, image: UploadFile, boxes: UploadFile | None = None):
        get_session(session_id)
        png = await image.read()
        if not png:
            raise HTTPException(400, detail="empty image upload")
        try:
            array = extraction_mod.decode_png(png)
        except Exception:
            raise HTTPException(400, detail="image is not a decodable raster file")
        sidecar: list[dict] | None = None
        if boxes is not None:
            try:
                sidecar = json.loads((await boxes.read()).decode("utf-8"))
            except (ValueError, UnicodeDecodeError):
                raise HTTPException(400, detail="sidecar boxes must be a JSON list")
        detector = SidecarDetector(sidecar) if sidecar is not None else app.state.detector
        if detector is None:
            detector = SidecarDetector([])  # falls through to full-page region
        client = require_client()
        with manager.lock(session_id):
            try:
                spec = extraction_mod.extract_spec_from_image(
                    array, detector, client, vocabulary=app.state.vocabulary,
                )
            except (ClientError, ProtocolError, ConstraintError) as exc:
                raise HTTPException(502, detail={"error": str(exc), "repair_log": []})
            ref_id = manager.add_reference(session_id, png, spec, sidecar)
        return {"ref_id": ref_id, "spec": spec.to_dict()}

    # -- composition ----------------------------------------------------------

    @app.post(API_PREFIX + "/sessions/{session_id}/compose")
    def compose(session_id: str, payload: dict[str, Any]):
        get_session(session_id)
        selections = payload.get("selections", [])
        page_goal = payload.get("page_goal", "")
        overrides = payload.get("global_overrides")
        if not isinstance(selections, list) or not isinstance(page_goal, str):
            raise HTTPException(400, detail="selections must be a list and page_goal a string")
        with manager.lock(session_id):
            tree = default_document(page_goal).to_dict()
            for selection in selections:
                if not isinstance(selection, dict) or "ref_id" not in selection or "path" not in selection:
                    raise HTTPException(400, detail=f"bad selection {selection!r}")
                try:
                    ref_spec = manager.reference_spec(session_id, selection["ref_id"])
                    path = SpecPath.parse(selection["path"])
                    fragment = resolve_in_tree(ref_spec.to_dict(), path)
                except UnknownReference as exc:
                    raise HTTPException(404, detail=str(exc))
                except PathError as exc:
                    raise HTTPException(404, detail=str(exc))
                _apply_selection(tree, path, fragment)
            if overrides is not None:
                if not isinstance(overrides, dict):
                    raise HTTPException(400, detail="global_overrides must be an object")
                for key, value in overrides.items():
                    if key not in tree["global"]:
                        raise HTTPException(400, detail=f"unknown global field {key!r}")
                    tree["global"][key] = value
            try:
                doc = document_from_tree(tree, app.state.vocabulary)
            except (SchemaError, ConstraintError) as exc:
                raise HTTPException(409, detail={"violations": [], "error": str(exc)})
            report = validate(doc, app.state.vocabulary)
            if not report.ok:
                raise HTTPException(409, detail={"violations": [v.to_json_obj() for v in report.violations]})
            parent = manager.head(session_id)
            node = manager.add_version(session_id, doc, "compose", parent=parent)
        return {"version_id": node.id, "spec": doc.to_dict()}

    # -- editing ----------------------------------------------------------------

    @app.post(API_PREFIX + "/sessions/{session_id}/edit")
    def edit(session_id: str, payload: Any):
        get_session(session_id)
        client = require_client()
        with manager.lock(session_id):
            head = manager.head_version(session_id)
            if head is None:
                raise HTTPException(400, detail="session has no composed version to edit")
            produced_by = "edit"
            if isinstance(payload, list):
                if not payload:
                    raise HTTPException(400, detail="empty edit list")
                try:
                    instructions = [EditInstruction.from_json_obj(item) for item in payload]
                except ProtocolError as exc:
                    raise HTTPException(400, detail=str(exc))
            elif isinstance(payload, dict) and isinstance(payload.get("intent"), str):
                reference = payload.get("reference")
                if reference is not None and not isinstance(reference, dict):
                    raise HTTPException(400, detail="reference fragment must be an object")
                if reference is not None:
                    produced_by = "extract-merge"
                try:
                    instructions = edit_mod.interpret_intent(
                        payload["intent"], reference, head.spec, client,
                    )
                except ClientError as exc:
                    raise HTTPException(502, detail=str(exc))
                except ProtocolError as exc:
                    raise HTTPException(502, detail=f"intent interpretation failed: {exc}")
                if not instructions:
                    raise HTTPException(400, detail="intent produced no edits")
            else:
                raise HTTPException(400, detail="body must be an edit list or {intent, reference?}")
            outcome = edit_mod.apply_with_repair(
                head.spec, instructions, client, vocabulary=app.state.vocabulary,
            )
            log = [ctx.to_json_obj() for ctx in outcome.repair_log]
            if not outcome.applied:
                raise HTTPException(422, detail={
                    "error": "edit repair exhausted",
                    "attempts": outcome.attempts,
                    "repair_log": log,
                })
            node = manager.add_version(
                session_id, outcome.result, produced_by,
                edits=outcome.applied, parent=head.id,
            )
        return {
            "version_id": node.id,
            "spec": outcome.result.to_dict(),
            "attempts": outcome.attempts,
            "repair_log": log,
        }

    # -- generation ----------------------------------------------------------------

    @app.post(API_PREFIX + "/sessions/{session_id}/generate")
    async def generate(session_id: str, request: Request):
        get_session(session_id)
        client = require_client()
        body = await request.body()
        payload = json.loads(body) if body else {}
        if not isinstance(payload, dict):
            raise HTTPException(400, detail="body must be an object")
        with manager.lock(session_id):
            head = manager.head_version(session_id)
            if head is None:
                raise HTTPException(400, detail="session has no composed version to generate")
            store: retrieval_mod.ExemplarStore | None = app.state.store
            fewshot = ""
            exemplars: list[str] = []
            if store is not None and len(store):
                hits = store.query(head.spec, k=app.state.exemplar_k)
                fewshot = retrieval_mod.build_fewshot_block(head.spec, hits, store)
                exemplars = [hit.record_id for hit in hits]
            try:
                artifact = codegen_mod.generate_code(
                    head.spec, fewshot, client,
                    vocabulary=app.state.vocabulary,
                )
                outcome = codegen_mod.debug_loop(
                    artifact, head.spec, client, app.state.toolchain,
                    scratch_root=app.state.scratch_root,
                )
            except ToolchainUnavailable as exc:
                raise HTTPException(424, detail=str(exc))
            except (ClientError, ProtocolError) as exc:
                raise HTTPException(502, detail=str(exc))
            manager.store_artifact(session_id, head.id, outcome.artifact.files)
            response: dict[str, Any] = {
                "version_id": head.id,
                "artifact": {
                    "files": sorted(outcome.artifact.files),
                    "spec_hash": outcome.artifact.spec_hash,
                    "target": outcome.artifact.target,
                },
                "compile_ok": outcome.compile_result.ok,
                "revisions": outcome.revisions,
                "exemplars": exemplars,
            }
            render_b64 = payload.get("render_png_b64")
            reference_ref = payload.get("reference_ref_id")
            if isinstance(render_b64, str) and isinstance(reference_ref, str):
                try:
                    render = extraction_mod.decode_png(base64.b64decode(render_b64))
                    reference = extraction_mod.decode_png(
                        manager.reference_image(session_id, reference_ref))
                except UnknownReference as exc:
                    raise HTTPException(404, detail=str(exc))
                except (ValueError, binascii.Error):
                    raise HTTPException(400, detail="render_png_b64 is not a base64 PNG")
                record = metrics_mod.evaluate_fidelity(render, reference)
                response["metrics"] = record.to_json_obj()
        return response

    # -- history ----------------------------------------------------------------

    @app.get(API_PREFIX + "/sessions/{session_id}/versions")
    def versions(session_id: str):
        get_session(session_id)
        nodes = manager.list_versions(session_id)
        return {
            "head": manager.head(session_id),
            "nodes": [
                {
                    "id": n.id,
                    "parent": n.parent,
                    "produced_by": n.produced_by,
                    "created_at": n.created_at,
                }
                for n in nodes
            ],
        }

    @app.get(API_PREFIX + "/sessions/{session_id}/versions/{version_id}")
    def version_detail(session_id: str, version_id: str):
        get_session(session_id)
        try:
            node = manager.get_version(session_id, version_id)
        except UnknownVersion as exc:
            raise HTTPException(404, detail=str(exc))
        return node.to_json_obj()

    @app.post(API_PREFIX + "/sessions/{session_id}/rollback")
    def rollback(session_id: str, payload: dict[str, Any]):
        get_session(session_id)
        version_id = payload.get("version_id")
        if not isinstance(version_id, str):
            raise HTTPException(400, detail="version_id required")
        with manager.lock(session_id):
            try:
                manager.set_head(session_id, version_id)
            except UnknownVersion as exc:
                raise HTTPException(404, detail=str(exc))
        return {"head": version_id}

    @app.get(API_PREFIX + "/sessions/{session_id}/diff")
    def diff(session_id: str, request: Request):
        get_session(session_id)
        from_id = request.query_params.get("from")
        to_id = request.query_params.get("to")
        if not from_id or not to_id:
            raise HTTPException(400, detail="from and to query parameters required")
        try:
            before = manager.get_version(session_id, from_id)
            after = manager.get_version(session_id, to_id)
        except UnknownVersion as exc:
            raise HTTPException(404, detail=str(exc))
        from .core import spec_diff

        edits = spec_diff(before.spec, after.spec)
        return {"edits": [e.to_json_obj() for e in edits]}

    @app.exception_handler(UispecError)
    async def uispec_error_handler(request: Request, exc: UispecError):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=500, content={"detail": str(exc)})

    return app


def _apply_selection(tree: dict[str, Any], path: SpecPath, fragment: Any) -> None:
    """Copy one selected fragment into the composition tree.

    Global selections overwrite (later selections win); section selections
    append, re-identified on collision so picks from different references
    can never clash.
    """
    segments = path.segments
    if segments and segments[0] == "global":
        if len(segments) == 1:
            tree["global"] = fragment
            return
        node = tree["global"]
        for seg in segments[1:-1]:
            node = node[seg] if isinstance(node, dict) else node[int(seg)]
        last = segments[-1]
        if isinstance(node, dict) and isinstance(last, str) and last in node:
            node[last] = fragment
            return
        raise HTTPException(400, detail=f"unsupported global selection path {path}")
    if segments and segments[0] == "sections" and len(segments) == 2 \
            and isinstance(fragment, dict) and "id" in fragment:
        _append_section(tree, fragment)
        return
    raise HTTPException(400, detail=f"selection path {path} must target /global/... or one section")


def _append_section(tree: dict[str, Any], fragment: dict[str, Any]) -> None:
    used: set[str] = set()
    for section in tree["sections"]:
        used.add(section["id"])
        used.update(c["id"] for c in section.get("components", []))
    section = json.loads(json.dumps(fragment))  # deep copy of the selected subtree
    incoming = {c["id"] for c in section.get("components", [])}
    if section["id"] in used:
        section["id"] = _next_free(used | incoming, "sec")
    used.add(section["id"])
    for component in section.get("components", []):
        incoming.discard(component["id"])
        if component["id"] in used:
            component["id"] = _next_free(used | incoming, "comp")
        used.add(component["id"])
    tree["sections"].append(section)


def _next_free(used: set[str], prefix: str) -> str:
    n = 1
    while f"{prefix}-{n}" in used:
        n += 1
    return f"{prefix}-{n}"
