"""Durable session state: references, immutable version tree, head pointer.

Layout on disk, one directory per session:

    sessions/s-1/session.json      manifest: head pointer, counters, references
    sessions/s-1/refs/r-1.png      uploaded reference image (+ sidecar, spec)
    sessions/s-1/versions/v-1.json immutable snapshot + the edit that made it
    sessions/s-1/artifacts/v-2/    generated code for a version

Every write is tmp-file + atomic rename, and version files land before the
manifest that points at them, so a crash at any instant leaves every
persisted version parseable and the head resolvable.  Manifests are read
through on each access; a process restart needs no recovery step.
"""
from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

from .core import EditInstruction, SpecDocument, document_from_tree
from .errors import UispecError

PRODUCED_BY = ("compose", "edit", "extract-merge")


class UnknownSession(UispecError):
    pass


class UnknownVersion(UispecError):
    pass


class UnknownReference(UispecError):
    pass


@dataclass(frozen=True)
class VersionNode:
    id: str
    parent: str | None
    spec: SpecDocument
    produced_by: str
    edits: tuple[EditInstruction, ...]
    created_at: str

    def to_json_obj(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "parent": self.parent,
            "produced_by": self.produced_by,
            "edits": [e.to_json_obj() for e in self.edits],
            "created_at": self.created_at,
            "spec": self.spec.to_dict(),
        }


def _atomic_write(path: Path, data: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(data, encoding="utf-8")
    os.replace(tmp, path)


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


class SessionManager:
    """Owns the sessions directory; all mutation goes through here.

    Cross-session operations are fully parallel.  Per-session writes must be
    serialized by the caller via :meth:`lock` (the HTTP layer takes it per
    request); reads never block reads.
    """

    def __init__(self, data_dir: str | os.PathLike, vocabulary: Sequence[str] | None = None):
        self.root = Path(data_dir)
        self.sessions_dir = self.root / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.vocabulary = vocabulary
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    # -- locking ------------------------------------------------------------

    def lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            if session_id not in self._locks:
                self._locks[session_id] = threading.Lock()
            return self._locks[session_id]

    # -- sessions -------------------------------------------------------------

    def _session_path(self, session_id: str) -> Path:
        return self.sessions_dir / session_id

    def _manifest_path(self, session_id: str) -> Path:
        return self._session_path(session_id) / "session.json"

    def _read_manifest(self, session_id: str) -> dict[str, Any]:
        path = self._manifest_path(session_id)
        if not path.is_file():
            raise UnknownSession(f"no session {session_id!r}")
        return json.loads(path.read_text(encoding="utf-8"))

    def _write_manifest(self, session_id: str, manifest: dict[str, Any]) -> None:
        _atomic_write(self._manifest_path(session_id), json.dumps(manifest, indent=1))

    def list_sessions(self) -> list[str]:
        ids = [p.name for p in self.sessions_dir.iterdir()
               if p.is_dir() and (p / "session.json").is_file()]
        return sorted(ids, key=_natural)

    def create_session(self) -> str:
        with self._locks_guard:
            highest = 0
            for sid in self.sessions_dir.iterdir():
                m = re.fullmatch(r"s-(\d+)", sid.name)
                if m:
                    highest = max(highest, int(m.group(1)))
            session_id = f"s-{highest + 1}"
            sdir = self._session_path(session_id)
            (sdir / "refs").mkdir(parents=True)
            (sdir / "versions").mkdir()
            (sdir / "artifacts").mkdir()
            self._write_manifest(session_id, {
                "id": session_id,
                "head": None,
                "next_ref": 1,
                "next_version": 1,
                "references": [],
            })
            return session_id

    def head(self, session_id: str) -> str | None:
        return self._read_manifest(session_id)["head"]

    # -- references -----------------------------------------------------------

    def add_reference(
        self,
        session_id: str,
        image_png: bytes,
        spec: SpecDocument,
        sidecar_boxes: list[dict] | None = None,
    ) -> str:
        manifest = self._read_manifest(session_id)
        ref_id = f"r-{manifest['next_ref']}"
        refs_dir = self._session_path(session_id) / "refs"
        (refs_dir / f"{ref_id}.png").write_bytes(image_png)
        _atomic_write(refs_dir / f"{ref_id}.spec.json", json.dumps(spec.to_dict()))
        if sidecar_boxes is not None:
            _atomic_write(refs_dir / f"{ref_id}.boxes.json", json.dumps(sidecar_boxes))
        manifest["next_ref"] += 1
        manifest["references"].append({"ref_id": ref_id})
        self._write_manifest(session_id, manifest)
        return ref_id

    def reference_spec(self, session_id: str, ref_id: str) -> SpecDocument:
        path = self._session_path(session_id) / "refs" / f"{ref_id}.spec.json"
        if not path.is_file():
            raise UnknownReference(f"no reference {ref_id!r} in {session_id}")
        return document_from_tree(json.loads(path.read_text(encoding="utf-8")), self.vocabulary)

    def reference_image(self, session_id: str, ref_id: str) -> bytes:
        path = self._session_path(session_id) / "refs" / f"{ref_id}.png"
        if not path.is_file():
            raise UnknownReference(f"no reference {ref_id!r} in {session_id}")
        return path.read_bytes()

    def list_references(self, session_id: str) -> list[str]:
        return [r["ref_id"] for r in self._read_manifest(session_id)["references"]]

    # -- versions -------------------------------------------------------------

    def add_version(
        self,
        session_id: str,
        spec: SpecDocument,
        produced_by: str,
        edits: Sequence[EditInstruction] = (),
        parent: str | None = None,
    ) -> VersionNode:
        if produced_by not in PRODUCED_BY:
            raise ValueError(f"unknown produced_by {produced_by!r}")
        manifest = self._read_manifest(session_id)
        version_id = f"v-{manifest['next_version']}"
        node = VersionNode(
            id=version_id,
            parent=parent,
            spec=spec,
            produced_by=produced_by,
            edits=tuple(edits),
            created_at=_now_iso(),
        )
        # Version snapshot first, then the manifest that points at it: a
        # crash in between leaves the head on the previous, intact version.
        version_path = self._session_path(session_id) / "versions" / f"{version_id}.json"
        _atomic_write(version_path, json.dumps(node.to_json_obj(), indent=1))
        manifest["next_version"] += 1
        manifest["head"] = version_id
        self._write_manifest(session_id, manifest)
        return node

    def get_version(self, session_id: str, version_id: str) -> VersionNode:
        path = self._session_path(session_id) / "versions" / f"{version_id}.json"
        if not path.is_file():
            raise UnknownVersion(f"no version {version_id!r} in {session_id}")
        obj = json.loads(path.read_text(encoding="utf-8"))
        return VersionNode(
            id=obj["id"],
            parent=obj["parent"],
            spec=document_from_tree(obj["spec"], self.vocabulary),
            produced_by=obj["produced_by"],
            edits=tuple(EditInstruction.from_json_obj(e) for e in obj["edits"]),
            created_at=obj["created_at"],
        )

    def head_version(self, session_id: str) -> VersionNode | None:
        head = self.head(session_id)
        return self.get_version(session_id, head) if head else None

    def list_versions(self, session_id: str) -> list[VersionNode]:
        vdir = self._session_path(session_id) / "versions"
        self._read_manifest(session_id)  # raises UnknownSession first
        nodes = [self.get_version(session_id, p.stem) for p in vdir.glob("v-*.json")]
        return sorted(nodes, key=lambda n: _natural(n.id))

    def set_head(self, session_id: str, version_id: str) -> None:
        manifest = self._read_manifest(session_id)
        self.get_version(session_id, version_id)  # 404 before moving anything
        manifest["head"] = version_id
        self._write_manifest(session_id, manifest)

    # -- artifacts ------------------------------------------------------------

    def artifact_dir(self, session_id: str, version_id: str) -> Path:
        return self._session_path(session_id) / "artifacts" / version_id

    def store_artifact(self, session_id: str, version_id: str, files: dict[str, str]) -> Path:
        adir = self.artifact_dir(session_id, version_id)
        for rel, text in files.items():
            target = adir / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            _atomic_write(target, text)
        return adir


def _natural(text: str) -> tuple:
    return tuple(int(p) if p.isdigit() else p for p in re.split(r"(\d+)", text))
