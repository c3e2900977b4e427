"""Exemplar store for retrieval-grounded generation.

Documents are featurized into a fixed-length vector: a component-type
histogram over the vocabulary, eight layout features, and a 12-bucket hue
histogram of the palette.  Retrieval is an exact cosine scan — at a few
thousand records brute force is sub-millisecond and trivially testable.
Vector entries are rounded to 9 decimal digits so persisted stores are
byte-stable across runs and platforms.
"""
from __future__ import annotations

import json
import math
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .core import (
    DEFAULT_COMPONENT_TYPES,
    SpecDocument,
    document_from_tree,
    serialize_spec,
)
from .errors import EmptyStore, StorageError, UnknownRecord

HUE_BUCKETS = 12
LAYOUT_FEATURES = 8
VECTOR_PRECISION = 9  # decimal digits kept in every vector entry


def feature_dimension(vocabulary: Sequence[str] | None = None) -> int:
    vocab = vocabulary if vocabulary is not None else DEFAULT_COMPONENT_TYPES
    return len(vocab) + LAYOUT_FEATURES + HUE_BUCKETS


@dataclass(frozen=True)
class ExemplarRecord:
    id: str
    spec: SpecDocument
    code: str
    vector: tuple[float, ...]


@dataclass(frozen=True)
class RetrievalHit:
    record_id: str
    similarity: float


def _clamp01(value: float) -> float:
    return min(1.0, max(0.0, value))


def _hue_degrees(hex_color: str) -> float:
    """Hue in [0, 360) from an #RRGGBB string (HSL convention; 0 for greys)."""
    r = int(hex_color[1:3], 16) / 255.0
    g = int(hex_color[3:5], 16) / 255.0
    b = int(hex_color[5:7], 16) / 255.0
    mx, mn = max(r, g, b), min(r, g, b)
    if mx == mn:
        return 0.0
    d = mx - mn
    if mx == r:
        h = ((g - b) / d) % 6
    elif mx == g:
        h = (b - r) / d + 2
    else:
        h = (r - g) / d + 4
    return (h * 60.0) % 360.0


def featurize_spec(doc: SpecDocument, vocabulary: Sequence[str] | None = None) -> tuple[float, ...]:
    """Deterministic structural feature vector of dimension V + 8 + 12."""
    vocab = tuple(vocabulary if vocabulary is not None else DEFAULT_COMPONENT_TYPES)
    counts = [0.0] * len(vocab)
    position = {t: i for i, t in enumerate(vocab)}
    total = 0
    for section in doc.sections:
        for comp in section.components:
            if comp.type in position:
                counts[position[comp.type]] += 1.0
                total += 1
    if total:
        counts = [c / total for c in counts]

    sections = doc.sections
    n = len(sections)
    mean_fraction = sum(s.pos.fraction for s in sections) / n if n else 0.0
    mean_rows = sum(s.layout.grid_rows for s in sections) / n if n else 0.0
    mean_cols = sum(s.layout.grid_cols for s in sections) / n if n else 0.0
    layout = [
        _clamp01(doc.global_spec.layout.grid_columns / 24.0),
        _clamp01(doc.global_spec.layout.spacing_px / 32.0),
        _clamp01(n / 16.0),
        _clamp01(mean_fraction),
        _clamp01(mean_rows / 8.0),
        _clamp01(mean_cols / 8.0),
        _clamp01(doc.global_spec.shape.corner_radius_px / 32.0),
        _clamp01(len(doc.global_spec.colors) / 16.0),
    ]

    hues = [0.0] * HUE_BUCKETS
    for token in doc.global_spec.colors:
        bucket = int(_hue_degrees(token.hex) // (360 / HUE_BUCKETS)) % HUE_BUCKETS
        hues[bucket] += 1.0
    palette_n = len(doc.global_spec.colors)
    if palette_n:
        hues = [h / palette_n for h in hues]

    return tuple(round(v, VECTOR_PRECISION) for v in counts + layout + hues)


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    """Cosine similarity; pairs involving a zero vector score 0."""
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


_ID_NUM_RE = re.compile(r"(\d+)")


def _natural_key(record_id: str) -> tuple:
    return tuple(int(p) if p.isdigit() else p for p in _ID_NUM_RE.split(record_id))


class ExemplarStore:
    """SPEC-code pairs with vectors, optionally persisted as JSONL.

    Adds are serialized under a lock and appended to the backing file one
    record per line; queries read an immutable snapshot, so readers never
    observe a partially written record.
    """

    def __init__(self, path: str | os.PathLike | None = None,
                 vocabulary: Sequence[str] | None = None):
        self.path = Path(path) if path is not None else None
        self.vocabulary = tuple(vocabulary if vocabulary is not None else DEFAULT_COMPONENT_TYPES)
        self._records: list[ExemplarRecord] = []
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        try:
            text = self.path.read_text(encoding="utf-8")
        except OSError as exc:
            raise StorageError(f"cannot read store {self.path}: {exc}") from exc
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                record = ExemplarRecord(
                    id=obj["id"],
                    spec=document_from_tree(obj["spec"], self.vocabulary),
                    code=obj["code"],
                    vector=tuple(float(v) for v in obj["vector"]),
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise StorageError(f"{self.path}:{line_no}: bad record: {exc}") from exc
            self._records.append(record)

    @property
    def size(self) -> int:
        return len(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def get(self, record_id: str) -> ExemplarRecord:
        for record in self._records:
            if record.id == record_id:
                return record
        raise UnknownRecord(f"no record {record_id!r} in store")

    def _next_id(self) -> str:
        highest = 0
        for record in self._records:
            m = re.fullmatch(r"ex-(\d+)", record.id)
            if m:
                highest = max(highest, int(m.group(1)))
        return f"ex-{highest + 1}"

    def add(self, spec: SpecDocument, code: str) -> str:
        """Store one pair; returns the assigned monotonic id."""
        with self._lock:
            record = ExemplarRecord(
                id=self._next_id(),
                spec=spec,
                code=code,
                vector=featurize_spec(spec, self.vocabulary),
            )
            if self.path is not None:
                try:
                    with open(self.path, "a", encoding="utf-8") as handle:
                        handle.write(_record_line(record) + "\n")
                except OSError as exc:
                    raise StorageError(f"cannot append to {self.path}: {exc}") from exc
            self._records.append(record)
            return record.id

    def query(self, doc: SpecDocument, k: int) -> list[RetrievalHit]:
        """Exact top-k by cosine similarity; ties broken by ascending id."""
        if not self._records:
            raise EmptyStore("cannot query an empty store")
        if k < 1:
            raise ValueError("k must be positive")
        probe = featurize_spec(doc, self.vocabulary)
        scored = [
            (cosine_similarity(probe, record.vector), record.id)
            for record in self._records
        ]
        scored.sort(key=lambda item: (-item[0], _natural_key(item[1])))
        return [RetrievalHit(record_id=rid, similarity=sim) for sim, rid in scored[:k]]

    def save(self, path: str | os.PathLike | None = None) -> Path:
        """Write the whole store atomically (tmp file + rename)."""
        target = Path(path) if path is not None else self.path
        if target is None:
            raise StorageError("no path to save the store to")
        tmp = target.with_suffix(target.suffix + ".tmp")
        try:
            with open(tmp, "w", encoding="utf-8") as handle:
                for record in self._records:
                    handle.write(_record_line(record) + "\n")
            os.replace(tmp, target)
        except OSError as exc:
            raise StorageError(f"cannot write store {target}: {exc}") from exc
        return target


def _record_line(record: ExemplarRecord) -> str:
    # json.dumps emits shortest round-tripping float text, so 9-decimal
    # vector entries reload bit-exactly (the canonical emitter would quantize
    # them down to fraction precision).
    return json.dumps({
        "id": record.id,
        "spec": record.spec.to_dict(),
        "code": record.code,
        "vector": list(record.vector),
    }, separators=(",", ":"), ensure_ascii=False)


# Spec-level operation aliases.

def index_add(store: ExemplarStore, spec: SpecDocument, code: str) -> str:
    return store.add(spec, code)


def index_query(store: ExemplarStore, doc: SpecDocument, k: int) -> list[RetrievalHit]:
    return store.query(doc, k)


FEWSHOT_EXAMPLE_SPEC = "=== example {i} spec ==="
FEWSHOT_EXAMPLE_CODE = "=== example {i} code ==="
FEWSHOT_TARGET = "=== target spec ==="


def build_fewshot_block(doc: SpecDocument, hits: Sequence[RetrievalHit], store: ExemplarStore) -> str:
    """Deterministic grounding block: each hit's spec and code in similarity
    order, then the target spec."""
    parts: list[str] = []
    for i, hit in enumerate(hits, start=1):
        record = store.get(hit.record_id)
        parts.append(FEWSHOT_EXAMPLE_SPEC.format(i=i))
        parts.append(serialize_spec(record.spec))
        parts.append(FEWSHOT_EXAMPLE_CODE.format(i=i))
        parts.append(record.code)
    parts.append(FEWSHOT_TARGET)
    parts.append(serialize_spec(doc))
    return "\n".join(parts)
