"""Core document model for structured UI specifications.

A document is a two-level structure: a global profile (layout grid, color
palette, shape language, scenario tags) plus an ordered list of sections,
each holding components.  The model round-trips through a canonical JSON
wire form that is byte-deterministic, addressable by slash-separated paths,
and diffable into `<operation, path, value>` edit instructions.

All types are frozen dataclasses holding tuples; values are immutable after
construction and safe to share across threads.  Constructors do not check
cross-node invariants: `parse_spec` enforces them at the wire boundary and
`uispec.validate` reports them for programmatically built documents.
"""
from __future__ import annotations

import difflib
import json
import re
from dataclasses import dataclass
from typing import Any, Sequence

from .errors import (
    ConstraintError,
    PathAmbiguous,
    PathError,
    PathNotFound,
    ProtocolError,
    SchemaError,
    SpecSyntaxError,
)

# Closed component vocabulary; configurable per call, these are the defaults.
DEFAULT_COMPONENT_TYPES: tuple[str, ...] = (
    "Menu", "Card", "Statistic", "Table", "Chart", "Form", "Button",
    "Input", "Tabs", "Breadcrumb", "List", "Avatar", "Badge", "Banner",
    "Sidebar", "Header", "Footer", "SearchBar", "Pagination", "Modal",
)

ANCHORS: frozenset[str] = frozenset({"left", "right", "top", "bottom", "center", "full"})

DEFAULT_GRID_COLUMNS = 12
DEFAULT_SPACING_PX = 8
DEFAULT_CORNER_RADIUS_PX = 8

_HEX_RE = re.compile(r"^#[0-9A-F]{6}$")

# Legacy-style path aliases mapped onto the canonical grammar.
PATH_ALIASES: dict[str, tuple[str, ...]] = {
    "VisualStyle": ("global",),
    "DesignStyle": ("shape", "semantic"),
}

# Fractions are quantized to 4 decimal digits at the wire boundary.
FRACTION_DIGITS = 4


# ---------------------------------------------------------------------------
# Data model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LayoutSpec:
    """Page-level grid: column count, base spacing, semantic labels."""

    grid_columns: int
    spacing_px: int
    semantic: tuple[str, ...] = ()


@dataclass(frozen=True)
class ColorToken:
    """A palette entry: uppercase "#RRGGBB" hex plus a semantic role."""

    hex: str
    role: str


@dataclass(frozen=True)
class ShapeSpec:
    """Parameterized geometry (corner radius) plus semantic style labels."""

    corner_radius_px: int
    semantic: tuple[str, ...] = ()


@dataclass(frozen=True)
class GlobalSpecification:
    layout: LayoutSpec
    colors: tuple[ColorToken, ...] = ()
    shape: ShapeSpec = ShapeSpec(DEFAULT_CORNER_RADIUS_PX)
    scenario: tuple[str, ...] = ()

    def palette_roles(self) -> tuple[str, ...]:
        return tuple(token.role for token in self.colors)


@dataclass(frozen=True)
class PositionSpec:
    """Coarse placement within the page plus a proportional share."""

    anchor: str
    fraction: float


@dataclass(frozen=True)
class SectionLayout:
    grid_rows: int
    grid_cols: int
    spacing_px: int


@dataclass(frozen=True)
class ComponentSpec:
    type: str
    id: str
    func: str
    layout: SectionLayout
    colors: tuple[str, ...] = ()


@dataclass(frozen=True)
class SectionSpec:
    id: str
    pos: PositionSpec
    layout: SectionLayout
    colors: tuple[str, ...] = ()
    components: tuple[ComponentSpec, ...] = ()


@dataclass(frozen=True)
class SpecDocument:
    page_goal: str
    global_spec: GlobalSpecification
    sections: tuple[SectionSpec, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        """Plain-tree form in canonical key order (fresh containers)."""
        return {
            "page_goal": self.page_goal,
            "global": {
                "layout": {
                    "grid_columns": self.global_spec.layout.grid_columns,
                    "spacing_px": self.global_spec.layout.spacing_px,
                    "semantic": list(self.global_spec.layout.semantic),
                },
                "colors": [
                    {"hex": t.hex, "role": t.role} for t in self.global_spec.colors
                ],
                "shape": {
                    "corner_radius_px": self.global_spec.shape.corner_radius_px,
                    "semantic": list(self.global_spec.shape.semantic),
                },
                "scenario": list(self.global_spec.scenario),
            },
            "sections": [_section_to_dict(s) for s in self.sections],
        }

    def all_ids(self) -> list[str]:
        """Section and component ids in document order."""
        ids: list[str] = []
        for section in self.sections:
            ids.append(section.id)
            ids.extend(c.id for c in section.components)
        return ids


def _section_to_dict(section: SectionSpec) -> dict[str, Any]:
    return {
        "id": section.id,
        "pos": {"anchor": section.pos.anchor, "fraction": section.pos.fraction},
        "layout": _layout_to_dict(section.layout),
        "colors": list(section.colors),
        "components": [
            {
                "type": c.type,
                "id": c.id,
                "func": c.func,
                "layout": _layout_to_dict(c.layout),
                "colors": list(c.colors),
            }
            for c in section.components
        ],
    }


def _layout_to_dict(layout: SectionLayout) -> dict[str, Any]:
    return {
        "grid_rows": layout.grid_rows,
        "grid_cols": layout.grid_cols,
        "spacing_px": layout.spacing_px,
    }


def default_document(page_goal: str = "") -> SpecDocument:
    """A minimal valid document: default grid, empty palette, no sections."""
    return SpecDocument(
        page_goal=page_goal,
        global_spec=GlobalSpecification(
            layout=LayoutSpec(DEFAULT_GRID_COLUMNS, DEFAULT_SPACING_PX),
        ),
    )


# ---------------------------------------------------------------------------
# Canonical serialization
# ---------------------------------------------------------------------------

def _format_fraction(value: float) -> str:
    # Up to 4 fractional digits, trailing zeros stripped, at least one kept.
    text = f"{value:.{FRACTION_DIGITS}f}".rstrip("0")
    return text + "0" if text.endswith(".") else text


def canonical_json(value: Any) -> str:
    """Canonical JSON text: fixed key order (insertion order of the tree),
    no insignificant whitespace, UTF-8, floats as 4-digit decimals."""
    parts: list[str] = []
    _emit(value, parts)
    return "".join(parts)


def _emit(value: Any, out: list[str]) -> None:
    if isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=False))
    elif isinstance(value, bool):  # before int: bool subclasses int
        out.append("true" if value else "false")
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, float):
        out.append(_format_fraction(value))
    elif isinstance(value, dict):
        out.append("{")
        for i, (key, item) in enumerate(value.items()):
            if i:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _emit(item, out)
        out.append("}")
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _emit(item, out)
        out.append("]")
    elif value is None:
        out.append("null")
    else:
        raise TypeError(f"cannot serialize {type(value).__name__}")


def serialize_spec(doc: SpecDocument) -> str:
    """Canonical wire form; byte-identical for structurally equal documents."""
    return canonical_json(doc.to_dict())


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _reject_duplicate_keys(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    seen: dict[str, Any] = {}
    for key, value in pairs:
        if key in seen:
            raise SchemaError(f"duplicate object key {key!r}")
        seen[key] = value
    return seen


def parse_spec(text: str, vocabulary: Sequence[str] | None = None) -> SpecDocument:
    """Parse wire-format JSON into a document.

    Unknown fields are rejected, not ignored.  Structural invariants (hex
    format, ranges, component vocabulary, id uniqueness) are enforced here;
    cross-reference semantics such as palette membership are the validator's
    job so that violation reports stay reachable.
    """
    try:
        tree = json.loads(text, object_pairs_hook=_reject_duplicate_keys)
    except SchemaError:
        raise
    except json.JSONDecodeError as exc:
        raise SpecSyntaxError(f"malformed JSON: {exc}") from exc
    return document_from_tree(tree, vocabulary)


def document_from_tree(tree: Any, vocabulary: Sequence[str] | None = None) -> SpecDocument:
    """Build a document from an already-decoded JSON tree (strict)."""
    vocab = frozenset(vocabulary if vocabulary is not None else DEFAULT_COMPONENT_TYPES)
    obj = _expect_object(tree, ("page_goal", "global", "sections"), "document")
    doc = SpecDocument(
        page_goal=_expect_str(obj["page_goal"], "page_goal"),
        global_spec=_parse_global(obj["global"]),
        sections=tuple(
            _parse_section(item, f"sections[{i}]", vocab)
            for i, item in enumerate(_expect_list(obj["sections"], "sections"))
        ),
    )
    ids = doc.all_ids()
    dup = _first_duplicate(ids)
    if dup is not None:
        raise ConstraintError(f"duplicate id {dup!r}", code="duplicate-id")
    return doc


def _first_duplicate(items: Sequence[str]) -> str | None:
    seen: set[str] = set()
    for item in items:
        if item in seen:
            return item
        seen.add(item)
    return None


def _expect_object(value: Any, fields: tuple[str, ...], where: str) -> dict[str, Any]:
    if not isinstance(value, dict):
        raise SchemaError(f"{where}: expected object, got {type(value).__name__}")
    unknown = set(value) - set(fields)
    if unknown:
        raise SchemaError(f"{where}: unknown field {sorted(unknown)[0]!r}")
    missing = [f for f in fields if f not in value]
    if missing:
        raise SchemaError(f"{where}: missing field {missing[0]!r}")
    return value


def _expect_str(value: Any, where: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(f"{where}: expected string, got {type(value).__name__}")
    return value


def _expect_int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{where}: expected integer, got {type(value).__name__}")
    return value


def _expect_list(value: Any, where: str) -> list[Any]:
    if not isinstance(value, list):
        raise SchemaError(f"{where}: expected list, got {type(value).__name__}")
    return value


def _expect_str_list(value: Any, where: str) -> tuple[str, ...]:
    return tuple(_expect_str(v, f"{where}[{i}]") for i, v in enumerate(_expect_list(value, where)))


def _parse_global(value: Any) -> GlobalSpecification:
    obj = _expect_object(value, ("layout", "colors", "shape", "scenario"), "global")
    layout_obj = _expect_object(obj["layout"], ("grid_columns", "spacing_px", "semantic"), "global.layout")
    grid_columns = _expect_int(layout_obj["grid_columns"], "grid_columns")
    spacing = _expect_int(layout_obj["spacing_px"], "spacing_px")
    if grid_columns < 1:
        raise ConstraintError("grid_columns must be >= 1", code="range")
    if spacing < 0:
        raise ConstraintError("spacing_px must be >= 0", code="range")
    shape_obj = _expect_object(obj["shape"], ("corner_radius_px", "semantic"), "global.shape")
    radius = _expect_int(shape_obj["corner_radius_px"], "corner_radius_px")
    if radius < 0:
        raise ConstraintError("corner_radius_px must be >= 0", code="range")
    return GlobalSpecification(
        layout=LayoutSpec(grid_columns, spacing, _expect_str_list(layout_obj["semantic"], "global.layout.semantic")),
        colors=tuple(_parse_color(item, f"global.colors[{i}]") for i, item in enumerate(_expect_list(obj["colors"], "global.colors"))),
        shape=ShapeSpec(radius, _expect_str_list(shape_obj["semantic"], "global.shape.semantic")),
        scenario=_expect_str_list(obj["scenario"], "global.scenario"),
    )


def _parse_color(value: Any, where: str) -> ColorToken:
    obj = _expect_object(value, ("hex", "role"), where)
    hex_value = _expect_str(obj["hex"], f"{where}.hex")
    if not _HEX_RE.match(hex_value):
        raise ConstraintError(f"{where}: {hex_value!r} is not an uppercase #RRGGBB color", code="hex")
    return ColorToken(hex=hex_value, role=_expect_str(obj["role"], f"{where}.role"))


def _parse_fraction(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where}: expected number, got {type(value).__name__}")
    quantized = round(float(value), FRACTION_DIGITS)
    if not 0 < quantized <= 1:
        raise ConstraintError(f"{where}: fraction {value} outside (0, 1]", code="fraction")
    return quantized


def _parse_section_layout(value: Any, where: str) -> SectionLayout:
    obj = _expect_object(value, ("grid_rows", "grid_cols", "spacing_px"), where)
    rows = _expect_int(obj["grid_rows"], f"{where}.grid_rows")
    cols = _expect_int(obj["grid_cols"], f"{where}.grid_cols")
    spacing = _expect_int(obj["spacing_px"], f"{where}.spacing_px")
    if rows < 1 or cols < 1:
        raise ConstraintError(f"{where}: grid dimensions must be >= 1", code="range")
    if spacing < 0:
        raise ConstraintError(f"{where}: spacing_px must be >= 0", code="range")
    return SectionLayout(rows, cols, spacing)


def _parse_section(value: Any, where: str, vocab: frozenset[str]) -> SectionSpec:
    obj = _expect_object(value, ("id", "pos", "layout", "colors", "components"), where)
    pos_obj = _expect_object(obj["pos"], ("anchor", "fraction"), f"{where}.pos")
    anchor = _expect_str(pos_obj["anchor"], f"{where}.pos.anchor")
    if anchor not in ANCHORS:
        raise ConstraintError(f"{where}: unknown anchor {anchor!r}", code="anchor")
    return SectionSpec(
        id=_expect_str(obj["id"], f"{where}.id"),
        pos=PositionSpec(anchor, _parse_fraction(pos_obj["fraction"], f"{where}.pos.fraction")),
        layout=_parse_section_layout(obj["layout"], f"{where}.layout"),
        colors=_expect_str_list(obj["colors"], f"{where}.colors"),
        components=tuple(
            _parse_component(item, f"{where}.components[{i}]", vocab)
            for i, item in enumerate(_expect_list(obj["components"], f"{where}.components"))
        ),
    )


def _parse_component(value: Any, where: str, vocab: frozenset[str]) -> ComponentSpec:
    obj = _expect_object(value, ("type", "id", "func", "layout", "colors"), where)
    ctype = _expect_str(obj["type"], f"{where}.type")
    if ctype not in vocab:
        raise ConstraintError(f"{where}: component type {ctype!r} not in vocabulary", code="vocabulary")
    return ComponentSpec(
        type=ctype,
        id=_expect_str(obj["id"], f"{where}.id"),
        func=_expect_str(obj["func"], f"{where}.func"),
        layout=_parse_section_layout(obj["layout"], f"{where}.layout"),
        colors=_expect_str_list(obj["colors"], f"{where}.colors"),
    )


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpecPath:
    """Slash-separated address of one node.

    Segments are field names, zero-based list indices, ``#<id>`` references
    (matched against the ``id`` of items in the current list), or the append
    marker ``-`` (valid only as an insert target).
    """

    segments: tuple[int | str, ...] = ()

    @classmethod
    def parse(cls, text: str) -> "SpecPath":
        if not isinstance(text, str) or not text.startswith("/"):
            raise PathError(f"path must start with '/': {text!r}")
        if text == "/":
            return cls(())
        segments: list[int | str] = []
        for raw in text[1:].split("/"):
            if raw == "":
                raise PathError(f"empty segment in path {text!r}")
            if raw in PATH_ALIASES:
                segments.extend(PATH_ALIASES[raw])
            elif raw.isdigit():
                segments.append(int(raw))
            else:
                segments.append(raw)
        return cls(tuple(segments))

    def child(self, segment: int | str) -> "SpecPath":
        return SpecPath(self.segments + (segment,))

    def __str__(self) -> str:
        if not self.segments:
            return "/"
        return "/" + "/".join(str(s) for s in self.segments)

    def is_prefix_of(self, other: "SpecPath") -> bool:
        n = len(self.segments)
        return len(other.segments) >= n and other.segments[:n] == self.segments


@dataclass(frozen=True)
class NodeHandle:
    """Resolution result: the canonical path plus the addressed fragment."""

    path: SpecPath
    value: Any


def _step(node: Any, segment: int | str, path: SpecPath) -> Any:
    if isinstance(node, dict):
        if isinstance(segment, str) and not segment.startswith("#") and segment != "-":
            if segment in node:
                return node[segment]
        raise PathNotFound(f"no node at {path}: segment {segment!r}")
    if isinstance(node, list):
        if isinstance(segment, int):
            if 0 <= segment < len(node):
                return node[segment]
            raise PathNotFound(f"index {segment} out of range at {path}")
        if isinstance(segment, str) and segment.startswith("#"):
            wanted = segment[1:]
            matches = [item for item in node if isinstance(item, dict) and item.get("id") == wanted]
            if not matches:
                raise PathNotFound(f"no item with id {wanted!r} at {path}")
            if len(matches) > 1:
                raise PathAmbiguous(f"id {wanted!r} matches {len(matches)} items at {path}")
            return matches[0]
        raise PathNotFound(f"segment {segment!r} cannot address a list at {path}")
    raise PathNotFound(f"path {path} descends into a scalar")


def resolve_in_tree(tree: Any, path: SpecPath) -> Any:
    """Resolve against a plain JSON tree; raises PathNotFound/PathAmbiguous."""
    node = tree
    for segment in path.segments:
        node = _step(node, segment, path)
    return node


def resolve_path(doc: SpecDocument, path: SpecPath | str) -> NodeHandle:
    """Resolve a path to the unique node it addresses."""
    if isinstance(path, str):
        path = SpecPath.parse(path)
    value = resolve_in_tree(doc.to_dict(), path)
    return NodeHandle(path=path, value=value)


# ---------------------------------------------------------------------------
# Edit instructions and structural diff
# ---------------------------------------------------------------------------

VALID_OPERATIONS = ("replace", "insert", "remove")


@dataclass(frozen=True)
class EditInstruction:
    """One `<operation, path, value>` triplet.

    ``value`` is a JSON fragment, required for replace/insert and absent
    (None) for remove.
    """

    operation: str
    path: SpecPath
    value: Any = None

    def to_json_obj(self) -> dict[str, Any]:
        obj: dict[str, Any] = {"op": self.operation, "path": str(self.path)}
        if self.operation != "remove":
            obj["value"] = self.value
        return obj

    @classmethod
    def from_json_obj(cls, obj: Any) -> "EditInstruction":
        if not isinstance(obj, dict):
            raise ProtocolError(f"edit instruction must be an object, got {type(obj).__name__}")
        unknown = set(obj) - {"op", "path", "value"}
        if unknown:
            raise ProtocolError(f"unknown edit field {sorted(unknown)[0]!r}")
        op = obj.get("op")
        if op not in VALID_OPERATIONS:
            raise ProtocolError(f"unknown operation {op!r}")
        if "path" not in obj:
            raise ProtocolError("edit instruction missing 'path'")
        try:
            path = SpecPath.parse(obj["path"])
        except PathError as exc:
            raise ProtocolError(str(exc)) from exc
        has_value = "value" in obj
        if op == "remove" and has_value:
            raise ProtocolError("remove must not carry a value")
        if op != "remove" and not has_value:
            raise ProtocolError(f"{op} requires a value")
        return cls(operation=op, path=path, value=obj.get("value"))


def _lcs_pairs(a: Sequence[str], b: Sequence[str]) -> list[tuple[int, int]]:
    """Index pairs of a longest common subsequence (difflib matching blocks)."""
    matcher = difflib.SequenceMatcher(None, list(a), list(b), autojunk=False)
    pairs: list[tuple[int, int]] = []
    for block in matcher.get_matching_blocks():
        pairs.extend((block.a + k, block.b + k) for k in range(block.size))
    return pairs


def _is_id_keyed(items: list[Any]) -> bool:
    ids = [item.get("id") for item in items if isinstance(item, dict)]
    return (
        len(ids) == len(items)
        and all(isinstance(i, str) for i in ids)
        and len(set(ids)) == len(ids)
    )


def _diff_value(a: Any, b: Any, path: SpecPath, out: list[EditInstruction]) -> None:
    if isinstance(a, dict) and isinstance(b, dict) and set(a) == set(b):
        for key in a:
            _diff_value(a[key], b[key], path.child(key), out)
    elif isinstance(a, list) and isinstance(b, list):
        _diff_list(a, b, path, out)
    elif a != b:
        out.append(EditInstruction("replace", path, b))


def _diff_list(a: list[Any], b: list[Any], path: SpecPath, out: list[EditInstruction]) -> None:
    if _is_id_keyed(a) and _is_id_keyed(b):
        _diff_id_list(a, b, path, out)
        return
    keys_a = [canonical_json(item) for item in a]
    keys_b = [canonical_json(item) for item in b]
    matcher = difflib.SequenceMatcher(None, keys_a, keys_b, autojunk=False)
    delta = 0
    for tag, i1, i2, j1, j2 in matcher.get_opcodes():
        if tag == "equal":
            continue
        base = i1 + delta
        if tag in ("replace", "delete"):
            paired = min(i2 - i1, j2 - j1) if tag == "replace" else 0
            for k in range(paired):
                _diff_value(a[i1 + k], b[j1 + k], path.child(base + k), out)
            for _ in range((i2 - i1) - paired):
                out.append(EditInstruction("remove", path.child(base + paired)))
                delta -= 1
            for k in range(paired, j2 - j1):
                out.append(EditInstruction("insert", path.child(base + k), b[j1 + k]))
                delta += 1
        elif tag == "insert":
            for k in range(j2 - j1):
                out.append(EditInstruction("insert", path.child(base + k), b[j1 + k]))
                delta += 1


def _diff_id_list(a: list[Any], b: list[Any], path: SpecPath, out: list[EditInstruction]) -> None:
    ids_a = [item["id"] for item in a]
    ids_b = [item["id"] for item in b]
    matched = _lcs_pairs(ids_a, ids_b)
    kept_a = {i for i, _ in matched}
    kept_b = {j for _, j in matched}
    # Removals first (id paths are stable under reordering) ...
    for i in range(len(a)):
        if i not in kept_a:
            out.append(EditInstruction("remove", path.child("#" + ids_a[i])))
    # ... then in-place changes on survivors ...
    for i, j in matched:
        _diff_value(a[i], b[j], path.child("#" + ids_a[i]), out)
    # ... then insertions at their final positions, left to right.
    for j, item in enumerate(b):
        if j not in kept_b:
            out.append(EditInstruction("insert", path.child(j), item))


def spec_diff(before: SpecDocument, after: SpecDocument) -> list[EditInstruction]:
    """Edit list that transforms `before` into a document canonically equal
    to `after`; empty when the documents already agree."""
    out: list[EditInstruction] = []
    _diff_value(before.to_dict(), after.to_dict(), SpecPath(()), out)
    return out
