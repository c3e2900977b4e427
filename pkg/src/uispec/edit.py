"""Scoped edits: transactional patch application and the bounded repair loop.

Edits are `<operation, path, value>` triplets.  Application is all-or-nothing
over a batch: the raw tree is mutated on a copy and re-checked through the
strict parser, so a failing batch leaves the input document untouched and
every subtree disjoint from the edited paths serializes identically.

When an edit list fails to apply or leaves the document invalid, the error
context (message, failing instruction, pre-failure document) is packaged and
sent to the model client for a corrected list.  The loop is capped at three
application attempts; a correction is requested after every failed attempt,
so an always-broken client is consulted exactly three times.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Sequence

from . import validate as validate_mod
from .clients import ModelClient
from .core import (
    EditInstruction,
    SpecDocument,
    SpecPath,
    canonical_json,
    document_from_tree,
    resolve_in_tree,
)
from .errors import (
    ConstraintError,
    EditApplyError,
    IdCollision,
    PathError,
    PathNotFound,
    ProtocolError,
    RepairExhausted,
    SchemaError,
    TypeMismatch,
    VocabularyError,
)


@dataclass(frozen=True)
class EditErrorContext:
    """What gets sent back to the model after a failed attempt."""

    error_message: str
    original_instruction: EditInstruction | None
    current_spec: SpecDocument

    def to_json_obj(self) -> dict[str, Any]:
        return {
            "error_message": self.error_message,
            "original_instruction": (
                self.original_instruction.to_json_obj()
                if self.original_instruction is not None else None
            ),
            "current_spec": self.current_spec.to_dict(),
        }


@dataclass(frozen=True)
class EditOutcome:
    result: SpecDocument
    applied: tuple[EditInstruction, ...]
    attempts: int
    repair_log: tuple[EditErrorContext, ...] = ()


MAX_ATTEMPTS = 3


# ---------------------------------------------------------------------------
# Raw tree surgery
# ---------------------------------------------------------------------------

def _navigate_parent(tree: Any, path: SpecPath) -> tuple[Any, int | str]:
    if not path.segments:
        raise TypeMismatch("cannot edit the document root in place")
    parent = resolve_in_tree(tree, SpecPath(path.segments[:-1]))
    return parent, path.segments[-1]


def _apply_raw(tree: Any, instruction: EditInstruction) -> Any:
    """Mutate a plain tree in place; returns the (possibly new) root."""
    op = instruction.operation
    path = instruction.path
    if op == "replace" and not path.segments:
        return instruction.value
    parent, last = _navigate_parent(tree, path)

    if op == "replace":
        if isinstance(parent, dict):
            if not isinstance(last, str) or last not in parent:
                raise PathNotFound(f"no field {last!r} at {path}")
            parent[last] = instruction.value
        elif isinstance(parent, list):
            idx = _list_index(parent, last, path, for_insert=False)
            parent[idx] = instruction.value
        else:
            raise PathNotFound(f"path {path} descends into a scalar")
    elif op == "insert":
        if not isinstance(parent, list):
            raise TypeMismatch(f"insert target {path} is not a list position")
        if last == "-":
            parent.append(instruction.value)
        elif isinstance(last, int):
            if not 0 <= last <= len(parent):
                raise PathNotFound(f"insert index {last} out of range at {path}")
            parent.insert(last, instruction.value)
        else:
            raise TypeMismatch(f"insert position must be an index or '-', got {last!r}")
    elif op == "remove":
        if isinstance(parent, dict):
            if not isinstance(last, str) or last not in parent:
                raise PathNotFound(f"no field {last!r} at {path}")
            del parent[last]
        elif isinstance(parent, list):
            idx = _list_index(parent, last, path, for_insert=False)
            del parent[idx]
        else:
            raise PathNotFound(f"path {path} descends into a scalar")
    else:
        raise TypeMismatch(f"unknown operation {op!r}")
    return tree


def _list_index(parent: list, segment: int | str, path: SpecPath, for_insert: bool) -> int:
    if isinstance(segment, int):
        if 0 <= segment < len(parent):
            return segment
        raise PathNotFound(f"index {segment} out of range at {path}")
    if isinstance(segment, str) and segment.startswith("#"):
        wanted = segment[1:]
        matches = [i for i, item in enumerate(parent)
                   if isinstance(item, dict) and item.get("id") == wanted]
        if len(matches) == 1:
            return matches[0]
        if not matches:
            raise PathNotFound(f"no item with id {wanted!r} at {path}")
        raise PathNotFound(f"id {wanted!r} is ambiguous at {path}")
    raise PathNotFound(f"segment {segment!r} cannot address a list at {path}")


def _rebuild(tree: Any, vocabulary: Sequence[str] | None) -> SpecDocument:
    """Re-parse the edited tree, mapping parse errors onto edit errors."""
    try:
        return document_from_tree(tree, vocabulary)
    except ConstraintError as exc:
        if exc.code == "duplicate-id":
            raise IdCollision(str(exc)) from exc
        if exc.code == "vocabulary":
            raise VocabularyError(str(exc)) from exc
        raise TypeMismatch(str(exc)) from exc
    except SchemaError as exc:
        raise TypeMismatch(str(exc)) from exc


def apply_edit(
    doc: SpecDocument,
    edit: EditInstruction,
    vocabulary: Sequence[str] | None = None,
) -> SpecDocument:
    """Apply one instruction, returning a new document.

    The input is never mutated; on any failure it is returned to the caller
    unchanged by virtue of never having been touched.
    """
    return apply_edits(doc, [edit], vocabulary)


def apply_edits(
    doc: SpecDocument,
    edits: Sequence[EditInstruction],
    vocabulary: Sequence[str] | None = None,
) -> SpecDocument:
    """Apply a batch atomically, in order.  Raises on the first failing
    instruction; the input document is unaffected either way."""
    tree = doc.to_dict()
    for instruction in edits:
        tree = _apply_raw(tree, instruction)
    return _rebuild(tree, vocabulary)


# ---------------------------------------------------------------------------
# Intent interpretation
# ---------------------------------------------------------------------------

INTENT_PROMPT_TEMPLATE = """You translate UI design change requests into structured edit \
instructions for a specification document.

Respond with a JSON array only. Each element is {{"op": "replace"|"insert"|"remove", \
"path": "<slash path>", "value": <fragment, omitted for remove>}}.

Examples:
Request: use a darker, more technical theme
Edits: [{{"op": "replace", "path": "/global/shape/semantic", "value": ["dark", "technical"]}}]
Request: drop the second section
Edits: [{{"op": "remove", "path": "/sections/1"}}]
Request: make the footer span the full width
Edits: [{{"op": "replace", "path": "/sections/#footer/pos", "value": {{"anchor": "bottom", "fraction": 0.1}}}}]

Current specification:
{spec}
{reference_block}Request: {intent}
Edits:"""


def build_intent_prompt(
    intent_text: str,
    doc: SpecDocument,
    reference: dict[str, Any] | None = None,
) -> str:
    reference_block = ""
    if reference is not None:
        reference_block = "Reference fragment:\n" + canonical_json(reference) + "\n"
    return INTENT_PROMPT_TEMPLATE.format(
        spec=canonical_json(doc.to_dict()),
        reference_block=reference_block,
        intent=intent_text,
    )


def parse_edit_list(text: str) -> list[EditInstruction]:
    """Strictly parse a JSON array of edit triplets from model output."""
    try:
        data = json.loads(text.strip())
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"edit response is not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise ProtocolError("edit response must be a JSON array")
    return [EditInstruction.from_json_obj(item) for item in data]


def interpret_intent(
    intent_text: str,
    reference: dict[str, Any] | None,
    doc: SpecDocument,
    client: ModelClient,
) -> list[EditInstruction]:
    """Ask the model to turn a natural-language request (and optional
    reference fragment) into edit instructions.  Malformed responses raise
    ProtocolError rather than being silently truncated."""
    prompt = build_intent_prompt(intent_text, doc, reference)
    response = client.complete(prompt)
    return parse_edit_list(response)


def load_edit_script(path) -> list[EditInstruction]:
    """Read a JSONL edit script: one instruction object per line."""
    out: list[EditInstruction] = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                out.append(EditInstruction.from_json_obj(json.loads(line)))
    return out


# ---------------------------------------------------------------------------
# Bounded repair loop
# ---------------------------------------------------------------------------

REPAIR_PROMPT_TEMPLATE = """An edit to a UI specification failed. Produce a corrected \
edit list as a JSON array of {{"op", "path", "value"}} objects (value omitted for remove).

Error context:
{context}

Attempted edits:
{edits}

Corrected edits:"""


def build_repair_prompt(context: EditErrorContext, edits: Sequence[EditInstruction]) -> str:
    return REPAIR_PROMPT_TEMPLATE.format(
        context=canonical_json(context.to_json_obj()),
        edits=canonical_json([e.to_json_obj() for e in edits]),
    )


def apply_with_repair(
    doc: SpecDocument,
    edits: Sequence[EditInstruction],
    client: ModelClient,
    vocabulary: Sequence[str] | None = None,
    strict: bool = False,
) -> EditOutcome:
    """Apply a batch under the validate-and-repair loop.

    Each attempt applies the current edit list transactionally and runs the
    validator on the result.  On failure, the error context goes to the
    client for a corrected list — including after the third attempt, whose
    correction is only logged once the cap is reached.  On exhaustion the
    original document is returned unchanged (or RepairExhausted is raised in
    strict mode).
    """
    current: list[EditInstruction] = list(edits)
    log: list[EditErrorContext] = []
    for attempt in range(1, MAX_ATTEMPTS + 1):
        failing, error_message = None, None
        try:
            result = apply_edits(doc, current, vocabulary)
        except (PathError, EditApplyError) as exc:
            failing = _failing_instruction(doc, current, vocabulary)
            error_message = str(exc)
        else:
            report = validate_mod.validate(result, vocabulary)
            if report.ok:
                return EditOutcome(
                    result=result,
                    applied=tuple(current),
                    attempts=attempt,
                    repair_log=tuple(log),
                )
            error_message = "; ".join(
                f"{v.code} at {v.path}: {v.message}" for v in report.violations
            )
        context = EditErrorContext(
            error_message=error_message,
            original_instruction=failing if failing is not None else (current[0] if current else None),
            current_spec=doc,
        )
        log.append(context)
        corrected = _request_correction(client, context, current)
        if corrected is not None and attempt < MAX_ATTEMPTS:
            current = corrected
    if strict:
        raise RepairExhausted("edit repair exhausted after 3 attempts", context=log[-1])
    return EditOutcome(result=doc, applied=(), attempts=MAX_ATTEMPTS, repair_log=tuple(log))


def _failing_instruction(
    doc: SpecDocument,
    edits: Sequence[EditInstruction],
    vocabulary: Sequence[str] | None,
) -> EditInstruction | None:
    """Replay prefixes to pinpoint which instruction broke the batch."""
    for i in range(len(edits)):
        try:
            apply_edits(doc, edits[: i + 1], vocabulary)
        except (PathError, EditApplyError):
            return edits[i]
    return None


def _request_correction(
    client: ModelClient,
    context: EditErrorContext,
    edits: Sequence[EditInstruction],
) -> list[EditInstruction] | None:
    """One repair round-trip; unparseable corrections count as failures
    (returns None) rather than aborting the loop."""
    prompt = build_repair_prompt(context, edits)
    try:
        response = client.complete(prompt)
        return parse_edit_list(response)
    except ProtocolError:
        return None
