"""Structured UI specification engine.

Extracts editable two-level UI specifications from reference screenshots,
validates and composes them, applies scoped path-based edits under a bounded
repair loop, grounds code generation with retrieved exemplars, self-repairs
generated code from compile feedback, and scores render fidelity.
"""
from .core import (
    ColorToken,
    ComponentSpec,
    DEFAULT_COMPONENT_TYPES,
    EditInstruction,
    GlobalSpecification,
    LayoutSpec,
    NodeHandle,
    PositionSpec,
    SectionLayout,
    SectionSpec,
    ShapeSpec,
    SpecDocument,
    SpecPath,
    default_document,
    parse_spec,
    resolve_path,
    serialize_spec,
    spec_diff,
)
from .edit import (
    EditErrorContext,
    EditOutcome,
    apply_edit,
    apply_edits,
    apply_with_repair,
    interpret_intent,
)
from .validate import ValidationReport, Violation, check_inheritance, validate

__version__ = "0.1.0"

__all__ = [
    "ColorToken",
    "ComponentSpec",
    "DEFAULT_COMPONENT_TYPES",
    "EditErrorContext",
    "EditInstruction",
    "EditOutcome",
    "GlobalSpecification",
    "LayoutSpec",
    "NodeHandle",
    "PositionSpec",
    "SectionLayout",
    "SectionSpec",
    "ShapeSpec",
    "SpecDocument",
    "SpecPath",
    "ValidationReport",
    "Violation",
    "apply_edit",
    "apply_edits",
    "apply_with_repair",
    "check_inheritance",
    "default_document",
    "interpret_intent",
    "parse_spec",
    "resolve_path",
    "serialize_spec",
    "spec_diff",
    "validate",
    "__version__",
]
