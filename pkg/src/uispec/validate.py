"""Structural validation and the global-to-section inheritance check.

Sections must specialize the global profile: their grid column count must
divide the global column count, their spacing must be a positive multiple
of the global spacing (equality only, when global spacing is 0), and every
color role they or their components reference must resolve in the global
palette.  Shape inheritance is implicit — sections carry no shape override,
so that clause is vacuously satisfied and never reported.

Violations carry paths so a UI can highlight the offending node.  The
checks here are pure and total: problems are reported, never raised.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import (
    DEFAULT_COMPONENT_TYPES,
    GlobalSpecification,
    SectionSpec,
    SpecDocument,
    SpecPath,
)

VIOLATION_CODES = (
    "LayoutNotSpecialization",
    "ColorNotInPalette",
    "ShapeNotSpecialization",
    "DuplicateId",
    "UnknownComponentType",
    "DanglingColorRole",
    "EmptyPalette",
    "BadFraction",
)


@dataclass(frozen=True)
class Violation:
    code: str
    path: SpecPath
    message: str

    def to_json_obj(self) -> dict:
        return {"code": self.code, "path": str(self.path), "message": self.message}


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[Violation, ...]

    def to_json_obj(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_json_obj() for v in self.violations]}


def _report(violations: list[Violation]) -> ValidationReport:
    return ValidationReport(ok=not violations, violations=tuple(violations))


def check_inheritance(
    section: SectionSpec,
    global_spec: GlobalSpecification,
    base: SpecPath | None = None,
) -> list[Violation]:
    """Inheritance violations for one section (layout, colors; shape is
    vacuous).  Paths are rooted at ``/sections/#<id>`` unless ``base`` is
    given — `validate` passes index-based paths when ids are duplicated."""
    if base is None:
        base = SpecPath(("sections", "#" + section.id))
    out: list[Violation] = []
    cols = global_spec.layout.grid_columns
    spacing = global_spec.layout.spacing_px
    if cols % section.layout.grid_cols != 0:
        out.append(Violation(
            "LayoutNotSpecialization",
            base.child("layout").child("grid_cols"),
            f"section grid_cols={section.layout.grid_cols} does not divide global grid_columns={cols}",
        ))
    if not _spacing_ok(section.layout.spacing_px, spacing):
        out.append(Violation(
            "LayoutNotSpecialization",
            base.child("layout").child("spacing_px"),
            f"section spacing_px={section.layout.spacing_px} is not a positive multiple of global spacing_px={spacing}",
        ))
    roles = set(global_spec.palette_roles())
    out.extend(_color_refs(section.colors, roles, base.child("colors"), bool(global_spec.colors)))
    for j, comp in enumerate(section.components):
        out.extend(_color_refs(
            comp.colors, roles,
            base.child("components").child(j).child("colors"),
            bool(global_spec.colors),
        ))
    return out


def _spacing_ok(section_px: int, global_px: int) -> bool:
    if global_px == 0:
        return section_px == 0
    return section_px > 0 and section_px % global_px == 0


def _color_refs(refs: Sequence[str], roles: set[str], base: SpecPath, palette_nonempty: bool) -> list[Violation]:
    # Empty-palette references are reported once at the palette, not here.
    if not palette_nonempty:
        return []
    return [
        Violation("ColorNotInPalette", base.child(k), f"color role {ref!r} not in global palette")
        for k, ref in enumerate(refs)
        if ref not in roles
    ]


def validate(doc: SpecDocument, vocabulary: Sequence[str] | None = None) -> ValidationReport:
    """Full report over one document: palette integrity, id uniqueness,
    component vocabulary, fraction range, and per-section inheritance."""
    vocab = frozenset(vocabulary if vocabulary is not None else DEFAULT_COMPONENT_TYPES)
    out: list[Violation] = []

    seen_roles: set[str] = set()
    for idx, token in enumerate(doc.global_spec.colors):
        if token.role in seen_roles:
            out.append(Violation(
                "DanglingColorRole",
                SpecPath(("global", "colors", idx)),
                f"palette role {token.role!r} defined more than once; references to it are ambiguous",
            ))
        seen_roles.add(token.role)

    referenced = any(s.colors for s in doc.sections) or any(
        c.colors for s in doc.sections for c in s.components
    )
    if referenced and not doc.global_spec.colors:
        out.append(Violation(
            "EmptyPalette",
            SpecPath(("global", "colors")),
            "palette is empty but sections or components reference color roles",
        ))

    seen_ids: set[str] = set()
    all_ids = doc.all_ids()
    duplicated = {i for i in set(all_ids) if all_ids.count(i) > 1}
    for i, section in enumerate(doc.sections):
        base = SpecPath(("sections", i))
        if section.id in seen_ids:
            out.append(Violation("DuplicateId", base, f"id {section.id!r} already used"))
        seen_ids.add(section.id)
        if not 0 < section.pos.fraction <= 1:
            out.append(Violation(
                "BadFraction",
                base.child("pos").child("fraction"),
                f"fraction {section.pos.fraction} outside (0, 1]",
            ))
        # Index paths when the section id is ambiguous, so every reported
        # path stays resolvable.
        out.extend(check_inheritance(
            section, doc.global_spec,
            base=base if section.id in duplicated else None,
        ))
        for j, comp in enumerate(doc.sections[i].components):
            comp_base = base.child("components").child(j)
            if comp.id in seen_ids:
                out.append(Violation("DuplicateId", comp_base, f"id {comp.id!r} already used"))
            seen_ids.add(comp.id)
            if comp.type not in vocab:
                out.append(Violation(
                    "UnknownComponentType",
                    comp_base.child("type"),
                    f"component type {comp.type!r} not in vocabulary",
                ))
    return _report(out)
