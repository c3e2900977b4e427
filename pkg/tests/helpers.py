"""Shared builders and independent oracles for the test suite.

The oracles here intentionally re-derive behavior with separate code paths
(brute-force loops, direct formula evaluation) so the implementation under
test is never checked against itself.
"""
from __future__ import annotations

import random

import numpy as np

from uispec.core import (
    ColorToken,
    ComponentSpec,
    DEFAULT_COMPONENT_TYPES,
    GlobalSpecification,
    LayoutSpec,
    PositionSpec,
    SectionLayout,
    SectionSpec,
    ShapeSpec,
    SpecDocument,
)

WORDS = [
    "card-based layout", "rapid browsing", "minimalist", "rounded",
    "dense dashboard", "airy", "dark", "neon", "editorial", "playful",
    "navigation", "filter", "summary", "hero", "monitoring",
]

ROLES = ["Primary", "Accent", "Background", "Surface", "Muted", "Warning"]

HEXES = ["#CF9BDE", "#FF6600", "#112233", "#00AA55", "#FFFFFF", "#000000", "#3B82F6"]

ANCHORS = ["left", "right", "top", "bottom", "center", "full"]

GRID_COLUMNS_CHOICES = [1, 2, 3, 4, 6, 8, 12, 16, 24]
SPACING_CHOICES = [0, 2, 4, 8, 16]


def minimal_doc_text() -> str:
    return (
        '{"page_goal":"x","global":{"layout":{"grid_columns":12,"spacing_px":8,'
        '"semantic":[]},"colors":[{"hex":"#CF9BDE","role":"Accent"}],'
        '"shape":{"corner_radius_px":12,"semantic":["rounded"]},"scenario":[]},'
        '"sections":[]}'
    )


def _divisors(n: int) -> list[int]:
    return [d for d in range(1, n + 1) if n % d == 0]


def _fraction(rng: random.Random) -> float:
    return max(0.0001, round(rng.uniform(0.05, 1.0), 4))


def random_valid_document(rng: random.Random, max_sections: int = 4) -> SpecDocument:
    """A document that satisfies every invariant and validates cleanly."""
    n_colors = rng.randint(0, 4)
    palette = tuple(
        ColorToken(hex=rng.choice(HEXES), role=role)
        for role in rng.sample(ROLES, n_colors)
    )
    roles = [t.role for t in palette]
    grid_columns = rng.choice(GRID_COLUMNS_CHOICES)
    spacing = rng.choice(SPACING_CHOICES)

    def section_layout() -> SectionLayout:
        mult = 0 if spacing == 0 else rng.randint(1, 3)
        return SectionLayout(
            grid_rows=rng.randint(1, 8),
            grid_cols=rng.choice(_divisors(grid_columns)),
            spacing_px=spacing * mult if spacing else 0,
        )

    sections = []
    for i in range(rng.randint(0, max_sections)):
        components = tuple(
            ComponentSpec(
                type=rng.choice(DEFAULT_COMPONENT_TYPES),
                id=f"comp-{i + 1}-{j + 1}",
                func=rng.choice(WORDS),
                layout=SectionLayout(rng.randint(1, 8), rng.randint(1, 8), rng.choice(SPACING_CHOICES)),
                colors=tuple(rng.sample(roles, rng.randint(0, len(roles)))) if roles else (),
            )
            for j in range(rng.randint(0, 3))
        )
        sections.append(SectionSpec(
            id=f"sec-{i + 1}",
            pos=PositionSpec(rng.choice(ANCHORS), _fraction(rng)),
            layout=section_layout(),
            colors=tuple(rng.sample(roles, rng.randint(0, len(roles)))) if roles else (),
            components=components,
        ))

    return SpecDocument(
        page_goal=rng.choice(WORDS),
        global_spec=GlobalSpecification(
            layout=LayoutSpec(grid_columns, spacing, tuple(rng.sample(WORDS, rng.randint(0, 2)))),
            colors=palette,
            shape=ShapeSpec(rng.randint(0, 32), tuple(rng.sample(WORDS, rng.randint(0, 2)))),
            scenario=tuple(rng.sample(WORDS, rng.randint(0, 2))),
        ),
    sections=tuple(sections))


def random_flawed_document(rng: random.Random, max_sections: int = 4) -> SpecDocument:
    """A document that may violate constraints in controlled ways; used to
    exercise the validator against the brute-force oracle."""
    doc = random_valid_document(rng, max_sections)
    glob = doc.global_spec
    sections = list(doc.sections)

    def mutate_section(section: SectionSpec, **changes) -> SectionSpec:
        fields = {
            "id": section.id, "pos": section.pos, "layout": section.layout,
            "colors": section.colors, "components": section.components,
        }
        fields.update(changes)
        return SectionSpec(**fields)

    for _ in range(rng.randint(0, 4)):
        flaw = rng.randint(0, 7)
        if flaw == 0 and sections:  # non-divisor grid_cols
            k = rng.randrange(len(sections))
            layout = sections[k].layout
            sections[k] = mutate_section(sections[k], layout=SectionLayout(
                layout.grid_rows, glob.layout.grid_columns + rng.randint(1, 5), layout.spacing_px))
        elif flaw == 1 and sections:  # non-multiple spacing
            k = rng.randrange(len(sections))
            layout = sections[k].layout
            sections[k] = mutate_section(sections[k], layout=SectionLayout(
                layout.grid_rows, layout.grid_cols, glob.layout.spacing_px * 2 + 3))
        elif flaw == 2 and sections:  # dangling color role
            k = rng.randrange(len(sections))
            sections[k] = mutate_section(sections[k], colors=sections[k].colors + ("Neon",))
        elif flaw == 3 and sections:  # bad fraction
            k = rng.randrange(len(sections))
            bad = rng.choice([0.0, -0.25, 1.5, 2.0])
            sections[k] = mutate_section(sections[k], pos=PositionSpec(sections[k].pos.anchor, bad))
        elif flaw == 4 and sections:  # duplicate section id
            k = rng.randrange(len(sections))
            sections[k] = mutate_section(sections[k], id=sections[0].id)
        elif flaw == 5 and sections and sections[0].components:  # unknown component type
            comp = sections[0].components[0]
            new_comp = ComponentSpec("Sparkle", comp.id, comp.func, comp.layout, comp.colors)
            sections[0] = mutate_section(
                sections[0], components=(new_comp,) + sections[0].components[1:])
        elif flaw == 6 and glob.colors:  # duplicate palette role
            glob = GlobalSpecification(
                layout=glob.layout,
                colors=glob.colors + (ColorToken("#ABCDEF", glob.colors[0].role),),
                shape=glob.shape,
                scenario=glob.scenario,
            )
        elif flaw == 7 and sections:  # empty palette with live references
            glob = GlobalSpecification(glob.layout, (), glob.shape, glob.scenario)
            k = rng.randrange(len(sections))
            sections[k] = mutate_section(sections[k], colors=("Primary",))
    return SpecDocument(doc.page_goal, glob, tuple(sections))


# ---------------------------------------------------------------------------
# Brute-force validator oracle
# ---------------------------------------------------------------------------

def oracle_violations(doc: SpecDocument, vocabulary=DEFAULT_COMPONENT_TYPES) -> list[tuple[str, str]]:
    """Independent re-derivation of every validator clause, by enumeration."""
    out: list[tuple[str, str]] = []
    glob = doc.global_spec

    seen_roles = set()
    for idx, token in enumerate(glob.colors):
        if token.role in seen_roles:
            out.append(("DanglingColorRole", f"/global/colors/{idx}"))
        seen_roles.add(token.role)

    any_ref = False
    for s in doc.sections:
        if s.colors:
            any_ref = True
        for c in s.components:
            if c.colors:
                any_ref = True
    if any_ref and not glob.colors:
        out.append(("EmptyPalette", "/global/colors"))

    ids = doc.all_ids()
    duplicated = {i for i in ids if ids.count(i) > 1}
    roles = {t.role for t in glob.colors}
    seen = set()
    for i, section in enumerate(doc.sections):
        if section.id in seen:
            out.append(("DuplicateId", f"/sections/{i}"))
        seen.add(section.id)
        if not 0 < section.pos.fraction <= 1:
            out.append(("BadFraction", f"/sections/{i}/pos/fraction"))
        base = f"/sections/{i}" if section.id in duplicated else f"/sections/#{section.id}"
        # divisibility by enumeration over every candidate multiple
        divides = any(
            section.layout.grid_cols * k == glob.layout.grid_columns
            for k in range(1, glob.layout.grid_columns + 1)
        )
        if not divides:
            out.append(("LayoutNotSpecialization", f"{base}/layout/grid_cols"))
        if glob.layout.spacing_px == 0:
            spacing_ok = section.layout.spacing_px == 0
        else:
            spacing_ok = any(
                glob.layout.spacing_px * k == section.layout.spacing_px
                for k in range(1, section.layout.spacing_px // glob.layout.spacing_px + 2)
            )
        if not spacing_ok:
            out.append(("LayoutNotSpecialization", f"{base}/layout/spacing_px"))
        if glob.colors:
            for k, ref in enumerate(section.colors):
                if ref not in roles:
                    out.append(("ColorNotInPalette", f"{base}/colors/{k}"))
        for j, comp in enumerate(section.components):
            if comp.id in seen:
                out.append(("DuplicateId", f"/sections/{i}/components/{j}"))
            seen.add(comp.id)
            if comp.type not in vocabulary:
                out.append(("UnknownComponentType", f"/sections/{i}/components/{j}/type"))
            if glob.colors:
                for k, ref in enumerate(comp.colors):
                    if ref not in roles:
                        out.append(("ColorNotInPalette", f"{base}/components/{j}/colors/{k}"))
    return sorted(out)


# ---------------------------------------------------------------------------
# Brute-force metric oracles
# ---------------------------------------------------------------------------

def mse_reference(a: np.ndarray, b: np.ndarray) -> float:
    """Direct triple loop over pixels and channels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    total = 0.0
    count = 0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            for c in range(3):
                diff = a[i, j, c] - b[i, j, c]
                total += diff * diff
                count += 1
    return total / count


def _gauss_window_reference(size: int, sigma: float) -> np.ndarray:
    w = np.empty((size, size))
    half = (size - 1) / 2.0
    for u in range(size):
        for v in range(size):
            du = u - half
            dv = v - half
            w[u, v] = np.exp(-(du * du) / (2 * sigma * sigma)) * np.exp(-(dv * dv) / (2 * sigma * sigma))
    return w / w.sum()


def ssim_reference(a: np.ndarray, b: np.ndarray) -> float:
    """Windowed SSIM computed per position with explicit weighted sums."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    x = 0.299 * a[:, :, 0] + 0.587 * a[:, :, 1] + 0.114 * a[:, :, 2]
    y = 0.299 * b[:, :, 0] + 0.587 * b[:, :, 1] + 0.114 * b[:, :, 2]
    size = min(11, x.shape[0], x.shape[1])
    if size % 2 == 0:
        size -= 1
    w = _gauss_window_reference(size, 1.5)
    c1 = (0.01 * 255) ** 2
    c2 = (0.03 * 255) ** 2
    values = []
    for i in range(x.shape[0] - size + 1):
        for j in range(x.shape[1] - size + 1):
            px = x[i:i + size, j:j + size]
            py = y[i:i + size, j:j + size]
            mu_x = float((w * px).sum())
            mu_y = float((w * py).sum())
            var_x = float((w * px * px).sum()) - mu_x * mu_x
            var_y = float((w * py * py).sum()) - mu_y * mu_y
            cov = float((w * px * py).sum()) - mu_x * mu_y
            num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
            den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
            values.append(num / den)
    return float(np.mean(values))


# ---------------------------------------------------------------------------
# Region coverage oracle
# ---------------------------------------------------------------------------

def covered_pixels(boxes, width: int, height: int) -> int:
    """Rasterize boxes onto a pixel grid and count covered cells."""
    mask = np.zeros((height, width), dtype=bool)
    for b in boxes:
        mask[b.y: b.y + b.h, b.x: b.x + b.w] = True
    return int(mask.sum())
