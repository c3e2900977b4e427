"""Screenshot-to-specification pipeline.

Stages: pluggable region detection, grouping-based box post-processing that
guarantees exact page coverage, per-region structured extraction through a
multimodal client, whole-page style profiling, and integration into one
valid document.  No detector or vision model runs in-process; both are
external interfaces, and the shipped fixture detector replays sidecar boxes.
"""
from __future__ import annotations

import io
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from PIL import Image

from .clients import DetectorClient, ModelClient
from .core import (
    ColorToken,
    ComponentSpec,
    DEFAULT_COMPONENT_TYPES,
    DEFAULT_CORNER_RADIUS_PX,
    DEFAULT_GRID_COLUMNS,
    DEFAULT_SPACING_PX,
    FRACTION_DIGITS,
    GlobalSpecification,
    LayoutSpec,
    PositionSpec,
    SectionLayout,
    SectionSpec,
    ShapeSpec,
    SpecDocument,
)
from .errors import ConstraintError, EmptyImage, EmptyResult, ProtocolError

# Grouping thresholds (page-size aware, deterministic).
ENCLOSURE_RATIO = 0.95          # contained area share that triggers a merge
PROXIMITY_BASE_PX = 8           # minimum proximity gap threshold
PROXIMITY_PAGE_FRACTION = 0.01  # gap threshold grows with the page
PROJECTION_OVERLAP = 0.5        # required overlap share on the other axis
ALIGN_TOLERANCE_PX = 4          # edge alignment tolerance
ALIGN_GAP_PX = 16               # max gap between aligned boxes

DEFAULT_REGION_WORKERS = 4

_HEXISH_RE = re.compile(r"^#[0-9a-fA-F]{6}$")


@dataclass(frozen=True)
class RegionBox:
    """Axis-aligned page region in pixels; score 1.0 for fixture boxes."""

    x: int
    y: int
    w: int
    h: int
    score: float = 1.0

    @property
    def right(self) -> int:
        return self.x + self.w

    @property
    def bottom(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h


@dataclass(frozen=True)
class GlobalDesignProfile:
    """Whole-page stylistic summary: tone, dominant palette, layout rhythm."""

    tone: str
    palette: tuple[ColorToken, ...]
    layout_rhythm: str


# ---------------------------------------------------------------------------
# Raster helpers
# ---------------------------------------------------------------------------

def encode_png(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as img:
        return np.asarray(img.convert("RGB"))


def crop(image: np.ndarray, box: RegionBox) -> np.ndarray:
    return image[box.y: box.y + box.h, box.x: box.x + box.w]


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------

def segment_regions(image: np.ndarray, detector: DetectorClient) -> list[RegionBox]:
    """Run the external detector and clip its boxes to the image bounds."""
    height, width = image.shape[:2]
    if height == 0 or width == 0:
        raise EmptyImage("cannot segment an empty image")
    boxes = []
    for det in detector.detect(image):
        clipped = _clip(RegionBox(det.x, det.y, det.w, det.h, det.score), width, height)
        if clipped is not None:
            boxes.append(clipped)
    if not boxes:
        raise EmptyResult("detector returned no usable regions")
    return boxes


def _clip(box: RegionBox, width: int, height: int) -> RegionBox | None:
    x0 = max(0, box.x)
    y0 = max(0, box.y)
    x1 = min(width, box.x + box.w)
    y1 = min(height, box.y + box.h)
    if x1 <= x0 or y1 <= y0:
        return None
    return RegionBox(x0, y0, x1 - x0, y1 - y0, box.score)


# ---------------------------------------------------------------------------
# Grouping post-process
# ---------------------------------------------------------------------------

def _overlap(a0: int, a1: int, b0: int, b1: int) -> int:
    return min(a1, b1) - max(a0, b0)


def _gap(a0: int, a1: int, b0: int, b1: int) -> int:
    return max(0, -_overlap(a0, a1, b0, b1))


def _mergeable(a: RegionBox, b: RegionBox, width: int, height: int) -> bool:
    ox = _overlap(a.x, a.right, b.x, b.right)
    oy = _overlap(a.y, a.bottom, b.y, b.bottom)
    # (i) enclosure: one box holds >= 95% of the other's area
    inter = max(0, ox) * max(0, oy)
    if inter >= ENCLOSURE_RATIO * min(a.area, b.area):
        return True
    # (ii) proximity: small gap on one axis, >= 50% projected overlap on the other
    thr_x = max(PROXIMITY_BASE_PX, PROXIMITY_PAGE_FRACTION * width)
    thr_y = max(PROXIMITY_BASE_PX, PROXIMITY_PAGE_FRACTION * height)
    gx = _gap(a.x, a.right, b.x, b.right)
    gy = _gap(a.y, a.bottom, b.y, b.bottom)
    if gx <= thr_x and oy >= PROJECTION_OVERLAP * min(a.h, b.h):
        return True
    if gy <= thr_y and ox >= PROJECTION_OVERLAP * min(a.w, b.w):
        return True
    # (iii) alignment: both edges aligned on one axis, small gap on the other
    if (abs(a.x - b.x) <= ALIGN_TOLERANCE_PX
            and abs(a.right - b.right) <= ALIGN_TOLERANCE_PX
            and gy <= ALIGN_GAP_PX):
        return True
    if (abs(a.y - b.y) <= ALIGN_TOLERANCE_PX
            and abs(a.bottom - b.bottom) <= ALIGN_TOLERANCE_PX
            and gx <= ALIGN_GAP_PX):
        return True
    return False


def _joint(a: RegionBox, b: RegionBox) -> RegionBox:
    x0 = min(a.x, b.x)
    y0 = min(a.y, b.y)
    x1 = max(a.right, b.right)
    y1 = max(a.bottom, b.bottom)
    return RegionBox(x0, y0, x1 - x0, y1 - y0, max(a.score, b.score))


def _merge_fixpoint(boxes: list[RegionBox], width: int, height: int) -> list[RegionBox]:
    boxes = list(boxes)
    while True:
        best: tuple[int, int, int] | None = None  # (joint area, i, j)
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                if _mergeable(boxes[i], boxes[j], width, height):
                    area = _joint(boxes[i], boxes[j]).area
                    if best is None or (area, i, j) < best:
                        best = (area, i, j)
        if best is None:
            return boxes
        _, i, j = best
        merged = _joint(boxes[i], boxes[j])
        boxes = boxes[:i] + [merged] + boxes[i + 1: j] + boxes[j + 1:]


def _uncovered_rectangles(boxes: list[RegionBox], width: int, height: int) -> list[RegionBox]:
    """Filler rectangles for uncovered area, on the grid induced by box edges."""
    xs = sorted({0, width, *(b.x for b in boxes), *(b.right for b in boxes)})
    ys = sorted({0, height, *(b.y for b in boxes), *(b.bottom for b in boxes)})
    xs = [v for v in xs if 0 <= v <= width]
    ys = [v for v in ys if 0 <= v <= height]
    nx, ny = len(xs) - 1, len(ys) - 1
    covered = np.zeros((ny, nx), dtype=bool)
    for b in boxes:
        i0 = xs.index(b.x)
        i1 = xs.index(b.right)
        j0 = ys.index(b.y)
        j1 = ys.index(b.bottom)
        covered[j0:j1, i0:i1] = True
    # Greedy maximal rectangles: horizontal runs, then merge equal runs
    # downward across adjacent rows.
    strips: list[tuple[int, int, int, int]] = []  # (i0, i1, j0, j1) in cell indices
    for j in range(ny):
        i = 0
        while i < nx:
            if covered[j, i]:
                i += 1
                continue
            i0 = i
            while i < nx and not covered[j, i]:
                i += 1
            merged_up = False
            for s_idx, (si0, si1, sj0, sj1) in enumerate(strips):
                if si0 == i0 and si1 == i and sj1 == j:
                    strips[s_idx] = (si0, si1, sj0, j + 1)
                    merged_up = True
                    break
            if not merged_up:
                strips.append((i0, i, j, j + 1))
    return [
        RegionBox(xs[i0], ys[j0], xs[i1] - xs[i0], ys[j1] - ys[j0], 1.0)
        for i0, i1, j0, j1 in strips
    ]


def postprocess_regions(boxes: Sequence[RegionBox], width: int, height: int) -> list[RegionBox]:
    """Merge visually grouped boxes to a fixpoint, then repair coverage.

    The result covers the page exactly (its union rasterizes to every
    pixel), never shrinks covered area, and is a fixpoint of this function.
    """
    clipped = [c for b in boxes if (c := _clip(b, width, height)) is not None]
    merged = _merge_fixpoint(clipped, width, height)
    while True:
        fillers = _uncovered_rectangles(merged, width, height)
        if not fillers:
            break
        merged = _merge_fixpoint(merged + fillers, width, height)
    return sorted(merged, key=lambda b: (b.y, b.x, b.h, b.w))


# ---------------------------------------------------------------------------
# Region-wise extraction
# ---------------------------------------------------------------------------

REGION_PROMPT = """You describe one cropped region of a web page screenshot as a \
structured record. Reason step by step: first identify what kind of section the \
region is, then enumerate its visible components, then encode layout and colors.

Answer with JSON only, in this shape:
{"layout": {"grid_rows": int, "grid_cols": int, "spacing_px": int},
 "colors": ["#RRGGBB", ...],
 "components": [{"type": "<component type>", "func": "<role>",
                 "layout": {"grid_rows": int, "grid_cols": int, "spacing_px": int},
                 "colors": ["#RRGGBB", ...]}]}

Example. A product card region: one column holding an image, a title, a price
label, and a button with an orange accent. Step by step: the region is a card;
it stacks four elements vertically; the accent is #FF6600. Answer:
{"layout": {"grid_rows": 4, "grid_cols": 1, "spacing_px": 8},
 "colors": ["#FFFFFF", "#FF6600"],
 "components": [{"type": "Card", "func": "product summary",
                 "layout": {"grid_rows": 4, "grid_cols": 1, "spacing_px": 8},
                 "colors": ["#FF6600"]}]}
"""

PROFILE_PROMPT = """You summarize the overall visual style of a full web page \
screenshot. Answer with JSON only:
{"tone": "<one-line tone summary>",
 "palette": [{"hex": "#RRGGBB", "role": "<semantic role>"}, ...],
 "layout_rhythm": "<recurring layout description, e.g. 12-column grid, spacing=8px>"}
"""


def _parse_json_response(text: str) -> Any:
    """Parse a model's JSON answer, tolerating one fenced code block."""
    body = text.strip()
    if body.startswith("```"):
        first_newline = body.find("\n")
        closing = body.rfind("```")
        if first_newline == -1 or closing <= first_newline:
            raise ProtocolError("unterminated code fence in response")
        body = body[first_newline + 1: closing].strip()
    try:
        return json.loads(body)
    except ValueError as exc:
        raise ProtocolError(f"response is not valid JSON: {exc}") from exc


def derive_position(hint: RegionBox, page_width: int, page_height: int) -> PositionSpec:
    """Anchor by dominant page side; fraction is the share of the anchored axis."""
    spans_w = hint.w >= 0.98 * page_width
    spans_h = hint.h >= 0.98 * page_height
    cx = hint.x + hint.w / 2
    cy = hint.y + hint.h / 2
    if spans_w and spans_h:
        anchor, fraction = "full", 1.0
    elif spans_w:
        anchor = "top" if cy < page_height / 2 else "bottom"
        fraction = hint.h / page_height
    elif spans_h:
        anchor = "left" if cx < page_width / 2 else "right"
        fraction = hint.w / page_width
    else:
        anchor = "center"
        fraction = max(hint.w / page_width, hint.h / page_height)
    quantized = round(fraction, FRACTION_DIGITS)
    return PositionSpec(anchor, min(1.0, max(10 ** -FRACTION_DIGITS, quantized)))


def _fold_component_type(raw: str, vocabulary: Sequence[str]) -> str | None:
    if raw in vocabulary:
        return raw
    lowered = raw.strip().lower()
    for known in vocabulary:
        if known.lower() == lowered:
            return known
    return None


def _normalize_layout(obj: Any) -> SectionLayout:
    if not isinstance(obj, dict):
        raise ProtocolError(f"layout must be an object, got {type(obj).__name__}")
    try:
        rows = int(obj.get("grid_rows", 1))
        cols = int(obj.get("grid_cols", 1))
        spacing = int(obj.get("spacing_px", DEFAULT_SPACING_PX))
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"non-numeric layout field: {exc}") from exc
    return SectionLayout(max(1, rows), max(1, cols), max(0, spacing))


def _normalize_colors(value: Any) -> tuple[str, ...]:
    if value is None:
        return ()
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ProtocolError("colors must be a list of strings")
    return tuple(v.upper() if _HEXISH_RE.match(v) else v for v in value)


def extract_region_spec(
    region_image: np.ndarray,
    hint: RegionBox,
    client: ModelClient,
    *,
    page_width: int,
    page_height: int,
    index: int = 1,
    vocabulary: Sequence[str] | None = None,
) -> SectionSpec:
    """One region to one section: send the crop with the step-by-step prompt,
    parse and normalize the answer, derive position from the hint geometry."""
    vocab = tuple(vocabulary if vocabulary is not None else DEFAULT_COMPONENT_TYPES)
    response = client.complete(REGION_PROMPT, image=encode_png(region_image))
    data = _parse_json_response(response)
    if not isinstance(data, dict):
        raise ProtocolError("region record must be a JSON object")
    components = data.get("components", [])
    if not isinstance(components, list):
        raise ProtocolError("components must be a list")
    section_id = f"sec-{index}"
    parsed_components = []
    for j, comp in enumerate(components, start=1):
        if not isinstance(comp, dict):
            raise ProtocolError("component record must be a JSON object")
        raw_type = comp.get("type")
        if not isinstance(raw_type, str):
            raise ProtocolError("component type must be a string")
        folded = _fold_component_type(raw_type, vocab)
        if folded is None:
            raise ConstraintError(
                f"component type {raw_type!r} not in vocabulary", code="vocabulary",
            )
        func = comp.get("func", "")
        if not isinstance(func, str):
            raise ProtocolError("component func must be a string")
        parsed_components.append(ComponentSpec(
            type=folded,
            id=f"comp-{index}-{j}",
            func=func,
            layout=_normalize_layout(comp.get("layout", {})),
            colors=_normalize_colors(comp.get("colors")),
        ))
    return SectionSpec(
        id=section_id,
        pos=derive_position(hint, page_width, page_height),
        layout=_normalize_layout(data.get("layout", {})),
        colors=_normalize_colors(data.get("colors")),
        components=tuple(parsed_components),
    )


def extract_global_profile(image: np.ndarray, client: ModelClient) -> GlobalDesignProfile:
    """Whole-page style profile; palette hexes normalized to uppercase."""
    response = client.complete(PROFILE_PROMPT, image=encode_png(image))
    data = _parse_json_response(response)
    if not isinstance(data, dict):
        raise ProtocolError("profile must be a JSON object")
    tone = data.get("tone", "")
    rhythm = data.get("layout_rhythm", "")
    if not isinstance(tone, str) or not isinstance(rhythm, str):
        raise ProtocolError("tone and layout_rhythm must be strings")
    palette_raw = data.get("palette", [])
    if not isinstance(palette_raw, list):
        raise ProtocolError("palette must be a list")
    tokens: list[ColorToken] = []
    seen_roles: set[str] = set()
    for item in palette_raw:
        if not isinstance(item, dict) or not isinstance(item.get("hex"), str) \
                or not isinstance(item.get("role"), str):
            raise ProtocolError(f"bad palette entry {item!r}")
        hex_value = item["hex"].upper()
        if not _HEXISH_RE.match(hex_value):
            raise ProtocolError(f"bad palette hex {item['hex']!r}")
        role = item["role"]
        if role in seen_roles:
            raise ProtocolError(f"duplicate palette role {role!r}")
        seen_roles.add(role)
        tokens.append(ColorToken(hex=hex_value, role=role))
    return GlobalDesignProfile(tone=tone, palette=tuple(tokens), layout_rhythm=rhythm)


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------

_COLS_RE = re.compile(r"(?:(\d+)\s*[- ]\s*col)|(?:col(?:umn)?s?\s*[=:]\s*(\d+))", re.IGNORECASE)
_SPACING_RE = re.compile(r"(?:spacing\s*[=:]?\s*(\d+)\s*px)|(?:(\d+)\s*px\s+spacing)", re.IGNORECASE)


def _parse_grid_statement(text: str) -> tuple[int, int]:
    cols, spacing = DEFAULT_GRID_COLUMNS, DEFAULT_SPACING_PX
    m = _COLS_RE.search(text)
    if m:
        cols = max(1, int(m.group(1) or m.group(2)))
    m = _SPACING_RE.search(text)
    if m:
        spacing = max(0, int(m.group(1) or m.group(2)))
    return cols, spacing


def _coerce_cols(cols: int, global_cols: int) -> int:
    divisors = [d for d in range(1, global_cols + 1) if global_cols % d == 0]
    fitting = [d for d in divisors if d <= max(1, cols)]
    return fitting[-1] if fitting else 1


def _coerce_spacing(spacing: int, global_spacing: int) -> int:
    if global_spacing == 0:
        return 0
    return max(1, round(spacing / global_spacing)) * global_spacing


def integrate(
    profile: GlobalDesignProfile,
    rsus: Sequence[SectionSpec],
    page_goal: str,
) -> SpecDocument:
    """Fuse the global profile and the per-region sections into one document.

    Hex color references are rewritten to palette roles (unknown hexes join
    the palette as "Extra-<k>"); ids are re-sequenced for global uniqueness;
    section layouts are coerced onto the global grid so the result validates.
    """
    cols, spacing = _parse_grid_statement(profile.layout_rhythm)
    palette: list[ColorToken] = list(profile.palette)
    hex_to_role = {t.hex: t.role for t in palette}
    known_roles = {t.role for t in palette}
    extra_counter = 0

    def map_color(entry: str) -> str | None:
        nonlocal extra_counter
        if entry in known_roles:
            return entry
        if _HEXISH_RE.match(entry):
            hex_value = entry.upper()
            if hex_value in hex_to_role:
                return hex_to_role[hex_value]
            extra_counter += 1
            role = f"Extra-{extra_counter}"
            while role in known_roles:
                extra_counter += 1
                role = f"Extra-{extra_counter}"
            palette.append(ColorToken(hex=hex_value, role=role))
            hex_to_role[hex_value] = role
            known_roles.add(role)
            return role
        return None  # unresolvable role reference: dropped

    sections: list[SectionSpec] = []
    for k, rsu in enumerate(rsus, start=1):
        section_colors = tuple(r for c in rsu.colors if (r := map_color(c)) is not None)
        components = tuple(
            ComponentSpec(
                type=comp.type,
                id=f"comp-{k}-{j}",
                func=comp.func,
                layout=comp.layout,
                colors=tuple(r for c in comp.colors if (r := map_color(c)) is not None),
            )
            for j, comp in enumerate(rsu.components, start=1)
        )
        fraction = min(1.0, max(10 ** -FRACTION_DIGITS, round(rsu.pos.fraction, FRACTION_DIGITS)))
        sections.append(SectionSpec(
            id=f"sec-{k}",
            pos=PositionSpec(rsu.pos.anchor, fraction),
            layout=SectionLayout(
                grid_rows=max(1, rsu.layout.grid_rows),
                grid_cols=_coerce_cols(rsu.layout.grid_cols, cols),
                spacing_px=_coerce_spacing(rsu.layout.spacing_px, spacing),
            ),
            colors=section_colors,
            components=components,
        ))

    return SpecDocument(
        page_goal=page_goal,
        global_spec=GlobalSpecification(
            layout=LayoutSpec(cols, spacing, (profile.layout_rhythm,) if profile.layout_rhythm else ()),
            colors=tuple(palette),
            shape=ShapeSpec(DEFAULT_CORNER_RADIUS_PX, (profile.tone,) if profile.tone else ()),
            scenario=(),
        ),
        sections=tuple(sections),
    )


def extract_spec_from_image(
    image: np.ndarray,
    detector: DetectorClient,
    client: ModelClient,
    page_goal: str = "",
    *,
    vocabulary: Sequence[str] | None = None,
    max_workers: int = DEFAULT_REGION_WORKERS,
) -> SpecDocument:
    """Full pipeline: segment, group, profile, extract regions, integrate.

    Falls back to one full-page region when the detector finds nothing.
    Region extractions run with bounded parallelism; integration is the
    synchronization point.
    """
    height, width = image.shape[:2]
    try:
        raw = segment_regions(image, detector)
    except EmptyResult:
        raw = [RegionBox(0, 0, width, height, 1.0)]
    boxes = postprocess_regions(raw, width, height)
    profile = extract_global_profile(image, client)

    def one(args: tuple[int, RegionBox]) -> SectionSpec:
        index, box = args
        return extract_region_spec(
            crop(image, box), box, client,
            page_width=width, page_height=height,
            index=index, vocabulary=vocabulary,
        )

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        rsus = list(pool.map(one, enumerate(boxes, start=1)))
    return integrate(profile, rsus, page_goal)
