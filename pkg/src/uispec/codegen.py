"""Specification-to-code rendering with compile-feedback repair.

The code model answers with fenced file blocks (``=== file: <path> ===``).
Generated source must tag each section's root element with an id marker
attribute — that single contract is what lets the preview bind elements to
tree nodes and lets compile errors map back to a region of the document.

Compilation is an external command with a ``{dir}`` placeholder.  The repo
ships a stub toolchain (`uispec.toolchain_stub`) that checks structural
well-formedness, so the loop is fully exercisable in CI; a real bundler can
be swapped in through the same interface.
"""
from __future__ import annotations

import hashlib
import posixpath
import re
import shutil
import subprocess
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .clients import ModelClient
from .core import SpecDocument, SpecPath, canonical_json, serialize_spec
from .errors import ConstraintError, ContractError, ProtocolError, ToolchainUnavailable
from .validate import validate

DEFAULT_MARKER_ATTR = "data-spec-id"
DEFAULT_TARGET = "react-antd"
MAX_REVISIONS = 3

FILE_BLOCK_RE = re.compile(r"^=== file: (?P<path>.+?) ===\s*$")
DIAGNOSTIC_RE = re.compile(
    r"^(?P<file>[^:\n]+):(?P<line>\d+):\s*(?P<etype>[^:]+):\s*(?P<message>.*)$"
)


@dataclass(frozen=True)
class CodeArtifact:
    """Generated source files plus the hash of the document they render."""

    files: dict[str, str]
    target: str
    spec_hash: str


@dataclass(frozen=True)
class Diagnostic:
    error_type: str
    file: str
    line: int
    message: str


@dataclass(frozen=True)
class CompileResult:
    ok: bool
    diagnostics: tuple[Diagnostic, ...]


@dataclass(frozen=True)
class ErrorReport:
    error_type: str
    snippet: str
    message: str
    region_path: SpecPath | None

    def to_json_obj(self) -> dict:
        return {
            "error_type": self.error_type,
            "snippet": self.snippet,
            "message": self.message,
            "region_path": str(self.region_path) if self.region_path else None,
        }


@dataclass(frozen=True)
class ToolchainSpec:
    """Executable plus argument template; `{dir}` expands to the build dir."""

    argv: tuple[str, ...]


def default_toolchain() -> ToolchainSpec:
    return ToolchainSpec((sys.executable, "-m", "uispec.toolchain_stub", "{dir}"))


@dataclass(frozen=True)
class DebugOutcome:
    artifact: CodeArtifact
    compile_result: CompileResult
    revisions: int


# ---------------------------------------------------------------------------
# Prompting and response parsing
# ---------------------------------------------------------------------------

CODEGEN_ROLE = """You are a senior front-end engineer. Render the UI specification \
below into executable source for the {target} target.
Rules:
- Respond only with file blocks. Each block starts with a line of the exact form
  `=== file: <relative path> ===` followed by the complete file contents.
- Tag the root element of every section with {marker}="<section id>" so each
  section can be indexed directly in the rendered page.
- Keep the code self-contained and syntactically complete.
"""

DEBUG_ROLE = """The generated UI code failed to compile. Fix it and respond only with \
corrected file blocks (`=== file: <relative path> ===` followed by contents). Keep the \
section id markers intact.

Error report:
{report}

Specification:
{spec}

Current files:
{files}
"""


def build_codegen_prompt(doc: SpecDocument, fewshot: str, target: str,
                         marker_attr: str = DEFAULT_MARKER_ATTR) -> str:
    parts = [CODEGEN_ROLE.format(target=target, marker=marker_attr)]
    if fewshot:
        parts.append(fewshot)
    parts.append("=== specification ===")
    parts.append(serialize_spec(doc))
    parts.append(f"target: {target}")
    return "\n".join(parts)


def render_file_blocks(files: dict[str, str]) -> str:
    parts = []
    for path, text in files.items():
        parts.append(f"=== file: {path} ===")
        parts.append(text.rstrip("\n"))
    return "\n".join(parts)


def parse_file_blocks(text: str) -> dict[str, str]:
    """Split a model response into files; raises when no block is found or a
    path escapes the output directory."""
    files: dict[str, str] = {}
    current: str | None = None
    buffer: list[str] = []

    def flush() -> None:
        if current is not None:
            files[current] = "\n".join(buffer).rstrip("\n") + "\n"

    for line in text.splitlines():
        m = FILE_BLOCK_RE.match(line)
        if m:
            flush()
            current = _normalize_rel_path(m.group("path").strip())
            buffer = []
        elif current is not None:
            buffer.append(line)
    flush()
    if not files:
        raise ProtocolError("response contains no file blocks")
    return files


def _normalize_rel_path(path: str) -> str:
    norm = posixpath.normpath(path.replace("\\", "/"))
    if norm.startswith(("/", "..")) or norm == ".":
        raise ProtocolError(f"illegal file path {path!r}")
    return norm


def spec_hash(doc: SpecDocument) -> str:
    return hashlib.sha256(serialize_spec(doc).encode("utf-8")).hexdigest()


def _marker_counts(files: dict[str, str], doc: SpecDocument, marker_attr: str) -> dict[str, int]:
    blob = "\n".join(files.values())
    return {
        section.id: blob.count(f'{marker_attr}="{section.id}"')
        for section in doc.sections
    }


def generate_code(
    doc: SpecDocument,
    fewshot: str,
    client: ModelClient,
    target: str = DEFAULT_TARGET,
    *,
    marker_attr: str = DEFAULT_MARKER_ATTR,
    vocabulary: Sequence[str] | None = None,
) -> CodeArtifact:
    """Render a document to source files via the code model.

    The document must validate before any client call.  The response must
    contain parseable file blocks and exactly one id marker per section.
    """
    report = validate(doc, vocabulary)
    if not report.ok:
        raise ConstraintError(
            "document fails validation: "
            + "; ".join(f"{v.code} at {v.path}" for v in report.violations)
        )
    prompt = build_codegen_prompt(doc, fewshot, target, marker_attr)
    response = client.complete(prompt)
    files = parse_file_blocks(response)
    artifact = CodeArtifact(files=files, target=target, spec_hash=spec_hash(doc))
    bad = {sid: n for sid, n in _marker_counts(files, doc, marker_attr).items() if n != 1}
    if bad:
        raise ContractError(
            "id marker contract violated: "
            + ", ".join(f"{sid} appears {n} times" for sid, n in sorted(bad.items()))
        )
    return artifact


# ---------------------------------------------------------------------------
# Compilation
# ---------------------------------------------------------------------------

def compile_check(
    artifact: CodeArtifact,
    toolchain: ToolchainSpec | None = None,
    scratch_root: str | None = None,
) -> CompileResult:
    """Write the artifact to a private scratch dir, run the toolchain, and
    parse `file:line: type: message` diagnostic lines."""
    toolchain = toolchain or default_toolchain()
    workdir = tempfile.mkdtemp(prefix="uispec-build-", dir=scratch_root)
    try:
        for rel, text in artifact.files.items():
            target = Path(workdir) / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(text, encoding="utf-8")
        argv = [part.replace("{dir}", workdir) for part in toolchain.argv]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=120)
        except FileNotFoundError as exc:
            raise ToolchainUnavailable(f"toolchain not found: {argv[0]}") from exc
        except subprocess.TimeoutExpired as exc:
            raise ToolchainUnavailable(f"toolchain timed out: {argv[0]}") from exc
        diagnostics = []
        for line in (proc.stdout + "\n" + proc.stderr).splitlines():
            m = DIAGNOSTIC_RE.match(line.strip())
            if m:
                diagnostics.append(Diagnostic(
                    error_type=m.group("etype").strip(),
                    file=m.group("file").strip(),
                    line=int(m.group("line")),
                    message=m.group("message").strip(),
                ))
        if proc.returncode != 0 and not diagnostics:
            diagnostics.append(Diagnostic(
                error_type="toolchain",
                file="",
                line=0,
                message=f"exit status {proc.returncode}",
            ))
        return CompileResult(ok=not diagnostics, diagnostics=tuple(diagnostics))
    finally:
        shutil.rmtree(workdir, ignore_errors=True)


def make_error_report(
    result: CompileResult,
    artifact: CodeArtifact,
    doc: SpecDocument,
    marker_attr: str = DEFAULT_MARKER_ATTR,
) -> ErrorReport:
    """Structured report from the first diagnostic: error type, a snippet of
    three lines of context either side, and the section whose id marker most
    closely precedes the failure."""
    first = result.diagnostics[0]
    text = artifact.files.get(first.file, "")
    lines = text.splitlines()
    line_idx = max(1, first.line)
    start = max(0, line_idx - 1 - 3)
    end = min(len(lines), line_idx + 3)
    snippet = "\n".join(lines[start:end])

    region_path: SpecPath | None = None
    section_ids = {s.id for s in doc.sections}
    marker_re = re.compile(re.escape(marker_attr) + r'="([^"]+)"')
    for line in reversed(lines[:min(line_idx, len(lines))]):
        m = marker_re.search(line)
        if m and m.group(1) in section_ids:
            region_path = SpecPath(("sections", "#" + m.group(1)))
            break
    return ErrorReport(
        error_type=first.error_type,
        snippet=snippet,
        message=first.message,
        region_path=region_path,
    )


# ---------------------------------------------------------------------------
# Compile-feedback-repair loop
# ---------------------------------------------------------------------------

def build_debug_prompt(artifact: CodeArtifact, report: ErrorReport, doc: SpecDocument) -> str:
    return DEBUG_ROLE.format(
        report=canonical_json(report.to_json_obj()),
        spec=serialize_spec(doc),
        files=render_file_blocks(artifact.files),
    )


def debug_loop(
    artifact: CodeArtifact,
    doc: SpecDocument,
    client: ModelClient,
    toolchain: ToolchainSpec | None = None,
    *,
    marker_attr: str = DEFAULT_MARKER_ATTR,
    scratch_root: str | None = None,
) -> DebugOutcome:
    """Compile; on failure, feed the error report back for up to three
    revision rounds (four compiles at most).

    Returns the first compiling artifact.  If nothing compiles, returns the
    attempt with the fewest diagnostics — never worse than the input.
    """
    result = compile_check(artifact, toolchain, scratch_root)
    candidates: list[tuple[CodeArtifact, CompileResult]] = [(artifact, result)]
    current = artifact
    revisions = 0
    while not result.ok and revisions < MAX_REVISIONS:
        report = make_error_report(result, current, doc, marker_attr)
        response = client.complete(build_debug_prompt(current, report, doc))
        files = parse_file_blocks(response)
        current = CodeArtifact(files=files, target=artifact.target, spec_hash=artifact.spec_hash)
        revisions += 1
        result = compile_check(current, toolchain, scratch_root)
        candidates.append((current, result))
    if result.ok:
        return DebugOutcome(artifact=current, compile_result=result, revisions=revisions)
    best_artifact, best_result = candidates[0]
    for cand_artifact, cand_result in candidates[1:]:
        if len(cand_result.diagnostics) <= len(best_result.diagnostics):
            best_artifact, best_result = cand_artifact, cand_result
    return DebugOutcome(artifact=best_artifact, compile_result=best_result, revisions=revisions)
