"""Stub compile toolchain: a structural well-formedness checker.

Scans every file in the build directory for balanced (), [], {} and
terminated string literals, skipping // and /* */ comments.  Diagnostics
are printed one per line as ``file:line: type: message`` and the exit
status is non-zero when any file fails — the same surface a real bundler
is adapted to, so the two are interchangeable behind `ToolchainSpec`.

Per file, only the first problem is reported; cascading errors after an
unbalanced delimiter are noise.
"""
from __future__ import annotations

import sys
from pathlib import Path

OPENERS = {"(": ")", "[": "]", "{": "}"}
CLOSERS = {")": "(", "]": "[", "}": "{"}


def check_text(text: str) -> tuple[int, str, str] | None:
    """First structural problem as (line, type, message), or None."""
    stack: list[tuple[str, int]] = []
    line = 1
    i = 0
    n = len(text)
    state = "code"  # code | single | double | backtick | line-comment | block-comment
    quote_line = 0
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            if state == "line-comment":
                state = "code"
            elif state in ("single", "double"):
                return (quote_line, "string", "unterminated string literal")
            i += 1
            continue
        if state == "code":
            if ch == "/" and i + 1 < n and text[i + 1] == "/":
                state = "line-comment"
                i += 2
                continue
            if ch == "/" and i + 1 < n and text[i + 1] == "*":
                state = "block-comment"
                i += 2
                continue
            if ch in ("'", '"', "`"):
                state = {"'": "single", '"': "double", "`": "backtick"}[ch]
                quote_line = line
            elif ch in OPENERS:
                stack.append((ch, line))
            elif ch in CLOSERS:
                if not stack or stack[-1][0] != CLOSERS[ch]:
                    return (line, "delimiter", f"unbalanced {ch!r}")
                stack.pop()
        elif state in ("single", "double", "backtick"):
            if ch == "\\":
                i += 2
                continue
            if (state == "single" and ch == "'") or \
               (state == "double" and ch == '"') or \
               (state == "backtick" and ch == "`"):
                state = "code"
        elif state == "block-comment":
            if ch == "*" and i + 1 < n and text[i + 1] == "/":
                state = "code"
                i += 2
                continue
        i += 1
    if state in ("single", "double"):
        return (quote_line, "string", "unterminated string literal")
    if state == "backtick":
        return (quote_line, "string", "unterminated template literal")
    if stack:
        opener, opened_at = stack[-1]
        return (opened_at, "delimiter", f"unclosed {opener!r}")
    return None


def main(argv: list[str] | None = None) -> int:
    argv = argv if argv is not None else sys.argv[1:]
    if len(argv) != 1:
        print("usage: python -m uispec.toolchain_stub <dir>", file=sys.stderr)
        return 2
    root = Path(argv[0])
    if not root.is_dir():
        print(f"{root}: not a directory", file=sys.stderr)
        return 2
    failures = 0
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root).as_posix()
        problem = check_text(path.read_text(encoding="utf-8", errors="replace"))
        if problem:
            line, etype, message = problem
            print(f"{rel}:{line}: {etype}: {message}")
            failures += 1
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
