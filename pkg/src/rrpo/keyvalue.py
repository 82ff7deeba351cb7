"""Plain-text ``key = value`` files used for MDPs, gridworld specs and experiment configs.

One entry per line, ``#`` starts a comment, blank lines are ignored. Arrays are
whitespace-separated numbers on a single line. Keys are dotted (``train.eta``).
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import InvalidInputError


def parse(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise InvalidInputError(f"line {lineno}: empty key")
        if key in entries:
            raise InvalidInputError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value.strip()
    return entries


def read(path) -> dict[str, str]:
    return parse(Path(path).read_text(encoding="utf-8"))


def dump(entries: dict[str, object], header: str | None = None) -> str:
    lines = []
    if header:
        lines.append(f"# {header}")
    for key, value in entries.items():
        lines.append(f"{key} = {format_value(value)}")
    return "\n".join(lines) + "\n"


def format_value(value) -> str:
    if isinstance(value, np.ndarray) or isinstance(value, (list, tuple)):
        return " ".join(format_value(v) for v in np.ravel(np.asarray(value, dtype=object)))
    if isinstance(value, (float, np.floating)):
        # repr round-trips doubles exactly
        return repr(float(value))
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    return str(value)


def as_float_array(value: str, size: int | None = None, key: str = "") -> np.ndarray:
    try:
        arr = np.array([float(tok) for tok in value.split()], dtype=float)
    except ValueError as exc:
        raise InvalidInputError(f"{key}: non-numeric entry in {value!r}") from exc
    if size is not None and arr.size != size:
        raise InvalidInputError(f"{key}: expected {size} numbers, got {arr.size}")
    return arr


def as_bool(value: str, key: str = "") -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise InvalidInputError(f"{key}: expected a boolean, got {value!r}")
