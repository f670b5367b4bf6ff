"""Parsing for the flat ``key=value`` text files used by scenes, lighting and training."""

from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    """A text config could not be parsed; carries the offending line number."""

    def __init__(self, msg: str, path=None, lineno: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {msg}".strip())
        self.lineno = lineno


def iter_lines(text: str):
    """Yield ``(lineno, tokens)`` for non-blank lines, dropping ``#`` comments."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def parse_pairs(tokens, lineno=None, path=None) -> dict[str, str]:
    out = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or not key or not value:
            raise ConfigError(f"expected key=value, got {tok!r}", path, lineno)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", path, lineno)
        out[key] = value
    return out


def read_flat(path) -> dict[str, str]:
    """Read a file holding one or more ``key=value`` tokens per line."""
    text = Path(path).read_text()
    merged: dict[str, str] = {}
    for lineno, tokens in iter_lines(text):
        pairs = parse_pairs(tokens, lineno, path)
        dup = merged.keys() & pairs.keys()
        if dup:
            raise ConfigError(f"duplicate key {sorted(dup)[0]!r}", path, lineno)
        merged.update(pairs)
    return merged


def write_flat(values: dict, path) -> None:
    lines = [f"{k}={_fmt(v)}" for k, v in values.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_float(value: str, key: str, lineno=None, path=None) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {value!r}", path, lineno) from None


def to_int(value: str, key: str, lineno=None, path=None) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key}: not an integer: {value!r}", path, lineno) from None


def to_bool(value: str, key: str, lineno=None, path=None) -> bool:
    v = value.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: not a boolean: {value!r}", path, lineno)


def to_floats(value: str, key: str, lineno=None, path=None) -> list[float]:
    return [to_float(v, key, lineno, path) for v in value.split(",")]
