"""Flat ``section.key = value`` configuration files.

Grammar (one entry per line)::

    line    := blank | comment | entry
    comment := '#' anything
    entry   := key '=' value [ '#' anything ]
    key     := name ('.' name)*
    name    := [A-Za-z_][A-Za-z0-9_]*

Values are kept as stripped strings and converted on access. Every
error carries the 1-based line and column it refers to.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config"]

_KEY = re.compile(r"[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None,
                 source: str = "<config>"):
        self.line, self.column, self.source = line, column, source
        where = f"{source}:{line}:{column}: " if line is not None else f"{source}: "
        super().__init__(where + message)


@dataclass
class RunConfig:
    values: dict[str, str] = field(default_factory=dict)
    positions: dict[str, tuple[int, int]] = field(default_factory=dict)
    source: str = "<config>"

    def __contains__(self, key: str) -> bool:
        return key in self.values

    def _error(self, key: str, message: str) -> ConfigError:
        line, col = self.positions.get(key, (None, None))
        return ConfigError(f"{key}: {message}", line, col, self.source)

    def section(self, prefix: str) -> dict[str, str]:
        head = prefix + "."
        return {k[len(head):]: v for k, v in self.values.items() if k.startswith(head)}

    def text(self, key: str, default: str | None = None) -> str:
        if key in self.values:
            return self.values[key]
        if default is None:
            raise ConfigError(f"missing required key {key!r}", source=self.source)
        return default

    def number(self, key: str, default: float | None = None) -> float:
        if key not in self.values:
            if default is None:
                raise ConfigError(f"missing required key {key!r}", source=self.source)
            return float(default)
        try:
            return float(self.values[key])
        except ValueError:
            raise self._error(key, f"expected a number, got {self.values[key]!r}") from None

    def optional_number(self, key: str) -> float | None:
        return self.number(key) if key in self.values else None

    def integer(self, key: str, default: int | None = None) -> int:
        if key not in self.values:
            if default is None:
                raise ConfigError(f"missing required key {key!r}", source=self.source)
            return int(default)
        try:
            return int(self.values[key])
        except ValueError:
            raise self._error(key, f"expected an integer, got {self.values[key]!r}") from None

    def flag(self, key: str, default: bool = False) -> bool:
        if key not in self.values:
            return default
        v = self.values[key].lower()
        if v in _TRUE:
            return True
        if v in _FALSE:
            return False
        raise self._error(key, f"expected a boolean, got {self.values[key]!r}")

    def numbers(self, key: str, default=None) -> list[float]:
        if key not in self.values:
            if default is None:
                raise ConfigError(f"missing required key {key!r}", source=self.source)
            return list(default)
        try:
            return [float(x) for x in self.values[key].split(",") if x.strip()]
        except ValueError:
            raise self._error(key, "expected a comma-separated list of numbers") from None

    def unused(self, known: set[str]) -> list[str]:
        return sorted(k for k in self.values if k not in known)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cfg = RunConfig(source=source)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        if "=" not in body:
            col = len(body) - len(body.lstrip()) + 1
            raise ConfigError("expected 'key = value'", lineno, col, source)
        left, right = body.split("=", 1)
        key = left.strip()
        kcol = len(left) - len(left.lstrip()) + 1
        if not key:
            raise ConfigError("empty key", lineno, kcol, source)
        if not _KEY.match(key):
            bad = next((i for i, ch in enumerate(key) if not (ch.isalnum() or ch in "._")), 0)
            raise ConfigError(f"malformed key {key!r}", lineno, kcol + bad, source)
        value = right.strip()
        vcol = len(left) + 2 + (len(right) - len(right.lstrip()))
        if not value:
            raise ConfigError(f"empty value for {key!r}", lineno, vcol, source)
        if key in cfg.values:
            first = cfg.positions[key][0]
            raise ConfigError(f"duplicate key {key!r} (first set on line {first})",
                              lineno, kcol, source)
        cfg.values[key] = value
        cfg.positions[key] = (lineno, vcol)
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from None
    return parse_config(text, str(path))
