"""Flat ``key=value`` text files for models and run configs."""

from pathlib import Path

from loadcast.exceptions import ConfigError


def format_real(x):
    """Shortest round-trip repr; always >= 15 significant digits of accuracy."""
    return repr(float(x))


def write_kv(path, items):
    """Write ``(key, value)`` pairs atomically, one per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for key, value in items:
        if isinstance(value, float):
            value = format_real(value)
        lines.append(f"{key}={value}")
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    tmp.replace(path)


def parse_kv(text, source="<string>"):
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def read_kv(path):
    path = Path(path)
    return parse_kv(path.read_text(encoding="utf-8"), source=str(path))


def indexed(kv, prefix):
    """Collect ``prefix.0``, ``prefix.1``, ... into a list of floats."""
    values = []
    while f"{prefix}.{len(values)}" in kv:
        values.append(float(kv[f"{prefix}.{len(values)}"]))
    return values
