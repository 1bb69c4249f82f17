"""Line-based ``key = value`` config files (world.cfg, result.cfg, run.cfg).

Values are stored as strings; callers convert.  Floats are written with
``repr`` so they round-trip exactly.  Blank lines and ``#`` comments are
ignored on read; keys keep insertion order on write.
"""

from .errors import FormatError


def format_value(v):
    """Canonical string form for a config value."""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_kv(path, items):
    """Write an ordered mapping as ``key = value`` lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, val in items.items():
            fh.write(f"{key} = {format_value(val)}\n")


def read_kv(path):
    """Parse a ``key = value`` file into an ordered dict of strings."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise FormatError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
            key, _, val = stripped.partition("=")
            key = key.strip()
            if not key:
                raise FormatError(f"{path}:{lineno}: empty key")
            if key in out:
                raise FormatError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = val.strip()
    return out


def require_keys(mapping, keys, where):
    """Raise FormatError unless every key is present."""
    missing = [k for k in keys if k not in mapping]
    if missing:
        raise FormatError(f"{where}: missing keys: {', '.join(missing)}")
    return mapping
