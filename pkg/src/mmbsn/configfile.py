"""Flat TOML-like key/value config files for the train command.

Supported lines: ``key = value`` with ``#`` comments.  Values may be
quoted strings, bare words, integers, floats, true/false, or
``[a, b, c]`` lists of the above.  Keys mirror TrainingConfig and
architecture field names (e.g. ``epochs = 30``, ``masks = ["slash",
"backslash"]``).
"""

from __future__ import annotations


def _parse_atom(text):
    text = text.strip()
    if not text:
        raise ValueError("empty value")
    if text[0] in "\"'":
        if len(text) < 2 or text[-1] != text[0]:
            raise ValueError(f"unterminated string: {text}")
        return text[1:-1]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _strip_comment(line):
    out = []
    quote = None
    for ch in line:
        if quote:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "#":
            break
        out.append(ch)
    return "".join(out)


def parse_config(path):
    """Parse a key=value file into a plain dict."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = _strip_comment(raw).strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if not key or not value:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            if value.startswith("["):
                if not value.endswith("]"):
                    raise ValueError(f"{path}:{lineno}: unterminated list")
                inner = value[1:-1].strip()
                values[key] = [_parse_atom(a) for a in inner.split(",")] if inner else []
            else:
                values[key] = _parse_atom(value)
    return values
