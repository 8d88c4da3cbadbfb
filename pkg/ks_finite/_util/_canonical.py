import collections.abc
import hashlib
import json
import math

import numpy as np


def dumps(obj):
    """Serialize `obj` to canonical JSON.

    Keys are sorted, there is no whitespace and floats are written with 17
    significant digits, so equal documents always produce equal bytes and
    every float survives a round trip exactly.
    """
    parts = []
    _encode(obj, parts)
    return "".join(parts)


def digest(obj):
    """Lowercase hex SHA-256 of the canonical JSON of `obj`"""
    return hashlib.sha256(dumps(obj).encode("utf-8")).hexdigest()


def _encode(obj, parts):
    if obj is None:
        parts.append("null")
    elif obj is True or obj is False or isinstance(obj, np.bool_):
        parts.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        parts.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        value = float(obj)
        if not math.isfinite(value):
            raise ValueError(f"Can't serialize non-finite float: {value}")
        # avoid "-0"
        parts.append(format(value + 0.0, ".17g"))
    elif isinstance(obj, str):
        parts.append(json.dumps(obj))
    elif isinstance(obj, collections.abc.Mapping):
        parts.append("{")
        for i, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise TypeError(f"Keys must be strings, got {key!r}")
            if i:
                parts.append(",")
            parts.append(json.dumps(key))
            parts.append(":")
            _encode(obj[key], parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        parts.append("[")
        for i, item in enumerate(obj):
            if i:
                parts.append(",")
            _encode(item, parts)
        parts.append("]")
    else:
        raise TypeError(f"Can't serialize object of type {type(obj).__name__}")
