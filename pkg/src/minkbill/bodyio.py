"""JSON body files.

A file holds one object with ``dim``, ``type`` and a type-specific payload::

    {"dim": 2, "type": "hpolytope", "halfspaces": [[1, 0], [0, 1]]}
    {"dim": 2, "type": "vpolytope", "vertices": [[1, 0], [0, 1]]}
    {"dim": 2, "type": "ellipsoid", "matrix": [[2, 0], [0, 1]]}
    {"dim": 3, "type": "lpball", "matrix": [[1, 0, 0], [0, 1, 0], [0, 0, 1]], "p": 1.5}
    {"dim": 2, "type": "powersum", "halfspaces": [[1, 0], [0, 1]], "s": 8}
    {"dim": 2, "type": "polar", "body": {...}}

Halfspace rows ``a`` mean ``|<a, x>| <= 1``; vertex rows ``v`` mean ``+-v``.
Floats are written with ``repr`` precision, so save/load is bit-exact.
"""

import json
import re
from pathlib import Path

import numpy as np

from .bodies import (ConvexBody, Ellipsoid, HPolytope, InvalidBodyError, LpBall, PolarBody,
                     PowerSum, VPolytope)

TYPES = ("hpolytope", "vpolytope", "ellipsoid", "lpball", "powersum", "polar")


class BodyFileError(ValueError):
    """Malformed body file; ``field`` and ``line`` locate the problem when known."""

    def __init__(self, message, source=None, field=None, line=None):
        where = []
        if source:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        super().__init__(f"{': '.join([', '.join(where), message]) if where else message}")
        self.source, self.field, self.line = source, field, line


def _line_of(text, key):
    if text is None:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _matrix(obj, key, text, source, dim=None):
    if key not in obj:
        raise BodyFileError("missing required field", source, key, _line_of(text, "type"))
    try:
        a = np.array(obj[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise BodyFileError(f"not a numeric matrix ({exc})", source, key, _line_of(text, key)) from None
    if a.ndim != 2 or a.size == 0:
        raise BodyFileError(f"expected a non-empty list of rows, got shape {a.shape}",
                            source, key, _line_of(text, key))
    if dim is not None and a.shape[1] != dim:
        raise BodyFileError(f"rows have length {a.shape[1]} but dim is {dim}",
                            source, key, _line_of(text, key))
    return a


def _scalar(obj, key, text, source):
    if key not in obj:
        raise BodyFileError("missing required field", source, key, _line_of(text, "type"))
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise BodyFileError(f"expected a number, got {v!r}", source, key, _line_of(text, key))
    return float(v)


def body_from_dict(obj, text=None, source=None) -> ConvexBody:
    if not isinstance(obj, dict):
        raise BodyFileError("top level must be a JSON object", source, line=1)
    kind = obj.get("type")
    if kind not in TYPES:
        raise BodyFileError(f"unknown type {kind!r}; expected one of {', '.join(TYPES)}",
                            source, "type", _line_of(text, "type"))
    dim = obj.get("dim")
    if dim is not None and (isinstance(dim, bool) or not isinstance(dim, int) or dim < 1):
        raise BodyFileError(f"dim must be a positive integer, got {dim!r}", source, "dim",
                            _line_of(text, "dim"))
    try:
        if kind == "hpolytope":
            body = HPolytope(_matrix(obj, "halfspaces", text, source, dim))
        elif kind == "vpolytope":
            body = VPolytope(_matrix(obj, "vertices", text, source, dim))
        elif kind == "ellipsoid":
            body = Ellipsoid(_matrix(obj, "matrix", text, source, dim))
        elif kind == "lpball":
            body = LpBall(_matrix(obj, "matrix", text, source, dim), _scalar(obj, "p", text, source))
        elif kind == "powersum":
            body = PowerSum(_matrix(obj, "halfspaces", text, source, dim),
                            _scalar(obj, "s", text, source))
        else:
            if not isinstance(obj.get("body"), dict):
                raise BodyFileError("polar needs a nested 'body' object", source, "body",
                                    _line_of(text, "body"))
            inner = body_from_dict(obj["body"], text, source)
            body = inner.polar()
    except InvalidBodyError as exc:
        raise BodyFileError(str(exc), source, kind, _line_of(text, "type")) from None
    if dim is not None and body.dim != dim:
        raise BodyFileError(f"payload has dimension {body.dim} but dim is {dim}", source, "dim",
                            _line_of(text, "dim"))
    return body


def body_to_dict(K: ConvexBody) -> dict:
    if isinstance(K, HPolytope):
        d = dict(type="hpolytope", halfspaces=K.functionals.tolist())
    elif isinstance(K, VPolytope):
        d = dict(type="vpolytope", vertices=K.vertices.tolist())
    elif isinstance(K, Ellipsoid):
        d = dict(type="ellipsoid", matrix=K.matrix.tolist())
    elif isinstance(K, LpBall):
        d = dict(type="lpball", matrix=K.matrix.tolist(), p=K.p)
    elif isinstance(K, PowerSum):
        d = dict(type="powersum", halfspaces=K.functionals.tolist(), s=K.s)
    elif isinstance(K, PolarBody):
        d = dict(type="polar", body=body_to_dict(K.primal))
    else:
        raise TypeError(f"cannot serialise {type(K).__name__}")
    return dict(dim=K.dim, **d)


def loads(text, source=None) -> ConvexBody:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BodyFileError(f"invalid JSON: {exc.msg} (column {exc.colno})", source,
                            line=exc.lineno) from None
    return body_from_dict(obj, text, source)


def dumps(K: ConvexBody) -> str:
    # json writes floats with repr, the shortest string that round-trips
    return json.dumps(body_to_dict(K), indent=2)


def load_body(path) -> ConvexBody:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise BodyFileError(f"cannot read file ({exc.strerror})", path) from None
    return loads(text, path)


def save_body(K: ConvexBody, path):
    Path(path).write_text(dumps(K) + "\n")
