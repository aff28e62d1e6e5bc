"""Independent reference implementations used as test oracles.

They work directly on decoded JSON and plain strings and share no code with
the package apart from the vocabulary lookup table.
"""

from __future__ import annotations

import json
import re

_TOKEN = re.compile(r"\w+|[^\w\s]")


def words(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _scalar(v) -> str:
    if v is None:
        return "null"
    if v is True:
        return "true"
    if v is False:
        return "false"
    return v if isinstance(v, str) else json.dumps(v)


def _children(value):
    if isinstance(value, dict):           # never produced: pairs hook below
        raise AssertionError
    if isinstance(value, tuple):          # object as tuple of pairs
        return list(value)
    return [(str(i), v) for i, v in enumerate(value)]


def _is_container(v):
    return isinstance(v, (tuple, list))


def _load(line: str):
    # numbers keep their source text so "1.0" stays "1.0"
    v = json.loads(line, object_pairs_hook=tuple, parse_float=lambda s: _Raw(s), parse_int=lambda s: _Raw(s))
    if not _is_container(v):
        v = (("value", v),)
    return v


class _Raw(str):
    pass


def _as_leaf(v) -> str | None:
    """Display text if ``v`` is a leaf in the tree (scalars and empty nested containers)."""
    if isinstance(v, _Raw):
        return str(v)
    if _is_container(v):
        return ("{}" if isinstance(v, tuple) else "[]") if len(v) == 0 else None
    return _scalar(v)


def reference_segments(line: str, lookup, max_len: int) -> list[tuple[int, list[int]]]:
    """[(preorder rank of owner, token ids)] in processing order.

    Internal nodes are collected in pre-order, then visited last to first,
    which puts every node after all of its internal descendants.
    """
    root = _load(line)
    internals = []          # (rank, segment words)
    counter = [0]

    def walk(value):
        rank = counter[0]
        slot = len(internals)
        internals.append(None)
        seg = []
        for key, child in _children(value):
            counter[0] += 1
            leaf = _as_leaf(child)
            if leaf is None:
                seg += words(key) + [":"]
                walk(child)
            else:
                seg += words(key) + [":"] + words(leaf)
        internals[slot] = (rank, seg)

    walk(root)
    out = []
    for rank, seg in reversed(internals):
        ids = [lookup(w) for w in seg]
        for start in range(0, len(ids), max_len):
            out.append((rank, ids[start:start + max_len]))
    return out


def reference_linear(line: str) -> list[str]:
    root = _load(line)

    def emit(value):
        out = []
        for key, child in _children(value):
            leaf = _as_leaf(child)
            if leaf is None:
                out += words(key) + ["{"] + emit(child) + ["}"]
            else:
                out += words(key) + [":"] + words(leaf)
        return out

    return emit(root)
