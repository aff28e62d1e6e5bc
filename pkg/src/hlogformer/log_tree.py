"""Log records as trees, and the segment schedule derived from them.

A record is one JSON value. Mapping keys and array indices become node keys,
scalars become leaves. Each internal node owns one segment: the concatenated
``key : value`` text of its leaf children and the ``key :`` header of its
internal children. Segments are scheduled children-before-parent (reverse
pre-order of internal nodes) so that summaries flow from low-level to
high-level nodes.

Every key or value token of the record appears exactly once across all
segments, and exactly once in the flat linearization. Both views index those
tokens by a shared *content unit* number (pre-order of non-root nodes, key
tokens then value tokens), which is what masking refers to.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

from .tokenizer import NUM_SPECIAL, Vocab

DEFAULT_MAX_DEPTH = 32
NO_UNIT = -1


class MalformedRecord(ValueError):
    def __init__(self, position: int, reason: str):
        super().__init__(f"malformed record at char {position}: {reason}")
        self.position = position
        self.reason = reason


class DepthExceeded(ValueError):
    pass


class EmptyTree(ValueError):
    pass


@dataclass(frozen=True)
class LogNode:
    id: int
    key_text: str
    value_text: str | None
    children: tuple[int, ...]
    parent: int | None
    kind: str  # "object", "array" or "scalar"
    raw: str | None = None  # JSON text of a scalar leaf

    @property
    def is_leaf(self) -> bool:
        return self.kind == "scalar"


@dataclass(frozen=True)
class LogTree:
    nodes: tuple[LogNode, ...]
    root_id: int = 0
    record_id: str = ""

    @property
    def root(self) -> LogNode:
        return self.nodes[self.root_id]

    def leaves(self) -> list[LogNode]:
        return [self.nodes[i] for i in dfs_order(self) if self.nodes[i].is_leaf]

    def internal_nodes(self) -> list[LogNode]:
        return [self.nodes[i] for i in dfs_order(self) if not self.nodes[i].is_leaf]


@dataclass(frozen=True)
class Segment:
    owner_node: int
    token_ids: tuple[int, ...]
    chunk_index: int = 0
    units: tuple[int, ...] = ()  # content unit per token, NO_UNIT for separators


@dataclass(frozen=True)
class SegmentPlan:
    steps: tuple[Segment, ...]
    total_leaf_tokens: int
    num_segments: int
    content_ids: tuple[int, ...]

    @property
    def total_tokens(self) -> int:
        return sum(len(s.token_ids) for s in self.steps)

    @cached_property
    def unit_coords(self) -> dict[int, tuple[int, int]]:
        """content unit -> (step index, offset within that step)"""
        coords = {}
        for t, seg in enumerate(self.steps):
            for off, u in enumerate(seg.units):
                if u != NO_UNIT:
                    coords[u] = (t, off)
        return coords

    @cached_property
    def maskable_units(self) -> tuple[int, ...]:
        return tuple(u for u, tok in enumerate(self.content_ids) if tok >= NUM_SPECIAL)


# ---------------------------------------------------------------- parsing

class _Pairs(list):
    pass


class _Number(str):
    pass


def _scalar_text(value) -> tuple[str, str]:
    """(display text, JSON text) for a decoded scalar."""
    if value is None:
        return "null", "null"
    if value is True:
        return "true", "true"
    if value is False:
        return "false", "false"
    if isinstance(value, _Number):
        return str(value), str(value)
    return value, json.dumps(value, ensure_ascii=False)


def parse_record(line: str, record_id: str = "", max_depth: int = DEFAULT_MAX_DEPTH) -> LogTree:
    try:
        value = json.loads(line, object_pairs_hook=_Pairs, parse_int=_Number,
                           parse_float=_Number, parse_constant=_Number)
    except json.JSONDecodeError as e:
        raise MalformedRecord(e.pos, e.msg) from None
    except RecursionError:
        raise DepthExceeded(f"record nests deeper than the parser can follow (max_depth={max_depth})") from None

    nodes: list[dict] = []

    def add(key: str, val, parent: int | None, depth: int) -> int:
        if depth > max_depth:
            raise DepthExceeded(f"node depth {depth} exceeds max_depth={max_depth}")
        idx = len(nodes)
        node = {"id": idx, "key_text": key, "parent": parent, "children": []}
        nodes.append(node)
        if isinstance(val, _Pairs):
            items = val
            node["kind"] = "object"
        elif isinstance(val, list):
            items = [(str(i), v) for i, v in enumerate(val)]
            node["kind"] = "array"
        else:
            items = None
            node["kind"] = "scalar"
            node["value_text"], node["raw"] = _scalar_text(val)
        if items is not None:
            if not items and parent is not None:
                # empty nested container: keep it as a leaf so internal nodes always have children
                node["kind"] = "scalar"
                node["value_text"] = node["raw"] = "{}" if isinstance(val, _Pairs) else "[]"
            else:
                node["children"] = [add(k, v, idx, depth + 1) for k, v in items]
        return idx

    if isinstance(value, (_Pairs, list)):
        add("", value, None, 0)
    else:
        add("", _Pairs([("value", value)]), None, 0)

    return LogTree(
        nodes=tuple(
            LogNode(id=n["id"], key_text=n["key_text"], value_text=n.get("value_text"),
                    children=tuple(n["children"]), parent=n["parent"], kind=n["kind"],
                    raw=n.get("raw"))
            for n in nodes
        ),
        root_id=0,
        record_id=record_id,
    )


def read_corpus(path, max_depth: int = DEFAULT_MAX_DEPTH) -> list[LogTree]:
    """Read newline-delimited JSON records; blank lines and ``#`` lines are skipped."""
    trees = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            trees.append(parse_record(stripped, record_id=str(lineno), max_depth=max_depth))
    return trees


def to_json(tree: LogTree) -> str:
    """Structural re-serialization of a tree back to compact JSON text."""

    def render(i: int) -> str:
        node = tree.nodes[i]
        if node.kind == "scalar":
            return node.raw
        if node.kind == "array":
            return "[" + ",".join(render(c) for c in node.children) + "]"
        return "{" + ",".join(
            json.dumps(tree.nodes[c].key_text, ensure_ascii=False) + ":" + render(c)
            for c in node.children) + "}"

    return render(tree.root_id)


# ---------------------------------------------------------------- traversal

def dfs_order(tree: LogTree) -> list[int]:
    """Pre-order: each node before its children, children in document order."""
    order = []
    stack = [tree.root_id]
    while stack:
        i = stack.pop()
        order.append(i)
        stack.extend(reversed(tree.nodes[i].children))
    return order


def iter_internal_forward(tree: LogTree) -> Iterator[int]:
    """Internal nodes children-before-parent (reverse pre-order)."""
    internal = [i for i in dfs_order(tree) if not tree.nodes[i].is_leaf]
    return reversed(internal)


@dataclass(frozen=True)
class _Content:
    ids: tuple[int, ...]
    key_span: dict[int, tuple[int, int]]
    value_span: dict[int, tuple[int, int]]


def _content(tree: LogTree, vocab: Vocab) -> _Content:
    ids: list[int] = []
    key_span, value_span = {}, {}
    for i in dfs_order(tree):
        if i == tree.root_id:
            continue
        node = tree.nodes[i]
        start = len(ids)
        ids.extend(vocab.encode(node.key_text))
        key_span[i] = (start, len(ids))
        if node.is_leaf:
            start = len(ids)
            ids.extend(vocab.encode(node.value_text))
            value_span[i] = (start, len(ids))
    return _Content(tuple(ids), key_span, value_span)


def _require_leaves(tree: LogTree) -> None:
    if not any(n.is_leaf for n in tree.nodes):
        raise EmptyTree(f"record {tree.record_id!r} has no leaves")


def _single(vocab: Vocab, text: str) -> int:
    (tok,) = vocab.encode(text)
    return tok


def build_segments(tree: LogTree, vocab: Vocab, max_segment_len: int) -> SegmentPlan:
    if max_segment_len < 4:
        raise ValueError("max_segment_len must be at least 4")
    _require_leaves(tree)
    content = _content(tree, vocab)
    colon = _single(vocab, ":")

    steps: list[Segment] = []
    num_segments = 0
    leaf_tokens = 0
    for owner in iter_internal_forward(tree):
        num_segments += 1
        toks: list[int] = []
        units: list[int] = []
        for c in tree.nodes[owner].children:
            a, b = content.key_span[c]
            toks.extend(content.ids[a:b])
            units.extend(range(a, b))
            toks.append(colon)
            units.append(NO_UNIT)
            if tree.nodes[c].is_leaf:
                a2, b2 = content.value_span[c]
                toks.extend(content.ids[a2:b2])
                units.extend(range(a2, b2))
                leaf_tokens += (b - a) + 1 + (b2 - a2)
        for chunk, start in enumerate(range(0, len(toks), max_segment_len)):
            steps.append(Segment(owner, tuple(toks[start:start + max_segment_len]), chunk,
                                 tuple(units[start:start + max_segment_len])))

    return SegmentPlan(tuple(steps), leaf_tokens, num_segments, content.ids)


def linearize_units(tree: LogTree, vocab: Vocab) -> tuple[list[int], list[int]]:
    """Flat serialization plus the content unit of every token."""
    _require_leaves(tree)
    content = _content(tree, vocab)
    colon, lbrace, rbrace = (_single(vocab, s) for s in ":{}")
    ids: list[int] = []
    units: list[int] = []

    def emit(i: int) -> None:
        node = tree.nodes[i]
        a, b = content.key_span[i]
        ids.extend(content.ids[a:b])
        units.extend(range(a, b))
        if node.is_leaf:
            a, b = content.value_span[i]
            ids.append(colon)
            units.append(NO_UNIT)
            ids.extend(content.ids[a:b])
            units.extend(range(a, b))
        else:
            ids.append(lbrace)
            units.append(NO_UNIT)
            for c in node.children:
                emit(c)
            ids.append(rbrace)
            units.append(NO_UNIT)

    for c in tree.root.children:
        emit(c)
    return ids, units


def linearize(tree: LogTree, vocab: Vocab) -> list[int]:
    return linearize_units(tree, vocab)[0]


def tree_text(tree: LogTree) -> str:
    """The flat serialization as text; used to build vocabularies."""

    def render(i: int) -> str:
        node = tree.nodes[i]
        if node.is_leaf:
            return f"{node.key_text} : {node.value_text}"
        return f"{node.key_text} {{ " + " ".join(render(c) for c in node.children) + " }"

    return " ".join(render(c) for c in tree.root.children)
