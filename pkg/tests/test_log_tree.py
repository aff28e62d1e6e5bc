import json

import pytest
from hypothesis import given, settings

from hlogformer.log_tree import (DepthExceeded, EmptyTree, MalformedRecord, build_segments, dfs_order,
                                 linearize, parse_record, read_corpus, to_json, tree_text)
from hlogformer.tokenizer import build_vocab, decode

from oracles import reference_linear, reference_segments, words
from strategies import records


def _vocab(*lines):
    return build_vocab([tree_text(parse_record(x)) for x in lines])


def _shape(tree, i=None):
    i = tree.root_id if i is None else i
    n = tree.nodes[i]
    if n.is_leaf:
        return n.value_text
    return {tree.nodes[c].key_text: _shape(tree, c) for c in n.children}


def test_parse_nested_mapping():
    t = parse_record('{"a": 1, "b": {"c": 2, "d": 3}}')
    assert _shape(t) == {"a": "1", "b": {"c": "2", "d": "3"}}
    assert t.root.key_text == ""


def test_parse_top_level_scalar_is_wrapped():
    t = parse_record("7")
    assert _shape(t) == {"value": "7"}


def test_parse_array_uses_decimal_keys():
    t = parse_record('{"a": [10, 20]}')
    assert _shape(t) == {"a": {"0": "10", "1": "20"}}


def test_duplicate_keys_kept_in_order():
    t = parse_record('{"k": 1, "k": 2}')
    assert [(t.nodes[c].key_text, t.nodes[c].value_text) for c in t.root.children] == [("k", "1"), ("k", "2")]


def test_malformed_reports_position():
    with pytest.raises(MalformedRecord) as e:
        parse_record('{"a": 1,, }')
    assert e.value.position == 8


def test_depth_limit():
    deep = '{"x": ' * 40 + "1" + "}" * 40
    with pytest.raises(DepthExceeded):
        parse_record(deep)
    parse_record(deep, max_depth=64)


def test_tree_invariants():
    t = parse_record('{"a": {"b": [1, {"c": null}], "d": true}, "e": "f"}')
    for n in t.nodes:
        if n.id == t.root_id:
            assert n.parent is None
        else:
            assert n.id in t.nodes[n.parent].children
        assert (n.value_text is None) == (len(n.children) > 0)


def test_segments_reverse_preorder():
    line = '{"a":1,"b":{"c":2,"d":3}}'
    v = _vocab(line)
    plan = build_segments(parse_record(line), v, 64)
    t = parse_record(line)
    b = t.root.children[1]
    assert [s.owner_node for s in plan.steps] == [b, t.root_id]
    assert decode(v, plan.steps[0].token_ids) == "c : 2 d : 3"
    assert decode(v, plan.steps[1].token_ids) == "a : 1 b :"
    assert plan.num_segments == 2


def test_single_internal_node():
    v = _vocab('{"a":1}')
    plan = build_segments(parse_record('{"a":1}'), v, 16)
    assert len(plan.steps) == 1 and decode(v, plan.steps[0].token_ids) == "a : 1"


def test_chunking_lengths():
    line = '{"a": "w1 w2 w3 w4 w5 w6 w7"}'      # a : + 7 words = 9 tokens
    v = _vocab(line)
    plan = build_segments(parse_record(line), v, 4)
    assert [len(s.token_ids) for s in plan.steps] == [4, 4, 1]
    assert [s.chunk_index for s in plan.steps] == [0, 1, 2]
    assert plan.num_segments == 1


def test_segment_length_floor():
    v = _vocab('{"a":1}')
    with pytest.raises(ValueError):
        build_segments(parse_record('{"a":1}'), v, 3)


def test_linearize():
    line = '{"a":1,"b":{"c":2,"d":3}}'
    v = _vocab(line)
    assert decode(v, linearize(parse_record(line), v)) == "a : 1 b { c : 2 d : 3 }"
    assert decode(v, linearize(parse_record('{"a":1}'), v)) == "a : 1"


def test_empty_mapping_has_no_leaves():
    v = _vocab('{"a":1}')
    with pytest.raises(EmptyTree):
        build_segments(parse_record("{}"), v, 8)
    with pytest.raises(EmptyTree):
        linearize(parse_record("{}"), v)


def test_dfs_order():
    t = parse_record('{"a":1,"b":{"c":2}}')
    assert [t.nodes[i].key_text for i in dfs_order(t)] == ["", "a", "b", "c"]
    t = parse_record('{"x":{"y":{"z":1}}}')
    assert [t.nodes[i].key_text for i in dfs_order(t)] == ["", "x", "y", "z"]
    assert len(dfs_order(parse_record('{"k": 0}'))) == 2


def test_read_corpus_skips_comments(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text('# header\n{"a": 1}\n\n{"b": 2}\n', encoding="utf-8")
    trees = read_corpus(p)
    assert [t.record_id for t in trees] == ["2", "4"]


@settings(max_examples=150, deadline=None)
@given(records)
def test_matches_reference_traversal(line):
    tree = parse_record(line)
    if not tree.leaves():
        return
    v = build_vocab([tree_text(tree)])
    lookup = lambda w: v.token_to_id.get(w, 1)  # noqa: E731
    for L in (4, 7, 64):
        plan = build_segments(tree, v, L)
        assert [(s.owner_node, list(s.token_ids)) for s in plan.steps] == reference_segments(line, lookup, L)
    assert linearize(tree, v) == [lookup(w) for w in reference_linear(line)]


@settings(max_examples=150, deadline=None)
@given(records)
def test_plan_properties(line):
    tree = parse_record(line)
    if not tree.leaves():
        return
    v = build_vocab([tree_text(tree)])
    plan = build_segments(tree, v, 5)
    internal = [n.id for n in tree.nodes if not n.is_leaf]
    assert plan.num_segments == len(internal)
    # ancestors come after all of their descendants
    last = {}
    first = {}
    for t, s in enumerate(plan.steps):
        first.setdefault(s.owner_node, t)
        last[s.owner_node] = t
    for d in internal:
        a = tree.nodes[d].parent
        while a is not None:
            assert last[d] < first[a]
            a = tree.nodes[a].parent
    # every leaf value unit lands in exactly one segment
    seen = [u for s in plan.steps for u in s.units if u >= 0]
    assert len(seen) == len(set(seen))
    # chunks of one owner reassemble its full segment
    full = build_segments(tree, v, 10_000)
    whole = {s.owner_node: s.token_ids for s in full.steps}
    for owner in whole:
        assert sum((s.token_ids for s in plan.steps if s.owner_node == owner), ()) == whole[owner]


@settings(max_examples=150, deadline=None)
@given(records)
def test_json_roundtrip(line):
    tree = parse_record(line)
    again = parse_record(to_json(tree))
    assert [(n.key_text, n.value_text, n.children) for n in again.nodes] == \
        [(n.key_text, n.value_text, n.children) for n in tree.nodes]


def test_tree_text_words():
    t = parse_record('{"User": {"Name": "Alice B"}}')
    assert words(tree_text(t)) == ["user", "{", "name", ":", "alice", "b", "}"]
