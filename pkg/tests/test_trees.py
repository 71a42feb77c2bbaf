import random

import pytest

from backparse.trees import (
    BadToken,
    EMPTY_LABEL,
    LabeledSpan,
    Span,
    Tree,
    UnmatchedBrackets,
    binarize,
    constituent_spans,
    debinarize,
    parse_bracketed,
    render_bracketed,
)
from grammar import random_tree

PROUD = "(S (NP (PRP I)) (VP (VBD am) (ADJP (JJ proud) (PP (IN of) (NP (PRP myself))))))"
SKIING = "(SQ (VBP Have) (NP (PRP you)) (ADVP (DT ever)) (VP (VBN gone) (NN skiing)))"


def test_parse_prompt_tree():
    t = parse_bracketed(PROUD)
    assert t.label == "S"
    assert t.words() == ["I", "am", "proud", "of", "myself"]
    assert t.pos_tags() == ["PRP", "VBD", "JJ", "IN", "PRP"]


def test_parse_minimal_tree():
    t = parse_bracketed("(X (XX w))")
    assert t.label == "X"
    assert len(t.children) == 1
    leaf = t.children[0]
    assert leaf.label == "XX" and leaf.word == "w"


def test_parse_truncated_raises():
    with pytest.raises(UnmatchedBrackets):
        parse_bracketed("(S (NP (PRP I)) (VP (VBD am)")


def test_parse_extra_close_raises():
    with pytest.raises(UnmatchedBrackets):
        parse_bracketed("(S (NP (PRP I))))")


def test_parse_multi_token_leaf_raises():
    with pytest.raises(BadToken):
        parse_bracketed("(S (NP (PRP I am)))")


def test_parse_empty_leaf_raises():
    with pytest.raises(BadToken):
        parse_bracketed("(S (NP (PRP )))")


def test_functional_tags_and_traces_stripped():
    t = parse_bracketed("(S (NP-SBJ (PRP I)) (VP (VBD slept) (NP (-NONE- *T*))))")
    assert render_bracketed(t) == "(S (NP (PRP I)) (VP (VBD slept)))"


def test_render_round_trip_examples():
    for text in (PROUD, SKIING, "(X (XX w))"):
        assert render_bracketed(parse_bracketed(text)) == text


def test_paren_token_escaping():
    t = Tree("X", (Tree("-LRB-", (), "("),))
    rendered = render_bracketed(t)
    assert "-LRB-" in rendered
    back = parse_bracketed(rendered)
    assert back.words() == ["("]


def test_random_round_trip_identity():
    rng = random.Random(7)
    for _ in range(1000):
        t = random_tree(rng)
        rendered = render_bracketed(t)
        assert parse_bracketed(rendered) == t
        assert render_bracketed(parse_bracketed(rendered)) == rendered


def test_binarize_three_children():
    t = parse_bracketed("(A (B (BB b)) (C (CC c)) (D (DD d)))")
    bt = binarize(t)
    assert bt.label == "A"
    assert bt.left.span == Span(1, 1)
    assert bt.right.label == EMPTY_LABEL
    assert bt.right.span == Span(2, 3)


def test_binarize_unary_collapse():
    bt = binarize(parse_bracketed("(S (VP (VB go)))"))
    assert bt.is_leaf
    assert bt.label == "S+VP"
    assert bt.pos == "VB"


def test_debinarize_round_trip_random():
    rng = random.Random(11)
    for _ in range(200):
        t = random_tree(rng)
        assert debinarize(binarize(t)) == t


def test_constituent_spans_prompt_tree():
    spans = set(constituent_spans(binarize(parse_bracketed(PROUD))))
    expected = {
        LabeledSpan(Span(1, 5), "S"),
        LabeledSpan(Span(1, 1), "NP"),
        LabeledSpan(Span(2, 5), "VP"),
        LabeledSpan(Span(3, 5), "ADJP"),
        LabeledSpan(Span(4, 5), "PP"),
        LabeledSpan(Span(5, 5), "NP"),
    }
    assert expected <= spans


def test_constituent_spans_single_leaf():
    spans = constituent_spans(binarize(parse_bracketed("(X (XX w))")))
    assert spans == [LabeledSpan(Span(1, 1), "X")]


def test_constituent_spans_count_is_2n_minus_1():
    rng = random.Random(3)
    for _ in range(100):
        t = random_tree(rng)
        n = len(t)
        assert len(constituent_spans(binarize(t))) == 2 * n - 1


def test_binarize_preserves_original_spans():
    rng = random.Random(5)
    for _ in range(100):
        t = random_tree(rng)
        bt = binarize(t)
        binarized = set()
        for ls in constituent_spans(bt):
            for part in ls.label.split("+"):
                if part != EMPTY_LABEL:
                    binarized.add((part, ls.span.i, ls.span.j))

        original = set()

        def walk(node, start):
            if node.is_leaf:
                return start + 1
            end = start
            for c in node.children:
                end = walk(c, end)
            original.add((node.label, start, end - 1))
            return end

        walk(t, 1)
        assert original <= binarized
