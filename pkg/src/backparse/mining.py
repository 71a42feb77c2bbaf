"""Positive/negative span instance mining for contrastive pre-training.

For an anchor constituent span the positives are its left child, right
child, parent and brother; the negatives are up to fifteen
boundary-adjacent invalid spans derived from the anchor and each of those
relatives, filtered against the tree's valid spans.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .trees import BinaryTree, Span, node_spans


class MiningError(Exception):
    pass


class NotAConstituent(MiningError):
    pass


class Side(Enum):
    LEFT_SUBTREE = "left"
    RIGHT_SUBTREE = "right"
    ROOT = "root"


@dataclass(frozen=True)
class AnchorContext:
    anchor: Span
    side: Side
    k: Optional[int] = None  # split: children are (i,k) and (k+1,j)
    l: Optional[int] = None  # far parent boundary; (i,l) or (l,j)


@dataclass(frozen=True)
class SpanInstanceSet:
    anchor: Span
    positives: tuple[Span, ...]
    negatives: tuple[Span, ...]


def anchor_context(tree: BinaryTree, anchor: Span) -> AnchorContext:
    """Locate the anchor in the tree and derive its split and parent boundary."""
    node = None
    parent = None
    for cand in tree.nodes():
        if cand.span == anchor:
            node = cand
        elif not cand.is_leaf and (cand.left.span == anchor or cand.right.span == anchor):
            parent = cand
    if node is None:
        raise NotAConstituent("span (%d, %d) is not a node of the tree" % (anchor.i, anchor.j))
    k = node.left.span.j if not node.is_leaf else None
    if parent is None:
        return AnchorContext(anchor, Side.ROOT, k=k)
    if parent.left.span == anchor:
        return AnchorContext(anchor, Side.LEFT_SUBTREE, k=k, l=parent.span.j)
    return AnchorContext(anchor, Side.RIGHT_SUBTREE, k=k, l=parent.span.i)


def positive_instances(tree: BinaryTree, anchor: Span) -> list[Span]:
    """Left child, right child, parent and brother spans of the anchor."""
    ctx = anchor_context(tree, anchor)
    i, j, k, l = ctx.anchor.i, ctx.anchor.j, ctx.k, ctx.l
    out = []
    if k is not None:
        out.append(Span(i, k))
        out.append(Span(k + 1, j))
    if ctx.side is Side.LEFT_SUBTREE:
        out.append(Span(i, l))
        out.append(Span(j + 1, l))
    elif ctx.side is Side.RIGHT_SUBTREE:
        out.append(Span(l, j))
        out.append(Span(l, i - 1))
    return out


def negative_candidates(context: AnchorContext) -> list[tuple[int, int]]:
    """Raw negative candidates in fixed order; may be out of bounds."""
    i, j, k, l = context.anchor.i, context.anchor.j, context.k, context.l
    cands = [
        (i, j - 1), (i, j + 1), (i - 1, j), (i + 1, j),
        (i - 1, j - 1), (i - 1, j + 1), (i + 1, j - 1), (i + 1, j + 1),
    ]
    if k is not None:
        cands += [(i, k - 1), (i, k + 1), (k, j), (k + 2, j)]
    if context.side is Side.LEFT_SUBTREE:
        cands += [(i, l - 1), (i, l + 1), (j, l)]
    elif context.side is Side.RIGHT_SUBTREE:
        cands += [(l - 1, j), (l + 1, j), (l, i)]
    return cands


def filter_negatives(candidates, tree: BinaryTree, n: Optional[int] = None) -> list[Span]:
    """Drop out-of-bounds spans, valid node spans, and duplicates."""
    if n is None:
        n = len(tree.words())
    valid = node_spans(tree)
    seen = set()
    out = []
    for (a, b) in candidates:
        if not (1 <= a <= b <= n):
            continue
        span = Span(a, b)
        if span in valid or span in seen:
            continue
        seen.add(span)
        out.append(span)
    return out


def instance_set(tree: BinaryTree, anchor: Span) -> SpanInstanceSet:
    ctx = anchor_context(tree, anchor)
    pos = positive_instances(tree, anchor)
    neg = filter_negatives(negative_candidates(ctx), tree)
    return SpanInstanceSet(anchor, tuple(pos), tuple(neg))


def mine_tree(tree: BinaryTree, sample_rate: float, rng_seed: int) -> list[SpanInstanceSet]:
    """Sample width>=2 anchors and emit their instance sets.

    Sampling is without replacement, ceil(sample_rate * #anchors) anchors,
    deterministic in rng_seed; anchors left with no positives are skipped.
    """
    if not (0 < sample_rate <= 1):
        raise ValueError("sample_rate must be in (0, 1]")
    anchors = [node.span for node in tree.nodes() if node.span.width >= 2]
    if not anchors:
        return []
    count = math.ceil(sample_rate * len(anchors))
    rng = random.Random(rng_seed)
    chosen = sorted(rng.sample(range(len(anchors)), count))
    out = []
    for idx in chosen:
        inst = instance_set(tree, anchors[idx])
        if inst.positives:
            out.append(inst)
    return out
