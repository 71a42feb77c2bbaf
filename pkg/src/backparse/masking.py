"""Keyword extraction and masked constituency tree construction.

Masking keeps the words most similar to the whole sentence (domain
keywords) plus all punctuation, and blanks every other leaf while
preserving the tree skeleton.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .evalscore import DEFAULT_IGNORE_POS
from .trees import (
    BadToken,
    Sentence,
    Tree,
    _parse_lenient,
    escape_token,
    render_bracketed,
)


class MaskingError(Exception):
    pass


class EmptySentenceError(MaskingError):
    pass


class IndexOutOfRange(MaskingError):
    pass


@dataclass(frozen=True)
class MaskedTree:
    """Source tree skeleton with only the kept leaf words retained."""

    tree: Tree
    kept_indices: frozenset

    @property
    def n(self) -> int:
        return sum(1 for _ in _walk_leaves(self.tree))


class HashEmbeddings:
    """Deterministic random word vectors; stand-in keyword scorer backend."""

    def __init__(self, dim: int = 32, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def __call__(self, word: str) -> np.ndarray:
        digest = hashlib.md5(("%d:%s" % (self.seed, word)).encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        return rng.standard_normal(self.dim)


def load_word_vectors(path):
    """word2vec-style text file: "word v1 v2 ..." per line; OOV words get zeros."""
    table = {}
    dim = None
    with open(path, encoding="utf-8") as f:
        for line in f:
            parts = line.split()
            if len(parts) < 2:
                continue
            vec = np.array([float(x) for x in parts[1:]])
            table[parts[0]] = vec
            dim = vec.shape[0]
    if dim is None:
        raise MaskingError("no vectors in %s" % (path,))
    zero = np.zeros(dim)
    return lambda w: table.get(w, zero)


def keyword_scores(sentence: Sentence, pos_tags, embeddings,
                   punct_pos=DEFAULT_IGNORE_POS) -> list[tuple[int, float]]:
    """Cosine similarity of each content word to the mean sentence embedding."""
    content = [t for t, pos in enumerate(pos_tags, start=1) if pos not in punct_pos]
    if not content:
        return []
    vecs = {t: np.asarray(embeddings(sentence.words[t - 1]), dtype=float) for t in content}
    mean = np.mean(list(vecs.values()), axis=0)
    mean_norm = np.linalg.norm(mean)
    out = []
    for t in content:
        v = vecs[t]
        norm = np.linalg.norm(v) * mean_norm
        out.append((t, float(v @ mean / norm) if norm else 0.0))
    return out


def extract_keywords(sentence: Sentence, pos_tags, keep_rate: float, embeddings,
                     punct_pos=DEFAULT_IGNORE_POS) -> set[int]:
    """Indices of the top ceil(keep_rate * #content words) keywords (1-based)."""
    if sentence.n == 0:
        raise EmptySentenceError("empty sentence")
    if not (0.0 <= keep_rate <= 1.0):
        raise MaskingError("keep_rate must be in [0, 1]")
    scores = keyword_scores(sentence, pos_tags, embeddings, punct_pos)
    if keep_rate == 0.0 or not scores:
        return set()
    count = max(1, math.ceil(keep_rate * len(scores)))
    ranked = sorted(scores, key=lambda item: (-item[1], item[0]))
    return {t for t, _ in ranked[:count]}


def mask_tree(tree: Tree, kept, punct_pos=DEFAULT_IGNORE_POS) -> MaskedTree:
    """Blank every leaf word except kept indices and punctuation leaves."""
    n = len(tree)
    kept = set(kept)
    for t in kept:
        if not (1 <= t <= n):
            raise IndexOutOfRange("kept index %d outside 1..%d" % (t, n))
    counter = [0]
    all_kept = set()

    def walk(node: Tree) -> Tree:
        if node.is_leaf:
            counter[0] += 1
            t = counter[0]
            if t in kept or node.label in punct_pos:
                all_kept.add(t)
                return node
            return Tree(node.label, (), None)
        return Tree(node.label, tuple(walk(c) for c in node.children))

    return MaskedTree(walk(tree), frozenset(all_kept))


def render_masked(masked: MaskedTree) -> str:
    """Bracketed rendering with empty slots as "(POS )"."""

    def render(node: Tree) -> str:
        if not node.children:
            word = escape_token(node.word) if node.word is not None else ""
            return "(%s %s)" % (node.label, word)
        return "(%s %s)" % (node.label, " ".join(render(c) for c in node.children))

    return render(masked.tree)


def parse_masked(text: str) -> MaskedTree:
    """Parse a masked rendering back into a MaskedTree."""
    tree, empties = _parse_lenient(text)
    n = sum(1 for node in _walk_leaves(tree))
    kept = frozenset(range(1, n + 1)) - frozenset(empties)
    return MaskedTree(tree, kept)


def _walk_leaves(node: Tree):
    if not node.children:
        yield node
    else:
        for c in node.children:
            yield from _walk_leaves(c)


def masked_words(masked: MaskedTree) -> list:
    """Per-position word or None for empty slots."""
    return [leaf.word for leaf in _walk_leaves(masked.tree)]


def masked_pos_tags(masked: MaskedTree) -> list[str]:
    return [leaf.label for leaf in _walk_leaves(masked.tree)]


def skeleton_signature(tree: Tree) -> tuple:
    """(label, child signatures) shape, leaf POS included; ignores words."""
    if not tree.children:
        return (tree.label,)
    return (tree.label,) + tuple(skeleton_signature(c) for c in tree.children)


def mask_treebank(trees, keep_rate: float, embeddings, punct_pos=DEFAULT_IGNORE_POS):
    """Mask every tree; yields (id, MaskedTree, original Tree)."""
    for t, tree in enumerate(trees):
        sent = tree.sentence()
        kept = extract_keywords(sent, tree.pos_tags(), keep_rate, embeddings, punct_pos)
        yield t, mask_tree(tree, kept, punct_pos), tree


def write_masked_records(records, path) -> None:
    """One JSON record per line: id, masked_render, original_render, kept_indices."""
    with open(path, "w", encoding="utf-8") as f:
        for rec_id, masked, original in records:
            f.write(json.dumps({
                "id": rec_id,
                "masked_render": render_masked(masked),
                "original_render": render_bracketed(original),
                "kept_indices": sorted(masked.kept_indices),
            }, ensure_ascii=False) + "\n")


def read_masked_records(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
