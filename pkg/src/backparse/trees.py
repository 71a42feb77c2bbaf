"""Bracketed constituency trees: parsing, rendering, binarization, spans."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

EMPTY_LABEL = "∅"  # reserved label for binarization-introduced nodes
UNARY_JOINER = "+"

_ESCAPES = {"(": "-LRB-", ")": "-RRB-"}
_UNESCAPES = {v: k for k, v in _ESCAPES.items()}


class TreebankError(Exception):
    pass


class UnmatchedBrackets(TreebankError):
    pass


class EmptyNode(TreebankError):
    pass


class BadToken(TreebankError):
    pass


@dataclass(frozen=True)
class Sentence:
    words: tuple[str, ...]

    def __post_init__(self):
        if not self.words:
            raise BadToken("sentence must contain at least one word")
        for w in self.words:
            if not w or any(c.isspace() for c in w) or "(" in w or ")" in w:
                raise BadToken("bad word token: %r" % (w,))

    @property
    def n(self) -> int:
        return len(self.words)


@dataclass(frozen=True, order=True)
class Span:
    """Inclusive 1-based word interval."""

    i: int
    j: int

    def __post_init__(self):
        if not (1 <= self.i <= self.j):
            raise ValueError("bad span (%d, %d)" % (self.i, self.j))

    @property
    def width(self) -> int:
        return self.j - self.i + 1


@dataclass(frozen=True, order=True)
class LabeledSpan:
    span: Span
    label: str


@dataclass(frozen=True)
class Tree:
    """N-ary constituency tree node.

    A leaf (preterminal) carries the POS tag as its label and the word
    token; internal nodes carry a syntactic category and >= 1 children.
    """

    label: str
    children: tuple["Tree", ...] = ()
    word: Optional[str] = None

    @property
    def is_leaf(self) -> bool:
        return self.word is not None

    def leaves(self) -> Iterator["Tree"]:
        if self.is_leaf:
            yield self
        else:
            for c in self.children:
                yield from c.leaves()

    def words(self) -> list[str]:
        return [leaf.word for leaf in self.leaves()]

    def pos_tags(self) -> list[str]:
        return [leaf.label for leaf in self.leaves()]

    def sentence(self) -> Sentence:
        return Sentence(tuple(self.words()))

    def __len__(self) -> int:
        return sum(1 for _ in self.leaves())


def escape_token(tok: str) -> str:
    return _ESCAPES.get(tok, tok)


def unescape_token(tok: str) -> str:
    return _UNESCAPES.get(tok, tok)


def _tokenize(text: str) -> list[str]:
    return text.replace("(", " ( ").replace(")", " ) ").split()


def parse_bracketed(text: str) -> Tree:
    """Parse a single bracketed tree string.

    Functional tags ("NP-SBJ", "NP=2") are stripped from internal labels
    and trace leaves (POS "-NONE-") are pruned, per evaluation convention.
    """
    tree, empties = _parse_lenient(text)
    if empties:
        raise BadToken("leaf without a word token")
    tree = _strip_annotations(tree)
    if tree is None:
        raise EmptyNode("tree is empty after trace removal")
    return tree


def _strip_label(label: str) -> str:
    if label.startswith("-"):
        return label
    for sep in ("-", "="):
        if sep in label:
            label = label.split(sep, 1)[0]
    return label


def _strip_annotations(node: Tree) -> Optional[Tree]:
    if node.is_leaf:
        if node.label == "-NONE-":
            return None
        return node
    children = tuple(c for c in (_strip_annotations(ch) for ch in node.children) if c)
    if not children:
        return None
    return Tree(_strip_label(node.label), children)


def _parse_lenient(text: str) -> tuple[Tree, list[int]]:
    """Parse allowing empty leaves "(POS )"; returns (tree, empty leaf indices).

    Word indices are 1-based positions in the yield.  Multi-token leaves
    raise BadToken, bracket problems raise UnmatchedBrackets.
    """
    toks = _tokenize(text)
    if not toks:
        raise UnmatchedBrackets("empty input")
    pos = 0
    leaf_counter = [0]
    empties: list[int] = []

    def parse_node() -> Tree:
        nonlocal pos
        if toks[pos] != "(":
            raise UnmatchedBrackets("expected '(' at token %d" % pos)
        pos += 1
        if pos >= len(toks) or toks[pos] in "()":
            raise BadToken("node without a label")
        label = toks[pos]
        pos += 1
        children: list[Tree] = []
        words: list[str] = []
        while pos < len(toks) and toks[pos] != ")":
            if toks[pos] == "(":
                children.append(parse_node())
            else:
                words.append(unescape_token(toks[pos]))
                pos += 1
        if pos >= len(toks):
            raise UnmatchedBrackets("missing ')'")
        pos += 1  # consume ')'
        if children and words:
            raise BadToken("mixed words and subtrees under %r" % label)
        if children:
            return Tree(label, tuple(children))
        if len(words) > 1:
            raise BadToken("leaf with %d tokens under %r" % (len(words), label))
        leaf_counter[0] += 1
        if not words:
            empties.append(leaf_counter[0])
            return Tree(label, (), None)
        return Tree(label, (), words[0])

    root = parse_node()
    if pos != len(toks):
        raise UnmatchedBrackets("trailing tokens after tree")
    if leaf_counter[0] == 0:
        raise EmptyNode("tree has no leaves")
    return root, empties


def render_bracketed(tree: Tree) -> str:
    if tree.is_leaf:
        return "(%s %s)" % (tree.label, escape_token(tree.word))
    return "(%s %s)" % (tree.label, " ".join(render_bracketed(c) for c in tree.children))


@dataclass(frozen=True)
class BinaryTree:
    """Binarized tree node over a span of the sentence.

    A leaf is a preterminal: ``pos`` and ``word`` are set and ``label`` is
    the (possibly collapsed) phrasal label above it, or EMPTY_LABEL when
    there is none.  An internal node has exactly two children and a label
    that may be EMPTY_LABEL for binarization-introduced nodes.
    """

    label: str
    span: Span
    left: Optional["BinaryTree"] = None
    right: Optional["BinaryTree"] = None
    word: Optional[str] = None
    pos: Optional[str] = None

    @property
    def is_leaf(self) -> bool:
        return self.word is not None

    def nodes(self) -> Iterator["BinaryTree"]:
        yield self
        if not self.is_leaf:
            yield from self.left.nodes()
            yield from self.right.nodes()

    def leaves(self) -> Iterator["BinaryTree"]:
        for node in self.nodes():
            if node.is_leaf:
                yield node

    def words(self) -> list[str]:
        return [leaf.word for leaf in self.leaves()]


def binarize(tree: Tree) -> BinaryTree:
    """Right-branching binarization with unary-chain collapse."""

    def build(node: Tree, start: int) -> BinaryTree:
        # collapse unary chains, accumulating labels
        labels = []
        while not node.is_leaf and len(node.children) == 1:
            labels.append(node.label)
            node = node.children[0]
        if node.is_leaf:
            label = UNARY_JOINER.join(labels) if labels else EMPTY_LABEL
            return BinaryTree(
                label, Span(start, start), word=node.word, pos=node.label
            )
        labels.append(node.label)
        label = UNARY_JOINER.join(labels)
        children = []
        pos = start
        for c in node.children:
            bc = build(c, pos)
            pos = bc.span.j + 1
            children.append(bc)
        return _combine(label, children)

    def _combine(label: str, children: list[BinaryTree]) -> BinaryTree:
        if len(children) == 2:
            left, right = children
        else:
            left = children[0]
            right = _combine(EMPTY_LABEL, children[1:])
        return BinaryTree(label, Span(left.span.i, right.span.j), left, right)

    return build(tree, 1)


def debinarize(tree: BinaryTree) -> Tree:
    """Inverse of binarize: splice out empty nodes, expand unary chains."""

    def expand(node: BinaryTree) -> list[Tree]:
        if node.is_leaf:
            leaf = Tree(node.pos, (), node.word)
            if node.label == EMPTY_LABEL:
                return [leaf]
            return [_wrap(node.label, [leaf])]
        children = expand(node.left) + expand(node.right)
        if node.label == EMPTY_LABEL:
            return children
        return [_wrap(node.label, children)]

    def _wrap(label: str, children: list[Tree]) -> Tree:
        parts = label.split(UNARY_JOINER)
        node = Tree(parts[-1], tuple(children))
        for part in reversed(parts[:-1]):
            node = Tree(part, (node,))
        return node

    roots = expand(tree)
    if len(roots) != 1:
        raise TreebankError("binary tree with empty root label cannot debinarize")
    return roots[0]


def constituent_spans(tree: BinaryTree) -> list[LabeledSpan]:
    """One labeled span per node, including empty-label and preterminal spans."""
    return [LabeledSpan(node.span, node.label) for node in tree.nodes()]


def node_spans(tree: BinaryTree) -> set[Span]:
    return {node.span for node in tree.nodes()}


def span_labels(tree: BinaryTree) -> dict[Span, str]:
    return {node.span: node.label for node in tree.nodes()}


def read_treebank(path) -> list[Tree]:
    """Read one bracketed tree per line; blank lines are skipped."""
    trees = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                trees.append(parse_bracketed(line))
    return trees


def write_treebank(trees, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for t in trees:
            f.write(render_bracketed(t) + "\n")
