"""Cross-domain constituency parsing toolkit.

Pipeline: mask target-domain trees down to domain keywords, have an LLM
fill the missing words (back generation), pre-train a span encoder with
span-level contrastive learning on the generated treebank, then
fine-tune a CKY chart parser with a max-margin objective and score it
with labeled bracket F1.
"""

from .trees import (
    BadToken,
    BinaryTree,
    EmptyNode,
    EMPTY_LABEL,
    LabeledSpan,
    Sentence,
    Span,
    Tree,
    TreebankError,
    UnmatchedBrackets,
    binarize,
    constituent_spans,
    debinarize,
    parse_bracketed,
    read_treebank,
    render_bracketed,
    write_treebank,
)

__all__ = [
    "BadToken", "BinaryTree", "EmptyNode", "EMPTY_LABEL", "LabeledSpan",
    "Sentence", "Span", "Tree", "TreebankError", "UnmatchedBrackets",
    "binarize", "constituent_spans", "debinarize", "parse_bracketed",
    "read_treebank", "render_bracketed", "write_treebank",
]

__version__ = "0.1.0"
