"""CKY decoding, loss-augmented decoding and max-margin training."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np
import torch

from . import evalscore
from .scorer import SpanScorer, apply_gradients, make_optimizer
from .trees import (
    EMPTY_LABEL,
    BinaryTree,
    Sentence,
    Span,
    Tree,
    binarize,
    debinarize,
    read_treebank,
    span_labels,
)


class ParserError(Exception):
    pass


class YieldMismatch(ParserError):
    pass


class EmptyTreebank(ParserError):
    pass


class NonFiniteLoss(ParserError):
    pass


@dataclass(frozen=True)
class DecodedTree:
    tree: BinaryTree
    score: float


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    warmup_steps: int = 400
    early_stop_patience_epochs: int = 4
    seed: int = 0
    max_epochs: int = 50
    eval_every_steps: int = 100


def _as_array(chart) -> np.ndarray:
    if isinstance(chart, torch.Tensor):
        return chart.detach().numpy()
    return np.asarray(chart)


def cky_decode(chart, labels, words=None, pos_tags=None) -> DecodedTree:
    """Exact argmax tree over a score chart.

    chart is [n+1, n+1, L] (1-based span indices, label 0 = empty label).
    Ties break on the smallest split index, then the smallest label index.
    The root label is restricted to non-empty labels.
    """
    c = _as_array(chart)
    n = c.shape[0] - 1
    if len(labels) < 2:
        raise ParserError("label inventory must contain a non-empty label")
    if words is None:
        words = ["w%d" % t for t in range(1, n + 1)]
    if pos_tags is None:
        pos_tags = ["XX"] * n
    best = np.zeros((n + 1, n + 1))
    best_label = np.zeros((n + 1, n + 1), dtype=int)
    best_split = np.zeros((n + 1, n + 1), dtype=int)

    for width in range(1, n + 1):
        for i in range(1, n - width + 2):
            j = i + width - 1
            scores = c[i, j]
            if i == 1 and j == n:
                lbl = 1 + int(np.argmax(scores[1:]))
            else:
                lbl = int(np.argmax(scores))
            best_label[i, j] = lbl
            total = scores[lbl]
            if width > 1:
                split_scores = [best[i, k] + best[k + 1, j] for k in range(i, j)]
                k_rel = int(np.argmax(split_scores))
                best_split[i, j] = i + k_rel
                total += split_scores[k_rel]
            best[i, j] = total

    def build(i: int, j: int) -> BinaryTree:
        label = labels[best_label[i, j]]
        if i == j:
            return BinaryTree(label, Span(i, j), word=words[i - 1], pos=pos_tags[i - 1])
        k = best_split[i, j]
        return BinaryTree(label, Span(i, j), build(i, k), build(k + 1, j))

    return DecodedTree(build(1, n), float(best[1, n]))


def hamming(pred: BinaryTree, gold: BinaryTree) -> int:
    """Count of spans whose labels differ, absence counting as the empty label."""
    if len(pred.words()) != len(gold.words()):
        raise YieldMismatch("trees cover different yields")
    lp = span_labels(pred)
    lg = span_labels(gold)
    count = 0
    for span in set(lp) | set(lg):
        if lp.get(span, EMPTY_LABEL) != lg.get(span, EMPTY_LABEL):
            count += 1
    return count


def _augmentation(chart_shape, labels, gold: BinaryTree) -> tuple[np.ndarray, int]:
    """Per-cell additive costs so that CKY over chart+aug maximizes s(T) + hamming."""
    n = chart_shape[0] - 1
    gold_map = span_labels(gold)
    label_index = {lbl: idx for idx, lbl in enumerate(labels)}
    aug = np.zeros(chart_shape)
    constant = 0
    for i in range(1, n + 1):
        for j in range(i, n + 1):
            g = gold_map.get(Span(i, j), EMPTY_LABEL)
            aug[i, j, :] += 1.0
            gi = label_index[g]
            aug[i, j, gi] -= 1.0
            if g != EMPTY_LABEL:
                aug[i, j, :] -= 1.0
                constant += 1
    return aug, constant


def loss_augmented_decode(chart, labels, gold: BinaryTree, words=None, pos_tags=None) -> DecodedTree:
    """Argmax of s(T) + hamming(T, gold); the returned score includes the cost."""
    c = _as_array(chart)
    n = c.shape[0] - 1
    if len(gold.words()) != n:
        raise YieldMismatch("gold tree does not cover the chart's sentence")
    aug, constant = _augmentation(c.shape, labels, gold)
    decoded = cky_decode(c + aug, labels, words=words, pos_tags=pos_tags)
    return DecodedTree(decoded.tree, decoded.score + constant)


def tree_score(chart, labels, tree: BinaryTree) -> float:
    """Sum of chart scores over the tree's labeled spans."""
    c = _as_array(chart)
    label_index = {lbl: idx for idx, lbl in enumerate(labels)}
    return float(sum(c[node.span.i, node.span.j, label_index[node.label]]
                     for node in tree.nodes()))


def max_margin_loss(chart, labels, gold: BinaryTree) -> tuple[float, DecodedTree]:
    """Hinge loss max(0, s(T_hat) + hamming(T_hat, gold) - s(gold))."""
    pred = loss_augmented_decode(chart, labels, gold)
    loss = pred.score - tree_score(chart, labels, gold)
    return max(0.0, loss), pred


def _span_score_tensor(chart: torch.Tensor, labels, tree: BinaryTree) -> torch.Tensor:
    label_index = {lbl: idx for idx, lbl in enumerate(labels)}
    total = chart.new_zeros(())
    for node in tree.nodes():
        total = total + chart[node.span.i, node.span.j, label_index[node.label]]
    return total


def sentence_loss(model: SpanScorer, gold: BinaryTree, pos_tags=None) -> torch.Tensor:
    """Differentiable max-margin loss for one gold tree."""
    sent = Sentence(tuple(gold.words()))
    chart = model.chart_for(sent)
    pred = loss_augmented_decode(chart, model.labels, gold, words=sent.words, pos_tags=pos_tags)
    delta = hamming(pred.tree, gold)
    loss = (_span_score_tensor(chart, model.labels, pred.tree) + delta
            - _span_score_tensor(chart, model.labels, gold))
    if loss.item() <= 0.0:
        return chart.new_zeros(())
    return loss


def parse(model: SpanScorer, sentence: Sentence, pos_tags=None) -> Tree:
    """Decode the highest-scoring tree and return it in n-ary form."""
    chart = model.chart_for(sentence)
    decoded = cky_decode(chart, model.labels, words=sentence.words, pos_tags=pos_tags)
    return debinarize(decoded.tree)


def dev_f1(model: SpanScorer, dev_trees, config=None) -> float:
    golds = list(dev_trees)
    preds = [parse(model, t.sentence(), pos_tags=t.pos_tags()) for t in golds]
    report = evalscore.labeled_f1(golds, preds, config or evalscore.EvalConfig())
    return report.f1


@dataclass
class TrainLog:
    entries: list = field(default_factory=list)  # (step, dev_f1)

    def record(self, step: int, score: float) -> None:
        self.entries.append((step, score))

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("step\tdev_f1\n")
            for step, score in self.entries:
                f.write("%d\t%.4f\n" % (step, score))


def train(model: SpanScorer, treebank_paths, dev_trees, config: TrainConfig = TrainConfig()):
    """Max-margin training on the concatenation of the given treebank files.

    Returns (model, TrainLog); the model is left at its best dev-F1 state.
    """
    torch.set_num_threads(1)
    trees = []
    for path in treebank_paths:
        trees.extend(read_treebank(path))
    if not trees:
        raise EmptyTreebank("no trees in %s" % (list(treebank_paths),))
    golds = [(binarize(t), t.pos_tags()) for t in trees]
    dev_trees = list(dev_trees)

    optimizer = make_optimizer(model, learning_rate=config.learning_rate)
    log = TrainLog()
    step = 0
    best_f1 = -1.0
    best_state = None
    stale_epochs = 0

    for epoch in range(config.max_epochs):
        order = list(range(len(golds)))
        random.Random(config.seed * 1000003 + epoch).shuffle(order)
        for start in range(0, len(order), config.batch_size):
            batch = [golds[idx] for idx in order[start:start + config.batch_size]]
            total = None
            for gold, pos_tags in batch:
                loss = sentence_loss(model, gold, pos_tags=pos_tags)
                total = loss if total is None else total + loss
            total = total / len(batch)
            if not math.isfinite(total.item()):
                raise NonFiniteLoss("loss is %r at step %d" % (total.item(), step))
            step += 1
            if total.grad_fn is not None:
                total.backward()
                scale = min(1.0, step / config.warmup_steps) if config.warmup_steps else 1.0
                for group in optimizer.param_groups:
                    group["lr"] = config.learning_rate * scale
                apply_gradients(model, optimizer)
            if config.eval_every_steps and step % config.eval_every_steps == 0:
                log.record(step, dev_f1(model, dev_trees))
        score = dev_f1(model, dev_trees)
        log.record(step, score)
        if score > best_f1:
            best_f1 = score
            best_state = {k: v.clone() for k, v in model.state_dict().items()}
            stale_epochs = 0
        else:
            stale_epochs += 1
            if stale_epochs >= config.early_stop_patience_epochs:
                break

    if best_state is not None:
        model.load_state_dict(best_state)
    return model, log
