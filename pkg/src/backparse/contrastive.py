"""Span-level contrastive pre-training of the span encoder.

Each mined anchor span is pulled toward its structurally related valid
spans and pushed away from its boundary-adjacent invalid spans, using a
temperature-scaled cosine similarity.  Only the encoder is updated; the
label head is left untouched and discarded relative to fine-tuning.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import torch

from .mining import mine_tree
from .scorer import SpanScorer, apply_gradients, make_optimizer
from .trees import Sentence, binarize, read_treebank


class ContrastiveError(Exception):
    pass


class ZeroNormVector(ContrastiveError):
    pass


class NoPositives(ContrastiveError):
    pass


class EmptyTreebank(ContrastiveError):
    pass


class NonFiniteLoss(ContrastiveError):
    pass


@dataclass(frozen=True)
class ContrastiveConfig:
    temperature: float = 0.05
    sample_rate: float = 0.2
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 10
    seed: int = 0


def _cosine(anchor: torch.Tensor, others: torch.Tensor, eps_check=True) -> torch.Tensor:
    a_norm = torch.linalg.vector_norm(anchor)
    o_norm = torch.linalg.vector_norm(others, dim=-1)
    if eps_check and (a_norm.item() == 0.0 or (o_norm == 0.0).any().item()):
        raise ZeroNormVector("cosine similarity of a zero-norm span vector")
    return (others @ anchor) / (a_norm * o_norm)


def contrastive_loss(anchor: torch.Tensor, positives, negatives, temperature: float) -> torch.Tensor:
    """Per-positive normalized contrast against the shared negative pool.

    L = -sum_m log( e^{f(r, r+_m)} / (e^{f(r, r+_m)} + sum_n e^{f(r, r-_n)}) )
    with f = cosine / temperature, evaluated through log-sum-exp.
    """
    if len(positives) == 0:
        raise NoPositives("at least one positive span is required")
    pos = torch.stack(list(positives))
    f_pos = _cosine(anchor, pos) / temperature
    if len(negatives) == 0:
        return anchor.new_zeros(())
    neg = torch.stack(list(negatives))
    f_neg = _cosine(anchor, neg) / temperature
    loss = anchor.new_zeros(())
    for m in range(f_pos.shape[0]):
        logits = torch.cat([f_pos[m:m + 1], f_neg])
        loss = loss + (torch.logsumexp(logits, dim=0) - f_pos[m])
    return loss


@dataclass
class PretrainLog:
    entries: list = field(default_factory=list)  # (epoch, mean_loss, margin)

    def record(self, epoch, mean_loss, margin):
        self.entries.append((epoch, mean_loss, margin))

    def write(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write("epoch\tmean_loss\tseparation_margin\n")
            for epoch, mean_loss, margin in self.entries:
                f.write("%d\t%.6f\t%.6f\n" % (epoch, mean_loss, margin))


def separation_margin(model: SpanScorer, trees, config: ContrastiveConfig) -> float:
    """Mean cosine(anchor, positive) minus mean cosine(anchor, negative)."""
    pos_sims, neg_sims = [], []
    with torch.no_grad():
        for t, tree in enumerate(trees):
            btree = binarize(tree)
            instances = mine_tree(btree, 1.0, rng_seed=0)
            if not instances:
                continue
            reps = model.encode(Sentence(tuple(tree.words())))
            for inst in instances:
                anchor = reps[inst.anchor.i, inst.anchor.j]
                for s in inst.positives:
                    pos_sims.append(_cosine(anchor, reps[s.i, s.j].unsqueeze(0)).item())
                for s in inst.negatives:
                    neg_sims.append(_cosine(anchor, reps[s.i, s.j].unsqueeze(0)).item())
    if not pos_sims or not neg_sims:
        return 0.0
    return sum(pos_sims) / len(pos_sims) - sum(neg_sims) / len(neg_sims)


def pretrain(model: SpanScorer, treebank_path, config: ContrastiveConfig = ContrastiveConfig()):
    """Contrastive pre-training over a treebank file; returns (model, log)."""
    torch.set_num_threads(1)
    trees = read_treebank(treebank_path)
    if not trees:
        raise EmptyTreebank("no trees in %s" % (treebank_path,))
    binarized = [binarize(t) for t in trees]
    sentences = [Sentence(tuple(t.words())) for t in trees]

    encoder_params = list(model.embedding.parameters()) + list(model.lstm.parameters())
    optimizer = make_optimizer(model, learning_rate=config.learning_rate,
                               parameters=encoder_params)
    log = PretrainLog()

    for epoch in range(1, config.epochs + 1):
        order = list(range(len(trees)))
        random.Random(config.seed * 1000003 + epoch).shuffle(order)
        epoch_loss = 0.0
        epoch_terms = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            total = None
            terms = 0
            for idx in batch:
                seed = config.seed * 1000003 + epoch * 7919 + idx
                instances = mine_tree(binarized[idx], config.sample_rate, rng_seed=seed)
                if not instances:
                    continue
                reps = model.encode(sentences[idx])
                for inst in instances:
                    if not inst.negatives:
                        continue
                    anchor = reps[inst.anchor.i, inst.anchor.j]
                    pos = [reps[s.i, s.j] for s in inst.positives]
                    neg = [reps[s.i, s.j] for s in inst.negatives]
                    loss = contrastive_loss(anchor, pos, neg, config.temperature)
                    total = loss if total is None else total + loss
                    terms += 1
            if total is None:
                continue
            mean = total / terms
            if not math.isfinite(mean.item()):
                raise NonFiniteLoss("loss is %r in epoch %d" % (mean.item(), epoch))
            mean.backward()
            apply_gradients(model, optimizer)
            epoch_loss += total.item()
            epoch_terms += terms
        margin = separation_margin(model, trees, config)
        log.record(epoch, epoch_loss / max(1, epoch_terms), margin)
    return model, log
