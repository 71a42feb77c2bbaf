"""Trainable span scorer: embeddings + BiLSTM context mixer + label head.

Span representations follow the boundary-difference construction of
chart parsers: the forward-state difference across the span concatenated
with the backward-state difference.  The reserved empty label has index 0
and a fixed score of 0 for every span.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import torch
from torch import nn

from .trees import EMPTY_LABEL, Sentence, Tree, binarize

UNK = "<unk>"
CHECKPOINT_VERSION = 1


class ScorerError(Exception):
    pass


class EmptySentence(ScorerError):
    pass


class NonFiniteGradient(ScorerError):
    pass


@dataclass(frozen=True)
class ScorerConfig:
    d_emb: int = 64
    d_hidden: int = 128  # per direction; span vector is 2 * d_hidden
    d_ff: int = 128
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    seed: int = 0


def build_vocab(trees) -> list[str]:
    words = sorted({w for t in trees for w in t.words()})
    return [UNK] + words


def build_labels(trees) -> list[str]:
    labels = {node.label for t in trees for node in binarize(t).nodes()}
    labels.discard(EMPTY_LABEL)
    return [EMPTY_LABEL] + sorted(labels)


class SpanScorer(nn.Module):
    def __init__(self, vocab: list[str], labels: list[str], config: ScorerConfig = ScorerConfig()):
        super().__init__()
        assert labels[0] == EMPTY_LABEL
        self.vocab = list(vocab)
        self.labels = list(labels)
        self.word_to_id = {w: i for i, w in enumerate(vocab)}
        self.config = config
        c = config
        self.embedding = nn.Embedding(len(vocab), c.d_emb)
        self.lstm = nn.LSTM(c.d_emb, c.d_hidden, bidirectional=True, batch_first=True)
        self.span_dim = 2 * c.d_hidden
        self.label_head = nn.Sequential(
            nn.Linear(self.span_dim, c.d_ff),
            nn.Tanh(),
            nn.Linear(c.d_ff, len(labels) - 1),
        )
        self.double()
        self._init_params(c.seed)

    def _init_params(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for name, p in self.named_parameters():
                if "bias" in name:
                    p.zero_()
                elif name == "embedding.weight":
                    p.uniform_(-0.1, 0.1, generator=gen)
                else:
                    bound = (1.0 / p.shape[-1]) ** 0.5
                    p.uniform_(-bound, bound, generator=gen)

    def word_ids(self, sentence: Sentence) -> torch.Tensor:
        unk = self.word_to_id[UNK]
        return torch.tensor([self.word_to_id.get(w, unk) for w in sentence.words])

    def encode(self, sentence: Sentence) -> torch.Tensor:
        """Span representation table R with R[i, j] = r(i, j), 1-based."""
        n = sentence.n
        if n < 1:
            raise EmptySentence("cannot encode an empty sentence")
        emb = self.embedding(self.word_ids(sentence)).unsqueeze(0)
        out, _ = self.lstm(emb)
        out = out.squeeze(0)  # [n, 2*d_hidden]
        h = self.config.d_hidden
        fwd, bwd = out[:, :h], out[:, h:]
        zero = out.new_zeros(1, h)
        f = torch.cat([zero, fwd], dim=0)  # f[t], t = 0..n, f[0] = 0
        b = torch.cat([bwd, zero], dim=0)  # b[t] = backward state at t+1, b[n] = 0
        # r(i, j) = [f_j - f_{i-1} ; b_i - b_{j+1}], padded index grid [n+1, n+1]
        fdiff = f[1:].unsqueeze(0) - f[:-1].unsqueeze(1)       # [i-1, j-1]
        bdiff = b[:n].unsqueeze(1) - b[1:].unsqueeze(0)        # [i-1, j-1]
        reps = out.new_zeros(n + 1, n + 1, self.span_dim)
        reps[1:, 1:] = torch.cat([fdiff, bdiff], dim=-1)
        return reps

    def score_chart(self, reps: torch.Tensor) -> torch.Tensor:
        """Chart[i, j, l] over the label inventory; empty-label column is 0."""
        n = reps.shape[0] - 1
        chart = reps.new_zeros(n + 1, n + 1, len(self.labels))
        scores = self.label_head(reps)  # [n+1, n+1, L-1]
        mask = torch.zeros(n + 1, n + 1, 1, dtype=scores.dtype)
        for i in range(1, n + 1):
            mask[i, i:] = 1.0
        chart[:, :, 1:] = scores * mask
        return chart

    def chart_for(self, sentence: Sentence) -> torch.Tensor:
        return self.score_chart(self.encode(sentence))


def make_optimizer(model: SpanScorer, learning_rate=None, weight_decay=None,
                   parameters=None) -> torch.optim.AdamW:
    c = model.config
    return torch.optim.AdamW(
        parameters if parameters is not None else model.parameters(),
        lr=learning_rate if learning_rate is not None else c.learning_rate,
        weight_decay=weight_decay if weight_decay is not None else c.weight_decay,
    )


def apply_gradients(model: SpanScorer, optimizer: torch.optim.Optimizer) -> None:
    """One optimizer step; rejects non-finite gradients, then clears them."""
    for name, p in model.named_parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise NonFiniteGradient("non-finite gradient in %s" % name)
    optimizer.step()
    optimizer.zero_grad()


def save_checkpoint(model: SpanScorer, path, optimizer=None, extra=None) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "vocab": model.vocab,
        "labels": model.labels,
        "state_dict": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[SpanScorer, dict]:
    payload = torch.load(path, weights_only=False)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ScorerError("unsupported checkpoint version: %r" % payload.get("version"))
    model = SpanScorer(payload["vocab"], payload["labels"], ScorerConfig(**payload["config"]))
    model.load_state_dict(payload["state_dict"])
    return model, payload


def build_model(treebank_trees, config: ScorerConfig = ScorerConfig()) -> SpanScorer:
    trees = list(treebank_trees)
    return SpanScorer(build_vocab(trees), build_labels(trees), config)
