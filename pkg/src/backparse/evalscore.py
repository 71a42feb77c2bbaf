"""Labeled bracket precision/recall/F1 with punctuation ignoring.

Predictions may be marked invalid (malformed parser output); the "full"
mode charges them against recall while the "valid" mode drops the
sentence pair entirely.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

from .trees import Tree, parse_bracketed

DEFAULT_IGNORE_POS = frozenset({".", ",", ":", "``", "''", "-NONE-"})
INVALID_LINE = "(())"


class EvalError(Exception):
    pass


class LengthMismatch(EvalError):
    pass


class EvalMode(Enum):
    FULL = "full"
    VALID = "valid"


class Invalid:
    """Marker for a malformed prediction."""

    def __repr__(self):
        return "Invalid()"


INVALID = Invalid()


@dataclass(frozen=True)
class EvalConfig:
    ignore_pos_set: frozenset = DEFAULT_IGNORE_POS
    mode: EvalMode = EvalMode.FULL
    per_domain: bool = False


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    gold_brackets: int
    predicted_brackets: int
    matched_brackets: int
    invalid_count: int
    mode: EvalMode
    per_domain: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {
            "mode": self.mode.value,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "gold_brackets": self.gold_brackets,
            "predicted_brackets": self.predicted_brackets,
            "matched_brackets": self.matched_brackets,
            "invalid_count": self.invalid_count,
        }
        if self.per_domain:
            d["per_domain"] = {
                dom: rep.as_dict() for dom, rep in self.per_domain.items()
            }
            d["domain_average_f1"] = sum(
                rep.f1 for rep in self.per_domain.values()
            ) / len(self.per_domain)
        return d

    def render(self) -> str:
        lines = [
            "mode        %s  (invalid predictions: %s credit)" % (
                self.mode.value,
                "zero" if self.mode is EvalMode.FULL else "excluded",
            ),
            "gold        %d" % self.gold_brackets,
            "predicted   %d" % self.predicted_brackets,
            "matched     %d" % self.matched_brackets,
            "invalid     %d" % self.invalid_count,
            "precision   %.2f" % self.precision,
            "recall      %.2f" % self.recall,
            "F1          %.2f" % self.f1,
        ]
        for dom in sorted(self.per_domain):
            lines.append("%-12s F1 %.2f" % (dom, self.per_domain[dom].f1))
        if self.per_domain:
            avg = sum(r.f1 for r in self.per_domain.values()) / len(self.per_domain)
            lines.append("%-12s F1 %.2f" % ("Avg.", avg))
        return "\n".join(lines)


def bracket_set(tree: Tree, config: EvalConfig = EvalConfig()) -> Counter:
    """Multiset of (label, i, j) for non-preterminal nodes, punctuation removed."""
    counts = Counter()

    def walk(node: Tree, start: int) -> int:
        # returns the next word index after this subtree (punctuation skipped)
        if node.is_leaf:
            return start if node.label in config.ignore_pos_set else start + 1
        end = start
        for child in node.children:
            end = walk(child, end)
        if end > start:
            counts[(node.label, start, end - 1)] += 1
        return end

    walk(tree, 1)
    return counts


def _prf(matched: int, predicted: int, gold: int) -> tuple[float, float, float]:
    p = 100.0 * matched / predicted if predicted else 0.0
    r = 100.0 * matched / gold if gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def _accumulate(golds, preds, config):
    gold_n = pred_n = match_n = invalid_n = 0
    for gold, pred in zip(golds, preds):
        invalid = isinstance(pred, Invalid)
        if invalid:
            invalid_n += 1
            if config.mode is EvalMode.VALID:
                continue
        gb = bracket_set(gold, config)
        gold_n += sum(gb.values())
        if invalid:
            continue
        pb = bracket_set(pred, config)
        pred_n += sum(pb.values())
        match_n += sum(min(c, gb[b]) for b, c in pb.items())
    return gold_n, pred_n, match_n, invalid_n


def labeled_f1(golds, preds, config: EvalConfig = EvalConfig(), domains=None) -> EvalReport:
    """Micro-averaged labeled bracket F1 over aligned gold/predicted trees.

    preds entries are Trees or Invalid markers; domains, when given, is a
    per-sentence tag list used for per-domain sub-reports.
    """
    golds, preds = list(golds), list(preds)
    if len(golds) != len(preds):
        raise LengthMismatch("%d golds vs %d predictions" % (len(golds), len(preds)))
    gold_n, pred_n, match_n, invalid_n = _accumulate(golds, preds, config)
    p, r, f = _prf(match_n, pred_n, gold_n)
    report = EvalReport(p, r, f, gold_n, pred_n, match_n, invalid_n, config.mode)
    if domains is not None:
        if len(domains) != len(golds):
            raise LengthMismatch("domain tags do not align with the corpus")
        for dom in sorted(set(domains)):
            idx = [t for t, d in enumerate(domains) if d == dom]
            sub = labeled_f1([golds[t] for t in idx], [preds[t] for t in idx], config)
            report.per_domain[dom] = sub
    return report


def read_predictions(path) -> list:
    """Read a predicted treebank; the reserved line "(())" marks an invalid output."""
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            out.append(INVALID if line == INVALID_LINE else parse_bracketed(line))
    return out


def write_report(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(report.render() + "\n")
        f.write(json.dumps(report.as_dict(), sort_keys=True) + "\n")
