import json
import random

import pytest

from backparse.backgen import (
    SYSTEM_PROMPT,
    BatchSummary,
    DemonstrationPair,
    MockLLM,
    Status,
    backgen_batch,
    build_backgen_prompt,
    build_parse_prompt,
    corrupt,
    parse_llm_parse_output,
    select_demos,
    validate_backgen_output,
    write_backgen_outputs,
)
from backparse.masking import HashEmbeddings, mask_treebank, parse_masked, render_masked
from backparse.trees import Sentence, parse_bracketed, read_treebank, render_bracketed
from grammar import target_grammar

PROUD = "(S (NP (PRP I)) (VP (VBD am) (ADJP (JJ proud) (PP (IN of) (NP (PRP myself))))))"
PROUD_MASKED = "(S (NP (PRP I)) (VP (VBD ) (ADJP (JJ proud) (PP (IN ) (NP (PRP ))))))"

EMB = HashEmbeddings(dim=16, seed=0)


def make_masked_records(count=20, keep_rate=0.25, seed=3):
    trees = target_grammar().corpus(count, seed=seed)
    records = []
    oracle = {}
    for rec_id, masked, original in mask_treebank(trees, keep_rate, EMB):
        rendered = render_masked(masked)
        records.append({"id": rec_id, "masked_render": rendered})
        oracle[rendered] = render_bracketed(original)
    return records, oracle


def test_prompt_shape_zero_demos():
    masked = parse_masked(PROUD_MASKED)
    request = build_backgen_prompt(masked, model="m", temperature=0.7)
    assert request["model"] == "m"
    assert request["temperature"] == 0.7
    assert request["messages"][0] == {"role": "system", "content": SYSTEM_PROMPT}
    assert request["messages"][1] == {"role": "user", "content": PROUD_MASKED}


def test_prompt_includes_demos_in_order():
    masked = parse_masked(PROUD_MASKED)
    demos = [DemonstrationPair("(X (XX ))", "(X (XX w))"),
             DemonstrationPair("(Y (YY k) (ZZ ))", "(Y (YY k) (ZZ v))")]
    request = build_backgen_prompt(masked, demos)
    system = request["messages"][0]["content"]
    assert system.startswith(SYSTEM_PROMPT)
    first = system.index("(X (XX ))")
    second = system.index("(Y (YY k)")
    assert first < second
    assert "(X (XX w))" in system


def test_prompt_round_trips_through_json():
    masked = parse_masked(PROUD_MASKED)
    request = build_backgen_prompt(masked, [DemonstrationPair("(X (XX ))", "(X (XX w))")])
    assert json.loads(json.dumps(request)) == request


def test_validate_accepts_exact_fill():
    masked = parse_masked(PROUD_MASKED)
    report, tree = validate_backgen_output(masked, PROUD)
    assert report.status is Status.ACCEPTED
    assert render_bracketed(tree) == PROUD


def test_validate_accepts_different_filler_words():
    masked = parse_masked(PROUD_MASKED)
    filled = PROUD.replace("am", "felt").replace("of", "about").replace("myself", "them")
    report, tree = validate_backgen_output(masked, filled)
    assert report.status is Status.ACCEPTED
    assert tree.words()[1] == "felt"


def test_validate_unmatched_brackets():
    masked = parse_masked(PROUD_MASKED)
    report, tree = validate_backgen_output(masked, PROUD[:-1])
    assert report.status is Status.UNMATCHED_BRACKETS
    assert tree is None


def test_validate_structure_mismatch():
    masked = parse_masked(PROUD_MASKED)
    report, _ = validate_backgen_output(masked, "(S (NP (PRP I)) (VP (VBD am)))")
    assert report.status is Status.STRUCTURE_MISMATCH


def test_validate_keyword_altered():
    masked = parse_masked(PROUD_MASKED)
    report, _ = validate_backgen_output(masked, PROUD.replace("proud", "glad"))
    assert report.status is Status.KEYWORD_ALTERED
    assert "proud" in report.detail


def test_validate_slot_unfilled():
    masked = parse_masked(PROUD_MASKED)
    report, _ = validate_backgen_output(masked, PROUD.replace("(VBD am)", "(VBD )"))
    assert report.status is Status.SLOT_UNFILLED


def test_validate_multi_token_slot():
    masked = parse_masked(PROUD_MASKED)
    report, _ = validate_backgen_output(masked, PROUD.replace("(VBD am)", "(VBD was not)"))
    assert report.status is Status.MULTI_TOKEN_SLOT


def test_validation_order_brackets_before_keywords():
    masked = parse_masked(PROUD_MASKED)
    broken = PROUD.replace("proud", "glad")[:-1]
    report, _ = validate_backgen_output(masked, broken)
    assert report.status is Status.UNMATCHED_BRACKETS


def test_corruptions_each_trigger_their_status():
    masked = parse_masked(PROUD_MASKED)
    rng = random.Random(0)
    expected = {
        "brackets": Status.UNMATCHED_BRACKETS,
        "skeleton": Status.STRUCTURE_MISMATCH,
    }
    for kind in ("brackets", "skeleton"):
        report, _ = validate_backgen_output(masked, corrupt(PROUD, kind, rng))
        assert report.status is expected[kind]
    # emptying a slot is always rejected; which status depends on whether
    # the hit position was a kept keyword
    for trial in range(10):
        report, _ = validate_backgen_output(masked, corrupt(PROUD, "unfilled", rng))
        assert report.status in (Status.SLOT_UNFILLED, Status.KEYWORD_ALTERED)
    # rewriting a word only rejects when it hits a kept keyword
    seen = set()
    for trial in range(30):
        report, _ = validate_backgen_output(masked, corrupt(PROUD, "keyword", rng))
        seen.add(report.status)
    assert seen == {Status.ACCEPTED, Status.KEYWORD_ALTERED}


def test_select_demos_nearest_length():
    masked = parse_masked(PROUD_MASKED)  # 5 words
    pool = [
        DemonstrationPair("(X (A ) (B ) (C ) (D ) (E ) (F ) (G ) (H ))", "x"),
        DemonstrationPair("(X (A ) (B ) (C ) (D ) (E ))", "y"),
        DemonstrationPair("(X (A ))", "z"),
        DemonstrationPair("(X (A ) (B ) (C ) (D ))", "w"),
    ]
    picked = select_demos(masked, pool, 2)
    assert [d.full_render for d in picked] == ["y", "w"]


def test_mock_batch_full_acceptance(tmp_path):
    records, oracle = make_masked_records()
    client = MockLLM(oracle)
    out, summary = backgen_batch(records, client, retries=0)
    assert summary.total == len(records)
    assert summary.accepted == len(records)
    assert summary.by_status == {Status.ACCEPTED.value: len(records)}
    tb = tmp_path / "backgen.txt"
    audit = tmp_path / "audit.jsonl"
    write_backgen_outputs(out, tb, audit)
    trees = read_treebank(tb)
    assert len(trees) == len(records)
    lines = [json.loads(line) for line in audit.read_text().splitlines()]
    assert all(rec["status"] == "Accepted" for rec in lines)


def test_mock_corruption_rate_and_determinism():
    records, oracle = make_masked_records(count=60)
    summaries = []
    for _ in range(2):
        client = MockLLM(oracle, corrupt_rate=0.3, seed=11)
        _, summary = backgen_batch(records, client, retries=0)
        summaries.append(summary.by_status)
    assert summaries[0] == summaries[1]
    rejected = sum(c for status, c in summaries[0].items() if status != "Accepted")
    assert 0 < rejected < len(records)


def test_retries_recover_corrupted_responses():
    records, oracle = make_masked_records(count=40)
    no_retry = MockLLM(oracle, corrupt_rate=0.4, seed=2)
    _, base = backgen_batch(records, no_retry, retries=0)
    with_retry = MockLLM(oracle, corrupt_rate=0.4, seed=2)
    _, retried = backgen_batch(records, with_retry, retries=3)
    assert retried.accepted > base.accepted
    assert retried.accepted == retried.total  # p(4 corruptions in a row) tiny at 0.4


def test_unknown_masked_render_rejected():
    client = MockLLM({})
    out, summary = backgen_batch([{"id": 0, "masked_render": PROUD_MASKED}], client, retries=0)
    assert summary.accepted == 0
    assert out[0].status in (Status.SLOT_UNFILLED, Status.KEYWORD_ALTERED)


def test_parse_prompt_and_validation():
    sent = Sentence(("the", "dog", "ran"))
    demo = parse_bracketed("(S (NP (NN it)) (VP (VB works)))")
    request = build_parse_prompt(sent, [demo])
    assert request["messages"][1]["content"] == "the dog ran"
    assert "(S (NP (NN it)) (VP (VB works)))" in request["messages"][0]["content"]

    good = "(S (NP (DT the) (NN dog)) (VP (VB ran)))"
    report, tree = parse_llm_parse_output(sent, good)
    assert report.status is Status.ACCEPTED
    assert tree.words() == ["the", "dog", "ran"]

    report, tree = parse_llm_parse_output(sent, good.replace("dog", "cat"))
    assert report.status is Status.STRUCTURE_MISMATCH
    assert tree is None

    report, _ = parse_llm_parse_output(sent, good[:-1])
    assert report.status is Status.UNMATCHED_BRACKETS
