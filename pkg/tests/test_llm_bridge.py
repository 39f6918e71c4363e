"""Prompt construction and offline response parsing/scoring."""
import numpy as np
import pytest

from fedtext.corpus import RelationInstance, TaggedSentence
from fedtext.evaluation import EntitySpan, decode_bio
from fedtext.llm_bridge import (
    ABSTAIN_LABEL,
    EXEMPLAR_SENTENCE,
    HighlightDiagnostics,
    PromptSpec,
    ResponseRecord,
    build_prompt,
    default_ner_exemplar,
    map_relation_response,
    parse_highlights,
    read_responses,
    render_highlights,
    sample_test_subset,
    score_ner_responses,
    score_re_responses,
    write_responses,
)
from fedtext.models import RelationExample, TagExample
from fedtext.tasks import NerItem, ReItem


def ner_item(tokens, labels):
    sent = TaggedSentence(tuple(tokens), tuple(labels))
    enc = TagExample(np.arange(len(tokens)), np.zeros(len(tokens), dtype=int))
    return NerItem(sentence=sent, enc=enc, gold_spans=tuple(decode_bio(labels)))


# ---------------------------------------------------------------------------
# prompt construction

def test_zero_shot_ner_prompt_is_exact():
    spec = PromptSpec(task="ner", entity_type="disease", tag="span")
    expect = (
        "Task: the task is to extract disease entities in a sentence\n"
        "Input: the input is a sentence.\n"
        "Output: the output is an HTML that highlights all the disease entities "
        "in the sentence. The highlighting should only use HTML tags <span> and "
        "</span> and no other tags.\n"
        "Input: A sentence ."
    )
    assert build_prompt(spec, "A sentence .") == expect


def test_one_shot_ner_prompt_inserts_the_example_block():
    exemplar = default_ner_exemplar("mark")
    spec = PromptSpec(task="ner", entity_type="disease", tag="mark",
                      shot="one", exemplar=exemplar)
    prompt = build_prompt(spec, "query text")
    assert prompt.endswith("Input: query text")
    block = f"Example:\nInput: {EXEMPLAR_SENTENCE}\nOutput: "
    assert block in prompt
    assert "<mark>cirrhotic liver disease</mark>" in prompt
    assert "<mark>Wilson disease</mark>" in prompt
    # example block sits between the task lines and the query
    assert prompt.index("Example:") < prompt.index("Input: query text")


def test_re_prompt_uses_the_domain_string():
    spec = PromptSpec(task="re", entity_type="gene-disease", tag="x")
    prompt = build_prompt(spec, "sent GENE DIS")
    assert "determine the gene-disease relation" in prompt
    assert prompt.endswith("Input: sent GENE DIS")
    assert "HTML" not in prompt


def test_prompts_differ_across_settings():
    texts = set()
    for task, shot in (("ner", "zero"), ("ner", "one"), ("re", "zero")):
        exemplar = default_ner_exemplar("t") if shot == "one" else None
        spec = PromptSpec(task=task, entity_type="disease", tag="t",
                          shot=shot, exemplar=exemplar)
        texts.add(build_prompt(spec, "same input"))
    assert len(texts) == 3


def test_prompt_spec_validation():
    with pytest.raises(ValueError):
        PromptSpec(task="qa", entity_type="disease", tag="t")
    with pytest.raises(ValueError):
        PromptSpec(task="ner", entity_type="", tag="t")
    with pytest.raises(ValueError):
        PromptSpec(task="ner", entity_type="disease", tag="<b>")
    with pytest.raises(ValueError):
        PromptSpec(task="ner", entity_type="disease", tag="t", shot="five")
    with pytest.raises(ValueError):
        PromptSpec(task="ner", entity_type="disease", tag="t", shot="one")
    with pytest.raises(ValueError):
        build_prompt(PromptSpec(task="ner", entity_type="disease", tag="t"), "")


# ---------------------------------------------------------------------------
# highlight parsing

TOKENS = ["the", "brca1", "gene", "causes", "breast", "cancer", "risk"]


def test_parse_exact_highlight():
    spans = parse_highlights("the <m>brca1</m> gene causes breast cancer risk",
                             TOKENS, "GENE", "m")
    assert spans == [EntitySpan("GENE", 1, 1)]


def test_parse_multi_token_highlight():
    spans = parse_highlights("... <m>breast cancer</m> ...", TOKENS, "DIS", "m")
    assert spans == [EntitySpan("DIS", 4, 5)]


def test_parse_orders_repeated_mentions_by_cursor():
    tokens = ["a", "x", "b", "x", "c"]
    response = "a <m>x</m> b <m>x</m> c"
    spans = parse_highlights(response, tokens, "E", "m")
    assert spans == [EntitySpan("E", 1, 1), EntitySpan("E", 3, 3)]


def test_parse_falls_back_to_search_from_the_start():
    # responses sometimes reorder mentions; the second region sits left of
    # the first in the original sentence
    tokens = ["alpha", "beta", "gamma"]
    response = "<m>gamma</m> and <m>alpha</m>"
    spans = parse_highlights(response, tokens, "E", "m")
    assert EntitySpan("E", 2, 2) in spans
    assert EntitySpan("E", 0, 0) in spans


def test_parse_longest_token_run_wins():
    # the region paraphrases around a real fragment; only "breast cancer"
    # exists in the sentence
    response = "<m>severe breast cancer syndrome</m>"
    spans = parse_highlights(response, TOKENS, "DIS", "m")
    assert spans == [EntitySpan("DIS", 4, 5)]


def test_parse_unmatched_region_is_dropped_and_counted():
    diag = HighlightDiagnostics()
    spans = parse_highlights("<m>completely unrelated</m>", TOKENS, "DIS", "m",
                             diagnostics=diag)
    assert spans == []
    assert diag.dropped == 1


def test_parse_unclosed_tag_runs_to_the_end():
    diag = HighlightDiagnostics()
    spans = parse_highlights("causes <m>breast cancer", TOKENS, "DIS", "m",
                             diagnostics=diag)
    assert spans == [EntitySpan("DIS", 4, 5)]
    assert diag.unclosed == 1


def test_parse_nested_tags_flatten():
    diag = HighlightDiagnostics()
    spans = parse_highlights("<m>breast <m>cancer</m></m>", TOKENS, "DIS", "m",
                             diagnostics=diag)
    assert spans == [EntitySpan("DIS", 4, 5)]
    assert diag.nested == 1


def test_parse_stray_close_is_ignored():
    diag = HighlightDiagnostics()
    spans = parse_highlights("gene</m> causes <m>risk</m>", TOKENS, "E", "m",
                             diagnostics=diag)
    assert spans == [EntitySpan("E", 6, 6)]
    assert diag.stray_close == 1


def test_parse_casefold_option():
    response = "<m>BRCA1</m>"
    assert parse_highlights(response, TOKENS, "GENE", "m") == []
    spans = parse_highlights(response, TOKENS, "GENE", "m", casefold=True)
    assert spans == [EntitySpan("GENE", 1, 1)]


def test_diagnostics_add():
    a = HighlightDiagnostics(dropped=1, unclosed=2)
    a.add(HighlightDiagnostics(dropped=3, nested=1, stray_close=4))
    assert (a.dropped, a.unclosed, a.nested, a.stray_close) == (4, 2, 1, 4)


def test_render_highlights():
    out = render_highlights(["a", "b", "c"], [EntitySpan("E", 1, 2)], "m")
    assert out == "a <m>b c</m>"
    out = render_highlights(["a", "b"], [], "m")
    assert out == "a b"


def test_render_parse_round_trip_on_random_sentences():
    rng = np.random.default_rng(12)
    for _ in range(100):
        T = int(rng.integers(3, 12))
        tokens = [f"w{i}" for i in range(T)]  # unique tokens: exact recovery
        # random disjoint non-adjacent spans
        spans, pos = [], 0
        while pos < T:
            if rng.random() < 0.4:
                end = min(T - 1, pos + int(rng.integers(0, 2)))
                spans.append(EntitySpan("E", pos, end))
                pos = end + 2  # gap keeps regions separate
            else:
                pos += 1
        response = render_highlights(tokens, spans, "t")
        back = parse_highlights(response, tokens, "E", "t")
        assert back == spans


# ---------------------------------------------------------------------------
# subsets, records, scoring

def test_sample_test_subset_is_deterministic():
    items = list(range(30))
    a = sample_test_subset(items, 10, 5)
    assert a == sample_test_subset(items, 10, 5)
    assert len(set(a)) == 10
    assert sorted(sample_test_subset(items, 30, 5)) == items
    with pytest.raises(ValueError):
        sample_test_subset(items, 0, 5)
    with pytest.raises(ValueError):
        sample_test_subset(items, 31, 5)


def test_response_records_round_trip():
    records = [ResponseRecord(0, "a <m>b</m>"), ResponseRecord(1, "plain")]
    text = write_responses(records)
    assert read_responses(text) == records
    assert read_responses(text.encode()) == records


def test_read_responses_rejects_duplicates_and_garbage():
    dup = write_responses([ResponseRecord(0, "x"), ResponseRecord(0, "y")])
    with pytest.raises(ValueError, match="duplicate"):
        read_responses(dup)
    with pytest.raises(ValueError, match="line 1"):
        read_responses("not json\n")
    with pytest.raises(ValueError, match="line 2"):
        read_responses('{"id": 0, "response": "ok"}\n{"response": "no id"}\n')


def test_score_ner_responses_end_to_end():
    items = [
        ner_item(["inactivation", "of", "atp7b", "seen"], ["O", "O", "B-GENE", "O"]),
        ner_item(["wilson", "disease", "progressed"], ["B-DIS", "I-DIS", "O"]),
    ]
    records = [
        ResponseRecord(0, "inactivation of <m>atp7b</m> seen"),
        ResponseRecord(1, "<m>wilson disease</m> progressed"),
    ]
    score = score_ner_responses(items, records, "entity", "m")
    # gold collapses to the prompted type, so both sentences match exactly
    assert score.report.strict_macro_f1 == pytest.approx(1.0)
    assert score.diagnostics.dropped == 0


def test_score_ner_responses_reports_missing_ids():
    items = [ner_item(["a"], ["O"]), ner_item(["b"], ["O"])]
    with pytest.raises(ValueError, match=r"\[1\]"):
        score_ner_responses(items, [ResponseRecord(0, "x")], "e", "m")


def test_map_relation_response():
    labels = ["assoc", "no assoc"]
    assert map_relation_response("The relation is No Assoc here", labels) == "no assoc"
    assert map_relation_response("clearly ASSOC", labels) == "assoc"
    assert map_relation_response("cannot tell", labels) == ABSTAIN_LABEL


def test_score_re_responses_end_to_end():
    insts = [
        RelationInstance(("g", "linked", "d"), (0, 0), (2, 2), "assoc"),
        RelationInstance(("g", "and", "d"), (0, 0), (2, 2), "none"),
    ]
    items = [
        ReItem(instance=i, enc=RelationExample(np.array([1, 2, 3]), (0, 0), (2, 2), 0))
        for i in insts
    ]
    records = [ResponseRecord(0, "assoc"), ResponseRecord(1, "no relation: none")]
    score = score_re_responses(items, records, ["assoc", "none"])
    assert score.report.strict_macro_f1 == pytest.approx(1.0)
    bad = [ResponseRecord(0, "assoc"), ResponseRecord(1, "unknowable")]
    score2 = score_re_responses(items, bad, ["assoc", "none"])
    assert score2.report.strict_macro_f1 < 1.0
