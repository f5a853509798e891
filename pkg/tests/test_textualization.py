import json

import pytest

from codelkt.errors import EnrichmentError, LlmError, TemplateError, ValidationError
from codelkt.synth import random_log
from codelkt.textualization import (
    EnrichmentCache,
    GeneratedQuestion,
    LlmClientConfig,
    PromptTemplate,
    StubLlmClient,
    default_templates,
    deterministic_stub,
    enrich_log,
    generate_kc,
    generate_question,
    load_templates,
    normalize_kc,
    truncate_at_word_boundary,
)


def test_template_placeholder_consistency():
    t = PromptTemplate.from_text("q", "Describe {code} briefly")
    assert t.placeholder_names == frozenset({"code"})
    with pytest.raises(TemplateError):
        PromptTemplate("bad", "Uses {code}", frozenset({"code", "extra"}))


def test_template_render_missing_value():
    t = PromptTemplate.from_text("q", "{code} and {question}")
    with pytest.raises(TemplateError, match="question"):
        t.render(code="x")


def test_default_templates_load():
    templates = default_templates()
    assert "{code}" in templates["question"].body
    assert "{question}" in templates["kc"].body


def test_load_templates_requires_both(tmp_path):
    (tmp_path / "question.txt").write_text("about {code}", encoding="utf-8")
    with pytest.raises(TemplateError, match="kc.txt"):
        load_templates(tmp_path)


def test_config_validation():
    with pytest.raises(ValidationError):
        LlmClientConfig(temperature=-1)
    with pytest.raises(ValidationError):
        LlmClientConfig(max_retries=-1)


# -- cache ---------------------------------------------------------------


def test_cache_hit_bypasses_network():
    templates = default_templates()
    cache = EnrichmentCache()
    stub = StubLlmClient(default=lambda p: "What does this code do?")
    first = generate_question("return 1;", templates["question"], stub, cache)
    assert len(stub.calls) == 1
    second = generate_question("return 1;", templates["question"], stub, cache)
    assert len(stub.calls) == 1  # served from cache, zero further calls
    assert first == second


def test_cache_entries_are_immutable():
    cache = EnrichmentCache()
    cache.put("t", "m", "x", "first")
    cache.put("t", "m", "x", "second")
    assert cache.get("t", "m", "x") == "first"


def test_cache_keyed_by_model_name():
    cache = EnrichmentCache()
    cache.put("t", "model-a", "x", "a")
    assert cache.get("t", "model-b", "x") is None


def test_cache_persists_to_directory(tmp_path):
    cache = EnrichmentCache(directory=tmp_path / "cache")
    cache.put("t", "m", "x", "value")
    reopened = EnrichmentCache(directory=tmp_path / "cache")
    assert reopened.get("t", "m", "x") == "value"


# -- question generation ---------------------------------------------------


def test_generated_question_within_limit():
    templates = default_templates()
    stub = StubLlmClient(default=lambda p: "Sum the integers from 1 to n.")
    out = generate_question("for(...)", templates["question"], stub, EnrichmentCache())
    assert out == GeneratedQuestion(text="Sum the integers from 1 to n.", truncated=False)
    assert len(out.text) <= 200


def test_overlong_question_truncated_at_word_boundary():
    templates = default_templates()
    long_text = ("write a method that " * 13).strip()  # 260 chars
    assert len(long_text) == 259
    stub = StubLlmClient(default=lambda p: long_text)
    out = generate_question("code", templates["question"], stub, EnrichmentCache())
    # the stub returns the same text on the shorten reprompt, so the hard
    # truncation rule applies: <= 200 chars, ending on a whole word
    expected = long_text[:200]
    expected = expected[:expected.rstrip().rfind(" ")].rstrip()
    assert out.truncated is True
    assert out.text == expected
    assert len(out.text) <= 200
    assert not out.text.endswith(" ")
    assert len(stub.calls) == 2  # original + one reprompt


def test_truncate_word_boundary_rules():
    assert truncate_at_word_boundary("short", 200) == "short"
    assert truncate_at_word_boundary("alpha beta gamma", 10) == "alpha beta"
    assert truncate_at_word_boundary("alpha beta gamma", 12) == "alpha beta"
    # a single unbroken token is hard-cut
    assert truncate_at_word_boundary("x" * 300, 200) == "x" * 200


def test_generate_question_requires_code():
    templates = default_templates()
    with pytest.raises(ValidationError):
        generate_question("", templates["question"], deterministic_stub(), EnrichmentCache())


def test_llm_failure_carries_status():
    templates = default_templates()
    stub = StubLlmClient()  # no responses configured at all
    with pytest.raises(LlmError):
        generate_question("code", templates["question"], stub, EnrichmentCache())


# -- KC generation -----------------------------------------------------------


def test_kc_passthrough():
    templates = default_templates()
    stub = StubLlmClient(default=lambda p: "String Manipulation")
    kc = generate_kc("Reverse a string.", templates["kc"], stub, EnrichmentCache())
    assert kc == "String Manipulation"


def test_kc_variants_normalize_to_same_id():
    templates = default_templates()
    cache = EnrichmentCache()
    stub_a = StubLlmClient(default=lambda p: "string manipulation")
    stub_b = StubLlmClient(default=lambda p: "String  Manipulation")
    a = generate_kc("q one", templates["kc"], stub_a, cache)
    b = generate_kc("q two", templates["kc"], stub_b, cache)
    assert normalize_kc(a) == normalize_kc(b) == "string manipulation"


def test_kc_requires_question():
    templates = default_templates()
    with pytest.raises(ValidationError):
        generate_kc("", templates["kc"], deterministic_stub(), EnrichmentCache())


def test_kc_label_capped_at_eight_words():
    templates = default_templates()
    stub = StubLlmClient(default=lambda p: "one two three four five six seven eight nine ten")
    kc = generate_kc("q", templates["kc"], stub, EnrichmentCache())
    assert len(normalize_kc(kc).split()) <= 8


def test_normalize_kc_examples():
    assert normalize_kc("For-Loops ") == "for loops"
    assert normalize_kc("x") == "x"
    assert normalize_kc("STRING   PATTERN!") == "string pattern"


# -- enrichment --------------------------------------------------------------


def test_enrich_already_enriched_is_identity_with_zero_calls():
    log = random_log(seed=1, enriched=True)
    stub = StubLlmClient()  # would raise if ever called
    out = enrich_log(log, default_templates(), stub, EnrichmentCache())
    assert out is log
    assert stub.calls == []


def test_enrich_counts_calls_per_distinct_question():
    from codelkt.data_model import Interaction, InteractionLog

    interactions = []
    for i, (student, q) in enumerate([("s1", "qA"), ("s1", "qB"), ("s2", "qA"), ("s2", "qB")]):
        interactions.append(Interaction(
            student_id=student, question_id=q, kc_id="", answer_code=f"code {q}",
            correct=i % 2, timestamp=i,
        ))
    log = InteractionLog.from_interactions(interactions)
    stub = deterministic_stub()
    out = enrich_log(log, default_templates(), stub, EnrichmentCache())
    question_calls = [c for c in stub.calls if "problem statement" in c]
    kc_calls = [c for c in stub.calls if "knowledge concept" in c]
    assert len(question_calls) == 2  # one per distinct question
    assert len(kc_calls) <= 2
    assert all(it.enriched for it in out.interactions())
    # shared generation: both attempts at qA carry identical text
    texts = {it.question_id: it.question_text for it in out.interactions()}
    assert len(texts) == 2


def test_enrich_failure_writes_checkpoint(tmp_path):
    from codelkt.data_model import Interaction, InteractionLog

    interactions = [
        Interaction(student_id="s1", question_id=f"q{i}", kc_id="",
                    answer_code=f"c{i}", correct=0, timestamp=i)
        for i in range(3)
    ]
    log = InteractionLog.from_interactions(interactions)

    calls = {"n": 0}

    def flaky(prompt):
        calls["n"] += 1
        if calls["n"] > 3:
            raise LlmError("provider down", status=503, attempts=1)
        if "knowledge concept" in prompt:
            return "arrays"
        return "Do the thing."

    stub = StubLlmClient(default=flaky)
    checkpoint = tmp_path / "resume.json"
    with pytest.raises(EnrichmentError):
        enrich_log(log, default_templates(), stub, EnrichmentCache(), checkpoint_path=checkpoint)
    recorded = json.loads(checkpoint.read_text())
    assert recorded["completed_question_ids"]  # at least q0 finished


def test_enrich_monotone_cache():
    log = random_log(seed=2, enriched=False, n_students=3)
    cache = EnrichmentCache()
    enrich_log(log, default_templates(), deterministic_stub(), cache)
    keys_before = cache.keys()
    enrich_log(log, default_templates(), deterministic_stub(), cache)
    assert cache.keys() >= keys_before


def test_enrich_deterministic_under_fixed_stub(tmp_path):
    from codelkt.data_model import save_dataset

    log = random_log(seed=7, enriched=False, n_students=4)
    out1 = enrich_log(log, default_templates(), deterministic_stub(), EnrichmentCache())
    out2 = enrich_log(log, default_templates(), deterministic_stub(), EnrichmentCache())
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_dataset(out1, p1)
    save_dataset(out2, p2)
    assert p1.read_text() == p2.read_text()


def test_enrich_golden_file(tmp_path, golden_dir):
    from codelkt.data_model import save_dataset

    log = random_log(seed=11, enriched=False, n_students=2, min_len=2, max_len=3)
    out = enrich_log(log, default_templates(), deterministic_stub(), EnrichmentCache())
    path = tmp_path / "enriched.jsonl"
    save_dataset(out, path)
    golden = golden_dir / "enriched_stub.jsonl"
    assert path.read_text(encoding="utf-8") == golden.read_text(encoding="utf-8")
