import dataclasses
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from casecascade.cascade import (
    PRESETS,
    TASK1_PARAMS,
    TASK2_PARAMS,
    QueryMode,
    as_query_case,
    build_task2_query,
    match_fragment,
    query_units,
    rank_pool,
    recall_at_k,
    resolve_preset,
    run_task1,
    run_task2,
    stage1_query_text,
    task1_text_units,
)
from casecascade.corpus import Document, EntailmentCase, LabelSet, PoolParagraph
from casecascade.embedding import (
    AveragedNgramProvider,
    ParagraphEmbeddingStore,
    PrecomputedProvider,
    demo_word_vectors,
)
from casecascade.errors import ConfigError, CorpusError, MissingEmbeddingError
from casecascade.evaluation import evaluate
from casecascade.lexical import BM25Params, tokenize
from casecascade.synthetic import make_task1_corpus, make_task2_cases

from oracles import brute_recall


def test_presets_carry_published_settings():
    assert TASK1_PARAMS == BM25Params(k1=1.6, b=0.99, ngram_min=2, ngram_max=6, max_df=0.90, min_df=1,
                                      remove_stopwords=True)
    assert TASK2_PARAMS == BM25Params(k1=1.6, b=0.7, ngram_min=1, ngram_max=1, max_df=0.65, min_df=1,
                                      remove_stopwords=False)
    t1 = PRESETS["task1-bm25"]
    assert (t1.reduce_to, t1.predict_k, t1.provider, t1.granularity) == (100, 5, "none", "paragraph")
    assert PRESETS["task1-reduced-sent2vec"].provider == "averaged-ngram"
    assert PRESETS["task1-reduced-sbert"].provider == "precomputed"
    assert PRESETS["task2-fragment"].predict_k == 1
    assert str(PRESETS["task2-basewindow"].query_mode) == "base_window(1,1)"


@pytest.mark.parametrize(
    "text, expected",
    [
        ("fragment_only", QueryMode()),
        ("base_window(1,2)", QueryMode("base_window", 1, 2)),
        ("base_window( 3 , +0 )", QueryMode("base_window", 3, 0)),
        ("base_window:2:5", QueryMode("base_window", 2, 5)),
    ],
)
def test_query_mode_parse(text, expected):
    assert QueryMode.parse(text) == expected
    assert QueryMode.parse(str(expected)) == expected


@pytest.mark.parametrize("text", ["window(1,1)", "base_window(-1,1)", "base_window(1)", ""])
def test_query_mode_rejects(text):
    with pytest.raises(ConfigError):
        QueryMode.parse(text)


def test_overrides_last_wins_and_validate():
    cfg = resolve_preset("task1-bm25", {"k1": "1.2", "max_df": "5", "predict_k": "3", "query_mode": "base_window(0,2)"})
    assert cfg.stage1.k1 == 1.2
    assert cfg.stage1.max_df == 5 and isinstance(cfg.stage1.max_df, int)
    assert cfg.predict_k == 3
    assert cfg.query_mode == QueryMode("base_window", 0, 2)
    assert resolve_preset("task1-bm25", {"max_df": "0.5"}).stage1.max_df == 0.5
    assert resolve_preset("task1-bm25", {"remove_stopwords": "no"}).stage1.remove_stopwords is False
    with pytest.raises(ConfigError, match="valid keys"):
        resolve_preset("task1-bm25", {"bogus": "1"})
    with pytest.raises(ConfigError, match="task1-bm25"):
        resolve_preset("nope")
    with pytest.raises(ConfigError, match="reduce_to"):
        resolve_preset("task1-bm25", {"reduce_to": "2"})
    with pytest.raises(ConfigError):
        resolve_preset("task1-bm25", {"k1": "fast"})
    with pytest.raises(ConfigError):
        resolve_preset("task1-bm25", {"provider": "gpt"})


def test_describe_is_sorted_and_complete():
    lines = PRESETS["task1-bm25"].describe()
    assert lines == sorted(lines)
    keys = {ln.split("=", 1)[0] for ln in lines}
    assert {"k1", "b", "max_df", "reduce_to", "provider", "predict_k", "run_tag"} <= keys


# -- Task 1 ----------------------------------------------------------------


@pytest.fixture(scope="module")
def corpus():
    return make_task1_corpus(12, 80, seed=5, max_relevant=4)


def test_stage1_query_text_uses_blocks():
    doc = Document.from_text("q", "Alpha one. Beta two. Gamma FRAGMENT_SUPPRESSED three. Delta four. Eps five.")
    case = as_query_case(doc, dataclasses.replace(PRESETS["task1-bm25"], context_before=1, context_after=1))
    assert stage1_query_text(case) == "Beta two. Gamma FRAGMENT_SUPPRESSED three. Delta four."
    plain = as_query_case(Document.from_text("p", "No marker here.\n\nSecond para."), PRESETS["task1-bm25"])
    assert stage1_query_text(plain) == "No marker here.\n\nSecond para."
    assert [u.unit_index for u in query_units(plain)] == [0, 1]
    assert [u.unit_index for u in query_units(plain, "document")] == [-1]


def test_pure_bm25_finds_planted_phrase(corpus):
    run = run_task1(corpus.queries, corpus.candidates, PRESETS["task1-bm25"])
    for qid in corpus.labels:
        gold = corpus.labels[qid]
        got = run.candidate_ids(qid)
        assert len(got) == 5
        assert set(got[:len(gold)]) == gold
    assert recall_at_k(run.stage1, corpus.labels, 5) == 1.0


def test_single_planted_candidate_is_rank_one():
    c = make_task1_corpus(6, 40, seed=11, max_relevant=1)
    run = run_task1(c.queries, c.candidates, PRESETS["task1-bm25"])
    for qid in c.labels:
        assert run.stage1[qid][0][0] in c.labels[qid]
        assert run.stage1[qid][0][1] > run.stage1[qid][1][1]


def test_reduced_space_containment_and_self_exclusion(corpus):
    terms = {t for d in corpus.queries + corpus.candidates for t in tokenize(d.raw_text)}
    provider = AveragedNgramProvider(demo_word_vectors(terms, dimension=16))
    config = resolve_preset("task1-reduced-sent2vec", {"reduce_to": "20"})
    # a query that is also a candidate must never retrieve itself
    candidates = corpus.candidates + [corpus.queries[0]]
    run = run_task1(corpus.queries, candidates, config, provider)
    for qid, preds in run.predictions.items():
        stage1 = [cid for cid, _ in run.stage1[qid]]
        assert len(stage1) <= 20
        assert qid not in stage1
        ids = [p.candidate_id for p in preds]
        assert len(ids) == len(set(ids)) <= 5
        assert set(ids) <= set(stage1)
        scores = [p.score for p in preds]
        assert scores == sorted(scores, reverse=True)
        assert all(-1 <= s <= 1 for s in scores)


def test_reduced_space_with_precomputed_matches_averaged(corpus):
    terms = {t for d in corpus.queries + corpus.candidates for t in tokenize(d.raw_text)}
    avg = AveragedNgramProvider(demo_word_vectors(terms, dimension=8))
    units = task1_text_units(corpus.queries, corpus.candidates, PRESETS["task1-reduced-sbert"])
    store = ParagraphEmbeddingStore(8, {(u.doc_id, u.unit_index): avg.embed(u) for u in units})
    a = run_task1(corpus.queries, corpus.candidates, PRESETS["task1-reduced-sent2vec"], avg)
    b = run_task1(corpus.queries, corpus.candidates, PRESETS["task1-reduced-sbert"], PrecomputedProvider(store))
    assert a.predictions == b.predictions


def test_missing_embedding_names_unit(corpus):
    store = ParagraphEmbeddingStore(2, {("nothing", 0): np.zeros(2)})
    with pytest.raises(MissingEmbeddingError, match="unit_index"):
        run_task1(corpus.queries, corpus.candidates, PRESETS["task1-reduced-sbert"], PrecomputedProvider(store))


def test_provider_required(corpus):
    with pytest.raises(ConfigError):
        run_task1(corpus.queries, corpus.candidates, PRESETS["task1-reduced-sbert"])
    with pytest.raises(ConfigError):
        run_task1(corpus.queries, corpus.candidates, PRESETS["task2-fragment"])


def test_parallel_equals_serial(corpus):
    terms = {t for d in corpus.queries + corpus.candidates for t in tokenize(d.raw_text)}
    provider = AveragedNgramProvider(demo_word_vectors(terms, dimension=8))
    cfg = PRESETS["task1-reduced-sent2vec"]
    one = run_task1(corpus.queries, corpus.candidates, cfg, provider, threads=1)
    many = run_task1(corpus.queries, corpus.candidates, cfg, provider, threads=6)
    assert one.predictions == many.predictions
    assert one.stage1 == many.stage1


def test_document_granularity(corpus):
    cfg = resolve_preset("task1-bm25", {"granularity": "document"})
    run = run_task1(corpus.queries, corpus.candidates, cfg)
    assert recall_at_k(run.stage1, corpus.labels, 10) > 0.8


def test_empty_candidates_rejected():
    with pytest.raises(CorpusError):
        run_task1([Document.from_text("q", "x")], [Document.from_text("c", "   ")], PRESETS["task1-bm25"])


def test_recall_at_k_examples():
    labels = LabelSet.from_mapping({"q": ["a", "b"]})
    assert recall_at_k({"q": ["a", "x"]}, labels, 2) == 0.5
    assert recall_at_k({"q": [("b", 1.0), ("a", 0.5)]}, labels, 2) == 1.0
    assert recall_at_k({}, labels, 5) == 0.0
    with pytest.raises(ValueError):
        recall_at_k({}, labels, 0)


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_recall_at_k_matches_oracle(data):
    ids = [f"c{i}" for i in range(12)]
    labels = {q: data.draw(st.sets(st.sampled_from(ids), min_size=1, max_size=4)) for q in ("q1", "q2", "q3")}
    stage1 = {q: data.draw(st.permutations(ids)) for q in ("q1", "q2")}
    label_set = LabelSet.from_mapping({q: sorted(v) for q, v in labels.items()})
    prev = -1.0
    for k in range(1, 14):
        got = recall_at_k(stage1, label_set, k)
        assert got == pytest.approx(brute_recall(stage1, labels, k), abs=1e-15)
        assert got >= prev
        prev = got


# -- Task 2 ----------------------------------------------------------------


def _case(base_sentences, fragment, pool=("aa bb.",)):
    base = Document.from_text("q", " ".join(base_sentences))
    paras = tuple(PoolParagraph(f"{i + 1:03d}.txt", i, t) for i, t in enumerate(pool))
    return EntailmentCase("q", fragment, base, paras)


def _base(n):
    return [f"Filler{i} sentence number w{i} x{i}." for i in range(n)]


def test_base_window_middle():
    base = _base(12)
    base[7] = "The tribunal erred in refusing the application."
    case = _case(base, "The tribunal erred in refusing the application.")
    got = build_task2_query(case, QueryMode("base_window", 1, 1))
    assert got == [base[6], base[7], base[8]]


def test_base_window_clamped_at_start():
    base = _base(8)
    base[0] = "Costs are awarded to the respondent."
    case = _case(base, "Costs are awarded to the respondent.")
    assert build_task2_query(case, QueryMode("base_window", 2, 3)) == base[0:4]


def test_base_window_dedup_and_multiple_matches():
    base = _base(10)
    base[2] = "The appeal is dismissed with costs."
    base[4] = "Judicial review is granted in part."
    case = _case(base, "The appeal is dismissed with costs. Judicial review is granted in part.")
    assert build_task2_query(case, QueryMode("base_window", 1, 1)) == base[1:6]


def test_fragment_only_and_fallback(caplog):
    case = _case(_base(5), "Nothing like this appears. Second sentence.")
    assert build_task2_query(case, QueryMode()) == ["Nothing like this appears.", "Second sentence."]
    with caplog.at_level(logging.WARNING):
        got = build_task2_query(case, QueryMode("base_window", 1, 1))
    assert got == ["Nothing like this appears.", "Second sentence."]
    assert "not found" in caplog.text
    with pytest.raises(CorpusError, match="'q'"):
        build_task2_query(_case(_base(3), "   "), QueryMode())


def test_match_fragment_threshold():
    base = ["aa bb cc dd ee", "aa bb cc xx yy", "zz"]
    assert match_fragment(["aa bb cc dd ee"], base) == [0]
    # 3 shared of 7 distinct tokens is below 0.6
    assert match_fragment(["aa bb cc qq rr"], base) == []
    assert match_fragment(["aa bb cc qq rr"], base, threshold=0.4) == [0, 1]


def test_rank_pool_and_pool_of_one(caplog):
    case = _case(_base(3), "x", pool=("The respondent bears the costs.",))
    with caplog.at_level(logging.WARNING):
        preds = rank_pool(case, "respondent costs", TASK2_PARAMS, 1)
    assert [(p.candidate_id, p.paragraph_index) for p in preds] == [("001.txt", 0)]
    with pytest.raises(CorpusError, match="'q'"):
        rank_pool(_case(_base(3), "x", pool=()), "x", TASK2_PARAMS, 1)


def test_task2_ranks_gold_first():
    cases, labels = make_task2_cases(20, seed=3)
    run = run_task2(cases, PRESETS["task2-fragment"])
    for case in cases:
        preds = run.predictions[case.id]
        assert len(preds) == 1
        assert preds[0].candidate_id in labels[case.id]
    window = run_task2(cases, PRESETS["task2-basewindow"])
    assert set(window.predictions) == set(run.predictions)


def test_task2_pool_isolation():
    cases, _ = make_task2_cases(6, seed=9)
    base = run_task2(cases, PRESETS["task2-fragment"]).predictions
    rng = np.random.default_rng(0)
    shuffled = []
    for i, c in enumerate(cases):
        if i == 0:
            shuffled.append(c)
            continue
        order = rng.permutation(len(c.paragraphs))
        shuffled.append(dataclasses.replace(c, paragraphs=tuple(c.paragraphs[j] for j in order)))
    again = run_task2(shuffled, PRESETS["task2-fragment"]).predictions
    assert again[cases[0].id] == base[cases[0].id]
    # other queries keep their top paragraph by name, whatever the pool order
    for c in cases[1:]:
        assert again[c.id][0].candidate_id == base[c.id][0].candidate_id
    alone = run_task2(cases[:1], PRESETS["task2-fragment"]).predictions
    assert alone[cases[0].id] == base[cases[0].id]


def test_task2_k2_trades_precision_for_recall():
    cases, labels = make_task2_cases(30, seed=4)
    one = evaluate(run_task2(cases, PRESETS["task2-fragment"]), labels)
    two = evaluate(run_task2(cases, resolve_preset("task2-fragment", {"predict_k": "2"})), labels)
    assert two.recall > one.recall
    assert two.precision < one.precision


def test_task2_parallel_equals_serial():
    cases, _ = make_task2_cases(10, seed=6)
    cfg = PRESETS["task2-basewindow"]
    assert run_task2(cases, cfg, threads=1).predictions == run_task2(cases, cfg, threads=4).predictions
