import math
import random
from collections import Counter
from dataclasses import dataclass

import pytest

from viqa.analysis import Analyzer
from viqa.bm25 import InvertedIndex, bm25_query, build_bm25_index, normalize_scores
from viqa.retrieval import RetrievalHit


@dataclass(frozen=True)
class Doc:
    id: str
    text: str


ANALYZER1 = Analyzer(segmenter="none", ngram_max=1)


# --------------------------------------------------------------- oracle
# Document-at-a-time BM25: loop every document and every query token with
# no inverted index, mirroring the scoring formula directly.


def brute_bm25(
    doc_terms: dict[str, list[str]], query_terms: list[str], k1: float, b: float
) -> dict[str, float]:
    n_docs = len(doc_terms)
    avgdl = sum(len(t) for t in doc_terms.values()) / n_docs
    df = Counter()
    for terms in doc_terms.values():
        df.update(set(terms))
    scores = {}
    for pid, terms in doc_terms.items():
        tf = Counter(terms)
        dl = len(terms)
        score = 0.0
        for term in query_terms:
            if tf[term] == 0:
                continue
            idf = math.log(1.0 + (n_docs - df[term] + 0.5) / (df[term] + 0.5))
            norm = k1 * (1.0 - b + b * dl / avgdl)
            score += idf * tf[term] * (k1 + 1.0) / (tf[term] + norm)
        if score > 0.0:
            scores[pid] = score
    return scores


class TestBuild:
    def test_single_doc_statistics(self):
        index = build_bm25_index([Doc("d", "a b a")], ANALYZER1)
        assert index.postings == {"a": [("d", 2)], "b": [("d", 1)]}
        assert index.doc_len == {"d": 3}
        assert index.avg_doc_len == 3
        assert index.n_docs == 1

    def test_three_doc_statistics_match_naive_recount(self):
        docs = [Doc("d0", "x y x"), Doc("d1", "y z"), Doc("d2", "z z z x")]
        index = build_bm25_index(docs, ANALYZER1)
        # Naive recount from the raw token lists.
        token_lists = {d.id: d.text.split() for d in docs}
        assert index.doc_len == {pid: len(toks) for pid, toks in token_lists.items()}
        assert index.avg_doc_len == sum(len(t) for t in token_lists.values()) / 3
        for term in {"x", "y", "z"}:
            expected = sorted(
                (pid, Counter(toks)[term])
                for pid, toks in token_lists.items()
                if term in toks
            )
            assert index.postings[term] == expected

    def test_postings_sorted_by_passage_id(self):
        docs = [Doc("z", "chung"), Doc("a", "chung"), Doc("m", "chung")]
        index = build_bm25_index(docs, ANALYZER1)
        assert [pid for pid, _ in index.postings["chung"]] == ["a", "m", "z"]

    def test_rebuild_bit_identical(self, tmp_path):
        docs = [Doc(f"d{i}", f"nội dung {i} chung") for i in range(5)]
        build_bm25_index(docs).save(tmp_path / "a.idx")
        build_bm25_index(docs).save(tmp_path / "b.idx")
        assert (tmp_path / "a.idx").read_bytes() == (tmp_path / "b.idx").read_bytes()

    def test_empty_corpus(self):
        with pytest.raises(ValueError, match="empty"):
            build_bm25_index([])

    def test_parameter_validation(self):
        with pytest.raises(ValueError, match="k1"):
            build_bm25_index([Doc("d", "a")], ANALYZER1, k1=0.0)
        with pytest.raises(ValueError, match="b"):
            build_bm25_index([Doc("d", "a")], ANALYZER1, b=1.5)


class TestQuery:
    def test_absent_terms_contribute_nothing(self):
        docs = [Doc("d0", "cam táo"), Doc("d1", "nho mận")]
        index = build_bm25_index(docs, ANALYZER1)
        assert bm25_query(index, "hoàn toàn khác", 5) == []

    def test_three_doc_scores_match_brute_force(self):
        docs = [Doc("d0", "x y x"), Doc("d1", "y z"), Doc("d2", "z z z x")]
        index = build_bm25_index(docs, ANALYZER1)
        question = "x z z"
        expected = brute_bm25(
            {d.id: d.text.split() for d in docs},
            question.split(),
            index.k1,
            index.b,
        )
        hits = bm25_query(index, question, 3)
        assert {h.passage_id: h.score for h in hits} == pytest.approx(expected, abs=1e-12)

    def test_random_fixtures_match_brute_force(self):
        rng = random.Random(99)
        for _ in range(40):
            vocab = [f"t{i}" for i in range(rng.randint(2, 30))]
            docs = [
                Doc(
                    f"d{i:02d}",
                    " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 30))),
                )
                for i in range(rng.randint(1, 50))
            ]
            k1 = rng.choice([0.9, 1.2, 2.0])
            b = rng.choice([0.0, 0.4, 0.75, 1.0])
            index = build_bm25_index(docs, ANALYZER1, k1=k1, b=b)
            query = " ".join(rng.choice(vocab + ["ngoài"]) for _ in range(rng.randint(1, 6)))
            expected = brute_bm25(
                {d.id: d.text.split() for d in docs}, query.split(), k1, b
            )
            got = {h.passage_id: h.score for h in bm25_query(index, query, len(docs))}
            assert set(got) == set(expected)
            for pid, score in expected.items():
                assert got[pid] == pytest.approx(score, abs=1e-9)

    def test_k_zero_errors(self):
        index = build_bm25_index([Doc("d", "a")], ANALYZER1)
        with pytest.raises(ValueError):
            bm25_query(index, "a", 0)

    def test_ties_broken_by_ascending_id(self):
        docs = [Doc("b", "chung"), Doc("a", "chung"), Doc("c", "khác")]
        index = build_bm25_index(docs, ANALYZER1)
        hits = bm25_query(index, "chung", 3)
        assert [h.passage_id for h in hits] == ["a", "b"]

    def test_query_term_multiplicity_counts(self):
        docs = [Doc("d0", "x y"), Doc("d1", "y z")]
        index = build_bm25_index(docs, ANALYZER1)
        single = bm25_query(index, "x", 2)[0].score
        double = bm25_query(index, "x x", 2)[0].score
        assert double == pytest.approx(2 * single)

    def test_save_load_identical_scores(self, tmp_path):
        docs = [Doc(f"d{i}", f"chung mốc{i} và vậy {i}") for i in range(6)]
        index = build_bm25_index(docs)
        path = tmp_path / "bm25.idx"
        index.save(path)
        loaded = InvertedIndex.load(path)
        for i in range(6):
            q = f"mốc{i} và"
            assert bm25_query(index, q, 6) == bm25_query(loaded, q, 6)

    def test_segmented_analyzer_compounds_terms(self):
        analyzer = Analyzer(
            segmenter="builtin_dictionary",
            compounds=frozenset({"học sinh"}),
            ngram_max=1,
        )
        docs = [Doc("d0", "học sinh giỏi"), Doc("d1", "học môn toán"), Doc("d2", "sinh ra")]
        index = build_bm25_index(docs, analyzer)
        assert "học_sinh" in index.postings
        hits = bm25_query(index, "học sinh", 3)
        assert hits[0].passage_id == "d0"


class TestNormalizeScores:
    def test_single_hit(self):
        hits = [RetrievalHit("d0", 3.7, 1)]
        assert normalize_scores(hits) == [RetrievalHit("d0", 1.0, 1)]

    def test_equal_scores_split_evenly(self):
        hits = [RetrievalHit("d0", 2.0, 1), RetrievalHit("d1", 2.0, 2)]
        out = normalize_scores(hits)
        assert [h.score for h in out] == [0.5, 0.5]

    def test_matches_direct_softmax(self):
        raw = [1.3, 0.2, 2.9]
        hits = [RetrievalHit(f"d{i}", s, i + 1) for i, s in enumerate(raw)]
        out = normalize_scores(hits)
        total = sum(math.exp(s - max(raw)) for s in raw)
        for h, s in zip(out, raw):
            assert h.score == pytest.approx(math.exp(s - max(raw)) / total, abs=1e-15)
        assert sum(h.score for h in out) == pytest.approx(1.0, abs=1e-12)

    def test_preserves_order_and_ranks(self):
        hits = [RetrievalHit("d0", 9.0, 1), RetrievalHit("d1", 1.0, 2)]
        out = normalize_scores(hits)
        assert out[0].score > out[1].score
        assert [h.rank for h in out] == [1, 2]
        assert [h.passage_id for h in out] == ["d0", "d1"]

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            normalize_scores([])
