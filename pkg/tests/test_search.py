import random

import pytest

from pretzel import search
from pretzel.errors import ModelError, ParameterError
from pretzel.model import tokenize


def test_empty_text_adds_document_but_no_postings():
    idx = search.SearchIndex()
    search.index_add(idx, 1, "")
    assert idx.doc_count == 1 and idx.postings == {}


def test_basic_index_and_query():
    idx = search.SearchIndex()
    search.index_add(idx, 1, "hello world")
    search.index_add(idx, 2, "hello there")
    assert search.search(idx, "hello") == [1, 2]
    assert search.search(idx, "hello world") == [1]
    assert search.search(idx, "world there") == []
    assert search.search(idx, "unknown") == []
    assert search.search(idx, "") == []


def test_duplicate_doc_id_rejected():
    idx = search.SearchIndex()
    search.index_add(idx, 7, "some text")
    with pytest.raises(ParameterError):
        search.index_add(idx, 7, "other text")


def test_single_token_query_equals_postings():
    idx = search.SearchIndex()
    search.index_add(idx, 3, "alpha beta")
    search.index_add(idx, 1, "alpha gamma")
    assert search.search(idx, "alpha") == idx.postings["alpha"] == [1, 3]


def test_search_matches_brute_force_scan():
    rnd = random.Random(123)
    words = [f"word{i}" for i in range(20)]
    for corpus_trial in range(40):
        idx = search.SearchIndex()
        docs = {}
        for doc_id in range(rnd.randrange(1, 12)):
            text = " ".join(rnd.choices(words, k=rnd.randrange(0, 15)))
            docs[doc_id] = text
            search.index_add(idx, doc_id, text)
        for _ in range(10):
            query = " ".join(rnd.choices(words, k=rnd.randrange(1, 4)))
            tokens = set(tokenize(query))
            brute = sorted(
                d for d, text in docs.items() if tokens <= set(tokenize(text))
            )
            assert search.search(idx, query) == brute


def test_flat_file_roundtrip(tmp_path):
    idx = search.SearchIndex()
    search.index_add(idx, 5, "keep calm and search")
    search.index_add(idx, 2, "calm waters")
    path = str(tmp_path / "idx.txt")
    search.save_index(idx, path)
    idx2 = search.load_index(path)
    assert idx2.documents == idx.documents
    assert idx2.postings == idx.postings
    assert search.search(idx2, "calm") == [2, 5]


def test_load_rejects_corrupt_index(tmp_path):
    path = str(tmp_path / "bad.txt")
    with open(path, "w") as f:
        f.write("wrong header\n")
    with pytest.raises(ModelError):
        search.load_index(path)
