"""Client-side keyword search over stored mail.

A plain inverted index with conjunctive queries: classification needs
the provider, search does not. Tokenization matches the model module so
that what was classified is what is findable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ModelError, ParameterError
from .model import tokenize


@dataclass
class SearchIndex:
    postings: dict[str, list[int]] = field(default_factory=dict)  # sorted, deduped
    documents: set[int] = field(default_factory=set)

    @property
    def doc_count(self) -> int:
        return len(self.documents)


def index_add(index: SearchIndex, doc_id: int, text: str) -> SearchIndex:
    if doc_id in index.documents:
        raise ParameterError(f"document id {doc_id} already indexed")
    index.documents.add(doc_id)
    for tok in set(tokenize(text)):
        lst = index.postings.setdefault(tok, [])
        lst.append(doc_id)
        lst.sort()
    return index


def search(index: SearchIndex, query: str) -> list[int]:
    """Conjunctive (AND) match over the query's tokens; empty query or
    any unknown token yields no results."""
    tokens = set(tokenize(query))
    if not tokens:
        return []
    result: set[int] | None = None
    for tok in tokens:
        docs = set(index.postings.get(tok, ()))
        result = docs if result is None else result & docs
        if not result:
            return []
    return sorted(result)


# --- flat-file persistence ---------------------------------------------

_HEADER = "pretzel-index v1"


def save_index(index: SearchIndex, path: str) -> None:
    with open(path, "w") as f:
        f.write(f"{_HEADER} docs={index.doc_count}\n")
        f.write("documents " + " ".join(str(d) for d in sorted(index.documents)) + "\n")
        for tok in sorted(index.postings):
            f.write(tok + " " + " ".join(str(d) for d in index.postings[tok]) + "\n")


def load_index(path: str) -> SearchIndex:
    with open(path) as f:
        lines = [line.rstrip("\n") for line in f]
    if not lines or not lines[0].startswith(_HEADER + " docs="):
        raise ModelError("missing pretzel-index v1 header")
    count = int(lines[0].split("docs=", 1)[1])
    if len(lines) < 2 or not lines[1].startswith("documents"):
        raise ModelError("missing documents line")
    docs = {int(v) for v in lines[1].split()[1:]}
    if len(docs) != count:
        raise ModelError("document count disagrees with header")
    index = SearchIndex(documents=docs)
    for line in lines[2:]:
        if not line:
            continue
        parts = line.split()
        ids = [int(v) for v in parts[1:]]
        if ids != sorted(set(ids)) or not set(ids) <= docs:
            raise ModelError(f"bad postings list for token {parts[0]!r}")
        index.postings[parts[0]] = ids
    return index
