"""Linear classifier models and their plaintext oracles.

Covers feature extraction, naive-Bayes training (Bernoulli spam variant
and multinomial), scoring, the direct-Bayes posterior used as an
independent oracle, fixed-point quantization, chi-square feature
selection, and the textual model file format.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import mpmath

from .errors import ModelError

KIND_GRNB_SPAM = "grnb_spam"
KIND_MULTINOMIAL_NB = "multinomial_nb"
KIND_LOGISTIC = "logistic"
KIND_SVM = "svm"
NB_KINDS = (KIND_GRNB_SPAM, KIND_MULTINOMIAL_NB)
ALL_KINDS = NB_KINDS + (KIND_LOGISTIC, KIND_SVM)

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")
_MIN_TOKEN = 2
_MAX_TOKEN = 24


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, keep tokens of length 2-24."""
    return [
        t for t in _TOKEN_SPLIT.split(text.lower()) if _MIN_TOKEN <= len(t) <= _MAX_TOKEN
    ]


@dataclass(frozen=True)
class FeatureVector:
    """Sparse (feature_id, frequency) pairs, ids strictly increasing."""

    entries: tuple[tuple[int, int], ...]

    def __post_init__(self):
        prev = -1
        for fid, freq in self.entries:
            if fid <= prev:
                raise ModelError("feature ids must be strictly increasing")
            if freq < 1:
                raise ModelError("frequencies must be >= 1")
            prev = fid

    @property
    def num_features(self) -> int:
        return len(self.entries)

    @property
    def total_frequency(self) -> int:
        return sum(freq for _, freq in self.entries)


def extract_features(
    text: str, vocab: dict[str, int] | None, f_in: int
) -> FeatureVector:
    """Tokenize and count, clamping frequencies to 2^f_in - 1.

    Unknown tokens are dropped when a vocabulary is given; without one,
    ids are assigned in sorted token order (deterministic per call).
    """
    if f_in < 1:
        raise ModelError("f_in must be >= 1")
    counts: dict[str, int] = {}
    for tok in tokenize(text):
        counts[tok] = counts.get(tok, 0) + 1
    cap = (1 << f_in) - 1
    if vocab is None:
        vocab = {tok: i for i, tok in enumerate(sorted(counts))}
    pairs = sorted(
        (vocab[tok], min(freq, cap)) for tok, freq in counts.items() if tok in vocab
    )
    return FeatureVector(tuple(pairs))


@dataclass(frozen=True)
class Corpus:
    documents: tuple[tuple[str, str], ...]  # (text, category_label)

    def labels(self) -> list[str]:
        seen: dict[str, None] = {}
        for _, label in self.documents:
            seen.setdefault(label)
        return list(seen)


@dataclass
class LinearModel:
    kind: str
    vocab: dict[str, int]  # token -> feature id
    weights: list[list[float]]  # B vectors of N values each
    priors: list[float]  # B values
    category_labels: list[str]

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ModelError(f"unknown model kind {self.kind!r}")
        b = len(self.weights)
        if not (len(self.priors) == len(self.category_labels) == b) or b < 1:
            raise ModelError("weights/priors/labels must agree on B >= 1")
        n = len(self.vocab)
        if any(len(w) != n for w in self.weights):
            raise ModelError("every weight vector must have length N")
        if self.kind == KIND_GRNB_SPAM and b != 2:
            raise ModelError("grnb_spam requires exactly two categories")
        if self.kind in NB_KINDS:
            if any(w > 0 for row in self.weights for w in row) or any(
                p > 0 for p in self.priors
            ):
                raise ModelError("NB weights and priors are log-probabilities (<= 0)")

    @property
    def num_features(self) -> int:
        return len(self.vocab)

    @property
    def num_categories(self) -> int:
        return len(self.weights)


def _check_fv(model, fv: FeatureVector) -> None:
    if fv.entries and fv.entries[-1][0] >= model.num_features:
        raise ModelError("feature id out of range for this model")


def score_categories(model: LinearModel, fv: FeatureVector) -> list[float]:
    """Per-category linear scores: sum_i x_i * w[j][i] + priors[j]."""
    _check_fv(model, fv)
    out = []
    for j in range(model.num_categories):
        row = model.weights[j]
        out.append(math.fsum(freq * row[fid] for fid, freq in fv.entries) + model.priors[j])
    return out


def spam_log_alpha(model: LinearModel, fv: FeatureVector) -> float:
    """Log odds against spam: non-spam score minus spam score."""
    if model.kind != KIND_GRNB_SPAM:
        raise ModelError("spam_log_alpha requires a grnb_spam model")
    scores = score_categories(model, fv)
    return scores[1] - scores[0]


def posterior_direct(model: LinearModel, fv: FeatureVector) -> float:
    """p(spam | x) computed in probability space with extended precision.

    Independent oracle for :func:`spam_log_alpha`: exponentiates the
    per-feature log-probabilities and applies Bayes rule directly, using
    mpmath so that no intermediate product underflows.
    """
    if model.kind != KIND_GRNB_SPAM:
        raise ModelError("posterior_direct requires a grnb_spam model")
    _check_fv(model, fv)
    with mpmath.workdps(60):
        likelihoods = []
        for j in range(2):
            prod = mpmath.exp(mpmath.mpf(model.priors[j]))
            for fid, freq in fv.entries:
                prod *= mpmath.exp(mpmath.mpf(model.weights[j][fid])) ** freq
            likelihoods.append(prod)
        total = likelihoods[0] + likelihoods[1]
        if total == 0:
            raise ModelError("degenerate model: all likelihoods are zero")
        return float(likelihoods[0] / total)


def classify_plain(model: LinearModel, fv: FeatureVector, threshold_tau: float = 0.0) -> int:
    """Non-private oracle. Returns the chosen category index (0-based).

    grnb_spam: spam (index 0) iff log alpha < tau. Other kinds: argmax of
    the scores, lowest index on ties.
    """
    if model.kind == KIND_GRNB_SPAM:
        return 0 if spam_log_alpha(model, fv) < threshold_tau else 1
    scores = score_categories(model, fv)
    best = 0
    for j in range(1, len(scores)):
        if scores[j] > scores[best]:
            best = j
    return best


def train_nb(corpus: Corpus, kind: str, spam_label: str = "spam") -> LinearModel:
    """Train a naive-Bayes model.

    multinomial_nb: Laplace add-one smoothing over token frequencies.
    grnb_spam: Bernoulli presence probabilities with (count+1)/(docs+2)
    smoothing; category 0 is the spam class.
    """
    if kind not in NB_KINDS:
        raise ModelError(f"train_nb supports {NB_KINDS}, not {kind!r}")
    if not corpus.documents:
        raise ModelError("empty corpus")
    labels = corpus.labels()
    if kind == KIND_GRNB_SPAM:
        if len(labels) != 2:
            raise ModelError("grnb_spam requires exactly two labels")
        if spam_label not in labels:
            raise ModelError(f"spam label {spam_label!r} not present in corpus")
        labels = [spam_label] + [l for l in labels if l != spam_label]

    tokens: set[str] = set()
    docs_per_label: dict[str, int] = {l: 0 for l in labels}
    doc_tokens: list[tuple[list[str], str]] = []
    for text, label in corpus.documents:
        toks = tokenize(text)
        tokens.update(toks)
        docs_per_label[label] += 1
        doc_tokens.append((toks, label))
    if not tokens:
        raise ModelError("empty vocabulary after tokenization")
    vocab = {tok: i for i, tok in enumerate(sorted(tokens))}
    n = len(vocab)
    b = len(labels)
    total_docs = len(corpus.documents)
    priors = [math.log(docs_per_label[l] / total_docs) for l in labels]
    label_idx = {l: j for j, l in enumerate(labels)}

    weights = [[0.0] * n for _ in range(b)]
    if kind == KIND_MULTINOMIAL_NB:
        tf = [[0] * n for _ in range(b)]
        for toks, label in doc_tokens:
            j = label_idx[label]
            for tok in toks:
                tf[j][vocab[tok]] += 1
        for j in range(b):
            denom = sum(tf[j]) + n
            weights[j] = [math.log((c + 1) / denom) for c in tf[j]]
    else:
        present = [[0] * n for _ in range(b)]
        for toks, label in doc_tokens:
            j = label_idx[label]
            for tok in set(toks):
                present[j][vocab[tok]] += 1
        for j in range(b):
            denom = docs_per_label[labels[j]] + 2
            weights[j] = [math.log((c + 1) / denom) for c in present[j]]

    return LinearModel(kind, vocab, weights, priors, labels)


@dataclass
class QuantizedModel:
    """Affine fixed-point encoding: q = round((w - offset) * 2^scale)."""

    kind: str
    vocab: dict[str, int]
    qweights: list[list[int]]
    qpriors: list[int]
    offset_m: float
    scale_s: int
    b_in: int
    category_labels: list[str]

    @property
    def num_features(self) -> int:
        return len(self.vocab)

    @property
    def num_categories(self) -> int:
        return len(self.qweights)

    def score_error_bound(self, total_frequency: int) -> float:
        """Published bound on the float-vs-quantized score difference."""
        return (total_frequency + 1) * 2.0 ** (1 - self.scale_s)


def quantize(model: LinearModel, b_in: int, scale_s: int) -> QuantizedModel:
    """Shift all parameters by a common offset and round to scale_s bits.

    The common shift preserves argmax (it adds the same amount to every
    category score) and makes every packed value non-negative.
    """
    if not 2 <= b_in <= 24:
        raise ModelError("b_in must be in [2, 24]")
    values = [w for row in model.weights for w in row] + list(model.priors)
    offset = min(values)
    limit = 1 << b_in
    qweights = []
    for row in model.weights:
        qrow = [round((w - offset) * (1 << scale_s)) for w in row]
        qweights.append(qrow)
    qpriors = [round((p - offset) * (1 << scale_s)) for p in model.priors]
    top = max(max((max(r) for r in qweights), default=0), max(qpriors))
    if top >= limit:
        raise ModelError(
            f"dynamic range exceeds {b_in} bits at scale {scale_s} (max q = {top})"
        )
    return QuantizedModel(
        model.kind,
        dict(model.vocab),
        qweights,
        qpriors,
        offset,
        scale_s,
        b_in,
        list(model.category_labels),
    )


def quantize_threshold(tau: float, scale_s: int) -> int:
    return round(tau * (1 << scale_s))


def score_quantized(qmodel: QuantizedModel, fv: FeatureVector) -> list[int]:
    _check_fv(qmodel, fv)
    out = []
    for j in range(qmodel.num_categories):
        row = qmodel.qweights[j]
        out.append(sum(freq * row[fid] for fid, freq in fv.entries) + qmodel.qpriors[j])
    return out


def classify_quantized(qmodel: QuantizedModel, fv: FeatureVector, tau_q: int = 0) -> int:
    """Integer-arithmetic oracle matched exactly by the private protocols."""
    scores = score_quantized(qmodel, fv)
    if qmodel.kind == KIND_GRNB_SPAM:
        return 0 if scores[1] - scores[0] < tau_q else 1
    best = 0
    for j in range(1, len(scores)):
        if scores[j] > scores[best]:
            best = j
    return best


def chi_square_scores(model: LinearModel, corpus: Corpus) -> list[float]:
    """Chi-square statistic of feature presence vs. category, per feature."""
    label_idx = {l: j for j, l in enumerate(model.category_labels)}
    b = model.num_categories
    n = model.num_features
    present = [[0] * n for _ in range(b)]
    docs_per_cat = [0] * b
    for text, label in corpus.documents:
        if label not in label_idx:
            raise ModelError(f"corpus label {label!r} not in model categories")
        j = label_idx[label]
        docs_per_cat[j] += 1
        for tok in set(tokenize(text)):
            fid = model.vocab.get(tok)
            if fid is not None:
                present[j][fid] += 1
    total = len(corpus.documents)
    scores = [0.0] * n
    for i in range(n):
        present_total = sum(present[j][i] for j in range(b))
        if present_total == 0 or present_total == total:
            continue
        chi2 = 0.0
        for j in range(b):
            for obs, col_total in (
                (present[j][i], present_total),
                (docs_per_cat[j] - present[j][i], total - present_total),
            ):
                expected = docs_per_cat[j] * col_total / total
                if expected > 0:
                    chi2 += (obs - expected) ** 2 / expected
        scores[i] = chi2
    return scores


def select_features(model: LinearModel, corpus: Corpus, n_prime: int) -> LinearModel:
    """Keep the n_prime features with the highest chi-square statistic."""
    if n_prime <= 0:
        raise ModelError("n_prime must be positive")
    if n_prime > model.num_features:
        raise ModelError("n_prime exceeds the model's feature count")
    scores = chi_square_scores(model, corpus)
    ranked = sorted(range(model.num_features), key=lambda i: (-scores[i], i))
    kept = sorted(ranked[:n_prime])
    id_to_token = {i: t for t, i in model.vocab.items()}
    new_vocab = {id_to_token[old]: new for new, old in enumerate(kept)}
    new_weights = [[row[old] for old in kept] for row in model.weights]
    return LinearModel(
        model.kind, new_vocab, new_weights, list(model.priors), list(model.category_labels)
    )


# --- model file format -------------------------------------------------

_HEADER_RE = re.compile(r"^pretzel-model v1 (.+)$")


def _header_fields(pairs: list[str]) -> dict[str, str]:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ModelError(f"bad header field {item!r}")
        k, v = item.split("=", 1)
        out[k] = v
    return out


def save_model(model: LinearModel | QuantizedModel, path: str) -> None:
    quantized = isinstance(model, QuantizedModel)
    n, b = model.num_features, model.num_categories
    header = f"pretzel-model v1 kind={model.kind} N={n} B={b}"
    if quantized:
        header += f" b_in={model.b_in} scale={model.scale_s} offset={model.offset_m!r}"
    id_to_token = [None] * n
    for tok, i in model.vocab.items():
        id_to_token[i] = tok
    rows = model.qweights if quantized else model.weights
    priors = model.qpriors if quantized else model.priors
    with open(path, "w") as f:
        f.write(header + "\n")
        f.write("labels " + " ".join(model.category_labels) + "\n")
        f.write("priors " + " ".join(repr(p) for p in priors) + "\n")
        for i in range(n):
            f.write(
                id_to_token[i] + " " + " ".join(repr(rows[j][i]) for j in range(b)) + "\n"
            )


def load_model(path: str) -> LinearModel | QuantizedModel:
    with open(path) as f:
        lines = [line.rstrip("\n") for line in f]
    if not lines:
        raise ModelError("empty model file")
    m = _HEADER_RE.match(lines[0])
    if not m:
        raise ModelError("missing pretzel-model v1 header")
    fields = _header_fields(m.group(1).split())
    kind = fields["kind"]
    n, b = int(fields["N"]), int(fields["B"])
    quantized = "b_in" in fields
    if len(lines) < 3 + n:
        raise ModelError("truncated model file")
    if not lines[1].startswith("labels ") or not lines[2].startswith("priors "):
        raise ModelError("expected labels and priors lines")
    labels = lines[1].split()[1:]
    parse = int if quantized else float
    priors = [parse(v) for v in lines[2].split()[1:]]
    if len(labels) != b or len(priors) != b:
        raise ModelError("labels/priors length mismatch with header B")
    vocab: dict[str, int] = {}
    rows = [[0] * n for _ in range(b)] if quantized else [[0.0] * n for _ in range(b)]
    for i in range(n):
        parts = lines[3 + i].split()
        if len(parts) != 1 + b:
            raise ModelError(f"bad model row at line {4 + i}")
        vocab[parts[0]] = i
        for j in range(b):
            rows[j][i] = parse(parts[1 + j])
    if quantized:
        return QuantizedModel(
            kind,
            vocab,
            rows,
            priors,
            float(fields["offset"]),
            int(fields["scale"]),
            int(fields["b_in"]),
            labels,
        )
    return LinearModel(kind, vocab, rows, priors, labels)
