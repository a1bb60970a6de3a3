import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pretzel import model
from pretzel.errors import ModelError


def test_tokenize_basics():
    assert model.tokenize("Hello, WORLD!") == ["hello", "world"]
    assert model.tokenize("a bb ccc") == ["bb", "ccc"]  # length-1 dropped
    assert model.tokenize("x" * 25) == []  # over-long dropped
    assert model.tokenize("") == []


def test_feature_vector_validation():
    model.FeatureVector(((0, 1), (3, 2)))
    with pytest.raises(ModelError):
        model.FeatureVector(((3, 1), (1, 2)))  # not increasing
    with pytest.raises(ModelError):
        model.FeatureVector(((0, 0),))  # zero frequency


def test_extract_features_clamps_and_maps():
    vocab = {"spam": 0, "ham": 2}
    fv = model.extract_features("spam spam spam ham spam unknown", vocab, f_in=2)
    assert fv.entries == ((0, 3), (2, 1))  # 4 occurrences clamped to 2^2-1


def test_extract_features_without_vocab_is_deterministic():
    fv1 = model.extract_features("bb aa aa", None, 6)
    fv2 = model.extract_features("aa bb aa", None, 6)
    assert fv1 == fv2 == model.FeatureVector(((0, 2), (1, 1)))


CORPUS = model.Corpus(
    (
        ("win cash cash now", "spam"),
        ("win win prize", "spam"),
        ("meeting notes today", "ham"),
        ("cash meeting tomorrow", "ham"),
    )
)


def test_train_multinomial_laplace_values():
    m = model.train_nb(CORPUS, model.KIND_MULTINOMIAL_NB)
    # vocabulary is sorted; spam docs contain 7 tokens over 8 vocab words
    assert m.category_labels == ["spam", "ham"]
    i = m.vocab["cash"]
    spam_tokens = 7  # win cash cash now win win prize
    assert m.weights[0][i] == pytest.approx(math.log(3 / (spam_tokens + 8)))
    j = m.vocab["notes"]
    assert m.weights[0][j] == pytest.approx(math.log(1 / (spam_tokens + 8)))
    assert m.priors == [pytest.approx(math.log(0.5))] * 2


def test_train_grnb_presence_probabilities():
    m = model.train_nb(CORPUS, model.KIND_GRNB_SPAM)
    assert m.category_labels[0] == "spam"
    i = m.vocab["win"]
    # "win" present in 2 of 2 spam docs -> (2+1)/(2+2)
    assert m.weights[0][i] == pytest.approx(math.log(3 / 4))
    assert m.weights[1][i] == pytest.approx(math.log(1 / 4))


def test_grnb_requires_two_labels():
    bad = model.Corpus((("a b", "x"), ("c d", "y"), ("e f", "z")))
    with pytest.raises(ModelError):
        model.train_nb(bad, model.KIND_GRNB_SPAM)
    with pytest.raises(ModelError):
        model.train_nb(CORPUS, model.KIND_GRNB_SPAM, spam_label="absent")


def test_log_alpha_matches_direct_posterior():
    m = model.train_nb(CORPUS, model.KIND_GRNB_SPAM)
    fv = model.extract_features("win cash today", m.vocab, 6)
    log_alpha = model.spam_log_alpha(m, fv)
    p_spam = model.posterior_direct(m, fv)
    # p(spam|x) = 1 / (1 + alpha)
    assert p_spam == pytest.approx(1.0 / (1.0 + math.exp(log_alpha)), abs=1e-12)


def test_classify_plain_threshold_and_argmax():
    m = model.train_nb(CORPUS, model.KIND_GRNB_SPAM)
    spam_fv = model.extract_features("win win cash prize", m.vocab, 6)
    ham_fv = model.extract_features("meeting notes tomorrow", m.vocab, 6)
    assert model.classify_plain(m, spam_fv) == 0
    assert model.classify_plain(m, ham_fv) == 1
    mm = model.train_nb(CORPUS, model.KIND_MULTINOMIAL_NB)
    assert model.classify_plain(mm, spam_fv) == 0
    assert model.classify_plain(mm, ham_fv) == 1


def test_argmax_tie_goes_to_lowest_index():
    m = model.LinearModel(
        model.KIND_MULTINOMIAL_NB,
        {"aa": 0},
        [[-1.0], [-1.0], [-2.0]],
        [-1.0, -1.0, -1.0],
        ["x", "y", "z"],
    )
    fv = model.FeatureVector(((0, 1),))
    assert model.classify_plain(m, fv) == 0


def test_quantize_offset_and_range():
    m = model.train_nb(CORPUS, model.KIND_MULTINOMIAL_NB)
    qm = model.quantize(m, b_in=12, scale_s=6)
    values = [w for row in m.weights for w in row] + list(m.priors)
    assert qm.offset_m == min(values)
    assert all(0 <= q < (1 << 12) for row in qm.qweights for q in row)
    with pytest.raises(ModelError):
        model.quantize(m, b_in=2, scale_s=10)  # range overflow


@given(st.integers(0, 200), st.integers(2, 12))
def test_score_error_bound_formula(total_freq, scale):
    qm = model.QuantizedModel(
        model.KIND_MULTINOMIAL_NB, {"aa": 0}, [[1]], [0], 0.0, scale, 4, ["x"]
    )
    assert qm.score_error_bound(total_freq) == (total_freq + 1) * 2.0 ** (1 - scale)


@settings(max_examples=30, deadline=None)
@given(st.randoms(use_true_random=False))
def test_quantized_scores_within_published_bound(rnd):
    m = model.train_nb(CORPUS, model.KIND_MULTINOMIAL_NB)
    scale = rnd.randrange(4, 10)
    qm = model.quantize(m, 16, scale)
    ids = sorted(rnd.sample(range(m.num_features), 3))
    fv = model.FeatureVector(tuple((i, rnd.randrange(1, 8)) for i in ids))
    plain = model.score_categories(m, fv)
    quant = model.score_quantized(qm, fv)
    # undo the affine transform; compare per-category
    shift = (fv.total_frequency + 1) * qm.offset_m
    bound = qm.score_error_bound(fv.total_frequency)
    for j in range(m.num_categories):
        recovered = quant[j] / (1 << scale) + shift
        assert abs(recovered - plain[j]) <= bound


def test_classify_quantized_spam_orientation():
    qm = model.QuantizedModel(
        model.KIND_GRNB_SPAM, {"aa": 0}, [[5], [1]], [0, 0], 0.0, 4, 4, ["spam", "ham"]
    )
    fv = model.FeatureVector(((0, 1),))
    # scores = [5, 1]; scores[1]-scores[0] = -4 < 0 -> spam
    assert model.classify_quantized(qm, fv, tau_q=0) == 0
    assert model.classify_quantized(qm, fv, tau_q=-10) == 1


def test_chi_square_prefers_discriminative_features():
    m = model.train_nb(CORPUS, model.KIND_MULTINOMIAL_NB)
    scores = model.chi_square_scores(m, CORPUS)
    # "win" appears only in spam docs; "cash" appears in both classes
    assert scores[m.vocab["win"]] > scores[m.vocab["cash"]]


def test_select_features_keeps_top_and_remaps():
    m = model.train_nb(CORPUS, model.KIND_MULTINOMIAL_NB)
    reduced = model.select_features(m, CORPUS, 4)
    assert reduced.num_features == 4
    for tok, new_id in reduced.vocab.items():
        old_id = m.vocab[tok]
        for j in range(m.num_categories):
            assert reduced.weights[j][new_id] == m.weights[j][old_id]
    with pytest.raises(ModelError):
        model.select_features(m, CORPUS, m.num_features + 1)


def test_model_file_roundtrip(tmp_path):
    m = model.train_nb(CORPUS, model.KIND_GRNB_SPAM)
    path = str(tmp_path / "m.txt")
    model.save_model(m, path)
    m2 = model.load_model(path)
    assert isinstance(m2, model.LinearModel)
    assert m2.vocab == m.vocab and m2.weights == m.weights
    assert m2.priors == m.priors and m2.category_labels == m.category_labels

    qm = model.quantize(m, 12, 6)
    qpath = str(tmp_path / "q.txt")
    model.save_model(qm, qpath)
    qm2 = model.load_model(qpath)
    assert isinstance(qm2, model.QuantizedModel)
    assert qm2.qweights == qm.qweights and qm2.qpriors == qm.qpriors
    assert (qm2.offset_m, qm2.scale_s, qm2.b_in) == (qm.offset_m, qm.scale_s, qm.b_in)


def test_load_model_rejects_garbage(tmp_path):
    path = str(tmp_path / "bad.txt")
    with open(path, "w") as f:
        f.write("not a model\n")
    with pytest.raises(ModelError):
        model.load_model(path)
