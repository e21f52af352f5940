import numpy as np
import pytest

from peace.backends.base import EmbeddingVector
from peace.errors import ComputationError, ValidationError
from peace.prompts import (
    PLAIN_TEMPLATE,
    STATIC_AERIAL_TEMPLATE,
    PromptConfig,
    PromptSet,
    WordSelection,
    build_prompt,
    cosine_similarity,
    generate_prompt_set,
    maybe_regenerate,
    select_words,
)
from peace.vocab import DescriptionType, DescriptionVocabulary

from conftest import tagged_frame


# -- cosine ---------------------------------------------------------------

def test_cosine_identity():
    v = np.asarray([0.3, -1.2, 4.0])
    assert cosine_similarity(v, v) == pytest.approx(1.0)


def test_cosine_orthogonal():
    assert cosine_similarity(np.asarray([1.0, 0.0]), np.asarray([0.0, 1.0])) == 0.0


def test_cosine_hand_value():
    # (1,2,2).(2,1,2) = 8, norms 3 and 3
    got = cosine_similarity(np.asarray([1.0, 2.0, 2.0]), np.asarray([2.0, 1.0, 2.0]))
    assert got == pytest.approx(8.0 / 9.0, abs=1e-12)


def test_cosine_zero_vector_rejected():
    with pytest.raises(ComputationError):
        cosine_similarity(np.zeros(3), np.ones(3))


def test_cosine_dim_mismatch_rejected():
    with pytest.raises(ComputationError):
        cosine_similarity(np.ones(3), np.ones(4))


# -- word selection ----------------------------------------------------------

def test_select_recovers_planted_words(backend, vocab):
    tags = {"resolution": "blurred", "frame": "artwork", "environment": "dark"}
    emb = backend.embed_image(tagged_frame(tags, key="sel"))
    selection = select_words(emb, vocab)
    assert selection.word("resolution") == "blurred"
    assert selection.word("frame") == "artwork"
    assert selection.word("environment") == "dark"
    # oracle: exhaustive scoring with the standalone cosine
    for t in vocab.types:
        scores = [cosine_similarity(emb, EmbeddingVector(values=row))
                  for row in t.embeddings]
        assert selection.word(t.role) == t.words[int(np.argmax(scores))]
        assert selection.score(t.role) == pytest.approx(max(scores), abs=1e-12)


def _unit(seed, dim=16):
    v = np.random.default_rng(seed).standard_normal(dim)
    return v / np.linalg.norm(v)


def _tiny_vocab(env_words=("sunny", "rainy"), env_rows=None):
    types = []
    for role, words in (("resolution", ("sharp",)), ("frame", ("photo",)),
                        ("environment", env_words)):
        rows = np.stack([_unit(hash((role, w)) % 2**31) for w in words])
        if role == "environment" and env_rows is not None:
            rows = env_rows
        types.append(DescriptionType(role=role, words=tuple(words), embeddings=rows))
    return DescriptionVocabulary(types=tuple(types))


def test_singleton_type_selected():
    vocab = _tiny_vocab()
    emb = EmbeddingVector(values=_unit(99))
    sel = select_words(emb, vocab)
    assert sel.word("resolution") == "sharp"
    assert -1.0 <= sel.score("resolution") <= 1.0


def test_tie_breaks_to_earlier_word():
    row = _unit(5)
    vocab = _tiny_vocab(env_words=("first", "second"), env_rows=np.stack([row, row]))
    sel = select_words(EmbeddingVector(values=_unit(99)), vocab)
    assert sel.word("environment") == "first"


def test_argmax_scale_invariance(backend, vocab):
    emb = backend.embed_image(tagged_frame(
        {"resolution": "rendered", "frame": "view", "environment": "snow"}, key="scale"))
    base = select_words(emb, vocab)
    for c in (3.7, 0.002, 1024.0):
        scaled = select_words(EmbeddingVector(values=emb.values * c), vocab)
        assert {r: p[0][0] for r, p in scaled.entries.items()} == \
            {r: p[0][0] for r, p in base.entries.items()}
        for role in scaled.entries:
            assert scaled.score(role) == pytest.approx(base.score(role), abs=1e-9)


def test_environment_top_k(backend, vocab):
    emb = backend.embed_image(tagged_frame({"environment": "foggy"}, key="topk"))
    sel = select_words(emb, vocab, env_top_k=3)
    env = sel.entries["environment"]
    assert len(env) == 3
    assert env[0][0] == "foggy"
    scores = [s for _, s in env]
    assert scores == sorted(scores, reverse=True)
    assert len(sel.entries["frame"]) == 1


def test_dimension_mismatch_rejected(vocab):
    with pytest.raises(ComputationError):
        select_words(EmbeddingVector(values=np.ones(7)), vocab)


# -- prompt building ---------------------------------------------------------

def _selection(res, frm, env):
    return WordSelection(entries={
        "resolution": ((res, 0.5),),
        "frame": ((frm, 0.4),),
        "environment": tuple((w, 0.3) for w in env),
    })


def test_build_prompt_single_environment():
    p = build_prompt(_selection("rendered", "image", ["sunny"]), "grass", "positive")
    assert p.text == "A rendered image of grass in sunny."


def test_build_prompt_top_k_environment():
    p = build_prompt(_selection("blurred", "artwork", ["heat", "heat-map", "piece"]),
                     "dirt", "positive")
    assert p.text == "A blurred artwork of dirt in heat, heat-map, piece."


def test_build_prompt_polarity_does_not_alter_text():
    sel = _selection("rendered", "image", ["sunny"])
    pos = build_prompt(sel, "water", "positive")
    neg = build_prompt(sel, "water", "negative")
    assert pos.text == neg.text
    assert neg.polarity == "negative"


def test_build_prompt_empty_class_rejected():
    with pytest.raises(ValidationError):
        build_prompt(_selection("a", "b", ["c"]), "", "positive")


def test_plain_template_exact():
    p = build_prompt(None, "grass", "positive", mode="default")
    assert p.text == "A photo of grass."
    assert PLAIN_TEMPLATE == "A photo of {}."


def test_static_aerial_exact():
    p = build_prompt(None, "grass", "positive", mode="dovesei")
    assert p.text == ("Aerial view, drone footage photo of grass, shade, "
                      "shadows, low resolution.")
    assert STATIC_AERIAL_TEMPLATE.count("{}") == 1


# -- prompt sets ------------------------------------------------------------

def test_prompt_set_counts_and_order(backend, vocab, targets):
    frame = tagged_frame({"environment": "sunny"}, key="ps")
    ps = generate_prompt_set(frame, targets, vocab, backend, frame_index=0)
    assert len(ps.prompts) == 13
    assert ps.x_count == 6 and ps.y_count == 7
    assert all(p.polarity == "positive" for p in ps.prompts[:6])
    assert all(p.polarity == "negative" for p in ps.prompts[6:])
    assert [p.class_word for p in ps.prompts[:6]] == list(targets.positives)


def test_prompt_set_degenerate_negatives(backend, vocab, targets):
    from peace.vocab import TargetLists
    pos_only = TargetLists(positives=targets.positives, negatives=())
    frame = tagged_frame({"environment": "sunny"}, key="ps")
    full = generate_prompt_set(frame, targets, vocab, backend, 0)
    slim = generate_prompt_set(frame, pos_only, vocab, backend, 0)
    assert [p.text for p in slim.prompts] == [p.text for p in full.prompts[:6]]
    assert slim.y_count == 0


def test_prompt_set_deterministic(backend, vocab, targets):
    frame = tagged_frame({"environment": "rainy", "frame": "photo"}, key="same")
    a = generate_prompt_set(frame, targets, vocab, backend, 3)
    b = generate_prompt_set(frame, targets, vocab, backend, 9)
    assert a.texts() == b.texts()
    assert a.frame_index == 3 and b.frame_index == 9


def test_prompt_count_property(backend, vocab):
    from peace.vocab import TargetLists
    rng = np.random.default_rng(4)
    frame = tagged_frame({"environment": "snow"}, key="prop")
    for _ in range(10):
        x = int(rng.integers(1, 6))
        y = int(rng.integers(0, 6))
        t = TargetLists(positives=tuple(f"pos{i}" for i in range(x)),
                        negatives=tuple(f"neg{i}" for i in range(y)))
        ps = generate_prompt_set(frame, t, vocab, backend, 0)
        assert len(ps.prompts) == x + y


def test_caption_fusion_path_runs(backend, vocab, targets):
    frame = tagged_frame({"environment": "sunny", "class_majority": "grass"}, key="cf")
    ps = generate_prompt_set(frame, targets, vocab, backend, 0, caption_fusion=True)
    assert len(ps.prompts) == 13
    again = generate_prompt_set(frame, targets, vocab, backend, 0, caption_fusion=True)
    assert ps.texts() == again.texts()


# -- regeneration cadence ------------------------------------------------------

def test_cadence_regenerates_once_per_window(backend, vocab, targets):
    frame = tagged_frame({"environment": "sunny"}, key="cad")
    cfg = PromptConfig(cadence=10)
    cache = None
    regens = 0
    for i in range(10):
        cache, regenerated = maybe_regenerate(
            cache, frame, targets, vocab, backend, i, cfg)
        regens += regenerated
        assert cache.frame_index == i
    assert regens == 1


def test_state_change_forces_regeneration(backend, vocab, targets):
    frame = tagged_frame({"environment": "sunny"}, key="force")
    cfg = PromptConfig(cadence=10)
    cache, _ = maybe_regenerate(None, frame, targets, vocab, backend, 0, cfg)
    _, regenerated = maybe_regenerate(cache, frame, targets, vocab, backend, 4, cfg,
                                      state_changed=True)
    assert regenerated


def test_cadence_one_always_regenerates(backend, vocab, targets):
    frame = tagged_frame({"environment": "sunny"}, key="c1")
    cfg = PromptConfig(cadence=1)
    cache = None
    for i in range(5):
        cache, regenerated = maybe_regenerate(
            cache, frame, targets, vocab, backend, i, cfg)
        assert regenerated


def test_bad_cadence_rejected(backend, vocab, targets):
    with pytest.raises(ValidationError):
        maybe_regenerate(None, None, targets, vocab, backend, 0, PromptConfig(cadence=0))


def test_prompt_set_ordering_invariant(backend, vocab, targets):
    frame = tagged_frame({"environment": "sunny"}, key="inv")
    ps = generate_prompt_set(frame, targets, vocab, backend, 0)
    with pytest.raises(ValidationError):
        PromptSet(prompts=tuple(reversed(ps.prompts)), x_count=6, y_count=7,
                  selection=ps.selection, frame_index=0).validate()
