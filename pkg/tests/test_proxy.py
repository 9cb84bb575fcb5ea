import json
from collections import Counter

import numpy as np
import pytest

from spatialcurate.proxy import (
    CANDIDATES,
    EmbeddingRecord,
    PromptGroup,
    bag_of_words_embedding,
    embed_groups,
    generate_groups,
    order_sensitive_oracle,
    read_embeddings,
    read_groups,
    report_from_counts,
    retrieve,
    similarity,
    winner,
    write_embeddings,
    write_groups,
)
from spatialcurate.reports import retrieval_table
from spatialcurate.synthetic import coco_category_names

COCO = coco_category_names()


@pytest.fixture(scope="module")
def paper_groups():
    return generate_groups(COCO, "paper")


def test_paper_mode_count(paper_groups):
    assert len(COCO) == 80
    assert len(paper_groups) == 6320
    assert [g.group_id for g in paper_groups] == list(range(6320))
    assert len({g.categories for g in paper_groups}) == 6320
    assert Counter(g.relation for g in paper_groups) == {"left": 1580, "right": 1580, "above": 1580, "below": 1580}


def test_full_mode_count():
    groups = generate_groups(["dog", "cat"], "full")
    assert len(groups) == 8
    assert len(generate_groups(COCO, "full")) == 25_280


def test_generate_errors():
    with pytest.raises(ValueError):
        generate_groups(["dog"])
    with pytest.raises(ValueError, match="duplicate"):
        generate_groups(["dog", "cat", "dog"])
    with pytest.raises(ValueError):
        generate_groups(["dog", "cat"], "half")


def test_dog_cat_variations():
    g = PromptGroup.build(0, "dog", "cat", "left")
    assert g.base == "a dog to the left of a cat"
    assert g.rephrased == "a cat to the right of a dog"
    assert g.negated == "a dog to the right of a cat"
    assert g.swapped == "a cat to the left of a dog"


def test_vertical_variations_and_articles():
    g = PromptGroup.build(0, "apple", "oven", "above")
    assert (g.base, g.rephrased, g.negated, g.swapped) == (
        "an apple above an oven",
        "an oven below an apple",
        "an apple below an oven",
        "an oven above an apple",
    )


def test_groups_round_trip(tmp_path, paper_groups):
    p = tmp_path / "prompts.jsonl"
    assert write_groups(paper_groups[:50], p) == 50
    assert read_groups(p) == paper_groups[:50]


def _vectors(base, reph, neg, swap):
    return {k: np.asarray(v, dtype=np.float64) for k, v in zip(("base", "rephrased", "negated", "swapped"), (base, reph, neg, swap))}


def test_winner_examples():
    assert winner(_vectors([1, 0], [1, 0], [0, 1], [-1, 0])) == "rephrased"
    assert winner(_vectors([1, 0], [0, 1], [1, 1], [-1, 0])) == "negated"
    # three-way tie resolves to the first candidate
    assert winner(_vectors([1, 0], [0, 1], [0, 1], [0, 1])) == "rephrased"
    assert winner(_vectors([1, 0], [0, 1], [0, 2], [0, 3])) == "rephrased"
    assert winner(_vectors([1, 0], [0, 1], [0, 2], [0, 3]), metric="dot") == "rephrased"
    assert winner(_vectors([1, 0], [0, 1], [1, 0.1], [5, 5]), metric="dot") == "swapped"
    assert winner(_vectors([1, 0], [0, 1], [1, 0.1], [5, 5]), metric="euclidean") == "negated"


def test_similarity_examples():
    assert similarity([1, 0], [1, 0]) == 1.0
    assert similarity([1, 0], [0, 1]) == 0.0
    assert similarity([1, 1], [-1, -1]) == pytest.approx(-1.0, abs=1e-15)
    with pytest.raises(ValueError):
        similarity([1], [1], "manhattan")


def test_bag_of_words_swapped_is_identical_to_base(paper_groups):
    for g in paper_groups[:200]:
        assert np.array_equal(bag_of_words_embedding(g.base), bag_of_words_embedding(g.swapped))
        assert np.array_equal(bag_of_words_embedding(g.rephrased), bag_of_words_embedding(g.negated))


def test_bag_of_words_correct_rate_is_zero(paper_groups):
    rep = retrieve(paper_groups, embed_groups(paper_groups, bag_of_words_embedding, 64))
    assert rep.groups_evaluated == 6320 and rep.skipped == 0
    assert rep.counts == {"rephrased": 0, "negated": 0, "swapped": 6320}
    assert rep.correct_rate == 0.0


def test_order_sensitive_oracle(paper_groups):
    v = order_sensitive_oracle("a dog to the left of a cat", 8)
    assert np.array_equal(v, order_sensitive_oracle("a dog to the left of a cat", 8))
    assert not np.allclose(v, order_sensitive_oracle("a cat to the left of a dog", 8))
    with pytest.raises(ValueError):
        order_sensitive_oracle("a dog", 4)
    rep = retrieve(paper_groups, embed_groups(paper_groups, order_sensitive_oracle, 8))
    assert sum(rep.counts.values()) == rep.groups_evaluated == 6320
    assert rep.correct_rate > 0
    assert rep.counts["swapped"] < 6320


def test_cosine_argmax_scale_invariant(paper_groups):
    rng = np.random.default_rng(0)
    recs = embed_groups(paper_groups[:1500], order_sensitive_oracle, 8)
    by_group = {}
    for r in recs:
        by_group.setdefault(r.group_id, {})[r.variant] = r.vector
    for vecs in by_group.values():
        scaled = {k: v * np.float32(rng.uniform(0.01, 100.0)) for k, v in vecs.items()}
        assert winner(vecs) == winner(scaled)


def test_skipped_groups(paper_groups):
    groups = paper_groups[:3]
    recs = embed_groups(groups, bag_of_words_embedding, 16)
    recs = [r for r in recs if not (r.group_id == 0 and r.variant == "negated")]
    recs = [EmbeddingRecord(r.group_id, r.variant, np.zeros(16, np.float32)) if r.group_id == 1 else r for r in recs]
    rep = retrieve(groups, recs)
    assert rep.skipped == 2 and rep.groups_evaluated == 1
    assert sum(rep.counts.values()) + rep.skipped == len(groups)


def test_paper_row_shape():
    rep = report_from_counts(1, 5088, 1231)
    assert rep.groups_evaluated == 6320
    assert rep.correct_rate == pytest.approx(1 / 6320)
    assert "0.02%" in retrieval_table({"CLIP ViT-L": rep.as_dict()})


def test_embeddings_file_round_trip(tmp_path, paper_groups):
    p = tmp_path / "emb.jsonl"
    recs = embed_groups(paper_groups[:10], bag_of_words_embedding, 32)
    assert write_embeddings(recs, p) == 40
    back = list(read_embeddings(p))
    assert [(r.group_id, r.variant) for r in back] == [(r.group_id, r.variant) for r in recs]
    assert all(np.array_equal(a.vector, b.vector) for a, b in zip(back, recs))


@pytest.mark.parametrize(
    "lines,match",
    [
        ([{"group_id": 0, "variant": "base", "vector": [1, 2]}, {"group_id": 0, "variant": "swapped", "vector": [1]}], "dimension"),
        ([{"group_id": 0, "variant": "base", "vector": [1, float("nan")]}], "finite"),
        ([{"group_id": 0, "variant": "other", "vector": [1]}], "variant"),
    ],
)
def test_bad_embeddings(tmp_path, lines, match):
    p = tmp_path / "bad.jsonl"
    p.write_text("\n".join(json.dumps(l) for l in lines))
    with pytest.raises(ValueError, match=match):
        list(read_embeddings(p))


def test_candidates_order():
    assert CANDIDATES == ("rephrased", "negated", "swapped")
