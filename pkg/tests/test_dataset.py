import numpy as np
import pytest

from dataset import (ClassStats, LabelMapping, class_coverage, class_stats_to_csv, compute_class_stats,
                     filter_by_coverage, load_label_mapping, select_classes, three_way_split, translate_labels)
from exceptions import EmptyInputError, ManifestError
from models import SemanticMap
from utils.rng import SeededRng


def _map(values, shape=None):
    arr = np.asarray(values)
    return SemanticMap(arr.reshape(shape) if shape else arr)


def _coverage_map(allowed_pixels, total=100):
    labels = np.full(total, 9)
    labels[:allowed_pixels] = 1
    return _map(labels, (10, total // 10))


# ----------------------------------------------------------------------------
# Class statistics
# ----------------------------------------------------------------------------
def test_class_stats_examples():
    stats = compute_class_stats([_map([1, 1, 2, 2], (2, 2))])
    assert stats.image_count == {1: 1, 2: 1} and stats.pixel_count == {1: 2, 2: 2}

    stats = compute_class_stats([_map(np.full((3, 5), 7)), _map(np.full((3, 5), 7))])
    assert stats.image_count == {7: 2} and stats.pixel_count == {7: 30} and stats.n_images == 2


def test_class_stats_recount_oracle():
    rs = np.random.RandomState(0)
    maps = [_map(rs.randint(0, 12, (rs.randint(1, 9), rs.randint(1, 9)))) for _ in range(50)]
    image_count, pixel_count = {}, {}
    for semantic in maps:
        seen = set()
        for label in semantic.labels.ravel().tolist():
            pixel_count[label] = pixel_count.get(label, 0) + 1
            seen.add(label)
        for label in seen:
            image_count[label] = image_count.get(label, 0) + 1
    stats = compute_class_stats(maps)
    assert stats.image_count == image_count and stats.pixel_count == pixel_count and stats.n_images == 50


def test_class_stats_merge_is_associative():
    a, b, c = (ClassStats.of_map(_map(np.full((2, 2), k))) for k in (1, 2, 1))
    assert a.merge(b).merge(c) == a.merge(b.merge(c))


def test_class_stats_empty():
    with pytest.raises(EmptyInputError):
        compute_class_stats([])


# ----------------------------------------------------------------------------
# Class selection and coverage
# ----------------------------------------------------------------------------
def test_select_coinciding_rankings():
    stats = ClassStats(n_images=9, image_count={1: 9, 2: 8, 3: 7, 4: 1}, pixel_count={1: 90, 2: 80, 3: 70, 4: 1})
    assert select_classes(stats, 3, 3) == {1, 2, 3}


def test_select_disjoint_top_lists():
    stats = ClassStats(n_images=9, image_count={1: 9, 2: 8, 3: 1, 4: 1}, pixel_count={1: 1, 2: 1, 3: 90, 4: 80})
    assert select_classes(stats, 2, 2) == {1, 2, 3, 4}


def test_select_union_of_five():
    stats = ClassStats(n_images=10,
                       image_count={1: 10, 2: 9, 3: 8, 4: 1, 5: 1, 6: 2},
                       pixel_count={1: 800, 2: 1, 3: 1, 4: 1000, 5: 900, 6: 5})
    assert select_classes(stats, 3, 3) == {1, 2, 3, 4, 5}


def test_select_ties_prefer_lower_id():
    stats = ClassStats(n_images=3, image_count={5: 3, 1: 3, 3: 3}, pixel_count={5: 1, 1: 1, 3: 1})
    assert select_classes(stats, 2, 1) == {1, 3}
    with pytest.raises(ValueError):
        select_classes(stats, 0, 1)


def test_select_size_bounds():
    rs = np.random.RandomState(4)
    for _ in range(100):
        n = rs.randint(12, 30)
        stats = ClassStats(n_images=50,
                           image_count={c: int(rs.randint(1, 51)) for c in range(n)},
                           pixel_count={c: int(rs.randint(1, 10000)) for c in range(n)})
        k_image, k_pixel = rs.randint(1, 6, size=2)
        selected = select_classes(stats, int(k_image), int(k_pixel))
        assert max(k_image, k_pixel) <= len(selected) <= k_image + k_pixel


def test_filter_by_coverage_boundary():
    pairs = [("all", _coverage_map(100)), ("ninety", _coverage_map(90)), ("eighty_nine", _coverage_map(89))]
    assert filter_by_coverage(pairs, {1}, 0.90) == ["all", "ninety"]
    assert class_coverage(_coverage_map(89), {1}) == 0.89


def test_filter_threshold_extremes():
    pairs = [("all", _coverage_map(100)), ("half", _coverage_map(50)), ("one", _coverage_map(1)),
             ("none", _coverage_map(0))]
    assert filter_by_coverage(pairs, {1}, 1.0) == ["all"]
    assert filter_by_coverage(pairs, {1}, 0.0) == ["all", "half", "one"]


def test_filter_never_keeps_zero_coverage():
    assert filter_by_coverage([("none", _coverage_map(0))], {1}, 0.0) == []
    with pytest.raises(ValueError):
        filter_by_coverage([], {1}, 1.5)


# ----------------------------------------------------------------------------
# Splitting
# ----------------------------------------------------------------------------
def test_split_exact_division():
    parts = three_way_split([f"id{i}" for i in range(9)], SeededRng(0))
    assert [len(p) for p in parts] == [3, 3, 3]
    assert sorted(sum(parts, [])) == sorted(f"id{i}" for i in range(9))


def test_split_remainder_rule():
    assert [len(p) for p in three_way_split([str(i) for i in range(10)], SeededRng(0))] == [4, 3, 3]
    assert [len(p) for p in three_way_split([str(i) for i in range(11)], SeededRng(0))] == [4, 4, 3]


def test_split_partitions_for_all_small_sizes():
    for n in range(3, 31):
        ids = [f"img{i}" for i in range(n)]
        parts = three_way_split(ids, SeededRng(n, "split"))
        flat = sum(parts, [])
        assert len(flat) == n and set(flat) == set(ids)
        assert max(len(p) for p in parts) - min(len(p) for p in parts) <= 1


def test_split_seed_dependence():
    ids = [f"img{i:04d}" for i in range(1000)]
    a = three_way_split(ids, SeededRng(1, "split"))
    b = three_way_split(ids, SeededRng(2, "split"))
    assert a != b
    assert a == three_way_split(ids, SeededRng(1, "split"))
    for parts in (a, b):
        assert sorted(sum(parts, [])) == ids


def test_split_errors():
    with pytest.raises(EmptyInputError):
        three_way_split(["a", "b"], SeededRng(0))
    with pytest.raises(ManifestError):
        three_way_split(["a", "a", "b"], SeededRng(0))


# ----------------------------------------------------------------------------
# Label translation
# ----------------------------------------------------------------------------
def test_translate_identity():
    semantic = _map(np.random.RandomState(2).randint(0, 6, (5, 5)))
    translated, tally = translate_labels(semantic, LabelMapping.identity(range(6)))
    assert translated == semantic and tally == {}


def test_translate_pointwise():
    translated, _ = translate_labels(_map(np.full((3, 3), 3)), LabelMapping(pairs={3: 12}))
    assert np.all(translated.labels == 12)


def test_translate_unmapped_class():
    translated, tally = translate_labels(_map([[3, 3], [40, 3]]), LabelMapping(pairs={3: 12}))
    assert translated.labels.tolist() == [[12, 12], [255, 12]]
    assert tally == {40: 1}


def test_load_label_mapping(tmp_path):
    path = tmp_path / "coco_to_ade.txt"
    path.write_text("# coco ade\n3 12\n7,  1\n\n40\t40  # identity\n", encoding="utf-8")
    assert load_label_mapping(path).pairs == {3: 12, 7: 1, 40: 40}

    path.write_text("3 12\n3 13\n", encoding="utf-8")
    with pytest.raises(ManifestError, match="duplicate"):
        load_label_mapping(path)
    path.write_text("3 12 5\n", encoding="utf-8")
    with pytest.raises(ManifestError, match="two columns"):
        load_label_mapping(path)


def test_class_stats_csv():
    stats = compute_class_stats([_map([[1, 2], [2, 2]])])
    assert class_stats_to_csv(stats, {2}) == "class_id,image_count,pixel_count,selected\n1,1,1,0\n2,1,3,1\n"
