import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import naive_theta
from raresage.data import Dataset
from raresage.errors import DegenerateClassError, ValidationError
from raresage.rarity import (EntropyProfile, class_centroid, class_entropy, entropy_of_points,
                             entropy_profile, find_overlap_class, identify_rare, knn_densities,
                             knn_density, most_similar)


def line_class():
    return Dataset(["a", "b", "c"], ["A"] * 3, ["c"] * 3, [[0.0], [1.0], [3.0]])


def test_density_nearest_neighbour():
    assert knn_density(line_class(), "c", 2, K=1) == pytest.approx(0.5)


def test_density_coincident_points_clamped():
    lam = knn_densities([[1.0, 1.0], [1.0, 1.0]], K=1)
    assert lam.tolist() == [1e12, 1e12]


def test_density_square_corners():
    # both nearest neighbours of a corner sit at the side length 2
    corners = [[1, 1], [1, -1], [-1, 1], [-1, -1]]
    lam = knn_densities(corners, K=2)
    assert np.allclose(lam, 0.5, rtol=0, atol=1e-15)
    # brute force over every pairwise distance gives the same value
    brute = []
    for i, p in enumerate(corners):
        d = sorted(math.dist(p, q) for j, q in enumerate(corners) if j != i)
        brute.append((1 / d[0] + 1 / d[1]) / 2)
    assert np.allclose(lam, brute)


def test_density_single_point_is_degenerate():
    with pytest.raises(DegenerateClassError):
        knn_densities([[0.0]], K=1)


def test_entropy_square_is_two_bits():
    assert entropy_of_points([[1, 1], [1, -1], [-1, 1], [-1, -1]], K=2) == pytest.approx(2.0)


def test_entropy_line_class():
    assert class_entropy(line_class(), "c", K=1) == pytest.approx(1.5219280948873621, abs=1e-12)
    assert naive_theta([[0], [1], [3]], K=1) == pytest.approx(1.5219280948873621, abs=1e-12)


def test_entropy_singleton_is_zero():
    assert entropy_of_points([[4.0, 2.0]]) == 0.0


def test_cosine_metric_matches_oracle():
    rng = np.random.default_rng(5)
    P = rng.normal(size=(30, 4))
    assert entropy_of_points(P, 5, "cosine") == pytest.approx(naive_theta(P, 5, "cosine"), abs=1e-9)


def test_unknown_metric():
    with pytest.raises(ValidationError):
        entropy_of_points([[0.0], [1.0]], 1, "manhattan")


def test_profile_on_given_thetas():
    prof = EntropyProfile.from_thetas({"Noise": 0.004, "RSN": 0.0046, "SOZ": 0.026})
    assert prof.mean == pytest.approx(0.0115333, abs=1e-6)
    assert prof.std == pytest.approx(0.01023, abs=1e-5)


def test_profile_degenerate_cases():
    same = Dataset(list("abcdef"), ["A"] * 6, list("xxxyyy"),
                   [[0.0], [1.0], [3.0], [0.0], [1.0], [3.0]])
    prof = entropy_profile(same, K=1)
    assert prof.std == 0.0
    assert identify_rare(prof).rare_classes == ()
    one = entropy_profile(line_class(), K=1)
    assert one.std == 0.0 and one.mean == one.thetas["c"]


def test_profile_empty_class():
    ds = Dataset(["a"], ["A"], ["x"], [[0.0]], classes=["x", "y"])
    with pytest.raises(ValidationError):
        entropy_profile(ds)


def test_identify_rare_given_thetas():
    v = identify_rare(EntropyProfile.from_thetas({"Noise": 0.004, "RSN": 0.0046, "SOZ": 0.026}), 1.0)
    assert v.rare_classes == ("SOZ",)


def test_identify_rare_arithmetic():
    prof = EntropyProfile.from_thetas({"a": 1.0, "b": 1.0, "c": 5.0})
    assert prof.mean == pytest.approx(7 / 3)
    assert prof.std == pytest.approx(1.8856, abs=1e-4)
    assert identify_rare(prof, 1.0).rare_classes == ("c",)


def test_identify_rare_all_equal():
    assert identify_rare(EntropyProfile.from_thetas({"a": 0.3, "b": 0.3, "c": 0.3})).rare_classes == ()


def test_centroids():
    ds = Dataset(list("abcde"), ["A"] * 5, list("xxyyy"),
                 [[0, 0], [2, 2], [1, 0], [0, 1], [-1, -1]])
    assert class_centroid(ds, "x").tolist() == [1.0, 1.0]
    assert np.allclose(class_centroid(ds, "y"), [0.0, 0.0])
    single = Dataset(["a"], ["A"], ["x"], [[3.0, 4.0]])
    assert class_centroid(single, "x").tolist() == [3.0, 4.0]


def test_overlap_from_similarities():
    assert most_similar({"Noise": 0.78, "RSN": 0.74}) == "Noise"
    assert most_similar({"A": 0.5, "B": 0.5}) == "A"


def test_overlap_orthogonal_centroids():
    s = 1 / math.sqrt(2)
    ds = Dataset(list("abc"), ["A"] * 3, ["rare", "A", "B"], [[1, 0], [0, 1], [s, s]])
    c_o, sims = find_overlap_class(ds, "rare")
    assert c_o == "B"
    assert sims["A"] == pytest.approx(0.0, abs=1e-15)
    assert sims["B"] == pytest.approx(0.7071, abs=1e-4)


def test_overlap_identical_centroid_wins():
    ds = Dataset(list("abc"), ["A"] * 3, ["rare", "A", "B"], [[1, 2], [0, 1], [2, 4]])
    c_o, sims = find_overlap_class(ds, "rare")
    assert c_o == "B" and sims["B"] == pytest.approx(1.0)


def test_overlap_zero_norm_centroid():
    ds = Dataset(list("abc"), ["A"] * 3, ["rare", "A", "A"], [[1, 0], [1, 1], [-1, -1]])
    with pytest.raises(ValidationError):
        find_overlap_class(ds, "rare")


points = st.integers(2, 40).flatmap(
    lambda n: arrays(np.float64, (n, 3), elements=st.floats(-50, 50, allow_nan=False, width=32)))


@settings(max_examples=60, deadline=None)
@given(points, st.integers(1, 12))
def test_entropy_bounds(P, K):
    theta = entropy_of_points(P, K)
    assert -1e-12 <= theta <= math.log2(len(P)) + 1e-9


@settings(max_examples=40, deadline=None)
@given(points, st.integers(1, 12))
def test_entropy_matches_oracle(P, K):
    assert abs(entropy_of_points(P, K) - naive_theta(P, K)) < 1e-9
