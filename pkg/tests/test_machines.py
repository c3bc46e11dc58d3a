import itertools
import math

import numpy as np
import pytest

from raresage.data import Dataset
from raresage.errors import ConfigError, NotTrainedError, TrainingError, ValidationError
from raresage.labels import LabelSet, SuperLabel, validate_label_set
from raresage.machines import (Machine, MachineSpec, TrainConfig, load_machine, machine_entropy,
                               orchestrate, predict, save_machine, train)

CLASSES = ("Noise", "RSN", "SOZ")


def test_label_set_partition_ok():
    rep = validate_label_set([SuperLabel("NOISE", ["Noise"]), SuperLabel("NOTNOISE", ["RSN", "SOZ"])],
                             CLASSES)
    assert rep.ok and bool(rep)


def test_label_set_overlap_names_class():
    rep = validate_label_set([SuperLabel("X", ["Noise", "RSN"]), SuperLabel("Y", ["RSN", "SOZ"])],
                             CLASSES)
    assert not rep.ok
    assert any(rule == "mutual-exclusion" and "RSN" in text for rule, text in rep.violations)


def test_label_set_cover_lists_missing():
    rep = validate_label_set([SuperLabel("X", ["Noise"])], CLASSES)
    assert ("class-cover", "classes not covered: ['RSN', 'SOZ']") in rep.violations


def test_label_set_union_rule():
    rep = validate_label_set([SuperLabel("X", ["Noise", "RSN", "SOZ", "Ghost"])], CLASSES)
    assert [rule for rule, _ in rep.violations] == ["union-rule"]


def test_label_set_rules_exhaustive():
    # every way of giving each class (plus one stranger) a subset of three supers
    universe = CLASSES + ("Ghost",)
    for assignment in itertools.product(range(8), repeat=len(universe)):
        members = [[c for c, mask in zip(universe, assignment) if mask >> s & 1] for s in range(3)]
        supers = [SuperLabel(f"S{s}", m) for s, m in enumerate(members) if m]
        expected = (all(bin(a).count("1") <= 1 for a in assignment[:3])
                    and all(a != 0 for a in assignment[:3])
                    and assignment[3] == 0)
        assert validate_label_set(supers, CLASSES).ok == expected


def separable(n=40, seed=0):
    rng = np.random.default_rng(seed)
    left = np.column_stack([rng.uniform(-3, -0.1, n), rng.normal(size=n)])
    right = np.column_stack([rng.uniform(1.1, 4, n), rng.normal(size=n)])
    X = np.vstack([left, right])
    labels = ["L"] * n + ["R"] * n
    return Dataset([f"p{i}" for i in range(2 * n)], ["A"] * (2 * n), labels, X)


@pytest.mark.parametrize("kind", ["logistic", "svm_linear"])
def test_separable_training_accuracy(kind):
    ds = separable()
    m = train(kind, ds)
    assert m.accuracy(ds) == 1.0


def test_svm_far_point_is_confident():
    m = train("svm_linear", separable())
    assert m.decide([[25.0, 0.0]])[2][0] >= 0.9
    assert predict(m, [25.0, 0.0]).super_label == "R"


def test_single_super_is_training_error():
    ds = Dataset(["a", "b"], ["A", "A"], ["x", "x"], [[0.0], [1.0]])
    with pytest.raises(TrainingError):
        train("svm_linear", ds)
    empty = Dataset(["a", "b"], ["A", "A"], ["x", "x"], [[0.0], [1.0]], classes=["x", "y"])
    with pytest.raises(TrainingError):
        train("centroid", empty)


def test_centroid_nearest_mean():
    ds = Dataset(["a", "b"], ["A", "A"], ["A", "B"], [[0.0, 0.0], [10.0, 10.0]])
    m = train("centroid", ds)
    assert predict(m, [1.0, 1.0]).super_label == "A"
    top = predict(m, [0.0, 0.0])
    assert top.super_label == "A" and top.confidence > 0.5
    assert predict(m, [5.0, 5.0]).confidence == pytest.approx(0.5)


def test_untrained_and_dimension_errors():
    ls = LabelSet([SuperLabel("A", ["A"]), SuperLabel("B", ["B"])])
    with pytest.raises(NotTrainedError):
        Machine("centroid", ls).scores([[0.0]])
    m = train("centroid", separable())
    with pytest.raises(ValidationError, match="dimension mismatch"):
        m.scores([[0.0, 1.0, 2.0]])


def test_spec_parsing():
    s = MachineSpec.parse("svm_linear:identity@4-7+9")
    assert s.kind == "svm_linear" and s.feature_map == "identity"
    assert s.columns == (4, 5, 6, 7, 9)
    assert s.name == "svm_linear:identity@4-7+9"
    assert MachineSpec.parse("logistic").feature_map == "projection"
    assert MachineSpec.parse("centroid").feature_map == "standardize"
    with pytest.raises(ConfigError):
        MachineSpec.parse("forest")
    with pytest.raises(ConfigError):
        MachineSpec.parse("centroid:warp")


def test_machine_roundtrip_and_determinism(tmp_path):
    ds = separable(seed=3)
    a = train("svm_linear", ds, TrainConfig(seed=7))
    b = train("svm_linear", ds, TrainConfig(seed=7))
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k])
    path = str(tmp_path / "m.json")
    save_machine(a, path)
    back = load_machine(path)
    assert np.array_equal(back.scores(ds.X), a.scores(ds.X))


def rare_line_dataset():
    # column 0 is the raw rare class, column 1 its image under a spreading map
    X = [[0.0, 0.0], [1.0, 0.001], [3.0, 10.0], [8.0, 8.0], [9.0, 9.0], [10.0, 7.0]]
    return Dataset(list("abcdef"), ["A"] * 6, ["r", "r", "r", "o", "o", "o"], X)


def test_machine_entropy_identity_matches_class_entropy():
    from raresage.rarity import class_entropy
    ds = rare_line_dataset()
    m = train(MachineSpec("centroid", "identity"), ds)
    assert machine_entropy(m, ds, "r", K=1) == class_entropy(ds, "r", K=1)


def test_machine_entropy_and_orchestration():
    ds = rare_line_dataset()
    a = train(MachineSpec("centroid", "identity", (0,)), ds)
    b = train(MachineSpec("centroid", "identity", (1,)), ds)
    assert machine_entropy(a, ds, "r", K=1) == pytest.approx(1.5219, abs=1e-4)
    assert machine_entropy(b, ds, "r", K=1) == pytest.approx(1.0007, abs=1e-4)
    best, table = orchestrate([a, b], ds, "r", K=1)
    assert best is b and [name for name, _ in table] == ["centroid:identity@0", "centroid:identity@1"]
    assert orchestrate([a], ds, "r", K=1)[0] is a
    twin = train(MachineSpec("centroid", "identity", (0,)), ds)
    assert orchestrate([a, twin], ds, "r", K=1)[0] is a


def test_collapsing_map_gives_maximal_entropy():
    ds = Dataset(list("abcd"), ["A"] * 4, ["r", "r", "r", "o"],
                 [[0.0, 5.0], [1.0, 5.0], [3.0, 5.0], [9.0, 1.0]])
    m = train(MachineSpec("centroid", "identity", (1,)), ds)
    assert machine_entropy(m, ds, "r") == pytest.approx(math.log2(3))


def test_orchestrate_rejects_mixed_label_sets():
    ds = rare_line_dataset()
    a = train("centroid", ds)
    other = Dataset(list("abcdef"), ["A"] * 6, ["r", "r", "r", "q", "q", "q"], ds.X)
    b = train("centroid", other)
    with pytest.raises(ValidationError):
        orchestrate([a, b], ds, "r")
