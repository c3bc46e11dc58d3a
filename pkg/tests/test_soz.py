import itertools
import json

import numpy as np
import pytest

from oracles import kappa_direct
from raresage.errors import FormatError, TrainingError, ValidationError
from raresage.knowledge.soz import (PROPOSITIONS, PropositionVector, Scene, Thresholds,
                                    ablate_propositions, eke_dataset, evaluate_propositions,
                                    kappa_soz, load_scene, region_fraction, render_scene,
                                    save_scene, scene_to_json, train_eke, voxel_centers)
from raresage.synthgen import SceneSpec, gen_scene, gen_scenes


def pv(*bits):
    return PropositionVector(*bits)


def test_kappa_examples():
    assert kappa_soz(pv(True, False, True, True, False, False))
    assert not kappa_soz(pv(True, False, True, True, True, False))
    assert kappa_soz(pv(True, False, True, True, True, True))


def test_kappa_all_assignments():
    for bits in itertools.product([False, True], repeat=6):
        assert kappa_soz(pv(*bits)) == kappa_direct(*bits)


def test_voxel_centers():
    assert voxel_centers([(0, 0), (2, 5)]).tolist() == [[1.0, 1.0], [7.0, 16.0]]


def test_region_fraction_cases():
    box = [[(0, 0), (21, 0), (21, 30), (0, 30)]]
    assert region_fraction([(1, 1), (2, 2)], box) == 1.0
    assert region_fraction([(20, 20), (21, 20)], box) == 0.0
    # centers at x = 1, 4, ..., 19 fall inside; 22, 25, 28 do not
    straddle = [(i, 3) for i in range(10)]
    assert region_fraction(straddle, box) == pytest.approx(0.7)
    with pytest.raises(ValidationError):
        region_fraction([], box)


def test_soz_scene_propositions():
    got = evaluate_propositions(gen_scene(SceneSpec("soz", seed=0)))
    assert got.booleans() == (True, False, True, True, False, False)
    assert kappa_soz(got)


def test_rsn_scene_has_several_clusters():
    for seed in range(5):
        got = evaluate_propositions(gen_scene(SceneSpec("rsn", seed=seed)))
        assert got.cluster_count >= 2 and not got.p1


def test_two_clusters_break_p1():
    base = gen_scene(SceneSpec("soz", seed=1))
    left = [(x, y) for x in range(22, 35) for y in range(34, 47)]
    right = [(x + 24, y) for x, y in left]
    scene = Scene(base.width, base.height, base.brain, base.gray, base.white, base.vascular,
                  tuple(left + right), base.bold)
    got = evaluate_propositions(scene)
    assert got.cluster_count == 2 and not got.p1


def test_empty_activation():
    base = gen_scene(SceneSpec("soz", seed=2))
    scene = Scene(base.width, base.height, base.brain, base.gray, base.white, base.vascular,
                  (), base.bold)
    got = evaluate_propositions(scene)
    assert got.booleans()[:3] == (False, False, False)
    assert (got.gray_fraction, got.white_fraction, got.vascular_fraction) == (0.0, 0.0, 0.0)


def test_thresholds_change_verdicts():
    scene = gen_scene(SceneSpec("soz", seed=3))
    assert not evaluate_propositions(scene, Thresholds(min_size=10_000)).p1
    assert not evaluate_propositions(scene, Thresholds(wavelet=0.999)).pa
    with pytest.raises(ValidationError):
        Thresholds.from_mapping({"grey": 0.5})


def test_evaluation_is_deterministic():
    scene = gen_scene(SceneSpec("noise", seed=4))
    assert evaluate_propositions(scene) == evaluate_propositions(scene)


def corpus(n=12, seed=0):
    scenes = [s for kind in ("soz", "rsn", "noise") for s in gen_scenes(kind, n, seed)]
    return scenes, [kappa_soz(evaluate_propositions(s)) for s in scenes]


def test_eke_separates_kappa_labels():
    scenes, labels = corpus()
    assert 0 < sum(labels) < len(labels)
    ds = eke_dataset(scenes, labels)
    assert train_eke(scenes, labels).accuracy(ds) == 1.0
    flipped = [not lb for lb in labels]
    assert train_eke(scenes, flipped).accuracy(eke_dataset(scenes, flipped)) == 1.0
    assert train_eke(scenes, labels, boolean_only=True).accuracy(
        eke_dataset(scenes, labels, boolean_only=True)) == 1.0


def test_eke_single_label():
    scenes = gen_scenes("soz", 3)
    with pytest.raises(TrainingError):
        train_eke(scenes, [True] * 3)


def test_ablation_keys():
    scenes, labels = corpus(6)
    test_scenes, test_labels = corpus(4, seed=100)
    out = ablate_propositions(scenes, labels, test_scenes, test_labels)
    assert list(out) == ["none", *PROPOSITIONS]
    assert all(0.0 <= v <= 1.0 for v in out.values())


def test_scene_file_roundtrip(tmp_path):
    scene = gen_scene(SceneSpec("soz", seed=5))
    path = tmp_path / "s.json"
    save_scene(scene, str(path))
    back = load_scene(str(path))
    assert scene_to_json(back) == path.read_text()
    assert evaluate_propositions(back) == evaluate_propositions(scene)


def test_scene_bold_from_csv(tmp_path):
    scene = gen_scene(SceneSpec("soz", seed=6))
    d = json.loads(scene_to_json(scene))
    (tmp_path / "bold.csv").write_text("bold\n" + "\n".join(repr(v) for v in d["bold"]) + "\n")
    d["bold"] = "bold.csv"
    (tmp_path / "s.json").write_text(json.dumps(d))
    assert np.array_equal(load_scene(str(tmp_path / "s.json")).bold, scene.bold)


def test_malformed_scene(tmp_path):
    (tmp_path / "bad.json").write_text('{"width": 30}')
    with pytest.raises(FormatError):
        load_scene(str(tmp_path / "bad.json"))
    (tmp_path / "worse.json").write_text("{not json")
    with pytest.raises(FormatError):
        load_scene(str(tmp_path / "worse.json"))


def test_voxel_outside_grid():
    base = gen_scene(SceneSpec("soz", seed=0))
    scene = Scene(base.width, base.height, base.brain, activation=((500, 0),), bold=base.bold)
    with pytest.raises(ValidationError):
        scene.validate()


def test_render_then_extract_contour():
    from raresage.knowledge.geometry import extract_brain_contour, winding_numbers
    scene = gen_scene(SceneSpec("rsn", seed=7))
    poly = extract_brain_contour(render_scene(scene))
    inner = voxel_centers(scene.activation)
    assert np.all(winding_numbers(inner, poly) != 0)
