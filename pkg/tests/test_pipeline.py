import itertools

import numpy as np
import pytest

from raresage.data import Dataset
from raresage.errors import ConfigError, NoRareClassError, ValidationError
from raresage.machines import Prediction
from raresage.pipeline import (NONRARE, NOT_OVERLAP, OVERLAP, RARE, PipelineConfig, fit, fuse,
                               load_model, model_to_json, plan_stage, predict_label,
                               read_pipeline_config, save_model)
from raresage.rarity import class_centroid, cosine_similarity, entropy_profile
from raresage.synthgen import ClassSpec, DomainSpec, dr_spec, gen_domains, sdg_spec

SDG_CFG = PipelineConfig(dl_roster=("centroid@0-3", "logistic@0-3", "svm_linear@0-3"),
                         k_roster=("svm_linear@4-7",), rarity_columns=(0, 1, 2, 3))


def test_config_validation():
    for bad in ({"t_c": 0.0}, {"t_c": 1.2}, {"max_stages": 0}, {"multiplier": 0},
                {"K": 0}, {"dl_roster": ()}, {"metric": "taxicab"}):
        with pytest.raises(ConfigError):
            PipelineConfig(**bad)
    assert PipelineConfig(t_c=1.0).t_c == 1.0


def test_config_roundtrip_and_file(tmp_path):
    cfg = PipelineConfig(K=7, t_c=0.8, seed=4, rarity_columns=(0, 1))
    assert PipelineConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()
    path = tmp_path / "run.cfg"
    path.write_text("[pipeline]\nk = 5\nt_c = 0.85\ndl_roster = centroid, svm_linear@0-1\n"
                    "rarity_columns = 0-1\n[train]\nepochs = 10\n")
    got = read_pipeline_config(str(path), seed=9)
    assert (got.K, got.t_c, got.seed, got.train.epochs) == (5, 0.85, 9, 10)
    assert [s.name for s in got.dl_roster] == ["centroid", "svm_linear@0-1"]
    path.write_text("[pipeline]\nt_c = lots\n")
    with pytest.raises(ConfigError):
        read_pipeline_config(str(path))


def test_fuse_examples():
    assert fuse(OVERLAP, Prediction(RARE, 0.95), 0.9, "SOZ", "Noise", "RSN") == "SOZ"
    assert fuse(OVERLAP, Prediction(RARE, 0.50), 0.9, "SOZ", "Noise", "RSN") == "Noise"
    assert fuse(NOT_OVERLAP, Prediction(NONRARE, 0.2), 0.9, "SOZ", "Noise", "RSN") == "RSN"
    assert fuse(OVERLAP, Prediction(RARE, 0.9), 0.9) == OVERLAP
    with pytest.raises(ValidationError):
        fuse("MAYBE", Prediction(RARE, 0.99), 0.9)


def test_fuse_table():
    grid = [0.0, 0.5, 0.89, 0.9, 0.900001, 0.95, 1.0]
    for dl, eke, conf in itertools.product((OVERLAP, NOT_OVERLAP), (RARE, NONRARE), grid):
        got = fuse(dl, Prediction(eke, conf), 0.9, "r", "o", "n")
        if dl == OVERLAP:
            expected = "r" if (eke == RARE and conf > 0.9) else "o"
        else:
            expected = "r" if eke == RARE else "n"
        assert got == expected


def designed_three_class(seed=0):
    spec = DomainSpec((
        ClassSpec("A", 40, (6.0, 1.0), scale=0.5),
        ClassSpec("B", 40, (0.0, 6.0), scale=0.5),
        ClassSpec("C", 160, (6.0, 2.0), scale=0.5),
    ), dim=2, seed=seed)
    return gen_domains(spec)[0]


def test_plan_stage_designed_set():
    ds = designed_three_class()
    th = entropy_profile(ds).thetas
    assert th["C"] > th["A"] and th["C"] > th["B"]
    sims = {c: cosine_similarity(class_centroid(ds, "C"), class_centroid(ds, c)) for c in "AB"}
    assert sims["A"] > sims["B"]
    plan = plan_stage(ds, PipelineConfig())
    assert (plan.rare, plan.overlap) == ("C", "A")


def test_plan_stage_two_classes():
    spec = DomainSpec((ClassSpec("big", 200, (0.0, 0.0), scale=1.0),
                       ClassSpec("small", 12, (3.0, 3.0), scale=1.0)), dim=2, seed=1)
    ds = gen_domains(spec)[0]
    prof = entropy_profile(ds)
    assert prof.thetas["small"] < prof.thetas["big"]
    # with two classes each deviation equals the population std, so the
    # default multiplier never fires
    with pytest.raises(NoRareClassError):
        plan_stage(ds, PipelineConfig())
    plan = plan_stage(ds, PipelineConfig(multiplier=0.5))
    assert {plan.rare, plan.overlap} == {"big", "small"}
    assert plan.rare != plan.overlap


def test_all_equal_entropy_is_no_rare():
    X = np.array([[0.0], [1.0], [3.0]] * 3) + np.repeat([0.0, 10.0, 20.0], 3)[:, None]
    ds = Dataset([f"p{i}" for i in range(9)], ["A"] * 9, list("xxxyyyzzz"), X)
    with pytest.raises(NoRareClassError):
        plan_stage(ds, PipelineConfig())
    model = fit(ds)
    assert model.stages == () and model.rare_class is None
    assert predict_label(model, [10.5]) == model.residual.predict_many([[10.5]])[0].super_label


def test_sdg_one_stage():
    A, _ = gen_domains(sdg_spec(0))
    model = fit(A, SDG_CFG)
    assert [(s.rare, s.overlap) for s in model.stages] == [("SOZ", "Noise")]
    assert set(model.residual.label_set.names) == {"Noise", "RSN"}


def test_dr_stage_sequence():
    A, _ = gen_domains(dr_spec(0))
    assert [s.rare for s in fit(A).stages] == ["4", "3", "2"]
    assert [s.rare for s in fit(A, PipelineConfig(max_stages=2)).stages] == ["4", "3"]


def manual_predict(model, x, t_c):
    """Walk the stages one observation at a time through :func:`fuse`."""
    for st in model.stages:
        dl = st.dl_machine.predict_many(x[None, :])[0].super_label
        eke = st.k_machine.predict_many(x[None, :])[0]
        out = fuse(dl, eke, t_c, st.rare, st.overlap, NONRARE)
        if out != NONRARE:
            return out
    return model.residual.predict_many(x[None, :])[0].super_label


@pytest.mark.parametrize("t_c", [0.5, 0.9, 1.0])
def test_trace_matches_stagewise_fusion(t_c):
    A, B = gen_domains(sdg_spec(2))
    model = fit(A, SDG_CFG)
    fast = model.predict(B.X, t_c)
    assert fast.tolist() == [manual_predict(model, x, t_c) for x in B.X]
    A, B = gen_domains(dr_spec(2))
    model = fit(A)
    assert model.predict(B.X[:150], t_c).tolist() == [manual_predict(model, x, t_c) for x in B.X[:150]]


def test_constructed_points():
    A, _ = gen_domains(sdg_spec(0))
    model = fit(A, SDG_CFG)
    soz = class_centroid(A, "SOZ")
    assert predict_label(model, soz) == "SOZ"
    # deep in Noise territory with Noise-like knowledge: overlap call stands
    noise = class_centroid(A, "Noise")
    st = model.stages[0]
    assert st.dl_machine.predict_many(noise[None, :])[0].super_label == OVERLAP
    assert st.k_machine.predict_many(noise[None, :])[0].super_label == NONRARE
    assert predict_label(model, noise) == "Noise"


def test_model_roundtrip(tmp_path):
    A, B = gen_domains(sdg_spec(1))
    model = fit(A, SDG_CFG)
    path = tmp_path / "model.txt"
    save_model(model, str(path))
    back = load_model(str(path))
    assert model_to_json(back) == path.read_text()
    assert back.predict(B.X).tolist() == model.predict(B.X).tolist()
    with pytest.raises(ValidationError, match="dimension mismatch"):
        back.predict(B.X[:, :3])


def test_fit_is_deterministic():
    A, _ = gen_domains(sdg_spec(5))
    assert model_to_json(fit(A, SDG_CFG)) == model_to_json(fit(A, SDG_CFG))
