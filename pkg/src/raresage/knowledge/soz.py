"""Seizure-onset-zone knowledge: scenes, atomic propositions and the EKE.

A scene is one brain slice: region polygons in pixel coordinates, activated
voxels (3x3-pixel cells) and the component's BOLD time course.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from ..data import Dataset, format_float, write_text_atomic
from ..errors import FormatError, UndefinedSparsityError, ValidationError
from ..labels import LabelSet
from ..machines import Machine, MachineSpec, TrainConfig, train
from .clustering import Cluster, cluster_activation
from .geometry import as_polygon, inside_any, is_simple, polygon_mask
from .sparsity import MIN_LENGTH, sine_sparsity, wavelet_sparsity

VOXEL = 3
RARE, NONRARE = "RARE", "NONRARE"
PROPOSITIONS = ("p1", "ps", "pa", "pg", "pw", "pv")
RAW_FEATURES = ("cluster_count", "gini_sine", "gini_wavelet",
                "gray_fraction", "white_fraction", "vascular_fraction")


@dataclass(frozen=True, eq=False)
class Scene:
    width: int
    height: int
    brain: tuple
    gray: tuple = ()
    white: tuple = ()
    vascular: tuple = ()
    activation: tuple = ()
    bold: np.ndarray = field(default_factory=lambda: np.zeros(MIN_LENGTH))

    def validate(self, check_simple: bool = True) -> "Scene":
        if self.width < VOXEL or self.height < VOXEL:
            raise ValidationError("scene grid smaller than one voxel")
        polys = [self.brain, *self.gray, *self.white, *self.vascular]
        for poly in polys:
            as_polygon(poly)
            if check_simple and not is_simple(poly):
                raise ValidationError("scene polygon is self-intersecting")
        nx, ny = self.width // VOXEL, self.height // VOXEL
        for vx, vy in self.activation:
            if not (0 <= vx < nx and 0 <= vy < ny):
                raise ValidationError(f"voxel ({vx}, {vy}) outside the {nx}x{ny} voxel grid")
        bold = np.asarray(self.bold, dtype=float)
        if bold.size < MIN_LENGTH or not np.all(np.isfinite(bold)):
            raise ValidationError(f"BOLD needs >= {MIN_LENGTH} finite samples")
        return self


def voxel_centers(voxels) -> np.ndarray:
    """Pixel center of each voxel's middle pixel."""
    v = np.asarray(list(voxels), dtype=float).reshape(-1, 2)
    return VOXEL * v + (VOXEL // 2)


def region_fraction(cluster: Cluster | Sequence[Sequence[int]], region: Sequence) -> float:
    voxels = cluster.voxels if isinstance(cluster, Cluster) else list(cluster)
    if len(voxels) == 0:
        raise ValidationError("region fraction of an empty cluster")
    if len(region) == 0:
        return 0.0
    return float(np.mean(inside_any(voxel_centers(voxels), region)))


@dataclass(frozen=True)
class Thresholds:
    gray: float = 0.5
    white: float = 0.1
    vascular: float = 0.1
    sine: float = 0.6
    wavelet: float = 0.6
    eps: float = 1
    min_pts: int = 2
    min_size: int = 135

    @classmethod
    def from_mapping(cls, values: dict) -> "Thresholds":
        names = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, val in values.items():
            if key not in names:
                raise ValidationError(f"unknown threshold {key!r}")
            kwargs[key] = int(val) if key in ("min_pts", "min_size") else float(val)
        return cls(**kwargs)


@dataclass(frozen=True)
class PropositionVector:
    p1: bool
    ps: bool
    pa: bool
    pg: bool
    pw: bool
    pv: bool
    cluster_count: int = 0
    gini_sine: float = 0.0
    gini_wavelet: float = 0.0
    gray_fraction: float = 0.0
    white_fraction: float = 0.0
    vascular_fraction: float = 0.0

    def booleans(self) -> tuple[bool, ...]:
        return tuple(getattr(self, p) for p in PROPOSITIONS)

    def raw(self) -> tuple[float, ...]:
        return tuple(float(getattr(self, r)) for r in RAW_FEATURES)

    def features(self, boolean_only: bool = False) -> np.ndarray:
        bits = [1.0 if b else 0.0 for b in self.booleans()]
        return np.array(bits if boolean_only else bits + list(self.raw()))


def evaluate_propositions(scene: Scene, thresholds: Thresholds | None = None) -> PropositionVector:
    """Atomic proposition valuations for one scene.

    Region fractions use the voxels of clusters that survive the weak-cluster
    filter (all activated voxels when none survive).  Without activation the
    sparsity tests are skipped and read false; a signal with no detail or
    spectral energy is likewise not sparse-assessable.
    """
    th = thresholds or Thresholds()
    clusters = cluster_activation(scene.activation, th.eps, th.min_pts, th.min_size)
    if clusters:
        voxels = [v for c in clusters for v in c.voxels]
    else:
        voxels = list(dict.fromkeys(tuple(v) for v in scene.activation))

    p1 = False
    if len(clusters) == 1:
        p1 = bool(np.all(inside_any(voxel_centers(clusters[0].voxels), [scene.brain])))

    if voxels:
        gray = region_fraction(voxels, scene.gray)
        white = region_fraction(voxels, scene.white)
        vasc = region_fraction(voxels, scene.vascular)
        try:
            g_sine = sine_sparsity(scene.bold)
        except UndefinedSparsityError:
            g_sine = None
        try:
            g_wave = wavelet_sparsity(scene.bold)
        except UndefinedSparsityError:
            g_wave = None
    else:
        gray = white = vasc = 0.0
        g_sine = g_wave = None

    return PropositionVector(
        p1=p1,
        ps=g_sine is not None and g_sine >= th.sine,
        pa=g_wave is not None and g_wave >= th.wavelet,
        pg=gray >= th.gray,
        pw=white >= th.white,
        pv=vasc >= th.vascular,
        cluster_count=len(clusters),
        gini_sine=0.0 if g_sine is None else g_sine,
        gini_wavelet=0.0 if g_wave is None else g_wave,
        gray_fraction=gray,
        white_fraction=white,
        vascular_fraction=vasc,
    )


def kappa_soz(pv: PropositionVector) -> bool:
    """Expert rule for SOZ components."""
    return bool(pv.p1 and not pv.ps and pv.pa
                and (pv.pg and (not pv.pw or (pv.pw and pv.pv))))


def eke_dataset(scenes: Sequence[Scene], labels: Sequence[bool],
                thresholds: Thresholds | None = None, boolean_only: bool = False) -> Dataset:
    """Proposition features (booleans, then raw values) labelled RARE / NONRARE."""
    if len(scenes) != len(labels):
        raise ValidationError("scenes and labels differ in length")
    feats = [evaluate_propositions(s, thresholds).features(boolean_only) for s in scenes]
    names = [RARE if lb else NONRARE for lb in labels]
    return Dataset([f"scene-{i}" for i in range(len(scenes))], ["eke"] * len(scenes),
                   names, np.array(feats), (RARE, NONRARE))


def train_eke(scenes: Sequence[Scene], labels: Sequence[bool],
              thresholds: Thresholds | None = None, config: TrainConfig | None = None,
              boolean_only: bool = False) -> Machine:
    """Linear SVM over proposition valuations (the expert knowledge extractor)."""
    ds = eke_dataset(scenes, labels, thresholds, boolean_only)
    label_set = LabelSet.binary(RARE, [RARE], NONRARE, [NONRARE])
    return train(MachineSpec("svm_linear"), ds, config, label_set)


def ablate_propositions(train_scenes, train_labels, test_scenes, test_labels,
                        thresholds: Thresholds | None = None,
                        config: TrainConfig | None = None) -> dict[str, float]:
    """Test accuracy of the EKE with each proposition (and its raw feature) removed.

    The ``"none"`` entry is the full model.
    """
    full_train = eke_dataset(train_scenes, train_labels, thresholds)
    full_test = eke_dataset(test_scenes, test_labels, thresholds)
    label_set = LabelSet.binary(RARE, [RARE], NONRARE, [NONRARE])
    width = len(PROPOSITIONS)
    results = {}
    for name in ("none",) + PROPOSITIONS:
        if name == "none":
            cols = list(range(2 * width))
        else:
            j = PROPOSITIONS.index(name)
            # raw features are stored in proposition order
            cols = [c for c in range(2 * width) if c not in (j, width + j)]
        spec = MachineSpec("svm_linear", columns=tuple(cols))
        m = train(spec, full_train, config, label_set)
        results[name] = m.accuracy(full_test)
    return results


def scene_to_json(scene: Scene) -> str:
    def num(v):
        return format_float(v)

    def poly_text(poly):
        return "[" + ",".join(f"[{num(x)},{num(y)}]" for x, y in poly) + "]"

    def polys_text(polys):
        return "[" + ",".join(poly_text(p) for p in polys) + "]"

    parts = [
        f'"width":{int(scene.width)}',
        f'"height":{int(scene.height)}',
        f'"brain":{poly_text(scene.brain)}',
        f'"gray":{polys_text(scene.gray)}',
        f'"white":{polys_text(scene.white)}',
        f'"vascular":{polys_text(scene.vascular)}',
        '"activation":[' + ",".join(f"[{int(x)},{int(y)}]" for x, y in scene.activation) + "]",
        '"bold":[' + ",".join(num(v) for v in np.asarray(scene.bold)) + "]",
    ]
    return "{\n" + ",\n".join(parts) + "\n}\n"


def save_scene(scene: Scene, path) -> None:
    write_text_atomic(path, scene_to_json(scene))


def scene_from_dict(d: dict, base_dir: str = ".") -> Scene:
    try:
        bold = d["bold"]
        if isinstance(bold, str):
            with open(os.path.join(base_dir, bold), encoding="utf-8") as fh:
                bold = [float(line.split(",")[0]) for line in fh if line.strip()
                        and not line.strip().lower().startswith("bold")]
        scene = Scene(
            width=int(d["width"]),
            height=int(d["height"]),
            brain=tuple(tuple(p) for p in d["brain"]),
            gray=tuple(tuple(tuple(p) for p in poly) for poly in d.get("gray", [])),
            white=tuple(tuple(tuple(p) for p in poly) for poly in d.get("white", [])),
            vascular=tuple(tuple(tuple(p) for p in poly) for poly in d.get("vascular", [])),
            activation=tuple((int(v[0]), int(v[1])) for v in d.get("activation", [])),
            bold=np.array(bold, dtype=float),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed scene: {exc}") from None
    return scene.validate()


def load_scene(path) -> Scene:
    if not os.path.exists(path):
        raise FileNotFoundError(f"scene file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from None
    return scene_from_dict(d, os.path.dirname(os.path.abspath(path)))


def render_scene(scene: Scene, background: float = 0.0) -> np.ndarray:
    """Grayscale slice: brain tissue bright, white matter brighter, outside dark."""
    img = np.full((scene.height, scene.width), background, dtype=float)
    img[polygon_mask(scene.brain, scene.width, scene.height)] = 0.6
    for poly in scene.white:
        img[polygon_mask(poly, scene.width, scene.height)] = 0.9
    return img
