"""Deterministic synthetic embeddings, BOLD signals and SOZ-style scenes.

Everything here is a pure function of its spec and seed, drawn from
:class:`raresage.rng.XorShift64Star`.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigError, ValidationError
from .knowledge.soz import VOXEL, Scene
from .rng import XorShift64Star

# ---------------------------------------------------------------- embeddings


@dataclass(frozen=True)
class ClassSpec:
    name: str
    count: int
    mean: tuple[float, ...]
    scale: float | tuple[float, ...] = 1.0
    modes: int = 1
    mode_spread: float = 3.0
    mode_dims: tuple[int, ...] | None = None
    shift: tuple[float, ...] | None = None
    cov_multiplier: float = 1.0


@dataclass(frozen=True)
class DomainSpec:
    classes: tuple[ClassSpec, ...]
    dim: int
    seed: int = 0
    domains: tuple[str, str] = ("A", "B")

    def validate(self) -> "DomainSpec":
        if self.dim < 2:
            raise ConfigError("dim must be >= 2")
        if not self.classes:
            raise ConfigError("domain spec has no classes")
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise ConfigError("class names must be unique")
        for c in self.classes:
            if c.count < 1:
                raise ConfigError(f"class {c.name}: count must be >= 1")
            scale = np.atleast_1d(np.asarray(c.scale, dtype=float))
            if scale.size not in (1, self.dim):
                raise ConfigError(f"class {c.name}: scale needs 1 or {self.dim} entries")
            if np.any(scale <= 0) or c.cov_multiplier <= 0:
                raise ConfigError(f"class {c.name}: scales must be positive")
            if c.modes < 1:
                raise ConfigError(f"class {c.name}: modes must be >= 1")
            if len(c.mean) != self.dim:
                raise ConfigError(f"class {c.name}: mean has {len(c.mean)} entries, dim is {self.dim}")
            if c.shift is not None and len(c.shift) != self.dim:
                raise ConfigError(f"class {c.name}: shift has {len(c.shift)} entries, dim is {self.dim}")
            if c.mode_dims is not None and any(not 0 <= j < self.dim for j in c.mode_dims):
                raise ConfigError(f"class {c.name}: mode_dims out of range")
        return self


def _mode_centers(c: ClassSpec, dim: int, rng: XorShift64Star) -> list[np.ndarray]:
    mean = np.array(c.mean, dtype=float)
    if c.modes == 1:
        return [mean]
    dims = list(range(dim)) if c.mode_dims is None else list(c.mode_dims)
    centers = []
    for _ in range(c.modes):
        u = np.zeros(dim)
        u[dims] = rng.normals(len(dims))
        u /= np.linalg.norm(u) or 1.0
        centers.append(mean + c.mode_spread * np.asarray(c.scale, dtype=float) * u)
    return centers


def gen_domains(spec: DomainSpec) -> tuple[Dataset, Dataset]:
    """Sample the two domains; domain B adds each class's shift and covariance factor."""
    spec.validate()
    params = XorShift64Star(spec.seed, "params")
    centers = {c.name: _mode_centers(c, spec.dim, params) for c in spec.classes}
    out = []
    for d_index, dom in enumerate(spec.domains):
        rng = XorShift64Star(spec.seed, f"domain:{dom}")
        ids, labels, rows = [], [], []
        for c in spec.classes:
            shift = np.zeros(spec.dim)
            scale = np.asarray(c.scale, dtype=float)
            if d_index == 1:
                if c.shift is not None:
                    shift = np.array(c.shift, dtype=float)
                scale = scale * c.cov_multiplier
            for i in range(c.count):
                center = centers[c.name][i % c.modes]
                rows.append(center + shift + scale * np.array(rng.normals(spec.dim)))
                labels.append(c.name)
                ids.append(f"{dom}-{len(ids):05d}")
        out.append(Dataset(ids, [dom] * len(ids), labels, np.array(rows),
                           [c.name for c in spec.classes]))
    return out[0], out[1]


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _scale(text: str) -> float | tuple[float, ...]:
    vals = _floats(text)
    return vals[0] if len(vals) == 1 else vals


def read_domain_spec(path) -> DomainSpec:
    """Parse an INI-style spec: a ``[domain]`` section plus one ``[class NAME]`` per class."""
    cp = configparser.ConfigParser()
    try:
        if not cp.read(path, encoding="utf-8"):
            raise FileNotFoundError(f"spec file not found: {path}")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if "domain" not in cp:
        raise ConfigError(f"{path}: missing [domain] section")
    try:
        dom = cp["domain"]
        dim = dom.getint("dim")
        seed = dom.getint("seed", fallback=0)
        names = tuple(n.strip() for n in dom.get("names", "A,B").split(","))
        classes = []
        for section in cp.sections():
            if not section.startswith("class "):
                continue
            s = cp[section]
            shift = s.get("shift")
            mode_dims = s.get("mode_dims")
            classes.append(ClassSpec(
                name=section[len("class "):].strip(),
                count=s.getint("count"),
                mean=_floats(s.get("mean")),
                scale=_scale(s.get("scale", "1.0")),
                modes=s.getint("modes", fallback=1),
                mode_spread=s.getfloat("mode_spread", fallback=3.0),
                mode_dims=None if mode_dims is None else tuple(int(v) for v in _floats(mode_dims)),
                shift=None if shift is None else _floats(shift),
                cov_multiplier=s.getfloat("cov_multiplier", fallback=1.0),
            ))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if len(names) != 2:
        raise ConfigError(f"{path}: names must list exactly two domains")
    return DomainSpec(tuple(classes), dim, seed, names).validate()


def domain_spec_to_ini(spec: DomainSpec) -> str:
    def vec(v):
        return ", ".join(repr(float(x)) for x in v)

    lines = ["[domain]", f"dim = {spec.dim}", f"seed = {spec.seed}",
             f"names = {','.join(spec.domains)}", ""]
    for c in spec.classes:
        lines += [f"[class {c.name}]", f"count = {c.count}", f"mean = {vec(c.mean)}",
                  f"scale = {vec(np.atleast_1d(c.scale))}", f"modes = {c.modes}", f"mode_spread = {c.mode_spread!r}"]
        if c.mode_dims is not None:
            lines.append("mode_dims = " + ", ".join(str(j) for j in c.mode_dims))
        if c.shift is not None:
            lines.append(f"shift = {vec(c.shift)}")
        lines += [f"cov_multiplier = {c.cov_multiplier!r}", ""]
    return "\n".join(lines)


# presets

SDG_EMBEDDING_COLUMNS = (0, 1, 2, 3)
SDG_KNOWLEDGE_COLUMNS = (4, 5, 6, 7)


def sdg_spec(seed: int = 0) -> DomainSpec:
    """SOZ-style three-class pair of domains.

    Columns 0-3 play the role of image embeddings, columns 4-7 of expert
    knowledge features.  In domain B the overlap class (Noise) drifts onto the
    rare class (SOZ) in embedding space; knowledge columns never shift.
    """
    return DomainSpec((
        ClassSpec("Noise", 200, (4.0, 1.0, 0.0, 0.0, -1.5, 0.0, 0.0, 0.0), scale=0.6,
                  shift=(0.0, -1.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0)),
        ClassSpec("RSN", 200, (0.0, 0.0, 4.0, 1.0, -2.0, 0.0, 0.0, 0.0), scale=0.6),
        ClassSpec("SOZ", 40, (4.0, -0.5, 0.5, 0.0, 2.0, 0.0, 0.0, 0.0), scale=0.6),
    ), dim=8, seed=seed)


def dr_spec(seed: int = 0) -> DomainSpec:
    """Five grades whose shrinking counts order the rarity stages 4, 3, 2."""
    means = [(0.0, 0.0, 0.0, 0.0), (3.0, 0.0, 0.0, 0.0), (3.0, 3.0, 0.0, 0.0),
             (3.0, 3.0, 3.0, 0.0), (3.0, 3.0, 3.0, 3.0)]
    counts = [400, 320, 110, 50, 20]
    return DomainSpec(tuple(
        ClassSpec(str(g), n, tuple(m), scale=0.7, shift=(0.3, 0.0, 0.0, 0.0))
        for g, (n, m) in enumerate(zip(counts, means))), dim=4, seed=seed)


def rare_modes_spec(seed: int = 0, dim: int = 4) -> DomainSpec:
    """Two compact classes and a scarce, three-mode, ten-times-wider rare class."""
    def at(v):
        return tuple([v] + [0.0] * (dim - 1))

    return DomainSpec((
        ClassSpec("A", 150, at(0.0), scale=1.0),
        ClassSpec("B", 150, at(8.0), scale=1.0),
        ClassSpec("R", 30, at(4.0), scale=10.0, modes=3),
    ), dim=dim, seed=seed)


PRESETS = {"sdg": sdg_spec, "dr": dr_spec, "rare-modes": rare_modes_spec}


# ---------------------------------------------------------------- BOLD

BOLD_KINDS = ("sine", "transient", "white")


def _bold(kind: str, length: int, rng: XorShift64Star) -> np.ndarray:
    if length < 16:
        raise ValidationError("BOLD length must be >= 16")
    t = np.arange(length)
    if kind == "sine":
        n_tones = rng.integers(1, 3)
        bins = rng.sample(list(range(2, length // 2)), n_tones)
        x = np.zeros(length)
        for k in bins:
            amp = rng.uniform(0.5, 1.5)
            phase = rng.uniform(0.0, 2 * math.pi)
            x += amp * np.cos(2 * math.pi * k * t / length + phase)
        return x
    if kind == "transient":
        x = np.zeros(length)
        for _ in range(rng.integers(1, 3)):
            pos = rng.integers(4, length - 8)
            width = rng.integers(1, 2)
            amp = rng.uniform(1.0, 2.0) * (1 if rng.random() < 0.5 else -1)
            x[pos:pos + width] += amp
        return x
    if kind == "white":
        return np.array(rng.normals(length))
    raise ValidationError(f"unknown BOLD kind {kind!r}; choose from {BOLD_KINDS}")


def gen_bold(kind: str, length: int = 128, seed: int = 0) -> np.ndarray:
    """``sine``: 1-3 exact-bin tones; ``transient``: short pulses on a flat
    baseline; ``white``: Gaussian noise."""
    return _bold(kind, length, XorShift64Star(seed, f"bold:{kind}"))


# ---------------------------------------------------------------- scenes

SCENE_KINDS = ("soz", "rsn", "noise")
_DEFAULT_SIGNAL = {"soz": "transient", "rsn": "sine", "noise": "white"}
# lateral gray sectors, away from the midline vessels (degrees, image frame)
_LATERAL = (30.0, 150.0, 210.0, 330.0)


@dataclass(frozen=True)
class SceneSpec:
    kind: str
    width: int = 240
    height: int = 240
    bold_length: int = 128
    signal: str | None = None
    speckles: tuple[int, int] = (6, 12)
    seed: int = 0

    def validate(self) -> "SceneSpec":
        if self.kind not in SCENE_KINDS:
            raise ConfigError(f"unknown scene kind {self.kind!r}; choose from {SCENE_KINDS}")
        if self.width < 60 or self.height < 60:
            raise ConfigError("scene grid must be at least 60x60 pixels")
        if self.signal is not None and self.signal not in BOLD_KINDS:
            raise ConfigError(f"unknown signal kind {self.signal!r}")
        return self


@dataclass(frozen=True)
class _Frame:
    cx: float
    cy: float
    rx: float
    ry: float

    def point(self, rf: float, deg: float) -> tuple[float, float]:
        a = math.radians(deg)
        return (self.cx + self.rx * rf * math.cos(a), self.cy + self.ry * rf * math.sin(a))

    def polar(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        u = (xy[:, 0] - self.cx) / self.rx
        v = (xy[:, 1] - self.cy) / self.ry
        return np.hypot(u, v), np.degrees(np.arctan2(v, u)) % 360.0


def _ring(frame: _Frame, rf: float, n: int, phase: float = 0.37) -> tuple:
    return tuple(frame.point(rf, phase + 360.0 * k / n) for k in range(n))


def _sector(frame: _Frame, center: float, half: float, r0: float, r1: float, n: int = 14) -> tuple:
    outer = [frame.point(r1, center - half + 2 * half * k / (n - 1)) for k in range(n)]
    inner = [frame.point(r0, center + half - 2 * half * k / (n - 1)) for k in range(n)]
    return tuple(outer + inner)


def _anatomy(frame: _Frame) -> dict:
    gray = tuple(_sector(frame, c, 26.0, 0.47, 0.93) for c in (30, 90, 150, 210, 270, 330))
    half_w = 0.04 * frame.rx
    vessels = []
    for sign in (-1, 1):
        y0 = frame.cy + sign * 0.95 * frame.ry
        y1 = frame.cy + sign * 0.50 * frame.ry
        lo, hi = min(y0, y1), max(y0, y1)
        vessels.append(((frame.cx - half_w, lo), (frame.cx + half_w, lo),
                        (frame.cx + half_w, hi), (frame.cx - half_w, hi)))
    return {
        "brain": _ring(frame, 1.0, 72),
        "white": (_ring(frame, 0.42, 48),),
        "gray": gray,
        "vascular": tuple(vessels),
    }


def _grid(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    nx, ny = width // VOXEL, height // VOXEL
    vy, vx = np.mgrid[0:ny, 0:nx]
    vox = np.column_stack([vx.ravel(), vy.ravel()])
    return vox, VOXEL * vox + VOXEL // 2


def _blob(frame, vox, centers, rng, deg: float, r0: float, r1: float, half: float) -> list:
    rf, ang = frame.polar(centers.astype(float))
    d = (ang - deg + 180.0) % 360.0 - 180.0
    sel = (rf >= r0) & (rf <= r1) & (np.abs(d) <= half)
    return [tuple(int(c) for c in v) for v in vox[sel]]


def gen_scene(spec: SceneSpec) -> Scene:
    """One synthetic slice of the requested kind.

    ``soz``: a single solid blob inside one lateral gray sector with a
    transient BOLD; ``rsn``: two or three bilateral blobs with a sinusoidal
    BOLD; ``noise``: a rim band straddling the brain edge plus a vessel,
    white-noise BOLD.  Every kind adds a few isolated speckle voxels.
    """
    spec.validate()
    rng = XorShift64Star(spec.seed, f"scene:{spec.kind}")
    frame = _Frame(spec.width / 2.0, spec.height / 2.0, 0.42 * spec.width, 0.45 * spec.height)
    anat = _anatomy(frame)
    vox, centers = _grid(spec.width, spec.height)

    active: list[tuple[int, int]] = []
    if spec.kind == "soz":
        deg = _LATERAL[rng.integers(0, 3)] + rng.uniform(-2.0, 2.0)
        active += _blob(frame, vox, centers, rng, deg, rng.uniform(0.52, 0.56),
                        rng.uniform(0.85, 0.89), rng.uniform(19.0, 23.0))
    elif spec.kind == "rsn":
        pair = ((30.0, 150.0), (210.0, 330.0))[rng.integers(0, 1)]
        sites = list(pair)
        if rng.random() < 0.5:
            sites.append(rng.sample([d for d in _LATERAL if d not in pair], 1)[0])
        for deg in sites:
            active += _blob(frame, vox, centers, rng, deg + rng.uniform(-2.0, 2.0),
                            rng.uniform(0.52, 0.56), rng.uniform(0.85, 0.89),
                            rng.uniform(19.0, 23.0))
    else:
        deg = rng.uniform(0.0, 360.0)
        active += _blob(frame, vox, centers, rng, deg, 0.9, 1.07, rng.uniform(30.0, 60.0))
        vessel = anat["vascular"][rng.integers(0, 1)]
        xs = [p[0] for p in vessel]
        ys = [p[1] for p in vessel]
        inside = ((centers[:, 0] >= min(xs) - 3) & (centers[:, 0] <= max(xs) + 3)
                  & (centers[:, 1] >= min(ys)) & (centers[:, 1] <= max(ys)))
        active += [tuple(int(c) for c in v) for v in vox[inside]]

    rf_all, _ = frame.polar(centers.astype(float))
    brain_vox = vox[rf_all < 0.95]
    for _ in range(rng.integers(*spec.speckles)):
        v = brain_vox[rng.integers(0, len(brain_vox) - 1)]
        active.append((int(v[0]), int(v[1])))
    active = list(dict.fromkeys(active))

    signal = spec.signal or _DEFAULT_SIGNAL[spec.kind]
    bold = _bold(signal, spec.bold_length, rng)
    return Scene(spec.width, spec.height, anat["brain"], anat["gray"], anat["white"],
                 anat["vascular"], tuple(active), bold)


def gen_scenes(kind: str, count: int, seed: int = 0, **kwargs) -> list[Scene]:
    """``count`` scenes of one kind, scene ``i`` seeded with ``seed + i``."""
    return [gen_scene(SceneSpec(kind, seed=seed + i, **kwargs)) for i in range(count)]
