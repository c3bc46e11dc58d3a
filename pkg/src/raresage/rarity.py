"""Class-wise KNN entropy, the rarity test and overlap-class discovery.

For each observation of a class, density is the mean inverse distance to its
K nearest same-class neighbours.  Normalising densities over the class gives
a probability vector whose Shannon entropy (bits) is the class entropy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import DegenerateClassError, ValidationError

DIST_FLOOR = 1e-12
DEFAULT_K = 10
METRICS = ("euclidean", "cosine")
_CHUNK = 256


def effective_k(K: int | None, class_size: int) -> int:
    """Neighbour count actually used: ``K`` (default 10) capped at ``|c| - 1``."""
    if K is None:
        K = DEFAULT_K
    if K < 1:
        raise ValidationError(f"K must be >= 1, got {K}")
    return max(1, min(K, class_size - 1))


def _distance_rows(P: np.ndarray, rows: slice, metric: str) -> np.ndarray:
    if metric == "euclidean":
        diff = P[rows, None, :] - P[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if metric == "cosine":
        norms = np.linalg.norm(P, axis=1)
        if np.any(norms == 0):
            raise ValidationError("cosine distance undefined for a zero vector")
        U = P / norms[:, None]
        # 1 - cos = |u - v|^2 / 2 for unit vectors; this form keeps full
        # relative precision for nearly parallel vectors
        diff = U[rows, None, :] - U[None, :, :]
        return np.clip(0.5 * np.einsum("ijk,ijk->ij", diff, diff), 0.0, 2.0)
    raise ValidationError(f"unknown metric {metric!r}; choose from {METRICS}")


def knn_densities(points, K: int | None = None, metric: str = "euclidean") -> np.ndarray:
    """Density of every point of one class (array of shape ``(n,)``).

    Neighbour ties are broken by row order; distances are floored at 1e-12 so
    coincident points get a large but finite density.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P.reshape(-1, 1)
    n = P.shape[0]
    if n < 2:
        raise DegenerateClassError(f"density needs at least 2 points, got {n}")
    k = effective_k(K, n)
    out = np.empty(n)
    for start in range(0, n, _CHUNK):
        rows = slice(start, min(start + _CHUNK, n))
        D = _distance_rows(P, rows, metric)
        local = np.arange(rows.start, rows.stop)
        D[local - start, local] = np.inf
        order = np.argsort(D, axis=1, kind="stable")[:, :k]
        nearest = np.take_along_axis(D, order, axis=1)
        nearest = np.maximum(nearest, DIST_FLOOR)
        out[rows] = np.mean(1.0 / nearest, axis=1)
    return out


def knn_density(ds: Dataset, cls: str, index: int, K: int | None = None,
                metric: str = "euclidean") -> float:
    """Density of dataset row ``index`` within its class ``cls``."""
    if ds.labels[index] != cls:
        raise ValidationError(f"observation {index} is not in class {cls!r}")
    members = ds.indices_of(cls)
    pos = int(np.flatnonzero(members == index)[0])
    return float(knn_densities(ds.X[members], K, metric)[pos])


def entropy_of_points(points, K: int | None = None, metric: str = "euclidean") -> float:
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P.reshape(-1, 1)
    if P.shape[0] <= 1:
        return 0.0
    lam = knn_densities(P, K, metric)
    gamma = lam / lam.sum()
    nz = gamma[gamma > 0]
    return float(-np.sum(nz * np.log2(nz)))


def class_entropy(ds: Dataset, cls: str, K: int | None = None,
                  metric: str = "euclidean") -> float:
    if cls not in ds.classes:
        raise ValidationError(f"unknown class {cls!r}")
    return entropy_of_points(ds.features_of(cls), K, metric)


@dataclass(frozen=True)
class EntropyProfile:
    thetas: dict[str, float]
    mean: float
    std: float
    K: int | None
    metric: str

    def deviation(self, cls: str) -> float:
        return abs(self.thetas[cls] - self.mean)

    @classmethod
    def from_thetas(cls, thetas: dict[str, float], K: int | None = None,
                    metric: str = "euclidean") -> "EntropyProfile":
        vals = np.array(list(thetas.values()), dtype=float)
        mean = float(vals.mean())
        std = float(np.sqrt(np.mean((vals - mean) ** 2)))
        return cls(dict(thetas), mean, std, K, metric)


@dataclass(frozen=True)
class RarityVerdict:
    rare_classes: tuple[str, ...]
    multiplier: float
    rarest: str | None
    deviations: dict[str, float] = field(default_factory=dict)


def entropy_profile(ds: Dataset, K: int | None = None,
                    metric: str = "euclidean") -> EntropyProfile:
    counts = ds.counts()
    empty = [c for c, n in counts.items() if n == 0]
    if empty:
        raise ValidationError(f"classes without observations: {empty}")
    thetas = {c: class_entropy(ds, c, K, metric) for c in ds.classes}
    return EntropyProfile.from_thetas(thetas, K, metric)


def identify_rare(profile: EntropyProfile, multiplier: float = 1.0) -> RarityVerdict:
    """Flag classes whose entropy lies more than ``multiplier`` std devs from the mean.

    A relative slack of 1e-12 (scaled by the largest |theta|) absorbs rounding,
    so a set of equal entropies never flags anything.
    """
    if multiplier <= 0:
        raise ValidationError("multiplier must be positive")
    scale = max((abs(t) for t in profile.thetas.values()), default=0.0)
    bound = multiplier * profile.std + 1e-12 * scale
    devs = {c: profile.deviation(c) for c in profile.thetas}
    rare = tuple(c for c in profile.thetas if devs[c] > bound)
    rarest = None
    for c in rare:
        if rarest is None or devs[c] > devs[rarest]:
            rarest = c
    return RarityVerdict(rare, multiplier, rarest, devs)


def class_centroid(ds: Dataset, cls: str) -> np.ndarray:
    pts = ds.features_of(cls)
    if len(pts) == 0:
        raise ValidationError(f"class {cls!r} is empty")
    return pts.mean(axis=0)


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValidationError("cosine similarity undefined for a zero-norm centroid")
    return float(a @ b / (na * nb))


def most_similar(similarities: dict[str, float]) -> str:
    """Argmax of a similarity map; the first key wins ties."""
    best = None
    for c, s in similarities.items():
        if best is None or s > similarities[best]:
            best = c
    if best is None:
        raise ValidationError("no candidate classes")
    return best


def find_overlap_class(ds: Dataset, rare: str) -> tuple[str, dict[str, float]]:
    """Class whose centroid is most cosine-similar to the rare class centroid."""
    if rare not in ds.classes:
        raise ValidationError(f"unknown class {rare!r}")
    if len(ds.classes) < 2:
        raise ValidationError("overlap class needs at least two classes")
    ref = class_centroid(ds, rare)
    sims = {c: cosine_similarity(ref, class_centroid(ds, c))
            for c in ds.classes if c != rare}
    return most_similar(sims), sims
