"""DBSCAN over integer voxel coordinates."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from ..errors import ValidationError

WEAK_CLUSTER_SIZE = 135

Voxel = tuple[int, int]


@dataclass(frozen=True)
class Cluster:
    voxels: tuple[Voxel, ...]

    def __post_init__(self):
        if not self.voxels:
            raise ValidationError("a cluster needs at least one voxel")

    def __len__(self) -> int:
        return len(self.voxels)


def _offsets(eps: float) -> list[Voxel]:
    r = int(math.floor(eps))
    return [(dx, dy) for dx in range(-r, r + 1) for dy in range(-r, r + 1)]


def dbscan_labels(voxels: Sequence[Voxel], eps: float = 1, min_pts: int = 2) -> list[int]:
    """Cluster id per voxel (-1 for noise) under Chebyshev distance.

    A voxel is core when its eps-neighbourhood, itself included, holds at least
    ``min_pts`` voxels.  Cores are expanded in input order and a border voxel
    joins the first cluster that reaches it.  ``voxels`` must be distinct.
    """
    if eps < 0:
        raise ValidationError("eps must be non-negative")
    pos = {v: i for i, v in enumerate(voxels)}
    offs = _offsets(eps)
    nbrs = []
    for vx, vy in voxels:
        nbrs.append([pos[q] for q in ((vx + dx, vy + dy) for dx, dy in offs) if q in pos])
    core = [len(nb) >= min_pts for nb in nbrs]
    labels = [-1] * len(voxels)
    cid = 0
    for i in range(len(voxels)):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = cid
        queue = deque([i])
        while queue:
            j = queue.popleft()
            for q in nbrs[j]:
                if labels[q] == -1:
                    labels[q] = cid
                    if core[q]:
                        queue.append(q)
        cid += 1
    return labels


def cluster_activation(voxels: Iterable[Sequence[int]], eps: float = 1, min_pts: int = 2,
                       min_size: int = WEAK_CLUSTER_SIZE) -> list[Cluster]:
    """Activation clusters with at least ``min_size`` voxels.

    Duplicate voxels are collapsed; clusters come back ordered by the input
    position of their earliest voxel.
    """
    pts = list(dict.fromkeys((int(v[0]), int(v[1])) for v in voxels))
    labels = dbscan_labels(pts, eps, min_pts)
    groups: dict[int, list[Voxel]] = {}
    for v, lb in zip(pts, labels):
        if lb >= 0:
            groups.setdefault(lb, []).append(v)
    kept = [g for g in groups.values() if len(g) >= min_size]
    first = {v: i for i, v in enumerate(pts)}
    kept.sort(key=lambda g: first[g[0]])
    return [Cluster(tuple(g)) for g in kept]
