"""Super-labels and the label-set rules a machine's output alphabet must obey."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence


@dataclass(frozen=True)
class SuperLabel:
    name: str
    members: frozenset[str]

    def __init__(self, name: str, members: Iterable[str]):
        object.__setattr__(self, "name", str(name))
        object.__setattr__(self, "members", frozenset(members))
        if not self.members:
            raise ValueError(f"super-label {name!r} has no members")


@dataclass(frozen=True)
class LabelSet:
    supers: tuple[SuperLabel, ...]

    def __init__(self, supers: Iterable[SuperLabel]):
        object.__setattr__(self, "supers", tuple(supers))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.supers)

    def super_of(self, cls: str) -> str:
        for s in self.supers:
            if cls in s.members:
                return s.name
        raise KeyError(cls)

    def to_dict(self) -> list[dict]:
        return [{"name": s.name, "members": sorted(s.members)} for s in self.supers]

    @classmethod
    def from_dict(cls, items: list[dict]) -> "LabelSet":
        return cls(SuperLabel(it["name"], it["members"]) for it in items)

    @classmethod
    def binary(cls, pos_name: str, pos: Iterable[str], neg_name: str,
               neg: Iterable[str]) -> "LabelSet":
        return cls([SuperLabel(pos_name, pos), SuperLabel(neg_name, neg)])


@dataclass(frozen=True)
class LabelSetReport:
    """Outcome of :func:`validate_label_set`; ``ok`` is False when any rule fails."""

    ok: bool
    violations: tuple[tuple[str, str], ...] = ()

    def __bool__(self) -> bool:
        return self.ok

    def describe(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(f"{rule}: {detail}" for rule, detail in self.violations)


def validate_label_set(label_set: LabelSet | Sequence[SuperLabel],
                       classes: Iterable[str]) -> LabelSetReport:
    """Check mutual exclusion, class cover and the union rule.

    The union rule fails when a super-label names something that is not an
    original class; class cover fails when an original class is left out.
    """
    supers = label_set.supers if isinstance(label_set, LabelSet) else tuple(label_set)
    classes = list(classes)
    known = set(classes)
    violations: list[tuple[str, str]] = []

    names = [s.name for s in supers]
    dup_names = sorted({n for n in names if names.count(n) > 1})
    if dup_names:
        violations.append(("mutual-exclusion", f"duplicate super names {dup_names}"))

    for a, b in combinations(supers, 2):
        shared = a.members & b.members
        if shared:
            violations.append(
                ("mutual-exclusion",
                 f"{a.name} and {b.name} share {sorted(shared)}"))

    covered = set().union(*(s.members for s in supers)) if supers else set()
    missing = [c for c in classes if c not in covered]
    if missing:
        violations.append(("class-cover", f"classes not covered: {missing}"))

    for s in supers:
        unknown = sorted(s.members - known)
        if unknown:
            violations.append(("union-rule", f"{s.name} contains non-classes {unknown}"))

    return LabelSetReport(not violations, tuple(violations))
