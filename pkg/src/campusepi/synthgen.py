"""Synthetic enrollment networks standing in for real registrar data."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields

import numpy as np

from .network import WEEKDAYS, ClassSection, EnrollmentNetwork, format_days, parse_days


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class SizeLaw:
    """Class-size distribution: ``uniform(a,b)`` or ``powerlaw(alpha,min,max)``.

    Both are discrete on the integers in ``[lo, hi]``; the power law has
    ``P(k) ~ k**-alpha``.
    """

    kind: str
    lo: int
    hi: int
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform", "powerlaw"):
            raise ValueError(f"unknown class size law {self.kind!r}")
        if not 1 <= self.lo <= self.hi:
            raise ValueError(f"bad size range [{self.lo}, {self.hi}]")

    def pmf(self) -> tuple[np.ndarray, np.ndarray]:
        k = np.arange(self.lo, self.hi + 1)
        w = np.ones(len(k)) if self.kind == "uniform" else k.astype(float) ** -self.alpha
        return k, w / w.sum()

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        k, p = self.pmf()
        return rng.choice(k, size=n, p=p)

    @classmethod
    def parse(cls, text: str) -> "SizeLaw":
        m = re.fullmatch(r"\s*(uniform|powerlaw|truncated-power-law)\s*\(([^)]*)\)\s*", text)
        if not m:
            raise ValueError(f"cannot parse class_size_law {text!r}")
        args = [a.strip() for a in m.group(2).split(",")]
        if m.group(1) == "uniform":
            if len(args) != 2:
                raise ValueError("uniform(a,b) takes 2 arguments")
            return cls("uniform", int(args[0]), int(args[1]))
        if len(args) != 3:
            raise ValueError("powerlaw(alpha,min,max) takes 3 arguments")
        return cls("powerlaw", int(args[1]), int(args[2]), float(args[0]))

    def __str__(self) -> str:
        if self.kind == "uniform":
            return f"uniform({self.lo},{self.hi})"
        return f"powerlaw({self.alpha:g},{self.lo},{self.hi})"


DEFAULT_PATTERNS = (
    (frozenset({"Mo", "We", "Fr"}), 0.4),
    (frozenset({"Tu", "Th"}), 0.4),
    (frozenset({"Mo"}), 0.2 / 3),
    (frozenset({"We"}), 0.2 / 3),
    (frozenset({"Fr"}), 0.2 / 3),
)


@dataclass(frozen=True)
class SynthConfig:
    n_students: int
    n_classes: int
    class_size_law: SizeLaw
    classes_per_student_mean: float = 4.3
    meeting_pattern_pool: tuple[tuple[frozenset[str], float], ...] = DEFAULT_PATTERNS
    seed: int = 0

    def validate(self) -> None:
        if self.n_students < 1 or self.n_classes < 1:
            raise GenerationError("n_students and n_classes must be positive")
        if self.class_size_law.hi > self.n_students:
            raise GenerationError(
                f"class_size_law max {self.class_size_law.hi} exceeds n_students {self.n_students}"
            )
        if self.class_size_law.lo < 2:
            raise GenerationError("class_size_law min must be at least 2")
        if self.classes_per_student_mean < 1:
            raise GenerationError("classes_per_student_mean must be >= 1")
        weights = [w for _, w in self.meeting_pattern_pool]
        if not self.meeting_pattern_pool or any(w < 0 for w in weights):
            raise GenerationError("meeting_pattern_pool needs non-negative weights")
        if abs(sum(weights) - 1) > 1e-6:
            raise GenerationError(f"meeting_pattern_pool weights sum to {sum(weights)}, not 1")
        if any(not days for days, _ in self.meeting_pattern_pool):
            raise GenerationError("meeting_pattern_pool contains an empty day set")

    def to_kv(self) -> dict[str, str]:
        pool = ",".join(f"{format_days(d)}:{w:.6g}" for d, w in self.meeting_pattern_pool)
        return {
            "n_students": str(self.n_students),
            "n_classes": str(self.n_classes),
            "class_size_law": str(self.class_size_law),
            "classes_per_student_mean": f"{self.classes_per_student_mean:g}",
            "meeting_pattern_pool": pool,
            "seed": str(self.seed),
        }

    @classmethod
    def from_kv(cls, kv: dict[str, str]) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        for key in kv:
            if key not in known:
                raise GenerationError(f"unknown config key {key!r}")
        for key in ("n_students", "n_classes", "class_size_law"):
            if key not in kv:
                raise GenerationError(f"missing config key {key!r}")
        kwargs: dict = {}
        for key, conv in (
            ("n_students", int),
            ("n_classes", int),
            ("class_size_law", SizeLaw.parse),
            ("classes_per_student_mean", float),
            ("meeting_pattern_pool", parse_pattern_pool),
            ("seed", int),
        ):
            if key in kv:
                try:
                    kwargs[key] = conv(kv[key])
                except ValueError as exc:
                    raise GenerationError(f"bad value for {key!r}: {exc}") from None
        return cls(**kwargs)


def parse_pattern_pool(text: str) -> tuple[tuple[frozenset[str], float], ...]:
    out = []
    for item in text.split(","):
        days, _, weight = item.strip().partition(":")
        out.append((parse_days(days), float(weight)))
    return tuple(out)


PRESETS = {
    "sfu-like": SynthConfig(25_000, 3_000, SizeLaw("powerlaw", 2, 481, 1.8), 4.3),
    "desk": SynthConfig(2_000, 240, SizeLaw("powerlaw", 2, 150, 1.8), 4.3),
    "tiny": SynthConfig(200, 40, SizeLaw("powerlaw", 2, 40, 1.8), 3.0),
}


def preset(name: str, seed: int = 0) -> SynthConfig:
    if name not in PRESETS:
        raise KeyError(name)
    cfg = PRESETS[name]
    return SynthConfig(
        cfg.n_students, cfg.n_classes, cfg.class_size_law,
        cfg.classes_per_student_mean, cfg.meeting_pattern_pool, seed,
    )


def generate(cfg: SynthConfig) -> EnrollmentNetwork:
    """Draw class sizes, then fill rosters by budget-weighted sampling.

    Each student gets an enrollment budget ``1 + Poisson(mean - 1)``; every
    class samples its roster without replacement, with probability
    proportional to the students' remaining budgets.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    sizes = cfg.class_size_law.sample(rng, cfg.n_classes)
    budget = 1 + rng.poisson(cfg.classes_per_student_mean - 1, size=cfg.n_students)
    if sizes.sum() > budget.sum():
        raise GenerationError(
            f"sum of class sizes {sizes.sum()} exceeds sum of student budgets {budget.sum()}"
        )
    pool_days = [d for d, _ in cfg.meeting_pattern_pool]
    pool_w = np.array([w for _, w in cfg.meeting_pattern_pool])
    patterns = rng.choice(len(pool_days), size=cfg.n_classes, p=pool_w / pool_w.sum())

    s_width = len(str(cfg.n_students - 1))
    c_width = len(str(cfg.n_classes - 1))
    sections = []
    remaining = budget.astype(float)
    for j, size in enumerate(sizes):
        eligible = np.count_nonzero(remaining)
        if eligible < size:
            raise GenerationError(
                f"class {j} needs {size} students but only {eligible} have budget left"
            )
        members = rng.choice(cfg.n_students, size=size, replace=False, p=remaining / remaining.sum())
        remaining[members] -= 1
        roster = frozenset(f"s{i:0{s_width}d}" for i in members)
        cid = f"c{j:0{c_width}d}"
        sections.append(ClassSection(cid, pool_days[patterns[j]], roster))
    return EnrollmentNetwork({sec.id: sec for sec in sections})


__all__ = [
    "WEEKDAYS", "GenerationError", "SizeLaw", "SynthConfig", "PRESETS", "preset", "generate",
    "parse_pattern_pool",
]
