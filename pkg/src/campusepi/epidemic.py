"""Discrete-time stochastic SEAIR dynamics on a class-enrollment network.

One simulated day: classes that meet that weekday generate new exposures
from the start-of-day compartment counts, every E/A/I1/I2 member may progress
one step, and all moves are applied together.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from collections import Counter
from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property

import numpy as np

from .network import WEEKDAYS, EnrollmentNetwork


class Compartment(IntEnum):
    S = 0
    E = 1
    A = 2
    I1 = 3
    I2 = 4
    R = 5


N_COMPARTMENTS = len(Compartment)

ALLOWED_TRANSITIONS = frozenset(
    {
        (Compartment.S, Compartment.E),
        (Compartment.E, Compartment.A),
        (Compartment.E, Compartment.I1),
        (Compartment.I1, Compartment.I2),
        (Compartment.A, Compartment.R),
        (Compartment.I2, Compartment.R),
    }
)


@dataclass(frozen=True)
class EpidemicParams:
    theta_I2: float
    rho_A: float
    rho_I1: float
    q_E: float
    q_A: float
    q_I1: float
    q_I2: float
    q_EA: float

    def __post_init__(self):
        if not self.theta_I2 >= 0:
            raise ValueError(f"theta_I2 must be non-negative, got {self.theta_I2}")
        if self.rho_A < 0 or self.rho_I1 < 0:
            raise ValueError("relative infectiousness must be non-negative")
        for name in ("q_E", "q_A", "q_I1", "q_I2"):
            q = getattr(self, name)
            if not 0 <= q <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {q}")
        if not 0 <= self.q_EA <= 1:
            raise ValueError(f"q_EA must lie in [0, 1], got {self.q_EA}")

    @property
    def theta_A(self) -> float:
        return self.rho_A * self.theta_I2

    @property
    def theta_I1(self) -> float:
        return self.rho_I1 * self.theta_I2

    @classmethod
    def central(cls) -> "EpidemicParams":
        return cls(0.198, 0.75, 0.63, 0.182, 0.138, 0.435, 0.075, 0.18)


@dataclass(frozen=True)
class SimConfig:
    n_days: int = 90
    n_initial: int = 10
    seed: int = 0


def pair_transmission_prob(theta: float, class_size: int, counter: Counter | None = None) -> float:
    """Per-day transmission probability for one contagious-susceptible pair."""
    if class_size < 2:
        raise ValueError(f"class_size must be >= 2, got {class_size}")
    tau = theta / math.sqrt(class_size)
    if tau > 1 or tau < 0:
        if counter is not None:
            counter["tau_clamped"] += 1
        tau = min(max(tau, 0.0), 1.0)
    return tau


def class_infection_prob(m_A: int, m_I1: int, m_I2: int, class_size: int, p: EpidemicParams) -> float:
    if m_A + m_I1 + m_I2 > class_size:
        raise ValueError("more contagious members than class size")
    escape = (
        (1 - pair_transmission_prob(p.theta_A, class_size)) ** m_A
        * (1 - pair_transmission_prob(p.theta_I1, class_size)) ** m_I1
        * (1 - pair_transmission_prob(p.theta_I2, class_size)) ** m_I2
    )
    return 1 - escape


class CompiledNetwork:
    """Array view of an :class:`EnrollmentNetwork` used by the engine.

    Students and classes are indexed in ascending id order. Read-only after
    construction, so one instance may back many concurrent runs.
    """

    def __init__(self, net: EnrollmentNetwork):
        self.student_ids = sorted(net.students)
        self.class_ids = sorted(net.classes)
        s_index = {s: i for i, s in enumerate(self.student_ids)}
        e_student, e_class = [], []
        for j, c in enumerate(self.class_ids):
            for s in sorted(net.classes[c].roster):
                e_student.append(s_index[s])
                e_class.append(j)
        self.enroll_student = np.asarray(e_student, dtype=np.int64)
        self.enroll_class = np.asarray(e_class, dtype=np.int64)
        self.class_size = np.bincount(self.enroll_class, minlength=len(self.class_ids))
        meets = np.zeros((7, len(self.class_ids)), dtype=bool)
        for j, c in enumerate(self.class_ids):
            for d in net.classes[c].meeting_days:
                meets[WEEKDAYS.index(d), j] = True
        self.meets = meets
        # enrollments of classes meeting on each weekday, still sorted by class
        self.day_enrollments = [np.flatnonzero(meets[w][self.enroll_class]) for w in range(7)]
        for a in (self.enroll_student, self.enroll_class, self.class_size, self.meets):
            a.setflags(write=False)

    @property
    def n_students(self) -> int:
        return len(self.student_ids)

    @property
    def n_classes(self) -> int:
        return len(self.class_ids)

    @cached_property
    def inv_sqrt_size(self) -> np.ndarray:
        # classes with fewer than two members have no pairs to transmit along
        out = np.zeros(self.n_classes)
        ok = self.class_size >= 2
        out[ok] = 1 / np.sqrt(self.class_size[ok])
        return out

    def transmission_probs(self, p: EpidemicParams) -> np.ndarray:
        """Per-class pairwise probabilities, shape (3, n_classes) for A, I1, I2."""
        thetas = np.array([p.theta_A, p.theta_I1, p.theta_I2])
        tau = thetas[:, None] * self.inv_sqrt_size[None, :]
        n_clamped = int(np.count_nonzero(tau > 1))
        if n_clamped:
            warnings.warn(f"{n_clamped} pairwise transmission probabilities clamped to 1")
            tau = np.minimum(tau, 1.0)
        return tau


def as_compiled(net: EnrollmentNetwork | CompiledNetwork) -> CompiledNetwork:
    return net if isinstance(net, CompiledNetwork) else CompiledNetwork(net)


@dataclass
class EpidemicState:
    compartments: np.ndarray  # int8 compartment code per student index
    day: int = 0

    def counts(self) -> np.ndarray:
        return np.bincount(self.compartments, minlength=N_COMPARTMENTS)

    def assignment(self, net: CompiledNetwork) -> dict[str, Compartment]:
        return {s: Compartment(int(c)) for s, c in zip(net.student_ids, self.compartments)}


def initialize(net: EnrollmentNetwork | CompiledNetwork, cfg: SimConfig, rng: np.random.Generator) -> EpidemicState:
    net = as_compiled(net)
    if not 0 <= cfg.n_initial <= net.n_students:
        raise ValueError(f"n_initial={cfg.n_initial} outside [0, {net.n_students}]")
    comp = np.zeros(net.n_students, dtype=np.int8)
    seeds = rng.choice(net.n_students, size=cfg.n_initial, replace=False)
    comp[seeds] = Compartment.I2
    return EpidemicState(comp, 0)


def _new_exposures(
    snap: np.ndarray, weekday: int, net: CompiledNetwork, tau: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Student indices exposed today (possibly repeated across classes)."""
    idx = net.day_enrollments[weekday]
    if idx.size == 0:
        return idx
    cls = net.enroll_class[idx]
    comp = snap[net.enroll_student[idx]]
    nc = net.n_classes
    counts = np.bincount(cls * N_COMPARTMENTS + comp, minlength=nc * N_COMPARTMENTS)
    counts = counts.reshape(nc, N_COMPARTMENTS)
    contagious = counts[:, [Compartment.A, Compartment.I1, Compartment.I2]].T
    live = np.flatnonzero((contagious.sum(axis=0) > 0) & (counts[:, Compartment.S] > 0) & net.meets[weekday])
    if live.size == 0:
        return idx[:0]
    escape = np.prod((1 - tau[:, live]) ** contagious[:, live], axis=0)
    k = np.zeros(nc, dtype=np.int64)
    k[live] = rng.binomial(counts[live, Compartment.S], 1 - escape)
    if not k.any():
        return idx[:0]
    # uniform k-subset of each class's susceptibles: sort by (class, random key), take first k
    pick = (comp == Compartment.S) & (k[cls] > 0)
    cand_cls = cls[pick]
    cand_stu = net.enroll_student[idx[pick]]
    order = np.lexsort((rng.random(cand_cls.size), cand_cls))
    cand_cls, cand_stu = cand_cls[order], cand_stu[order]
    starts = np.searchsorted(cand_cls, cand_cls, side="left")
    rank = np.arange(cand_cls.size) - starts
    return cand_stu[rank < k[cand_cls]]


def step_day(
    state: EpidemicState,
    day_index: int,
    net: EnrollmentNetwork | CompiledNetwork,
    p: EpidemicParams,
    rng: np.random.Generator,
    tau: np.ndarray | None = None,
) -> EpidemicState:
    """Advance one day. Day 1 is a Monday."""
    if day_index < 1:
        raise ValueError("day_index starts at 1")
    net = as_compiled(net)
    if tau is None:
        tau = net.transmission_probs(p)
    snap = state.compartments
    new = snap.copy()

    exposed = _new_exposures(snap, (day_index - 1) % 7, net, tau, rng)

    moves = []
    for src, q in ((Compartment.E, p.q_E), (Compartment.A, p.q_A), (Compartment.I1, p.q_I1), (Compartment.I2, p.q_I2)):
        members = np.flatnonzero(snap == src)
        n_exit = rng.binomial(members.size, q) if members.size else 0
        leaving = rng.choice(members, size=n_exit, replace=False) if n_exit else members[:0]
        moves.append(leaving)
    e_out, a_out, i1_out, i2_out = moves
    n_to_a = rng.binomial(e_out.size, p.q_EA) if e_out.size else 0

    new[exposed] = Compartment.E
    new[e_out[:n_to_a]] = Compartment.A
    new[e_out[n_to_a:]] = Compartment.I1
    new[a_out] = Compartment.R
    new[i1_out] = Compartment.I2
    new[i2_out] = Compartment.R
    return EpidemicState(new, day_index)


@dataclass(frozen=True)
class Trajectory:
    counts: np.ndarray  # (n_days + 1, 6), columns in Compartment order

    @property
    def n_days(self) -> int:
        return self.counts.shape[0] - 1

    @property
    def population(self) -> int:
        return int(self.counts[0].sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["day"] + [c.name for c in Compartment])
        for d, row in enumerate(self.counts):
            w.writerow([d, *map(int, row)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Trajectory":
        rows = list(csv.reader(io.StringIO(text)))
        if rows[0] != ["day"] + [c.name for c in Compartment]:
            raise ValueError(f"unexpected trajectory header {rows[0]}")
        return cls(np.array([[int(x) for x in r[1:]] for r in rows[1:]], dtype=np.int64))


def run_simulation(
    net: EnrollmentNetwork | CompiledNetwork, p: EpidemicParams, cfg: SimConfig
) -> Trajectory:
    net = as_compiled(net)
    if net.n_students == 0:
        raise ValueError("cannot simulate on an empty network")
    if cfg.n_days < 0:
        raise ValueError("n_days must be non-negative")
    rng = np.random.default_rng(cfg.seed)
    tau = net.transmission_probs(p)
    state = initialize(net, cfg, rng)
    out = np.empty((cfg.n_days + 1, N_COMPARTMENTS), dtype=np.int64)
    out[0] = state.counts()
    for d in range(1, cfg.n_days + 1):
        state = step_day(state, d, net, p, rng, tau)
        out[d] = state.counts()
    return Trajectory(out)
