"""Bipartite student/class enrollment networks and the reductions applied to them.

A network is an immutable mapping of class id -> :class:`ClassSection`. Students
exist only through their enrollments, so "every student is in at least one
class" holds by construction.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, TextIO

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

WEEKDAYS = ("Mo", "Tu", "We", "Th", "Fr", "Sa", "Su")
_ID_RE = re.compile(r"^[A-Za-z0-9_-]+$")
HEADER = ("student_id", "class_id", "days")


class ParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def parse_days(token: str) -> frozenset[str]:
    """Split a concatenation of two-letter weekday codes, e.g. ``MoWeFr``."""
    if len(token) % 2:
        raise ValueError(f"bad weekday string {token!r}")
    days = set()
    for i in range(0, len(token), 2):
        code = token[i : i + 2]
        if code not in WEEKDAYS:
            raise ValueError(f"unknown weekday token {code!r}")
        days.add(code)
    return frozenset(days)


def format_days(days: Iterable[str]) -> str:
    return "".join(d for d in WEEKDAYS if d in set(days))


@dataclass(frozen=True)
class ClassSection:
    id: str
    meeting_days: frozenset[str]
    roster: frozenset[str]

    @property
    def size(self) -> int:
        return len(self.roster)


@dataclass(frozen=True)
class EnrollmentNetwork:
    classes: dict[str, ClassSection] = field(default_factory=dict)

    @classmethod
    def from_enrollments(
        cls, pairs: Iterable[tuple[str, str]], meeting_days: dict[str, frozenset[str]]
    ) -> "EnrollmentNetwork":
        rosters: dict[str, set[str]] = {c: set() for c in meeting_days}
        for s, c in pairs:
            rosters[c].add(s)
        return cls(
            {
                c: ClassSection(c, frozenset(meeting_days[c]), frozenset(r))
                for c, r in sorted(rosters.items())
                if r
            }
        )

    @property
    def students(self) -> frozenset[str]:
        out: set[str] = set()
        for sec in self.classes.values():
            out |= sec.roster
        return frozenset(out)

    def student_classes(self) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = {}
        for sec in self.classes.values():
            for s in sec.roster:
                adj.setdefault(s, set()).add(sec.id)
        return adj

    @property
    def n_enrollments(self) -> int:
        return sum(sec.size for sec in self.classes.values())

    def enrollments(self) -> list[tuple[str, str]]:
        """All (student, class) pairs in canonical (class, student) order."""
        return [(s, c) for c in sorted(self.classes) for s in sorted(self.classes[c].roster)]

    def __len__(self) -> int:
        return len(self.students)

    def _replace_classes(self, sections: Iterable[ClassSection]) -> "EnrollmentNetwork":
        return EnrollmentNetwork({sec.id: sec for sec in sorted(sections, key=lambda s: s.id)})


def parse_enrollments(source: TextIO | str) -> EnrollmentNetwork:
    """Read the ``student_id,class_id,days`` CSV format.

    A class listed with different ``days`` strings on different rows is a
    parse error; duplicate (student, class) rows collapse to one enrollment.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        return EnrollmentNetwork()
    if tuple(h.strip() for h in header) != HEADER:
        raise ParseError(1, f"expected header {','.join(HEADER)!r}, got {','.join(header)!r}")

    days_of: dict[str, frozenset[str]] = {}
    pairs = []
    for row in reader:
        line = reader.line_num
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 3:
            raise ParseError(line, f"expected 3 fields, got {len(row)}")
        sid, cid, days = (x.strip() for x in row)
        for what, val in (("student_id", sid), ("class_id", cid)):
            if not _ID_RE.match(val):
                raise ParseError(line, f"invalid {what} {val!r}")
        try:
            d = parse_days(days)
        except ValueError as exc:
            raise ParseError(line, str(exc)) from None
        if days_of.setdefault(cid, d) != d:
            raise ParseError(line, f"class {cid} listed with conflicting days")
        pairs.append((sid, cid))
    return EnrollmentNetwork.from_enrollments(pairs, days_of)


def read_enrollments(path) -> EnrollmentNetwork:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_enrollments(fh)


def write_enrollments(net: EnrollmentNetwork, out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(HEADER)
    for c in sorted(net.classes):
        sec = net.classes[c]
        days = format_days(sec.meeting_days)
        for s in sorted(sec.roster):
            w.writerow((s, c, days))


def to_csv(net: EnrollmentNetwork) -> str:
    buf = io.StringIO()
    write_enrollments(net, buf)
    return buf.getvalue()


def drop_degenerate(net: EnrollmentNetwork) -> EnrollmentNetwork:
    """Remove classes that never meet or have at most one student."""
    return net._replace_classes(
        sec for sec in net.classes.values() if sec.meeting_days and sec.size > 1
    )


def apply_threshold(net: EnrollmentNetwork, phi: float) -> EnrollmentNetwork:
    """Move classes with strictly more than ``phi`` students online."""
    if phi <= 1:
        raise ValueError(f"threshold must exceed 1, got {phi}")
    if math.isinf(phi):
        return net
    return net._replace_classes(sec for sec in net.classes.values() if sec.size <= phi)


def largest_component(net: EnrollmentNetwork) -> EnrollmentNetwork:
    """Keep the connected component containing the most students.

    Ties go to the component whose smallest student id sorts first.
    """
    if not net.classes:
        return net
    students = sorted(net.students)
    class_ids = sorted(net.classes)
    s_index = {s: i for i, s in enumerate(students)}
    n_s = len(students)
    rows, cols = [], []
    for j, c in enumerate(class_ids):
        for s in net.classes[c].roster:
            rows.append(s_index[s])
            cols.append(n_s + j)
    n = n_s + len(class_ids)
    adj = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    s_labels = labels[:n_s]
    sizes = np.bincount(s_labels, minlength=labels.max() + 1)
    # students are sorted, so the first student seen in each component is its minimum
    first_seen: dict[int, int] = {}
    for i, lab in enumerate(s_labels):
        first_seen.setdefault(int(lab), i)
    best = min(first_seen, key=lambda lab: (-sizes[lab], first_seen[lab]))
    keep = {class_ids[j] for j in range(len(class_ids)) if labels[n_s + j] == best}
    return net._replace_classes(net.classes[c] for c in keep)


def thinning_target(net: EnrollmentNetwork, phi: float) -> int:
    """Enrollments that would survive ``apply_threshold(net, phi)``."""
    return sum(sec.size for sec in net.classes.values() if sec.size <= phi)


def thin_uniform(
    net: EnrollmentNetwork, target_enrollments: int, rng: np.random.Generator
) -> EnrollmentNetwork:
    """Delete uniformly random enrollments until ``target_enrollments`` remain.

    Classes emptied entirely are dropped; one-student classes are kept.
    """
    pairs = net.enrollments()
    if not 0 <= target_enrollments <= len(pairs):
        raise ValueError(
            f"target_enrollments={target_enrollments} outside [0, {len(pairs)}]"
        )
    keep = np.sort(rng.choice(len(pairs), size=target_enrollments, replace=False))
    rosters: dict[str, set[str]] = {}
    for k in keep:
        s, c = pairs[k]
        rosters.setdefault(c, set()).add(s)
    return net._replace_classes(
        ClassSection(c, net.classes[c].meeting_days, frozenset(r)) for c, r in rosters.items()
    )


@dataclass(frozen=True)
class NetworkStats:
    n_students: int
    n_classes: int
    n_enrollments: int
    n_students_lcc: int
    class_size_histogram: dict[int, int]
    max_class_size: int

    def to_json(self) -> str:
        d = asdict(self)
        d["class_size_histogram"] = {str(k): v for k, v in sorted(self.class_size_histogram.items())}
        return json.dumps(d, indent=2)


def network_stats(net: EnrollmentNetwork) -> NetworkStats:
    sizes = [sec.size for sec in net.classes.values()]
    return NetworkStats(
        n_students=len(net.students),
        n_classes=len(sizes),
        n_enrollments=sum(sizes),
        n_students_lcc=len(largest_component(net).students),
        class_size_histogram=dict(sorted(Counter(sizes).items())),
        max_class_size=max(sizes, default=0),
    )


def check_consistency(net: EnrollmentNetwork) -> None:
    """Full scan of the student <-> class adjacency; raises AssertionError."""
    adj = net.student_classes()
    for c, sec in net.classes.items():
        assert c == sec.id
        for s in sec.roster:
            assert c in adj[s]
    for s, cs in adj.items():
        assert cs, s
        for c in cs:
            assert s in net.classes[c].roster
