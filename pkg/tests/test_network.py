import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from campusepi.network import (
    ClassSection,
    EnrollmentNetwork,
    ParseError,
    apply_threshold,
    check_consistency,
    drop_degenerate,
    largest_component,
    network_stats,
    parse_enrollments,
    thin_uniform,
    thinning_target,
    to_csv,
)

HEADER = "student_id,class_id,days\n"


def net_of(*classes):
    """classes: (id, days, roster) tuples."""
    return EnrollmentNetwork(
        {c: ClassSection(c, frozenset(days), frozenset(roster)) for c, days, roster in classes}
    )


def sized(*sizes, days=("Mo",)):
    """Disjoint classes with the given sizes."""
    out, k = [], 0
    for j, n in enumerate(sizes):
        out.append((f"c{j}", days, [f"s{k + i}" for i in range(n)]))
        k += n
    return net_of(*out)


@st.composite
def networks(draw, max_students=12, max_classes=6):
    n_s = draw(st.integers(1, max_students))
    n_c = draw(st.integers(1, max_classes))
    classes = []
    for j in range(n_c):
        roster = draw(st.sets(st.integers(0, n_s - 1), max_size=n_s))
        days = draw(st.sets(st.sampled_from(["Mo", "Tu", "We", "Th", "Fr", "Sa", "Su"]), max_size=3))
        classes.append((f"c{j}", days, [f"s{i:02d}" for i in roster]))
    return EnrollmentNetwork.from_enrollments(
        [(s, c) for c, _, r in classes for s in r], {c: frozenset(d) for c, d, _ in classes}
    )


# -- parsing ------------------------------------------------------------------


def test_parse_two_rows():
    net = parse_enrollments(HEADER + "s1,c1,MoWe\ns2,c1,MoWe\n")
    assert net.students == {"s1", "s2"}
    assert list(net.classes) == ["c1"]
    assert net.classes["c1"].meeting_days == {"Mo", "We"}
    assert net.classes["c1"].size == 2


def test_parse_header_only():
    net = parse_enrollments(HEADER)
    assert len(net.students) == 0 and len(net.classes) == 0


def test_parse_duplicate_rows_collapse():
    net = parse_enrollments(HEADER + "s1,c1,Tu\ns1,c1,Tu\n")
    assert net.n_enrollments == 1


def test_parse_empty_days_allowed():
    net = parse_enrollments(HEADER + "s1,c1,\ns2,c1,\n")
    assert net.classes["c1"].meeting_days == frozenset()


@pytest.mark.parametrize(
    "body, line",
    [
        ("s1,c1,MoWe\ns2,c1\n", 3),
        ("s1,c1,Xy\n", 2),
        ("s1,c1,MoW\n", 2),
        ("s 1,c1,Mo\n", 2),
        ("s1,c1,Mo\ns2,c1,Tu\n", 3),
    ],
)
def test_parse_errors_carry_line(body, line):
    with pytest.raises(ParseError) as exc:
        parse_enrollments(HEADER + body)
    assert exc.value.line == line


def test_parse_bad_header():
    with pytest.raises(ParseError):
        parse_enrollments("a,b,c\n")


@given(networks())
def test_csv_round_trip(net):
    assert parse_enrollments(to_csv(net)) == net


# -- reductions ---------------------------------------------------------------


def test_drop_degenerate_no_days():
    net = net_of(
        ("big", [], [f"s{i}" for i in range(30)]),
        ("other", ["Mo"], ["s0", "s1"]),
    )
    out = drop_degenerate(net)
    assert list(out.classes) == ["other"]
    assert out.students == {"s0", "s1"}


def test_drop_degenerate_single_student():
    out = drop_degenerate(net_of(("c", ["Mo", "We", "Fr"], ["s1"])))
    assert not out.classes and not out.students


def test_drop_degenerate_fixed_point():
    net = net_of(("c", ["Tu"], ["s1", "s2"]))
    assert drop_degenerate(net) == net


def test_threshold_boundary_is_strict():
    out = apply_threshold(sized(15, 20, 21), 20)
    assert sorted(sec.size for sec in out.classes.values()) == [15, 20]


def test_threshold_infinity_identity():
    net = sized(15, 20, 21)
    assert apply_threshold(net, math.inf) == net


@pytest.mark.parametrize("phi", [1, 0, -5])
def test_threshold_rejects_small_phi(phi):
    with pytest.raises(ValueError):
        apply_threshold(sized(3), phi)


@given(networks(), st.integers(2, 12), st.integers(2, 12))
def test_threshold_idempotent_and_monotone(net, a, b):
    net = drop_degenerate(net)
    lo, hi = min(a, b), max(a, b)
    once = apply_threshold(net, lo)
    assert apply_threshold(once, lo) == once
    assert set(once.classes) <= set(apply_threshold(net, hi).classes)


@given(networks())
def test_drop_degenerate_idempotent(net):
    once = drop_degenerate(net)
    assert drop_degenerate(once) == once
    check_consistency(once)
    assert all(sec.meeting_days and sec.size > 1 for sec in once.classes.values())


def test_largest_component_picks_bigger():
    net = net_of(("a", ["Mo"], ["s1", "s2"]), ("b", ["Mo"], ["s3", "s4", "s5"]))
    assert largest_component(net).students == {"s3", "s4", "s5"}


def test_largest_component_tie_breaks_on_smallest_id():
    net = net_of(("a", ["Mo"], ["s3", "s4"]), ("b", ["Mo"], ["s1", "s9"]))
    assert largest_component(net).students == {"s1", "s9"}


def test_largest_component_connected_identity():
    net = net_of(("a", ["Mo"], ["s1", "s2"]), ("b", ["Tu"], ["s2", "s3"]))
    assert largest_component(net) == net


def test_largest_component_empty():
    assert largest_component(EnrollmentNetwork()) == EnrollmentNetwork()


def _components(net):
    """Plain BFS over the bipartite graph; list of student sets."""
    adj = net.student_classes()
    seen, comps = set(), []
    for start in sorted(adj):
        if start in seen:
            continue
        comp, queue = set(), deque([start])
        seen.add(start)
        while queue:
            s = queue.popleft()
            comp.add(s)
            for c in adj[s]:
                for t in net.classes[c].roster:
                    if t not in seen:
                        seen.add(t)
                        queue.append(t)
        comps.append(comp)
    return comps


@given(networks())
def test_largest_component_matches_bfs(net):
    comps = _components(net)
    lcc = largest_component(net)
    check_consistency(lcc)
    if not comps:
        assert not lcc.classes
        return
    assert lcc.students in comps
    assert all(len(c) <= len(lcc.students) for c in comps)
    # connected: a single BFS component
    assert len(_components(lcc)) == 1


# -- thinning -----------------------------------------------------------------


def test_thin_identity_and_empty():
    net = sized(4, 6)
    rng = np.random.default_rng(0)
    assert thin_uniform(net, net.n_enrollments, rng) == net
    assert thin_uniform(net, 0, rng) == EnrollmentNetwork()


def test_thin_exact_count_and_deterministic():
    net = sized(4, 6)
    a = thin_uniform(net, 6, np.random.default_rng(42))
    b = thin_uniform(net, 6, np.random.default_rng(42))
    assert a.n_enrollments == 6
    assert a == b
    check_consistency(a)


def test_thin_keeps_one_student_classes():
    net = sized(2, 2, 2, 2, 2)
    # some seed yields a class reduced to a single student
    found = False
    for seed in range(50):
        out = thin_uniform(net, 5, np.random.default_rng(seed))
        assert all(sec.size >= 1 for sec in out.classes.values())
        found |= any(sec.size == 1 for sec in out.classes.values())
    assert found


def test_thin_rejects_excess_target():
    with pytest.raises(ValueError):
        thin_uniform(sized(3), 4, np.random.default_rng(0))


def test_thin_removal_is_uniform():
    from scipy.stats import chisquare

    net = sized(3, 5, 4)
    pairs = net.enrollments()
    kept = np.zeros(len(pairs))
    trials = 4000
    for seed in range(trials):
        out = thin_uniform(net, 7, np.random.default_rng(seed))
        for i, (s, c) in enumerate(pairs):
            kept[i] += s in out.classes.get(c, ClassSection(c, frozenset(), frozenset())).roster
    expected = np.full(len(pairs), trials * 7 / len(pairs))
    assert chisquare(kept, expected).pvalue > 1e-3


def test_thinning_target():
    assert thinning_target(sized(10, 30), 20) == 10
    assert thinning_target(sized(10, 30), math.inf) == 40
    assert thinning_target(sized(20, 21), 20) == 20


@given(networks(), st.integers(2, 12))
def test_thinning_target_matches_threshold(net, phi):
    net = drop_degenerate(net)
    assert thinning_target(net, phi) == apply_threshold(net, phi).n_enrollments


# -- stats --------------------------------------------------------------------


def test_stats_empty():
    s = network_stats(EnrollmentNetwork())
    assert (s.n_students, s.n_classes, s.n_enrollments, s.n_students_lcc, s.max_class_size) == (0,) * 5
    assert s.class_size_histogram == {}


def test_stats_small():
    net = net_of(("a", ["Mo"], ["s1", "s2"]), ("b", ["Mo"], ["s2", "s3", "s4"]))
    s = network_stats(net)
    assert s.n_students == 4 and s.n_enrollments == 5 and s.n_students_lcc == 4
    assert s.class_size_histogram == {2: 1, 3: 1}
    assert s.max_class_size == 3


@given(networks())
@settings(max_examples=50)
def test_stats_histogram_sums(net):
    s = network_stats(net)
    assert sum(s.class_size_histogram.values()) == s.n_classes
    assert s.n_students_lcc <= s.n_students
