import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from campusepi.epidemic import (
    ALLOWED_TRANSITIONS,
    Compartment,
    CompiledNetwork,
    EpidemicParams,
    EpidemicState,
    SimConfig,
    Trajectory,
    class_infection_prob,
    initialize,
    pair_transmission_prob,
    run_simulation,
    step_day,
)
from campusepi.network import ClassSection, EnrollmentNetwork, drop_degenerate, largest_component
from campusepi.synthgen import generate, preset

ALL_DAYS = frozenset({"Mo", "Tu", "We", "Th", "Fr", "Sa", "Su"})


def params(**kw):
    base = dict(theta_I2=0.198, rho_A=0.75, rho_I1=0.63, q_E=0.182, q_A=0.138, q_I1=0.435, q_I2=0.075, q_EA=0.18)
    base.update(kw)
    return EpidemicParams(**base)


def pairs_network(n_pairs, days=ALL_DAYS):
    """Disjoint two-student classes; students s{2i}, s{2i+1}."""
    width = len(str(2 * n_pairs))
    classes = {}
    for i in range(n_pairs):
        c = f"c{i:0{width}d}"
        classes[c] = ClassSection(c, frozenset(days), frozenset({f"s{2*i:0{width}d}", f"s{2*i+1:0{width}d}"}))
    return EnrollmentNetwork(classes)


@pytest.fixture(scope="module")
def tiny_net():
    return largest_component(drop_degenerate(generate(preset("tiny", 4))))


# -- transmission probabilities ----------------------------------------------


def test_pair_prob_secondary_attack_rate():
    assert pair_transmission_prob(0.198, 2) == pytest.approx(0.14, abs=5e-4)


def test_pair_prob_zero_theta():
    assert pair_transmission_prob(0.0, 37) == 0.0


def test_pair_prob_size_four():
    assert pair_transmission_prob(0.240, 4) == pytest.approx(0.120, abs=1e-12)


def test_pair_prob_rejects_singletons():
    with pytest.raises(ValueError):
        pair_transmission_prob(0.2, 1)


def test_pair_prob_clamps_and_counts():
    from collections import Counter

    c = Counter()
    assert pair_transmission_prob(1.9, 2, c) == 1.0
    assert c["tau_clamped"] == 1


def test_class_prob_no_contagious():
    assert class_infection_prob(0, 0, 0, 10, params()) == 0.0


def test_class_prob_single_symptomatic_pair():
    assert class_infection_prob(0, 0, 1, 2, params()) == pytest.approx(0.14, abs=5e-4)


def test_class_prob_product_formula():
    # tau = 0.2 / 2 = 0.1 per symptomatic member; two of them: 1 - 0.9^2
    assert class_infection_prob(0, 0, 2, 4, params(theta_I2=0.2)) == pytest.approx(0.19, abs=1e-12)


def test_class_prob_mixed_compartments():
    p = params(theta_I2=0.2, rho_A=0.5, rho_I1=2.0)
    # tau_A = 0.05, tau_I1 = 0.2, tau_I2 = 0.1 in a class of four
    expected = 1 - 0.95 * 0.8 * 0.9
    assert class_infection_prob(1, 1, 1, 4, p) == pytest.approx(expected, abs=1e-12)


def test_class_prob_precondition():
    with pytest.raises(ValueError):
        class_infection_prob(2, 2, 2, 4, params())


# -- initialization -----------------------------------------------------------


def test_initialize_everyone():
    net = CompiledNetwork(pairs_network(5))
    st0 = initialize(net, SimConfig(n_initial=10), np.random.default_rng(0))
    counts = st0.counts()
    assert counts[Compartment.S] == 0 and counts[Compartment.I2] == 10
    assert st0.day == 0


def test_initialize_too_many():
    with pytest.raises(ValueError):
        initialize(pairs_network(2), SimConfig(n_initial=5), np.random.default_rng(0))


def test_initialize_deterministic():
    net = CompiledNetwork(pairs_network(50))
    a = initialize(net, SimConfig(n_initial=10), np.random.default_rng(7))
    b = initialize(net, SimConfig(n_initial=10), np.random.default_rng(7))
    assert np.array_equal(a.compartments, b.compartments)
    assert (a.compartments == Compartment.I2).sum() == 10


def test_initialize_single_student_network():
    net = EnrollmentNetwork({"c": ClassSection("c", frozenset({"Mo"}), frozenset({"only"}))})
    st0 = initialize(net, SimConfig(n_initial=1), np.random.default_rng(0))
    assert st0.assignment(CompiledNetwork(net)) == {"only": Compartment.I2}


# -- one day ------------------------------------------------------------------


def test_step_no_one_can_move():
    net = CompiledNetwork(pairs_network(3))
    comp = np.array([0, 5, 0, 0, 5, 5], dtype=np.int8)
    out = step_day(EpidemicState(comp, 0), 1, net, params(), np.random.default_rng(0))
    assert np.array_equal(out.compartments, comp)
    assert out.day == 1


def test_step_deterministic_pipeline():
    net = CompiledNetwork(pairs_network(2))
    p = params(theta_I2=0.0, q_E=1, q_A=1, q_I1=1, q_I2=1, q_EA=0)
    comp = np.array([Compartment.E] * 4, dtype=np.int8)
    rng = np.random.default_rng(0)
    s1 = step_day(EpidemicState(comp, 0), 1, net, p, rng)
    assert (s1.compartments == Compartment.I1).all()
    s2 = step_day(s1, 2, net, p, rng)
    assert (s2.compartments == Compartment.I2).all()
    s3 = step_day(s2, 3, net, p, rng)
    assert (s3.compartments == Compartment.R).all()


def test_newly_exposed_do_not_progress_same_day():
    net = CompiledNetwork(pairs_network(200))
    p = params(theta_I2=1.0, q_E=1.0, q_I2=0.0)
    comp = np.tile(np.array([Compartment.I2, Compartment.S], dtype=np.int8), 200)
    out = step_day(EpidemicState(comp, 0), 1, net, p, np.random.default_rng(1))
    assert set(np.unique(out.compartments)) <= {Compartment.S, Compartment.E, Compartment.I2}
    assert (out.compartments == Compartment.E).sum() > 0


def test_no_infection_on_non_meeting_day():
    net = CompiledNetwork(pairs_network(50, days={"Tu"}))
    p = params(theta_I2=1.0, q_I2=0.0)
    comp = np.tile(np.array([Compartment.I2, Compartment.S], dtype=np.int8), 50)
    monday = step_day(EpidemicState(comp, 0), 1, net, p, np.random.default_rng(0))
    assert (monday.compartments == Compartment.S).sum() == 50
    tuesday = step_day(monday, 2, net, p, np.random.default_rng(0))
    assert (tuesday.compartments == Compartment.S).sum() < 50


def test_multiple_class_infection_counts_once():
    # one susceptible sharing two certain-infection classes with symptomatic students
    classes = {
        "a": ClassSection("a", ALL_DAYS, frozenset({"s0", "s1"})),
        "b": ClassSection("b", ALL_DAYS, frozenset({"s0", "s2"})),
    }
    net = CompiledNetwork(EnrollmentNetwork(classes))
    p = params(theta_I2=0.99 * math.sqrt(2), q_I2=0.0)
    comp = np.array([Compartment.S, Compartment.I2, Compartment.I2], dtype=np.int8)
    out = step_day(EpidemicState(comp, 0), 1, net, p, np.random.default_rng(0))
    assert out.counts().sum() == 3


def test_one_day_infection_frequency():
    """Class of two, one symptomatic, meets daily: P(infected after one day) = 0.14."""
    n = 100_000
    net = CompiledNetwork(pairs_network(n))
    comp = np.tile(np.array([Compartment.I2, Compartment.S], dtype=np.int8), n)
    out = step_day(EpidemicState(comp, 0), 1, net, params(q_I2=0.0), np.random.default_rng(2024))
    freq = (out.compartments[1::2] == Compartment.E).mean()
    assert freq == pytest.approx(0.198 / math.sqrt(2), abs=0.004)


# -- whole runs ---------------------------------------------------------------


def test_zero_days(tiny_net):
    traj = run_simulation(tiny_net, params(), SimConfig(n_days=0, n_initial=3, seed=1))
    assert traj.counts.shape == (1, 6)
    assert traj.counts[0, Compartment.I2] == 3


def test_zero_transmissibility(tiny_net):
    traj = run_simulation(tiny_net, params(theta_I2=0.0), SimConfig(n_initial=5, seed=1))
    assert (traj.counts[:, Compartment.S] == traj.counts[0, Compartment.S]).all()


def test_run_deterministic(tiny_net):
    cfg = SimConfig(n_initial=5, seed=99)
    a = run_simulation(tiny_net, params(), cfg)
    b = run_simulation(tiny_net, params(), cfg)
    assert np.array_equal(a.counts, b.counts)


def test_trajectory_csv(tiny_net):
    traj = run_simulation(tiny_net, params(), SimConfig(n_days=5, n_initial=2, seed=0))
    text = traj.to_csv()
    assert text.splitlines()[0] == "day,S,E,A,I1,I2,R"
    assert len(text.splitlines()) == 7
    assert np.array_equal(Trajectory.from_csv(text).counts, traj.counts)


grid_values = st.fixed_dictionaries(
    dict(
        theta_I2=st.sampled_from([0.141, 0.198, 0.240, 0.6]),
        rho_A=st.sampled_from([0.4, 0.75, 1.0]),
        rho_I1=st.sampled_from([0.18, 0.63, 2.26]),
        q_E=st.floats(0.05, 1.0),
        q_A=st.floats(0.05, 1.0),
        q_I1=st.floats(0.05, 1.0),
        q_I2=st.floats(0.05, 1.0),
        q_EA=st.floats(0.0, 1.0),
    )
)


@settings(max_examples=25, deadline=None)
@given(grid_values, st.integers(0, 2**32 - 1))
def test_transitions_follow_the_graph(tiny_net, kw, seed):
    net = CompiledNetwork(tiny_net)
    p = EpidemicParams(**kw)
    rng = np.random.default_rng(seed)
    state = initialize(net, SimConfig(n_initial=5), rng)
    tau = net.transmission_probs(p)
    for d in range(1, 30):
        nxt = step_day(state, d, net, p, rng, tau)
        moved = nxt.compartments != state.compartments
        for a, b in zip(state.compartments[moved], nxt.compartments[moved]):
            assert (Compartment(a), Compartment(b)) in ALLOWED_TRANSITIONS
        state = nxt


def _cohort_exit_times(start, q_name, q, n=100_000, seed=0):
    """Days spent in ``start`` by a cohort with transmission switched off."""
    net = CompiledNetwork(pairs_network(n // 2, days={"Mo"}))
    p = params(theta_I2=0.0, **{q_name: q})
    comp = np.full(n, start, dtype=np.int8)
    state = EpidemicState(comp, 0)
    exit_day = np.zeros(n, dtype=np.int64)
    rng = np.random.default_rng(seed)
    tau = net.transmission_probs(p)
    d = 0
    while (state.compartments == start).any():
        d += 1
        nxt = step_day(state, d, net, p, rng, tau)
        left = (state.compartments == start) & (nxt.compartments != start)
        exit_day[left] = d
        state = nxt
    return exit_day, state


@pytest.mark.parametrize("q", [0.168, 0.182, 0.196])
def test_latent_period_is_geometric(q):
    times, _ = _cohort_exit_times(Compartment.E, "q_E", q)
    assert times.min() >= 1
    assert times.mean() == pytest.approx(1 / q, rel=0.02)
    # geometric: P(T = 1) = q
    assert (times == 1).mean() == pytest.approx(q, abs=0.005)


@pytest.mark.parametrize("q_ea", [0.09, 0.18, 0.26])
def test_routing_fraction(q_ea):
    n = 400_000
    net = CompiledNetwork(pairs_network(n // 2, days={"Mo"}))
    p = params(theta_I2=0.0, q_E=1.0, q_EA=q_ea)
    out = step_day(EpidemicState(np.full(n, Compartment.E, dtype=np.int8), 0), 1, net, p, np.random.default_rng(5))
    frac = (out.compartments == Compartment.A).mean()
    assert (out.compartments == Compartment.I1).sum() + (out.compartments == Compartment.A).sum() == n
    assert frac == pytest.approx(q_ea, rel=0.02)


@pytest.mark.slow
def test_mean_cii_increases_with_theta():
    net = CompiledNetwork(largest_component(drop_degenerate(generate(preset("desk", 2)))))
    means = []
    for theta in (0.05, 0.141, 0.198, 0.240):
        p = params(theta_I2=theta)
        ciis = [
            1 - run_simulation(net, p, SimConfig(n_initial=10, seed=s)).counts[-1, 0] / net.n_students
            for s in range(200)
        ]
        means.append(np.mean(ciis))
    assert all(a <= b for a, b in zip(means, means[1:])), means
