import numpy as np
import pytest

from app.errors import GammaBoundError
from app.models import DelayKind, DelaySpec
from app.services.delay_service import make_schedule
from app.services.graph_service import build_push_weights, random_strongly_connected
from app.services.protocol_service import (
    InFlightQueue,
    Message,
    final_surplus_bound,
    initial_states,
    run_ppac,
    run_rppac,
    step,
)

ATOL = 1e-12


@pytest.fixture
def zero_pair(pair_graph):
    return make_schedule(DelaySpec(kind=DelayKind.ZERO), pair_graph)


@pytest.fixture
def delayed_pair(pair_graph):
    spec = DelaySpec(kind=DelayKind.CONSTANT, tau_bar=1, per_link_bounds={(0, 1): 1, (1, 0): 0})
    return make_schedule(spec, pair_graph)


def test_single_step_without_delay(pair_graph, zero_pair):
    """Test one round on the two-node network"""
    states = initial_states([0.0, 2.0])
    C = build_push_weights(pair_graph)
    states, inflight = step(states, InFlightQueue(), pair_graph, zero_pair, C, 0.1, 0)
    np.testing.assert_allclose([st.x for st in states], [1.0, 1.0], atol=ATOL)
    np.testing.assert_allclose([st.s for st in states], [-1.0, 1.0], atol=ATOL)
    assert len(inflight) == 0


def test_two_steps_without_delay(pair_graph, zero_pair):
    """Test two rounds on the two-node network"""
    traj = run_rppac(pair_graph, zero_pair, 0.1, [0.0, 2.0], 2)
    np.testing.assert_allclose(traj.x[2], [0.9, 1.1], atol=ATOL)
    np.testing.assert_allclose(traj.s[2], [0.1, -0.1], atol=ATOL)


def test_delayed_hand_trace(pair_graph, delayed_pair):
    """Test two rounds with one delayed link"""
    traj = run_rppac(pair_graph, delayed_pair, 0.1, [0.0, 2.0], 2)
    np.testing.assert_allclose(traj.x[1], [0.0, 1.0], atol=ATOL)
    np.testing.assert_allclose(traj.s[1], [0.0, 1.0], atol=ATOL)
    np.testing.assert_allclose(traj.x[2], [1.0, 0.6], atol=ATOL)
    np.testing.assert_allclose(traj.s[2], [-1.0, 0.9], atol=ATOL)
    assert traj.inflight_surplus[2] == pytest.approx(0.5, abs=ATOL)
    np.testing.assert_allclose(traj.mass(), 2.0, atol=ATOL)


def test_inflight_queue_orders_deliveries():
    """Test in-flight queue delivery order"""
    queue = InFlightQueue()
    queue.push(Message(sender=2, receiver=1, send_time=0, x_payload=1.0, surplus_payload=0.25), 3)
    queue.push(Message(sender=0, receiver=1, send_time=1, x_payload=1.0, surplus_payload=0.5), 3)
    queue.push(Message(sender=0, receiver=2, send_time=1, x_payload=1.0, surplus_payload=1.0), 4)
    assert queue.surplus_in_transit() == pytest.approx(1.75)
    due = queue.pop_due(3)
    assert [m.sender for m in due] == [0, 2]
    assert len(queue) == 1
    assert queue.pop_due(3) == []


def test_single_node_is_stationary(single_graph):
    """Test one node never moves"""
    s = make_schedule(DelaySpec(kind=DelayKind.ZERO), single_graph)
    traj = run_rppac(single_graph, s, 0.5, [3.0], 10)
    np.testing.assert_array_equal(traj.x[:, 0], 3.0)
    np.testing.assert_array_equal(traj.s[:, 0], 0.0)


@pytest.mark.parametrize("tau_bar", [0, 3])
def test_constant_initial_values_stay_fixed(fig1_graph, tau_bar):
    """Test equal initial values stay fixed under delays"""
    s = make_schedule(DelaySpec(kind=DelayKind.UNIFORM, tau_bar=tau_bar, seed=1), fig1_graph)
    traj = run_rppac(fig1_graph, s, 0.1, np.full(10, 0.7), 40)
    np.testing.assert_allclose(traj.x, 0.7, atol=ATOL)
    np.testing.assert_allclose(traj.s, 0.0, atol=ATOL)


def test_converges_to_average_without_delay(fig1_graph):
    """Test convergence to the average without delay"""
    s = make_schedule(DelaySpec(kind=DelayKind.ZERO), fig1_graph)
    traj = run_rppac(fig1_graph, s, 0.1, np.arange(1, 11, dtype=float), 300)
    assert traj.average == pytest.approx(5.5)
    assert np.abs(traj.x[-1] - 5.5).max() < 1e-3


def test_ppac_converges(fig1_graph):
    """Test the static protocol converges"""
    traj = run_ppac(fig1_graph, 0.1, np.arange(1, 11, dtype=float), 300)
    assert np.abs(traj.x[-1] - 5.5).max() < 1e-3


@pytest.mark.parametrize("seed,tau_bar", [(1, 2), (2, 5), (3, 1)])
def test_mass_is_conserved_with_delays(fig1_graph, seed, tau_bar):
    """Surplus in transit is counted until it lands"""
    s = make_schedule(DelaySpec(kind=DelayKind.UNIFORM, tau_bar=tau_bar, seed=seed), fig1_graph)
    traj = run_rppac(fig1_graph, s, 0.1, np.arange(1, 11, dtype=float), 300)
    np.testing.assert_allclose(traj.mass(), 55.0, atol=1e-9)


def test_delays_put_surplus_in_transit(fig1_graph):
    """Test delayed surplus is counted in transit"""
    s = make_schedule(DelaySpec(kind=DelayKind.CONSTANT, tau_bar=2), fig1_graph)
    traj = run_rppac(fig1_graph, s, 0.1, np.arange(1, 11, dtype=float), 5)
    assert np.abs(traj.inflight_surplus[2:]).max() > 0


def test_zero_delays_reduce_to_static_iteration(pair_graph, zero_pair):
    """Test zero delays match the static protocol"""
    a = run_rppac(pair_graph, zero_pair, 0.1, [0.0, 2.0], 50)
    b = run_ppac(pair_graph, 0.1, [0.0, 2.0], 50)
    np.testing.assert_allclose(a.x, b.x, atol=ATOL)
    np.testing.assert_allclose(a.s, b.s, atol=ATOL)


def test_zero_delays_reduce_on_random_graphs(fig1_graph):
    """Test zero delays match the static protocol on random networks"""
    rng = np.random.default_rng(17)
    graphs = [fig1_graph] + [random_strongly_connected(int(rng.integers(2, 9)), 0.3, rng) for _ in range(20)]
    for g in graphs:
        gamma = 0.5 * float(build_push_weights(g)[build_push_weights(g) > 0].min())
        x0 = rng.uniform(0, g.n, size=g.n)
        s = make_schedule(DelaySpec(kind=DelayKind.ZERO), g)
        a = run_rppac(g, s, gamma, x0, 300)
        b = run_ppac(g, gamma, x0, 300)
        np.testing.assert_allclose(a.x, b.x, atol=ATOL)
        np.testing.assert_allclose(a.s, b.s, atol=ATOL)


def test_ppac_stationary_on_equal_values(pair_graph):
    """Test the static protocol keeps equal values"""
    traj = run_ppac(pair_graph, 0.1, [4.0, 4.0], 20)
    np.testing.assert_allclose(traj.x, 4.0, atol=ATOL)
    np.testing.assert_allclose(traj.s, 0.0, atol=ATOL)


def test_surplus_released_on_convergence(fig1_graph):
    """Test surplus drains as states converge"""
    s = make_schedule(DelaySpec(kind=DelayKind.UNIFORM, tau_bar=0, seed=4), fig1_graph)
    traj = run_rppac(fig1_graph, s, 0.1, np.arange(1, 11, dtype=float), 300)
    surplus, deviation = final_surplus_bound(traj)
    assert deviation < 1e-3
    assert surplus < 1e-1


@pytest.mark.parametrize("gamma", [0.0, 0.5, -0.1])
def test_gamma_outside_bound_is_rejected(fig1_graph, gamma):
    """Test gain outside the bound"""
    s = make_schedule(DelaySpec(kind=DelayKind.ZERO), fig1_graph)
    with pytest.raises(GammaBoundError):
        run_rppac(fig1_graph, s, gamma, np.arange(1, 11, dtype=float), 5)
    with pytest.raises(GammaBoundError):
        run_ppac(fig1_graph, gamma, np.arange(1, 11, dtype=float), 5)


def test_force_gamma_runs_anyway(fig1_graph, caplog):
    """Test a forced gain logs a warning and runs"""
    s = make_schedule(DelaySpec(kind=DelayKind.ZERO), fig1_graph)
    traj = run_rppac(fig1_graph, s, 0.5, np.arange(1, 11, dtype=float), 5, force_gamma=True)
    assert traj.iterations == 5
    assert "convergence is not guaranteed" in caplog.text


def test_error_curve_starts_at_initial_spread(fig1_graph):
    """Test error curve at k=0"""
    traj = run_ppac(fig1_graph, 0.1, np.arange(1, 11, dtype=float), 0)
    np.testing.assert_allclose(traj.error, [8.25])
