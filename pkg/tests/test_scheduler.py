import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from datasche.config import load_config
from datasche.model import MultiplierSet, QueueState, SlotDecision
from datasche.scheduler import (
    PolicyKind,
    Scheduler,
    SchedulerState,
    cap_uploads,
    datasche_step,
    diminishing_step,
    fixed_collection,
    learning_aid_combine,
    learning_aid_offset,
    update_multipliers,
)
from datasche.sim import run_episode

from conftest import make_config, random_state


def one_by_one(**kw):
    return MultiplierSet(*(np.full(s, kw.get(k, 0.0)) for k, s in
                           (("mu", 1), ("eta", (1, 1)), ("phi", (1, 1)), ("lam", (1, 1)))))


def test_eta_update_example():
    cfg = make_config(n=1, m=1, epsilon=0.1)
    dec = SlotDecision.empty(1, 1)
    dec.x[0, 0] = 10.0
    out = update_multipliers(one_by_one(eta=0.5), dec, np.array([[7.0]]), np.zeros(1), cfg, 0.1)
    assert out.eta[0, 0] == pytest.approx(0.2)


def test_mu_unchanged_when_arrivals_equal_served():
    cfg = make_config(n=1, m=1)
    out = update_multipliers(one_by_one(mu=1.5), SlotDecision.empty(1, 1), np.array([[40.0]]),
                             np.array([40.0]), cfg, 0.1)
    assert out.mu[0] == pytest.approx(1.5)


def test_phi_update_example():
    cfg = make_config(n=6, m=1, delta=0.02)
    dec = SlotDecision.empty(6, 1)
    dec.x[:, 0] = [5.0, 11.0, 11.0, 11.0, 11.0, 11.0]   # total 60, source 0 trains 5
    out = update_multipliers(MultiplierSet.zeros(6, 1), dec, np.zeros((6, 1)), np.zeros(6), cfg, 0.1)
    assert out.phi[0, 0] == pytest.approx(0.38)


@given(st.integers(0, 2 ** 31 - 1), st.floats(1e-3, 2.0))
def test_multipliers_stay_nonnegative(seed, step):
    rng = np.random.default_rng(seed)
    n, m = 4, 3
    cfg = make_config(n=n, m=m)
    mult = MultiplierSet(rng.uniform(0, 1, n), *(rng.uniform(0, 1, (n, m)) for _ in range(3)))
    dec = SlotDecision.empty(n, m)
    dec.x[:] = rng.uniform(0, 50, (n, m))
    out = update_multipliers(mult, dec, rng.uniform(0, 50, (n, m)), rng.uniform(0, 50, n), cfg, step)
    assert out.is_nonnegative()


def test_update_rejects_nonpositive_step():
    cfg = make_config(n=1, m=1)
    with pytest.raises(ValueError):
        update_multipliers(one_by_one(), SlotDecision.empty(1, 1), np.zeros((1, 1)), np.zeros(1), cfg, 0.0)


@pytest.mark.parametrize("eps,pi", [(0.01, 0.4), (1.0, 0.0), (0.1, math.sqrt(0.1))])
def test_learning_aid_offset(eps, pi):
    assert learning_aid_offset(eps) == pytest.approx(pi)


def test_learning_aid_combine_examples():
    sched = SchedulerState.initial(make_config(n=1, m=1, epsilon=0.01))
    sched.theta_actual = one_by_one(mu=1.0, eta=1.0, phi=1.0, lam=1.0)
    sched.theta_empirical = one_by_one(mu=0.6, eta=0.6, phi=0.6, lam=0.6)
    combo = learning_aid_combine(sched)
    assert combo.mu[0] == pytest.approx(1.2) and combo.lam[0, 0] == pytest.approx(1.2)
    sched.theta_empirical = one_by_one(mu=0.4, eta=0.4, phi=0.4, lam=0.4)
    assert learning_aid_combine(sched).eta[0, 0] == pytest.approx(1.0)
    # cold start is negative and stays unclipped
    assert learning_aid_combine(SchedulerState.initial(make_config(epsilon=0.01))).mu[0] == pytest.approx(-0.4)


@pytest.mark.parametrize("t,sigma0,expected", [(3, 1.0, 0.25), (0, 2.5, 2.5), (9, 1.0, 0.1)])
def test_diminishing_step(t, sigma0, expected):
    assert diminishing_step(t, sigma0) == pytest.approx(expected)


def test_diminishing_step_robbins_monro():
    s = np.array([diminishing_step(t, 1.0) for t in range(100000)])
    assert s[-1] < 1e-4 and s.sum() > 10
    assert np.sum(s ** 2) < 2.0
    with pytest.raises(ValueError):
        diminishing_step(-1, 1.0)
    with pytest.raises(ValueError):
        diminishing_step(1, 1.0, power=0.5)


@pytest.mark.parametrize("n,m,served,theta", [
    (6, 3, [[0, 3], [1, 4], [2, 5]], 0.5),
    (3, 3, [[0], [1], [2]], 1.0),
])
def test_fixed_collection(n, m, served, theta):
    alpha, th = fixed_collection(make_config(n=n, m=m))
    for j, sources in enumerate(served):
        assert list(np.nonzero(alpha[:, j])[0]) == sources
        np.testing.assert_allclose(th[sources, j], theta)


def test_fixed_collection_uneven():
    alpha, th = fixed_collection(make_config(n=5, m=3))
    assert list(np.nonzero(alpha[:, 0])[0]) == [0, 3]
    np.testing.assert_allclose(th[[0, 3], 0], 0.5)
    assert list(np.nonzero(alpha[:, 2])[0]) == [2] and th[2, 2] == 1.0


def test_cap_uploads():
    up, starved = cap_uploads(np.array([[30.0, 10.0], [5.0, 0.0]]), np.array([20.0, 100.0]))
    np.testing.assert_allclose(up, [[15.0, 5.0], [5.0, 0.0]])
    assert list(starved) == [True, False]


@pytest.mark.parametrize("policy", [p for p in PolicyKind if p is not PolicyKind.ODT])
def test_cold_start_decision_is_empty(policy, rng):
    cfg = make_config(n=4, m=3)
    state = random_state(rng, 4, 3)
    queues = QueueState(np.full(4, 100.0), np.zeros((4, 3)))
    dec = datasche_step(policy, SchedulerState.initial(cfg), queues, state, cfg)
    assert dec.alpha.sum() == 0 and dec.trained.sum() == 0


def test_collection_begins_once_mu_exceeds_cost(rng):
    cfg = make_config(n=2, m=2, epsilon=0.1)
    state = random_state(rng, 2, 2)
    state.d[:] = 10.0
    sched = Scheduler(PolicyKind.DS, cfg)
    queues = QueueState(np.full(2, 1e4), np.zeros((2, 2)))
    arrivals = np.array([40.0, 40.0])
    dec, _, _ = sched.step(queues, state, arrivals)
    assert dec.alpha.sum() == 0
    np.testing.assert_allclose(sched.state.theta_actual.mu, 0.1 * arrivals)
    dec, _, _ = sched.step(queues, state, arrivals)
    assert dec.alpha.sum() > 0


def test_no_lsa_matches_ds_with_skew_off(rng):
    cfg = make_config(n=4, m=3)
    state = random_state(rng, 4, 3)
    queues = QueueState(np.full(4, 100.0), rng.uniform(0, 30, (4, 3)))
    sched = SchedulerState.initial(cfg)
    sched.theta_actual = MultiplierSet(rng.uniform(1, 3, 4), rng.uniform(0, 1, (4, 3)),
                                       rng.uniform(0, 1, (4, 3)), rng.uniform(0, 1, (4, 3)))
    a = datasche_step(PolicyKind.NO_LSA, sched, queues, state, cfg)
    sched.theta_actual = sched.theta_actual.without_skew()
    b = datasche_step(PolicyKind.DS, sched, queues, state, cfg)
    for f in ("alpha", "theta", "x", "y", "z"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))


def short_episode(policy, horizon=12, seed=3, **kw):
    exp = load_config("testbed")
    return run_episode(exp.episode(seed, policy, horizon=horizon, **kw), record=True)


def test_no_lsa_equivalence_with_loose_delta():
    # delta >= 1 makes both skew gradients non-positive, so phi = lam = 0 under DS too
    ds = short_episode("ds", delta=1.5)
    nl = short_episode("no-lsa", delta=1.5)
    for a, b in zip(ds.records, nl.records):
        for f in ("alpha", "theta", "x", "y", "z"):
            np.testing.assert_array_equal(getattr(a.decision, f), getattr(b.decision, f))


@pytest.mark.parametrize("policy", ["ds", "lds"])
def test_determinism(policy):
    a, b = short_episode(policy), short_episode(policy)
    assert a.summary == b.summary
    for ra, rb in zip(a.records, b.records):
        np.testing.assert_array_equal(ra.decision.x, rb.decision.x)
        np.testing.assert_array_equal(ra.uploads, rb.uploads)


def test_skew_gradient_balance_on_recorded_slots():
    res = short_episode("ds", horizon=20)
    cfg = res.episode.config
    n = cfg.n_sources
    for rec in res.records:
        omega = rec.decision.trained
        total = omega.sum(axis=0)
        grad = (cfg.delta_lo * total[None, :] - omega).sum(axis=0)
        np.testing.assert_allclose(grad, (n * cfg.delta_lo - 1) * total, atol=1e-9)
        np.testing.assert_allclose(grad, -n * cfg.delta * total, atol=1e-9)
        assert np.all(grad <= 1e-9)


def test_lds_empirical_multipliers_grow_faster_early(rng):
    cfg = make_config(n=3, m=2, epsilon=0.01)
    state = random_state(rng, 3, 2)
    sched = Scheduler(PolicyKind.LDS, cfg, sigma0=1.0)
    queues = QueueState(np.full(3, 1e4), np.zeros((3, 2)))
    arrivals = np.full(3, 50.0)
    dec, _, _ = sched.step(queues, state, arrivals)
    assert dec.alpha.sum() == 0
    s = sched.state
    assert np.all(s.theta_empirical.mu > 10 * s.theta_actual.mu)


def test_lds_virtual_decision_recorded():
    res = short_episode("lds", horizon=4)
    assert res.summary["policy"] == "lds"
    sched = Scheduler("lds", res.episode.config)
    assert sched.last_virtual is None
