import pytest
from hypothesis import given, strategies as st

from cpsflow.attacker import attacked_run
from cpsflow.errors import DomainViolation, InvalidModel, UnknownComponent
from cpsflow.fixtures import load_fixture
from cpsflow.model import (Choice, ComponentId, CpsModel, CpsState, IntRange, Kind, Trace, run,
                           sample_state, step)

from conftest import scenario

MODELS = ["two-tank-v1", "two-tank-fair", "single-tank", "single-tank-composed"]


def test_component_ids_order_and_names(two_tank):
    m = two_tank.model
    assert [m.name_of(c) for c in m.components()] == ["i1", "i2", "o", "u", "q", "x1", "x2", "y1", "y2"]
    assert ComponentId(Kind.DIGITAL_INPUT, 1) < ComponentId(Kind.DIGITAL_OUTPUT, 0)
    assert m.component("i2") == ComponentId(Kind.DIGITAL_INPUT, 1)
    assert repr(ComponentId(Kind.CONTROLLER_STATE)) == "q"
    with pytest.raises(UnknownComponent):
        m.component("z9")
    with pytest.raises(ValueError):
        ComponentId(Kind.DIGITAL_INPUT, -1)


def test_controllable_kinds():
    assert Kind.DIGITAL_INPUT.controllable and Kind.EXTERNAL_ANALOG.controllable
    assert not any(k.controllable for k in (Kind.CONTROLLER_STATE, Kind.PROCESS_STATE, Kind.OBSERVATION))


def test_domains():
    r = IntRange(0, 3)
    assert 2 in r and 4 not in r and True not in r and 1.0 not in r
    assert r.clamp(-5) == 0 and r.clamp(9) == 3 and len(r) == 4
    c = Choice(("a", "b"))
    assert "a" in c and "z" not in c and len(c) == 2


def test_single_tank_inflow(single_tank):
    m = single_tank.model
    s = m.state(i=(0,), o=("open", "close"), u=(1, 0), q="*", x=(3,), y=(3,))
    assert step(m, s).x == (8,)


def test_single_tank_valves(single_tank):
    m = single_tank.model
    both_open = m.state(i=(10,), o=("close", "close"), u=(1, 1), q="*", x=(10,), y=(10,))
    assert step(m, both_open).x == (12,)
    closed = both_open._replace(u=(0, 0))
    assert step(m, closed).x == (10,)


def test_single_tank_hand_iteration(single_tank):
    m = single_tank.model
    u_in, u_out = m.component("u_in"), m.component("u_out")
    s = m.state(i=(3,), o=("close", "close"), u=(1, 0), q="*", x=(3,), y=(3,))
    attacks = [{u_in: 1, u_out: 0}, {u_in: 1, u_out: 0}, {u_in: 0, u_out: 0}]
    assert [st_.x[0] for st_ in attacked_run(m, s, attacks)] == [3, 8, 13, 13]


def test_two_tank_modes(two_tank):
    m, cfg = two_tank.model, two_tank.config
    x = (50, 50)
    assert m.delta_phi(x, ("q0",)) == (50 - cfg.v1, 50 - cfg.v2)
    assert m.delta_phi(x, ("q1",)) == (50 + cfg.w - cfg.v1, 50 - cfg.v2)
    assert m.delta_phi(x, ("q2",)) == (50 - cfg.v1, 50 + cfg.w - cfg.v2)
    assert m.delta_phi((1, cfg.L), ("q2",)) == (0, cfg.L)


def test_override_o_reaches_u_before_process(two_tank):
    m, s0, cfg = two_tank.model, two_tank.sigma0, two_tank.config
    s1 = step(m, s0._replace(o=("q1",)))
    assert s1.u == ("q1",)
    assert s1.x == (s0.x[0] - cfg.v1, s0.x[1] - cfg.v2)


def test_zero_actuation_identity():
    dom = IntRange(0, 3)
    m = CpsModel("idle", (dom,), (Choice(("n",)),), (Choice((0,)),), Choice(("*",)), (dom,), (dom,),
                 delta_io=lambda q, i: q, gamma_io=lambda q, i: ("n",), gamma_ad=lambda y: y,
                 gamma_da=lambda o: (0,), gamma_phi=lambda x, u: x, delta_phi=lambda x, u: x)
    for x in range(4):
        s = m.state(i=(0,), o=("n",), u=(0,), q="*", x=(x,), y=(x,))
        assert step(m, s).x == (x,)


def test_run_lengths(two_tank):
    t = run(two_tank.model, two_tank.sigma0, 0)
    assert t.states == (two_tank.sigma0,) and t.attacks == ()
    t = run(two_tank.model, two_tank.sigma0, 5)
    assert len(t) == 6 and len(t.attacks) == 5
    with pytest.raises(ValueError):
        Trace((two_tank.sigma0,), (None,))


@pytest.mark.parametrize("name", ["two-tank-v1", "two-tank-fair"])
def test_attack_free_run_stays_in_band(name):
    sc = scenario(name)
    band = sc.band
    for s in run(sc.model, sc.sigma0, 600).states:
        for t in range(2):
            assert band.lo[t] <= s.y[t] <= band.hi[t]


def test_domain_violation(two_tank):
    m = two_tank.model
    bad = two_tank.sigma0._replace(x=(101, 0))
    with pytest.raises(DomainViolation):
        step(m, bad)
    with pytest.raises(DomainViolation):
        m.state(i=(0, 0), o=("q4",), u=("q0",), q="*", x=(0, 0), y=(0, 0))


def test_partial_controller_rejected():
    dom = IntRange(0, 2)
    table = {0: "a", 1: "b"}  # no entry for 2
    m = CpsModel("partial", (dom,), (Choice(("a", "b")),), (dom,), Choice(("*",)), (dom,), (dom,),
                 delta_io=lambda q, i: q, gamma_io=lambda q, i: (table[i[0]],),
                 gamma_ad=lambda y: y, gamma_da=lambda o: (0,),
                 gamma_phi=lambda x, u: x, delta_phi=lambda x, u: x)
    with pytest.raises(InvalidModel):
        m.check_controller_total()


def test_external_channel_follows_schedule():
    sc = load_fixture("single-tank-composed", schedule=(1, 0, 0))
    states = run(sc.model, sc.sigma0, 6).states
    assert [s.u_ext for s in states] == [(1,), (0,), (0,), (1,), (0,), (0,), (1,)]
    assert sc.model.phase(4) == 1 and not sc.model.autonomous


@pytest.mark.parametrize("name", MODELS)
@given(rnd=st.randoms(use_true_random=False))
def test_step_is_deterministic_and_closed(name, rnd):
    m = scenario(name).model
    s = sample_state(m, rnd)
    a, b = step(m, s), step(m, s)
    assert a == b
    assert m.is_valid(a)


@pytest.mark.parametrize("name", MODELS)
@given(rnd=st.randoms(use_true_random=False))
def test_update_is_simultaneous(name, rnd):
    """Each primed part depends only on the unprimed parts named in its equation."""
    m = scenario(name).model
    s, other = sample_state(m, rnd), sample_state(m, rnd)
    base = step(m, s)
    # o' and q' read only q and i
    t = step(m, s._replace(o=other.o, u=other.u, x=other.x, y=other.y))
    assert (t.o, t.q) == (base.o, base.q)
    # x' and y' read only x and u
    t = step(m, s._replace(i=other.i, o=other.o, q=other.q, y=other.y))
    assert (t.x, t.y) == (base.x, base.y)
    # i' reads y; u' reads o
    t = step(m, s._replace(i=other.i, u=other.u, q=other.q, x=other.x))
    assert (t.i, t.u) == (base.i, base.u)


def test_state_equality_is_componentwise(two_tank):
    s = two_tank.sigma0
    assert s == CpsState(*s)
    assert s != s._replace(q="other")
