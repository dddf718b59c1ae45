import itertools

import pytest
from hypothesis import given, settings, strategies as st

from unhalt import sexp
from unhalt.poly import Poly
from unhalt.tsys import (
    PP_FALSE,
    PP_TRUE,
    Assertion,
    PropPredicate,
    Transition,
    TransitionSystem,
    TsysError,
    analyze_transition,
    complement,
    enumerate_box,
    frame_rows,
    predicate_from_sexp,
    predicate_to_sexp,
    restrict,
    reverse,
    successors,
    swap_primes,
    system_from_sexp,
    system_to_sexp,
    transition_successors,
)

x, y = Poly.var("x"), Poly.var("y")
xp, yp = Poly.var("x'"), Poly.var("y'")
n, b, u = Poly.var("n"), Poly.var("b"), Poly.var("u")


def pp(*disjuncts):
    return PropPredicate(tuple(Assertion(tuple(rows)) for rows in disjuncts))


class TestPredicates:
    def test_holds(self):
        p = pp([n - 1], [-n - 1])  # n >= 1 or n <= -1
        assert p.holds({"n": 1}) and p.holds({"n": -3})
        assert not p.holds({"n": 0})
        assert PP_TRUE.holds({"n": 0})
        assert not PP_FALSE.holds({"n": 0})

    def test_complement_pointwise(self):
        # (n <= 99) or (n == 100 and b <= 0)
        p = pp([99 - n], [n - 100, 100 - n, -b])
        q = complement(p)
        for nv in range(95, 105):
            for bv in range(-2, 3):
                env = {"n": nv, "b": bv}
                assert p.holds(env) != q.holds(env)

    def test_complement_literals(self):
        assert complement(PP_FALSE) == PP_TRUE
        assert complement(PP_TRUE) == PP_FALSE
        back = complement(complement(pp([x], [-x - 5])))
        for v in range(-10, 10):
            assert back.holds({"x": v}) == pp([x], [-x - 5]).holds({"x": v})

    def test_complement_prunes_empty_intervals(self):
        # not(x >= 0 and x <= 5) -> x <= -1 or x >= 6; the cross terms vanish
        p = pp([x, 5 - x])
        q = complement(p)
        assert len(q.disjuncts) == 2

    def test_complement_cap(self):
        wide = pp(*[[x - i, y - i] for i in range(10)])
        with pytest.raises(TsysError):
            complement(wide, cap=4)

    def test_sexp_roundtrip(self):
        p = pp([99 - n], [n - 100, 100 - n, -b])
        q = predicate_from_sexp(sexp.loads_one(sexp.dumps(predicate_to_sexp(p))))
        assert q == p
        assert predicate_from_sexp("false") == PP_FALSE


def two_loc_system():
    """la: x := x + 1 while x <= 3, then stop."""
    frames = frame_rows(("x",))
    return TransitionSystem(
        variables=("x",),
        locations=("la", "lout"),
        init="la",
        terminal="lout",
        theta=Assertion((x, -x)),  # x = 0
        transitions=(
            Transition("la", "la", (3 - x, xp - x - 1, x + 1 - xp)),
            Transition("la", "lout", (x - 4,) + frames),
            Transition("lout", "lout", frames),
        ),
    )


class TestSystemBasics:
    def test_validate_ok(self, relay_system, race_system):
        relay_system.validate()
        race_system.validate()

    def test_validate_catches_bad_terminal(self):
        ts = two_loc_system()
        broken = TransitionSystem(
            ts.variables,
            ts.locations,
            ts.init,
            ts.terminal,
            ts.theta,
            ts.transitions[:-1] + (Transition("lout", "lout", (x - 1,)),),
        )
        with pytest.raises(TsysError):
            broken.validate()

    def test_validate_catches_unknown_variable(self):
        ts = two_loc_system()
        broken = TransitionSystem(
            ts.variables,
            ts.locations,
            ts.init,
            ts.terminal,
            ts.theta,
            ts.transitions + (Transition("la", "la", (Poly.var("z'") - 1,)),),
        )
        with pytest.raises(TsysError):
            broken.validate()

    def test_validate_catches_constrained_ndet(self):
        frames = frame_rows(("x",))
        with pytest.raises(TsysError):
            TransitionSystem(
                ("x",),
                ("la", "lout"),
                "la",
                "lout",
                Assertion(()),
                (
                    Transition("la", "lout", (xp - 1,), ndet_var="x"),
                    Transition("lout", "lout", frames),
                ),
            ).validate()


class TestStepping:
    def test_functional_updates_detected(self, relay_system):
        t = next(t for t in relay_system.transitions if (t.source, t.target) == ("l2", "l3"))
        shape = analyze_transition(relay_system.variables, t)
        assert dict(shape.updates) == {"x": x, "y": 10 * x}
        assert shape.enumerated == ()
        assert shape.guards == ()

    def test_ndet_enumerates_window(self, relay_system):
        succ = successors(relay_system, ("l1", (10, 0)), ndet_box=(-2, 1))
        assert succ == [("l2", (v, 0)) for v in (-2, -1, 0, 1)]

    def test_guards_filter(self, relay_system):
        assert successors(relay_system, ("l0", (10, 0)), (0, 0)) == [("l1", (10, 0))]
        assert successors(relay_system, ("l0", (5, 0)), (0, 0)) == [("lout", (5, 0))]

    def test_every_config_has_a_successor(self, race_system):
        for loc in race_system.locations:
            for vals in [(0, 0, 0), (99, 0, 0), (100, 1, 1), (-3, 2, -2)]:
                assert successors(race_system, (loc, vals), (0, 0))

    def test_reversed_functional_inverse(self, relay_system):
        rev = reverse(relay_system, Assertion(()))
        t = next(t for t in rev.transitions if (t.source, t.target) == ("l3", "l4"))
        # forward was x := x + 1 from l4; reversed steps x back down
        succ = transition_successors(rev, t, (7, 3), (0, 0))
        assert succ == [(6, 3)]

    def test_reversed_residual_filter(self, relay_system):
        rev = reverse(relay_system, Assertion(()))
        t = next(t for t in rev.transitions if (t.source, t.target) == ("l3", "l2"))
        # forward was y := 10 * x: stepping back requires y = 10 * x', and the
        # pre-assignment y is unconstrained (the write forgot it)
        assert transition_successors(rev, t, (5, 50), (-8, 8)) == [
            (5, w) for w in range(-8, 9)
        ]
        assert transition_successors(rev, t, (5, 51), (-8, 8)) == []


class TestReversal:
    def test_pairwise_duality(self, relay_system):
        rev = reverse(relay_system, Assertion(()))
        fwd_by_key = {
            (t.source, t.target): t for t in relay_system.transitions
        }
        for rt in rev.transitions:
            ft = fwd_by_key[(rt.target, rt.source)]
            for vx in range(7, 12):
                for vxp in range(7, 12):
                    env = {"x": vx, "y": 0, "x'": vxp, "y'": 0}
                    swapped = {"x": vxp, "y": 0, "x'": vx, "y'": 0}
                    assert ft.holds(env) == rt.holds(swapped)

    def test_double_reversal_restores_relations(self, relay_system):
        rev = reverse(relay_system, Assertion(()))
        back = reverse(rev, relay_system.theta, init_location=relay_system.init)
        assert set(back.transitions) == {
            Transition(t.source, t.target, t.rows, None)
            for t in relay_system.transitions
        }

    def test_reverse_requires_start(self):
        ts = two_loc_system()
        rev = reverse(ts, Assertion(()))
        assert rev.init == "lout"
        assert rev.terminal is None
        with pytest.raises(TsysError):
            reverse(rev, Assertion(()))

    def test_theta_must_be_unprimed(self):
        with pytest.raises(TsysError):
            reverse(two_loc_system(), Assertion((xp,)))


class TestRestrict:
    def test_restrict_pins_ndet(self, relay_system):
        (t,) = relay_system.ndet_transitions
        res = restrict(relay_system, {t.key(): Poly.const(9)})
        assert res.ndet_transitions == ()
        rt = next(
            s for s in res.transitions if (s.source, s.target) == ("l1", "l2")
        )
        assert transition_successors(res, rt, (42, 7), (0, 0)) == [(9, 7)]

    def test_restrict_checks_coverage(self, relay_system):
        with pytest.raises(TsysError):
            restrict(relay_system, {})
        (t,) = relay_system.ndet_transitions
        with pytest.raises(TsysError):
            restrict(
                relay_system,
                {t.key(): Poly.const(9), ("l9", "l9", "z"): Poly.const(0)},
            )

    def test_restricted_runs_are_runs(self, relay_system):
        (t,) = relay_system.ndet_transitions
        res = restrict(relay_system, {t.key(): Poly.const(9)})
        cfg = ("l0", (10, 0))
        for _ in range(30):
            nxt = successors(res, cfg, (0, 0))
            assert len(nxt) == 1
            # every restricted step is also a step of the original system
            assert nxt[0] in successors(relay_system, cfg, (-64, 63))
            cfg = nxt[0]


class TestInterchange:
    def test_roundtrip(self, relay_system, race_system):
        for ts in (relay_system, race_system):
            text = sexp.pretty(system_to_sexp(ts))
            back = system_from_sexp(sexp.loads_one(text))
            assert back == ts

    def test_reversed_roundtrip_without_terminal(self, relay_system):
        rev = reverse(relay_system, Assertion((x - 1,)))
        back = system_from_sexp(system_to_sexp(rev))
        assert back == rev
        assert back.terminal is None

    def test_rejects_missing_fields(self):
        with pytest.raises(TsysError):
            system_from_sexp(sexp.loads_one("(system (vars x))"))


@st.composite
def small_systems(draw):
    """Tiny two-location systems with assorted update rows."""
    nvars = draw(st.integers(1, 2))
    variables = ("x", "y")[:nvars]
    frames = frame_rows(variables)
    rows_pool = [x - 1, -x, x + y if nvars == 2 else x + 1]
    transitions = [Transition("lout", "lout", frames)]
    for _ in range(draw(st.integers(1, 3))):
        src = draw(st.sampled_from(["la", "lb"]))
        tgt = draw(st.sampled_from(["la", "lb", "lout"]))
        guard = draw(st.sampled_from(rows_pool))
        upd = draw(st.sampled_from([Poly.const(draw(st.integers(-2, 2))), x, -x]))
        d = Poly.var("x'") - upd
        rows = [guard, d, -d]
        for v in variables[1:]:
            fv = Poly.var(v + "'") - Poly.var(v)
            rows.extend([fv, -fv])
        transitions.append(Transition(src, tgt, tuple(rows)))
    return TransitionSystem(
        variables=variables,
        locations=("la", "lb", "lout"),
        init="la",
        terminal=None,
        theta=Assertion(()),
        transitions=tuple(transitions),
    )


@settings(max_examples=40, deadline=None)
@given(small_systems())
def test_reversal_swaps_step_pairs(ts):
    """(c, c') is a step of ts iff (c', c) is a step of the reversal."""
    rev = reverse(ts, Assertion(()), init_location="lout")
    box = (-2, 2)
    fwd_pairs = set()
    for loc in ts.locations:
        for vals in enumerate_box(len(ts.variables), box):
            for nloc, nvals in successors(ts, (loc, vals), box):
                if all(box[0] <= v <= box[1] for v in nvals):
                    fwd_pairs.add(((loc, vals), (nloc, nvals)))
    rev_pairs = set()
    for loc in rev.locations:
        for vals in enumerate_box(len(rev.variables), box):
            for nloc, nvals in successors(rev, (loc, vals), box):
                if all(box[0] <= v <= box[1] for v in nvals):
                    rev_pairs.add(((nloc, nvals), (loc, vals)))
    assert fwd_pairs == rev_pairs
