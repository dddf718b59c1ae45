import pytest

from unhalt import frontend
from unhalt.frontend import FrontendError, parse_program, remove_nondet_branching, lower
from unhalt.poly import Poly
from unhalt.tsys import Transition, frame_rows, prime

from conftest import load_corpus_program

x = Poly.var("x")
y = Poly.var("y")


def transition_map(ts):
    out = {}
    for t in ts.transitions:
        out.setdefault((t.source, t.target), []).append(t)
    return out


class TestRelayLowering:
    """The two-variable relay program pins the whole lowering contract."""

    def test_shape(self, relay_system):
        ts = relay_system
        assert ts.variables == ("x", "y")
        assert ts.locations == ("l0", "l1", "l2", "l3", "l4", "lout")
        assert ts.init == "l0"
        assert ts.terminal == "lout"
        assert ts.theta.rows == ()  # no initial assignments: anything goes

    def test_exact_transitions(self, relay_system):
        ts = relay_system
        frames = frame_rows(("x", "y"))
        xp, yp = Poly.var("x'"), Poly.var("y'")
        expected = [
            Transition("l0", "l1", (x - 9,) + frames),
            Transition("l0", "lout", (8 - x,) + frames),
            Transition("l1", "l2", frame_rows(("x", "y"), except_for=["x"]), "x"),
            Transition("l2", "l3", (yp - 10 * x, 10 * x - yp, xp - x, x - xp)),
            Transition("l3", "l4", (y - x,) + frames),
            Transition("l3", "l0", (x - y - 1,) + frames),
            Transition("l4", "l3", (xp - x - 1, x + 1 - xp, yp - y, y - yp)),
            Transition("lout", "lout", frames),
        ]
        assert list(ts.transitions) == expected

    def test_single_ndet_transition(self, relay_system):
        (t,) = relay_system.ndet_transitions
        assert (t.source, t.target, t.ndet_var) == ("l1", "l2", "x")
        assert all(prime("x") not in p.variables() for p in t.rows)


class TestRaceLowering:
    def test_locations_in_statement_order(self, race_system):
        assert race_system.locations == tuple(f"l{i}" for i in range(10)) + ("lout",)
        assert race_system.variables == ("n", "b", "u")

    def test_theta_pins_all_three(self, race_system):
        env_ok = {"n": 0, "b": 0, "u": 0}
        env_bad = {"n": 0, "b": 1, "u": 0}
        assert race_system.theta.holds(env_ok)
        assert not race_system.theta.holds(env_bad)
        assert len(race_system.theta.rows) == 6

    def test_elif_chain_is_one_location(self, race_system):
        tm = transition_map(race_system)
        # l2 dispatches on u to the three branch bodies
        assert set(k[1] for k in tm if k[0] == "l2") == {"l3", "l4", "l5"}
        assert len(tm[("l2", "l3")]) == 1  # u <= -1
        assert len(tm[("l2", "l4")]) == 1  # not(u <= -1) and u == 0
        assert len(tm[("l2", "l5")]) == 1  # else

    def test_fuse_guard_splits(self, race_system):
        tm = transition_map(race_system)
        assert len(tm[("l7", "l8")]) == 1  # n >= 100 and b >= 1
        assert len(tm[("l7", "l0")]) == 2  # negation splits into two cases
        (fuse,) = tm[("l7", "l8")]
        n, b = Poly.var("n"), Poly.var("b")
        assert set(fuse.rows) >= {n - 100, b - 1}

    def test_inner_loop_has_no_exit(self, race_system):
        tm = transition_map(race_system)
        assert set(k[1] for k in tm if k[0] == "l8") == {"l9"}
        assert set(k[1] for k in tm if k[0] == "l9") == {"l8"}

    def test_arm_bodies_rejoin_after_conditional(self, race_system):
        tm = transition_map(race_system)
        for src in ("l3", "l4", "l5"):
            assert set(k[1] for k in tm if k[0] == src) == {"l6"}


class TestClimbLowering:
    def test_shape(self, climb_system):
        ts = climb_system
        assert ts.locations == ("l0", "l1", "l2", "l3", "lout")
        assert ts.ndet_transitions == ()
        assert ts.theta.rows == ()


class TestBranchForms:
    def test_star_lowered_as_unguarded_branching(self):
        prog = load_corpus_program("nt_branch_race.prog")
        ts = lower(prog)  # as written, no rewriting
        tm = transition_map(ts)
        # the conditional head fans out to all three arms unconditionally
        arms = [k for k in tm if k[0] == "l1"]
        assert len(arms) == 3
        for k in arms:
            (t,) = tm[k]
            assert set(t.rows) == set(frame_rows(ts.variables))

    def test_remove_nondet_branching_inserts_assignments(self):
        prog = remove_nondet_branching(load_corpus_program("nt_branch_race.prog"))
        ts = lower(prog)
        ndets = ts.ndet_transitions
        assert [t.ndet_var for t in ndets] == ["__ndet_0", "__ndet_1"]
        # the two fresh assignments directly precede the conditional
        assert [(t.source, t.target) for t in ndets] == [("l1", "l2"), ("l2", "l3")]
        # arm guards now test the fresh variables
        tm = transition_map(ts)
        (arm0,) = tm[("l3", "l4")]
        nd0 = Poly.var("__ndet_0")
        assert nd0 in {p for p in arm0.rows}
        assert ts.theta.holds({"n": 0, "b": 0, "__ndet_0": 5, "__ndet_1": -7})

    def test_star_choice_semantics_preserved(self):
        # every arm of the rewritten form is still jointly reachable
        prog = remove_nondet_branching(load_corpus_program("nt_branch_race.prog"))
        ts = lower(prog)
        from unhalt.tsys import successors

        state = ("l3", (0, 0, 1, -1))  # n, b, __ndet_0, __ndet_1
        targets = {loc for loc, _ in successors(ts, state, (0, 0))}
        assert targets == {"l4"}
        state = ("l3", (0, 0, -1, 1))
        targets = {loc for loc, _ in successors(ts, state, (0, 0))}
        assert targets == {"l5"}
        state = ("l3", (0, 0, -1, -1))
        targets = {loc for loc, _ in successors(ts, state, (0, 0))}
        assert targets == {"l6"}


class TestPrefix:
    def test_prefix_folds_constants(self):
        ts = frontend.compile_program("x := 3\ny := x + 1\nwhile y >= 0 do skip od")
        assert ts.theta.holds({"x": 3, "y": 4})
        assert not ts.theta.holds({"x": 3, "y": 5})

    def test_prefix_ndet_left_free(self):
        ts = frontend.compile_program("x := ndet()\ny := 2\nwhile y >= 0 do skip od")
        assert ts.theta.holds({"x": -500, "y": 2})
        assert not ts.theta.holds({"x": 0, "y": 3})

    def test_prefix_must_be_constant(self):
        with pytest.raises(FrontendError):
            frontend.compile_program("x := y + 1\nwhile x >= 0 do skip od")

    def test_assign_only_program_goes_straight_to_terminal(self):
        ts = frontend.compile_program("x := 1")
        assert ts.init == "lout"
        assert ts.locations == ("lout",)


class TestParsing:
    def test_reserved_prefix_rejected(self):
        with pytest.raises(FrontendError):
            parse_program("__ndet_0 := 1")

    def test_comparison_flavors(self):
        ts = frontend.compile_program("while x < 3 and x != -2 do x := x + 1 od")
        tm = transition_map(ts)
        assert len(tm[("l0", "l1")]) == 2  # x != -2 splits the entry guard

    def test_strict_inequalities_tighten(self):
        ts = frontend.compile_program("while x > 5 do x := x - 1 od")
        (entry,) = [t for t in ts.transitions if (t.source, t.target) == ("l0", "l1")]
        assert x - 6 in set(entry.rows)

    def test_nested_loop_returns_to_enclosing_head(self, climb_system):
        tm = transition_map(climb_system)
        # inner loop exit continues at the outer head
        assert ("l2", "l0") in tm

    def test_if_without_else_falls_through(self):
        ts = frontend.compile_program(
            "while x >= 0 do if x >= 10 then x := 0 fi od"
        )
        tm = transition_map(ts)
        assert ("l1", "l0") in tm  # fall-through on the negated guard
        assert ("l1", "l2") in tm
        assert ("l2", "l0") in tm

    def test_parse_errors(self):
        for bad in ["while x do skip od", "if x >= 0 then skip", "x := ", "od"]:
            with pytest.raises(FrontendError):
                parse_program(bad)

    def test_trailing_garbage(self):
        with pytest.raises(FrontendError):
            parse_program("skip\n)")
