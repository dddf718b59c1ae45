import pytest

from unhalt import reach
from unhalt.frontend import compile_program

from conftest import load_corpus_system


def prog(text):
    return compile_program(text)


class TestInitialStates:
    def test_pinned_prefix_needs_no_box(self, race_system):
        assert reach.initial_states(race_system) == [("l0", (0, 0, 0))]

    def test_unbounded_without_box_is_an_error(self, relay_system):
        with pytest.raises(reach.ReachError):
            reach.initial_states(relay_system)

    def test_box_bounds_free_variables(self, relay_system):
        states = reach.initial_states(relay_system, box=(-2, 2))
        assert len(states) == 25
        assert all(loc == "l0" for loc, _ in states)
        assert ("l0", (2, -2)) in states

    def test_box_intersects_partial_bounds(self):
        ts = prog("x := 3\nwhile x >= 0 do x := x - 1 od")
        # theta pins x exactly; the box must not widen it
        assert reach.initial_states(ts, box=(-5, 5)) == [("l0", (3,))]


class TestBfs:
    def test_straight_run_to_terminal(self):
        ts = prog("x := 0\nwhile x <= 2 do x := x + 1 od")
        res = reach.bfs(
            ts, reach.initial_states(ts), lambda l, v: l == "lout", (0, 0)
        )
        assert res.found
        assert res.path[0] == ("l0", (0,))
        assert res.path[-1] == ("lout", (3,))
        assert len(res.path) == 8
        assert reach.path_is_valid(ts, res.path)

    def test_budget_cuts_off(self):
        ts = prog("x := 0\nwhile x >= 0 do x := x + 1 od")
        res = reach.bfs(
            ts, [("l0", (0,))], lambda l, v: False, (0, 0), max_explored=5
        )
        assert res.status == "budget"
        assert res.explored == 5

    def test_exhausts_closed_graph(self):
        ts = prog("x := 10\nwhile x >= 1 do x := x - 1 od")
        res = reach.bfs(ts, [("l0", (10,))], lambda l, v: v[0] == 99, (0, 0))
        assert res.status == "exhausted"

    def test_start_already_at_target(self):
        ts = prog("x := 0\nwhile x <= 2 do x := x + 1 od")
        res = reach.bfs(ts, [("l0", (0,))], lambda l, v: l == "l0", (0, 0))
        assert res.found and res.path == (("l0", (0,)),)


class TestLadder:
    def test_wider_window_unlocks_the_exit(self):
        # under the zero window the loop can never leave x == 0
        ts = prog("x := 0\nwhile x == 0 do x := ndet() od")
        res = reach.find_reachable(ts, lambda l, v: l == "lout")
        assert res.found
        assert res.ndet_box == (-1, 1)
        assert reach.path_is_valid(ts, res.path)

    def test_unreachable_reports_exhausted(self):
        ts = prog("x := 10\nwhile x >= 1 do x := x - 1 od")
        res = reach.find_reachable(ts, lambda l, v: v[0] == 99)
        assert res.status == "exhausted"


class TestGuidedRace:
    def test_guided_search_reaches_the_breach(self, race_system):
        guide = ("l0", (99, 0, 0))
        res = reach.find_reachable(
            race_system,
            lambda l, v: (l, v) == ("l1", (99, 0, 0)),
            guide=guide,
        )
        assert res.found
        assert res.ndet_box == (0, 0)  # the all-zero window already suffices
        assert res.explored < 700
        assert res.path[0] == ("l0", (0, 0, 0))
        assert res.path[-1] == ("l1", (99, 0, 0))
        assert reach.path_is_valid(race_system, res.path)


class TestPathValidation:
    def test_tampered_value_rejected(self):
        ts = prog("x := 0\nwhile x <= 2 do x := x + 1 od")
        res = reach.bfs(
            ts, reach.initial_states(ts), lambda l, v: l == "lout", (0, 0)
        )
        path = list(res.path)
        loc, _ = path[3]
        path[3] = (loc, (42,))
        assert not reach.path_is_valid(ts, path)

    def test_wrong_head_rejected(self):
        ts = prog("x := 5\nwhile x >= 1 do x := x - 1 od")
        assert not reach.path_is_valid(ts, [("l1", (5,))])
        assert not reach.path_is_valid(ts, [("l0", (4,))])
        assert reach.path_is_valid(ts, [("l0", (5,))])
        # ignore the initial condition on demand
        assert reach.path_is_valid(ts, [("l0", (4,))], from_initial=False)

    def test_step_exists_matches_relation(self):
        ts = load_corpus_system("nt_ndet_relay.prog")
        # the increment transition of the inner loop
        assert reach.step_exists(ts, ("l4", (5, 9)), ("l3", (6, 9)))
        assert not reach.step_exists(ts, ("l4", (5, 9)), ("l3", (7, 9)))
        # the nondeterministic assignment relates any pair of x values
        assert reach.step_exists(ts, ("l1", (9, 0)), ("l2", (-77, 0)))
        assert not reach.step_exists(ts, ("l1", (9, 0)), ("l2", (-77, 5)))
