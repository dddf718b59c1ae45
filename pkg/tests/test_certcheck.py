import pytest

from unhalt import certcheck, reach
from unhalt.certcheck import (
    brute_force_nonterm,
    check_recurrence,
    is_inductive,
    is_proper_underapprox,
    random_predicate_map,
    random_system,
    reachability_matrix,
    replay,
    step_matrix,
)
from unhalt.frontend import compile_program
from unhalt.poly import Poly
from unhalt.tsys import (
    PP_FALSE,
    PP_TRUE,
    TRUE_ASSERTION,
    Assertion,
    PropPredicate,
    restrict,
    reverse,
    successors,
)

from conftest import load_corpus_system


def le(v, c):
    """Row for v <= c."""
    return Poly.const(c) - Poly.var(v)


def ge(v, c):
    """Row for v >= c."""
    return Poly.var(v) - Poly.const(c)


def band(v, lo, hi):
    return Assertion((ge(v, lo), le(v, hi)))


def pred(*assertions):
    return PropPredicate(tuple(assertions))


RELAY_RES = {("l1", "l2", "x"): Poly.const(9)}
RACE_RES = {("l1", "l2", "u"): Poly.const(1)}

RELAY_BOX = (-12, 12)
RACE_BOX = (-2, 102)


def relay_backward_map():
    x_small = pred(Assertion((le("x", 8),)))
    return {
        "l0": x_small,
        "l1": PP_FALSE,
        "l2": x_small,
        "l3": x_small,
        "l4": x_small,
        "lout": PP_TRUE,
    }


def race_forward_map():
    tight = pred(band("n", 0, 99))
    wide = pred(band("n", 0, 100))
    return {
        "l0": wide,
        "l1": tight,
        "l2": tight,
        "l3": tight,
        "l4": tight,
        "l5": tight,
        "l6": tight,
        "l7": wide,
        "l8": wide,
        "l9": wide,
        "lout": wide,
    }


def race_backward_map():
    return {
        "lout": pred(band("n", 0, 100)),
        "l0": pred(Assertion((le("n", 100),))),
        "l1": pred(Assertion((le("n", 98),))),
        "l2": pred(
            Assertion((le("n", 98),)),
            Assertion((ge("n", 99), le("n", 99), le("u", 0))),
        ),
        "l3": pred(Assertion((le("n", 99),))),
        "l4": pred(Assertion((le("n", 99),))),
        "l5": pred(Assertion((le("n", 98),))),
        "l6": pred(
            Assertion((le("n", 98),)),
            Assertion((ge("n", 99), le("n", 99), le("b", 0))),
        ),
        "l7": pred(
            Assertion((le("n", 99),)),
            Assertion((ge("n", 100), le("n", 100), le("b", 0))),
        ),
        "l8": PP_FALSE,
        "l9": PP_FALSE,
    }


class TestRelayBackward:
    def test_closed_when_stepped_backward(self, relay_system):
        sub = restrict(relay_system, RELAY_RES)
        rev = reverse(sub, TRUE_ASSERTION)
        v = is_inductive(rev, relay_backward_map(), RELAY_BOX)
        assert v.ok, v.reason

    def test_not_closed_when_stepped_forward(self, relay_system):
        sub = restrict(relay_system, RELAY_RES)
        v = is_inductive(sub, relay_backward_map(), RELAY_BOX)
        assert not v.ok
        (edge, x, xp) = v.counterexample
        assert edge == ("l4", "l3")
        assert x[0] == 8 and xp[0] == 9  # the increment crosses the bound

    def test_forward_invariant_needs_the_restriction(self, relay_system):
        # x >= 9 survives every step once the unconstrained assignment is
        # pinned to 9, but the full system can drop x anywhere.
        high = pred(Assertion((ge("x", 9),)))
        pm = {loc: high for loc in relay_system.locations}
        pm["lout"] = PP_FALSE
        sub = restrict(relay_system, RELAY_RES)
        assert is_inductive(sub, pm, RELAY_BOX).ok
        v = is_inductive(relay_system, pm, RELAY_BOX)
        assert not v.ok
        assert v.counterexample[0] == ("l1", "l2")


class TestRaceBackward:
    def test_location_wise_forward_invariant(self, race_system):
        v = is_inductive(race_system, race_forward_map(), RACE_BOX)
        assert v.ok, v.reason

    def test_uniform_band_is_rejected(self, race_system):
        # A table that is only closed along composed loop paths does not
        # survive the location-wise audit: the increment edge breaks it.
        flat = {loc: pred(band("n", 0, 100)) for loc in race_system.locations}
        v = is_inductive(race_system, flat, RACE_BOX)
        assert not v.ok
        (edge, x, xp) = v.counterexample
        assert edge == ("l6", "l7")
        assert x[0] == 100 and xp[0] == 101

    def test_closed_when_stepped_backward(self, race_system):
        sub = restrict(race_system, RACE_RES)
        seed = band("n", 0, 100)
        rev = reverse(sub, seed)
        v = is_inductive(rev, race_backward_map(), RACE_BOX)
        assert v.ok, v.reason

    def test_breach_step_leaves_the_backward_set(self, race_system):
        bw = race_backward_map()
        assert reach.step_exists(race_system, ("l0", (99, 0, 0)), ("l1", (99, 0, 0)))
        assert bw["l0"].holds({"n": 99, "b": 0, "u": 0})
        assert not bw["l1"].holds({"n": 99, "b": 0, "u": 0})

    def test_restriction_is_proper(self, race_system):
        sub = restrict(race_system, RACE_RES)
        v = is_proper_underapprox(race_system, sub, (-2, 20), ndet_box=(-4, 4))
        assert v.ok, v.reason


class TestProperUnderapprox:
    def test_restricted_relay_is_proper(self, relay_system):
        sub = restrict(relay_system, RELAY_RES)
        v = is_proper_underapprox(relay_system, sub, RELAY_BOX)
        assert v.ok, v.reason

    def test_dropping_an_exit_starves_the_inner_head(self, relay_system):
        sub = restrict(relay_system, RELAY_RES)
        pruned = type(sub)(
            variables=sub.variables,
            locations=sub.locations,
            init=sub.init,
            terminal=sub.terminal,
            theta=sub.theta,
            transitions=tuple(
                t
                for t in sub.transitions
                if (t.source, t.target) != ("l3", "l0")
            ),
        )
        v = is_proper_underapprox(relay_system, pruned, RELAY_BOX)
        assert not v.ok
        assert "loses all successors" in v.reason
        assert v.counterexample[0] == ("l3",)

    def test_foreign_step_is_not_an_underapproximation(self, relay_system):
        # same control skeleton, but the inner loop strides by two
        stride = compile_program(
            "while x >= 9 do\n"
            "    x := ndet()\n"
            "    y := 10 * x\n"
            "    while x <= y do\n"
            "        x := x + 2\n"
            "    od\n"
            "od\n"
        )
        v = is_proper_underapprox(relay_system, stride, RELAY_BOX)
        assert not v.ok
        assert "not in the original" in v.reason
        assert v.counterexample[0] == ("l4", "l3")


class TestReversalDuality:
    """A set is closed under forward steps exactly when its complement is
    closed under reversed steps, as long as both sides see the same
    box-to-box pair relation."""

    BOX = (-3, 3)

    @pytest.mark.parametrize("seed", range(60))
    def test_closure_matches_complement_closure(self, seed):
        ts = random_system(seed)
        pm = random_predicate_map(seed + 1000, ts)
        fwd = is_inductive(
            ts, pm, self.BOX, ndet_box=self.BOX, pairs_in_box=True
        )
        rev = reverse(ts, TRUE_ASSERTION, init_location=ts.init)
        bwd = is_inductive(
            rev,
            certcheck._negated_map(pm),
            self.BOX,
            ndet_box=self.BOX,
            pairs_in_box=True,
        )
        assert fwd.ok == bwd.ok, (seed, fwd.reason, bwd.reason)


class TestMatrixTranspose:
    BOX = (-2, 2)

    @pytest.mark.parametrize("seed", range(20))
    def test_step_and_reach_matrices_transpose(self, seed):
        ts = random_system(seed)
        rev = reverse(ts, TRUE_ASSERTION, init_location=ts.init)
        cf, step_f = step_matrix(ts, self.BOX, self.BOX)
        cr, step_r = step_matrix(rev, self.BOX, self.BOX)
        assert cf == cr
        assert (step_f == step_r.T).all()
        _, reach_f = reachability_matrix(ts, self.BOX, self.BOX)
        _, reach_r = reachability_matrix(rev, self.BOX, self.BOX)
        assert (reach_f == reach_r.T).all()


TERMINATING = [
    "t_branch_drop",
    "t_countdown",
    "t_drain_pair",
    "t_guard_gate",
    "t_mirror_meet",
    "t_mod_march",
    "t_nested_drain",
    "t_step_fence",
    "t_sum_cap",
    "t_toggle_down",
]


class TestBruteForce:
    @pytest.mark.parametrize("name", TERMINATING)
    def test_terminating_corpus_is_clean(self, name):
        ts = load_corpus_system(name + ".prog")
        res = brute_force_nonterm(ts, (-16, 15))
        assert res.status == "all-terminate", (name, res.reason)

    def test_race_has_a_reachable_cycle(self, race_system):
        res = brute_force_nonterm(race_system, (-5, 110))
        assert res.status == "nonterminating"
        assert res.stem[-1] == res.cycle[0] == res.cycle[-1]
        lasso = list(res.stem) + list(res.cycle[1:])
        assert reach.path_is_valid(race_system, lasso)

    def test_flip_sign_cycles(self):
        ts = load_corpus_system("nt_flip_sign.prog")
        res = brute_force_nonterm(ts, (-2, 2))
        assert res.status == "nonterminating"
        assert reach.path_is_valid(
            ts, list(res.stem) + list(res.cycle[1:])
        )

    def test_escaping_run_is_inconclusive(self):
        ts = load_corpus_system("nt_count_up.prog")
        res = brute_force_nonterm(ts, (-16, 15))
        assert res.status == "inconclusive"
        assert "left the box" in res.reason


class TestRecurrence:
    def test_flip_sign_orbit(self):
        ts = load_corpus_system("nt_flip_sign.prog")
        orbit = pred(band("x", 1, 1), band("x", -1, -1))
        pm = {"l0": orbit, "l1": orbit, "lout": PP_FALSE}
        v = check_recurrence(ts, pm, (-4, 4), ndet_box=(0, 0))
        assert v.ok, v.reason

    def test_member_without_successor_fails(self):
        ts = load_corpus_system("nt_flip_sign.prog")
        slack = pred(band("x", 1, 1), band("x", -1, -1), band("x", 0, 0))
        pm = {"l0": slack, "l1": slack, "lout": PP_FALSE}
        v = check_recurrence(ts, pm, (-4, 4), ndet_box=(0, 0))
        assert not v.ok
        assert "no successor in the set" in v.reason


class TestReplay:
    def test_restricted_relay_revisits(self, relay_system):
        sub = restrict(relay_system, RELAY_RES)
        res = replay(sub, ("l0", (9, 0)))
        assert res.status == "looping"
        assert res.config == ("l3", (9, 90))

    def test_countdown_parks_at_the_terminal(self):
        ts = load_corpus_system("t_countdown.prog")
        res = replay(ts, ("l0", (10,)))
        assert res.status == "terminal"
        assert res.config == ("lout", (0,))

    def test_climb_runs_off_the_horizon(self, climb_system):
        res = replay(climb_system, ("l0", (1, 1)), horizon=2_000)
        assert res.status == "horizon"
        assert res.steps == 2_000

    def test_unresolved_choice_reports_branching(self, relay_system):
        res = replay(relay_system, ("l1", (9, 0)), ndet_box=(0, 1))
        assert res.status == "branching"


class TestRandomSystems:
    @pytest.mark.parametrize("seed", range(0, 100, 7))
    def test_generated_systems_are_well_formed(self, seed):
        ts = random_system(seed)
        ts.validate()
        pm = random_predicate_map(seed, ts)
        assert set(pm) == set(ts.locations)
        for cfg in certcheck.box_configs(ts, (-1, 1))[:9]:
            for loc, vals in successors(ts, cfg, (-1, 1)):
                assert loc in ts.locations
                assert len(vals) == len(ts.variables)
