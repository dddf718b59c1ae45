"""End-to-end exercises of certificate validation on hand-built data."""

import pytest

from unhalt import reach
from unhalt.certificate import Certificate
from unhalt.certcheck import descend, validate_certificate
from unhalt.poly import Poly
from unhalt.tsys import (
    PP_FALSE,
    PP_TRUE,
    Assertion,
    PropPredicate,
    Transition,
    TransitionSystem,
    prime,
    restrict,
)

from conftest import load_corpus_system
from test_certcheck import (
    RACE_RES,
    RELAY_RES,
    band,
    ge,
    le,
    pred,
    race_backward_map,
    race_forward_map,
    relay_backward_map,
)

RELAY_BOX = (-12, 12)
RACE_BOX = (-5, 110)


def checks_by_name(report):
    return {name: v for name, v in report.checks}


# ---------------------------------------------------------------------------
# check 1: pinned relay never reaches the terminal


def relay_check1_cert(relay_system):
    high = pred(Assertion((ge("x", 9),)))
    invariants = {loc: high for loc in relay_system.locations}
    invariants["lout"] = PP_FALSE
    return Certificate(
        kind="check1",
        system=relay_system,
        params={"c": 1, "d": 1, "D": 0},
        resolution=dict(RELAY_RES),
        invariants=invariants,
        start=(9, 0),
    )


class TestCheck1:
    def test_relay_certificate_validates(self, relay_system):
        report = validate_certificate(
            relay_check1_cert(relay_system), RELAY_BOX
        )
        assert report.ok, "\n".join(report.lines())
        names = set(checks_by_name(report))
        assert {
            "resolution",
            "start-initial",
            "start-in-invariant",
            "terminal-empty",
            "inductive",
            "proper",
            "run-avoids-terminal",
        } <= names

    def test_start_outside_invariant_is_caught(self, relay_system):
        cert = relay_check1_cert(relay_system)
        cert.start = (8, 0)
        report = validate_certificate(cert, RELAY_BOX)
        assert not report.ok
        assert not checks_by_name(report)["start-in-invariant"].ok

    def test_occupied_terminal_is_caught(self, relay_system):
        cert = relay_check1_cert(relay_system)
        cert.invariants = dict(cert.invariants)
        cert.invariants["lout"] = PP_TRUE
        report = validate_certificate(cert, RELAY_BOX)
        assert not report.ok
        assert not checks_by_name(report)["terminal-empty"].ok

    def test_leaky_invariant_is_caught(self, relay_system):
        cert = relay_check1_cert(relay_system)
        cert.invariants = dict(cert.invariants)
        cert.invariants["l2"] = PP_TRUE  # no longer closed at l2 -> l3
        report = validate_certificate(cert, RELAY_BOX)
        assert not report.ok
        assert not checks_by_name(report)["inductive"].ok


# ---------------------------------------------------------------------------
# check 2: a reachable state escapes the backward set


def relay_check2_cert(relay_system):
    return Certificate(
        kind="check2",
        system=relay_system,
        params={"c": 1, "d": 1, "D": 0},
        resolution=dict(RELAY_RES),
        invariants={loc: PP_TRUE for loc in relay_system.locations},
        backward=relay_backward_map(),
        breach=(("l4", "l3"), (8, 8), (9, 8)),
        reach_path=[("l0", (9, 0))],
    )


def race_check2_cert(race_system, path=None):
    return Certificate(
        kind="check2",
        system=race_system,
        params={"c": 2, "d": 2, "D": 0},
        resolution=dict(RACE_RES),
        invariants=race_forward_map(),
        backward=race_backward_map(),
        breach=(("l0", "l1"), (99, 0, 0), (99, 0, 0)),
        reach_path=path,
    )


@pytest.fixture(scope="module")
def race_escape_path(race_system):
    res = reach.find_reachable(
        race_system,
        lambda l, v: (l, v) == ("l1", (99, 0, 0)),
        guide=("l0", (99, 0, 0)),
    )
    assert res.found
    return list(res.path)


class TestCheck2:
    def test_relay_certificate_validates(self, relay_system):
        report = validate_certificate(relay_check2_cert(relay_system), RELAY_BOX)
        assert report.ok, "\n".join(report.lines())
        names = set(checks_by_name(report))
        assert {
            "invariant-inductive",
            "invariant-initiation",
            "backward-inductive",
            "terminal-seed-in-backward",
            "proper",
            "breach",
            "escape-path",
        } <= names

    def test_race_certificate_validates(self, race_system, race_escape_path):
        cert = race_check2_cert(race_system, path=race_escape_path)
        report = validate_certificate(cert, RACE_BOX)
        assert report.ok, "\n".join(report.lines())

    def test_race_without_stored_path_searches(self, race_system):
        cert = race_check2_cert(race_system, path=None)
        report = validate_certificate(cert, RACE_BOX)
        assert report.ok, "\n".join(report.lines())

    def test_non_breach_is_caught(self, race_system, race_escape_path):
        cert = race_check2_cert(race_system, path=race_escape_path)
        cert.breach = (("l0", "l1"), (98, 0, 0), (98, 0, 0))
        report = validate_certificate(cert, RACE_BOX)
        assert not report.ok
        assert not checks_by_name(report)["breach"].ok

    def test_tampered_path_is_caught(self, race_system, race_escape_path):
        bad = list(race_escape_path)
        loc, vals = bad[5]
        bad[5] = (loc, (vals[0] + 1,) + vals[1:])
        cert = race_check2_cert(race_system, path=bad)
        report = validate_certificate(cert, RACE_BOX)
        assert not report.ok
        assert not checks_by_name(report)["escape-path"].ok

    def test_unrestricted_original_would_not_pass(self, race_system):
        # the backward set is only closed once the adversary is pinned:
        # validating with an empty resolution must fail loudly
        cert = race_check2_cert(race_system)
        cert.resolution = {}
        report = validate_certificate(cert, RACE_BOX)
        assert not report.ok


# ---------------------------------------------------------------------------
# modified check: ranked descent on the branch-form twin


def frame_rows(variables):
    rows = []
    for v in variables:
        rows.append(Poly.var(prime(v)) - Poly.var(v))
        rows.append(Poly.var(v) - Poly.var(prime(v)))
    return tuple(rows)


def race_branch_system(race_system):
    """The race with its choice moved into the branching: the u-guarded
    arms become bare alternatives and the assignment location drops out."""
    keep = [
        t
        for t in race_system.transitions
        if t.source != "l2" and (t.source, t.target) != ("l1", "l2")
    ]
    arms = [
        Transition("l1", tgt, frame_rows(race_system.variables))
        for tgt in ("l3", "l4", "l5")
    ]
    return TransitionSystem(
        variables=race_system.variables,
        locations=tuple(l for l in race_system.locations if l != "l2"),
        init=race_system.init,
        terminal=race_system.terminal,
        theta=race_system.theta,
        transitions=tuple(keep + arms),
    )


def pinned_zero_band(lo, hi):
    return pred(
        Assertion(
            (
                ge("n", lo),
                le("n", hi),
                ge("b", 0),
                le("b", 0),
                ge("u", 0),
                le("u", 0),
            )
        )
    )


def race_descent_map(tb):
    dsc = {loc: PP_FALSE for loc in tb.locations}
    dsc["l0"] = pinned_zero_band(0, 99)
    dsc["l1"] = pinned_zero_band(0, 99)
    dsc["l4"] = pinned_zero_band(0, 98)
    dsc["l6"] = pinned_zero_band(0, 98)
    dsc["l7"] = pinned_zero_band(1, 99)
    return dsc


def race_rank_map():
    n = Poly.var("n")
    base = (Poly.const(100) - n) * 5
    return {
        "l0": base + 3,
        "l1": base + 2,
        "l4": base + 1,
        "l6": base,
        "l7": base + 4,
    }


def race_modified_cert(race_system, path=None):
    tb = race_branch_system(race_system)
    return Certificate(
        kind="modified",
        system=race_system,
        params={"c": 2, "d": 2, "D": 1},
        resolution=dict(RACE_RES),
        invariants=race_forward_map(),
        backward=race_backward_map(),
        start=(0, 0, 0),
        reach_path=path,
        branch_system=tb,
        descent=race_descent_map(tb),
        rank=race_rank_map(),
    )


class TestModified:
    def test_race_certificate_validates(self, race_system, race_escape_path):
        cert = race_modified_cert(race_system, path=race_escape_path)
        report = validate_certificate(cert, RACE_BOX)
        assert report.ok, "\n".join(report.lines())
        names = checks_by_name(report)
        assert "escaped the backward set" in names["descent"].reason

    def test_descent_walk_counts_steps(self, race_system):
        cert = race_modified_cert(race_system)
        tb = cert.branch_system
        v = descend(cert, tb, ("l0", (0, 0, 0)), cap=505, ndet_box=(0, 0))
        assert v.ok
        assert "496 steps" in v.reason

    def test_rank_bound_cuts_off(self, race_system):
        cert = race_modified_cert(race_system)
        tb = cert.branch_system
        v = descend(cert, tb, ("l0", (0, 0, 0)), cap=100, ndet_box=(0, 0))
        assert not v.ok
        assert "exceeded" in v.reason

    def test_broken_rank_is_caught(self, race_system, race_escape_path):
        cert = race_modified_cert(race_system, path=race_escape_path)
        cert.rank = dict(cert.rank)
        cert.rank["l6"] = Poly.var("n") * 5  # no longer drops along l4 -> l6
        report = validate_certificate(cert, RACE_BOX)
        assert not report.ok
        assert not checks_by_name(report)["descent"].ok
