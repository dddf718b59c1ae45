import pytest

from unhalt.certificate import (
    Certificate,
    CertificateError,
    certificate_from_sexp,
    certificate_to_sexp,
    load,
    save,
)
from unhalt.poly import Poly
from unhalt.tsys import PP_FALSE, PP_TRUE, Assertion, PropPredicate

from conftest import load_corpus_system


def ge(v, c):
    return Poly.var(v) - Poly.const(c)


def relay_check1_cert():
    ts = load_corpus_system("nt_ndet_relay.prog")
    high = PropPredicate((Assertion((ge("x", 9),)),))
    invariants = {loc: high for loc in ts.locations}
    invariants["lout"] = PP_FALSE
    return Certificate(
        kind="check1",
        system=ts,
        params={"c": 1, "d": 1, "D": 0},
        resolution={("l1", "l2", "x"): Poly.const(9)},
        invariants=invariants,
        start=(9, 0),
    )


class TestRoundTrip:
    def test_sexp_round_trip_is_identity(self):
        cert = relay_check1_cert()
        blob = certificate_to_sexp(cert)
        back = certificate_from_sexp(blob)
        assert back.kind == cert.kind
        assert back.params == cert.params
        assert back.start == cert.start
        assert back.resolution == cert.resolution
        assert back.invariants == cert.invariants
        assert back.system.transitions == cert.system.transitions
        assert back.system.theta == cert.system.theta
        assert certificate_to_sexp(back) == blob

    def test_save_load(self, tmp_path):
        cert = relay_check1_cert()
        path = tmp_path / "relay.cert"
        save(cert, path)
        assert certificate_to_sexp(cert) == certificate_to_sexp(load(path))

    def test_unknown_kind_rejected(self):
        with pytest.raises(CertificateError):
            Certificate(kind="check3", system=None, params={}, resolution={})

    def test_optional_fields_survive(self):
        cert = relay_check1_cert()
        cert2 = Certificate(
            kind="check2",
            system=cert.system,
            params={"c": 2, "d": 2, "D": 0},
            resolution=cert.resolution,
            invariants={loc: PP_TRUE for loc in cert.system.locations},
            backward=cert.invariants,
            breach=(("l4", "l3"), (8, 80), (9, 80)),
            reach_path=[("l0", (9, 0)), ("l1", (9, 0))],
            audit={"note": "hand built"},
        )
        back = certificate_from_sexp(certificate_to_sexp(cert2))
        assert back.breach == cert2.breach
        assert back.reach_path == cert2.reach_path
        assert back.backward == cert2.backward
        assert back.audit == cert2.audit
