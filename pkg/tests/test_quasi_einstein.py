import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qeflow import fd
from qeflow.profile import build_profile, flat_disk, round_sphere, uniform_grid
from qeflow.quasi_einstein import (
    INF,
    InducedHError,
    QEStructure,
    cf_predicate,
    weighted_bochner_residual,
    h_exp,
    h_log,
    h_power,
    h_trig,
    induced_h,
    integral_identity_report,
    inv_m,
    mu0_of,
    parse_m,
    qe_residual,
    rc_integral_terms,
    rc_pointwise_residual,
    scalar_identity_residual,
    scalar_identity_residual_const,
    soliton_trace_residuals,
    structure_from_json,
    structure_to_json,
    trace_residual,
    traced_ci_residual,
)


def einstein_s3(npts=201, order=4, m=2):
    return QEStructure(round_sphere(3, npts, order=order), m, 2.0)


def gaussian(npts=400, n=3, r_max=2.0):
    return QEStructure(flat_disk(n, npts, r_max, f=lambda r: r ** 2 / 4), INF, 0.5)


def interior(q):
    return q.geom.margin_mask(1)


class TestParseM:
    @pytest.mark.parametrize("raw,want", [(2, 2), ("3", 3), (4.0, 4), ("inf", INF), ("Infinity", INF), (math.inf, INF)])
    def test_accepts(self, raw, want):
        assert parse_m(raw) == want

    @pytest.mark.parametrize("raw", [0, -1, 2.5, "two", True, -math.inf])
    def test_rejects(self, raw):
        with pytest.raises(ValueError):
            parse_m(raw)

    def test_infinity_zeroes_inverse_exactly(self):
        assert inv_m(INF) == 0.0 and inv_m(4) == 0.25


class TestResiduals:
    def test_einstein_sphere(self):
        q = QEStructure(round_sphere(4, 801), INF, 3.0)
        res = qe_residual(q)
        assert res.max_abs() <= 1e-8
        assert float(np.max(np.abs(trace_residual(q)))) <= 1e-8

    def test_wrong_constant_is_negative_control(self):
        q = QEStructure(round_sphere(4, 201), INF, 4.0)
        assert qe_residual(q).max_abs() == pytest.approx(1.0, abs=1e-6)

    def test_gaussian(self):
        q = gaussian()
        assert qe_residual(q).max_abs() <= 1e-8

    @given(st.integers(0, 2**32 - 1))
    def test_trace_of_residual_is_trace_residual(self, seed):
        rng = np.random.default_rng(seed)
        r = uniform_grid(0, 1, 64)
        phi = r + 0.1 * rng.normal() * r ** 3
        f = rng.normal() * r ** 2 + 0.1 * rng.normal() * r ** 4
        q = QEStructure(build_profile(3, r, phi, f), int(rng.integers(1, 5)), float(rng.normal()))
        diff = qe_residual(q).trace() - trace_residual(q)
        assert float(np.max(np.abs(diff))) <= 1e-12 * max(1.0, float(np.max(np.abs(trace_residual(q)))))


class TestMu0:
    def test_einstein(self):
        mu, dev = mu0_of(einstein_s3())
        assert mu == pytest.approx(2.0, abs=1e-8) and dev < 1e-8

    def test_infinite_m_rejected(self):
        with pytest.raises(ValueError):
            mu0_of(gaussian())

    def test_constant_on_solver_output_and_not_after_perturbation(self, interval_qe):
        q = interval_qe
        mu, dev = mu0_of(q)
        assert dev <= 10 * q.certificate.max_residual
        bumped = QEStructure(q.geom.with_f(q.geom.f + 0.01 * np.sin(q.geom.r)), q.m, q.lam)
        assert mu0_of(bumped)[1] > 1e-4


class TestInducedH:
    def test_einstein_gives_twice_lambda(self):
        q = einstein_s3()
        h = induced_h(q.geom)
        assert float(np.max(np.abs(h - 4.0))) < 1e-7

    def test_holds_by_construction_on_perturbed_sphere(self):
        r = uniform_grid(0, math.pi, 201)
        phi = np.sin(r) * (1 + 0.05 * np.sin(r) ** 2)
        g = build_profile(3, r, phi, topology="closed_sphere")
        h = induced_h(g)
        assert float(np.std(np.asarray(h, float))) > 1e-3
        assert float(np.max(np.abs(traced_ci_residual(g, h)))) <= 1e-12

    def test_flat_raises_with_points(self):
        with pytest.raises(InducedHError) as err:
            induced_h(flat_disk(3, 40))
        assert len(err.value.points) == 40 and "+30 more" in str(err.value)


class TestScalarIdentities:
    def test_einstein_both_sides_vanish(self):
        q = einstein_s3()
        assert float(np.max(scalar_identity_residual_const(q, 4.0))) < 1e-7

    def test_gaussian_every_term_vanishes(self):
        q = gaussian()
        assert float(np.max(scalar_identity_residual(q, np.zeros(400))[interior(q)])) < 1e-10

    def test_converges_on_solver_output(self, interval_structures):
        errs = []
        for q in interval_structures:
            h = induced_h(q.geom)
            errs.append(float(np.max(scalar_identity_residual(q, h)[q.geom.margin_mask(3)])))
        assert errs[-1] < errs[0] / 2 ** 1.8

    def test_weighted_bochner_holds_on_certified_structure(self, interval_qe):
        q = interval_qe
        assert float(np.max(weighted_bochner_residual(q)[q.geom.margin_mask(3)])) < 1e-5

    def test_weighted_bochner_negative_control(self):
        g = round_sphere(3, 201, f=np.cos)
        assert float(np.max(weighted_bochner_residual(QEStructure(g, 2, 2.0)))) > 0.1

    def test_soliton_specialization_matches_induced_h(self):
        q = QEStructure(round_sphere(3, 201), INF, 2.0)
        first, second = soliton_trace_residuals(q, 4.0)
        assert float(np.max(np.abs(first))) < 1e-6 and float(np.max(np.abs(second))) < 1e-6
        # with f constant the two traced identities coincide bit for bit through induced_h
        h = induced_h(q.geom)
        _, again = soliton_trace_residuals(q, h)
        np.testing.assert_array_equal(again, traced_ci_residual(q.geom, h))


class TestRcPath:
    def test_einstein_mu_two_lambda(self):
        q = einstein_s3()
        assert float(np.max(np.abs(rc_pointwise_residual(q, 4.0)))) < 1e-6

    @pytest.mark.parametrize("delta", [1.0, 0.5, -0.5])
    def test_offset(self, delta):
        q = einstein_s3()
        lam, n = 2.0, 3
        vals = rc_pointwise_residual(q, 2 * lam + delta)
        np.testing.assert_allclose(np.asarray(vals, float), -lam * delta * n, atol=1e-6)

    def test_integral_reduces_to_hessian_term(self):
        g = round_sphere(3, 401, f=lambda r: 0.1 * np.cos(r))
        q = QEStructure(g, 2, 2.0)
        t = rc_integral_terms(q, 4.0)
        assert t["offset"] == 0.0 and t["gradient_term"] > 0
        # the divergence terms integrate to zero, leaving the quadratic terms
        assert t["integral"] == pytest.approx(t["predicted"], abs=1e-7)


class TestRigidityReport:
    def test_einstein_is_rigid(self):
        rep = integral_identity_report(einstein_s3(201, order=6))
        assert rep.verdict == "rigid" and rep.h_compatible and rep.lhs_nonnegative
        assert abs(rep.lhs) <= 1e-8 and all(abs(v) <= 1e-8 for v in rep.rhs_terms.values())

    def test_shifted_h_is_inconclusive(self):
        q = einstein_s3()
        rep = integral_identity_report(q, h=4.1)
        assert rep.verdict == "inconclusive" and not rep.h_compatible
        assert rep.lhs == pytest.approx(0.1 * 6 * 2 * math.pi ** 2, rel=1e-6)

    def test_non_rigid_when_f_varies(self):
        g = round_sphere(3, 201, f=lambda r: 0.2 * np.cos(r))
        rep = integral_identity_report(QEStructure(g, 2, 2.0))
        # the metric is Einstein, so only the potential terms can break rigidity
        assert rep.verdict == "non_rigid" and rep.h_compatible
        assert rep.ricci_traceless < 1e-8 and rep.hessian > 0.01 and rep.f_oscillation == pytest.approx(0.2, abs=1e-3)

    def test_perturbed_metric_is_non_rigid(self):
        r = uniform_grid(0, math.pi, 201)
        phi = np.sin(r) * (1 + 0.05 * np.sin(r) ** 2)
        rep = integral_identity_report(QEStructure(build_profile(3, r, phi, topology="closed_sphere"), 2, 2.0))
        assert rep.verdict == "non_rigid" and rep.ricci_traceless > 1e-4

    def test_interval_refused(self):
        with pytest.raises(ValueError):
            integral_identity_report(gaussian())

    def test_json(self):
        d = json.loads(json.dumps(integral_identity_report(einstein_s3()).to_json()))
        assert {"lhs", "verdict", "rhs_total", "hessian", "tol_integral", "npts", "h_grid"} <= set(d)


class TestCF:
    def test_constant_f(self):
        v = cf_predicate(einstein_s3(), np.cos(np.asarray(einstein_s3().geom.r, float)))
        assert v.verdict == "rigid"

    def test_h_equals_f(self):
        g = round_sphere(3, 201, f=np.cos)
        q = QEStructure(g, 2, 2.0)
        v = cf_predicate(q, h_power(g.f + 2, 1.0, 1))
        assert v.verdict == "rigid" and v.coinciding == (0,) and v.bound_satisfied

    def test_decoupled_h(self):
        g = round_sphere(3, 201, f=np.cos)
        h = np.exp(-((np.asarray(g.r, float) - 1.0) ** 2) * 50)
        v = cf_predicate(QEStructure(g, 2, 2.0), h)
        assert v.verdict == "not_applicable" and v.bound_satisfied is None

    def test_families_are_monotone_compositions(self):
        g = round_sphere(3, 201, f=lambda r: 2 + np.cos(r))
        q = QEStructure(g, 2, 2.0)
        for h in (h_power(g.f, 1.0, 2), h_exp(g.f, 1.0, 1, 2.0), h_log(g.f, 1.0, 3), h_trig(g.f, 0.5, 0.5, 1, 2.0)):
            assert cf_predicate(q, h).verdict == "rigid"

    def test_domain_errors(self):
        f = np.array([-1.0, 1.0])
        with pytest.raises(ValueError):
            h_log(f, 1.0, 1)
        with pytest.raises(ValueError):
            h_power(f, 1.0, 0.5)
        with pytest.raises(ValueError):
            h_exp(f, 5.0, 1, 2.0)
        with pytest.raises(ValueError):
            h_trig(f, 3.0, 2.0, 1, 2.0)
        assert np.all(h_power(f, 1.0, 2) == 1.0)


def test_structure_json_round_trip():
    q = QEStructure(round_sphere(3, 51, f=np.cos), INF, 2.0)
    obj = json.loads(json.dumps(structure_to_json(q)))
    assert obj["m"] == "inf" and obj["lambda"] == 2.0
    back = structure_from_json(obj)
    assert back.m == INF and back.geom.topology == "closed_sphere"
    np.testing.assert_allclose(np.asarray(back.geom.f, float), np.asarray(q.geom.f, float))
    with pytest.raises(ValueError):
        structure_from_json({"n": 3})
