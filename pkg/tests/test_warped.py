import numpy as np
import pytest
from hypothesis import given, strategies as st

from qeflow.profile import build_profile, round_sphere, uniform_grid
from qeflow.quasi_einstein import INF, QEStructure, mu0_of
from qeflow.warped import (
    ContractViolation,
    WarpedSpec,
    horizontal_relation_residual,
    profile_tensors,
    random_operator_fields,
    scalar_trace_chain,
    trace_consistency,
    warped_ricci_residual,
    warped_term_groups,
)


def einstein_base(npts=201, m=2):
    return QEStructure(round_sphere(3, npts), m, 2.0)


class TestCorrespondence:
    def test_einstein_base_is_a_product(self):
        res = [warped_ricci_residual(WarpedSpec(einstein_base(k), 2.0)) for k in (101, 201)]
        assert res[1] < 1e-7 and res[1] < res[0]

    def test_certified_base(self, interval_qe):
        q = interval_qe
        res = warped_ricci_residual(WarpedSpec.from_base(q))
        assert res <= 10 * (q.certificate.max_residual + float(q.geom.h) ** 2)

    def test_negative_control(self, interval_qe):
        mu0 = mu0_of(interval_qe)[0]
        spec = WarpedSpec(interval_qe, mu0 + 1)
        with pytest.raises(ContractViolation):
            warped_ricci_residual(spec)
        assert warped_ricci_residual(spec, enforce_mu0=False) > 0.1

    def test_gauge_shift_of_potential(self, interval_qe):
        q = interval_qe
        c = 0.7
        shifted = QEStructure(q.geom.with_f(q.geom.f + c), q.m, q.lam)
        base = warped_ricci_residual(WarpedSpec.from_base(q))
        spec = WarpedSpec.from_base(shifted)
        assert spec.fiber_mu == pytest.approx(WarpedSpec.from_base(q).fiber_mu * np.exp(-2 * c / q.m), rel=1e-12)
        assert warped_ricci_residual(spec) == pytest.approx(base, rel=1e-6, abs=1e-14)

    def test_contract(self):
        with pytest.raises(ValueError):
            WarpedSpec(QEStructure(round_sphere(3, 51), INF, 2.0), 2.0)
        with pytest.raises(ValueError):
            WarpedSpec(QEStructure(round_sphere(3, 51), 1, 2.0), 2.0)


class TestHorizontalRelation:
    def test_einstein_base(self):
        assert horizontal_relation_residual(einstein_base(), 4.0) < 1e-8

    def test_einstein_wrong_mu(self):
        # left side is R itself, right side vanishes
        assert horizontal_relation_residual(einstein_base(), 3.0) == pytest.approx(1.0, abs=1e-8)

    @given(st.integers(0, 2**32 - 1), st.sampled_from([3, 4]), st.sampled_from([1, 2, 5, INF]))
    def test_trace_consistency_on_random_fields(self, seed, n, m):
        R, v, H, DR = random_operator_fields(np.random.default_rng(seed), n, 4)
        scale = max(1.0, float(np.max(np.abs(R))) * float(np.max(np.abs(v))) ** 2, float(np.max(np.abs(H))) ** 2)
        assert trace_consistency(R, v, H, DR, m) <= 1e-10 * scale

    def test_trace_consistency_zero_and_sphere(self):
        R, v, H, DR = (np.zeros_like(a) for a in random_operator_fields(np.random.default_rng(0), 3, 2))
        assert trace_consistency(R, v, H, DR, 2) == 0.0
        q = QEStructure(round_sphere(3, 101, f=np.cos), 2, 2.0)
        assert trace_consistency(*profile_tensors(q), 2) <= 1e-10

    def test_scalar_trace_chain(self, interval_qe):
        traced, predicted = scalar_trace_chain(interval_qe)
        keep = interval_qe.geom.margin_mask(3) & ~interval_qe.geom.pole_mask
        assert float(np.max(np.abs(traced - predicted)[keep])) < 1e-10


class TestTermGroups:
    def test_einstein_base_has_no_potential_terms(self):
        rep = warped_term_groups(einstein_base())
        g = rep["groups"]
        for key in ("directional", "cross_laplacian_part", "nabla_R", "hessian_product", "cross_quadratic_part"):
            assert g[key] == 0.0
        assert g["pullback_laplacian"] < 1e-6
        assert rep["warped_einstein_defect"] < 1e-6

    def test_cancellation_on_certified_base(self, interval_qe):
        rep = warped_term_groups(interval_qe)
        assert rep["groups"]["cross_laplacian_part"] > 1e-3
        assert rep["cancellation_rel"] <= 1e-10

    @given(st.integers(0, 2**32 - 1))
    def test_cancellation_on_arbitrary_profiles(self, seed):
        rng = np.random.default_rng(seed)
        r = uniform_grid(0, 1, 48)
        phi = r + 0.2 * rng.normal() * r ** 3
        f = rng.normal() * r ** 2 + rng.normal() * r ** 4
        q = QEStructure(build_profile(4, r, phi, f), int(rng.integers(1, 6)), float(rng.normal()))
        assert warped_term_groups(q)["cancellation_rel"] <= 1e-10

    def test_infinite_m_refused(self):
        with pytest.raises(ValueError):
            warped_term_groups(QEStructure(round_sphere(3, 51), INF, 2.0))
