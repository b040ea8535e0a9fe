"""Tests for the Fenchel-Legendre duality layer."""

import numpy as np
import pytest

from sil import (
    FiberSolveError,
    LagrangianModel,
    HamiltonianModel,
    LegendreDualHamiltonian,
    LegendreDualLagrangian,
    PhysicalHamiltonian,
    QuadraticHamiltonian,
    QuadraticLagrangian,
    TorusMetricHamiltonian,
    check_growth_conditions,
    dual_hamiltonian,
    dual_lagrangian,
    fiber_minimum,
    free_particle,
    harmonic_oscillator,
    legendre_H_to_L,
    legendre_L_to_H,
    pendulum,
    physical_example,
    torus_metric_example,
    verify_duality_identities,
)
from sil.models import TrigField, TrigTerm


def fd_check_hamiltonian(model, t, q, p, h=1e-6):
    """Max relative deviation of the analytic derivatives from central
    finite differences."""
    n = model.n
    gq = np.empty(n)
    gp = np.empty(n)
    hpp = np.empty((n, n))
    hqp = np.empty((n, n))
    hqq = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        gq[j] = (model.H(t, q + e, p) - model.H(t, q - e, p)) / (2 * h)
        gp[j] = (model.H(t, q, p + e) - model.H(t, q, p - e)) / (2 * h)
        hpp[:, j] = (model.dH_p(t, q, p + e) - model.dH_p(t, q, p - e)) / (2 * h)
        hqp[j, :] = (model.dH_p(t, q + e, p) - model.dH_p(t, q - e, p)) / (2 * h)
        hqq[:, j] = (model.dH_q(t, q + e, p) - model.dH_q(t, q - e, p)) / (2 * h)
    worst = 0.0
    for exact, approx in [(model.dH_q(t, q, p), gq), (model.dH_p(t, q, p), gp),
                          (model.d2H_pp(t, q, p), hpp),
                          (model.d2H_qp(t, q, p), hqp),
                          (model.d2H_qq(t, q, p), hqq)]:
        scale = max(1.0, float(np.max(np.abs(exact))))
        worst = max(worst, float(np.max(np.abs(exact - approx))) / scale)
    return worst


class BoundedGradientLagrangian(LagrangianModel):
    """L = sqrt(1 + |v|^2): convex but with gradient trapped in the unit
    ball, so fiber solves for |p| >= 1 must fail."""

    kind = "bounded-gradient"

    def __init__(self, n=1):
        self.n = n
        self.autonomous = True
        self.reversible = True
        self.domain = "torus"

    def L(self, t, q, v):
        v = np.asarray(v, dtype=float)
        return float(np.sqrt(1.0 + v @ v))

    def dL_q(self, t, q, v):
        return np.zeros(self.n)

    def dL_v(self, t, q, v):
        v = np.asarray(v, dtype=float)
        return v / np.sqrt(1.0 + v @ v)

    def d2L_vv(self, t, q, v):
        v = np.asarray(v, dtype=float)
        s = 1.0 + v @ v
        return (np.eye(self.n) - np.outer(v, v) / s) / np.sqrt(s)

    def d2L_vq(self, t, q, v):
        return np.zeros((self.n, self.n))

    def d2L_qq(self, t, q, v):
        return np.zeros((self.n, self.n))


class IndefiniteFiberHamiltonian(HamiltonianModel):
    """Quadratic H with an indefinite fiber Hessian (negative control)."""

    kind = "indefinite"

    def __init__(self):
        self.n = 2
        self.autonomous = True
        self.reversible = True
        self.domain = "chart"
        self._X = np.diag([1.0, -0.5])

    def H(self, t, q, p):
        p = np.asarray(p, dtype=float)
        return float(0.5 * p @ self._X @ p)

    def dH_q(self, t, q, p):
        return np.zeros(2)

    def dH_p(self, t, q, p):
        return self._X @ np.asarray(p, dtype=float)

    def d2H_pp(self, t, q, p):
        return self._X.copy()

    def d2H_qp(self, t, q, p):
        return np.zeros((2, 2))

    def d2H_qq(self, t, q, p):
        return np.zeros((2, 2))


class TestPointwiseTransforms:
    def test_free_particle_self_dual(self):
        model = free_particle(2)
        p = np.array([0.7, -1.3])
        hval, v = legendre_L_to_H(model, 0.3, np.array([0.1, 0.9]), p)
        assert abs(hval - 0.5 * p @ p) < 1e-14
        assert np.max(np.abs(v - p)) < 1e-14

    def test_physical_closed_form_value(self):
        model = physical_example(1)
        t, q = 0.2, np.array([0.37])
        p = np.array([1.4])
        a = model._A_val(t, q)
        vv = model.V.value(t, q)
        hval, v = legendre_L_to_H(model, t, q, p)
        assert abs(hval - (0.5 * (p - a) @ (p - a) + vv)) < 1e-12
        assert np.max(np.abs(v - (p - a))) < 1e-12

    def test_h_to_l_free(self):
        ham = QuadraticHamiltonian(np.eye(1))
        lval, p = legendre_H_to_L(ham, 0.0, np.zeros(1), np.array([2.0]))
        assert abs(lval - 2.0) < 1e-14
        assert abs(p[0] - 2.0) < 1e-14

    def test_round_trip_pointwise(self):
        model = torus_metric_example()
        rng = np.random.default_rng(3)
        for _ in range(25):
            t = float(rng.uniform(0, 1))
            q = rng.uniform(0, 1, 2)
            v = rng.uniform(-3, 3, 2)
            p = model.dL_v(t, q, v)
            hval, vsol = legendre_L_to_H(model, t, q, p)
            lval, psol = legendre_H_to_L(dual_hamiltonian(model), t, q, vsol)
            assert np.max(np.abs(vsol - v)) < 1e-10
            assert np.max(np.abs(psol - p)) < 1e-10
            assert abs(lval - model.L(t, q, v)) < 1e-10
            assert abs(hval + lval - p @ vsol) < 1e-10


class TestClosedFormDuals:
    @pytest.mark.parametrize("ham", [
        dual_hamiltonian(physical_example(2)),
        dual_hamiltonian(torus_metric_example()),
        dual_hamiltonian(pendulum()),
        QuadraticHamiltonian(np.array([[2.0, 0.3], [0.3, 1.0]]),
                             np.array([[0.1, -0.4], [0.2, 0.0]]),
                             np.array([[0.5, 0.1], [0.1, -0.3]])),
    ])
    def test_derivatives_match_finite_differences(self, ham):
        rng = np.random.default_rng(11)
        for _ in range(4):
            t = float(rng.uniform(0, 1))
            q = rng.uniform(0, 1, ham.n)
            p = rng.uniform(-2, 2, ham.n)
            assert fd_check_hamiltonian(ham, t, q, p) < 5e-7

    def test_harmonic_dual_is_classical(self):
        omega = 2 * np.pi
        ham = dual_hamiltonian(harmonic_oscillator(1, omega))
        assert isinstance(ham, QuadraticHamiltonian)
        p = np.array([0.4])
        q = np.array([0.3])
        expected = 0.5 * p @ p + 0.5 * omega ** 2 * q @ q
        assert abs(ham.H(0.0, q, p) - expected) < 1e-12

    def test_quadratic_dual_round_trip(self):
        P = np.array([[2.0, 0.5], [0.5, 1.5]])
        Q = np.array([[0.3, -0.2], [0.1, 0.4]])
        R = np.array([[0.2, 0.0], [0.0, -0.7]])
        model = QuadraticLagrangian(P, Q, R)
        back = dual_lagrangian(dual_hamiltonian(model))
        z = np.zeros(2)
        assert np.max(np.abs(back.d2L_vv(0, z, z) - P)) < 1e-12
        assert np.max(np.abs(back.d2L_vq(0, z, z) - Q)) < 1e-12
        assert np.max(np.abs(back.d2L_qq(0, z, z) - R)) < 1e-12

    def test_catalog_dispatch(self):
        assert isinstance(dual_hamiltonian(physical_example(1)),
                          PhysicalHamiltonian)
        assert isinstance(dual_hamiltonian(pendulum()), TorusMetricHamiltonian)
        ham = dual_hamiltonian(pendulum())
        assert isinstance(dual_lagrangian(ham), type(pendulum()))

    def test_quadratic_hamiltonian_validation(self):
        with pytest.raises(ValueError, match="symmetric"):
            QuadraticHamiltonian(np.array([[1.0, 0.2], [0.0, 1.0]]))
        with pytest.raises(ValueError, match="positive definite"):
            QuadraticHamiltonian(np.array([[1.0, 0.0], [0.0, -1.0]]))


class TestNumericWrappers:
    def test_wrapper_matches_closed_form(self):
        model = pendulum()
        closed = dual_hamiltonian(model)
        wrapped = LegendreDualHamiltonian(model)
        rng = np.random.default_rng(5)
        for _ in range(10):
            t = float(rng.uniform(0, 1))
            q = rng.uniform(0, 1, 1)
            p = rng.uniform(-3, 3, 1)
            assert abs(wrapped.H(t, q, p) - closed.H(t, q, p)) < 1e-10
            for name in ["dH_q", "dH_p", "d2H_pp", "d2H_qp", "d2H_qq"]:
                a = getattr(wrapped, name)(t, q, p)
                b = getattr(closed, name)(t, q, p)
                assert np.max(np.abs(a - b)) < 1e-9

    def test_dual_lagrangian_wrapper(self):
        model = physical_example(2)
        ham = dual_hamiltonian(model)
        back = LegendreDualLagrangian(ham)
        rng = np.random.default_rng(7)
        for _ in range(10):
            t = float(rng.uniform(0, 1))
            q = rng.uniform(0, 1, 2)
            v = rng.uniform(-3, 3, 2)
            assert abs(back.L(t, q, v) - model.L(t, q, v)) < 1e-10
            assert np.max(np.abs(back.dL_q(t, q, v) - model.dL_q(t, q, v))) < 1e-9
            assert np.max(np.abs(back.d2L_vq(t, q, v) - model.d2L_vq(t, q, v))) < 1e-9

    def test_unwrap_round_trip(self):
        model = pendulum()
        wrapped = LegendreDualHamiltonian(model)
        assert dual_lagrangian(wrapped) is model
        ham = dual_hamiltonian(physical_example(1))
        assert dual_hamiltonian(LegendreDualLagrangian(ham)) is ham

    def test_fiber_solve_failure(self):
        model = BoundedGradientLagrangian()
        with pytest.raises(FiberSolveError):
            legendre_L_to_H(model, 0.0, np.zeros(1), np.array([2.0]))

    def test_wrapper_flags(self):
        ham = LegendreDualHamiltonian(pendulum())
        assert ham.reversible and ham.autonomous and ham.domain == "torus"


class TestVerifyIdentities:
    def test_quadratic_pair_near_exact(self):
        model = QuadraticLagrangian(np.array([[2.0, 0.5], [0.5, 1.5]]),
                                    np.array([[0.3, -0.2], [0.1, 0.4]]),
                                    np.array([[0.2, 0.0], [0.0, -0.7]]))
        report = verify_duality_identities(model, samples=200, seed=1)
        assert report.passed
        for name in ["value", "grad_p", "grad_q", "hess_pp", "hess_qp",
                     "hess_qq"]:
            assert report.residuals[name] <= 1e-12

    def test_physical_pair(self):
        model = physical_example(2)
        report = verify_duality_identities(model, samples=300, seed=2)
        assert report.passed
        assert all(report.residuals[k] <= 1e-7 for k in report.residuals)
        assert report.verdicts["derivative_gate"]

    def test_mismatched_pair_flagged(self):
        model = physical_example(1)
        v_wrong = TrigField(1, terms=[TrigTerm("cos", 1.1, (1,))])
        ham = PhysicalHamiltonian(1, model.A, v_wrong)
        report = verify_duality_identities(model, ham, samples=200, seed=3)
        assert not report.passed
        assert report.residuals["grad_q"] >= 1e-2
        assert not report.verdicts["grad_q"]

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            verify_duality_identities(physical_example(1),
                                      dual_hamiltonian(physical_example(2)))

    def test_reversibility_transport(self):
        report = verify_duality_identities(pendulum(), samples=100, seed=4)
        assert report.verdicts["reversibility_flags"]
        assert report.verdicts["reversibility_transport"]
        assert report.residuals["reversibility_transport"] <= 1e-10

    def test_irreversible_pair_flags_agree(self):
        model = physical_example(1)
        assert not model.reversible
        report = verify_duality_identities(model, samples=100, seed=5)
        assert report.verdicts["reversibility_flags"]
        assert "reversibility_transport" not in report.residuals

    def test_round_trip_residual(self):
        report = verify_duality_identities(torus_metric_example(),
                                           samples=200, seed=6)
        assert report.residuals["round_trip"] <= 1e-8


class TestGrowthConditions:
    def test_free_particle_constants(self):
        report = check_growth_conditions(free_particle(1), samples=100, seed=0)
        assert report.passed
        assert abs(report.constants["l2_c"] - 1.0) < 1e-12
        assert abs(report.constants["h2_C1"] - 1.0) < 1e-12
        assert abs(report.constants["h2_C2"] - 1.0) < 1e-12
        assert report.constants["C3"] < 1e-12

    def test_pendulum_band(self):
        report = check_growth_conditions(pendulum(), samples=200, seed=1)
        assert report.passed
        lo, hi = report.constants["dual_band"]
        assert lo <= 1.0 <= hi
        assert abs(report.constants["l2_c"] - 1.0) < 1e-12

    def test_torus_metric_growth(self):
        report = check_growth_conditions(torus_metric_example(),
                                         samples=200, seed=2)
        assert report.passed
        assert report.verdicts["lemma_forward"]
        assert report.verdicts["lemma_converse"]
        assert report.verdicts["dual_band"]

    def test_physical_c3_bound(self):
        report = check_growth_conditions(physical_example(1),
                                         samples=100, seed=3)
        # the fiber minimum of 1/2 |p - A|^2 + V is p = A, with |A| <= 0.4
        assert report.passed
        assert report.constants["C3"] <= 0.4 + 1e-9
        assert report.constants["C3"] >= 0.39

    def test_hamiltonian_side(self):
        ham = dual_hamiltonian(torus_metric_example())
        report = check_growth_conditions(ham, samples=150, seed=4)
        assert report.passed
        assert report.verdicts["inverse_norm_equivalence"]

    def test_indefinite_control_flagged(self):
        report = check_growth_conditions(IndefiniteFiberHamiltonian(),
                                         samples=50, seed=5)
        assert not report.passed
        assert not report.verdicts["fiber_convexity"]
        assert "not positive definite" in report.details["note"]

    def test_time_growth_nonautonomous(self):
        V = TrigField(1, terms=[TrigTerm("cos", 0.5, (1,), 1)])
        from sil import PhysicalLagrangian
        model = PhysicalLagrangian(1, None, V)
        report = check_growth_conditions(model, samples=100, seed=6)
        assert report.constants["h_time_growth_c"] > 0.0
        assert np.isfinite(report.constants["h_time_growth_c"])

    def test_fixed_constants_mode(self):
        report = check_growth_conditions(
            free_particle(1), sample_box={"c": 0.5, "C": 4.0}, fit=False,
            samples=50, seed=7)
        assert report.verdicts["lemma_hypotheses"]
        assert report.passed

    def test_report_serializes(self):
        import json
        report = check_growth_conditions(free_particle(1), samples=20, seed=8)
        blob = json.dumps(report.to_json_dict(), sort_keys=True)
        assert "growth" in blob


class TestFiberMinimum:
    def test_quadratic(self):
        ham = QuadraticHamiltonian(np.eye(2))
        pbar = fiber_minimum(ham, 0.0, np.zeros(2))
        assert np.max(np.abs(pbar)) < 1e-12

    def test_physical_minimum_is_vector_potential(self):
        model = physical_example(1)
        ham = dual_hamiltonian(model)
        for q in [np.array([0.1]), np.array([0.37]), np.array([0.8])]:
            pbar = fiber_minimum(ham, 0.25, q)
            assert np.max(np.abs(pbar - model._A_val(0.25, q))) < 1e-10
