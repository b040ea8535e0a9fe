"""Loop space: Fourier loops, action derivatives, inertia, orbit search.

Oracles: the free-particle Hessian is diagonal in the Fourier basis with
eigenvalues (2 pi k / tau)^2; pendulum equilibrium counts follow from the
explicit Fourier spectrum (2 pi k)^2 -/+ (2 pi)^2; everything else is
cross-checked against direct quadrature or finite differences.
"""

import json

import numpy as np
import pytest

from sil.loops import (
    AmbiguousSpectrum,
    HessianResult,
    Loop,
    action,
    action_gradient,
    action_hessian,
    action_hessian_direct,
    find_orbit,
    hessian_inertia,
    is_even,
    morse_counts,
    restrict_even,
    sobolev_c0_check,
    velocity_coefficient_vector,
    zero_mode_angle,
    _flatten_coeffs,
    _grad_vector,
    _raw_hessian,
    _unflatten,
)
from sil.models import (
    coupled_pendula,
    free_particle,
    harmonic_oscillator,
    pendulum,
    physical_example,
    torus_metric_example,
    euler_lagrange_residual,
)

TWO_PI = 2.0 * np.pi


def wiggly_loop(n, tau, nf, seed, winding=None, amp=0.3):
    rng = np.random.default_rng(seed)
    decay = amp / (1.0 + np.arange(nf + 1)) ** 2
    cos = rng.standard_normal((nf + 1, n)) * decay[:, None]
    sin = rng.standard_normal((nf + 1, n)) * decay[:, None]
    w = np.zeros(n, dtype=int) if winding is None else np.asarray(winding)
    return Loop(n=n, tau=tau, winding=w, cos=cos, sin=sin)


class TestLoopBasics:
    def test_lift_and_velocity(self):
        nf = 3
        cos = np.zeros((nf + 1, 1))
        sin = np.zeros((nf + 1, 1))
        cos[0, 0] = 0.25
        cos[2, 0] = 0.5
        sin[1, 0] = -0.3
        loop = Loop(n=1, tau=2.0, winding=[1], cos=cos, sin=sin)
        t = 0.37
        w = TWO_PI / 2.0
        want = 0.25 + 0.5 * np.cos(2 * w * t) - 0.3 * np.sin(w * t) + t / 2.0
        assert abs(loop.value(t)[0] - want) < 1e-14
        want_v = -w * np.sin(w * t) * 0.3 * (-1) - 2 * w * 0.5 * np.sin(2 * w * t) + 0.5
        got_v = loop.velocity(t)[0]
        assert abs(got_v - (-0.5 * 2 * w * np.sin(2 * w * t)
                            - 0.3 * w * np.cos(w * t) + 0.5)) < 1e-14 or \
            abs(got_v - want_v) < 1e-14

    def test_winding_boundary(self):
        loop = wiggly_loop(2, 1.5, 8, 0, winding=[2, -1])
        q0 = loop.value(0.0)
        q1 = loop.value(1.5)
        assert np.allclose(q1 - q0, [2.0, -1.0], atol=1e-12)

    def test_winding_must_be_integer(self):
        with pytest.raises(ValueError):
            Loop(n=1, tau=1.0, winding=[0.5], cos=np.zeros((2, 1)),
                 sin=np.zeros((2, 1)))

    def test_grid_bound(self):
        loop = wiggly_loop(1, 1.0, 16, 1)
        with pytest.raises(ValueError):
            loop.grid(32)
        assert len(loop.grid()) == 512

    def test_from_samples_roundtrip(self):
        loop = wiggly_loop(2, 1.2, 6, 2, winding=[1, 0])
        ts = loop.grid(128)
        qs = loop.value(ts)
        back = Loop.from_samples(qs, 1.2, [1, 0], nf=6)
        assert np.max(np.abs(back.cos - loop.cos)) < 1e-12
        assert np.max(np.abs(back.sin - loop.sin)) < 1e-12

    def test_json_roundtrip(self):
        loop = wiggly_loop(2, 0.8, 4, 3, winding=[0, 1])
        doc = json.loads(json.dumps(loop.to_json_dict()))
        back = Loop.from_json_dict(doc)
        assert back.tau == loop.tau
        assert np.array_equal(back.winding, loop.winding)
        assert np.max(np.abs(back.cos - loop.cos)) < 1e-15

    def test_json_missing_field(self):
        with pytest.raises(ValueError, match="fourier.cos"):
            Loop.from_json_dict({"n": 1, "tau": 1.0, "winding": [0],
                                 "fourier": {"sin": [[0.0]]}})

    def test_csv_export(self):
        loop = wiggly_loop(2, 1.0, 2, 4)
        text = loop.to_csv(nt=8)
        lines = text.strip().split("\n")
        assert lines[0] == "t,q1,q2"
        assert len(lines) == 9

    def test_even_restriction(self):
        loop = wiggly_loop(1, 1.0, 4, 5)
        even = restrict_even(loop)
        assert is_even(even)
        assert not is_even(loop)
        with pytest.raises(ValueError, match="winding"):
            restrict_even(wiggly_loop(1, 1.0, 4, 5, winding=[1]))


class TestAction:
    def test_free_particle_winding_action(self):
        # straight line with winding w: action = |w|^2 / (2 tau)
        tau = 2.5
        loop = Loop.constant([0.0, 0.0], tau, nf=4)
        loop = Loop(n=2, tau=tau, winding=[1, -2], cos=loop.cos, sin=loop.sin)
        got = action(free_particle(2), loop)
        assert got == pytest.approx((1 + 4) / (2 * tau), abs=1e-12)

    def test_pendulum_constant_action(self):
        # constant loop at q: action = tau * cos(2 pi q)
        loop = Loop.constant([0.2], 3.0, nf=2)
        got = action(pendulum(), loop)
        assert got == pytest.approx(3.0 * np.cos(TWO_PI * 0.2), abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        model = coupled_pendula()
        loop = wiggly_loop(2, 2.0, 5, 7, winding=[1, 0], amp=0.2)
        gc, gs = action_gradient(model, loop)
        h = 1e-6
        rng = np.random.default_rng(0)
        for _ in range(6):
            k = int(rng.integers(0, 6))
            i = int(rng.integers(0, 2))
            lp = Loop(n=2, tau=2.0, winding=[1, 0], cos=loop.cos.copy(),
                      sin=loop.sin.copy())
            lm = Loop(n=2, tau=2.0, winding=[1, 0], cos=loop.cos.copy(),
                      sin=loop.sin.copy())
            lp.cos[k, i] += h
            lm.cos[k, i] -= h
            fd = (action(model, lp, nt=4096) - action(model, lm, nt=4096)) / (2 * h)
            assert abs(fd - gc[k, i]) < 1e-9
            if k > 0:
                lp = Loop(n=2, tau=2.0, winding=[1, 0], cos=loop.cos.copy(),
                          sin=loop.sin.copy())
                lm = Loop(n=2, tau=2.0, winding=[1, 0], cos=loop.cos.copy(),
                          sin=loop.sin.copy())
                lp.sin[k, i] += h
                lm.sin[k, i] -= h
                fd = (action(model, lp, nt=4096) - action(model, lm, nt=4096)) / (2 * h)
                assert abs(fd - gs[k, i]) < 1e-9


class TestHessian:
    def test_free_particle_spectrum(self):
        tau = 2.0
        h = action_hessian(free_particle(1), Loop.constant([0.3], tau, nf=6))
        got = np.sort(np.linalg.eigvalsh(h.matrix))
        want = np.sort(np.concatenate(
            [[0.0], np.repeat((TWO_PI * np.arange(1, 7) / tau) ** 2, 2)]))
        assert np.max(np.abs(got - want)) < 1e-10

    @pytest.mark.parametrize("factory,n", [
        (pendulum, 1),
        (coupled_pendula, 2),
        (lambda: physical_example(1), 1),
        (torus_metric_example, 2),
    ])
    def test_fft_assembler_matches_direct(self, factory, n):
        model = factory()
        w = np.zeros(n, dtype=int)
        w[0] = 1
        loop = wiggly_loop(n, 1.5, 7, 11, winding=w)
        hf = action_hessian(model, loop)
        hd = action_hessian_direct(model, loop, nf=7, nt=4096)
        scale = 1.0 + np.max(np.abs(hd.matrix))
        assert np.max(np.abs(hf.matrix - hd.matrix)) / scale < 1e-12

    def test_raw_hessian_matches_gradient_fd(self):
        model = coupled_pendula()
        loop = wiggly_loop(2, 2.0, 5, 13, winding=[1, 0], amp=0.2)
        H = _raw_hessian(model, loop)
        x0 = _flatten_coeffs(loop)
        h = 1e-6
        rng = np.random.default_rng(1)
        for idx in rng.choice(len(x0), size=6, replace=False):
            xp = x0.copy()
            xm = x0.copy()
            xp[idx] += h
            xm[idx] -= h
            col = (_grad_vector(model, _unflatten(loop, xp))
                   - _grad_vector(model, _unflatten(loop, xm))) / (2 * h)
            assert np.max(np.abs(col - H[:, idx])) < 1e-8

    def test_pendulum_equilibrium_counts(self):
        model = pendulum()
        top = hessian_inertia(action_hessian(model, Loop.constant([0.0], 1.0, nf=16)))
        assert (top.m_minus, top.m_zero) == (1, 2)
        bottom = hessian_inertia(action_hessian(model, Loop.constant([0.5], 1.0, nf=16)))
        assert (bottom.m_minus, bottom.m_zero) == (0, 0)

    def test_free_particle_counts(self):
        res = hessian_inertia(action_hessian(free_particle(2),
                                             Loop.constant([0.1, 0.9], 1.0, nf=8)))
        assert (res.m_minus, res.m_zero) == (0, 2)

    def test_even_odd_multiset_union(self):
        # for a reversible model and an even loop the full spectrum is the
        # union of the cosine-block and sine-block spectra
        model = pendulum()
        loop = restrict_even(wiggly_loop(1, 1.0, 5, 17, amp=0.15))
        full = np.sort(np.linalg.eigvalsh(action_hessian(model, loop).matrix))
        ev = np.linalg.eigvalsh(action_hessian(model, loop, basis="even").matrix)
        od = np.linalg.eigvalsh(action_hessian(model, loop, basis="odd").matrix)
        union = np.sort(np.concatenate([ev, od]))
        assert np.max(np.abs(full - union)) < 1e-10

    def test_parity_basis_requires_even_loop(self):
        model = pendulum()
        with pytest.raises(ValueError, match="even"):
            action_hessian(model, wiggly_loop(1, 1.0, 5, 19), basis="even")

    def test_parity_basis_requires_reversible_model(self):
        model = physical_example(1)
        loop = restrict_even(wiggly_loop(1, 1.0, 5, 23))
        with pytest.raises(ValueError, match="reversible"):
            action_hessian(model, loop, basis="odd")

    def test_inertia_intervals_flag_straddlers(self):
        # diagonal matrix with an eigenvalue inside the uncertainty band
        diag = np.array([1.0, -0.5, 3e-7, 1e-12])
        hess = HessianResult(matrix=np.diag(diag), basis="full", nf=1,
                             nt=8, n=2, tau=1.0)
        res = hessian_inertia(hess, tol_rel=1e-7)
        assert res.ambiguous
        assert res.m_zero_lo < res.m_zero_hi

    def test_morse_counts_gate(self):
        res = morse_counts(pendulum(), Loop.constant([0.0], 1.0, nf=16))
        assert (res.m_minus, res.m_zero) == (1, 2)


class TestFindOrbit:
    def test_rotating_pendulum_orbit(self):
        orb = find_orbit(pendulum(), tau=3.0, winding=[1], nf=64, seed=0)
        assert orb.converged
        assert orb.residual < 1e-9
        assert orb.grad_norm < 1e-9
        # winding preserved and monotone rotation
        assert orb.loop.winding.tolist() == [1]
        h = action_hessian(pendulum(), orb.loop)
        ang, lam = zero_mode_angle(h, orb.loop)
        assert ang < 1e-4
        assert abs(lam) < 1e-6

    def test_even_contractible_orbit(self):
        orb = find_orbit(pendulum(), tau=3.0, winding=[0], nf=16, seed=1,
                         even=True, q0=[0.45])
        assert orb.converged
        assert orb.residual < 1e-10
        assert is_even(orb.loop)
        # lands on the potential minimum
        assert abs(orb.loop.cos[0, 0] - 0.5) < 1e-8

    def test_free_particle_constant_start_is_done(self):
        orb = find_orbit(free_particle(1), tau=1.0, winding=[0], nf=8,
                         seed=2, q0=[0.3], amplitude=0.0)
        assert orb.converged
        assert orb.iterations <= 1

    def test_even_with_winding_rejected(self):
        with pytest.raises(ValueError):
            find_orbit(pendulum(), tau=1.0, winding=[1], even=True)

    def test_nonconvergence_reports_best(self):
        # two descent steps cannot converge; result must carry diagnostics
        orb = find_orbit(pendulum(), tau=3.0, winding=[1], nf=16, seed=3,
                         max_descent=2, max_newton=0)
        assert not orb.converged
        assert orb.residual > 0
        assert "residual" in orb.message


class TestSobolev:
    def test_constant_loop(self):
        loop = Loop.constant([0.7], 2.0, nf=2)
        rep = sobolev_c0_check(loop)
        assert rep["passed"]
        assert rep["sup_norm"] == pytest.approx(0.7, abs=1e-12)
        assert rep["w12_norm"] == pytest.approx(0.7 * np.sqrt(2.0), abs=1e-12)

    @pytest.mark.parametrize("tau", [0.5, 1.0, 3.0])
    def test_random_loops(self, tau):
        for seed in range(20):
            loop = wiggly_loop(2, tau, 12, seed, amp=1.0)
            rep = sobolev_c0_check(loop)
            assert rep["passed"]
            assert rep["constant"] == pytest.approx(np.sqrt((1 + tau) / tau))

    def test_velocity_coefficient_vector(self):
        loop = wiggly_loop(2, 1.5, 6, 29, winding=[1, -1])
        vvec = velocity_coefficient_vector(loop).reshape(-1, 2)
        ts = loop.grid(128)
        K = loop.nf
        ang = np.outer(ts, np.arange(K + 1)) * TWO_PI / loop.tau
        normc = np.where(np.arange(K + 1) == 0, np.sqrt(1 / loop.tau),
                         np.sqrt(2 / loop.tau))
        basis = np.hstack([np.cos(ang) * normc,
                           np.sin(ang[:, 1:]) * np.sqrt(2 / loop.tau)])
        recon = basis @ vvec
        assert np.max(np.abs(recon - loop.velocity(ts))) < 1e-12
