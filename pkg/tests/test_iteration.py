"""Iterated orbits and their index sequences.

Closed-form anchors: the pendulum equilibrium at the potential top is an
elliptic constant orbit whose k-th iterate has index pair (2k - 1, 2); the
equilibrium at the bottom is hyperbolic with (0, 0) for every k; the free
particle constant loop gives (0, n) for every k.  The symmetric splitting of
the elliptic family is (k, 1) on the cosine block and (k - 1, 1) on the sine
block with mu1 = mu2 = k, nu1 = nu2 = 1.
"""

import json

import numpy as np
import pytest

from sil import (
    IndexRow,
    IndexSequence,
    Loop,
    action,
    detect_stable_subsequence,
    euler_lagrange_residual,
    find_orbit,
    free_particle,
    index_sequence,
    iterate_loop,
    iterate_orbit,
    pendulum,
    physical_example,
    symmetric_split_sequence,
    verify_iteration_inequalities,
)
import sil.iteration


def wiggly_loop(n, tau, nf, seed, amp=0.1):
    rng = np.random.default_rng(seed)
    cos = amp * rng.standard_normal((nf + 1, n)) / (1 + np.arange(nf + 1))[:, None] ** 2
    sin = amp * rng.standard_normal((nf + 1, n)) / (1 + np.arange(nf + 1))[:, None] ** 2
    return Loop(n=n, tau=tau, winding=np.zeros(n, dtype=int), cos=cos, sin=sin)


class TestIterateLoop:
    def test_k_one_is_identity(self):
        loop = wiggly_loop(2, 1.5, 6, 0)
        assert iterate_loop(loop, 1) is loop

    def test_constant_loop_stays_constant(self):
        loop = Loop.constant([0.3, 0.8], 1.0, nf=0)
        for k in (2, 5):
            it = iterate_loop(loop, k)
            assert it.tau == k * 1.0
            assert it.nf == 0
            assert np.all(it.winding == 0)
            assert np.allclose(it.cos[0], [0.3, 0.8])

    def test_trace_repeats_with_winding(self):
        loop = Loop(n=1, tau=2.0, winding=[1],
                    cos=np.array([[0.2], [0.1], [0.05]]),
                    sin=np.array([[0.0], [0.3], [-0.1]]))
        k = 3
        it = iterate_loop(loop, k)
        assert np.all(it.winding == k * loop.winding)
        ts = np.linspace(0.0, k * loop.tau, 97)
        for t in ts:
            j, s = divmod(t, loop.tau)
            want = loop.value(np.array([s]))[0] + j * loop.winding
            got = it.value(np.array([t]))[0]
            assert np.max(np.abs(got - want)) < 1e-12

    def test_velocity_repeats(self):
        loop = wiggly_loop(2, 1.0, 5, 3)
        it = iterate_loop(loop, 4)
        ts = np.linspace(0.0, 4.0, 41)
        want = loop.velocity(np.mod(ts, 1.0))
        got = it.velocity(ts)
        assert np.max(np.abs(got - want)) < 1e-12

    def test_bad_order_raises(self):
        loop = Loop.constant([0.0], 1.0)
        with pytest.raises(ValueError):
            iterate_loop(loop, 0)
        with pytest.raises(ValueError):
            iterate_orbit(loop, -2)


class TestIterateOrbit:
    def test_action_scales_exactly(self):
        model = pendulum()
        loop = wiggly_loop(1, 1.0, 8, 1, amp=0.2)
        base = action(model, loop)
        for k in (2, 3, 5):
            got = action(model, iterate_loop(loop, k))
            assert abs(got - k * base) < 1e-10 * max(1.0, abs(k * base))

    def test_residual_profile_repeats(self):
        # pointwise residual of the iterate repeats the base profile, so its
        # sup never grows; the L^2 norm over [0, k*tau] scales by sqrt(k)
        model = pendulum()
        loop = wiggly_loop(1, 1.0, 8, 2, amp=0.2)
        norm1, prof1 = euler_lagrange_residual(model, loop)
        norm4, prof4 = euler_lagrange_residual(model, iterate_loop(loop, 4))
        assert np.max(prof4) <= 2.0 * np.max(prof1)
        assert abs(norm4 - 2.0 * norm1) < 1e-6 * norm1
        # per-period RMS is preserved
        assert abs(norm4 / 2.0 - norm1) < 1e-6 * norm1

    def test_found_orbit_bookkeeping(self):
        model = pendulum()
        orb = find_orbit(model, tau=3.0, winding=[1], nf=64, seed=0)
        assert orb.converged
        it = iterate_orbit(orb, 4)
        assert it.loop.tau == 4 * orb.loop.tau
        assert abs(it.action - 4 * orb.action) < 1e-12 * max(1.0, abs(orb.action))
        assert abs(it.residual - 2.0 * orb.residual) <= 1e-12 + 1e-9 * orb.residual
        assert it.converged
        recomputed, _ = euler_lagrange_residual(model, it.loop)
        assert recomputed <= 2.0 * it.residual + 1e-9
        assert iterate_orbit(orb, 1) is orb


class TestIndexSequence:
    def test_elliptic_pendulum_top(self):
        seq = index_sequence(pendulum(), Loop.constant([0.0], 1.0),
                             ks=(1, 2, 4, 8), nf_base=16, steps=512)
        for row in seq.rows:
            assert (row.m_minus, row.m_zero) == (2 * row.k - 1, 2)
            assert (row.i, row.nu) == (2 * row.k - 1, 2)
            assert row.agrees
            assert row.verdict_lower and row.verdict_upper
            # bracket collapses to the exact mean index 2
            assert row.mean_lo == 2.0 and row.mean_hi == 2.0
        assert (seq.mean_lo, seq.mean_hi) == (2.0, 2.0)
        assert seq.mean_estimate == 15.0 / 8.0

    def test_hyperbolic_pendulum_bottom(self):
        seq = index_sequence(pendulum(), Loop.constant([0.5], 1.0),
                             ks=(1, 2, 4, 8), nf_base=16, steps=512)
        for row in seq.rows:
            assert (row.m_minus, row.m_zero) == (0, 0)
            assert (row.i, row.nu) == (0, 0)
        rep = verify_iteration_inequalities(seq)
        assert rep["passed"]
        assert rep["zero_mean_candidate"]
        assert all(r["holds"] for r in rep["zero_mean_analogue"])

    def test_free_particle_counts(self):
        seq = index_sequence(free_particle(2), Loop.constant([0.3, 0.7], 1.0),
                             ks=(1, 2, 4), nf_base=16, steps=512)
        for row in seq.rows:
            assert (row.m_minus, row.m_zero) == (0, 2)
            assert (row.i, row.nu) == (0, 2)
            assert row.verdict_lower and row.verdict_upper

    def test_nonconstant_orbit_routes_agree(self):
        model = pendulum()
        orb = find_orbit(model, tau=3.0, winding=[1], nf=64, seed=0)
        assert orb.converged
        seq = index_sequence(model, orb, ks=(1, 2), nf_base=64)
        for row in seq.rows:
            assert row.agrees
        assert any("non-constant" in note for note in seq.notes)

    def test_single_route_hessian(self):
        seq = index_sequence(pendulum(), Loop.constant([0.0], 1.0),
                             ks=(1, 2), routes=("hessian",), nf_base=16)
        for row in seq.rows:
            assert row.i is None and row.nu is None
            assert row.index_pair() == (2 * row.k - 1, 2)
        assert verify_iteration_inequalities(seq)["passed"]

    def test_single_route_maslov(self):
        seq = index_sequence(pendulum(), Loop.constant([0.0], 1.0),
                             ks=(1, 2), routes=("maslov",), steps=512)
        for row in seq.rows:
            assert row.m_minus is None
            assert row.index_pair() == (2 * row.k - 1, 2)
        assert seq.bracket("maslov")["estimate"] == 1.5
        with pytest.raises(ValueError):
            seq.bracket("hessian")

    def test_residual_gate(self):
        loop = wiggly_loop(1, 1.0, 6, 4, amp=0.3)
        with pytest.raises(ValueError):
            index_sequence(pendulum(), loop, ks=(1,))

    def test_input_validation(self):
        loop = Loop.constant([0.0], 1.0)
        with pytest.raises(ValueError):
            index_sequence(free_particle(2), loop, ks=(1,))
        with pytest.raises(ValueError):
            index_sequence(pendulum(), loop, ks=(0, 1))
        with pytest.raises(ValueError):
            index_sequence(pendulum(), loop, ks=(1,), routes=("newton",))
        with pytest.raises(ValueError):
            index_sequence(pendulum(), loop, k_max=0, ks=None)

    def test_route_disagreement_strict_and_flagged(self, monkeypatch):
        real = sil.iteration.morse_counts

        def skewed(model, loop, nf=None, basis="full", tol_rel=1e-7,
                   gate=True, strict=True):
            res = real(model, loop, nf=nf, basis=basis, tol_rel=tol_rel,
                       gate=gate, strict=strict)
            res.m_minus += 1
            return res

        monkeypatch.setattr(sil.iteration, "morse_counts", skewed)
        loop = Loop.constant([0.5], 1.0)
        with pytest.raises(RuntimeError, match="routes disagree"):
            index_sequence(pendulum(), loop, ks=(1,), nf_base=16, steps=512)
        with pytest.warns(UserWarning, match="routes disagree"):
            seq = index_sequence(pendulum(), loop, ks=(1,), nf_base=16,
                                 steps=512, strict=False)
        row = seq.rows[0]
        assert row.agrees is False
        assert "route-disagreement" in row.note
        assert (row.m_minus, row.i) == (1, 0)

    def test_csv_export(self):
        seq = index_sequence(pendulum(), Loop.constant([0.0], 1.0),
                             ks=(1, 2), nf_base=16, steps=512)
        text = seq.to_csv()
        lines = text.strip().split("\n")
        assert lines[0] == ("k,m_minus,m_zero,i,nu,mean_lo,mean_hi,"
                            "verdict_lower,verdict_upper")
        assert lines[1] == "1,1,2,1,2,2.0,2.0,true,true"
        assert lines[2] == "2,3,2,3,2,2.0,2.0,true,true"

    def test_json_roundtrip_and_determinism(self):
        seqs = [index_sequence(pendulum(), Loop.constant([0.0], 1.0),
                               ks=(1, 2), nf_base=16, steps=512)
                for _ in range(2)]
        blobs = [json.dumps(s.to_json_dict(), sort_keys=True) for s in seqs]
        assert blobs[0] == blobs[1]
        back = json.loads(blobs[0])
        assert back["schema"] == "sil/1"
        assert back["report"] == "index-sequence"
        # constant coefficients settle after one refinement of the start value
        assert back["grid"] == {"nf_base": 16, "steps": 1024}
        assert back["rows"][0]["m_minus"] == 1

    def test_threaded_rows_match_serial(self, monkeypatch):
        loop = Loop.constant([0.3, 0.7], 1.0)
        serial = index_sequence(free_particle(2), loop, ks=(1, 2, 3),
                                nf_base=16, steps=512)
        monkeypatch.setenv("SIL_THREADS", "3")
        threaded = index_sequence(free_particle(2), loop, ks=(1, 2, 3),
                                  nf_base=16, steps=512)
        assert json.dumps(serial.to_json_dict(), sort_keys=True) == \
            json.dumps(threaded.to_json_dict(), sort_keys=True)


class TestVerifyInequalities:
    def test_corrupt_row_is_flagged(self):
        seq = index_sequence(free_particle(1), Loop.constant([0.2], 1.0),
                             ks=(1, 2, 4), nf_base=16, steps=512)
        assert verify_iteration_inequalities(seq)["passed"]
        seq.rows[1].i = 9
        seq.rows[1].m_minus = 9
        rep = verify_iteration_inequalities(seq)
        assert not rep["passed"]
        bad = [r for r in rep["rows"] if r["k"] == 2][0]
        assert not bad["verdict_upper"]

    def test_incomplete_rows_raise(self):
        row = IndexRow(k=1, m_minus=None, m_zero=None, i=None, nu=None,
                       mean_lo=0.0, mean_hi=0.0)
        seq = IndexSequence(n=1, tau=1.0, rows=[row], routes=("maslov",),
                            nf_base=16, steps=512, mean_estimate=0.0,
                            mean_lo=0.0, mean_hi=0.0, k_used=1, residual=0.0)
        with pytest.raises(ValueError):
            verify_iteration_inequalities(seq)

    def test_report_provenance(self):
        seq = index_sequence(pendulum(), Loop.constant([0.5], 1.0),
                             ks=(1, 2), nf_base=16, steps=512)
        rep = verify_iteration_inequalities(seq)
        assert rep["schema"] == "sil/1"
        assert rep["grid"] == {"nf_base": 16, "steps": 1024}
        assert rep["mean_bracket"]["k_used"] == 2
        assert json.dumps(rep, sort_keys=True)


class TestSymmetricSplit:
    def test_elliptic_split_identities(self):
        seq = symmetric_split_sequence(pendulum(), Loop.constant([0.0], 1.0),
                                       ks=(1, 2, 4, 8), nf_base=16, steps=512)
        assert seq.passed
        for row in seq.rows:
            k = row.k
            assert (row.m_minus_even, row.m_zero_even) == (k, 1)
            assert (row.m_minus_odd, row.m_zero_odd) == (k - 1, 1)
            assert (row.mu1, row.mu2, row.nu1, row.nu2) == (k, k, 1, 1)
            assert (row.i, row.nu) == (2 * k - 1, 2)
            assert all(row.checks.values())
        # even mean is half the full mean
        assert seq.mean_even_estimate == 1.0
        assert abs(seq.mean_even_estimate - seq.mean_estimate / 2.0) <= 2.0 / 8.0

    def test_hyperbolic_split_bound(self):
        seq = symmetric_split_sequence(pendulum(), Loop.constant([0.5], 1.0),
                                       ks=(1, 2, 4, 8), nf_base=16, steps=512)
        assert seq.passed
        for row in seq.rows:
            assert (row.m_minus_even, row.m_zero_even) == (0, 0)
            assert (row.mu1, row.mu2, row.nu1, row.nu2) == (0, 1, 0, 0)
            # zero even mean forces the even-count bound <= n
            assert row.m_minus_even + row.m_zero_even <= 1

    def test_free_particle_split(self):
        seq = symmetric_split_sequence(free_particle(2),
                                       Loop.constant([0.1, 0.6], 1.0),
                                       ks=(1, 2), nf_base=16, steps=512)
        assert seq.passed
        for row in seq.rows:
            assert (row.m_minus_even, row.m_zero_even) == (0, 2)
            assert (row.m_minus_odd, row.m_zero_odd) == (0, 0)
            assert (row.mu1, row.mu2, row.nu1, row.nu2) == (0, 2, 2, 0)

    def test_requires_reversible_model(self):
        with pytest.raises(ValueError, match="reversible"):
            symmetric_split_sequence(physical_example(1),
                                     Loop.constant([0.0], 1.0), ks=(1,))

    def test_requires_even_loop(self):
        loop = wiggly_loop(1, 1.0, 4, 5)
        with pytest.raises(ValueError, match="even"):
            symmetric_split_sequence(pendulum(), loop, ks=(1,))
        winding = Loop(n=1, tau=1.0, winding=[1],
                       cos=np.zeros((1, 1)), sin=np.zeros((1, 1)))
        with pytest.raises(ValueError, match="even"):
            symmetric_split_sequence(pendulum(), winding, ks=(1,))

    def test_csv_and_json(self):
        seq = symmetric_split_sequence(pendulum(), Loop.constant([0.0], 1.0),
                                       ks=(1, 2), nf_base=16, steps=512)
        lines = seq.to_csv().strip().split("\n")
        assert lines[0] == ("k,m_minus_even,m_zero_even,m_minus_odd,"
                            "m_zero_odd,mu1,mu2,nu1,nu2,i,nu,passed")
        assert lines[1] == "1,1,1,0,1,1,1,1,1,1,2,true"
        blob = json.dumps(seq.to_json_dict(), sort_keys=True)
        assert json.loads(blob)["passed"] is True


class TestStableSubsequence:
    def test_hyperbolic_all_k_qualify(self):
        seq = index_sequence(pendulum(), Loop.constant([0.5], 1.0),
                             ks=(1, 2, 4, 8), nf_base=16, steps=512)
        assert detect_stable_subsequence(seq) == [1, 2, 4, 8]
        assert detect_stable_subsequence(seq, k_set=(1, 4)) == [1, 4]

    def test_elliptic_only_base_qualifies(self):
        seq = index_sequence(pendulum(), Loop.constant([0.0], 1.0),
                             ks=(1, 2, 4, 8), nf_base=16, steps=512)
        assert detect_stable_subsequence(seq) == [1]

    def test_missing_rows_raise(self):
        seq = index_sequence(pendulum(), Loop.constant([0.5], 1.0),
                             ks=(1, 2), nf_base=16, steps=512)
        with pytest.raises(ValueError):
            detect_stable_subsequence(seq, k_set=(1, 2, 16))
        seq2 = index_sequence(pendulum(), Loop.constant([0.5], 1.0),
                              ks=(2, 4), nf_base=16, steps=512)
        with pytest.raises(ValueError):
            detect_stable_subsequence(seq2)
