"""Loop space over the torus: Fourier loops, action, and its derivatives.

A loop is stored by the Fourier coefficients of its periodic part plus an
integer winding vector; q(t) = y(t) + w t / tau lifts it to R^n.  The action
and its first two derivatives are computed spectrally: sampled integrand
fields are transformed once, and the Hessian in the L^2-orthonormal Fourier
basis is assembled from sum/difference-frequency coefficients of the
second-variation data P, Q, R along the loop.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

TWO_PI = 2.0 * np.pi


def _as_winding(w, n: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise ValueError("winding must have shape (%d,)" % n)
    wi = np.rint(w).astype(int)
    if np.max(np.abs(w - wi)) > 1e-9:
        raise ValueError("winding entries must be integers")
    return wi


@dataclass
class Loop:
    """Fourier loop on T^n with winding.

    cos and sin hold the coefficients of the periodic part, shape
    (nf + 1, n); sin[0] is identically zero.  The lift satisfies
    q(tau) = q(0) + winding.
    """

    n: int
    tau: float
    winding: np.ndarray
    cos: np.ndarray
    sin: np.ndarray

    def __post_init__(self):
        self.winding = _as_winding(self.winding, self.n)
        self.cos = np.asarray(self.cos, dtype=float)
        self.sin = np.asarray(self.sin, dtype=float)
        if self.cos.ndim != 2 or self.cos.shape[1] != self.n:
            raise ValueError("cos coefficients must have shape (nf+1, n)")
        if self.sin.shape != self.cos.shape:
            raise ValueError("sin coefficients must match cos in shape")
        if self.cos.shape[0] < 1:
            raise ValueError("need at least the constant mode")
        self.sin[0] = 0.0
        if self.tau <= 0:
            raise ValueError("period tau must be positive")

    @property
    def nf(self) -> int:
        return self.cos.shape[0] - 1

    @classmethod
    def constant(cls, q0, tau: float, nf: int = 0) -> "Loop":
        q0 = np.atleast_1d(np.asarray(q0, dtype=float))
        n = len(q0)
        cos = np.zeros((nf + 1, n))
        cos[0] = q0
        return cls(n=n, tau=float(tau), winding=np.zeros(n, dtype=int),
                   cos=cos, sin=np.zeros((nf + 1, n)))

    @classmethod
    def from_samples(cls, qs: np.ndarray, tau: float, winding,
                     nf: int) -> "Loop":
        """Fit Fourier coefficients to uniform samples of the lift q."""
        qs = np.asarray(qs, dtype=float)
        if qs.ndim == 1:
            qs = qs[:, None]
        N, n = qs.shape
        w = _as_winding(winding, n)
        if N < 4 * nf:
            raise ValueError("need at least 4*nf samples, got %d < %d"
                             % (N, 4 * nf))
        ts = tau * np.arange(N) / N
        ys = qs - ts[:, None] * w / tau
        ft = np.fft.rfft(ys, axis=0) / N
        nf_avail = ft.shape[0] - 1
        m = min(nf, nf_avail)
        cos = np.zeros((nf + 1, n))
        sin = np.zeros((nf + 1, n))
        cos[0] = ft[0].real
        cos[1:m + 1] = 2.0 * ft[1:m + 1].real
        sin[1:m + 1] = -2.0 * ft[1:m + 1].imag
        return cls(n=n, tau=float(tau), winding=w, cos=cos, sin=sin)

    def grid(self, nt: Optional[int] = None) -> np.ndarray:
        """Uniform quadrature grid satisfying nt >= 4 nf."""
        if nt is None:
            nt = max(512, 4 * self.nf)
        if nt < 4 * self.nf:
            raise ValueError("nt=%d violates the sampling bound 4*nf=%d"
                             % (nt, 4 * self.nf))
        return self.tau * np.arange(nt) / nt

    def _angles(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = np.arange(self.nf + 1)
        return t, np.outer(t, k) * (TWO_PI / self.tau)

    def value(self, t):
        """Lift q(t) = y(t) + winding * t / tau; shape (len(t), n)."""
        scalar = np.isscalar(t) or np.ndim(t) == 0
        t, ang = self._angles(t)
        y = np.cos(ang) @ self.cos + np.sin(ang) @ self.sin
        out = y + np.outer(t, self.winding) / self.tau
        return out[0] if scalar else out

    def velocity(self, t):
        scalar = np.isscalar(t) or np.ndim(t) == 0
        t, ang = self._angles(t)
        k = np.arange(self.nf + 1) * (TWO_PI / self.tau)
        dy = -np.sin(ang) @ (k[:, None] * self.cos) \
            + np.cos(ang) @ (k[:, None] * self.sin)
        out = dy + self.winding[None, :] / self.tau
        return out[0] if scalar else out

    def samples(self, nt: Optional[int] = None):
        ts = self.grid(nt)
        return ts, self.value(ts), self.velocity(ts)

    def with_nf(self, nf: int) -> "Loop":
        """Pad or truncate the Fourier representation to nf modes."""
        cos = np.zeros((nf + 1, self.n))
        sin = np.zeros((nf + 1, self.n))
        m = min(nf, self.nf)
        cos[:m + 1] = self.cos[:m + 1]
        sin[:m + 1] = self.sin[:m + 1]
        return Loop(n=self.n, tau=self.tau, winding=self.winding.copy(),
                    cos=cos, sin=sin)

    def shifted(self, dq) -> "Loop":
        out = Loop(n=self.n, tau=self.tau, winding=self.winding.copy(),
                   cos=self.cos.copy(), sin=self.sin.copy())
        out.cos[0] = out.cos[0] + np.asarray(dq, dtype=float)
        return out

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {"schema": "sil/1", "n": self.n, "tau": self.tau,
                "winding": self.winding.tolist(),
                "fourier": {"cos": self.cos.tolist(),
                            "sin": self.sin.tolist()}}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Loop":
        for key in ("n", "tau", "winding", "fourier"):
            if key not in doc:
                raise ValueError("loop document missing field: %s" % key)
        four = doc["fourier"]
        for key in ("cos", "sin"):
            if key not in four:
                raise ValueError("loop document missing field: fourier.%s" % key)
        return cls(n=int(doc["n"]), tau=float(doc["tau"]),
                   winding=np.asarray(doc["winding"]),
                   cos=np.asarray(four["cos"], dtype=float),
                   sin=np.asarray(four["sin"], dtype=float))

    def to_csv(self, nt: Optional[int] = None) -> str:
        ts = self.grid(nt)
        qs = self.value(ts)
        buf = io.StringIO()
        buf.write("t," + ",".join("q%d" % (i + 1) for i in range(self.n)) + "\n")
        for t, q in zip(ts, qs):
            buf.write("%.17g," % t + ",".join("%.17g" % x for x in q) + "\n")
        return buf.getvalue()


# ---------------------------------------------------------------------------
# parity operations


def restrict_even(loop: Loop) -> Loop:
    """Project onto even loops y(-t) = y(t) (cosine series).

    Only defined for contractible loops; a nonzero winding has no even
    representative.
    """
    if np.any(loop.winding != 0):
        raise ValueError("even restriction requires a contractible loop "
                         "(winding zero), got winding %s" % loop.winding.tolist())
    return Loop(n=loop.n, tau=loop.tau, winding=loop.winding.copy(),
                cos=loop.cos.copy(), sin=np.zeros_like(loop.sin))

def is_even(loop: Loop, tol: float = 1e-10) -> bool:
    scale = 1.0 + float(np.max(np.abs(loop.cos)))
    return float(np.max(np.abs(loop.sin))) <= tol * scale


# ---------------------------------------------------------------------------
# action and derivatives


def action(model, loop: Loop, nt: Optional[int] = None) -> float:
    """Action integral of the loop under the model Lagrangian."""
    ts, qs, vs = loop.samples(nt)
    vals = np.array([model.L(t, q, v) for t, q, v in zip(ts, qs, vs)])
    return float(np.mean(vals) * loop.tau)


def _field_samples(model, loop: Loop, nt: int):
    ts = loop.grid(nt)
    qs = loop.value(ts)
    vs = loop.velocity(ts)
    dq = np.empty((nt, loop.n))
    dv = np.empty((nt, loop.n))
    for j in range(nt):
        dq[j] = model.dL_q(ts[j], qs[j], vs[j])
        dv[j] = model.dL_v(ts[j], qs[j], vs[j])
    return dq, dv


def action_gradient(model, loop: Loop, nt: Optional[int] = None):
    """Gradient of the action in the raw Fourier coefficients.

    Returns (grad_cos, grad_sin), each of shape (nf + 1, n); grad_sin[0]
    is zero.  Entries are plain partial derivatives (no preconditioning).
    """
    if nt is None:
        nt = max(512, 4 * loop.nf + 4)
    dq, dv = _field_samples(model, loop, nt)
    tau = loop.tau
    K = loop.nf
    ftq = np.fft.rfft(dq, axis=0) / nt
    ftv = np.fft.rfft(dv, axis=0) / nt
    Cq = tau * ftq[:K + 1].real
    Sq = -tau * ftq[:K + 1].imag
    Cv = tau * ftv[:K + 1].real
    Sv = -tau * ftv[:K + 1].imag
    omega_k = TWO_PI * np.arange(K + 1)[:, None] / tau
    grad_cos = Cq - omega_k * Sv
    grad_sin = Sq + omega_k * Cv
    grad_sin[0] = 0.0
    return grad_cos, grad_sin


def gradient_norm(grad) -> float:
    gc, gs = grad
    return float(np.sqrt(np.sum(gc ** 2) + np.sum(gs ** 2)))


@dataclass
class HessianResult:
    """Action Hessian in the L^2-orthonormal Fourier basis.

    basis is "full", "even", or "odd"; modes lists the scalar basis tags in
    row order, each repeated per coordinate.
    """

    matrix: np.ndarray
    basis: str
    nf: int
    nt: int
    n: int
    tau: float
    scale: float = 0.0

    def __post_init__(self):
        if self.scale == 0.0:
            d = np.abs(np.diagonal(self.matrix))
            self.scale = float(d.max()) if d.size else 1.0


def _second_variation_samples(model, loop: Loop, nt: int):
    ts = loop.grid(nt)
    qs = loop.value(ts)
    vs = loop.velocity(ts)
    n = loop.n
    P = np.empty((nt, n, n))
    Q = np.empty((nt, n, n))
    R = np.empty((nt, n, n))
    for j in range(nt):
        P[j] = model.d2L_vv(ts[j], qs[j], vs[j])
        Q[j] = model.d2L_vq(ts[j], qs[j], vs[j])
        R[j] = model.d2L_qq(ts[j], qs[j], vs[j])
    return P, Q, R


def _fourier_integrals(F: np.ndarray, tau: float, mmax: int):
    """(int F cos_m dt, int F sin_m dt) for m = 0..mmax, any trailing shape."""
    nt = F.shape[0]
    ft = np.fft.rfft(F, axis=0) / nt
    if ft.shape[0] <= mmax:
        raise ValueError("sampling too coarse for requested modes")
    return tau * ft[:mmax + 1].real, -tau * ft[:mmax + 1].imag


def action_hessian(model, loop: Loop, nf: Optional[int] = None,
                   nt: Optional[int] = None, basis: str = "full",
                   coeffs=None) -> HessianResult:
    """Action Hessian in the L^2-orthonormal Fourier basis.

    The quadratic form is int P xi'.eta' + Q xi.eta' + Q^T xi'.eta
    + R xi.eta dt with P = L_vv, Q = L_vq, R = L_qq along the loop.  The
    entries reduce to sum/difference-frequency Fourier coefficients of the
    coefficient fields, computed with one FFT per field.

    basis "full" uses modes [cos_0..cos_K, sin_1..sin_K]; "even" keeps the
    cosine block, "odd" the sine block.  coeffs may carry precomputed
    (P, Q, R) samples on the loop's nt-grid.
    """
    if basis not in ("full", "even", "odd"):
        raise ValueError("basis must be full, even, or odd")
    K = loop.nf if nf is None else int(nf)
    if basis in ("even", "odd"):
        if not is_even(loop, tol=1e-8):
            raise ValueError("parity-restricted Hessian requires an even loop")
        if not getattr(model, "reversible", False):
            raise ValueError("parity-restricted Hessian requires a "
                             "reversible model")
    if nt is None:
        nt = max(512, 4 * max(K, loop.nf) + 4)
    nt += nt % 2
    if nt < 4 * K + 2:
        raise ValueError("nt=%d cannot resolve modes up to 2*nf=%d" % (nt, 2 * K))
    if coeffs is None:
        P, Q, R = _second_variation_samples(model, loop, nt)
    else:
        P, Q, R = coeffs
    n, tau = loop.n, loop.tau
    FcP, FsP = _fourier_integrals(P, tau, 2 * K)
    FcQ, FsQ = _fourier_integrals(Q, tau, 2 * K)
    FcR, FsR = _fourier_integrals(R, tau, 2 * K)

    kc = np.arange(K + 1)
    ks = np.arange(1, K + 1)
    om_c = TWO_PI * kc / tau
    om_s = TWO_PI * ks / tau

    def pair_ix(u, w):
        U, W = np.meshgrid(u, w, indexing="ij")
        return np.abs(U - W), U + W, np.sign(U - W).astype(float)

    def IC(Fc, ix):
        D, S, _ = ix
        return 0.5 * (Fc[D] + Fc[S])

    def IS(Fc, ix):
        D, S, _ = ix
        return 0.5 * (Fc[D] - Fc[S])

    def ISC(Fs, ix):
        D, S, G = ix
        return 0.5 * (Fs[S] + G[..., None, None] * Fs[D])

    def ICS(Fs, ix):
        D, S, G = ix
        return 0.5 * (Fs[S] - G[..., None, None] * Fs[D])

    FsQt = np.swapaxes(FsQ, 1, 2)
    FcQt = np.swapaxes(FcQ, 1, 2)

    blocks = {}
    if basis in ("full", "even"):
        ix = pair_ix(kc, kc)
        om = np.multiply.outer(om_c, om_c)[..., None, None]
        cc = om * IS(FcP, ix) \
            - om_c[:, None, None, None] * ISC(FsQ, ix) \
            - om_c[None, :, None, None] * ICS(FsQt, ix) \
            + IC(FcR, ix)
        blocks["cc"] = cc
    if basis in ("full", "odd"):
        ix = pair_ix(ks, ks)
        om = np.multiply.outer(om_s, om_s)[..., None, None]
        ss = om * IC(FcP, ix) \
            + om_s[:, None, None, None] * ICS(FsQ, ix) \
            + om_s[None, :, None, None] * ISC(FsQt, ix) \
            + IS(FcR, ix)
        blocks["ss"] = ss
    if basis == "full":
        ix = pair_ix(kc, ks)
        om = np.multiply.outer(om_c, om_s)[..., None, None]
        cs = -om * ISC(FsP, ix) \
            - om_c[:, None, None, None] * IS(FcQ, ix) \
            + om_s[None, :, None, None] * IC(FcQt, ix) \
            + ICS(FsR, ix)
        blocks["cs"] = cs

    def flatten(blk):
        # (U, W, n, n) -> (U*n, W*n) with mode-major ordering
        U, W = blk.shape[0], blk.shape[1]
        return blk.transpose(0, 2, 1, 3).reshape(U * n, W * n)

    if basis == "even":
        H = flatten(blocks["cc"])
        norms = np.repeat(np.where(kc == 0, np.sqrt(1.0 / tau),
                                   np.sqrt(2.0 / tau)), n)
    elif basis == "odd":
        H = flatten(blocks["ss"])
        norms = np.repeat(np.full(K, np.sqrt(2.0 / tau)), n)
    else:
        Hcc = flatten(blocks["cc"])
        Hss = flatten(blocks["ss"])
        Hcs = flatten(blocks["cs"])
        H = np.block([[Hcc, Hcs], [Hcs.T, Hss]])
        norms = np.concatenate([
            np.repeat(np.where(kc == 0, np.sqrt(1.0 / tau),
                               np.sqrt(2.0 / tau)), n),
            np.repeat(np.full(K, np.sqrt(2.0 / tau)), n)])
    H = H * np.outer(norms, norms)
    H = 0.5 * (H + H.T)
    return HessianResult(matrix=H, basis=basis, nf=K, nt=nt, n=n, tau=tau)


def action_hessian_direct(model, loop: Loop, nf: int,
                          nt: Optional[int] = None,
                          basis: str = "full") -> HessianResult:
    """Reference Hessian by direct quadrature over sampled basis fields.

    O(nt * dim^2); used to validate the FFT assembler on small problems.
    """
    K = int(nf)
    if nt is None:
        nt = max(1024, 8 * max(K, loop.nf))
    ts = loop.grid(nt)
    P, Q, R = _second_variation_samples(model, loop, nt)
    tau, n = loop.tau, loop.n
    ang = np.outer(ts, np.arange(K + 1)) * (TWO_PI / tau)
    omk = TWO_PI * np.arange(K + 1) / tau
    cos_b = np.cos(ang) * np.where(np.arange(K + 1) == 0,
                                   np.sqrt(1.0 / tau), np.sqrt(2.0 / tau))
    sin_b = np.sin(ang[:, 1:]) * np.sqrt(2.0 / tau)
    dcos = -np.sin(ang) * omk * np.where(np.arange(K + 1) == 0,
                                         np.sqrt(1.0 / tau), np.sqrt(2.0 / tau))
    dsin = np.cos(ang[:, 1:]) * omk[1:] * np.sqrt(2.0 / tau)
    if basis == "even":
        A, dA = cos_b, dcos
    elif basis == "odd":
        A, dA = sin_b, dsin
    else:
        A = np.hstack([cos_b, sin_b])
        dA = np.hstack([dcos, dsin])
    m = A.shape[1]
    H = np.zeros((m * n, m * n))
    wt = tau / nt
    for i in range(n):
        for j in range(n):
            h = (dA * P[:, i, j][:, None]).T @ dA * wt \
                + (dA * Q[:, i, j][:, None]).T @ A * wt \
                + (A * Q[:, j, i][:, None]).T @ dA * wt \
                + (A * R[:, i, j][:, None]).T @ A * wt
            H[i::n, j::n] = h
    H = 0.5 * (H + H.T)
    return HessianResult(matrix=H, basis=basis, nf=K, nt=nt, n=n, tau=tau)


# ---------------------------------------------------------------------------
# inertia counts


class AmbiguousSpectrum(RuntimeError):
    """Eigenvalues too close to the zero-mode tolerance to certify counts."""


# Relative zero window for Hessian spectra, calibrated to the eigensolver
# noise floor rather than to a fraction of the matrix norm.  The norm of a
# truncated action Hessian is an ultraviolet scale (it grows like the square
# of the top retained frequency), so any fixed fraction of it eventually
# swallows genuinely nonzero eigenvalues: iterates of a degenerate orbit
# carry band eigenvalues of order sin(pi j / k)^2 times a small curvature,
# observed down to ~1e-7 absolute at k = 8 against norms of ~1e4.  True zero
# modes of a converged critical point land at backward-error level
# (eps * ||H||, observed <= 1e-12 absolute across the built-in systems), so a
# window ~1e3 eps above the floor separates the two by orders of magnitude
# on both sides, and the factor-10 straddle bands report anything that ever
# comes close.
ZERO_TOL_REL = 3e-13


@dataclass
class InertiaResult:
    """Morse counts of an action Hessian.

    m_minus / m_zero are the counts at the zero tolerance tol; the *_lo /
    *_hi fields bound them when eigenvalues straddle the tolerance band
    (within a factor 10 of tol on either side).  ambiguous means the
    interval is not a single point; acceptance comparisons treat that as a
    failure rather than picking a side.
    """

    m_minus: int
    m_zero: int
    dim: int
    tol: float
    m_zero_lo: int = -1
    m_zero_hi: int = -1
    m_minus_lo: int = -1
    m_minus_hi: int = -1
    ambiguous: bool = False
    basis: str = "full"

    def __post_init__(self):
        if self.m_zero_lo < 0:
            self.m_zero_lo = self.m_zero_hi = self.m_zero
            self.m_minus_lo = self.m_minus_hi = self.m_minus


def _ldl_inertia(M: np.ndarray) -> tuple[int, int]:
    """(negative, positive) eigenvalue counts via an LDL^T factorization."""
    _, D, _ = scipy.linalg.ldl(M)
    neg = pos = 0
    i, m = 0, D.shape[0]
    while i < m:
        if i + 1 < m and abs(D[i, i + 1]) > 0:
            w = np.linalg.eigvalsh(D[i:i + 2, i:i + 2])
            neg += int((w < 0).sum())
            pos += int((w > 0).sum())
            i += 2
        else:
            d = D[i, i]
            if d < 0:
                neg += 1
            elif d > 0:
                pos += 1
            i += 1
    return neg, pos


def _near_zero_spectrum(H: np.ndarray, tol: float, want: int) -> np.ndarray:
    """Eigenvalues of smallest magnitude, via dense-LU shift-invert Lanczos.

    Grows the subspace until the largest returned magnitude clears the
    10*tol uncertainty band, so every straddler is visible.
    """
    from scipy.sparse.linalg import LinearOperator, eigsh

    dim = H.shape[0]
    shift = 0.37 * tol
    lu, piv = scipy.linalg.lu_factor(H + shift * np.eye(dim))
    op = LinearOperator((dim, dim),
                        matvec=lambda x: scipy.linalg.lu_solve((lu, piv), x))
    k = min(max(want, 6), dim - 1)
    while True:
        w = eigsh(op, k=k, which="LM", return_eigenvectors=False,
                  maxiter=4000, tol=1e-12)
        lam = np.sort(1.0 / w - shift)
        if np.max(np.abs(lam)) > 10.0 * tol or k >= min(dim - 1, 4 * want + 32):
            return lam
        k = min(dim - 1, 2 * k)


def _interval_counts(w: np.ndarray, tol: float):
    """Point and interval counts from explicit eigenvalues near zero."""
    m_minus = int((w < -tol).sum())
    m_zero = int((np.abs(w) <= tol).sum())
    m_zero_hi = int((np.abs(w) < 10.0 * tol).sum())
    m_zero_lo = int((np.abs(w) <= tol / 10.0).sum())
    m_minus_hi = int((w <= -tol / 10.0).sum())
    m_minus_lo = int((w < -10.0 * tol).sum())
    return m_minus, m_zero, m_zero_lo, m_zero_hi, m_minus_lo, m_minus_hi


def hessian_inertia(hess: HessianResult, tol_rel: float = ZERO_TOL_REL,
                    detail: bool = True) -> InertiaResult:
    """Morse counts (m_minus, m_zero) of the Hessian.

    Eigenvalues within tol = tol_rel * ||H|| of zero count into m_zero; the
    default window sits just above the eigensolve noise floor (see
    ZERO_TOL_REL) so that near-degenerate but physical band eigenvalues of
    iterated orbits are counted as nonzero.  With detail=True the spectrum
    near zero is resolved explicitly and eigenvalues straddling the
    tolerance band widen the reported count intervals (fail-closed
    bookkeeping for acceptance comparisons).
    """
    H = hess.matrix
    dim = H.shape[0]
    tol = tol_rel * max(hess.scale, 1e-12)
    if dim <= 800:
        w = np.linalg.eigvalsh(H)
        counts = _interval_counts(w, tol)
    else:
        m_lo, _ = _ldl_inertia(H + tol * np.eye(dim))
        m_hi, _ = _ldl_inertia(H - tol * np.eye(dim))
        m_minus, m_zero = m_lo, m_hi - m_lo
        if not detail:
            return InertiaResult(m_minus=m_minus, m_zero=m_zero, dim=dim,
                                 tol=tol, basis=hess.basis)
        lam = _near_zero_spectrum(H, tol, want=m_zero + 4)
        c = _interval_counts(lam, tol)
        # splice the explicit near-zero window into the global LDL counts
        window_minus = c[0]
        base_minus = m_minus - window_minus
        counts = (m_minus, m_zero, c[2], c[3],
                  base_minus + c[4], base_minus + c[5])
    m_minus, m_zero, mz_lo, mz_hi, mm_lo, mm_hi = counts
    ambiguous = (mz_lo != mz_hi) or (mm_lo != mm_hi)
    return InertiaResult(m_minus=m_minus, m_zero=m_zero, dim=dim, tol=tol,
                         m_zero_lo=mz_lo, m_zero_hi=mz_hi,
                         m_minus_lo=mm_lo, m_minus_hi=mm_hi,
                         ambiguous=ambiguous, basis=hess.basis)


def morse_counts(model, loop: Loop, nf: Optional[int] = None,
                 basis: str = "full", tol_rel: float = ZERO_TOL_REL,
                 gate: bool = True, strict: bool = True) -> InertiaResult:
    """Inertia of the action Hessian, stability-gated in the basis size.

    With gate=True the counts are recomputed at twice the mode count and
    must agree; disagreement, or tolerance-straddling eigenvalues under
    strict=True, raises AmbiguousSpectrum (the counts are not certified).
    """
    K = loop.nf if nf is None else int(nf)
    res = hessian_inertia(action_hessian(model, loop, nf=K, basis=basis),
                          tol_rel=tol_rel, detail=True)
    if strict and res.ambiguous:
        raise AmbiguousSpectrum(
            "eigenvalues straddle the zero tolerance %.3e: m_zero in "
            "[%d, %d], m_minus in [%d, %d]"
            % (res.tol, res.m_zero_lo, res.m_zero_hi,
               res.m_minus_lo, res.m_minus_hi))
    if gate:
        res2 = hessian_inertia(action_hessian(model, loop, nf=2 * K,
                                              basis=basis),
                               tol_rel=tol_rel, detail=False)
        if (res.m_minus, res.m_zero) != (res2.m_minus, res2.m_zero):
            raise AmbiguousSpectrum(
                "Morse counts changed under basis refinement: "
                "(%d, %d) at nf=%d vs (%d, %d) at nf=%d"
                % (res.m_minus, res.m_zero, K, res2.m_minus, res2.m_zero, 2 * K))
    return res


# ---------------------------------------------------------------------------
# critical point search


@dataclass
class PeriodicOrbit:
    """Search result: loop plus certification data."""

    loop: Loop
    action: float
    residual: float
    grad_norm: float
    converged: bool
    iterations: int
    message: str = ""

    @property
    def n(self) -> int:
        return self.loop.n

    @property
    def tau(self) -> float:
        return self.loop.tau


def _flatten_coeffs(loop: Loop) -> np.ndarray:
    return np.concatenate([loop.cos.ravel(), loop.sin[1:].ravel()])


def _unflatten(loop: Loop, x: np.ndarray) -> Loop:
    K, n = loop.nf, loop.n
    cos = x[:(K + 1) * n].reshape(K + 1, n).copy()
    sin = np.zeros((K + 1, n))
    sin[1:] = x[(K + 1) * n:].reshape(K, n)
    return Loop(n=n, tau=loop.tau, winding=loop.winding.copy(),
                cos=cos, sin=sin)


def _grad_vector(model, loop: Loop) -> np.ndarray:
    gc, gs = action_gradient(model, loop)
    return np.concatenate([gc.ravel(), gs[1:].ravel()])


def _precond(loop: Loop) -> np.ndarray:
    """Diagonal Sobolev preconditioner 1 / (1 + (2 pi k / tau)^2)."""
    K, n, tau = loop.nf, loop.n, loop.tau
    k = np.arange(K + 1)
    fac = 1.0 / (1.0 + (TWO_PI * k / tau) ** 2)
    return np.concatenate([np.repeat(fac, n), np.repeat(fac[1:], n)])


def _raw_hessian(model, loop: Loop) -> np.ndarray:
    """Hessian in the raw coefficient basis (for Newton steps)."""
    res = action_hessian(model, loop, nf=loop.nf, basis="full")
    K, n, tau = loop.nf, loop.n, loop.tau
    norms = np.concatenate([
        np.repeat(np.where(np.arange(K + 1) == 0, np.sqrt(tau),
                           np.sqrt(tau / 2.0)), n),
        np.repeat(np.full(K, np.sqrt(tau / 2.0)), n)])
    return res.matrix * np.outer(norms, norms)


def _even_mask(loop: Loop) -> np.ndarray:
    K, n = loop.nf, loop.n
    mask = np.zeros((2 * K + 1) * n, dtype=bool)
    mask[:(K + 1) * n] = True
    return mask


def find_orbit(model, tau: float, winding, nf: int = 64, seed: int = 0,
               tol: float = 1e-9, even: bool = False, q0=None,
               initial: Optional[Loop] = None, max_descent: int = 10000,
               max_newton: int = 60, amplitude: float = 0.05) -> PeriodicOrbit:
    """Find a periodic orbit in the given winding class.

    Phase one runs Sobolev-preconditioned gradient descent with Armijo
    backtracking; phase two polishes with a damped Newton method on the
    gradient.  Convergence is certified by the Euler-Lagrange residual
    falling below tol.  With even=True the search is restricted to cosine
    loops (winding must be zero); for reversible models even critical
    points of the restricted functional are genuine critical points.

    Never raises on non-convergence: the result carries converged=False,
    the best iterate seen, and a message.
    """
    from .models import euler_lagrange_residual

    n = model.n
    w = _as_winding(winding, n)
    if even and np.any(w != 0):
        raise ValueError("even search requires winding zero")
    rng = np.random.default_rng(seed)
    if initial is not None:
        loop = initial.with_nf(nf)
        if np.any(loop.winding != w):
            raise ValueError("initial loop winding %s does not match %s"
                             % (initial.winding.tolist(), w.tolist()))
    else:
        cos = np.zeros((nf + 1, n))
        sin = np.zeros((nf + 1, n))
        decay = amplitude / (1.0 + np.arange(nf + 1)) ** 2
        cos[1:] = rng.standard_normal((nf, n)) * decay[1:, None]
        sin[1:] = rng.standard_normal((nf, n)) * decay[1:, None]
        cos[0] = np.asarray(q0, dtype=float) if q0 is not None else \
            rng.uniform(0.0, 1.0, n)
        loop = Loop(n=n, tau=float(tau), winding=w, cos=cos, sin=sin)
    if even:
        loop = restrict_even(loop)

    mask = _even_mask(loop) if even else None
    x = _flatten_coeffs(loop)
    pre = _precond(loop)

    def project(vec):
        if mask is not None:
            vec = vec.copy()
            vec[~mask] = 0.0
        return vec

    def make_loop(xv):
        lp = _unflatten(loop, xv)
        return restrict_even(lp) if even else lp

    g = project(_grad_vector(model, make_loop(x)))
    a_val = action(model, make_loop(x))
    gnorm = float(np.linalg.norm(g))
    best = (x.copy(), np.inf)
    iters = 0
    message = ""

    def newton_polish(x):
        """Damped Newton on the gradient; returns (x, note, stalled)."""
        nonlocal iters
        for it in range(max_newton):
            g = project(_grad_vector(model, make_loop(x)))
            gnorm = float(np.linalg.norm(g))
            if gnorm <= 1e-13:
                return x, "", False
            H = _raw_hessian(model, make_loop(x))
            if even:
                idx = np.where(mask)[0]
                ds, *_ = np.linalg.lstsq(H[np.ix_(idx, idx)], -g[idx],
                                         rcond=1e-12)
                delta = np.zeros_like(x)
                delta[idx] = ds
            else:
                delta, *_ = np.linalg.lstsq(H, -g, rcond=1e-12)
            sigma, improved = 1.0, False
            for _ in range(12):
                x_try = x + sigma * delta
                g_try = project(_grad_vector(model, make_loop(x_try)))
                if np.linalg.norm(g_try) <= (1.0 - 0.25 * sigma) * gnorm:
                    improved = True
                    break
                sigma *= 0.5
            if not improved:
                return x, "; Newton stalled at iteration %d" % it, True
            x = x_try
            iters += 1
        return x, "", False

    # alternate descent bursts with Newton attempts: descent supplies
    # globalization, Newton the final quadratic convergence
    for round_ in range(4):
        switch = 1e-2 if round_ == 0 else 10.0 ** (-2 - 2 * round_)
        alpha = 1.0
        while gnorm > switch and iters < max_descent:
            step = pre * g
            slope = float(g @ step)
            accepted = False
            for _ in range(40):
                x_try = x - alpha * step
                a_try = action(model, make_loop(x_try))
                if a_try <= a_val - 1e-4 * alpha * slope:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                break
            x, a_val = x_try, a_try
            alpha = min(alpha * 1.3, 1e3)
            g = project(_grad_vector(model, make_loop(x)))
            gnorm = float(np.linalg.norm(g))
            iters += 1
            if iters % 50 == 0:
                r, _ = euler_lagrange_residual(model, make_loop(x))
                if r < best[1]:
                    best = (x.copy(), r)
                if r <= tol:
                    break
        message = "descent+newton iterations: %d" % iters
        x, note, stalled = newton_polish(x)
        g = project(_grad_vector(model, make_loop(x)))
        gnorm = float(np.linalg.norm(g))
        a_val = action(model, make_loop(x))
        if not stalled or iters >= max_descent:
            message += note
            break
        message += note

    final = make_loop(x)
    resid, _ = euler_lagrange_residual(model, final)
    if resid > best[1]:
        final = make_loop(best[0])
        resid = best[1]
    g = project(_grad_vector(model, final))
    converged = bool(resid <= tol)
    if not converged:
        message += "; residual %.3e above tol %.1e" % (resid, tol)
    return PeriodicOrbit(loop=final, action=action(model, final),
                         residual=resid, grad_norm=float(np.linalg.norm(g)),
                         converged=converged, iterations=iters,
                         message=message)


# ---------------------------------------------------------------------------
# zero mode and Sobolev inequality


def velocity_coefficient_vector(loop: Loop) -> np.ndarray:
    """Coefficients of the velocity in the L^2-orthonormal loop basis.

    The velocity of a loop with winding is itself a periodic field, so it
    expands exactly in the same basis (constant term winding / tau).
    """
    K, n, tau = loop.nf, loop.n, loop.tau
    omk = TWO_PI * np.arange(K + 1) / tau
    vc = omk[:, None] * loop.sin
    vc[0] = loop.winding / tau
    vs = -(omk[1:, None]) * loop.cos[1:]
    norms_c = np.where(np.arange(K + 1) == 0, np.sqrt(tau),
                       np.sqrt(tau / 2.0))[:, None]
    out = np.concatenate([(vc * norms_c).ravel(),
                          (vs * np.sqrt(tau / 2.0)).ravel()])
    return out


def zero_mode_angle(hess: HessianResult, loop: Loop) -> tuple[float, float]:
    """(angle, eigenvalue): angle between the near-zero eigenvector and
    the loop velocity direction, in radians."""
    if hess.basis != "full":
        raise ValueError("zero-mode comparison needs the full basis")
    w, V = np.linalg.eigh(hess.matrix)
    j = int(np.argmin(np.abs(w)))
    vel = velocity_coefficient_vector(loop)
    nv = np.linalg.norm(vel)
    if nv == 0:
        raise ValueError("constant loop has no velocity direction")
    c = abs(float(V[:, j] @ vel)) / nv
    return float(np.arccos(min(1.0, c))), float(w[j])


def sobolev_c0_check(loop: Loop, nt: int = 8192) -> dict:
    """Check sup |y| <= sqrt((1 + tau)/tau) * W^{1,2}-norm of y.

    y is the periodic part of the loop; both sides are computed from the
    Fourier coefficients (the norm exactly, the sup on a fine grid).
    """
    tau, K = loop.tau, loop.nf
    ts = loop.grid(max(nt, 4 * K))
    y = loop.value(ts) - np.outer(ts, loop.winding) / tau
    lhs = float(np.max(np.linalg.norm(y, axis=1)))
    omk = TWO_PI * np.arange(K + 1) / tau
    a2 = np.sum(loop.cos ** 2, axis=1)
    b2 = np.sum(loop.sin ** 2, axis=1)
    l2 = tau * (a2[0] + 0.5 * np.sum(a2[1:] + b2[1:]))
    h1 = tau * 0.5 * np.sum(omk[1:] ** 2 * (a2[1:] + b2[1:]))
    rhs_norm = np.sqrt(l2 + h1)
    const = np.sqrt((1.0 + tau) / tau)
    return {"sup_norm": lhs, "w12_norm": float(rhs_norm),
            "constant": float(const),
            "bound": float(const * rhs_norm),
            "passed": bool(lhs <= const * rhs_norm * (1.0 + 1e-12))}
