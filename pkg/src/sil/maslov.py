"""Maslov-type indices of symplectic paths via crossing forms.

For a path Psi on [a, b] generated by dPsi/dt = J0 B(t) Psi, intersections of a
moving Lagrangian (the graph of Psi against the diagonal, or Psi U_k against
U_k) are located by singular-value dips, refined by scalar minimization, and
weighted by the crossing form <B(t*) w, w> restricted to the intersection.

Counting convention (calibrated against the identity path, rotation paths and
the half-period splitting identities; see tests):

    count = m+(form at start, if the start intersects)
          + sum over interior crossings of signature(form)
          - m-(form at end, if the end intersects)

The index of the graph-vs-diagonal problem minus n reproduces the Maslov-type
index of the periodic problem: identically-I paths get -n, small negative
definite coefficients get -n, a rotation through angle 3*pi gets +3.
Degenerate data (a singular crossing form, or an intersection that never
becomes transversal) falls back to the stabilized limit of the perturbed
coefficient B - eps*I from below.

Strongly hyperbolic stretches of iterated paths, where the fundamental
solution grows so large that singular values of Psi - I drown in roundoff,
are handled through a spectral reduction: with M the one-period monodromy and
Psi(j tau + s) = Psi(s) M^j, the crossing condition det(Psi(t) - I) = 0 is,
up to O(rho^j) Schur-complement corrections from the contracting invariant
subspace, equivalent to a singular reduced pencil Q(s) - Lambda^-j built from
moderate-norm matrices in M's eigenbasis.  Crossings found there are counted
with the usual crossing form; stretches the reduction cannot certify abort
with a convergence error rather than returning an uncertifiable count.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .symplectic import SymplecticPath, integrate_fundamental, project_symplectic

__all__ = [
    "TolerancePolicy",
    "Crossing",
    "IndexResult",
    "MuIndices",
    "MeanIndexResult",
    "ConvergenceError",
    "nullity",
    "power_nullity",
    "cz_index",
    "cz_index_sequence",
    "mu_indices",
    "mu_index_sequence",
    "clm_graph_index",
    "iterate_path",
    "mean_index",
    "check_assumption_B",
]

EPS_SCHEDULE = (1e-3, 1e-4, 1e-5, 1e-6)


class ConvergenceError(RuntimeError):
    """Raised when crossing data cannot be stabilized at the requested tolerances."""


class _Irregular(Exception):
    """Internal: a crossing form is singular or a kernel is unresolved."""


@dataclass(frozen=True)
class TolerancePolicy:
    """Tolerance knobs for crossing detection and counting.

    tol_rank: relative singular-value threshold for kernel dimensions.
    tol_form: relative eigenvalue threshold below which a crossing form
        counts as singular (triggering the perturbation route).
    tol_t: crossing times are refined to tol_t * (interval length).
    tol_cross: absolute sigma_min acceptance level for a true crossing.
    err_rel: estimated relative integration error; the absolute noise floor
        at a node is err_rel * (1 + |Psi|_F) plus a fixed-precision term.
    """

    tol_rank: float = 1e-7
    tol_form: float = 1e-6
    tol_t: float = 1e-10
    tol_cross: float = 3e-8
    err_rel: float = 3e-9
    noise_safety: float = 50.0
    gap_factor: float = 10.0
    merge_factor: float = 200.0
    eps_schedule: tuple = EPS_SCHEDULE


DEFAULT_POLICY = TolerancePolicy()


@dataclass(frozen=True)
class Crossing:
    time: float
    kernel_dim: int
    positive: int
    negative: int
    boundary: str  # 'start' | 'interior' | 'end'

    @property
    def signature(self) -> int:
        return self.positive - self.negative


@dataclass(frozen=True)
class IndexResult:
    index: int
    nullity: int
    method: str  # 'crossing-form' | 'perturbation-limit'
    crossings: tuple
    epsilon: float = 0.0

    def pair(self) -> tuple[int, int]:
        return self.index, self.nullity


@dataclass(frozen=True)
class MuIndices:
    mu1: int
    mu2: int
    nu1: int
    nu2: int
    half_time: float
    method: str
    epsilon: float = 0.0


@dataclass(frozen=True)
class MeanIndexResult:
    estimate: float
    lower: float
    upper: float
    m_used: int


# ---------------------------------------------------------------------------
# intersection targets


class _Target:
    """One Lagrangian-intersection problem along the path."""

    name = "?"
    graph_like = False  # crossings reducible through the monodromy eigenbasis

    def pencil(self, mats: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def vectors(self, M: np.ndarray, ker: np.ndarray) -> np.ndarray:
        """Map kernel basis of the pencil to ambient intersection vectors (2n, d)."""
        raise NotImplementedError

    def start_vectors(self, n: int) -> np.ndarray:
        """Intersection basis at an identity start (structurally full here)."""
        raise NotImplementedError


class _GraphTarget(_Target):
    name = "graph"
    graph_like = True

    def pencil(self, mats):
        return mats - np.eye(mats.shape[-1])

    def vectors(self, M, ker):
        return ker

    def start_vectors(self, n):
        return np.eye(2 * n)


class _U1Target(_Target):
    """U1 = {0} x R^n; intersections where the upper-right block drops rank."""

    name = "U1"

    def pencil(self, mats):
        n = mats.shape[-1] // 2
        return mats[..., :n, n:]

    def vectors(self, M, ker):
        n = M.shape[0] // 2
        return M[:, n:] @ ker

    def start_vectors(self, n):
        F = np.zeros((2 * n, n))
        F[n:, :] = np.eye(n)
        return F

    def frame_pencil(self, cols):
        """Pencil rows of a moving column frame Psi(t) @ F, same rank drops."""
        n = cols.shape[-2] // 2
        return cols[..., :n, :]


class _U2Target(_Target):
    """U2 = R^n x {0}; intersections where the lower-left block drops rank."""

    name = "U2"

    def pencil(self, mats):
        n = mats.shape[-1] // 2
        return mats[..., n:, :n]

    def vectors(self, M, ker):
        n = M.shape[0] // 2
        return M[:, :n] @ ker

    def start_vectors(self, n):
        F = np.zeros((2 * n, n))
        F[:n, :] = np.eye(n)
        return F

    def frame_pencil(self, cols):
        n = cols.shape[-2] // 2
        return cols[..., n:, :]


# ---------------------------------------------------------------------------
# crossing machinery


def _form_counts(G: np.ndarray, tol_form: float) -> tuple[int, int]:
    """(m+, m-) of a crossing form; raises _Irregular if any eigenvalue is tiny."""
    G = 0.5 * (G + G.T)
    w = np.linalg.eigvalsh(G)
    scale = max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    if w.size and np.min(np.abs(w)) < tol_form * scale:
        raise _Irregular("singular crossing form (|eig| %.3e < %.3e)"
                         % (float(np.min(np.abs(w))), tol_form * scale))
    return int((w > 0).sum()), int((w < 0).sum())


def _kernel_at(path: SymplecticPath, target: _Target, t: float, accept: float,
               policy: TolerancePolicy) -> tuple[np.ndarray, int] | None:
    """Ambient intersection basis at time t, or None when nothing crosses.

    accept is the absolute sigma_min acceptance level at t.
    """
    M = path.evaluate(t)
    P = target.pencil(M[None])[0]
    _, s, Vt = np.linalg.svd(P)
    if s[-1] >= accept:
        return None
    smax = s[0] if s.size else 0.0
    ker_tol = max(10.0 * accept, policy.tol_rank * (1.0 + smax))
    d = int((s < ker_tol).sum())
    if d < len(s):
        above = s[len(s) - d - 1]
        if above < policy.gap_factor * ker_tol:
            raise _Irregular("unresolved kernel dimension at t=%.12g "
                             "(sigma above the gap %.3e, kernel tol %.3e)"
                             % (t, above, ker_tol))
    ker = Vt[len(s) - d:].T
    return target.vectors(M, ker), d


def _local_minima(vals: np.ndarray) -> list[int]:
    """Indices of local minima, with plateau runs reduced to their centers."""
    out = []
    N = len(vals)
    k = 1
    while k < N - 1:
        if vals[k] <= vals[k - 1] and vals[k] <= vals[k + 1]:
            j = k
            while j + 1 < N - 1 and vals[j + 1] == vals[k]:
                j += 1
            out.append((k + j) // 2)
            k = j + 1
        else:
            k += 1
    return out


_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _refine_min(f: Callable, lo: float, hi: float, xatol: float,
                max_iter: int = 200) -> tuple[float, float]:
    """Golden-section minimum of f on [lo, hi] to absolute tolerance xatol.

    Singular-value dips are V-shaped (|t - t*| to leading order), where
    parabolic-interpolation minimizers stall at a sqrt(eps)*|t| relative
    floor; plain golden section localizes to the requested absolute width.
    """
    a, b = float(lo), float(hi)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= xatol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    if fc <= fd:
        return c, fc
    return d, fd


def _scan_crossings(path: SymplecticPath, target: _Target, t_hi: float,
                    policy: TolerancePolicy) -> tuple[tuple[int, int], list]:
    """Locate crossings of the target problem on (t0, t_hi].

    Returns (start (m+, m-) of the structural start crossing, raw crossing
    records [(time, m+, m-, kernel_dim), ...] sorted by time, start excluded).
    Raises _Irregular when a form is singular, a kernel unresolved, or the
    intersection never becomes transversal.
    """
    if not target.graph_like and getattr(path, "_base", None) is not None:
        return _scan_crossings_segmented(path, target, t_hi, policy)
    if path.coeff is None:
        raise ValueError("index computation needs the coefficient path (coeff is None)")
    n = path.n
    t0 = path.t0
    T = t_hi - t0
    if not T > 0:
        raise ValueError("empty scan interval")

    # start: these paths begin at the identity, where the intersection is
    # structurally full and the form is B(t0) compressed to the start basis
    M0 = path.mats[0]
    if np.max(np.abs(M0 - np.eye(2 * n))) > 1e-9:
        raise ValueError("path must start at the identity")
    W0 = target.start_vectors(n)
    B0 = np.asarray(path.coeff(t0), dtype=float)
    start = _form_counts(W0.T @ B0 @ W0, policy.tol_form)

    sel = path.times <= t_hi + 1e-12 * max(1.0, abs(t_hi))
    times = path.times[sel]
    mats = path.mats[sel]
    svals = np.linalg.svd(target.pencil(mats), compute_uv=False)
    smin = svals[:, -1]
    smax = svals[:, 0]
    normf = np.sqrt(np.einsum("kij,kij->k", mats, mats))
    noise = policy.err_rel * (1.0 + normf) + 1e-13 * (1.0 + smax)
    accept = np.maximum(policy.tol_cross, policy.noise_safety * noise)

    # nodes where the acceptance level still resolves the typical dip scale;
    # the scale itself must come from nodes whose sigma_min is trustworthy,
    # otherwise noise floors of order |Psi|*eps inflate it and drag genuinely
    # unresolvable nodes into the valid set
    clean = accept <= 100.0 * policy.tol_cross
    pool = smin[clean] if clean.any() else smin
    signal = float(np.percentile(pool, 90))
    valid = accept <= 0.05 * max(signal, 1e-30)
    if not valid.any():
        raise _Irregular("intersection degenerate or noise-dominated along the "
                         "whole path (signal scale %.3e)" % signal)
    if not target.graph_like and not valid.all():
        raise _Irregular("noise-limited %s scan: |Psi| grows past what the "
                         "grid resolves; increase integration accuracy" % target.name)
    frac = float(np.mean(smin[valid] < accept[valid]))
    if frac > 0.25:
        raise _Irregular("intersection degenerate along the whole path "
                         "(%.0f%% of resolvable nodes below acceptance)" % (100.0 * frac))

    h = times[1] - times[0]
    merge = max(policy.merge_factor * policy.tol_t * T, 1e-13 * T)

    cands = [k for k in _local_minima(smin) if valid[k]]
    # near-boundary cells: dips hiding next to the ends are refined too
    for k in (1, len(times) - 2):
        if 0 < k < len(times) - 1 and valid[k] and k not in cands:
            cands.append(k)

    def sigma_at(t):
        P = target.pencil(path.evaluate(t)[None])[0]
        return float(np.linalg.svd(P, compute_uv=False)[-1])

    found = []
    for k in sorted(set(cands)):
        if smin[k] >= 0.5 * max(signal, 1e-30):
            continue  # shallow wiggle at the generic sigma level, not a dip
        lo = max(t0, times[k] - h)
        hi = min(t_hi, times[k] + h)
        tstar, gval = _refine_min(sigma_at, lo, hi, policy.tol_t * T)
        acc_here = float(np.interp(tstar, times, accept))
        if gval >= acc_here:
            continue
        if tstar - t0 <= merge:
            continue  # the structural start crossing, already counted
        got = _kernel_at(path, target, tstar, acc_here, policy)
        if got is None:
            continue
        W, d = got
        Bt = np.asarray(path.coeff(tstar), dtype=float)
        p, m = _form_counts(W.T @ Bt @ W, policy.tol_form)
        found.append((tstar, p, m, d))

    if not valid.all():
        found.extend(_blind_crossings(path, valid, len(times), policy))

    found.sort(key=lambda c: c[0])
    merged = []
    for c in found:
        if merged and c[0] - merged[-1][0] < merge:
            if c[3] > merged[-1][3]:
                merged[-1] = c
            continue
        merged.append(c)
    return start, merged


def _orth_columns(A: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the column space (QR, economy size)."""
    return np.linalg.qr(A)[0]


def _scan_crossings_segmented(path: SymplecticPath, target: _Target, t_hi: float,
                              policy: TolerancePolicy) -> tuple[tuple[int, int], list]:
    """Lagrangian-plane crossings of an iterated path, one period at a time.

    With Psi(j tau + s) = Psi_b(s) M^j, the intersection of Psi(t) U with the
    reference plane is carried by the column block Psi_b(s) F_j, where F_j is
    an orthonormal basis of M^j U rebuilt by one QR per period.  Orthonormal
    frames of the same subspace differ by a right orthogonal factor, so the
    pencil rank drops (and the inertia of the crossing forms, which only see
    the spanned subspace) are exactly those of the raw scan, while node norms
    stay bounded by a single period of growth instead of compounding through
    the iterates.  That keeps the noise floor resolvable for hyperbolic
    monodromies whose raw iterates overflow the absolute scale.
    """
    base, mseg = path._base
    if path.coeff is None or base.coeff is None:
        raise ValueError("index computation needs the coefficient path (coeff is None)")
    n = path.n
    t0 = base.t0
    tau = base.t1 - base.t0
    T = t_hi - t0
    if not T > 0:
        raise ValueError("empty scan interval")

    M0 = base.mats[0]
    if np.max(np.abs(M0 - np.eye(2 * n))) > 1e-9:
        raise ValueError("path must start at the identity")
    W0 = target.start_vectors(n)
    B0 = np.asarray(path.coeff(t0), dtype=float)
    start = _form_counts(W0.T @ B0 @ W0, policy.tol_form)

    nseg = min(mseg, max(1, int(np.ceil((t_hi - t0) / tau - 1e-9))))
    Mtau = base.monodromy
    frames = []
    F = W0  # start_vectors are orthonormal columns
    times_l, cols_l = [], []
    for j in range(nseg):
        frames.append(F)
        seg_cols = base.mats @ F  # (K+1, 2n, n)
        if j < nseg - 1:
            # drop the right endpoint: the next segment re-expresses it in
            # the renormalized frame, which is the representation we want
            times_l.append(base.times[:-1] + j * tau)
            cols_l.append(seg_cols[:-1])
        else:
            times_l.append(base.times + j * tau)
            cols_l.append(seg_cols)
        F = _orth_columns(Mtau @ F)
    times = np.concatenate(times_l)
    cols = np.concatenate(cols_l)
    sel = times <= t_hi + 1e-12 * max(1.0, abs(t_hi))
    times = times[sel]
    cols = cols[sel]

    svals = np.linalg.svd(target.frame_pencil(cols), compute_uv=False)
    smin = svals[:, -1]
    smax = svals[:, 0]
    normf = np.sqrt(np.einsum("kij,kij->k", cols, cols))
    noise = policy.err_rel * (1.0 + normf) + 1e-13 * (1.0 + smax)
    accept = np.maximum(policy.tol_cross, policy.noise_safety * noise)

    clean = accept <= 100.0 * policy.tol_cross
    pool = smin[clean] if clean.any() else smin
    signal = float(np.percentile(pool, 90))
    valid = accept <= 0.05 * max(signal, 1e-30)
    if not valid.any():
        raise _Irregular("intersection degenerate or noise-dominated along the "
                         "whole path (signal scale %.3e)" % signal)
    if not valid.all():
        raise _Irregular("noise-limited %s scan: a single period outgrows the "
                         "grid; increase integration accuracy" % target.name)
    frac = float(np.mean(smin < accept))
    if frac > 0.25:
        raise _Irregular("intersection degenerate along the whole path "
                         "(%.0f%% of resolvable nodes below acceptance)" % (100.0 * frac))

    h = base.times[1] - base.times[0]
    merge = max(policy.merge_factor * policy.tol_t * T, 1e-13 * T)

    cands = list(_local_minima(smin))
    for k in (1, len(times) - 2):
        if 0 < k < len(times) - 1 and k not in cands:
            cands.append(k)

    def cols_at(t):
        j = min(max(int(np.floor((t - t0) / tau + 1e-12)), 0), nseg - 1)
        return base.evaluate(t - j * tau) @ frames[j]

    def sigma_at(t):
        P = target.frame_pencil(cols_at(t))
        return float(np.linalg.svd(P, compute_uv=False)[-1])

    found = []
    for k in sorted(set(cands)):
        if smin[k] >= 0.5 * max(signal, 1e-30):
            continue  # shallow wiggle at the generic sigma level, not a dip
        lo = max(t0, times[k] - h)
        hi = min(t_hi, times[k] + h)
        tstar, gval = _refine_min(sigma_at, lo, hi, policy.tol_t * T)
        acc_here = float(np.interp(tstar, times, accept))
        if gval >= acc_here:
            continue
        if tstar - t0 <= merge:
            continue  # the structural start crossing, already counted
        C = cols_at(tstar)
        P = target.frame_pencil(C)
        _, s, Vt = np.linalg.svd(P)
        if s[-1] >= acc_here:
            continue
        top = s[0] if s.size else 0.0
        ker_tol = max(10.0 * acc_here, policy.tol_rank * (1.0 + top))
        d = int((s < ker_tol).sum())
        if d < len(s):
            above = s[len(s) - d - 1]
            if above < policy.gap_factor * ker_tol:
                raise _Irregular("unresolved kernel dimension at t=%.12g "
                                 "(sigma above the gap %.3e, kernel tol %.3e)"
                                 % (tstar, above, ker_tol))
        ker = Vt[len(s) - d:].T
        W = C @ ker
        Bt = np.asarray(path.coeff(tstar), dtype=float)
        p, m = _form_counts(W.T @ Bt @ W, policy.tol_form)
        found.append((tstar, p, m, d))

    found.sort(key=lambda c: c[0])
    merged = []
    for c in found:
        if merged and c[0] - merged[-1][0] < merge:
            if c[3] > merged[-1][3]:
                merged[-1] = c
            continue
        merged.append(c)
    return start, merged


def _blind_crossings(path: SymplecticPath, valid: np.ndarray, n_nodes: int,
                     policy: TolerancePolicy) -> list:
    """Crossings on noise-blind stretches of an iterated path.

    With M the (moderate) one-period monodromy and Psi(j tau + s) =
    Psi(s) M^j, the crossing condition det(Psi(t) - I) = 0 reduces in M's
    eigenbasis to a singular pencil Q(s) - Lambda^-j on the non-contracting
    invariant subspace, up to O(rho^j) Schur-complement corrections from the
    contracting one (rho = largest contracting modulus).  Everything in the
    reduced pencil has moderate norm, so these crossings are resolvable even
    where |Psi| itself has outgrown floating-point discrimination.

    Returns extra (t, m+, m-, dim) records; raises _Irregular when a blind
    stretch cannot be certified.
    """
    base_info = getattr(path, "_base", None)
    if base_info is None:
        raise _Irregular("noise-limited stretch on a non-iterated path; "
                         "increase integration accuracy")
    base, _ = base_info
    tau = base.t1 - base.t0
    mu, V = np.linalg.eig(base.monodromy)
    kappa = float(np.linalg.cond(V))
    if not np.isfinite(kappa) or kappa > 1e8:
        raise _Irregular("monodromy eigenbasis too ill-conditioned for the "
                         "reduced scan (cond %.2e)" % kappa)
    stable = np.abs(mu) < 1.0 - 1e-6
    if not stable.any():
        raise _Irregular("noise-limited stretch without spectral contraction")
    keep = ~stable
    lam = mu[keep]
    rho = float(np.max(np.abs(mu[stable])))
    Winv = np.linalg.inv(V)
    Vk = V[:, keep]
    Wk = Winv[keep, :]
    Vc = V[:, stable]
    Wc = Winv[stable, :]
    r = int(keep.sum())

    K = len(base.times) - 1
    blind = np.nonzero(~valid[:n_nodes])[0]
    blind = blind[blind >= 1]
    if len(blind) == 0:
        return []
    jj = (blind - 1) // K
    rr = blind - jj * K
    base_mats = base.mats[rr]
    Q = (Wk @ base_mats) @ Vk
    G = Q.copy()
    idx = np.arange(r)
    G[:, idx, idx] -= lam[None, :] ** (-jj[:, None])
    sv = np.linalg.svd(G, compute_uv=False)
    smin_red = sv[:, -1]
    smax_red = sv[:, 0]
    normb = np.sqrt(np.einsum("kij,kij->k", base_mats, base_mats))

    # Schur-complement correction from the contracted block, per node: the
    # exact pencil is Q - Lambda^-j - E with |E| bounded through the actual
    # coupling norms between the spectral blocks (zero when they decouple)
    nkc = np.zeros(len(base.times))
    nck = np.zeros(len(base.times))
    ncc = np.zeros(len(base.times))
    for r_ in np.unique(rr):
        Ms = base.mats[r_]
        nkc[r_] = np.linalg.norm(Wk @ Ms @ Vc, 2)
        nck[r_] = np.linalg.norm(Wc @ Ms @ Vk, 2)
        ncc[r_] = np.linalg.norm(Wc @ Ms @ Vc, 2)
    rhoj = rho ** jj.astype(float)
    denom = 1.0 - rhoj * ncc[rr]
    if np.any(denom < 0.5):
        raise _Irregular("contracted spectral block still influential on the "
                         "blind stretch; increase integration accuracy")
    corr = nkc[rr] * nck[rr] * rhoj / denom
    tol_red = policy.noise_safety * policy.err_rel * kappa * (1.0 + normb) + 20.0 * corr
    thr = np.maximum(10.0 * tol_red, 1e-9 * (1.0 + smax_red))
    scale_red = float(np.percentile(smin_red, 90))
    h = base.times[1] - base.times[0]

    def red_sigma(s, j):
        Qs = (Wk @ base.evaluate(base.t0 + s)) @ Vk
        Gs = Qs - np.diag(lam ** (-float(j)))
        return float(np.linalg.svd(Gs, compute_uv=False)[-1])

    recs = []
    i = 0
    L = len(blind)
    while i < L:
        j0 = i
        while i + 1 < L and blind[i + 1] == blind[i] + 1:
            i += 1
        vals = smin_red[j0:i + 1]
        cand = set(_local_minima(vals)) | {0, len(vals) - 1}
        for c in sorted(cand):
            g = j0 + c
            if smin_red[g] >= 0.5 * max(scale_red, 1e-30):
                continue
            j_here = int(jj[g])
            s0 = base.times[rr[g]] - base.t0
            lo = max(s0 - h, 1e-12 * tau)
            hi = min(s0 + h, tau)
            sstar, gval = _refine_min(lambda s: red_sigma(s, j_here),
                                      lo, hi, policy.tol_t * tau)
            if gval >= thr[g]:
                continue
            tstar = base.t0 + j_here * tau + sstar
            Qs = (Wk @ base.evaluate(base.t0 + sstar)) @ Vk
            Gs = Qs - np.diag(lam ** (-float(j_here)))
            _, s_, Vh = np.linalg.svd(Gs)
            ker_tol = max(10.0 * thr[g], policy.tol_rank * (1.0 + s_[0]))
            d = int((s_ < ker_tol).sum())
            if d == 0:
                continue
            if d < len(s_):
                above = s_[len(s_) - d - 1]
                if above < policy.gap_factor * ker_tol:
                    raise _Irregular("unresolved reduced kernel at t=%.12g" % tstar)
            y = Vh[len(s_) - d:].conj().T
            vc = Vk @ y
            cols = np.concatenate([vc.real, vc.imag], axis=1)
            Uc, sc, _ = np.linalg.svd(cols, full_matrices=False)
            rank = int((sc > 1e-3 * max(float(sc[0]), 1e-300)).sum())
            if rank != d:
                raise _Irregular("blind crossing at t=%.9g has an unresolved "
                                 "real kernel (rank %d vs dim %d)" % (tstar, rank, d))
            W = Uc[:, :d]
            Bt = np.asarray(path.coeff(tstar), dtype=float)
            p, m = _form_counts(W.T @ Bt @ W, policy.tol_form)
            recs.append((tstar, p, m, d))
        i += 1
    return recs


def _counts_at_marks(start: tuple[int, int], crossings: list, t0: float,
                     marks: Sequence[float], merge: float) -> list[tuple[int, tuple]]:
    """Counting-convention totals at each mark, with per-mark crossing records."""
    out = []
    for tm in marks:
        total = start[0]
        recs = [Crossing(t0, start[0] + start[1], start[0], start[1], "start")]
        for (t, p, m, d) in crossings:
            if t < tm - merge:
                total += p - m
                recs.append(Crossing(t, d, p, m, "interior"))
            elif abs(t - tm) <= merge:
                total -= m
                recs.append(Crossing(t, d, p, m, "end"))
        out.append((total, tuple(recs)))
    return out


def _rebuild(path: SymplecticPath, eps: float) -> SymplecticPath:
    """Re-integrate the path with coefficient B(t) - eps*I (same grid layout)."""
    rebuilder = getattr(path, "_rebuilder", None)
    if rebuilder is not None:
        return rebuilder(eps)
    base = path.coeff
    I2n = np.eye(2 * path.n)

    def coeff_eps(t, _b=base, _e=eps):
        return np.asarray(_b(t), dtype=float) - _e * I2n

    steps = len(path.times) - 1
    return integrate_fundamental(coeff_eps, path.n, (path.t0, path.t1), steps=steps,
                                 check_symmetry=False)


def _counts_with_fallback(path: SymplecticPath, target: _Target, marks: Sequence[float],
                          policy: TolerancePolicy) -> tuple[list, str, float]:
    """Crossing counts at marks; on irregular data, the eps-from-below limit."""
    t_hi = max(marks)
    T = t_hi - path.t0
    merge = max(policy.merge_factor * policy.tol_t * T, 1e-13 * T)
    try:
        start, crossings = _scan_crossings(path, target, t_hi, policy)
        return (_counts_at_marks(start, crossings, path.t0, marks, merge),
                "crossing-form", 0.0)
    except _Irregular:
        pass
    prev = None
    for eps in policy.eps_schedule:
        try:
            pert = _rebuild(path, eps)
            start, crossings = _scan_crossings(pert, target, t_hi, policy)
        except _Irregular:
            prev = None
            continue
        counts = _counts_at_marks(start, crossings, pert.t0, marks, merge)
        totals = [c for c, _ in counts]
        if prev is not None and totals == prev[0]:
            return counts, "perturbation-limit", eps
        prev = (totals, counts)
    raise ConvergenceError(
        "perturbation schedule %s did not stabilize the %s crossing count"
        % (list(policy.eps_schedule), target.name))


# ---------------------------------------------------------------------------
# nullities


def nullity(path_or_matrix, t: float | None = None,
            tol_rank: float = DEFAULT_POLICY.tol_rank) -> int:
    """dim ker(Psi(t) - I) by singular values, relative to the matrix scale."""
    if isinstance(path_or_matrix, SymplecticPath):
        M = path_or_matrix.monodromy if t is None else path_or_matrix.evaluate(t)
    else:
        M = np.asarray(path_or_matrix, dtype=float)
    s = np.linalg.svd(M - np.eye(M.shape[0]), compute_uv=False)
    scale = 1.0 + (s[0] if s.size else 0.0)
    return int((s / scale < tol_rank).sum())


def power_nullity(M: np.ndarray, m: int, tol: float | None = None,
                  tol_rank: float = DEFAULT_POLICY.tol_rank) -> int:
    """dim ker(M^m - I) from the eigenstructure of M itself.

    Sums geometric multiplicities of M at the m-th roots of unity (the real
    kernel dimension of M^m - I equals that sum over all complex roots).
    Stable for strongly hyperbolic M whose m-th powers overflow any direct
    SVD approach.  Each root is rank-tested by singular values of M - root*I;
    computed eigenvalues of a defective kernel block can land a root of
    epsilon away from the root, so no spectral pre-filter is applied unless
    tol (a radius around each root) is passed explicitly for very large m.
    Conjugate roots have equal multiplicities for real M, so only half the
    circle is tested.
    """
    M = np.asarray(M, dtype=float)
    vals = np.linalg.eigvals(M) if tol is not None else None
    scale = max(1.0, float(np.linalg.norm(M, 2)))
    I = np.eye(M.shape[0])
    total = 0
    for k in range(m // 2 + 1):
        root = np.exp(2j * np.pi * k / m)
        weight = 1 if (k == 0 or 2 * k == m) else 2
        if vals is not None and np.min(np.abs(vals - root)) > tol:
            continue
        s = np.linalg.svd(M - root * I, compute_uv=False)
        total += weight * int((s / scale < tol_rank).sum())
    return total


# ---------------------------------------------------------------------------
# public indices


def cz_index(path: SymplecticPath, policy: TolerancePolicy | None = None) -> IndexResult:
    """Maslov-type index and nullity of the periodic problem for Psi on [t0, t1].

    Crossing-form count of the graph against the diagonal, minus n; degenerate
    data falls back to the stabilized B - eps*I limit from below.  The nullity
    is always computed from the unperturbed endpoint.
    """
    policy = policy or DEFAULT_POLICY
    counts, method, eps = _counts_with_fallback(path, _GraphTarget(), [path.t1], policy)
    total, recs = counts[0]
    nu = nullity(path, tol_rank=policy.tol_rank)
    return IndexResult(total - path.n, nu, method, recs, eps)


def cz_index_sequence(path: SymplecticPath, marks: Sequence[float],
                      nullities: Sequence[int] | None = None,
                      policy: TolerancePolicy | None = None) -> list[IndexResult]:
    """Indices of the restrictions Psi|[t0, mark] for several marks in one scan.

    nullities may be supplied (e.g. from power_nullity of the one-period
    monodromy) to avoid SVDs of large iterated products.
    """
    policy = policy or DEFAULT_POLICY
    marks = list(marks)
    counts, method, eps = _counts_with_fallback(path, _GraphTarget(), marks, policy)
    out = []
    for k, (total, recs) in enumerate(counts):
        if nullities is not None:
            nu = int(nullities[k])
        else:
            nu = nullity(path, t=marks[k], tol_rank=policy.tol_rank)
        out.append(IndexResult(total - path.n, nu, method, recs, eps))
    return out


def _subspace_nullity(path: SymplecticPath, target: _Target, t: float,
                      tol_rank: float) -> int:
    """dim(Psi(t) U  ∩  U) through an orthonormal frame of Psi(t) U.

    Orthonormalizing first puts the pencil rows on a unit scale, so the rank
    test does not mistake a large hyperbolic spread for a kernel (the corner
    block of a strong iterate has sigma_min / sigma_max below any relative
    tolerance without an actual intersection).  Iterated paths rebuild the
    frame one period at a time, which keeps every QR well conditioned.
    """
    n = path.n
    base_info = getattr(path, "_base", None)
    if base_info is not None:
        base, mseg = base_info
        tau = base.t1 - base.t0
        j = min(max(int(np.floor((t - base.t0) / tau + 1e-12)), 0), mseg - 1)
        F = target.start_vectors(n)
        M = base.monodromy
        for _ in range(j):
            F = _orth_columns(M @ F)
        cols = base.evaluate(t - j * tau) @ F
    else:
        cols = path.evaluate(t) @ target.start_vectors(n)
    Q = _orth_columns(cols)
    s = np.linalg.svd(target.frame_pencil(Q), compute_uv=False)
    return int((s < tol_rank).sum())


def mu_indices(path: SymplecticPath, half_time: float | None = None,
               policy: TolerancePolicy | None = None) -> MuIndices:
    """Half-interval Lagrangian intersection indices (mu1, mu2, nu1, nu2).

    mu_k counts intersections of Psi(t) U_k with U_k on [t0, half], where half
    defaults to the interval midpoint; nu1/nu2 are the kernel dimensions of
    the endpoint's upper-right and lower-left blocks.
    """
    policy = policy or DEFAULT_POLICY
    half = 0.5 * (path.t0 + path.t1) if half_time is None else float(half_time)
    return mu_index_sequence(path, [half], policy=policy)[0]


def mu_index_sequence(path: SymplecticPath, half_marks: Sequence[float],
                      policy: TolerancePolicy | None = None) -> list[MuIndices]:
    """mu/nu data at several half-interval marks in one scan per target."""
    policy = policy or DEFAULT_POLICY
    marks = list(half_marks)
    c1, meth1, e1 = _counts_with_fallback(path, _U1Target(), marks, policy)
    c2, meth2, e2 = _counts_with_fallback(path, _U2Target(), marks, policy)
    method = meth1 if meth1 == meth2 else "%s/%s" % (meth1, meth2)
    out = []
    for k, half in enumerate(marks):
        nu1 = _subspace_nullity(path, _U1Target(), half, policy.tol_rank)
        nu2 = _subspace_nullity(path, _U2Target(), half, policy.tol_rank)
        out.append(MuIndices(c1[k][0], c2[k][0], nu1, nu2, half, method, max(e1, e2)))
    return out


# ---------------------------------------------------------------------------
# graph route in the doubled space (independent cross-check)


class _DoubledTarget(_Target):
    """Graph of Psi against the diagonal, set up in the doubled space R^4n.

    The graph frame [[I], [Psi]] meets the diagonal frame [[I], [I]]/sqrt(2)
    exactly at the crossings of the periodic problem; kernel vectors (u, w) of
    the concatenated frame pencil project to the ambient crossing vector u.
    The crossing form of the moving graph against the product structure
    (-omega) x omega reduces to <B u, u>, so the generic counting machinery
    applies unchanged.
    """

    name = "graph-doubled"
    graph_like = True

    def pencil(self, mats):
        dim = mats.shape[-1]
        K = mats.shape[0]
        P = np.zeros((K, 2 * dim, 2 * dim))
        I = np.eye(dim)
        P[:, :dim, :dim] = I
        P[:, dim:, :dim] = mats
        P[:, :dim, dim:] = -I / np.sqrt(2.0)
        P[:, dim:, dim:] = -I / np.sqrt(2.0)
        return P

    def vectors(self, M, ker):
        return ker[: M.shape[0], :]

    def start_vectors(self, n):
        return np.eye(2 * n)


def clm_graph_index(path: SymplecticPath, policy: TolerancePolicy | None = None) -> int:
    """Index of the periodic problem through the doubled-space frame pencil.

    Independent of cz_index's 2n x 2n pencil; must agree with it everywhere.
    """
    policy = policy or DEFAULT_POLICY
    counts, _, _ = _counts_with_fallback(path, _DoubledTarget(), [path.t1], policy)
    return counts[0][0] - path.n


# ---------------------------------------------------------------------------
# iteration, mean index, symmetry checks


def iterate_path(path: SymplecticPath, m: int) -> SymplecticPath:
    """The m-fold iterate on [t0, t0 + m*tau] via Psi(t) = Psi(t - j*tau) Psi(tau)^j."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if m == 1:
        return path
    n = path.n
    tau = path.t1 - path.t0
    t0 = path.t0
    K = len(path.times) - 1
    Mtau = path.monodromy
    times = np.empty(m * K + 1)
    mats = np.empty((m * K + 1, 2 * n, 2 * n))
    power = np.eye(2 * n)
    for j in range(m):
        times[j * K:(j + 1) * K] = path.times[:-1] + j * tau
        mats[j * K:(j + 1) * K] = path.mats[:-1] @ power
        power = project_symplectic(Mtau @ power)
    times[-1] = t0 + m * tau
    mats[-1] = power

    base = path.coeff
    if base is None:
        coeff = None
    else:
        def coeff(t, _b=base, _t0=t0, _tau=tau):
            return _b(_t0 + (t - _t0) % _tau)

    out = SymplecticPath(n, times, mats, coeff=coeff, tol_symp=path.tol_symp)
    out._base = (path, m)

    def rebuilder(eps, _p=path, _m=m):
        return iterate_path(_rebuild(_p, eps), _m)

    out._rebuilder = rebuilder
    return out


def mean_index(path: SymplecticPath, m_max: int = 32,
               policy: TolerancePolicy | None = None) -> MeanIndexResult:
    """Mean index per period, with the rigorous two-sided bracket.

    estimate = i_m / m at m = m_max; the true mean lies in
    [(i_m - n + nu_m)/m, (i_m + n)/m].
    """
    policy = policy or DEFAULT_POLICY
    n = path.n
    it = iterate_path(path, m_max)
    nu_m = power_nullity(path.monodromy, m_max)
    res = cz_index_sequence(it, [it.t1], nullities=[nu_m], policy=policy)[0]
    return MeanIndexResult(res.index / m_max, (res.index - n + nu_m) / m_max,
                           (res.index + n) / m_max, m_max)


def check_assumption_B(coeff: Callable, n: int, tau: float, samples: int = 128,
                       tol: float = 1e-8) -> dict:
    """Report parity/periodicity residuals of the coefficient path.

    Required structure: B symmetric and tau-periodic; diagonal blocks even
    about t = 0 and t = tau/2; off-diagonal blocks odd about both.
    """
    ss = np.linspace(0.0, tau / 2, samples)
    resid = {"symmetry": 0.0, "periodicity": 0.0,
             "diag_even_0": 0.0, "diag_even_half": 0.0,
             "offdiag_odd_0": 0.0, "offdiag_odd_half": 0.0}
    scale = 1.0
    for s in ss:
        B = np.asarray(coeff(s), dtype=float)
        scale = max(scale, float(np.max(np.abs(B))))
        resid["symmetry"] = max(resid["symmetry"], float(np.max(np.abs(B - B.T))))
        resid["periodicity"] = max(resid["periodicity"],
                                   float(np.max(np.abs(np.asarray(coeff(s + tau)) - B))))
        Bm = np.asarray(coeff(-s), dtype=float)
        Bh = np.asarray(coeff(tau / 2 + s), dtype=float)
        Bhm = np.asarray(coeff(tau / 2 - s), dtype=float)
        for (mat, ref, even_key, odd_key) in ((Bm, B, "diag_even_0", "offdiag_odd_0"),
                                              (Bh, Bhm, "diag_even_half", "offdiag_odd_half")):
            D = mat - ref
            S_ = mat + ref
            resid[even_key] = max(resid[even_key],
                                  float(np.max(np.abs(D[:n, :n]))),
                                  float(np.max(np.abs(D[n:, n:]))))
            resid[odd_key] = max(resid[odd_key],
                                 float(np.max(np.abs(S_[:n, n:]))),
                                 float(np.max(np.abs(S_[n:, :n]))))
    passed = all(v <= tol * scale for v in resid.values())
    return {"passed": passed, "residuals": resid, "scale": scale, "tol": tol}
