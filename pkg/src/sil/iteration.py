"""Index sequences of iterated periodic orbits.

An orbit gamma of period tau determines, for every k >= 1, a loop gamma^k of
period k*tau with the same trace.  This module builds those iterates, computes
their Morse counts (action Hessian route) and Maslov-type indices (fundamental
solution route), checks the iteration inequalities against the converged
mean-index bracket, evaluates the even/odd symmetric splitting for reversible
models at even orbits, and extracts index-stable subsequences.

Conventions:

- Mean-index bracket of a row k: [(i_k + nu_k - n) / k, (i_k + n) / k].  The
  bracket of the largest computed k is the "converged" estimate used in the
  inequality verdicts.
- Lower inequality: max{0, k * mean_lo - n} <= m^-_k.  Upper inequality:
  i_k <= k * mean_hi + n - nu_k.  Both use the bracket endpoints, so they are
  implied by the exact statements and never reject a correct sequence.
- Iterating multiplies the action by k exactly; the stored residual and
  gradient norms scale by sqrt(k) because they are L^2 norms over a window
  k times longer.  Per-period (RMS) size is unchanged.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .loops import ZERO_TOL_REL, Loop, PeriodicOrbit, is_even, morse_counts
from .maslov import (TolerancePolicy, check_assumption_B, cz_index_sequence,
                     iterate_path, mu_index_sequence, power_nullity)
from .models import (euler_lagrange_residual, linearize_along_orbit,
                     sturm_to_hamiltonian)
from .symplectic import integrate_fundamental

DEFAULT_K_SET = (1, 2, 4, 8, 16, 32)

CSV_COLUMNS = ("k", "m_minus", "m_zero", "i", "nu", "mean_lo", "mean_hi",
               "verdict_lower", "verdict_upper")

SPLIT_CSV_COLUMNS = ("k", "m_minus_even", "m_zero_even", "m_minus_odd",
                     "m_zero_odd", "mu1", "mu2", "nu1", "nu2", "i", "nu",
                     "passed")

_SLACK = 1e-9


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _csv_table(columns, rows) -> str:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_csv_cell(getattr(row, c)) for c in columns))
    return "\n".join(lines) + "\n"


def _worker_count(njobs: int) -> int:
    try:
        cap = int(os.environ.get("SIL_THREADS", "1"))
    except ValueError:
        cap = 1
    return max(1, min(njobs, cap))


def _map_jobs(fn, args):
    workers = _worker_count(len(args))
    if workers <= 1:
        return [fn(a) for a in args]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, args))


# ---------------------------------------------------------------------------
# orbit iteration


def iterate_loop(loop: Loop, k: int) -> Loop:
    """The k-fold iterate of a loop: same trace, period k*tau, winding k*w.

    Mode m of the base loop becomes mode k*m of the iterate, so per-period
    resolution is preserved exactly (no resampling error).
    """
    k = int(k)
    if k < 1:
        raise ValueError("iteration order k must be >= 1, got %d" % k)
    if k == 1:
        return loop
    K, n = loop.nf, loop.n
    cos = np.zeros((k * K + 1, n))
    sin = np.zeros((k * K + 1, n))
    cos[::k] = loop.cos
    sin[::k] = loop.sin
    return Loop(n=n, tau=k * loop.tau, winding=k * loop.winding,
                cos=cos, sin=sin)


def iterate_orbit(orbit, k: int):
    """Iterate a found orbit (or bare loop) k times.

    The action is k times the base action.  residual and grad_norm scale by
    sqrt(k): both are L^2 norms over one period and the period grows k-fold
    while the integrand repeats.
    """
    if isinstance(orbit, Loop):
        return iterate_loop(orbit, k)
    k = int(k)
    if k < 1:
        raise ValueError("iteration order k must be >= 1, got %d" % k)
    if k == 1:
        return orbit
    lp = iterate_loop(orbit.loop, k)
    s = math.sqrt(k)
    msg = "k=%d iterate" % k
    if orbit.message:
        msg += " of: " + orbit.message
    return PeriodicOrbit(loop=lp, action=k * orbit.action,
                         residual=s * orbit.residual,
                         grad_norm=s * orbit.grad_norm,
                         converged=orbit.converged,
                         iterations=orbit.iterations, message=msg)


# ---------------------------------------------------------------------------
# index sequences


@dataclass
class IndexRow:
    """Index data of one iterate gamma^k.

    m_minus / m_zero come from the action Hessian (None if the route was not
    requested), i / nu from the fundamental solution.  mean_lo / mean_hi is
    the per-row mean-index bracket; the verdicts compare against the
    sequence-level converged bracket.
    """

    k: int
    m_minus: Optional[int]
    m_zero: Optional[int]
    i: Optional[int]
    nu: Optional[int]
    mean_lo: float
    mean_hi: float
    verdict_lower: Optional[bool] = None
    verdict_upper: Optional[bool] = None
    agrees: Optional[bool] = None
    note: str = ""

    def index_pair(self) -> tuple[int, int]:
        """Preferred (index, nullity) integers for inequality checks."""
        if self.i is not None and self.nu is not None:
            return self.i, self.nu
        if self.m_minus is not None and self.m_zero is not None:
            return self.m_minus, self.m_zero
        raise ValueError("row k=%d carries no complete index pair" % self.k)

    def to_dict(self) -> dict:
        return {
            "k": self.k, "m_minus": self.m_minus, "m_zero": self.m_zero,
            "i": self.i, "nu": self.nu,
            "mean_lo": self.mean_lo, "mean_hi": self.mean_hi,
            "verdict_lower": self.verdict_lower,
            "verdict_upper": self.verdict_upper,
            "agrees": self.agrees, "note": self.note,
        }


@dataclass
class IndexSequence:
    """Per-iterate index table with the converged mean bracket."""

    n: int
    tau: float
    rows: list
    routes: tuple
    nf_base: int
    steps: int
    mean_estimate: float
    mean_lo: float
    mean_hi: float
    k_used: int
    residual: float
    notes: list = field(default_factory=list)

    def ks(self) -> list:
        return [row.k for row in self.rows]

    def row(self, k: int) -> IndexRow:
        for row in self.rows:
            if row.k == k:
                return row
        raise KeyError("no row for k=%d" % k)

    def bracket(self, route: str = "auto") -> dict:
        """Mean-index bracket from the largest-k row of the chosen route.

        route is "auto" (prefer the fundamental-solution numbers), "maslov",
        or "hessian".
        """
        last = max(self.rows, key=lambda r: r.k)
        if route == "auto":
            idx, nul = last.index_pair()
        elif route == "maslov":
            if last.i is None:
                raise ValueError("sequence carries no fundamental-solution route")
            idx, nul = last.i, last.nu
        elif route == "hessian":
            if last.m_minus is None:
                raise ValueError("sequence carries no Hessian route")
            idx, nul = last.m_minus, last.m_zero
        else:
            raise ValueError("route must be auto, maslov, or hessian")
        k = last.k
        return {"lo": (idx + nul - self.n) / k, "hi": (idx + self.n) / k,
                "estimate": idx / k, "k_used": k}

    def to_json_dict(self) -> dict:
        return {
            "schema": "sil/1",
            "report": "index-sequence",
            "n": self.n,
            "tau": self.tau,
            "routes": list(self.routes),
            "grid": {"nf_base": self.nf_base, "steps": self.steps},
            "residual": self.residual,
            "mean_bracket": {"estimate": self.mean_estimate,
                             "lo": self.mean_lo, "hi": self.mean_hi,
                             "k_used": self.k_used},
            "rows": [row.to_dict() for row in self.rows],
            "notes": list(self.notes),
        }

    def to_csv(self) -> str:
        return _csv_table(CSV_COLUMNS, self.rows)


def _loop_of(orbit) -> Loop:
    return getattr(orbit, "loop", orbit)


def _residual_of(model, orbit) -> float:
    known = getattr(orbit, "residual", None)
    if known is None:
        known, _ = euler_lagrange_residual(model, _loop_of(orbit))
    return float(known)


def _check_ks(ks, k_max) -> list:
    if ks is None:
        if k_max < 1:
            raise ValueError("k_max must be >= 1, got %d" % k_max)
        return list(range(1, int(k_max) + 1))
    out = sorted({int(k) for k in ks})
    if not out or out[0] < 1:
        raise ValueError("iteration orders must be positive integers")
    return out


def _gated_fundamental(S, n: int, tau: float, steps: int, path_rtol: float,
                       max_steps: int):
    """Integrate one period, doubling the step count until the monodromy
    settles (relative drift <= path_rtol between consecutive refinements).

    Kernel detection of the monodromy needs the integration error well below
    the rank tolerance; a fixed step count cannot promise that, so the step
    count is part of the result, not of the contract.
    """
    path = integrate_fundamental(S, n, (0.0, tau), steps=steps)
    while True:
        fine = integrate_fundamental(S, n, (0.0, tau),
                                     steps=2 * (len(path.times) - 1))
        drift = float(np.max(np.abs(fine.monodromy - path.monodromy)))
        scale = 1.0 + float(np.max(np.abs(fine.monodromy)))
        path = fine
        if drift <= path_rtol * scale:
            break
        if len(path.times) - 1 >= max_steps:
            warnings.warn("one-period monodromy still drifting %.3e at %d "
                          "steps; kernel dimensions may be unreliable"
                          % (drift / scale, len(path.times) - 1), stacklevel=3)
            break
    return path


def _maslov_route(model, loop: Loop, ks, steps, policy, path_rtol, max_steps):
    """(i_k, nu_k) for each k in one crossing scan of the iterated path."""
    sturm = linearize_along_orbit(model, loop)
    S = sturm_to_hamiltonian(sturm)
    base = _gated_fundamental(S, model.n, loop.tau, steps, path_rtol, max_steps)
    full = iterate_path(base, max(ks))
    M = base.monodromy
    nullities = [power_nullity(M, k) for k in ks]
    marks = [k * loop.tau for k in ks]
    results = cz_index_sequence(full, marks, nullities=nullities, policy=policy)
    out = {k: (int(r.index), int(r.nullity)) for k, r in zip(ks, results)}
    return out, len(base.times) - 1


def index_sequence(model, orbit, k_max: int = 8, ks: Sequence[int] | None = None,
                   routes: Sequence[str] = ("hessian", "maslov"),
                   nf_base: Optional[int] = None, steps: int = 1024,
                   strict: bool = True,
                   policy: TolerancePolicy | None = None,
                   residual_gate: float = 1e-6, tol_rel: float = ZERO_TOL_REL,
                   gate: bool = True, path_rtol: float = 1e-7,
                   max_steps: int = 65536) -> IndexSequence:
    """Morse and Maslov index data for the iterates gamma^k.

    The Hessian route computes Morse counts of the action Hessian of
    gamma^k in the k*tau-periodic Fourier basis with nf = k * nf_base, so
    per-period resolution is constant in k.  The fundamental-solution route
    integrates the linearized flow over one period (starting at `steps`
    integration steps and doubling until the monodromy settles within
    path_rtol; the step count actually used is recorded on the sequence),
    iterates the path, and reads Conley-Zehnder indices at the marks k*tau
    in a single scan.

    With strict=True a disagreement between the routes raises; otherwise the
    row is flagged (note "route-disagreement") and both values are kept.
    The returned sequence carries per-row mean brackets and inequality
    verdicts against the largest-k bracket.
    """
    loop = _loop_of(orbit)
    if loop.n != model.n:
        raise ValueError("orbit dimension %d does not match model dimension %d"
                         % (loop.n, model.n))
    ks = _check_ks(ks, k_max)
    routes = tuple(routes)
    if not routes or any(r not in ("hessian", "maslov") for r in routes):
        raise ValueError("routes must be a non-empty subset of "
                         "{'hessian', 'maslov'}")
    resid = _residual_of(model, orbit)
    if resid > residual_gate:
        raise ValueError("orbit residual %.3e exceeds the gate %.3e; index "
                         "sequences need a converged orbit" % (resid, residual_gate))
    if nf_base is None:
        nf_base = max(16, loop.nf)
    nf_base = int(nf_base)

    maslov = {}
    steps_used = int(steps)
    if "maslov" in routes:
        maslov, steps_used = _maslov_route(model, loop, ks, steps, policy,
                                           path_rtol, max_steps)

    hessian = {}
    if "hessian" in routes:
        def counts_at(k):
            res = morse_counts(model, iterate_loop(loop, k), nf=k * nf_base,
                               tol_rel=tol_rel, gate=gate, strict=True)
            return int(res.m_minus), int(res.m_zero)

        hessian = dict(zip(ks, _map_jobs(counts_at, ks)))

    n = model.n
    rows = []
    for k in ks:
        mm, mz = hessian.get(k, (None, None))
        ii, nu = maslov.get(k, (None, None))
        for label, val in (("m_zero", mz), ("nu", nu)):
            if val is not None and not 0 <= val <= 2 * n:
                raise RuntimeError("%s=%d at k=%d is outside [0, %d]; the "
                                   "computation is not trustworthy"
                                   % (label, val, k, 2 * n))
        agrees = None
        note = []
        if mm is not None and ii is not None:
            agrees = (mm == ii) and (mz == nu)
            if not agrees:
                msg = ("index routes disagree at k=%d: Hessian counts (%d, %d), "
                       "fundamental-solution counts (%d, %d)" % (k, mm, mz, ii, nu))
                if strict:
                    raise RuntimeError(msg)
                warnings.warn(msg, stacklevel=2)
                note.append("route-disagreement")
        idx, nul = (ii, nu) if ii is not None else (mm, mz)
        rows.append(IndexRow(k=k, m_minus=mm, m_zero=mz, i=ii, nu=nu,
                             mean_lo=(idx + nul - n) / k,
                             mean_hi=(idx + n) / k,
                             agrees=agrees, note=";".join(note)))

    last = rows[-1]
    seq_notes = []
    if model.autonomous and _is_nonconstant(loop):
        seq_notes.append("autonomous model, non-constant orbit: the "
                         "time-translation zero mode is included in m_zero "
                         "and nu (point-level counts)")
    idx_K, nul_K = last.index_pair()
    K = last.k
    seq = IndexSequence(n=n, tau=float(loop.tau), rows=rows, routes=routes,
                        nf_base=nf_base, steps=steps_used,
                        mean_estimate=idx_K / K,
                        mean_lo=(idx_K + nul_K - n) / K,
                        mean_hi=(idx_K + n) / K,
                        k_used=K, residual=resid, notes=seq_notes)
    _fill_verdicts(seq)
    return seq


def _is_nonconstant(loop: Loop) -> bool:
    if np.any(loop.winding != 0):
        return True
    scale = 1.0 + float(np.max(np.abs(loop.cos[0])))
    osc = 0.0
    if loop.nf >= 1:
        osc = max(float(np.max(np.abs(loop.cos[1:]))),
                  float(np.max(np.abs(loop.sin[1:]))))
    return osc > 1e-12 * scale


def _fill_verdicts(seq: IndexSequence) -> None:
    n = seq.n
    for row in seq.rows:
        idx, nul = row.index_pair()
        lower = max(0.0, row.k * seq.mean_lo - n)
        upper = row.k * seq.mean_hi + n - nul
        row.verdict_lower = bool(idx + _SLACK >= lower)
        row.verdict_upper = bool(idx <= upper + _SLACK)
        if upper < 0 and "vacuous-upper-bound" not in row.note:
            row.note = ";".join(filter(None, [row.note, "vacuous-upper-bound"]))


def verify_iteration_inequalities(seq: IndexSequence) -> dict:
    """Check every row of an index sequence against the iteration bounds.

    Verdicts are recomputed from the row data (never trusted from the
    sequence), so a corrupted row is flagged.  Lower bound per row:
    max{0, k * mean_lo - n} <= index_k; upper bound: index_k <=
    k * mean_hi + n - nu_k, with the bracket taken from the largest-k row.

    Rows where the upper bound is negative while the nullity saturates 2n
    are recorded under corner_rows: there the two-sided bound degenerates
    and the raw verdict is annotated rather than reinterpreted.  When the
    bracket contains zero the hyperbolic-type analogue
    index_k + nullity_k <= n is additionally reported.
    """
    if not seq.rows:
        raise ValueError("index sequence has no rows")
    for row in seq.rows:
        row.index_pair()  # raises if incomplete
    n = seq.n
    last = max(seq.rows, key=lambda r: r.k)
    idx_K, nul_K = last.index_pair()
    K = last.k
    lo = (idx_K + nul_K - n) / K
    hi = (idx_K + n) / K

    rows_out = []
    corner_rows = []
    all_lower = all_upper = True
    zero_candidate = lo <= _SLACK and hi >= -_SLACK
    analogue_rows = []
    for row in sorted(seq.rows, key=lambda r: r.k):
        idx, nul = row.index_pair()
        lower = max(0.0, row.k * lo - n)
        upper = row.k * hi + n - nul
        v_lo = bool(idx + _SLACK >= lower)
        v_hi = bool(idx <= upper + _SLACK)
        corner = upper < 0 and nul == 2 * n
        if corner:
            corner_rows.append(row.k)
        else:
            all_lower &= v_lo
            all_upper &= v_hi
        entry = {"k": row.k, "index": idx, "nullity": nul,
                 "lower_bound": lower, "upper_bound": upper,
                 "verdict_lower": v_lo, "verdict_upper": v_hi}
        if corner:
            entry["note"] = "degenerate two-sided bound (nullity = 2n)"
        rows_out.append(entry)
        if zero_candidate:
            analogue_rows.append({"k": row.k,
                                  "holds": bool(idx + nul <= n)})

    report = {
        "schema": "sil/1",
        "report": "iteration-inequalities",
        "n": n,
        "tau": seq.tau,
        "mean_bracket": {"lo": lo, "hi": hi, "estimate": idx_K / K,
                         "k_used": K},
        "grid": {"nf_base": seq.nf_base, "steps": seq.steps},
        "rows": rows_out,
        "corner_rows": corner_rows,
        "zero_mean_candidate": bool(zero_candidate),
        "passed": bool(all_lower and all_upper),
        "notes": list(seq.notes),
    }
    if zero_candidate:
        report["zero_mean_analogue"] = analogue_rows
    return report


# ---------------------------------------------------------------------------
# symmetric splitting


@dataclass
class SymmetricSplitRow:
    """Even/odd splitting data of one iterate.

    Hessian side: Morse counts in the cosine block (m_minus_even, m_zero_even)
    and the sine block (m_minus_odd, m_zero_odd), plus the full counts.
    Fundamental-solution side: half-interval indices mu1, mu2 with block
    nullities nu1, nu2 at time k*tau/2, plus the full-period (i, nu).
    checks holds one boolean per splitting identity.
    """

    k: int
    m_minus_even: int
    m_zero_even: int
    m_minus_odd: int
    m_zero_odd: int
    mu1: int
    mu2: int
    nu1: int
    nu2: int
    i: int
    nu: int
    m_minus: int
    m_zero: int
    checks: dict = field(default_factory=dict)
    passed: bool = True

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "m_minus_even": self.m_minus_even, "m_zero_even": self.m_zero_even,
            "m_minus_odd": self.m_minus_odd, "m_zero_odd": self.m_zero_odd,
            "mu1": self.mu1, "mu2": self.mu2, "nu1": self.nu1, "nu2": self.nu2,
            "i": self.i, "nu": self.nu,
            "m_minus": self.m_minus, "m_zero": self.m_zero,
            "checks": dict(self.checks), "passed": self.passed,
        }


@dataclass
class SymmetricSplitSequence:
    """Splitting table over the iterates of an even orbit."""

    n: int
    tau: float
    rows: list
    nf_base: int
    steps: int
    assumption: dict
    mean_estimate: float
    mean_even_estimate: float
    passed: bool
    notes: list = field(default_factory=list)

    def ks(self) -> list:
        return [row.k for row in self.rows]

    def row(self, k: int) -> SymmetricSplitRow:
        for row in self.rows:
            if row.k == k:
                return row
        raise KeyError("no row for k=%d" % k)

    def to_json_dict(self) -> dict:
        return {
            "schema": "sil/1",
            "report": "symmetric-split",
            "n": self.n,
            "tau": self.tau,
            "grid": {"nf_base": self.nf_base, "steps": self.steps},
            "assumption": dict(self.assumption),
            "mean_estimate": self.mean_estimate,
            "mean_even_estimate": self.mean_even_estimate,
            "rows": [row.to_dict() for row in self.rows],
            "passed": self.passed,
            "notes": list(self.notes),
        }

    def to_csv(self) -> str:
        return _csv_table(SPLIT_CSV_COLUMNS, self.rows)


def _split_checks(n: int, row: SymmetricSplitRow) -> dict:
    return {
        "even_count_matches_mu1": row.m_minus_even == row.mu1,
        "even_nullity_matches_nu1": row.m_zero_even == row.nu1,
        "odd_count_matches_mu2_minus_n": row.m_minus_odd == row.mu2 - n,
        "mu_split_additivity": row.mu1 + row.mu2 == row.i + n,
        "nu_split_additivity": row.nu1 + row.nu2 == row.nu,
        "count_split_additivity": (
            row.m_minus_even + row.m_minus_odd == row.m_minus
            and row.m_zero_even + row.m_zero_odd == row.m_zero),
        "odd_even_gap_bound": abs(n + row.m_minus_odd - row.m_minus_even) <= n,
    }


def symmetric_split_sequence(model, orbit, k_max: int = 8,
                             ks: Sequence[int] | None = None,
                             nf_base: Optional[int] = None, steps: int = 1024,
                             policy: TolerancePolicy | None = None,
                             residual_gate: float = 1e-6,
                             tol_rel: float = ZERO_TOL_REL, gate: bool = True,
                             assumption_tol: float = 1e-8,
                             path_rtol: float = 1e-7,
                             max_steps: int = 65536) -> SymmetricSplitSequence:
    """Even/odd index splitting along the iterates of an even orbit.

    Needs a reversible model and an even (cosine-only, contractible) loop;
    the linearized coefficients must pass the induced symmetry checks.  Per
    iterate k the Hessian route splits the action Hessian into cosine and
    sine blocks, and the fundamental-solution route reads the half-interval
    indices at k*tau/2.  Each row records the splitting identities:

      m_minus_even = mu1,   m_zero_even = nu1,   m_minus_odd = mu2 - n,
      mu1 + mu2 = i + n,    nu1 + nu2 = nu,      even + odd = full counts,
      |n + m_minus_odd - m_minus_even| <= n.
    """
    loop = _loop_of(orbit)
    if loop.n != model.n:
        raise ValueError("orbit dimension %d does not match model dimension %d"
                         % (loop.n, model.n))
    if not model.reversible:
        raise ValueError("model is not reversible; the symmetric splitting "
                         "needs L(-t, q, -v) = L(t, q, v)")
    if np.any(loop.winding != 0) or not is_even(loop):
        raise ValueError("orbit loop is not even; the splitting needs a "
                         "contractible cosine-only loop")
    ks = _check_ks(ks, k_max)
    resid = _residual_of(model, orbit)
    if resid > residual_gate:
        raise ValueError("orbit residual %.3e exceeds the gate %.3e"
                         % (resid, residual_gate))
    if nf_base is None:
        nf_base = max(16, loop.nf)
    nf_base = int(nf_base)
    n = model.n

    sturm = linearize_along_orbit(model, loop)
    S = sturm_to_hamiltonian(sturm)
    assumption = check_assumption_B(S, n, loop.tau, tol=assumption_tol)
    if not assumption["passed"]:
        raise ValueError("linearized coefficients fail the symmetry "
                         "assumptions of the splitting: residuals %r"
                         % assumption["residuals"])

    base = _gated_fundamental(S, n, loop.tau, steps, path_rtol, max_steps)
    steps_used = len(base.times) - 1
    full_path = iterate_path(base, max(ks))
    M = base.monodromy
    nullities = [power_nullity(M, k) for k in ks]
    cz = cz_index_sequence(full_path, [k * loop.tau for k in ks],
                           nullities=nullities, policy=policy)
    mus = mu_index_sequence(full_path, [k * loop.tau / 2.0 for k in ks],
                            policy=policy)

    def counts_at(job):
        k, basis = job
        res = morse_counts(model, iterate_loop(loop, k), nf=k * nf_base,
                           basis=basis, tol_rel=tol_rel, gate=gate,
                           strict=True)
        return int(res.m_minus), int(res.m_zero)

    jobs = [(k, basis) for k in ks for basis in ("even", "odd", "full")]
    counts = dict(zip(jobs, _map_jobs(counts_at, jobs)))

    rows = []
    for pos, k in enumerate(ks):
        ev = counts[(k, "even")]
        od = counts[(k, "odd")]
        fl = counts[(k, "full")]
        mu = mus[pos]
        row = SymmetricSplitRow(
            k=k, m_minus_even=ev[0], m_zero_even=ev[1],
            m_minus_odd=od[0], m_zero_odd=od[1],
            mu1=int(mu.mu1), mu2=int(mu.mu2),
            nu1=int(mu.nu1), nu2=int(mu.nu2),
            i=int(cz[pos].index), nu=int(cz[pos].nullity),
            m_minus=fl[0], m_zero=fl[1])
        row.checks = _split_checks(n, row)
        row.passed = all(row.checks.values())
        rows.append(row)

    last = rows[-1]
    seq = SymmetricSplitSequence(
        n=n, tau=float(loop.tau), rows=rows, nf_base=nf_base,
        steps=steps_used, assumption=assumption,
        mean_estimate=last.i / last.k,
        mean_even_estimate=last.mu1 / last.k,
        passed=all(row.passed for row in rows))
    if model.autonomous and _is_nonconstant(loop):
        seq.notes.append("autonomous model, non-constant orbit: zero modes "
                         "are counted at point level")
    return seq


# ---------------------------------------------------------------------------
# stable subsequences


def detect_stable_subsequence(seq: IndexSequence,
                              k_set: Sequence[int] | None = None) -> list:
    """Iterates whose index pair equals the base pair (k = 1).

    k_set defaults to the powers of two {1, 2, 4, 8, 16, 32} intersected
    with the computed rows; an explicit k_set must be fully covered by the
    sequence.  Returns the sorted list of k with
    (index_k, nullity_k) = (index_1, nullity_1).
    """
    available = set(seq.ks())
    if k_set is None:
        k_set = [k for k in DEFAULT_K_SET if k in available]
    else:
        k_set = sorted({int(k) for k in k_set})
        missing = [k for k in k_set if k not in available]
        if missing:
            raise ValueError("sequence has no rows for k in %r" % (missing,))
    if 1 not in available:
        raise ValueError("stable-subsequence detection needs the base row k=1")
    base = seq.row(1).index_pair()
    out = []
    for k in k_set:
        if seq.row(k).index_pair() == base:
            out.append(k)
    return out
