"""Symplectic linear algebra and fundamental solutions of linear Hamiltonian systems.

The central object is the fundamental solution Psi of

    dPsi/dt = J0 B(t) Psi,   Psi(t0) = I,

where B(t) is a symmetric coefficient path and J0 the standard symplectic
matrix.  Paths are integrated with a classical RK4 scheme and re-projected
onto the symplectic group at every stored node, so that downstream index
computations can rely on exact group structure.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "standard_symplectic_matrix",
    "is_symplectic",
    "block_decompose",
    "project_symplectic",
    "integrate_fundamental",
    "SymplecticPath",
]

TOL_SYMP = 1e-9
TOL_SYM = 1e-10


def standard_symplectic_matrix(n: int) -> np.ndarray:
    """Return J0 = [[0, -I_n], [I_n, 0]] acting on (x, y) blocks."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = -np.eye(n)
    J[n:, :n] = np.eye(n)
    return J


def is_symplectic(M: np.ndarray, tol: float = TOL_SYMP) -> tuple[bool, float]:
    """Check M^T J0 M = J0.  Returns (verdict, residual); residual is always reported.

    The residual is the max-abs entry of M^T J0 M - J0.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] % 2:
        raise ValueError("expected a square 2n x 2n matrix, got shape %s" % (M.shape,))
    J = standard_symplectic_matrix(M.shape[0] // 2)
    resid = float(np.max(np.abs(M.T @ J @ M - J)))
    return resid <= tol, resid


def block_decompose(M: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Split a 2n x 2n matrix into (A, B, C, D) with M = [[A, B], [C, D]]."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] % 2:
        raise ValueError("expected a square 2n x 2n matrix, got shape %s" % (M.shape,))
    n = M.shape[0] // 2
    return M[:n, :n], M[:n, n:], M[n:, :n], M[n:, n:]


def project_symplectic(M: np.ndarray, tol: float = 1e-14, maxit: int = 5) -> np.ndarray:
    """Project a near-symplectic matrix onto Sp(2n).

    Newton-type correction: with E = M^T J0 M - J0 (antisymmetric), the update
    M <- M (I + J0 E / 2) cancels the defect to first order; a few sweeps reach
    machine precision for inputs within O(1e-2) of the group.
    """
    M = np.asarray(M, dtype=float).copy()
    J = standard_symplectic_matrix(M.shape[0] // 2)
    scale = max(1.0, float(np.max(np.abs(M))))
    if scale > 1e6:
        # the defect E scales like |M|^2, so the Newton sweep amplifies
        # rounding on strongly hyperbolic products; their relative drift off
        # the group is O(eps_machine) already, so leave them untouched
        return M
    for _ in range(maxit):
        E = M.T @ J @ M - J
        if np.max(np.abs(E)) <= tol * scale:
            break
        M = M @ (np.eye(M.shape[0]) + 0.5 * (J @ E))
    return M


def _rk4_sweep(coeff: Callable, J: np.ndarray, Psi: np.ndarray, t0: float,
               h: float, nsteps: int) -> np.ndarray:
    """Advance Psi through nsteps RK4 steps of size h (no projection)."""
    t = t0
    for _ in range(nsteps):
        k1 = J @ coeff(t) @ Psi
        k2 = J @ coeff(t + 0.5 * h) @ (Psi + 0.5 * h * k1)
        k3 = J @ coeff(t + 0.5 * h) @ (Psi + 0.5 * h * k2)
        k4 = J @ coeff(t + h) @ (Psi + h * k3)
        Psi = Psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return Psi


@dataclass
class SymplecticPath:
    """A fundamental solution sampled on a uniform grid.

    times[k] covers [t0, t1]; mats[k] is Psi(times[k]), each projected onto
    Sp(2n).  coeff is the generating symmetric path B(t) (None for raw matrix
    paths, in which case index computations that need crossing forms refuse
    to run).
    """

    n: int
    times: np.ndarray
    mats: np.ndarray
    coeff: Callable | None = None
    tol_symp: float = TOL_SYMP
    _J: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.mats = np.asarray(self.mats, dtype=float)
        if self.mats.shape != (len(self.times), 2 * self.n, 2 * self.n):
            raise ValueError("mats shape %s does not match times/n" % (self.mats.shape,))
        self._J = standard_symplectic_matrix(self.n)

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    @property
    def monodromy(self) -> np.ndarray:
        return self.mats[-1]

    def symplectic_residual(self) -> float:
        J = self._J
        r = self.mats.transpose(0, 2, 1) @ J @ self.mats - J
        return float(np.max(np.abs(r)))

    def node_index(self, t: float) -> int:
        """Largest k with times[k] <= t (clipped)."""
        k = int(np.searchsorted(self.times, t, side="right") - 1)
        return min(max(k, 0), len(self.times) - 1)

    def evaluate(self, t: float, substeps: int = 8) -> np.ndarray:
        """Psi(t) for any t in [t0, t1], re-integrated locally from the nearest node."""
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise ValueError("t=%g outside path interval [%g, %g]" % (t, self.t0, self.t1))
        k = self.node_index(t)
        dt = t - self.times[k]
        base = self.mats[k]
        if abs(dt) < 1e-15 * max(1.0, abs(t)):
            return base
        if self.coeff is None:
            raise ValueError("cannot evaluate between nodes: path has no coefficient")
        Psi = _rk4_sweep(self.coeff, self._J, base, self.times[k], dt / substeps, substeps)
        return project_symplectic(Psi)

    def restricted(self, t_end: float) -> "SymplecticPath":
        """Sub-path on [t0, t_end]; t_end must be a grid node."""
        k = self.node_index(t_end)
        if abs(self.times[k] - t_end) > 1e-9 * max(1.0, abs(t_end)):
            raise ValueError("t_end=%g is not a grid node" % t_end)
        return SymplecticPath(self.n, self.times[: k + 1].copy(), self.mats[: k + 1].copy(),
                              coeff=self.coeff, tol_symp=self.tol_symp)


def integrate_fundamental(coeff: Callable, n: int, interval: tuple[float, float],
                          steps: int = 1024, check_symmetry: bool = True,
                          tol_sym: float = TOL_SYM) -> SymplecticPath:
    """Integrate dPsi/dt = J0 B(t) Psi, Psi(a) = I on [a, b] with RK4.

    Every stored node is projected onto Sp(2n).  steps is the number of RK4
    steps; the grid has steps+1 nodes.  Local truncation order is 4; endpoint
    error decays like steps^-4 (verified in tests).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    a, b = float(interval[0]), float(interval[1])
    if not b > a:
        raise ValueError("interval must satisfy b > a")
    J = standard_symplectic_matrix(n)
    B0 = np.asarray(coeff(a), dtype=float)
    if B0.shape != (2 * n, 2 * n):
        raise ValueError("coefficient path returns shape %s, expected %s"
                         % (B0.shape, (2 * n, 2 * n)))
    if check_symmetry:
        for t in np.linspace(a, b, 7):
            Bt = np.asarray(coeff(t))
            asym = float(np.max(np.abs(Bt - Bt.T)))
            if asym > tol_sym * max(1.0, float(np.max(np.abs(Bt)))):
                raise ValueError("coefficient path not symmetric at t=%g (residual %.3e)" % (t, asym))
    h = (b - a) / steps
    times = a + h * np.arange(steps + 1)
    mats = np.empty((steps + 1, 2 * n, 2 * n))
    Psi = np.eye(2 * n)
    mats[0] = Psi
    t = a
    for k in range(steps):
        Psi = _rk4_sweep(coeff, J, Psi, t, h, 1)
        Psi = project_symplectic(Psi)
        t = a + (k + 1) * h
        mats[k + 1] = Psi
    return SymplecticPath(n, times, mats, coeff=coeff)
