"""Lagrangian systems on flat tori and Euclidean charts.

Models expose the Lagrangian and its first and second fiber/base
derivatives, get linearized along periodic orbits into Sturm coefficient
data (P, Q, R), and map onward to the symmetric Hamiltonian coefficient
path S(t) whose fundamental solution drives the index machinery.

Derivative layout conventions used throughout:

* ``dL_q``/``dL_v`` are gradients, shape (n,).
* ``d2L_vv[i, j] = d^2 L / dv_i dv_j`` and likewise ``d2L_qq``.
* ``d2L_vq[i, j] = d^2 L / dv_i dq_j`` (rows fiber, columns base); this is
  exactly the matrix Q with the quadratic normal form
  L = 1/2 P v.v + Q y.v + 1/2 R y.y.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# closed-form trigonometric fields on R/Z x T^n


@dataclass(frozen=True)
class TrigTerm:
    fn: str          # "cos" or "sin"
    amp: float
    k: tuple         # integer wave vector in q
    m: int = 0       # integer time harmonic

    def __post_init__(self):
        if self.fn not in ("cos", "sin"):
            raise ValueError("term fn must be 'cos' or 'sin', got %r" % (self.fn,))


class TrigField:
    """Scalar field f(t, q) = const + sum amp * fn(2 pi (k.q + m t)).

    1-periodic in every q component and in t, so it lives on R/Z x T^n;
    derivatives are closed-form.
    """

    def __init__(self, n: int, const: float = 0.0,
                 terms: Sequence[TrigTerm] = ()):
        self.n = int(n)
        self.const = float(const)
        self.terms = tuple(terms)
        for trm in self.terms:
            if len(trm.k) != self.n:
                raise ValueError("wave vector length %d does not match n=%d"
                                 % (len(trm.k), self.n))
        self.autonomous = all(trm.m == 0 for trm in self.terms)

    def _phases(self, t, q):
        q = np.asarray(q, dtype=float)
        return [TWO_PI * (np.dot(trm.k, q) + trm.m * t) for trm in self.terms]

    def value(self, t: float, q) -> float:
        out = self.const
        for trm, ph in zip(self.terms, self._phases(t, q)):
            out += trm.amp * (np.cos(ph) if trm.fn == "cos" else np.sin(ph))
        return float(out)

    def grad_q(self, t: float, q) -> np.ndarray:
        g = np.zeros(self.n)
        for trm, ph in zip(self.terms, self._phases(t, q)):
            d = -np.sin(ph) if trm.fn == "cos" else np.cos(ph)
            g += trm.amp * TWO_PI * d * np.asarray(trm.k, dtype=float)
        return g

    def hess_q(self, t: float, q) -> np.ndarray:
        h = np.zeros((self.n, self.n))
        for trm, ph in zip(self.terms, self._phases(t, q)):
            d2 = -np.cos(ph) if trm.fn == "cos" else -np.sin(ph)
            kv = np.asarray(trm.k, dtype=float)
            h += trm.amp * TWO_PI ** 2 * d2 * np.outer(kv, kv)
        return h

    def dt(self, t: float, q) -> float:
        out = 0.0
        for trm, ph in zip(self.terms, self._phases(t, q)):
            d = -np.sin(ph) if trm.fn == "cos" else np.cos(ph)
            out += trm.amp * TWO_PI * trm.m * d
        return float(out)

    @staticmethod
    def from_dict(n: int, doc) -> "TrigField":
        if doc is None:
            return TrigField(n)
        if isinstance(doc, (int, float)):
            return TrigField(n, const=float(doc))
        terms = [TrigTerm(fn=str(trm["fn"]), amp=float(trm["amp"]),
                          k=tuple(int(x) for x in trm["k"]),
                          m=int(trm.get("m", 0)))
                 for trm in doc.get("terms", ())]
        return TrigField(n, const=float(doc.get("const", 0.0)), terms=terms)

    def to_dict(self) -> dict:
        return {"const": self.const,
                "terms": [{"fn": trm.fn, "amp": trm.amp, "k": list(trm.k),
                           "m": trm.m} for trm in self.terms]}


class MatrixTrigField:
    """Symmetric-matrix field g(q) = g0 + sum mat_j * fn(2 pi k_j . q)."""

    def __init__(self, n: int, const: np.ndarray,
                 terms: Sequence[tuple] = ()):
        # terms: (fn, kvec, mat) with mat symmetric
        self.n = int(n)
        self.const = np.asarray(const, dtype=float)
        if self.const.shape != (n, n):
            raise ValueError("metric constant block must be %dx%d" % (n, n))
        self.terms = []
        for fn, k, mat in terms:
            mat = np.asarray(mat, dtype=float)
            if np.max(np.abs(mat - mat.T)) > 1e-12:
                raise ValueError("metric term matrices must be symmetric")
            self.terms.append((fn, tuple(int(x) for x in k), mat))
        self.constant = not self.terms

    def value(self, q) -> np.ndarray:
        g = self.const.copy()
        for fn, k, mat in self.terms:
            ph = TWO_PI * np.dot(k, q)
            g += mat * (np.cos(ph) if fn == "cos" else np.sin(ph))
        return g

    def grad(self, q) -> np.ndarray:
        """d g / d q_l, shape (n, n, n) with the last axis the q index."""
        out = np.zeros((self.n, self.n, self.n))
        for fn, k, mat in self.terms:
            ph = TWO_PI * np.dot(k, q)
            d = -np.sin(ph) if fn == "cos" else np.cos(ph)
            out += mat[:, :, None] * (TWO_PI * d) * np.asarray(k, dtype=float)
        return out

    def hess(self, q) -> np.ndarray:
        """d^2 g / d q_l d q_m, shape (n, n, n, n)."""
        out = np.zeros((self.n, self.n, self.n, self.n))
        for fn, k, mat in self.terms:
            ph = TWO_PI * np.dot(k, q)
            d2 = -np.cos(ph) if fn == "cos" else -np.sin(ph)
            kv = np.asarray(k, dtype=float)
            out += mat[:, :, None, None] * (TWO_PI ** 2 * d2) \
                * np.multiply.outer(kv, kv)
        return out

    @staticmethod
    def from_dict(n: int, doc) -> "MatrixTrigField":
        if doc is None:
            return MatrixTrigField(n, np.eye(n))
        if isinstance(doc, (list, np.ndarray)):
            return MatrixTrigField(n, np.asarray(doc, dtype=float))
        const = np.asarray(doc.get("const", np.eye(n)), dtype=float)
        terms = [(str(trm["fn"]), tuple(int(x) for x in trm["k"]),
                  np.asarray(trm["mat"], dtype=float))
                 for trm in doc.get("terms", ())]
        return MatrixTrigField(n, const, terms)

    def to_dict(self) -> dict:
        return {"const": self.const.tolist(),
                "terms": [{"fn": fn, "k": list(k), "mat": mat.tolist()}
                          for fn, k, mat in self.terms]}


# ---------------------------------------------------------------------------
# model classes


class LagrangianModel:
    """Base interface: L(t, q, v) with first and second derivatives.

    Subclasses set n, autonomous, reversible, domain ("torus" or "chart"),
    time_period, and implement the six evaluators.
    """

    n: int
    autonomous: bool
    reversible: bool
    domain: str
    time_period: float = 1.0
    kind: str = "abstract"

    def L(self, t, q, v) -> float:
        raise NotImplementedError

    def dL_q(self, t, q, v) -> np.ndarray:
        raise NotImplementedError

    def dL_v(self, t, q, v) -> np.ndarray:
        raise NotImplementedError

    def d2L_vv(self, t, q, v) -> np.ndarray:
        raise NotImplementedError

    def d2L_vq(self, t, q, v) -> np.ndarray:
        raise NotImplementedError

    def d2L_qq(self, t, q, v) -> np.ndarray:
        raise NotImplementedError

    def check_convexity(self, t, q, v, tol: float = 1e-10) -> bool:
        """Fiberwise convexity at one point: smallest eigenvalue > tol."""
        w = np.linalg.eigvalsh(self.d2L_vv(t, q, v))
        return bool(w[0] > tol)

    def reversibility_residual(self, samples: int = 64,
                               rng=None, box: float = 1.0) -> float:
        """max |L(-t, q, -v) - L(t, q, v)| over random samples."""
        rng = np.random.default_rng(0) if rng is None else rng
        worst = 0.0
        for _ in range(samples):
            t = float(rng.uniform(0.0, self.time_period))
            q = rng.uniform(-box, box, self.n)
            v = rng.uniform(-box, box, self.n)
            worst = max(worst, abs(self.L(-t, q, -v) - self.L(t, q, v)))
        return worst


class QuadraticLagrangian(LagrangianModel):
    """L(t, q, v) = 1/2 P(t) v.v + Q(t) q.v + 1/2 R(t) q.q on a chart.

    P, Q, R are constant matrices or callables of t; P(t) must be symmetric
    positive definite and R(t) symmetric.
    """

    kind = "quadratic"

    def __init__(self, P, Q=None, R=None, n: int | None = None,
                 time_period: float = 1.0):
        P0 = P(0.0) if callable(P) else np.asarray(P, dtype=float)
        self.n = int(P0.shape[0]) if n is None else int(n)
        nn = self.n
        zero = np.zeros((nn, nn))

        def wrap(X, default):
            if X is None:
                return (lambda t: default), True
            if callable(X):
                return X, False
            Xc = np.asarray(X, dtype=float)
            return (lambda t: Xc), True

        self._P, p_const = wrap(P, np.eye(nn))
        self._Q, q_const = wrap(Q, zero)
        self._R, r_const = wrap(R, zero)
        self.autonomous = p_const and q_const and r_const
        self.domain = "chart"
        self.time_period = float(time_period)
        for t in np.linspace(0.0, self.time_period, 7):
            Pt = self._P(t)
            if np.max(np.abs(Pt - Pt.T)) > 1e-10:
                raise ValueError("P(t) must be symmetric")
            if np.linalg.eigvalsh(Pt)[0] <= 0:
                raise ValueError("P(t) must be positive definite")
            Rt = self._R(t)
            if np.max(np.abs(Rt - Rt.T)) > 1e-10:
                raise ValueError("R(t) must be symmetric")
        self.reversible = self._reversible_by_sampling()

    def _reversible_by_sampling(self) -> float:
        ts = np.linspace(0.0, self.time_period / 2, 9)
        res = 0.0
        for t in ts:
            res = max(res, float(np.max(np.abs(self._P(-t) - self._P(t)))),
                      float(np.max(np.abs(self._R(-t) - self._R(t)))),
                      float(np.max(np.abs(self._Q(-t) + self._Q(t)))))
        return res <= 1e-10

    def L(self, t, q, v):
        q = np.asarray(q, dtype=float)
        v = np.asarray(v, dtype=float)
        return float(0.5 * v @ self._P(t) @ v + v @ self._Q(t) @ q
                     + 0.5 * q @ self._R(t) @ q)

    def dL_q(self, t, q, v):
        return self._Q(t).T @ np.asarray(v, dtype=float) \
            + self._R(t) @ np.asarray(q, dtype=float)

    def dL_v(self, t, q, v):
        return self._P(t) @ np.asarray(v, dtype=float) \
            + self._Q(t) @ np.asarray(q, dtype=float)

    def d2L_vv(self, t, q, v):
        return self._P(t).copy()

    def d2L_vq(self, t, q, v):
        return self._Q(t).copy()

    def d2L_qq(self, t, q, v):
        return self._R(t).copy()


class PhysicalLagrangian(LagrangianModel):
    """L = 1/2 |v|^2 + <A(t,q), v> - V(t,q) on the flat torus.

    A is a vector of trig fields (may be None) and V a trig field; the
    Fenchel dual is 1/2 |p - A|^2 + V.
    """

    kind = "physical"

    def __init__(self, n: int, A: Sequence[TrigField] | None = None,
                 V: TrigField | None = None):
        self.n = int(n)
        self.A = tuple(A) if A is not None else tuple(TrigField(n) for _ in range(n))
        if len(self.A) != self.n:
            raise ValueError("A must have one component field per dimension")
        self.V = V if V is not None else TrigField(n)
        self.autonomous = self.V.autonomous and all(a.autonomous for a in self.A)
        self.domain = "torus"
        self.reversible = self.reversibility_residual() <= 1e-10

    def _A_val(self, t, q):
        return np.array([a.value(t, q) for a in self.A])

    def _A_jac(self, t, q):
        # rows: component i of A; columns: d/dq_j
        return np.array([a.grad_q(t, q) for a in self.A])

    def L(self, t, q, v):
        v = np.asarray(v, dtype=float)
        return float(0.5 * v @ v + self._A_val(t, q) @ v - self.V.value(t, q))

    def dL_q(self, t, q, v):
        return self._A_jac(t, q).T @ np.asarray(v, dtype=float) \
            - self.V.grad_q(t, q)

    def dL_v(self, t, q, v):
        return np.asarray(v, dtype=float) + self._A_val(t, q)

    def d2L_vv(self, t, q, v):
        return np.eye(self.n)

    def d2L_vq(self, t, q, v):
        # d^2 L / dv_i dq_j = dA_i / dq_j
        return self._A_jac(t, q)

    def d2L_qq(self, t, q, v):
        v = np.asarray(v, dtype=float)
        h = -self.V.hess_q(t, q)
        for i, a in enumerate(self.A):
            h = h + v[i] * a.hess_q(t, q)
        return h


class TorusMetricLagrangian(LagrangianModel):
    """L = 1/2 g(q) v.v + U(t, q) on the flat torus.

    g is a (possibly q-dependent) symmetric positive definite metric given
    as a matrix trig field, U a potential trig field.
    """

    kind = "torus-metric"

    def __init__(self, n: int, g: MatrixTrigField | np.ndarray | None = None,
                 U: TrigField | None = None):
        self.n = int(n)
        if g is None:
            g = MatrixTrigField(n, np.eye(n))
        elif not isinstance(g, MatrixTrigField):
            g = MatrixTrigField(n, np.asarray(g, dtype=float))
        self.g = g
        self.U = U if U is not None else TrigField(n)
        self.autonomous = self.U.autonomous
        self.domain = "torus"
        self.reversible = self.reversibility_residual() <= 1e-10

    def L(self, t, q, v):
        v = np.asarray(v, dtype=float)
        return float(0.5 * v @ self.g.value(q) @ v + self.U.value(t, q))

    def dL_q(self, t, q, v):
        v = np.asarray(v, dtype=float)
        dg = self.g.grad(q)
        return 0.5 * np.einsum("i,ijl,j->l", v, dg, v) + self.U.grad_q(t, q)

    def dL_v(self, t, q, v):
        return self.g.value(q) @ np.asarray(v, dtype=float)

    def d2L_vv(self, t, q, v):
        return self.g.value(q)

    def d2L_vq(self, t, q, v):
        v = np.asarray(v, dtype=float)
        dg = self.g.grad(q)
        return np.einsum("ijl,j->il", dg, v)

    def d2L_qq(self, t, q, v):
        v = np.asarray(v, dtype=float)
        d2g = self.g.hess(q)
        return 0.5 * np.einsum("i,ijlm,j->lm", v, d2g, v) + self.U.hess_q(t, q)


# ---------------------------------------------------------------------------
# built-in systems


def free_particle(n: int = 1) -> TorusMetricLagrangian:
    """L = 1/2 |v|^2 on T^n."""
    return TorusMetricLagrangian(n)


def harmonic_oscillator(n: int = 1, omega: float = TWO_PI) -> QuadraticLagrangian:
    """L = 1/2 |v|^2 - 1/2 omega^2 |q|^2 on a chart; linearized flow rotates."""
    return QuadraticLagrangian(np.eye(n), None, -omega ** 2 * np.eye(n))


def pendulum() -> TorusMetricLagrangian:
    """L = 1/2 v^2 + cos(2 pi q) on T^1."""
    U = TrigField(1, terms=[TrigTerm("cos", 1.0, (1,))])
    return TorusMetricLagrangian(1, None, U)


def coupled_pendula(coupling: float = 0.3) -> TorusMetricLagrangian:
    """Two pendula on T^2 with a cosine coupling term."""
    U = TrigField(2, terms=[TrigTerm("cos", 1.0, (1, 0)),
                            TrigTerm("cos", 1.0, (0, 1)),
                            TrigTerm("cos", coupling, (1, -1))])
    return TorusMetricLagrangian(2, None, U)


def physical_example(n: int = 1) -> PhysicalLagrangian:
    """Physical model with a nonzero vector potential A and potential V."""
    A = [TrigField(n, terms=[TrigTerm("sin", 0.4, tuple(1 if j == 0 else 0
                                                        for j in range(n)))])]
    A += [TrigField(n) for _ in range(n - 1)]
    V = TrigField(n, terms=[TrigTerm("cos", 1.0, tuple(1 if j == 0 else 0
                                                       for j in range(n)))])
    return PhysicalLagrangian(n, A, V)


def torus_metric_example() -> TorusMetricLagrangian:
    """Curved metric on T^2 with a cosine potential."""
    g = MatrixTrigField(2, np.array([[1.5, 0.2], [0.2, 1.0]]),
                        [("cos", (1, 0), np.array([[0.2, 0.0], [0.0, 0.1]]))])
    U = TrigField(2, terms=[TrigTerm("cos", 1.0, (1, 0)),
                            TrigTerm("cos", 0.5, (0, 1))])
    return TorusMetricLagrangian(2, g, U)


# ---------------------------------------------------------------------------
# JSON model schema


def model_from_spec(doc: dict) -> LagrangianModel:
    """Build a model from the JSON document schema (see README)."""
    if not isinstance(doc, dict):
        raise ValueError("model spec must be an object")
    kind = doc.get("kind")
    if kind is None:
        raise ValueError("model spec missing field: kind")
    n = doc.get("n")
    if n is None:
        raise ValueError("model spec missing field: n")
    n = int(n)
    if n < 1:
        raise ValueError("model spec field n must be >= 1")
    if kind == "quadratic":
        P = np.asarray(doc.get("P", np.eye(n)), dtype=float)
        Q = np.asarray(doc["Q"], dtype=float) if "Q" in doc else None
        R = np.asarray(doc["R"], dtype=float) if "R" in doc else None
        return QuadraticLagrangian(P, Q, R, n=n)
    if kind == "physical":
        A = None
        if doc.get("A") is not None:
            A = [TrigField.from_dict(n, comp) for comp in doc["A"]]
        V = TrigField.from_dict(n, doc.get("V"))
        return PhysicalLagrangian(n, A, V)
    if kind == "torus-metric":
        g = MatrixTrigField.from_dict(n, doc.get("g"))
        U = TrigField.from_dict(n, doc.get("U"))
        return TorusMetricLagrangian(n, g, U)
    if kind == "coefficient-table":
        return _table_model(doc, n)
    raise ValueError("unknown model kind: %r" % (kind,))


def _table_model(doc: dict, n: int) -> QuadraticLagrangian:
    """Quadratic model with P/Q/R sampled on a periodic t-grid.

    Tables are interpolated by periodic cubic splines; q and v dependence
    stays the closed quadratic form.
    """
    from scipy.interpolate import CubicSpline

    period = float(doc.get("time_period", 1.0))
    ts = np.asarray(doc["t"], dtype=float)
    if ts.ndim != 1 or len(ts) < 4:
        raise ValueError("coefficient table requires a t grid of length >= 4")

    def spline(key, default):
        if key not in doc:
            return None if default is None else (lambda t: default)
        vals = np.asarray(doc[key], dtype=float)
        if vals.shape != (len(ts), n, n):
            raise ValueError("table %s must have shape (len(t), n, n)" % key)
        if abs(ts[0]) > 1e-12 or abs(ts[-1] - period) > 1e-12:
            raise ValueError("table t grid must span [0, time_period]")
        sp = CubicSpline(ts, vals, axis=0, bc_type="periodic")
        return lambda t: sp(np.mod(t, period))

    P = spline("P", np.eye(n))
    Q = spline("Q", None)
    R = spline("R", None)
    return QuadraticLagrangian(P, Q, R, n=n, time_period=period)


def model_to_spec(model: LagrangianModel) -> dict:
    """Serialize a built-in model back to the JSON schema."""
    doc = {"schema": "sil/1", "kind": model.kind, "n": model.n,
           "autonomous": bool(model.autonomous),
           "reversible": bool(model.reversible)}
    if isinstance(model, QuadraticLagrangian):
        if not model.autonomous:
            raise ValueError("only constant-coefficient quadratic models serialize")
        doc["P"] = model._P(0.0).tolist()
        doc["Q"] = model._Q(0.0).tolist()
        doc["R"] = model._R(0.0).tolist()
    elif isinstance(model, PhysicalLagrangian):
        doc["A"] = [a.to_dict() for a in model.A]
        doc["V"] = model.V.to_dict()
    elif isinstance(model, TorusMetricLagrangian):
        doc["g"] = model.g.to_dict()
        doc["U"] = model.U.to_dict()
    else:
        raise ValueError("cannot serialize model kind %r" % (model.kind,))
    return doc


# ---------------------------------------------------------------------------
# Euler-Lagrange residual and linearization


def euler_lagrange_residual(model: LagrangianModel, orbit) -> tuple[float, np.ndarray]:
    """Residual of d/dt(dL/dv) - dL/dq = 0 along a loop.

    The momentum path t -> dL/dv(t, q(t), qdot(t)) is periodic, so it is
    differentiated spectrally.  Returns the L^2 norm over one period and the
    pointwise profile on the loop's quadrature grid.
    """
    loop = getattr(orbit, "loop", orbit)
    if loop.n != model.n:
        raise ValueError("loop dimension %d does not match model dimension %d"
                         % (loop.n, model.n))
    ts = loop.grid()
    qs = loop.value(ts)
    vs = loop.velocity(ts)
    N = len(ts)
    mom = np.empty((N, model.n))
    frc = np.empty((N, model.n))
    for j in range(N):
        mom[j] = model.dL_v(ts[j], qs[j], vs[j])
        frc[j] = model.dL_q(ts[j], qs[j], vs[j])
    # spectral time derivative of the periodic momentum path
    freq = 2j * np.pi * np.fft.rfftfreq(N, d=loop.tau / N)
    mom_dot = np.fft.irfft(freq[:, None] * np.fft.rfft(mom, axis=0), n=N, axis=0)
    profile = np.sqrt(np.sum((mom_dot - frc) ** 2, axis=1))
    norm = float(np.sqrt(np.mean(profile ** 2) * loop.tau))
    return norm, profile


@dataclass
class SturmData:
    """Second-variation coefficients P, Q, R along an orbit.

    The quadratic form they define is
    d^2 L(y, z) = int (P ydot + Q y).zdot + Q^T ydot.z + R y.z dt,
    and evaluators give the coefficients at arbitrary times (tau-periodic).
    """

    n: int
    tau: float
    times: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    P_of: Callable = field(repr=False, default=None)
    Q_of: Callable = field(repr=False, default=None)
    R_of: Callable = field(repr=False, default=None)

    def symmetry_residuals(self) -> dict:
        rp = float(np.max(np.abs(self.P - np.swapaxes(self.P, 1, 2))))
        rr = float(np.max(np.abs(self.R - np.swapaxes(self.R, 1, 2))))
        return {"P_symmetry": rp, "R_symmetry": rr}


def linearize_along_orbit(model: LagrangianModel, orbit,
                          residual_warn: float = 1e-6) -> SturmData:
    """Sturm coefficients P = L_vv, Q = L_vq, R = L_qq along the orbit."""
    loop = getattr(orbit, "loop", orbit)
    known = getattr(orbit, "residual", None)
    if known is None:
        known, _ = euler_lagrange_residual(model, loop)
    if known > residual_warn:
        warnings.warn("linearizing along a loop with residual %.3e" % known,
                      stacklevel=2)
    n = model.n
    tau = loop.tau

    def eval_at(t):
        tq = np.atleast_1d(np.asarray(t, dtype=float))
        qs = loop.value(tq)
        vs = loop.velocity(tq)
        P = np.empty((len(tq), n, n))
        Q = np.empty((len(tq), n, n))
        R = np.empty((len(tq), n, n))
        for j, tj in enumerate(tq):
            P[j] = model.d2L_vv(tj, qs[j], vs[j])
            Q[j] = model.d2L_vq(tj, qs[j], vs[j])
            R[j] = model.d2L_qq(tj, qs[j], vs[j])
        return P, Q, R

    ts = loop.grid()
    P, Q, R = eval_at(ts)
    for j in (0, len(ts) // 2, len(ts) - 1):
        w = np.linalg.eigvalsh(P[j])
        if w[0] <= 0:
            raise ValueError("fiber Hessian loses positive definiteness "
                             "along the orbit (eig %.3e at t=%.6g)"
                             % (w[0], ts[j]))
    return SturmData(
        n=n, tau=tau, times=ts, P=P, Q=Q, R=R,
        P_of=lambda t: eval_at(t)[0][0] if np.isscalar(t) else eval_at(t)[0],
        Q_of=lambda t: eval_at(t)[1][0] if np.isscalar(t) else eval_at(t)[1],
        R_of=lambda t: eval_at(t)[2][0] if np.isscalar(t) else eval_at(t)[2],
    )


class _TrigMatrixInterp:
    """Trigonometric interpolant of a tau-periodic matrix path sampled on a
    uniform grid starting at t = 0 (endpoint excluded)."""

    def __init__(self, values: np.ndarray, tau: float):
        nt = values.shape[0]
        self.tau = float(tau)
        F = np.fft.rfft(values, axis=0) / nt
        w = np.full(F.shape[0], 2.0)
        w[0] = 1.0
        if nt % 2 == 0:
            w[-1] = 1.0
        self.F = w[:, None, None] * F
        self.freq = 2.0 * np.pi * np.arange(F.shape[0]) / self.tau

    def __call__(self, t) -> np.ndarray:
        ph = np.exp(1j * self.freq * float(t))
        return np.einsum("m,mij->ij", ph, self.F).real


def _uniform_from_zero(times: np.ndarray, tau: float) -> bool:
    nt = len(times)
    if nt < 2:
        return False
    want = tau * np.arange(nt) / nt
    return bool(np.max(np.abs(times - want)) <= 1e-9 * tau)


def sturm_to_hamiltonian(sturm: SturmData) -> Callable:
    """Coefficient path S(t) of the dual linear Hamiltonian system.

    S = (P^-1, -P^-1 Q; -Q^T P^-1, Q^T P^-1 Q - R), symmetric by
    construction; the returned callable accepts any t (tau-periodic).
    Coefficients sampled on the standard uniform grid are evaluated through
    a trigonometric interpolant, which is spectrally accurate for smooth
    data and much cheaper than re-evaluating model Hessians per call;
    other grids fall back to the stored evaluators.
    """
    tau = sturm.tau
    if _uniform_from_zero(sturm.times, tau):
        P_at = _TrigMatrixInterp(sturm.P, tau)
        Q_at = _TrigMatrixInterp(sturm.Q, tau)
        R_at = _TrigMatrixInterp(sturm.R, tau)
    else:
        P_at, Q_at, R_at = sturm.P_of, sturm.Q_of, sturm.R_of

    def S(t):
        s = float(np.mod(t, tau))
        P = P_at(s)
        Q = Q_at(s)
        R = R_at(s)
        Pinv = np.linalg.inv(P)
        top = np.hstack([Pinv, -Pinv @ Q])
        bot = np.hstack([-Q.T @ Pinv, Q.T @ Pinv @ Q - R])
        out = np.vstack([top, bot])
        return 0.5 * (out + out.T)

    return S


def check_symmetric_coefficients(sturm: SturmData, samples: int = 64,
                                 tol: float = 1e-8) -> dict:
    """Parity/periodicity residuals of the Sturm coefficients.

    Requires P and R even and tau-periodic, Q odd and tau-periodic; these
    imply the coefficient path S(t) supports the half-period index theory.
    """
    tau = sturm.tau
    ts = np.linspace(0.0, tau / 2, samples)
    res = {"P_even": 0.0, "R_even": 0.0, "Q_odd": 0.0,
           "P_periodic": 0.0, "R_periodic": 0.0, "Q_periodic": 0.0}
    scale = 1.0
    for t in ts:
        Pp, Pm = sturm.P_of(t), sturm.P_of(np.mod(-t, tau))
        Rp, Rm = sturm.R_of(t), sturm.R_of(np.mod(-t, tau))
        Qp, Qm = sturm.Q_of(t), sturm.Q_of(np.mod(-t, tau))
        scale = max(scale, float(np.max(np.abs(Pp))), float(np.max(np.abs(Rp))),
                    float(np.max(np.abs(Qp))))
        res["P_even"] = max(res["P_even"], float(np.max(np.abs(Pp - Pm))))
        res["R_even"] = max(res["R_even"], float(np.max(np.abs(Rp - Rm))))
        res["Q_odd"] = max(res["Q_odd"], float(np.max(np.abs(Qp + Qm))))
        res["P_periodic"] = max(res["P_periodic"],
                                float(np.max(np.abs(Pp - sturm.P_of(t + tau)))))
        res["R_periodic"] = max(res["R_periodic"],
                                float(np.max(np.abs(Rp - sturm.R_of(t + tau)))))
        res["Q_periodic"] = max(res["Q_periodic"],
                                float(np.max(np.abs(Qp - sturm.Q_of(t + tau)))))
    passed = all(v <= tol * scale for v in res.values())
    return {"passed": passed, "residuals": res, "scale": scale, "tol": tol}
