"""Cost functionals F(X) = E f(X, L_X) on particle ensembles.

Two families are provided: quadratic mean-field costs

    f(x, m) = 1/2 (x - S xbar)* Qbar (x - S xbar) + 1/2 x* Q x

and symmetric pair-interaction costs f(x, m) = 1/2 int K(x, xi) m(dxi).
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping

import numpy as np

from .measure_space import ParticleEnsemble, ShapeError, mean, sym_sum


def _opnorm(A: np.ndarray) -> float:
    return float(np.linalg.norm(A, 2)) if A.size else 0.0


def _sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def _quad(x: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Row-wise x_i* A x_i."""
    return np.einsum("ij,jk,ik->i", x, A, x)


class CostFunctional(ABC):
    """A law-dependent running or terminal cost.

    Subclasses supply the pointwise pieces; the Hilbert-space objects
    (value, gradient) follow from them.
    """

    n: int

    @abstractmethod
    def value(self, X: ParticleEnsemble) -> float:
        """F(X) = E f(X, L_X)."""

    @abstractmethod
    def grad_x(self, x: np.ndarray, law: ParticleEnsemble) -> np.ndarray:
        """D_x F(x, m) at the rows of ``x`` for the empirical law ``law``."""

    @abstractmethod
    def derivative(self, x: np.ndarray, law: ParticleEnsemble, m1: float = 1.0) -> np.ndarray:
        """Functional derivative F(x, m) = dPhi/dm (x), for m = m1 * law."""

    @abstractmethod
    def second_derivative(self, x: np.ndarray, xi: np.ndarray, law: ParticleEnsemble,
                          m1: float = 1.0) -> np.ndarray:
        """dF/dm (x, m)(xi), row-wise over paired rows of ``x`` and ``xi``."""

    @abstractmethod
    def lipschitz_constant(self) -> float:
        """Certified c with ||D_X F(X1) - D_X F(X2)|| <= c ||X1 - X2|| and
        |D_x F(x1, m1) - D_x F(x2, m2)| <= c/2 (|x1 - x2| + W2(m1, m2))."""

    growth_constant: float | None = None

    def grad_path(self, x: np.ndarray, laws: np.ndarray | None = None) -> np.ndarray:
        """D_x F(x_k, m_k) for a stack of node ensembles.

        ``x`` is (K, P, n); ``laws`` is (K, N, n) and defaults to ``x`` itself.
        """
        laws = x if laws is None else laws
        return np.stack([self.grad_x(x[k], ParticleEnsemble(laws[k])) for k in range(x.shape[0])])

    def derivative_path(self, x: np.ndarray, laws: np.ndarray) -> np.ndarray:
        """F(x_k, m_k) at m1 = 1, shape (K, P)."""
        return np.stack([self.derivative(x[k], ParticleEnsemble(laws[k])) for k in range(x.shape[0])])

    def value_path(self, Y: np.ndarray) -> np.ndarray:
        return np.array([self.value(ParticleEnsemble(Y[k])) for k in range(Y.shape[0])])

    def grad(self, X: ParticleEnsemble) -> ParticleEnsemble:
        self._check(X)
        return ParticleEnsemble(self.grad_x(X.points, X))

    def _check(self, X: ParticleEnsemble) -> None:
        if X.n != self.n:
            raise ShapeError(f"cost is defined on R^{self.n}, ensemble lives in R^{X.n}")


class ZeroCost(CostFunctional):
    def __init__(self, n: int):
        self.n = n
        self.growth_constant = 0.0

    def value(self, X):
        self._check(X)
        return 0.0

    def grad_x(self, x, law):
        return np.zeros_like(np.asarray(x, dtype=float))

    def derivative(self, x, law, m1=1.0):
        return np.zeros(np.asarray(x).shape[0])

    def second_derivative(self, x, xi, law, m1=1.0):
        return np.zeros(np.asarray(x).shape[0])

    def lipschitz_constant(self):
        return 0.0

    def grad_path(self, x, laws=None):
        return np.zeros_like(x, dtype=float)

    def derivative_path(self, x, laws):
        return np.zeros(x.shape[:2])

    def value_path(self, Y):
        return np.zeros(Y.shape[0])


class QuadraticCost(CostFunctional):
    """f(x, m) = 1/2 (x - S xbar)* Qbar (x - S xbar) + 1/2 x* Q x."""

    def __init__(self, Q, Qbar, S):
        self.Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.Qbar = np.atleast_2d(np.asarray(Qbar, dtype=float))
        self.S = np.atleast_2d(np.asarray(S, dtype=float))
        self.n = self.Q.shape[0]
        for name, A in (("Q", self.Q), ("Qbar", self.Qbar), ("S", self.S)):
            if A.shape != (self.n, self.n):
                raise ShapeError(f"{name} must be {self.n}x{self.n}, got {A.shape}")
        # symmetrised so that Riccati tables started from them stay bitwise symmetric
        self.H = _sym(self.Q + self.Qbar)                 # D_x^2 F
        self.G = _sym(self.S.T @ self.Qbar @ self.S)      # S* Qbar S
        self.R = _sym(self.Qbar @ self.S + self.S.T @ self.Qbar)
        self.A = self.G - self.R                          # mean coupling at m1 = 1
        self.growth_constant = 0.5 * (_opnorm(self.H) + _opnorm(self.A))

    def coupling(self, m1: float = 1.0) -> np.ndarray:
        """S* Qbar S m1 - Qbar S - S* Qbar."""
        return self.G * m1 - self.R

    def value(self, X):
        self._check(X)
        xbar = mean(X)
        return float(sym_sum(_quad(X.points, self.H))) / (2 * X.N) + 0.5 * float(xbar @ self.A @ xbar)

    def grad_x(self, x, law):
        xbar = mean(law)
        return np.asarray(x, dtype=float) @ self.H.T + self.A @ xbar

    def derivative(self, x, law, m1=1.0):
        x = np.asarray(x, dtype=float)
        xbar = m1 * mean(law)
        return 0.5 * _quad(x, self.H) + x @ (self.coupling(m1).T @ xbar) + 0.5 * float(xbar @ self.G @ xbar)

    def second_derivative(self, x, xi, law, m1=1.0):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        xbar = m1 * mean(law)
        B = self.coupling(m1)
        return (x + xi) @ (self.G.T @ xbar) + np.einsum("ij,jk,ik->i", xi, B, x)

    def lipschitz_constant(self):
        return 2.0 * _opnorm(self.H) + 2.0 * _opnorm(self.A)

    def grad_path(self, x, laws=None):
        laws = x if laws is None else laws
        xbar = sym_sum(laws, axis=1) / laws.shape[1]
        return x @ self.H.T + (xbar @ self.A.T)[:, None, :]

    def derivative_path(self, x, laws):
        xbar = sym_sum(laws, axis=1) / laws.shape[1]
        B = self.coupling(1.0)
        return (0.5 * np.einsum("kpi,ij,kpj->kp", x, self.H, x)
                + np.einsum("kpi,ki->kp", x, xbar @ B)
                + 0.5 * np.einsum("ki,ij,kj->k", xbar, self.G, xbar)[:, None])

    def value_path(self, Y):
        xbar = sym_sum(Y, axis=1) / Y.shape[1]
        quad = sym_sum(np.einsum("kpi,ij,kpj->kp", Y, self.H, Y), axis=1) / Y.shape[1]
        return 0.5 * quad + 0.5 * np.einsum("ki,ij,kj->k", xbar, self.A, xbar)


Kernel = Callable[[np.ndarray, np.ndarray], np.ndarray]


class KernelCost(CostFunctional):
    """Pair interaction f(x, m) = 1/2 int K(x, xi) m(dxi), K symmetric.

    ``kernel(x, xi)`` maps (k, n) and (l, n) arrays to the (k, l) matrix of
    values; ``grad`` returns D_x K as a (k, l, n) array. ``lipschitz`` bounds
    the Lipschitz constant of D_x K jointly in (x, xi), in the sense
    |D_x K(x1, xi1) - D_x K(x2, xi2)| <= L (|x1 - x2| + |xi1 - xi2|).
    """

    def __init__(self, n: int, kernel: Kernel, grad: Callable, lipschitz: float,
                 name: str = "kernel", growth_constant: float | None = None):
        self.n = n
        self.kernel = kernel
        self.kernel_grad = grad
        self.lipschitz = float(lipschitz)
        self.name = name
        self.growth_constant = growth_constant

    def value(self, X):
        self._check(X)
        K = self.kernel(X.points, X.points)
        return 0.5 * float(sym_sum(sym_sum(K, axis=1))) / X.N ** 2

    def grad_x(self, x, law):
        return sym_sum(self.kernel_grad(np.asarray(x, dtype=float), law.points), axis=1) / law.N

    def derivative(self, x, law, m1=1.0):
        return m1 * sym_sum(self.kernel(np.asarray(x, dtype=float), law.points), axis=1) / law.N

    def second_derivative(self, x, xi, law, m1=1.0):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        return np.array([self.kernel(x[i:i + 1], xi[i:i + 1])[0, 0] for i in range(x.shape[0])])

    def grad_path(self, x, laws=None):
        laws = x if laws is None else laws
        return np.stack([sym_sum(self.kernel_grad(x[k], laws[k]), axis=1) / laws.shape[1]
                         for k in range(x.shape[0])])

    def lipschitz_constant(self):
        g0 = np.linalg.norm(self.kernel_grad(np.zeros((1, self.n)), np.zeros((1, self.n)))[0, 0])
        return 2.0 * max(self.lipschitz, float(g0))


def gaussian_kernel(n: int, amplitude: float = 1.0, width: float = 1.0) -> KernelCost:
    """K(x, xi) = a exp(-|x - xi|^2 / (2 w^2)); the Hessian of K is bounded by a / w^2."""
    a, w2 = float(amplitude), float(width) ** 2

    def K(x, xi):
        d = x[:, None, :] - xi[None, :, :]
        return a * np.exp(-0.5 * np.sum(d * d, axis=2) / w2)

    def DK(x, xi):
        d = x[:, None, :] - xi[None, :, :]
        e = np.exp(-0.5 * np.sum(d * d, axis=2) / w2)
        return -a / w2 * e[:, :, None] * d

    return KernelCost(n, K, DK, abs(a) / w2, name=f"gaussian(a={a:g}, w={math.sqrt(w2):g})",
                      growth_constant=0.5 * abs(a))


def bilinear_kernel(n: int, scale: float = 1.0) -> KernelCost:
    """K(x, xi) = s x . xi, so f(x, m) = s/2 x . xbar."""
    s = float(scale)

    def K(x, xi):
        return s * x @ xi.T

    def DK(x, xi):
        return s * np.broadcast_to(xi[None, :, :], (x.shape[0],) + xi.shape).copy()

    return KernelCost(n, K, DK, abs(s), name=f"bilinear(s={s:g})", growth_constant=0.5 * abs(s))


KERNELS = {"gaussian": gaussian_kernel, "bilinear": bilinear_kernel}


def make_kernel(name: str, n: int, params=()) -> KernelCost:
    if name == "zero":
        return ZeroCost(n)
    try:
        factory = KERNELS[name]
    except KeyError:
        raise ValueError(f"unknown kernel {name!r}; choose from {sorted(KERNELS) + ['zero']}") from None
    return factory(n, *params)


def kernel_is_symmetric(cost: KernelCost, pts: np.ndarray, tol: float = 1e-12) -> bool:
    K = cost.kernel(pts, pts)
    return bool(np.max(np.abs(K - K.T)) <= tol * max(1.0, np.max(np.abs(K))))


def _as_matrix(A, n: int, name: str) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape != (n, n):
        raise ShapeError(f"{name} must be {n}x{n}, got {A.shape}")
    return A


@dataclass(frozen=True, eq=False)
class QuadraticModel:
    """Quadratic running and terminal costs, control penalty and horizon."""

    Q: np.ndarray
    Qbar: np.ndarray
    S: np.ndarray
    QT: np.ndarray
    QbarT: np.ndarray
    ST: np.ndarray
    lam: float
    T: float
    allow_indefinite: bool = field(default=False, repr=False)

    def __post_init__(self):
        n = np.atleast_2d(np.asarray(self.Q)).shape[0]
        for name in ("Q", "Qbar", "S", "QT", "QbarT", "ST"):
            A = _as_matrix(getattr(self, name), n, name)
            A.setflags(write=False)
            object.__setattr__(self, name, A)
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.T > 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")
        for name in ("Q", "Qbar", "QT", "QbarT"):
            A = getattr(self, name)
            if not np.allclose(A, A.T, atol=1e-12, rtol=0):
                raise ValueError(f"{name} must be symmetric")
            if not self.allow_indefinite and np.linalg.eigvalsh(A).min() < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @classmethod
    def zero(cls, n: int, lam: float = 1.0, T: float = 1.0) -> "QuadraticModel":
        Z = np.zeros((n, n))
        return cls(Z, Z, Z, Z, Z, Z, lam, T)

    @cached_property
    def _costs(self):
        return QuadraticCost(self.Q, self.Qbar, self.S), QuadraticCost(self.QT, self.QbarT, self.ST)

    def running(self) -> QuadraticCost:
        return self._costs[0]

    def terminal(self) -> QuadraticCost:
        return self._costs[1]

    def lipschitz_constant(self) -> float:
        """Certified bound covering both costs:
        2 max(|Q+Qbar|, |QT+QbarT|) + 2 max(|A|, |A_T|), operator 2-norms,
        where A is the mean coupling S*Qbar S - Qbar S - S*Qbar."""
        f, h = self.running(), self.terminal()
        return 2.0 * max(_opnorm(f.H), _opnorm(h.H)) + 2.0 * max(_opnorm(f.A), _opnorm(h.A))

    def margin(self, t: float = 0.0) -> float:
        tau = self.T - t
        return self.lam - self.lipschitz_constant() * tau * (1.0 + tau)

    @property
    def admissible(self) -> bool:
        return self.margin() > 0

    @property
    def monotone(self) -> bool:
        """True when both mean couplings are PSD, which is exactly when the
        pairing of functional-derivative differences against law differences
        is nonnegative for quadratic costs."""
        return all(np.linalg.eigvalsh(0.5 * (c.A + c.A.T)).min() >= -1e-12
                   for c in (self.running(), self.terminal()))

    @classmethod
    def from_mapping(cls, sec: Mapping[str, str]) -> "QuadraticModel":
        """Build from string key/values; matrices are row-major literals,
        rows separated by ';' and entries by spaces or commas."""
        n = int(_require(sec, "n"))
        Z = np.zeros((n, n))
        mats = {}
        for key in ("Q", "Qbar", "S", "QT", "QbarT", "ST"):
            mats[key] = parse_matrix(sec[key], n, key) if key in sec else Z
        return cls(lam=float(_require(sec, "lambda")), T=float(_require(sec, "T")), **mats)


def _require(sec: Mapping[str, str], key: str) -> str:
    if key not in sec:
        raise KeyError(key)
    return sec[key]


def parse_matrix(text: str, n: int, name: str = "matrix") -> np.ndarray:
    rows = [r for r in text.strip().split(";") if r.strip()]
    try:
        data = [[float(v) for v in r.replace(",", " ").split()] for r in rows]
    except ValueError:
        raise ValueError(f"{name}: cannot parse matrix literal {text!r}") from None
    if len(data) == 1 and len(data[0]) == n * n:
        data = [data[0][i * n:(i + 1) * n] for i in range(n)]
    A = np.array(data, dtype=float) if all(len(r) == len(data[0]) for r in data) else None
    if A is None or A.shape != (n, n):
        raise ValueError(f"{name}: expected a {n}x{n} matrix literal, got {text!r}")
    return A


def parse_vector(text: str, n: int, name: str = "vector") -> np.ndarray:
    try:
        v = np.array([float(s) for s in text.replace(",", " ").split()])
    except ValueError:
        raise ValueError(f"{name}: cannot parse vector literal {text!r}") from None
    if v.shape != (n,):
        raise ValueError(f"{name}: expected {n} entries, got {text!r}")
    return v


def monotonicity_pairing(cost: CostFunctional, X1: ParticleEnsemble, X2: ParticleEnsemble) -> float:
    """int (F(x, m1) - F(x, m2)) (m1 - m2)(dx) for two equal-N empirical laws."""
    d1 = cost.derivative(X1.points, X1) - cost.derivative(X1.points, X2)
    d2 = cost.derivative(X2.points, X1) - cost.derivative(X2.points, X2)
    return float(sym_sum(d1)) / X1.N - float(sym_sum(d2)) / X2.N


def sampled_monotonicity(cost: CostFunctional, rng: np.random.Generator, trials: int = 50,
                         N: int = 8, scale: float = 1.0) -> float:
    """Smallest pairing over random law pairs; >= -1e-12 is taken as passing."""
    worst = math.inf
    for _ in range(trials):
        X1 = ParticleEnsemble(scale * rng.standard_normal((N, cost.n)))
        X2 = ParticleEnsemble(scale * rng.standard_normal((N, cost.n)) + rng.standard_normal(cost.n))
        worst = min(worst, monotonicity_pairing(cost, X1, X2))
    return worst


# Function-style aliases for the operations above.

def eval_F(model: CostFunctional, X: ParticleEnsemble) -> float:
    return model.value(X)


def grad_F(model: CostFunctional, X: ParticleEnsemble) -> ParticleEnsemble:
    return model.grad(X)


def functional_derivative(model: CostFunctional, x, X: ParticleEnsemble, m1: float = 1.0) -> float:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != X.n:
        raise ShapeError(f"point has dimension {x.shape[1]}, ensemble {X.n}")
    return float(model.derivative(x, X, m1)[0])


def lipschitz_constant(model) -> float:
    return model.lipschitz_constant()
