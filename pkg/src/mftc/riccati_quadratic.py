"""Closed-form solution of the quadratic mean-field-type control problem.

The value is V(m, t) = 1/2 int x* P(t) x m(dx) + 1/2 xbar* Sigma(t; m1) xbar,
with P, Sigma and Gamma = dSigma/dm1 solving backward matrix Riccati-type
equations. Everything else (master fields, mean flow, state propagator,
linearised response) is built from these tables.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm

from .functionals import QuadraticModel
from .measure_space import ParticleEnsemble, TimeGrid, mean, sym_sum

BLOWUP_NORM = 1e12
TABLE_NAMES = ("P", "Sigma", "Gamma", "Gamma2")


class RiccatiBlowUpError(ArithmeticError):
    """The backward Riccati flow escaped to infinity inside the horizon."""


def _sym(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def _rhs(model: QuadraticModel, m1: float, P, Sig, Gam, Gam2):
    """Time derivatives of (P, Sigma, Gamma, d2Sigma/dm1^2).

    Gamma's equation is the m1-derivative of Sigma's; Gamma2 differentiates once more.
    """
    f = model.running()
    lam = model.lam
    Pi = P + m1 * Sig
    dP = P @ P / lam - f.H
    dS = (Sig @ P + P @ Sig) / lam + m1 * Sig @ Sig / lam - f.coupling(m1)
    dG = (Gam @ Pi + Pi @ Gam) / lam + Sig @ Sig / lam - f.G
    dG2 = ((Gam2 @ Pi + Pi @ Gam2) / lam + 2.0 * (Gam @ Sig + Sig @ Gam) / lam
           + 2.0 * m1 * Gam @ Gam / lam)
    return dP, dS, dG, dG2


@dataclass(frozen=True, eq=False)
class RiccatiTables:
    """P, Sigma(.; m1), Gamma(.; m1) and d2Sigma/dm1^2 at every grid node, (M+1, n, n)."""

    model: QuadraticModel
    grid: TimeGrid
    m1: float
    P: np.ndarray
    Sigma: np.ndarray
    Gamma: np.ndarray
    Gamma2: np.ndarray

    @cached_property
    def _slopes(self):
        return _rhs(self.model, self.m1, self.P, self.Sigma, self.Gamma, self.Gamma2)

    def derivatives(self, k: int):
        return tuple(d[k] for d in self._slopes)

    def at(self, s: float):
        """(P, Sigma, Gamma, Gamma2) at time s by cubic Hermite interpolation
        between nodes, using the ODE right-hand sides as node slopes."""
        g = self.grid
        k = int(np.clip(np.floor((s - g.t0) / g.dt), 0, g.M - 1))
        th = (s - g.t0) / g.dt - k
        return tuple(v[k] for v in self._hermite(th))

    def interior(self, theta: float):
        """Tables at s_k + theta*dt for every step k = 0..M-1, each (M, n, n)."""
        return self._hermite(theta)

    def _hermite(self, th):
        h = self.grid.dt
        h00, h10 = 2 * th**3 - 3 * th**2 + 1, th**3 - 2 * th**2 + th
        h01, h11 = -2 * th**3 + 3 * th**2, th**3 - th**2
        vals = []
        for d, name in zip(self._slopes, TABLE_NAMES):
            tab = getattr(self, name)
            vals.append(h00 * tab[:-1] + h10 * h * d[:-1] + h01 * tab[1:] + h11 * h * d[1:])
        return tuple(vals)

    def to_csv(self, path) -> None:
        nodes = self.grid.nodes
        n = self.P.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node_index", "time", "matrix_name", "row", "col", "value"])
            for k in range(self.grid.M + 1):
                for name in TABLE_NAMES[:3]:
                    tab = getattr(self, name)
                    for i in range(n):
                        for j in range(n):
                            w.writerow([k, repr(float(nodes[k])), name, i, j, repr(float(tab[k, i, j]))])


def solve_riccati(model: QuadraticModel, grid: TimeGrid | None = None, m1: float = 1.0,
                  M: int = 400) -> RiccatiTables:
    """Integrate the four matrix equations backward from T with classical RK4.

    Raises RiccatiBlowUpError if any table leaves the finite range.
    """
    if grid is None:
        grid = TimeGrid(0.0, model.T, M)
    if abs(grid.T - model.T) > 1e-12:
        raise ValueError(f"grid ends at {grid.T}, model horizon is {model.T}")
    h_cost = model.terminal()
    n = model.n
    tabs = np.zeros((4, grid.M + 1, n, n))
    tabs[:, -1] = (h_cost.H, h_cost.coupling(m1), h_cost.G, np.zeros((n, n)))
    h = -grid.dt

    def f(state):
        return np.array(_rhs(model, m1, *state))

    y = tabs[:, -1].copy()
    for k in range(grid.M, 0, -1):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = _sym(y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > BLOWUP_NORM:
            raise RiccatiBlowUpError(f"Riccati solution exceeds {BLOWUP_NORM:g} at t={grid.nodes[k - 1]:.6g}; "
                                     "horizon too long for these costs")
        tabs[:, k - 1] = y
    return RiccatiTables(model, grid, float(m1), *tabs)


def value_closed_form(tables: RiccatiTables, X: ParticleEnsemble, t_index: int = 0) -> float:
    """V(X, t) = 1/2 E X* P X + 1/2 EX* Sigma EX at a grid node (tables at m1 = 1)."""
    if tables.m1 != 1.0:
        raise ValueError("value_closed_form needs tables computed at m1 = 1")
    return value_measure(tables, X, t_index)


def value_measure(tables: RiccatiTables, X: ParticleEnsemble, t_index: int = 0) -> float:
    """V for the measure of mass tables.m1 spread uniformly over the particles of X."""
    if not 0 <= t_index <= tables.grid.M:
        raise IndexError(f"t_index {t_index} outside 0..{tables.grid.M}")
    m1 = tables.m1
    P, Sig = tables.P[t_index], tables.Sigma[t_index]
    xbar = m1 * mean(X)
    second = float(sym_sum(np.einsum("ij,jk,ik->i", X.points, P, X.points))) / X.N
    return 0.5 * m1 * second + 0.5 * float(xbar @ Sig @ xbar)


def master_scalar_field(tables: RiccatiTables, x, xbar, t_index: int = 0) -> float:
    """U(x, m, t) = 1/2 x* P x + xbar* Sigma x + 1/2 xbar* Gamma xbar."""
    x, xbar = np.asarray(x, float), np.asarray(xbar, float)
    k = t_index
    return float(0.5 * x @ tables.P[k] @ x + xbar @ tables.Sigma[k] @ x + 0.5 * xbar @ tables.Gamma[k] @ xbar)


def master_vector_field(tables: RiccatiTables, x, xbar, t_index: int = 0) -> np.ndarray:
    """D_x U(x, m, t) = P x + Sigma xbar."""
    x, xbar = np.asarray(x, float), np.asarray(xbar, float)
    return tables.P[t_index] @ x + tables.Sigma[t_index] @ xbar


def _rk4_forward(tables: RiccatiTables, rhs, y0, t_index: int):
    """Classical RK4 on the grid; rhs(k, stage, y) with stage 0 = node k,
    1 = step midpoint, 2 = node k + 1."""
    h = tables.grid.dt
    out = [np.asarray(y0, dtype=float)]
    y = out[0]
    for k in range(t_index, tables.grid.M):
        k1 = rhs(k, 0, y)
        k2 = rhs(k, 1, y + h / 2 * k1)
        k3 = rhs(k, 1, y + h / 2 * k2)
        k4 = rhs(k, 2, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(y)
    return np.array(out)


def _stage_tables(tables: RiccatiTables, name: str):
    """Node-start, midpoint and node-end values of one table, per step."""
    tab = getattr(tables, name)
    mid = tables.interior(0.5)[TABLE_NAMES.index(name)]
    return tab[:-1], mid, tab[1:]


def mean_flow(tables: RiccatiTables, xbar0, t_index: int = 0) -> np.ndarray:
    """First moment along the optimal flow, dxbar/ds = -(P + m1 Sigma) xbar / lam.

    Returns the (M + 1 - t_index, n) path starting at node ``t_index``.
    """
    lam, m1 = tables.model.lam, tables.m1
    Pi = [p + m1 * s for p, s in zip(_stage_tables(tables, "P"), _stage_tables(tables, "Sigma"))]

    def rhs(k, stage, y):
        return -Pi[stage][k] @ y / lam

    return _rk4_forward(tables, rhs, xbar0, t_index)


def _transition(tables: RiccatiTables, which: str, t_index: int) -> np.ndarray:
    """Phi(s_k, s_{t_index}) for dPhi/ds = -A(s) Phi / lam, A = P or P + Sigma.

    Time-ordered product of per-step exponentials, each from the fourth-order
    Magnus expansion at the two Gauss points of the step.
    """
    g = tables.grid
    lam, h = tables.model.lam, g.dt
    n = tables.P.shape[1]

    def B(theta):
        P, Sig, _, _ = tables.interior(theta)
        A = P if which == "P" else P + tables.m1 * Sig
        return -A / lam

    r = np.sqrt(3.0) / 6.0
    Bl, Br = B(0.5 - r), B(0.5 + r)
    Phi = np.eye(n)
    out = [Phi]
    for k in range(t_index, g.M):
        B1, B2 = Bl[k], Br[k]
        Omega = 0.5 * h * (B1 + B2) + (np.sqrt(3.0) / 12.0) * h * h * (B2 @ B1 - B1 @ B2)
        Phi = expm(Omega) @ Phi
        out.append(Phi)
    return np.array(out)


def propagator(tables: RiccatiTables, X: ParticleEnsemble, t_index: int = 0) -> np.ndarray:
    """Closed-form optimal state path from X at node ``t_index``, (K, N, n).

    The fluctuation X - EX moves with P alone and the mean with P + Sigma.
    """
    xbar = mean(X)
    Phi_P = _transition(tables, "P", t_index)
    Phi_S = _transition(tables, "P+Sigma", t_index)
    # Phi_P (X - EX) + Phi_S EX, arranged so that Phi_P = Phi_S = I returns X exactly
    return (np.einsum("kij,pj->kpi", Phi_P, X.points)
            + np.einsum("kij,j->ki", Phi_S - Phi_P, xbar)[:, None, :])


def adjoint_closed_form(tables: RiccatiTables, Y: np.ndarray, t_index: int = 0) -> np.ndarray:
    """Z(s) = P(s) Y(s) + Sigma(s) EY(s) along a state path starting at ``t_index``."""
    K = Y.shape[0]
    P = tables.P[t_index:t_index + K]
    Sig = tables.Sigma[t_index:t_index + K]
    ybar = sym_sum(Y, axis=1) / Y.shape[1]
    return np.einsum("kij,kpj->kpi", P, Y) + np.einsum("kij,kj->ki", Sig, ybar)[:, None, :]


class LinearizedFields(NamedTuple):
    """u~(x, s) = x . coef_x[k] + coef_0[k] at node t_index + k."""

    xbar: np.ndarray
    xbar_tilde: np.ndarray
    coef_x: np.ndarray
    coef_0: np.ndarray
    m1_tilde: float
    t_index: int


def linearized_fields(tables: RiccatiTables, xbar0, m1_tilde: float, xbar_tilde0,
                      t_index: int = 0) -> LinearizedFields:
    """Response of the adjoint u to a perturbation of the initial measure with
    mass m1_tilde and first moment xbar_tilde0."""
    lam, m1 = tables.model.lam, tables.m1
    n = tables.P.shape[1]

    st = [_stage_tables(tables, name) for name in ("P", "Sigma", "Gamma")]
    Pi = [p + m1 * s for p, s in zip(st[0], st[1])]
    Cm = [s + m1 * g for s, g in zip(st[1], st[2])]

    def rhs(k, stage, y):
        xb, xt = y[:n], y[n:]
        return np.concatenate([-Pi[stage][k] @ xb / lam,
                               -(Pi[stage][k] @ xt + m1_tilde * Cm[stage][k] @ xb) / lam])

    y = _rk4_forward(tables, rhs, np.concatenate([np.asarray(xbar0, float), np.asarray(xbar_tilde0, float)]),
                     t_index)
    xb, xt = y[:, :n], y[:, n:]
    sl = slice(t_index, tables.grid.M + 1)
    Sig, Gam, Gam2 = tables.Sigma[sl], tables.Gamma[sl], tables.Gamma2[sl]
    coef_x = np.einsum("kij,kj->ki", Sig, xt) + m1_tilde * np.einsum("kij,kj->ki", Gam, xb)
    coef_0 = (np.einsum("ki,kij,kj->k", xb, Gam, xt)
              + 0.5 * m1_tilde * np.einsum("ki,kij,kj->k", xb, Gam2, xb))
    return LinearizedFields(xb, xt, coef_x, coef_0, float(m1_tilde), t_index)


# ---------------------------------------------------------------------------
# Residuals. Time derivatives are five-point central differences of the
# tabulated fields, so the checks do not reuse the right-hand sides above.

def _d5(values, k: int, h: float):
    """Fourth-order central derivative at index k of a sequence of arrays."""
    return (values[k - 2] - 8 * values[k - 1] + 8 * values[k + 1] - values[k + 2]) / (12 * h)


def _check_interior(tables: RiccatiTables, k: int):
    if not 2 <= k <= tables.grid.M - 2:
        raise IndexError(f"residuals need 2 <= k <= M-2, got k={k}")


def bellman_residual(tables: RiccatiTables, X: ParticleEnsemble, k: int) -> float:
    """Bellman equation on measures at the closed-form V, for m = m1 * (law of X)."""
    _check_interior(tables, k)
    f = tables.model.running()
    lam, m1 = tables.model.lam, tables.m1
    Vs = [value_measure(tables, X, j) for j in range(k - 2, k + 3)]
    dV = _d5(Vs, 2, tables.grid.dt)
    xbar = m1 * mean(X)
    grads = X.points @ tables.P[k].T + tables.Sigma[k] @ xbar
    kinetic = m1 * float(sym_sum(np.einsum("ij,ij->i", grads, grads))) / X.N
    second = m1 * float(sym_sum(np.einsum("ij,jk,ik->i", X.points, f.H, X.points))) / X.N
    running = 0.5 * second + 0.5 * m1 * float(xbar @ f.G @ xbar) - 0.5 * float(xbar @ f.R @ xbar)
    return dV - kinetic / (2 * lam) + running


def scalar_master_residual(tables: RiccatiTables, x, xbar, k: int) -> float:
    _check_interior(tables, k)
    x, xbar = np.asarray(x, float), np.asarray(xbar, float)
    f = tables.model.running()
    lam, m1 = tables.model.lam, tables.m1
    Us = [master_scalar_field(tables, x, xbar, j) for j in range(k - 2, k + 3)]
    dU = _d5(Us, 2, tables.grid.dt)
    P, Sig, Gam = tables.P[k], tables.Sigma[k], tables.Gamma[k]
    d_xi_dU_dm = Gam @ xbar + Sig @ x
    mean_grad = P @ xbar + m1 * Sig @ xbar          # int D_xi U(xi) m(dxi)
    DU = P @ x + Sig @ xbar
    F = 0.5 * x @ f.H @ x + xbar @ f.coupling(m1) @ x + 0.5 * xbar @ f.G @ xbar
    return float(dU - d_xi_dU_dm @ mean_grad / lam - DU @ DU / (2 * lam) + F)


def vector_master_residual(tables: RiccatiTables, x, xbar, k: int) -> np.ndarray:
    _check_interior(tables, k)
    x, xbar = np.asarray(x, float), np.asarray(xbar, float)
    f = tables.model.running()
    lam, m1 = tables.model.lam, tables.m1
    Us = [master_vector_field(tables, x, xbar, j) for j in range(k - 2, k + 3)]
    dU = _d5(Us, 2, tables.grid.dt)
    P, Sig = tables.P[k], tables.Sigma[k]
    U = P @ x + Sig @ xbar
    # D_xi dU/dm (x)(xi) = Sigma, integrated against U(xi) m(dxi)
    nonlocal_term = Sig @ (P @ xbar + m1 * Sig @ xbar)
    return dU - nonlocal_term / lam - P @ U / lam + f.H @ x + f.coupling(m1) @ xbar


def linearized_residual(tables: RiccatiTables, lf: LinearizedFields, x, j: int) -> float:
    """Residual of the linearised adjoint equation at local node j of ``lf``."""
    k = lf.t_index + j
    if not 2 <= j <= lf.coef_x.shape[0] - 3:
        raise IndexError("residual needs two nodes on each side")
    x = np.asarray(x, float)
    f = tables.model.running()
    lam, m1 = tables.model.lam, tables.m1
    h = tables.grid.dt
    ut = [x @ lf.coef_x[i] + lf.coef_0[i] for i in range(j - 2, j + 3)]
    du = _d5(ut, 2, h)
    xb, xt = lf.xbar[j], lf.xbar_tilde[j]
    drift = tables.P[k] @ x + tables.Sigma[k] @ xb
    rhs = x @ (f.G @ xb * lf.m1_tilde + f.coupling(m1) @ xt) + xb @ f.G @ xt
    return float(-du + lf.coef_x[j] @ drift / lam - rhs)


def linearized_terminal_residual(tables: RiccatiTables, lf: LinearizedFields, x) -> float:
    x = np.asarray(x, float)
    h = tables.model.terminal()
    xb, xt = lf.xbar[-1], lf.xbar_tilde[-1]
    expected = x @ (h.G @ xb * lf.m1_tilde + h.coupling(tables.m1) @ xt) + xb @ h.G @ xt
    return float(x @ lf.coef_x[-1] + lf.coef_0[-1] - expected)


def gamma_fd_deviation(model: QuadraticModel, grid: TimeGrid, m1: float = 1.0, h: float = 1e-4) -> float:
    """max_k |(Sigma(m1 + h) - Sigma(m1 - h)) / 2h - Gamma(m1)| over all nodes."""
    up, dn = solve_riccati(model, grid, m1 + h), solve_riccati(model, grid, m1 - h)
    mid = solve_riccati(model, grid, m1)
    return float(np.max(np.abs((up.Sigma - dn.Sigma) / (2 * h) - mid.Gamma)))


def gamma_equation_residual(tables: RiccatiTables, sigma_coefficient: float) -> float:
    """Max residual of dGamma/dt - (Gamma Pi + Pi Gamma)/lam - a Sigma^2 + S*Qbar S
    with the Gamma table differenced in time; a = 1/lam is the derived
    coefficient, a = 1/lam^2 the alternative one."""
    f = tables.model.running()
    lam, m1 = tables.model.lam, tables.m1
    worst = 0.0
    for k in range(2, tables.grid.M - 1):
        dG = _d5(tables.Gamma, k, tables.grid.dt)
        Pi = tables.P[k] + m1 * tables.Sigma[k]
        G, Sig = tables.Gamma[k], tables.Sigma[k]
        r = dG - (G @ Pi + Pi @ G) / lam - sigma_coefficient * Sig @ Sig + f.G
        worst = max(worst, float(np.max(np.abs(r))))
    return worst
