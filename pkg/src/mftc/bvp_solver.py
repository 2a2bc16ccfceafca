"""Fixed-point solution of the state/adjoint boundary value problem

    dY/ds = -Z/lam,   -dZ/ds = D_X F(Y),   Y(t) = X,   Z(T) = D_X F_T(Y(T)),

through its integral form Y = K(Y), plus the value function and its
derivatives evaluated from the converged trajectory.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .functionals import CostFunctional, QuadraticModel
from .measure_space import ParticleEnsemble, ShapeError, TimeGrid, sym_sum

log = logging.getLogger(__name__)


class InadmissibleError(ValueError):
    """The contraction margin lam - c tau (1 + tau) is not positive."""

    def __init__(self, margin: float, c: float, lam: float, horizon: float):
        self.margin = margin
        super().__init__(f"inadmissible instance: lambda={lam:g}, c={c:g}, horizon={horizon:g}, "
                         f"margin={margin:g} <= 0 (pass force=True to solve anyway)")


class NonConvergenceError(RuntimeError):
    def __init__(self, residual: float, iterations: int, estimate: float):
        self.residual = residual
        self.iterations = iterations
        self.estimate = estimate
        super().__init__(f"fixed point not reached after {iterations} iterations: residual "
                         f"{residual:.3e}, contraction estimate {estimate:.3f}")


class Admissibility(NamedTuple):
    margin: float          # uses the remaining horizon T - t
    admissible: bool
    margin_full: float     # same constant with the full horizon T
    contraction: float     # c tau (1 + tau) / lam


def pair_lipschitz(*costs: CostFunctional) -> float:
    return max(c.lipschitz_constant() for c in costs)


def admissibility_check(model, lam: float, t: float, T: float) -> Admissibility:
    """Contraction margin of the fixed-point map.

    ``model`` is a Lipschitz constant, a cost, a sequence of costs, or a
    QuadraticModel. The remaining horizon tau = T - t replaces T when t > 0.
    """
    if isinstance(model, (int, float)):
        c = float(model)
    elif isinstance(model, QuadraticModel):
        c = model.lipschitz_constant()
    elif isinstance(model, CostFunctional):
        c = model.lipschitz_constant()
    else:
        c = pair_lipschitz(*model)
    if not (T > t >= 0 and lam > 0):
        raise ValueError(f"need T > t >= 0 and lambda > 0, got t={t}, T={T}, lambda={lam}")
    tau = T - t
    margin = lam - c * tau * (1.0 + tau)
    return Admissibility(margin, margin > 0, lam - c * T * (1.0 + T), c * tau * (1.0 + tau) / lam)


@dataclass(frozen=True)
class SolverConfig:
    grid: TimeGrid
    tol: float = 1e-10
    max_iter: int = 10_000

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(eq=False)
class TrajectoryBundle:
    """Converged state, adjoint and control paths; arrays are (M+1, N, n)."""

    grid: TimeGrid
    Y: np.ndarray
    Z: np.ndarray
    u: np.ndarray
    lam: float
    lipschitz: float
    iterations: int
    final_residual: float
    residuals: list = field(default_factory=list)
    converged: bool = True

    @property
    def t(self) -> float:
        return self.grid.t0

    @property
    def ratios(self) -> np.ndarray:
        """Successive-iterate contraction ratios, from the second update on."""
        r = np.asarray(self.residuals)
        with np.errstate(divide="ignore", invalid="ignore"):
            return r[1:] / r[:-1] if r.size > 1 else np.empty(0)

    @property
    def contraction_estimate(self) -> float:
        tau = self.grid.horizon
        return self.lipschitz * tau * (1.0 + tau) / self.lam

    def state(self, k: int) -> ParticleEnsemble:
        return ParticleEnsemble(self.Y[k])

    def adjoint(self, k: int) -> ParticleEnsemble:
        return ParticleEnsemble(self.Z[k])

    def control(self, k: int) -> ParticleEnsemble:
        return ParticleEnsemble(self.u[k])

    def to_csv(self, path) -> None:
        M1, N, n = self.Y.shape
        nodes = self.grid.nodes
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node_index", "time", "particle_index"]
                       + [f"y_{j}" for j in range(n)] + [f"z_{j}" for j in range(n)]
                       + [f"u_{j}" for j in range(n)])
            for k in range(M1):
                for i in range(N):
                    w.writerow([k, repr(float(nodes[k])), i]
                               + [repr(float(v)) for v in self.Y[k, i]]
                               + [repr(float(v)) for v in self.Z[k, i]]
                               + [repr(float(v)) for v in self.u[k, i]])


def _hilbert_norms(D: np.ndarray) -> np.ndarray:
    """Per-node ensemble norms of a (K, N, n) stack."""
    return np.sqrt(sym_sum(np.einsum("kij,kij->ki", D, D), axis=1) / D.shape[1])


def _trapz_cumulative(f: np.ndarray, dt: float) -> np.ndarray:
    """C[k] = trapezoid integral of f over nodes 0..k, along axis 0."""
    out = np.zeros_like(f)
    out[1:] = np.cumsum(0.5 * dt * (f[1:] + f[:-1]), axis=0)
    return out


def _kernel_terms(G: np.ndarray, gT: np.ndarray, grid: TimeGrid, lam: float):
    """Right-hand side pieces of the integral equation for a gradient path G.

    Returns (K(Y) - X, Z) where the kernel (s ^ sigma - t) is split at the
    node s_k so the trapezoid rule sees a linear weight on each side.
    """
    rel = (grid.nodes - grid.t0)[:, None, None]
    A = _trapz_cumulative(G * rel, grid.dt)          # int_t^{s_k} G (sigma - t)
    CG = _trapz_cumulative(G, grid.dt)
    B = CG[-1] - CG                                   # int_{s_k}^T G
    shift = -(rel * gT[None] + A + rel * B) / lam
    Z = B + gT[None]
    return shift, Z


def solve_fixed_point(running: CostFunctional, terminal: CostFunctional, X: ParticleEnsemble,
                      lam: float, cfg: SolverConfig, t: float | None = None,
                      force: bool = False) -> TrajectoryBundle:
    """Picard iteration Y <- K(Y) started from the zero-control path Y = X.

    Raises InadmissibleError when the contraction margin is not positive and
    ``force`` is false. With ``force`` set, hitting ``max_iter`` returns the
    last iterate flagged ``converged=False`` instead of raising.
    """
    grid = cfg.grid
    if t is not None and not math.isclose(t, grid.t0, rel_tol=0, abs_tol=1e-14):
        raise ValueError(f"grid starts at {grid.t0}, not at t={t}")
    if X.n != running.n or X.n != terminal.n:
        raise ShapeError(f"costs live in R^{running.n}, ensemble in R^{X.n}")
    c = pair_lipschitz(running, terminal)
    adm = admissibility_check(c, lam, grid.t0, grid.T)
    if not adm.admissible:
        if not force:
            raise InadmissibleError(adm.margin, c, lam, grid.horizon)
        log.warning("solving inadmissible instance (margin %.3g) because force is set", adm.margin)

    x0 = X.points
    Y = np.broadcast_to(x0, (grid.M + 1,) + x0.shape).copy()
    residuals = []
    converged = False
    for it in range(1, cfg.max_iter + 1):
        G = running.grad_path(Y)
        gT = terminal.grad_x(Y[-1], ParticleEnsemble(Y[-1]))
        shift, _ = _kernel_terms(G, gT, grid, lam)
        Y_new = x0[None] + shift
        res = float(np.max(_hilbert_norms(Y_new - Y)))
        residuals.append(res)
        Y = Y_new
        if res <= cfg.tol:
            converged = True
            break
        if not math.isfinite(res):
            break
    if not converged:
        if not force:
            raise NonConvergenceError(residuals[-1], len(residuals), adm.contraction)
        log.warning("no convergence: residual %.3e after %d iterations (estimate %.3f)",
                    residuals[-1], len(residuals), adm.contraction)

    G = running.grad_path(Y)
    gT = terminal.grad_x(Y[-1], ParticleEnsemble(Y[-1]))
    _, Z = _kernel_terms(G, gT, grid, lam)
    ratios = np.asarray(residuals[1:]) / np.asarray(residuals[:-1]) if len(residuals) > 1 else []
    if len(ratios):
        log.debug("observed contraction ratio max %.4f, bound %.4f", np.max(ratios), adm.contraction)
    return TrajectoryBundle(grid=grid, Y=Y, Z=Z, u=-Z / lam, lam=lam, lipschitz=c,
                            iterations=len(residuals), final_residual=residuals[-1],
                            residuals=residuals, converged=converged)


def solve_quadratic(model: QuadraticModel, X: ParticleEnsemble, t: float = 0.0, M: int = 400,
                    tol: float = 1e-10, max_iter: int = 10_000, force: bool = False) -> TrajectoryBundle:
    cfg = SolverConfig(TimeGrid(t, model.T, M), tol, max_iter)
    return solve_fixed_point(model.running(), model.terminal(), X, model.lam, cfg, force=force)


def _trapz(f: np.ndarray, dt: float) -> float:
    return float(dt * (0.5 * f[0] + f[1:-1].sum() + 0.5 * f[-1]))


def value_function(bundle: TrajectoryBundle, running: CostFunctional, terminal: CostFunctional) -> float:
    """V(X, t) = 1/(2 lam) int ||Z||^2 + int F(Y) + F_T(Y(T)), trapezoid in time."""
    return float(value_path(bundle, running, terminal)[0])


def value_path(bundle: TrajectoryBundle, running: CostFunctional, terminal: CostFunctional) -> np.ndarray:
    """Value-to-go V(Y(s_k), s_k) at every node.

    The tail of an optimal trajectory is optimal for its own starting point,
    so the tail integrals of the same quadrature give the value there.
    """
    dt = bundle.grid.dt
    z2 = _hilbert_norms(bundle.Z) ** 2
    lagr = z2 / (2 * bundle.lam) + running.value_path(bundle.Y)
    C = _trapz_cumulative(lagr, dt)
    return (C[-1] - C) + terminal.value(ParticleEnsemble(bundle.Y[-1]))


def gradient_value(bundle: TrajectoryBundle) -> ParticleEnsemble:
    """D_X V(X, t) = Z(t)."""
    return ParticleEnsemble(bundle.Z[0])


def time_derivative_value(bundle: TrajectoryBundle, running: CostFunctional) -> float:
    """dV/dt (X, t) = lam/2 ||u(t)||^2 - F(X)."""
    u0 = ParticleEnsemble(bundle.u[0])
    return 0.5 * bundle.lam * u0.norm() ** 2 - running.value(bundle.state(0))


def hjb_identity_residual(bundle: TrajectoryBundle, running: CostFunctional) -> float:
    """Bellman residual with dV/dt and D_X V taken from the trajectory identities."""
    z = gradient_value(bundle)
    return (time_derivative_value(bundle, running) - z.norm() ** 2 / (2 * bundle.lam)
            + running.value(bundle.state(0)))


def solve_tracers(bundle: TrajectoryBundle, running: CostFunctional, terminal: CostFunctional,
                  points: np.ndarray, tol: float | None = None, max_iter: int = 10_000):
    """Trajectories of extra particles moving in the frozen law flow of ``bundle``.

    Each point x solves the individual problem with m(s) the pushed-forward
    law of the bundle; for bundle particles this reproduces their own paths.
    Returns (y, z), each (M+1, P, n).
    """
    grid = bundle.grid
    tol = 1e-12 if tol is None else tol
    x0 = np.atleast_2d(np.asarray(points, dtype=float))
    laws = bundle.Y
    y = np.broadcast_to(x0, (grid.M + 1,) + x0.shape).copy()
    for _ in range(max_iter):
        G = running.grad_path(y, laws)
        gT = terminal.grad_x(y[-1], ParticleEnsemble(laws[-1]))
        shift, _ = _kernel_terms(G, gT, grid, bundle.lam)
        y_new = x0[None] + shift
        res = float(np.max(np.abs(y_new - y)))
        y = y_new
        if res <= tol:
            break
    else:
        raise NonConvergenceError(res, max_iter, bundle.contraction_estimate)
    G = running.grad_path(y, laws)
    gT = terminal.grad_x(y[-1], ParticleEnsemble(laws[-1]))
    _, z = _kernel_terms(G, gT, grid, bundle.lam)
    return y, z


def particle_values(bundle: TrajectoryBundle, running: CostFunctional, terminal: CostFunctional,
                    points: np.ndarray, tol: float | None = None) -> np.ndarray:
    """u_{mt}(x, t) for each row x of ``points``: the individual cost

        1/(2 lam) int |z|^2 + int F(y(s), m(s)) ds + F_T(y(T), m(T))

    along the frozen-law trajectory started at x.
    """
    y, z = solve_tracers(bundle, running, terminal, points, tol)
    dt = bundle.grid.dt
    lagr = np.einsum("kpi,kpi->kp", z, z) / (2 * bundle.lam) + running.derivative_path(y, bundle.Y)
    integral = dt * (0.5 * lagr[0] + lagr[1:-1].sum(axis=0) + 0.5 * lagr[-1])
    return integral + terminal.derivative(y[-1], ParticleEnsemble(bundle.Y[-1]))


def shooting_defect(bundle: TrajectoryBundle) -> float:
    """Max deviation between Y and the forward trapezoid integration of -Z/lam."""
    Yf = bundle.Y[0][None] + _trapz_cumulative(bundle.u, bundle.grid.dt)
    return float(np.max(_hilbert_norms(Yf - bundle.Y)))


def permute_bundle(bundle: TrajectoryBundle, perm: Sequence[int]) -> TrajectoryBundle:
    p = np.asarray(perm)
    return TrajectoryBundle(bundle.grid, bundle.Y[:, p], bundle.Z[:, p], bundle.u[:, p], bundle.lam,
                            bundle.lipschitz, bundle.iterations, bundle.final_residual,
                            list(bundle.residuals), bundle.converged)
