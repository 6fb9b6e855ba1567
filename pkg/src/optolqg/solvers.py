"""Steady-state matrix-equation solvers for the filter and control problems.

Three independent routes live here:

* a spectral solver for continuous algebraic Riccati equations (invariant
  subspace of the associated Hamiltonian matrix via ordered real Schur
  decomposition, polished by Kleinman-Newton steps),
* a direct Kronecker-form linear solve for Lyapunov equations,
* an explicit RK4 integrator for the full covariance ODE, used as the
  independent oracle for the spectral filter solution.

All solvers work on frequency-normalized matrices internally (rates in
units of omega_m); covariances are dimensionless so no rescaling is needed
on output.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import ModelMatrices


class SolverError(RuntimeError):
    pass


class NoStabilizingSolutionError(SolverError):
    """The Hamiltonian matrix has no n-dimensional stable invariant subspace."""

    def __init__(self, message, spectrum=None):
        super().__init__(message)
        self.spectrum = spectrum


class SingularBasisError(SolverError):
    """The stable-subspace basis is degenerate (U1 numerically singular)."""


class UnstableDriftError(SolverError):
    """Lyapunov drift matrix has an eigenvalue with non-negative real part."""


class NonConvergenceError(SolverError):
    """ODE integration did not reach the requested tolerance."""


class SolveMethod(enum.Enum):
    SCHUR = "schur"
    NEWTON_REFINED = "newton_refined"
    ODE_INTEGRATION = "ode_integration"
    KRONECKER_DIRECT = "kronecker_direct"


@dataclass(frozen=True)
class SolveReport:
    """Numerical audit of one solve.

    ``residual`` is the Frobenius norm of the defining equation at the
    returned solution divided by max(1, ||solution||_F), in normalized
    units.
    """

    residual: float
    method: SolveMethod
    stabilizing: bool
    iterations: int
    degenerate_mechanical_correlation: bool = False


#: Relative residual accepted without complaint, normalized units.
ARE_RESIDUAL_TOL = 1e-10


def symmetrize(v: np.ndarray) -> np.ndarray:
    return 0.5 * (v + v.T)


def closed_loop_spectrum(n: np.ndarray) -> np.ndarray:
    """Eigenvalues of ``n`` sorted by ascending real part."""
    ev = np.linalg.eigvals(np.asarray(n, dtype=float))
    return ev[np.lexsort((ev.imag, ev.real))]


def is_hurwitz(n: np.ndarray, tol: float = 0.0) -> bool:
    return bool(np.max(np.linalg.eigvals(np.asarray(n, dtype=float)).real) < -tol)


def solve_lyapunov(n: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Unique solution of N V + V N^T + S = 0 for Hurwitz N.

    Solved directly on the vectorized system (I kron N + N kron I) and
    symmetrized on output.  Raises UnstableDriftError when N is not
    Hurwitz, in which case the stationary covariance does not exist.
    """
    n = np.asarray(n, dtype=float)
    s = np.asarray(s, dtype=float)
    if n.shape[0] != n.shape[1] or n.shape != s.shape:
        raise ValueError("n and s must be square matrices of equal size")
    if not is_hurwitz(n):
        raise UnstableDriftError(
            "drift matrix is not Hurwitz; spectrum: "
            f"{closed_loop_spectrum(n)}")
    dim = n.shape[0]
    eye = np.eye(dim)
    op = np.kron(eye, n) + np.kron(n, eye)
    v = np.linalg.solve(op, -s.reshape(-1)).reshape(dim, dim)
    return symmetrize(v)


def _care_residual(a, s, p, y):
    r = a.T @ y + y @ a + p - y @ s @ y
    return np.linalg.norm(r) / max(1.0, np.linalg.norm(y))


def _solve_care(a: np.ndarray, s: np.ndarray, p: np.ndarray,
                max_newton: int = 8):
    """Stabilizing solution of A^T Y + Y A + P - Y S Y = 0, S and P symmetric.

    The solution is the graph of the stable invariant subspace of
    H = [[A, -S], [-P, -A^T]]: with ordered-Schur basis [U1; U2] spanning
    it, Y = U2 U1^{-1}.  P and S are rebalanced first (Y -> alpha Y leaves
    the equation invariant under P -> P/alpha, S -> alpha S), and the
    subspace solution is polished by Kleinman-Newton iterations, each a
    Lyapunov solve on the current closed loop.
    """
    dim = a.shape[0]
    norm_p, norm_s = np.linalg.norm(p), np.linalg.norm(s)
    alpha = np.sqrt(norm_p / norm_s) if (norm_p > 0 and norm_s > 0) else 1.0
    h = np.block([[a, -s * alpha], [-p / alpha, -a.T]])
    try:
        _, z, sdim = scipy.linalg.schur(h, output="real", sort="lhp")
    except Exception as exc:  # pragma: no cover - LAPACK failure
        raise NoStabilizingSolutionError(
            f"Schur decomposition failed: {exc}",
            spectrum=np.linalg.eigvals(h)) from exc
    if sdim != dim:
        raise NoStabilizingSolutionError(
            f"stable invariant subspace has dimension {sdim}, expected {dim}; "
            f"Hamiltonian spectrum: {np.sort(np.linalg.eigvals(h))}",
            spectrum=np.linalg.eigvals(h))
    u1 = z[:dim, :dim]
    u2 = z[dim:, :dim]
    if 1.0 / np.linalg.cond(u1) < 1e-13:
        raise SingularBasisError("stable-subspace basis is numerically singular")
    y = symmetrize(alpha * np.linalg.solve(u1.T, u2.T).T)

    # Kleinman-Newton polish: each step solves the closed-loop Lyapunov
    # equation; keep iterating only while the residual improves.
    residual = _care_residual(a, s, p, y)
    iterations = 0
    for _ in range(max_newton):
        if residual <= ARE_RESIDUAL_TOL / 10:
            break
        a_cl = a - s @ y
        if not is_hurwitz(a_cl):
            break
        try:
            y_next = solve_lyapunov(a_cl.T, p + y @ s @ y)
        except (UnstableDriftError, np.linalg.LinAlgError):
            break
        res_next = _care_residual(a, s, p, y_next)
        if not np.isfinite(res_next) or res_next >= residual:
            break
        y, residual = y_next, res_next
        iterations += 1
    stabilizing = is_hurwitz(a - s @ y)
    method = SolveMethod.NEWTON_REFINED if iterations else SolveMethod.SCHUR
    return y, SolveReport(residual=residual, method=method,
                          stabilizing=stabilizing, iterations=iterations)


def solve_control_are(a: np.ndarray, b: np.ndarray, p: np.ndarray,
                      q: np.ndarray):
    """Stabilizing solution of A^T Y + Y A + P - Y B Q^{-1} B^T Y = 0.

    ``p`` must be symmetric PSD and ``q`` symmetric positive definite.
    Returns (Y, report); A - B Q^{-1} B^T Y has all eigenvalues in the open
    left half-plane when report.stabilizing is true.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if not np.allclose(p, p.T, rtol=1e-12, atol=0):
        raise ValueError("p must be symmetric")
    if not np.allclose(q, q.T, rtol=1e-12, atol=0):
        raise ValueError("q must be symmetric")
    if np.min(np.linalg.eigvalsh(q)) <= 0:
        raise ValueError("q must be positive definite")
    if np.min(np.linalg.eigvalsh(p)) < -1e-12 * max(1.0, np.linalg.norm(p)):
        raise ValueError("p must be positive semi-definite")
    s = b @ np.linalg.solve(q, b.T)
    return _solve_care(a, symmetrize(s), symmetrize(p))


def solve_filter_are(m: ModelMatrices):
    """Stabilizing steady state of the conditional covariance.

    Solves A V + V A^T + D - (V C^T + Gamma^T)(C V + Gamma) = 0 by first
    absorbing the measurement-noise correlation into standard form
    (Abar = A - Gamma^T C, Dbar = D - Gamma^T Gamma) and then running the
    spectral CARE kernel on the dual problem.  ``stabilizing`` refers to
    the filter closed loop Abar - V C^T C.

    The report flags a vanishing mechanics-measurement correlation
    (first component of C V + Gamma), where the covariance is still valid
    but the feedback asymptotics lose meaning.
    """
    mn = m.normalized()
    a, c, d, gamma = mn.a, mn.c, mn.d, mn.gamma_row
    abar = a - np.outer(gamma, c)
    dbar = symmetrize(d - np.outer(gamma, gamma))
    ctc = np.outer(c, c)
    v, report = _solve_care(abar.T, ctc, dbar)
    v = symmetrize(v)
    f = c @ v + gamma
    degenerate = abs(f[0]) <= 1e-12 * max(1.0, float(np.linalg.norm(f)))
    report = SolveReport(
        residual=filter_residual(m, v),
        method=report.method,
        stabilizing=report.stabilizing,
        iterations=report.iterations,
        degenerate_mechanical_correlation=degenerate,
    )
    return v, report


def filter_residual(m: ModelMatrices, v: np.ndarray) -> float:
    """Relative residual of the covariance steady-state equation at v."""
    mn = m.normalized()
    ell = v @ mn.c + mn.gamma_row
    r = mn.a @ v + v @ mn.a.T + mn.d - np.outer(ell, ell)
    return float(np.linalg.norm(r) / max(1.0, np.linalg.norm(v)))


def _spectral_radius_filter(mn: ModelMatrices, v: np.ndarray) -> float:
    j = mn.a - np.outer(v @ mn.c + mn.gamma_row, mn.c)
    return float(np.max(np.abs(np.linalg.eigvals(j))))


def integrate_filter_ode(m: ModelMatrices, v0: np.ndarray | None = None,
                         dt: float | None = None, tol: float = 1e-12,
                         max_steps: int = 50_000_000) -> np.ndarray:
    """Integrate the covariance ODE to its steady state (oracle path).

    Classic RK4 on dV/dt = A V + V A^T + D - (V C^T + Gamma^T)(C V + Gamma)
    in normalized time.  Fixed points of the flow are preserved exactly by
    explicit Runge-Kutta steps, so the converged value is the algebraic
    steady state irrespective of step size.

    ``dt`` is a physical step in seconds; by default the step adapts to
    both the local linearization's spectral radius and the relative state
    change per step (the quadratic term punishes large stage excursions
    with spurious map fixed points otherwise).  Integration stops once the
    instantaneous update rate ||dV/dt||_F drops below
    tol * max(1, ||V||_F), checked each 64-step window; raises
    NonConvergenceError past ``max_steps``.
    """
    mn = m.normalized()
    a, c, d, gamma = mn.a, mn.c, mn.d, mn.gamma_row
    dim = m.dim
    if v0 is None:
        v = 0.5 * np.eye(dim)
    else:
        v0 = np.asarray(v0, dtype=float)
        if not np.allclose(v0, v0.T, rtol=1e-10, atol=1e-12):
            raise ValueError("v0 must be symmetric")
        if np.min(np.linalg.eigvalsh(v0)) < -1e-12 * max(1.0, np.linalg.norm(v0)):
            raise ValueError("v0 must be positive semi-definite")
        v = symmetrize(v0)

    def rhs(x):
        ell = x @ c + gamma
        return a @ x + x @ a.T + d - np.outer(ell, ell)

    def adaptive_step(x, res_norm):
        lim = 0.8 / _spectral_radius_filter(mn, x)
        if res_norm > 0:
            # cap the relative state change per step
            lim = min(lim, 0.5 * max(1.0, float(np.linalg.norm(x))) / res_norm)
        return lim

    res_norm = float(np.linalg.norm(rhs(v)))
    adaptive = dt is None
    if adaptive:
        step = adaptive_step(v, res_norm)
    else:
        step = dt * m.omega_m  # to normalized time
        rho = float(np.max(np.abs(np.linalg.eigvals(a))))
        if step * rho >= 0.1:
            raise ValueError(
                f"dt * max|eig(A)| = {step * rho:.3g} exceeds the 0.1 "
                "stability margin")

    window = 64
    steps = 0
    while steps < max_steps:
        if res_norm <= tol * max(1.0, float(np.linalg.norm(v))):
            return symmetrize(v)
        v_block = v
        # divergence inside a block is caught and retried at half step
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(window):
                k1 = rhs(v)
                k2 = rhs(v + 0.5 * step * k1)
                k3 = rhs(v + 0.5 * step * k2)
                k4 = rhs(v + step * k3)
                v = v + (step / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        steps += window
        if not np.all(np.isfinite(v)):
            if adaptive:
                v = v_block
                step *= 0.5
                continue
            raise NonConvergenceError("integration diverged; reduce dt")
        res_norm = float(np.linalg.norm(rhs(v)))
        if adaptive:
            step = min(adaptive_step(v, res_norm), 2.0 * step)
    raise NonConvergenceError(
        f"no steady state within {max_steps} steps "
        f"(last update rate {res_norm:.3e})")
