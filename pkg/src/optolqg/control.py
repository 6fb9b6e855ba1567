"""LQG feedback synthesis and its infinite-feedback asymptotics.

The synthesis chain is: conditional covariance from the filter Riccati
equation, gain from the control Riccati equation (K = Q^{-1} B^T Y,
feedback u = -K <X>_c), excess covariance of the conditional mean from the
closed-loop Lyapunov equation, and total (unconditional) covariance
V = V_c + V_excess.

Closed-form limits of the excess covariance and of the gain for
state-cost/feedback-cost ratio p/q -> infinity are provided as independent
oracles for the numeric chain.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import DissipationModel, ModelMatrices, PhysicalParams, build_matrices
from .solvers import (
    SolveReport,
    SolverError,
    solve_control_are,
    solve_filter_are,
    solve_lyapunov,
    symmetrize,
)


class UnstableClosedLoopError(SolverError):
    """A - B K is not Hurwitz; no stationary feedback-driven state exists."""


class CostKind(enum.Enum):
    COOLING = "cooling"
    SQUEEZING = "squeezing"


@dataclass(frozen=True)
class CostSpec:
    """Quadratic cost: state weight p, feedback weight q, both positive.

    ``nu`` is the target quadrature angle and is required for squeezing
    costs; the cost is pi-periodic in nu.
    """

    kind: CostKind
    p: float
    q: float
    nu: float | None = None

    def __post_init__(self):
        if not (self.p > 0 and math.isfinite(self.p)):
            raise ValueError("p must be positive and finite")
        if not (self.q > 0 and math.isfinite(self.q)):
            raise ValueError("q must be positive and finite")
        if self.kind is CostKind.SQUEEZING:
            if self.nu is None or not math.isfinite(self.nu):
                raise ValueError("squeezing cost requires a finite nu")

    @property
    def p_over_q(self) -> float:
        return self.p / self.q


def cooling_spec(p_over_q: float) -> CostSpec:
    return CostSpec(kind=CostKind.COOLING, p=p_over_q, q=1.0)


def squeezing_spec(p_over_q: float, nu: float) -> CostSpec:
    return CostSpec(kind=CostKind.SQUEEZING, p=p_over_q, q=1.0, nu=nu)


def cost_matrices(spec: CostSpec, omega_m: float):
    """State cost P (4x4) and feedback cost Q (2x2).

    Cooling weights both mechanical quadratures equally,
    P = diag(p omega_m, p omega_m, 0, 0); squeezing weights only the target
    quadrature cos(nu) Q + sin(nu) P.  Q = diag(q, q) in both cases.
    """
    p_mat = np.zeros((4, 4))
    if spec.kind is CostKind.COOLING:
        p_mat[0, 0] = p_mat[1, 1] = spec.p * omega_m
    else:
        cs, sn = math.cos(spec.nu), math.sin(spec.nu)
        p_mat[:2, :2] = spec.p * omega_m * np.array(
            [[cs * cs, cs * sn], [cs * sn, sn * sn]])
    q_mat = np.diag([spec.q, spec.q])
    return p_mat, q_mat


@dataclass(frozen=True)
class LqgSolution:
    """Everything produced by one synthesis.

    ``k`` is the physical gain (feedback amplitude per unit conditional
    mean, units sqrt(rad/s)); k / sqrt(omega_m) gives the
    frequency-normalized gain.  Covariances are dimensionless.
    """

    params: PhysicalParams
    spec: CostSpec
    matrices: ModelMatrices
    v_conditional: np.ndarray
    y: np.ndarray
    k: np.ndarray
    v_excess: np.ndarray
    v_total: np.ndarray
    feedback_strength: float
    filter_report: SolveReport
    control_report: SolveReport

    @property
    def k_normalized(self) -> np.ndarray:
        return self.k / math.sqrt(self.params.omega_m)


def synthesize(params: PhysicalParams, spec: CostSpec) -> LqgSolution:
    """Run the full LQG chain for one parameter set and cost.

    Raises UnstableClosedLoopError when the synthesized loop fails the
    Hurwitz check, and propagates filter/control solver errors.
    """
    m = build_matrices(params)
    mn = m.normalized()
    v_c, filter_report = solve_filter_are(m)
    p_mat, q_mat = cost_matrices(spec, 1.0)  # normalized: omega_m = 1
    y, control_report = solve_control_are(mn.a, mn.b, p_mat, q_mat)
    k_norm = np.linalg.solve(q_mat, mn.b.T @ y)
    n_cl = mn.a - mn.b @ k_norm
    if np.max(np.linalg.eigvals(n_cl).real) >= 0:
        raise UnstableClosedLoopError(
            "closed loop A - B K is not Hurwitz; no stationary state")
    f = mn.c @ v_c + mn.gamma_row
    v_e = solve_lyapunov(n_cl, np.outer(f, f))
    k_phys = k_norm * math.sqrt(params.omega_m)
    return LqgSolution(
        params=params,
        spec=spec,
        matrices=m,
        v_conditional=v_c,
        y=y,
        k=k_phys,
        v_excess=v_e,
        v_total=symmetrize(v_c + v_e),
        feedback_strength=feedback_strength(k_phys, v_e),
        filter_report=filter_report,
        control_report=control_report,
    )


def feedback_strength(k: np.ndarray, v_excess: np.ndarray) -> float:
    """Standard deviation of the applied drive amplitude.

    The drive covariance is K V_excess K^T; only its first (amplitude)
    channel may be nonzero for resonant-probing cost specs, and the second
    diagonal entry is checked to vanish.
    """
    vu = np.asarray(k) @ np.asarray(v_excess) @ np.asarray(k).T
    if vu[1, 1] > 1e-8 * vu[0, 0] + 1e-30:
        raise ValueError(
            f"phase-channel drive variance {vu[1, 1]:.3e} is not negligible")
    return float(math.sqrt(max(vu[0, 0], 0.0)))


def mech_light_correlation(params: PhysicalParams, v_c: np.ndarray) -> float:
    """Correlation between Q and the measured light quadrature."""
    return float(math.cos(params.theta) * v_c[0, 2]
                 + math.sin(params.theta) * v_c[0, 3])


def _excess_scale(params: PhysicalParams, v_c: np.ndarray) -> float:
    corr = mech_light_correlation(params, v_c)
    return params.eta * params.kappa / params.omega_m * corr * corr


def asymptotic_excess_cooling(params: PhysicalParams, v_c: np.ndarray):
    """Closed-form (V^E_QQ, V^E_PP) in the free-feedback limit, cooling cost.

    Both entries share the scale (eta kappa / omega_m) * corr^2 where corr
    is the mechanics-light correlation; the rotating-wave model carries
    Q_m-dependent prefactors that approach 1 as Q_m -> infinity, the
    non-RWA model has both prefactors exactly 1.
    """
    u = _excess_scale(params, v_c)
    if params.model is DissipationModel.RWA:
        qi = 1.0 / params.q_m
        root = math.sqrt(4.0 + qi * qi)
        return 2.0 / root * u, (2.0 + qi * qi - qi * root) / root * u
    return u, u


def asymptotic_excess_squeezing(params: PhysicalParams, v_c: np.ndarray,
                                nu: float):
    """Closed-form rotated excess entries in the free-feedback limit.

    Returns (V^E_{Qnu Qnu}, V^E_{Pnu Pnu}, V^E_{Qnu Pnu}) for the
    squeezing cost targeting angle nu, non-RWA model.  The anti-squeezed
    variance diverges at nu in {0, pi/2}; divergence is returned as
    math.inf, never a large float.  Expressions are pi-periodic in nu.
    """
    if params.model is DissipationModel.RWA:
        raise ValueError("squeezing asymptotics are for the non-RWA model")
    u = _excess_scale(params, v_c)
    # principal value in (-pi/2, pi/2]
    nu = math.remainder(nu, math.pi)
    if nu <= -math.pi / 2:
        nu += math.pi
    if nu == 0.0:
        return 0.0, math.inf, -u
    if nu == math.pi / 2:
        return 0.0, math.inf, u
    s2, c2 = math.sin(2 * nu), math.cos(2 * nu)
    if nu < 0:
        return -2 * s2 * u, -(math.cos(4 * nu) + 1.0) / s2 * u, -2 * c2 * u
    return 0.0, 2.0 / s2 * u, 0.0


def asymptotic_gain_rwa(params: PhysicalParams, p_over_q: float) -> np.ndarray:
    """Leading-order gain for the rotating-wave cooling problem, large p/q.

    Returned in frequency-normalized units (multiply by sqrt(omega_m) for
    the physical gain).  The position and momentum columns grow as
    sqrt(p/q), the cavity-amplitude column as (p/q)^(1/4); the phase
    column and the whole phase-drive row vanish identically.
    """
    if params.model is not DissipationModel.RWA:
        raise ValueError("gain asymptotics are for the RWA cooling problem")
    qi = 1.0 / params.q_m
    root_pq = math.sqrt(p_over_q)
    g_n = params.g / params.omega_m
    k_n = params.kappa / params.omega_m
    k11 = 0.5 * (qi - math.sqrt(4.0 + qi * qi)) * root_pq
    k12 = -root_pq
    k13 = 2.0 * math.sqrt(g_n / math.sqrt(k_n)) * p_over_q**0.25
    out = np.zeros((2, 4))
    out[0, :3] = (k11, k12, k13)
    return out


def excess_convergence(params: PhysicalParams, make_spec,
                       p_over_q_values=(1e10, 1e11, 1e12)):
    """Excess covariances along a p/q ladder plus their extrapolated limit.

    ``make_spec`` maps a p/q value to a CostSpec.  The limit is a per-entry
    least-squares fit in the basis (1, x^{-1/4}, x^{-1/2}), matching the
    gain's known sub-leading orders.  Returns (list of V^E, extrapolated
    V^E, last solution).
    """
    if len(p_over_q_values) < 3:
        raise ValueError("need at least three p/q values to extrapolate")
    sols = [synthesize(params, make_spec(pq)) for pq in p_over_q_values]
    ves = [s.v_excess for s in sols]
    xs = np.asarray(p_over_q_values, dtype=float)
    basis = np.vstack([np.ones_like(xs), xs**-0.25, xs**-0.5]).T
    stacked = np.stack(ves).reshape(len(xs), -1)
    coeffs, *_ = np.linalg.lstsq(basis, stacked, rcond=None)
    limit = coeffs[0].reshape(ves[0].shape)
    return ves, symmetrize(limit), sols[-1]
