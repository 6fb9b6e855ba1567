"""State-space model of a continuously measured optomechanical oscillator.

A cavity mode (quadratures X, Y) couples to a mechanical mode (Q, P) at
rate g under resonant probing; the cavity output is homodyne-detected at
angle theta with efficiency eta, and the mechanics thermalizes with a bath
at temperature T through one of two dissipation models:

* ``RWA`` -- rotating-wave (Lindblad) coupling to the bath: both mechanical
  quadratures damp at Gamma_m/2 and diffuse symmetrically.
* ``NON_RWA`` -- quantum Brownian motion: only the momentum damps (at
  Gamma_m) and diffuses, which is the model that retains position/momentum
  asymmetry at large thermalization rates.

Everything downstream (filtering, control, trajectories) consumes the
first-moment/second-moment matrices built here.  All rates are angular
(rad/s); quadratures are dimensionless with vacuum variance 1/2.  State
ordering is fixed as (Q, P, X, Y).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

# CODATA 2018 exact values.
HBAR = 1.054571817e-34  # J s
KB = 1.380649e-23  # J / K


class DissipationModel(enum.Enum):
    """Mechanical bath coupling model."""

    RWA = "rwa"
    NON_RWA = "nonrwa"


@dataclass(frozen=True)
class PhysicalParams:
    """Full experimental parameter set.

    omega_m, kappa, g are angular rates (rad/s); temperature in kelvin;
    theta in radians; q_m and eta dimensionless.
    """

    omega_m: float
    q_m: float
    kappa: float
    g: float
    eta: float
    theta: float
    temperature: float
    model: DissipationModel = DissipationModel.NON_RWA

    def __post_init__(self):
        vals = (self.omega_m, self.q_m, self.kappa, self.g, self.eta,
                self.theta, self.temperature)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("all parameters must be finite")
        if self.omega_m <= 0:
            raise ValueError("omega_m must be positive")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.g < 0:
            raise ValueError("g must be non-negative")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.q_m <= 0.5:
            raise ValueError("q_m must exceed 1/2 (underdamped oscillator)")
        if not isinstance(self.model, DissipationModel):
            raise ValueError("model must be a DissipationModel")

    @property
    def gamma_m(self) -> float:
        """Mechanical damping rate Gamma_m = omega_m / q_m (rad/s)."""
        return self.omega_m / self.q_m

    def replace(self, **changes) -> "PhysicalParams":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class ModelMatrices:
    """State-space quintuple (A, B, C, D, Gamma) in state order (Q, P, X, Y).

    ``a`` is the drift (n x n, rad/s), ``b`` the feedback input matrix
    (n x 2, sqrt(rad/s)), ``c`` the measurement row (n, sqrt(rad/s)),
    ``d`` the diffusion matrix (n x n, rad/s) and ``gamma_row`` the
    measurement-noise correlation row (n, sqrt(rad/s)).  ``omega_m`` is
    kept for the solvers' internal frequency normalization.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    gamma_row: np.ndarray
    omega_m: float

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def normalized(self) -> "ModelMatrices":
        """Same model with all rates in units of omega_m."""
        w = self.omega_m
        s = math.sqrt(w)
        return ModelMatrices(
            a=self.a / w,
            b=self.b / s,
            c=self.c / s,
            d=self.d / w,
            gamma_row=self.gamma_row / s,
            omega_m=1.0,
        )


@dataclass(frozen=True)
class DerivedQuantities:
    """Scalar quantities derived from a parameter set."""

    nbar: float
    cq: float
    gamma_th: float
    gamma_th_norm: float


def thermal_occupation(omega_m: float, temperature: float) -> float:
    """Bose-Einstein occupation of a mode at omega_m (rad/s) and T (K).

    Returns exactly 0 at T = 0.
    """
    if omega_m <= 0:
        raise ValueError("omega_m must be positive")
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    if temperature == 0:
        return 0.0
    x = HBAR * omega_m / (KB * temperature)
    if x > 700.0:  # expm1 would overflow; occupation ~ exp(-x)
        return math.exp(-x)
    return 1.0 / math.expm1(x)


def derived_quantities(params: PhysicalParams) -> DerivedQuantities:
    """Thermal occupation, quantum cooperativity and thermalization rates.

    The cooperativity 4 g^2 / (kappa Gamma_m nbar) is infinite at T = 0.
    """
    nb = thermal_occupation(params.omega_m, params.temperature)
    gm = params.gamma_m
    if nb > 0:
        cq = 4.0 * params.g**2 / (params.kappa * gm * nb)
    else:
        cq = math.inf
    gamma_th = gm * (nb + 0.5)
    return DerivedQuantities(
        nbar=nb,
        cq=cq,
        gamma_th=gamma_th,
        gamma_th_norm=gamma_th / params.omega_m,
    )


def build_matrices(params: PhysicalParams) -> ModelMatrices:
    """Drift/input/measurement/diffusion matrices for the chosen model.

    The drift and diffusion differ between the two dissipation models; the
    input matrix, measurement row and noise-correlation row do not.  The
    correlation row always equals -c/2.
    """
    w, k, g = params.omega_m, params.kappa, params.g
    gm = params.gamma_m
    s = thermal_occupation(w, params.temperature) + 0.5
    if params.model is DissipationModel.RWA:
        a = np.array([
            [-gm / 2, w, 0.0, 0.0],
            [-w, -gm / 2, -2 * g, 0.0],
            [0.0, 0.0, -k / 2, 0.0],
            [-2 * g, 0.0, 0.0, -k / 2],
        ])
        d = np.diag([gm * s, gm * s, k / 2, k / 2])
    else:
        a = np.array([
            [0.0, w, 0.0, 0.0],
            [-w, -gm, -2 * g, 0.0],
            [0.0, 0.0, -k / 2, 0.0],
            [-2 * g, 0.0, 0.0, -k / 2],
        ])
        d = np.diag([0.0, 2 * gm * s, k / 2, k / 2])
    b = np.array([
        [0.0, 0.0],
        [0.0, 0.0],
        [math.sqrt(k), 0.0],
        [0.0, math.sqrt(k)],
    ])
    c = math.sqrt(2 * params.eta * k) * np.array(
        [0.0, 0.0, math.cos(params.theta), math.sin(params.theta)])
    return ModelMatrices(a=a, b=b, c=c, d=d, gamma_row=-c / 2, omega_m=w)


def probe_amplitude(g: float, g0: float, kappa: float) -> float:
    """Steady-state probe drive amplitude sustaining the coupling g.

    The resonantly driven cavity enhances the single-photon coupling g0 to
    g = g0 * 2 eps / sqrt(kappa); this inverts that relation.
    """
    if g0 <= 0:
        raise ValueError("g0 must be positive")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return (g / g0) * math.sqrt(kappa) / 2.0


def adiabatic_reduce(matrices: ModelMatrices, params: PhysicalParams) -> ModelMatrices:
    """Two-mode (Q, P) comparison model with the cavity eliminated.

    The cavity quadratures are pinned to their drift steady state given the
    mechanical position (X_ss = 0, Y_ss = -4 g Q / kappa), valid in the bad
    cavity regime kappa >> omega_m.  The measured quadrature then reads the
    position through Y_ss, the radiation-pressure noise on P becomes white
    with strength 8 g^2 / kappa, and the amplitude feedback channel acts on
    P with weight -4 g / sqrt(kappa).

    This is an internal comparison model only: noise/measurement
    correlations beyond the universal -c/2 row are dropped (exact for a
    phase-quadrature measurement, theta = pi/2).
    """
    if params.kappa <= 0:
        raise ValueError("kappa must be positive")
    k, g = params.kappa, params.g
    a = np.array(matrices.a[:2, :2])
    d = np.array(matrices.d[:2, :2])
    d[1, 1] += 8.0 * g * g / k
    b = np.array([[0.0, 0.0], [-4.0 * g / math.sqrt(k), 0.0]])
    c = -4.0 * g * math.sin(params.theta) * math.sqrt(2 * params.eta / k) \
        * np.array([1.0, 0.0])
    return ModelMatrices(a=a, b=b, c=c, d=d, gamma_row=-c / 2,
                         omega_m=matrices.omega_m)
