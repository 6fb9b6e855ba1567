"""Scalar physics read-outs from covariance matrices.

Vacuum variance is 1/2 throughout, so a quadrature is squeezed when its
variance drops below 1/2 and the phonon number of a mechanical block is
(V_QQ + V_PP - 1) / 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MechanicalBlock:
    """Second moments of one mode: variances vqq, vpp and covariance vqp."""

    vqq: float
    vpp: float
    vqp: float = 0.0

    def __post_init__(self):
        if not (self.vqq > 0 and self.vpp > 0):
            raise ValueError("variances must be positive")

    @classmethod
    def from_matrix(cls, v: np.ndarray, mode: int = 0) -> "MechanicalBlock":
        i = 2 * mode
        return cls(vqq=float(v[i, i]), vpp=float(v[i + 1, i + 1]),
                   vqp=float(0.5 * (v[i, i + 1] + v[i + 1, i])))

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.vqq, self.vqp], [self.vqp, self.vpp]])


@dataclass(frozen=True)
class SqueezingResult:
    v_min: float
    angle: float
    squeezed: bool


@dataclass(frozen=True)
class PhysicalityResult:
    passes: bool
    margin: float


PHYSICALITY_TOL = -1e-10


def phonon_number(block: MechanicalBlock) -> float:
    """Occupancy above the ground state, (vqq + vpp - 1) / 2."""
    return 0.5 * (block.vqq + block.vpp - 1.0)


def rotated_variance(block: MechanicalBlock, nu: float) -> float:
    """Variance along the quadrature cos(nu) Q + sin(nu) P."""
    cs, sn = math.cos(nu), math.sin(nu)
    return cs * cs * block.vqq + 2.0 * cs * sn * block.vqp + sn * sn * block.vpp


def min_quadrature_variance(block: MechanicalBlock) -> SqueezingResult:
    """Smallest variance over all quadrature angles and its angle.

    The rotated variance is mean + R cos(2 nu - phi0), so the minimum is
    the smaller eigenvalue of the block, attained at (phi0 + pi) / 2;
    the angle is reported in (-pi/2, pi/2], with ties (isotropic block)
    resolved to 0.
    """
    half_diff = 0.5 * (block.vqq - block.vpp)
    mean = 0.5 * (block.vqq + block.vpp)
    radius = math.hypot(half_diff, block.vqp)
    if radius == 0.0:
        return SqueezingResult(v_min=mean, angle=0.0, squeezed=mean < 0.5)
    angle = 0.5 * (math.atan2(block.vqp, half_diff) + math.pi)
    angle = math.remainder(angle, math.pi)
    if angle <= -math.pi / 2:
        angle += math.pi
    v_min = mean - radius
    return SqueezingResult(v_min=v_min, angle=angle, squeezed=v_min < 0.5)


def symplectic_form(n_modes: int) -> np.ndarray:
    """Direct sum of [[0, 1], [-1, 0]] blocks in (Q1, P1, Q2, P2, ...) order."""
    omega = np.zeros((2 * n_modes, 2 * n_modes))
    for i in range(n_modes):
        omega[2 * i, 2 * i + 1] = 1.0
        omega[2 * i + 1, 2 * i] = -1.0
    return omega


def check_physicality(v: np.ndarray) -> PhysicalityResult:
    """Whether v is the covariance of a quantum state (V + i Omega / 2 >= 0).

    The margin is the smallest eigenvalue of the Hermitian matrix
    V + (i/2) Omega; the check passes for margin >= -1e-10, the slack
    absorbing round-off.  Margins are reported so borderline cases stay
    auditable.
    """
    v = np.asarray(v, dtype=float)
    if v.shape[0] != v.shape[1] or v.shape[0] % 2:
        raise ValueError("covariance must be square with an even dimension")
    if not np.allclose(v, v.T, rtol=1e-10, atol=1e-12 * max(1.0, np.linalg.norm(v))):
        raise ValueError("covariance must be symmetric")
    omega = symplectic_form(v.shape[0] // 2)
    herm = v.astype(complex) + 0.5j * omega
    margin = float(np.min(np.linalg.eigvalsh(herm)))
    return PhysicalityResult(passes=margin >= PHYSICALITY_TOL, margin=margin)


def purity(block: MechanicalBlock) -> float:
    """Gaussian single-mode purity 1 / (2 sqrt(det V))."""
    det = block.vqq * block.vpp - block.vqp * block.vqp
    if det <= 0:
        raise ValueError("block has non-positive determinant")
    return 1.0 / (2.0 * math.sqrt(det))
