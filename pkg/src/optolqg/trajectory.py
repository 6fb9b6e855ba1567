"""Stochastic simulation of the conditional mean under measurement feedback.

The conditional covariance is frozen at its steady state, so each
trajectory is a linear SDE for the conditional mean driven by the scalar
innovation process,

    d<X> = (A <X> + B u) dt + (V_c C^T + Gamma^T) dW,   u = -K <X>,

integrated with Euler-Maruyama in mechanical-frequency-normalized time.
Trajectories own independent counter-based RNG streams (Philox keyed by
(seed, trajectory index)), so ensembles are reproducible bit-for-bit and
order-independent.

The ensemble second moment of the conditional means estimates the excess
covariance and is the Monte Carlo cross-check of the Lyapunov route.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from .model import ModelMatrices, PhysicalParams
from .solvers import SolverError

_CHUNK = 1024
_MAGIC = b"OLQTRAJ1"


class StepSizeError(SolverError):
    """dt violates the explicit-scheme stability margin."""


class InsufficientSamplesError(SolverError):
    pass


@dataclass(frozen=True)
class TrajectoryConfig:
    """Integration plan: all counts in steps, dt in seconds.

    ``record_every = None`` keeps only the running second moment (for
    large ensembles); otherwise every record_every-th step is stored.
    ``burn_in`` must cover at least five closed-loop relaxation times.
    """

    dt: float
    steps: int
    burn_in: int
    ensemble: int = 1
    seed: int = 0
    feedback_enabled: bool = True
    record_every: int | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.steps <= 0 or self.burn_in < 0 or self.burn_in >= self.steps:
            raise ValueError("need 0 <= burn_in < steps")
        if self.ensemble < 1:
            raise ValueError("ensemble must be at least 1")
        if self.record_every is not None and self.record_every < 1:
            raise ValueError("record_every must be positive or None")


@dataclass(frozen=True)
class TrajectoryRecord:
    """One trajectory's recorded series and stationary second moment.

    ``times`` are in seconds; ``means`` hold the conditional mean
    (Q, P, X, Y) at recorded steps, ``controls`` the applied feedback
    -K <X>, and ``charge_increments`` the detected charge accumulated over
    each recording window (normalized-time convention, dimensionless).
    ``second_moment`` is the post-burn-in time average of the outer product
    of the conditional mean over all integration steps, not just recorded
    ones.
    """

    index: int
    seed: int
    dt: float
    times: np.ndarray
    means: np.ndarray
    controls: np.ndarray
    charge_increments: np.ndarray
    second_moment: np.ndarray
    n_samples: int


def _spectra(m: ModelMatrices, k_norm: np.ndarray | None):
    """Normalized model, spectral radius, slowest decay, Euler step bound.

    The step bound is the largest dt with |1 + dt lambda| <= 1 for every
    eigenvalue of the integrated drift (the closed loop when feedback is
    on), i.e. -2 Re(lambda) / |lambda|^2; lightly damped oscillatory modes
    make this far stricter than 1/|lambda|.
    """
    mn = m.normalized()
    mats = [mn.a]
    if k_norm is not None:
        mats.append(mn.a - mn.b @ k_norm)
    closed = mats[-1]
    rho = max(float(np.max(np.abs(np.linalg.eigvals(x)))) for x in mats)
    contraction_dt = math.inf
    for lam in np.linalg.eigvals(closed):
        if lam.real < 0:
            contraction_dt = min(contraction_dt,
                                 -2.0 * lam.real / abs(lam) ** 2)
    slowest = float(np.min(np.abs(np.linalg.eigvals(closed).real)))
    return mn, rho, slowest, contraction_dt


def auto_config(m: ModelMatrices, k: np.ndarray | None = None, *,
                ensemble: int = 1, seed: int = 0, sample_relaxations: float = 10.0,
                feedback_enabled: bool = True,
                record_every: int | None = None) -> TrajectoryConfig:
    """Config with dt at the stability margin and burn-in of 6 relaxations."""
    k_norm = None
    if k is not None and feedback_enabled:
        k_norm = np.asarray(k) / math.sqrt(m.omega_m)
    _, rho, slowest, contraction_dt = _spectra(m, k_norm)
    if slowest <= 0:
        raise ValueError("closed loop is not strictly stable")
    dt_norm = min(0.04 / rho, 0.9 * contraction_dt)
    relax = 1.0 / slowest
    burn = int(math.ceil(6.0 * relax / dt_norm))
    steps = burn + int(math.ceil(sample_relaxations * relax / dt_norm))
    return TrajectoryConfig(dt=dt_norm / m.omega_m, steps=steps, burn_in=burn,
                            ensemble=ensemble, seed=seed,
                            feedback_enabled=feedback_enabled,
                            record_every=record_every)


def _validate(m: ModelMatrices, k_norm, cfg: TrajectoryConfig):
    mn, rho, slowest, contraction_dt = _spectra(m, k_norm)
    dt_norm = cfg.dt * m.omega_m
    if dt_norm * rho >= 0.05:
        raise StepSizeError(
            f"dt * max|eig| = {dt_norm * rho:.3g} exceeds the 0.05 margin")
    if dt_norm > contraction_dt * (1 + 1e-9):
        raise StepSizeError(
            f"dt = {dt_norm:.3g} (normalized) exceeds the per-mode "
            f"contraction bound {contraction_dt:.3g}; the Euler map would "
            "amplify a lightly damped mode")
    if slowest > 0 and cfg.burn_in * dt_norm < 5.0 / slowest * (1 - 1e-9):
        raise ValueError(
            f"burn_in covers {cfg.burn_in * dt_norm * slowest:.2f} relaxation "
            "times, need at least 5")
    return mn, dt_norm


def photocurrent_increment(mean: np.ndarray, params: PhysicalParams,
                           dt: float, dw: float) -> float:
    """Detected charge over dt given the conditional mean and noise draw.

    sqrt(2 eta kappa) (<X> cos(theta) + <Y> sin(theta)) dt + dW, with the
    same dW that drives the state update.
    """
    proj = (mean[2] * math.cos(params.theta)
            + mean[3] * math.sin(params.theta))
    return math.sqrt(2.0 * params.eta * params.kappa) * proj * dt + dw


def simulate_ensemble(m: ModelMatrices, v_c: np.ndarray,
                      k: np.ndarray | None, cfg: TrajectoryConfig,
                      x0: np.ndarray | None = None) -> list[TrajectoryRecord]:
    """Integrate cfg.ensemble independent trajectories.

    ``k`` is the physical gain (ignored when feedback is disabled); ``v_c``
    the steady-state conditional covariance, which fixes the innovation
    gain.  Each trajectory draws from its own Philox stream keyed by
    (cfg.seed, index).
    """
    dim = m.dim
    k_norm = None
    if cfg.feedback_enabled:
        if k is None:
            raise ValueError("feedback enabled but no gain given")
        k_norm = np.asarray(k, dtype=float) / math.sqrt(m.omega_m)
    mn, dt_norm = _validate(m, k_norm, cfg)
    drift = mn.a if k_norm is None else mn.a - mn.b @ k_norm
    step_mat = np.eye(dim) + dt_norm * drift
    gain = v_c @ mn.c + mn.gamma_row
    sqrt_dt = math.sqrt(dt_norm)

    n_traj = cfg.ensemble
    x = np.zeros((dim, n_traj))
    if x0 is not None:
        x += np.asarray(x0, dtype=float).reshape(dim, 1)

    recording = cfg.record_every is not None
    if recording:
        rec_idx = np.arange(cfg.record_every - 1, cfg.steps, cfg.record_every)
        means = np.empty((len(rec_idx), dim, n_traj))
        charges = np.zeros((len(rec_idx), n_traj))
    else:
        rec_idx = np.empty(0, dtype=int)
        means = np.empty((0, dim, n_traj))
        charges = np.empty((0, n_traj))

    gens = [np.random.Generator(np.random.Philox(
        key=np.array([cfg.seed, i], dtype=np.uint64))) for i in range(n_traj)]
    acc = np.zeros((n_traj, dim, dim))
    n_acc = 0
    noise = np.empty((_CHUNK, n_traj))
    charge_acc = np.zeros(n_traj)
    rec_pos = 0
    step = 0
    while step < cfg.steps:
        block = min(_CHUNK, cfg.steps - step)
        for j, gen in enumerate(gens):
            noise[:block, j] = gen.standard_normal(block)
        for i in range(block):
            dw = noise[i] * sqrt_dt
            if recording:
                charge_acc += (mn.c @ x) * dt_norm + dw
            x = step_mat @ x + np.outer(gain, dw)
            if step >= cfg.burn_in:
                acc += np.einsum("ie,je->eij", x, x)
                n_acc += 1
            if recording and rec_pos < len(rec_idx) and step == rec_idx[rec_pos]:
                means[rec_pos] = x
                charges[rec_pos] = charge_acc
                charge_acc = np.zeros(n_traj)
                rec_pos += 1
            step += 1

    if n_acc == 0:
        raise InsufficientSamplesError("no post-burn-in samples accumulated")
    times = (rec_idx + 1) * cfg.dt
    records = []
    for j in range(n_traj):
        mj = means[:, :, j]
        controls = (-(k_norm @ mj.T).T * math.sqrt(m.omega_m)
                    if (recording and k_norm is not None)
                    else np.empty((len(rec_idx), 0)))
        records.append(TrajectoryRecord(
            index=j,
            seed=cfg.seed,
            dt=cfg.dt,
            times=times.copy(),
            means=mj.copy(),
            controls=controls,
            charge_increments=charges[:, j].copy(),
            second_moment=acc[j] / n_acc,
            n_samples=n_acc,
        ))
    return records


def simulate_conditional_mean(m: ModelMatrices, v_c: np.ndarray,
                              k: np.ndarray | None, cfg: TrajectoryConfig,
                              x0: np.ndarray | None = None) -> TrajectoryRecord:
    """Single trajectory of the conditional mean (ensemble index 0)."""
    one = replace(cfg, ensemble=1)
    return simulate_ensemble(m, v_c, k, one, x0=x0)[0]


def ensemble_excess_covariance(records: list[TrajectoryRecord]):
    """Sample second moment of the conditional means with jackknife errors.

    Averages the per-trajectory stationary second moments and estimates
    per-entry standard errors by leave-one-trajectory-out jackknife.
    Requires at least 100 trajectories for a meaningful error estimate.
    """
    if len(records) < 100:
        raise InsufficientSamplesError(
            f"need at least 100 trajectories, got {len(records)}")
    moments = np.stack([r.second_moment for r in records])
    n = len(records)
    total = moments.sum(axis=0)
    estimate = total / n
    loo = (total[None, :, :] - moments) / (n - 1)
    se = np.sqrt((n - 1) / n * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))
    return estimate, se


def save_records(path, records: list[TrajectoryRecord]) -> None:
    """Binary dump, little-endian.

    Layout: magic "OLQTRAJ1"; uint32 record count; then per record a
    header <uint64 index, uint64 seed, uint64 n_samples, uint32 n_recorded,
    uint32 state_dim, float64 dt> followed by contiguous float64 arrays:
    times [n_recorded], means [n_recorded x dim], controls
    [n_recorded x 2 or 0], charge increments [n_recorded], second moment
    [dim x dim].
    """
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(records)))
        for r in records:
            n_rec = len(r.times)
            dim = r.second_moment.shape[0]
            fh.write(struct.pack("<QQQIId", r.index, r.seed, r.n_samples,
                                 n_rec, dim, r.dt))
            fh.write(struct.pack("<I", r.controls.shape[1]))
            for arr in (r.times, r.means, r.controls, r.charge_increments,
                        r.second_moment):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_records(path) -> list[TrajectoryRecord]:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError("not a trajectory dump")
        (count,) = struct.unpack("<I", fh.read(4))
        records = []
        for _ in range(count):
            index, seed, n_samples, n_rec, dim, dt = struct.unpack(
                "<QQQIId", fh.read(40))
            (n_ctrl,) = struct.unpack("<I", fh.read(4))

            def read(shape):
                n = int(np.prod(shape))
                return np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape).copy()

            records.append(TrajectoryRecord(
                index=index, seed=seed, dt=dt,
                times=read((n_rec,)),
                means=read((n_rec, dim)),
                controls=read((n_rec, n_ctrl)),
                charge_increments=read((n_rec,)),
                second_moment=read((dim, dim)),
                n_samples=n_samples,
            ))
    return records
