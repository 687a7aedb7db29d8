"""Krylov-Lanczos time propagation and the dense reference propagator."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ConfigurationError, NumericalBreakdown, ResourceError
from .tensorspace import MAX_REDUCED_DIM, HamiltonianSet, StateVector

logger = logging.getLogger(__name__)

REORTH_THRESHOLD = 1e-8
MAX_HALVINGS = 6  # smallest internal step is dt / 64


@dataclass(frozen=True)
class PropagatorConfig:
    dt: float = 0.01
    krylov_dim: int = 30
    tolerance: float = 1e-10
    t_final: float = 2.0
    record_stride: int = 100

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        if not 2 <= self.krylov_dim <= 100:
            raise ConfigurationError(f"krylov_dim must lie in [2, 100], got {self.krylov_dim}")
        if not 0 < self.tolerance <= 1e-4:
            raise ConfigurationError(f"tolerance must lie in (0, 1e-4], got {self.tolerance}")
        if self.t_final < 0:
            raise ConfigurationError(f"t_final must be >= 0, got {self.t_final}")
        if self.record_stride < 1:
            raise ConfigurationError(f"record_stride must be >= 1, got {self.record_stride}")

    @property
    def n_steps(self) -> int:
        return int(np.ceil(self.t_final / self.dt - 1e-9))


@dataclass
class StepInfo:
    krylov_size: int = 0
    error_estimate: float = 0.0
    substeps: int = 1
    reorthogonalizations: int = 0


def _small_expm_e1(alpha: np.ndarray, beta: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i dt T) e_1 for the real symmetric tridiagonal T(alpha, beta)."""
    if alpha.size == 1:
        return np.array([np.exp(-1j * dt * alpha[0])])
    w, z = eigh_tridiagonal(alpha, beta)
    return z @ (np.exp(-1j * dt * w) * z[0, :])


def _lanczos_expm(hset: HamiltonianSet, v: np.ndarray, dt: float, m_max: int, tol: float):
    """One attempt at exp(-i H dt) v in a Krylov space of size <= m_max.

    Returns (result or None, StepInfo).
    """
    nrm = np.linalg.norm(v)
    info = StepInfo()
    if nrm == 0.0:
        return v.copy(), info
    basis = np.empty((m_max + 1, v.size), dtype=complex)
    basis[0] = v / nrm
    alpha = np.zeros(m_max)
    beta = np.zeros(m_max)
    coeffs = None
    for j in range(m_max):
        w = hset.matvec(basis[j])
        if j > 0:
            w -= beta[j - 1] * basis[j - 1]
        alpha[j] = np.vdot(basis[j], w).real
        w -= alpha[j] * basis[j]
        overlap = basis[: j + 1].conj() @ w
        if np.max(np.abs(overlap)) > REORTH_THRESHOLD:
            w -= overlap @ basis[: j + 1]
            info.reorthogonalizations += 1
        b = np.linalg.norm(w)
        coeffs = _small_expm_e1(alpha[: j + 1], beta[:j], dt)
        err = b * abs(coeffs[-1])
        info.krylov_size = j + 1
        info.error_estimate = float(err)
        # Invariant subspace reached: the projection is exact.
        if b <= 1e-14 * max(1.0, abs(alpha[j])):
            info.error_estimate = 0.0
            break
        if err < tol:
            break
        beta[j] = b
        basis[j + 1] = w / b
    else:
        return None, info
    out = nrm * (coeffs @ basis[: info.krylov_size])
    return out, info


def krylov_step(state: StateVector, hset: HamiltonianSet, dt: float,
                config: PropagatorConfig | None = None) -> tuple[StateVector, StepInfo]:
    """Approximate exp(-i H dt)|state> with adaptive substepping.

    If the residual estimate does not drop below ``config.tolerance`` within
    ``config.krylov_dim`` Lanczos vectors, the step is split in halves
    recursively, down to dt / 64. The result is never renormalized.
    """
    config = config or PropagatorConfig()
    v = state.amplitudes
    total = StepInfo(substeps=0)

    def advance(vec, h, depth):
        out, info = _lanczos_expm(hset, vec, h, config.krylov_dim, config.tolerance)
        if out is None:
            if depth >= MAX_HALVINGS:
                raise NumericalBreakdown(
                    f"Krylov step failed to converge at internal dt = {h:.3e}",
                    {"dt": h, "krylov_dim": config.krylov_dim,
                     "error_estimate": info.error_estimate, "tolerance": config.tolerance},
                )
            logger.debug("halving Krylov step %.3e (err %.2e)", h, info.error_estimate)
            return advance(advance(vec, h / 2, depth + 1), h / 2, depth + 1)
        total.substeps += 1
        total.krylov_size = max(total.krylov_size, info.krylov_size)
        total.error_estimate += info.error_estimate
        total.reorthogonalizations += info.reorthogonalizations
        return out

    return state.like(advance(v, dt, 0)), total


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    values: list[list] = field(default_factory=list)  # one list per probe
    steps: list[int] = field(default_factory=list)
    final_state: StateVector | None = None
    norm_drift: float = 0.0
    substeps: int = 0
    max_krylov_size: int = 0

    def series(self, k: int) -> np.ndarray:
        return np.asarray(self.values[k])


Probe = Callable[[float, StateVector], object]


def evolve(state: StateVector, hset: HamiltonianSet, config: PropagatorConfig,
           probes: Sequence[Probe] = (), *, start_step: int = 0,
           on_snapshot: Callable[[int, float, StateVector, list], None] | None = None) -> Trajectory:
    """Integrate from step ``start_step`` to t_final, snapshotting every ``record_stride`` steps.

    The snapshot at ``start_step`` and the final step are always recorded.
    Times are computed as ``step * dt`` (the last step is shortened to land
    exactly on t_final), so resuming from a checkpoint reproduces an
    uninterrupted run exactly.
    """
    n_steps = config.n_steps
    traj = Trajectory(values=[[] for _ in probes])
    norm0 = state.norm()

    def snapshot(step, t, psi):
        traj.times.append(t)
        traj.steps.append(step)
        values = [probe(t, psi) for probe in probes]
        for k, v in enumerate(values):
            traj.values[k].append(v)
        if on_snapshot is not None:
            on_snapshot(step, t, psi, values)

    def time_of(step):
        return min(step * config.dt, config.t_final)

    psi = state
    snapshot(start_step, time_of(start_step), psi)
    for step in range(start_step + 1, n_steps + 1):
        h = time_of(step) - time_of(step - 1)
        psi, info = krylov_step(psi, hset, h, config)
        traj.substeps += info.substeps
        traj.max_krylov_size = max(traj.max_krylov_size, info.krylov_size)
        traj.norm_drift = max(traj.norm_drift, abs(psi.norm() - norm0))
        if step % config.record_stride == 0 or step == n_steps:
            snapshot(step, time_of(step), psi)
    traj.final_state = psi
    return traj


def dense_reference_evolve(state: StateVector, hamiltonian: np.ndarray, t: float) -> StateVector:
    """exp(-i H t)|state> by full eigendecomposition of a dense Hermitian H."""
    h = np.asarray(hamiltonian)
    if h.shape[0] > MAX_REDUCED_DIM:
        raise ResourceError(f"dense reference limited to dim <= {MAX_REDUCED_DIM}, got {h.shape[0]}")
    w, z = np.linalg.eigh(h)
    return state.like(z @ (np.exp(-1j * t * w) * (z.conj().T @ state.amplitudes)))
