"""Protocol presets, initial-state preparation and experiment orchestration."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import __version__
from .errors import ConfigurationError
from .hamiltonian import (
    TERM_GROUPS,
    PhysicalParams,
    build_total_hamiltonian,
    observer_hamiltonian,
    tilted_minima,
)
from .observables import (
    ClassicalityReport,
    RedundancyCurve,
    WellBasis,
    observer_statistics,
    purity,
    redundancy_scan,
    stability_metric,
    well_basis_from_hamiltonian,
)
from .propagator import PropagatorConfig, Trajectory, dense_reference_evolve, evolve
from .tensorspace import HamiltonianSet, SpaceLayout, StateVector, partial_trace, random_product_state

PROTOCOLS = ("isolation", "superposition", "decoherence_only", "full_model", "redundancy")

PROTOCOL_MASKS = {
    "isolation": frozenset(TERM_GROUPS) - {"QE", "EO"},
    "superposition": frozenset(TERM_GROUPS) - {"QE"},
    "decoherence_only": frozenset(TERM_GROUPS) - {"EO"},
    "full_model": frozenset(TERM_GROUPS),
    "redundancy": frozenset(TERM_GROUPS),
}

# Shipped physical defaults. mass and lambda_qo are tuned so that the well
# doublet is resolved and the isolation control localizes (see README).
DEFAULT_MASS = 40.0
DEFAULT_LAMBDA = 0.7
DEFAULT_COUPLING_SEED = 0
CONTROL_N_ENV = 4
FULL_N_ENV = 8
CONTROL_T_FINAL = 14.0
FULL_T_FINAL = 2.0
CONTROL_STRIDE = 20
FULL_STRIDE = 5
DEFAULT_SEED = 1

STABILITY_WINDOW = 0.25
STABILITY_THRESHOLD = 0.2


def default_params(n_env: int, coupling_seed: int = DEFAULT_COUPLING_SEED, **overrides) -> PhysicalParams:
    kwargs = dict(mass=DEFAULT_MASS, lambda_qo=DEFAULT_LAMBDA)
    kwargs.update(overrides)
    return PhysicalParams.with_random_bath(n_env, coupling_seed, **kwargs)


@dataclass(frozen=True)
class Protocol:
    name: str
    params: PhysicalParams
    prop: PropagatorConfig
    qubit_init: tuple[complex, complex] = (1 / math.sqrt(2), 1 / math.sqrt(2))
    env_seed: int = DEFAULT_SEED
    fragment_sizes: tuple[int, ...] | None = None
    fragment_samples: int = 50

    def __post_init__(self):
        if self.name not in PROTOCOLS:
            raise ConfigurationError(f"unknown protocol {self.name!r}; expected one of {PROTOCOLS}")
        a, b = (complex(v) for v in self.qubit_init)
        if abs(abs(a) ** 2 + abs(b) ** 2 - 1.0) > 1e-12:
            raise ConfigurationError(f"qubit amplitudes not normalized: |a|^2 + |b|^2 = {abs(a)**2 + abs(b)**2}")
        object.__setattr__(self, "qubit_init", (a, b))

    @property
    def term_mask(self) -> frozenset[str]:
        return PROTOCOL_MASKS[self.name]

    @property
    def records_redundancy(self) -> bool:
        return self.name in ("full_model", "redundancy")

    def replace(self, **changes) -> "Protocol":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        a, b = self.qubit_init
        return {
            "name": self.name,
            "params": dataclasses.asdict(self.params),
            "prop": dataclasses.asdict(self.prop),
            "qubit_init": [[a.real, a.imag], [b.real, b.imag]],
            "env_seed": self.env_seed,
            "fragment_sizes": list(self.fragment_sizes) if self.fragment_sizes else None,
            "fragment_samples": self.fragment_samples,
        }

    def param_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def preset(name: str, seed: int = DEFAULT_SEED, *, qubit_init=None, n_env: int | None = None,
           coupling_seed: int = DEFAULT_COUPLING_SEED, params: dict | None = None,
           prop: dict | None = None) -> Protocol:
    """Protocol with the shipped defaults for ``name``; keyword dicts override fields."""
    control = name in ("isolation", "superposition", "decoherence_only")
    n_env = n_env if n_env is not None else (CONTROL_N_ENV if control else FULL_N_ENV)
    p = default_params(n_env, coupling_seed, **(params or {}))
    prop_kwargs = dict(
        t_final=CONTROL_T_FINAL if control else FULL_T_FINAL,
        record_stride=CONTROL_STRIDE if control else FULL_STRIDE,
    )
    prop_kwargs.update(prop or {})
    if qubit_init is None:
        qubit_init = (1.0, 0.0) if name == "isolation" else (1 / math.sqrt(2), 1 / math.sqrt(2))
    return Protocol(name, p, PropagatorConfig(**prop_kwargs), tuple(qubit_init), seed)


def ready_state(params: PhysicalParams) -> np.ndarray:
    """Barrier-top Gaussian exp(-x^2 / 2 s^2), s = (2 m a)^(-1/4), normalized on the grid."""
    width = (2.0 * params.mass * params.a_well) ** -0.25
    loss = math.erfc(params.grid_half_width / width)
    if loss > 1e-8:
        raise ConfigurationError(f"ready-state Gaussian truncated by the grid edges (norm loss {loss:.2e})")
    x = params.grid().nodes
    psi = np.exp(-(x ** 2) / (2.0 * width ** 2)).astype(complex)
    return psi / np.linalg.norm(psi)


def prepare_initial_state(protocol: Protocol, layout: SpaceLayout | None = None) -> StateVector:
    params = protocol.params
    layout = layout or params.layout()
    specs = [list(protocol.qubit_init)] + ["haar"] * params.n_env + [ready_state(params)]
    return random_product_state(layout, protocol.env_seed, specs)


def wells_for(params: PhysicalParams) -> WellBasis:
    return well_basis_from_hamiltonian(observer_hamiltonian(params), params.grid().nodes)


@dataclass
class ExperimentRecord:
    protocol: Protocol
    times: list[float] = field(default_factory=list)
    qubit_purity_series: list[float] = field(default_factory=list)
    observer_purity_series: list[float] = field(default_factory=list)
    mean_x_series: list[float] = field(default_factory=list)
    p_left_series: list[float] = field(default_factory=list)
    p_right_series: list[float] = field(default_factory=list)
    sigma_z_series: list[float] = field(default_factory=list)
    energy_series: list[float] = field(default_factory=list)
    norm_series: list[float] = field(default_factory=list)
    final_report: ClassicalityReport | None = None
    final_distribution: np.ndarray | None = None
    x_nodes: np.ndarray | None = None
    wells: WellBasis | None = None
    redundancy: RedundancyCurve | None = None
    final_state: StateVector | None = None
    provenance: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def stability(self, window: float = STABILITY_WINDOW) -> float:
        return stability_metric(self.times, self.mean_x_series, window)

    def trailing_mean_x(self, window: float) -> float:
        t = np.asarray(self.times)
        sel = t >= t[-1] - window * (t[-1] - t[0]) - 1e-12
        return float(np.mean(np.asarray(self.mean_x_series)[sel]))

    def drift(self, series: str) -> float:
        s = np.asarray(getattr(self, series))
        return float(np.max(np.abs(s - s[0])))


def _snapshot_probe(hset: HamiltonianSet, wells: WellBasis, x_nodes: np.ndarray):
    sz = np.where(np.arange(hset.dim) < hset.dim // 2, 1.0, -1.0)

    def probe(t, psi: StateVector):
        rep = observer_statistics(psi, x_nodes, wells)
        amps = psi.amplitudes
        return {
            "qubit_purity": rep.qubit_purity,
            "observer_purity": rep.observer_purity,
            "mean_x": rep.mean_x,
            "p_left": rep.p_left,
            "p_right": rep.p_right,
            "sigma_z": float(np.dot(sz, np.abs(amps) ** 2)),
            "energy": hset.expectation(psi),
            "norm": psi.norm(),
        }

    return probe


def run_protocol(protocol: Protocol, *, initial_state: StateVector | None = None, start_step: int = 0,
                 on_snapshot: Callable[[int, float, StateVector, list], None] | None = None) -> ExperimentRecord:
    """Prepare, evolve and analyse one protocol.

    ``initial_state``/``start_step`` resume from a checkpoint; the recorded
    series then start at the checkpoint time.
    """
    params = protocol.params
    layout = params.layout()
    terms = build_total_hamiltonian(params, layout, protocol.term_mask)
    hset = HamiltonianSet(terms, layout)
    state = initial_state if initial_state is not None else prepare_initial_state(protocol, layout)
    if state.layout != layout:
        raise ConfigurationError(f"initial state layout {state.layout.factors} != {layout.factors}")
    wells = wells_for(params)
    x = params.grid().nodes
    traj: Trajectory = evolve(state, hset, protocol.prop, [_snapshot_probe(hset, wells, x)],
                              start_step=start_step, on_snapshot=on_snapshot)

    rec = ExperimentRecord(protocol, times=list(traj.times), x_nodes=x, wells=wells,
                           final_state=traj.final_state)
    for snap in traj.values[0]:
        rec.qubit_purity_series.append(snap["qubit_purity"])
        rec.observer_purity_series.append(snap["observer_purity"])
        rec.mean_x_series.append(snap["mean_x"])
        rec.p_left_series.append(snap["p_left"])
        rec.p_right_series.append(snap["p_right"])
        rec.sigma_z_series.append(snap["sigma_z"])
        rec.energy_series.append(snap["energy"])
        rec.norm_series.append(snap["norm"])

    redundancy_value = None
    if protocol.records_redundancy and params.n_env > 0:
        sizes = protocol.fragment_sizes or tuple(range(1, params.n_env + 1))
        rec.redundancy = redundancy_scan(traj.final_state, sizes, protocol.fragment_samples,
                                         seed=protocol.env_seed)
        redundancy_value = rec.redundancy.single_spin_fraction
    rec.final_report = observer_statistics(traj.final_state, x, wells, redundancy_value)
    rec.final_distribution = rec.final_report.distribution
    rec.provenance = {
        "param_hash": protocol.param_hash(),
        "seed": protocol.env_seed,
        "code_version": __version__,
        "start_step": start_step,
    }
    rec.diagnostics = {
        "norm_drift": traj.norm_drift,
        "krylov_substeps": traj.substeps,
        "max_krylov_size": traj.max_krylov_size,
        "matvecs": hset.n_matvec,
    }
    return rec


@dataclass
class Criterion:
    name: str
    value: float
    threshold: str
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.value:.6g} (require {self.threshold})"


def classicality_criteria(record: ExperimentRecord) -> list[Criterion]:
    """The six definiteness/stability checks applied to a full-model record."""
    rep = record.final_report
    params = record.protocol.params
    minima = tilted_minima(params.a_well, params.b_well, params.lambda_qo) + \
        tilted_minima(params.a_well, params.b_well, -params.lambda_qo)
    dist_to_min = min(abs(rep.mean_x - m) for m in minima)
    stab = record.stability()
    return [
        Criterion("qubit_purity", rep.qubit_purity, "<= 0.55", rep.qubit_purity <= 0.55),
        Criterion("winning_well_population", rep.winning_population, ">= 0.95", rep.winning_population >= 0.95),
        Criterion("interwell_coherence", rep.coherence, "< 1e-3", rep.coherence < 1e-3),
        Criterion("observer_purity", rep.observer_purity, ">= 0.9", rep.observer_purity >= 0.9),
        Criterion("stability_metric", stab, f"< {STABILITY_THRESHOLD}", stab < STABILITY_THRESHOLD),
        Criterion("mean_x_to_tilted_minimum", dist_to_min, "<= 0.3", dist_to_min <= 0.3),
    ]


def run_full_model(protocol: Protocol | None = None) -> tuple[ExperimentRecord, list[Criterion]]:
    protocol = protocol or preset("full_model")
    if protocol.params.n_env < FULL_N_ENV:
        raise ConfigurationError(f"full model needs n_env >= {FULL_N_ENV}, got {protocol.params.n_env}")
    if protocol.term_mask != frozenset(TERM_GROUPS):
        raise ConfigurationError("full model needs every Hamiltonian term enabled")
    record = run_protocol(protocol)
    return record, classicality_criteria(record)


def seed_sweep(seeds, base: Protocol | None = None) -> dict[int, str]:
    """Winning well per environment seed. Reported only; nothing is asserted about the tally."""
    base = base or preset("full_model")
    return {int(s): run_protocol(base.replace(env_seed=int(s))).final_report.outcome for s in seeds}


def fidelity(a: StateVector, b: StateVector) -> float:
    return float(abs(a.vdot(b)) ** 2)


def convergence_suite(*, include_grid: bool = True, seed: int = DEFAULT_SEED) -> dict:
    """Krylov-vs-dense, dt self-convergence and grid refinement, as a plain dict."""
    report: dict = {}

    # Krylov against exact diagonalization on a small full model.
    small = oracle_params(n_env=2, grid_points=16)
    proto = Protocol("full_model", small, PropagatorConfig(dt=0.01, t_final=5.0, record_stride=500),
                     env_seed=seed)
    layout = small.layout()
    hset = HamiltonianSet(build_total_hamiltonian(small, layout), layout)
    psi0 = prepare_initial_state(proto, layout)
    kry = evolve(psi0, hset, proto.prop).final_state
    ref = dense_reference_evolve(psi0, hset.to_dense(), proto.prop.t_final)
    report["krylov_vs_dense"] = {
        "n_env": 2, "grid_points": 16, "t": proto.prop.t_final,
        "fidelity": fidelity(kry, ref),
        "vector_error": float(np.linalg.norm(kry.amplitudes - ref.amplitudes)),
    }

    # dt vs dt/2 self-convergence, each also scored against the dense oracle.
    mid = oracle_params(n_env=3, grid_points=32)
    layout = mid.layout()
    hset = HamiltonianSet(build_total_hamiltonian(mid, layout), layout)
    psi0 = prepare_initial_state(Protocol("full_model", mid, PropagatorConfig(), env_seed=seed), layout)
    t_end = 2.0
    ref = dense_reference_evolve(psi0, hset.to_dense(), t_end)
    rows = []
    for dt in (0.02, 0.01, 0.005):
        cfg = PropagatorConfig(dt=dt, t_final=t_end, record_stride=10 ** 6)
        out = evolve(psi0, hset, cfg).final_state
        rows.append({"dt": dt, "fidelity_deficit": 1.0 - fidelity(out, ref),
                     "vector_error": float(np.linalg.norm(out.amplitudes - ref.amplitudes))})
    report["dt_convergence"] = {"n_env": 3, "grid_points": 32, "t": t_end, "runs": rows}

    if include_grid:
        finals = {}
        for n_x in (128, 256):
            p = preset("full_model", seed, params={"grid_points": n_x})
            p = p.replace(fragment_sizes=(1,), fragment_samples=1)
            finals[n_x] = run_protocol(p).final_report.mean_x
        report["grid_refinement"] = {
            "mean_x_final": {str(k): v for k, v in finals.items()},
            "difference": abs(finals[128] - finals[256]),
        }
    return report


def oracle_params(n_env: int, grid_points: int, seed: int = DEFAULT_COUPLING_SEED, **overrides) -> PhysicalParams:
    """Full-model parameters on a grid too coarse for physics runs, for exact-diagonalization oracles.

    The grid is shrunk to keep the ready-state Gaussian resolved and the
    physical-resolution checks are switched off.
    """
    kwargs = dict(mass=DEFAULT_MASS, lambda_qo=DEFAULT_LAMBDA, grid_half_width=2.5, resolution_checks=False)
    kwargs.update(overrides)
    return PhysicalParams.with_random_bath(n_env, seed, grid_points=grid_points, **kwargs)


def qubit_populations(state: StateVector) -> np.ndarray:
    return np.diag(partial_trace(state, [0]).entries).real


__all__ = [
    "PROTOCOLS", "Protocol", "ExperimentRecord", "Criterion", "preset", "prepare_initial_state",
    "run_protocol", "run_full_model", "classicality_criteria", "convergence_suite", "seed_sweep",
    "ready_state", "wells_for", "oracle_params", "fidelity", "qubit_populations", "purity",
]
