"""Acceptance battery shared by ``unilab accept`` and tests/test_acceptance.py."""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path

import numpy as np

from .experiments import (
    classicality_criteria,
    fidelity,
    oracle_params,
    prepare_initial_state,
    preset,
    run_protocol,
    Protocol,
)
from .hamiltonian import build_total_hamiltonian
from .observables import mutual_information, purity, redundancy_scan, von_neumann_entropy
from .propagator import PropagatorConfig, dense_reference_evolve, evolve
from .tensorspace import HamiltonianSet, SpaceLayout, StateVector, partial_trace


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={_short(v)}" for k, v in self.details.items())
        return f"[{status}] criterion {self.number} {self.name} ({self.seconds:.1f}s): {shown}"


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return v


def dense_kron_hamiltonian(terms, layout: SpaceLayout) -> np.ndarray:
    """Oracle: sum of explicit Kronecker products, identities on untouched factors."""
    h = np.zeros((layout.total_dim, layout.total_dim), dtype=complex)
    for term in terms:
        ops = [np.eye(d, dtype=complex) for d in layout.factors]
        for k, op in term.sites:
            ops[k] = op.to_dense()
        h += term.coefficient * reduce(np.kron, ops)
    return h


def criterion_oracle_equivalence(seed: int = 0) -> CriterionResult:
    t0 = time.perf_counter()
    params = oracle_params(n_env=2, grid_points=16)
    layout = params.layout()
    terms = build_total_hamiltonian(params, layout)
    hset = HamiltonianSet(terms, layout)
    dense = dense_kron_hamiltonian(terms, layout)
    rng = np.random.default_rng(seed)
    err = 0.0
    for _ in range(100):
        v = rng.standard_normal(layout.total_dim) + 1j * rng.standard_normal(layout.total_dim)
        err = max(err, float(np.max(np.abs(hset.matvec(v) - dense @ v))))
    proto = Protocol("full_model", params, PropagatorConfig(dt=0.01, t_final=5.0, record_stride=10 ** 6))
    psi0 = prepare_initial_state(proto, layout)
    kry = evolve(psi0, hset, proto.prop).final_state
    ref = dense_reference_evolve(psi0, dense, 5.0)
    fid = fidelity(kry, ref)
    secs = time.perf_counter() - t0
    ok = err < 1e-12 and fid > 1 - 1e-9 and secs < 10.0
    return CriterionResult(1, "oracle equivalence", ok,
                           {"dim": layout.total_dim, "max_matvec_error": err, "fidelity_deficit": 1 - fid,
                            "runtime_s": secs}, secs)


def criterion_conservation(seed: int = 1) -> CriterionResult:
    t0 = time.perf_counter()
    proto = preset("full_model", seed, prop={"t_final": 2.0}).replace(fragment_sizes=(1,), fragment_samples=1)
    rec = run_protocol(proto)
    norm = max(rec.drift("norm_series"), rec.diagnostics["norm_drift"])
    e0 = rec.energy_series[0]
    energy = rec.drift("energy_series") / abs(e0)
    sz = rec.drift("sigma_z_series")
    secs = time.perf_counter() - t0
    ok = norm < 1e-9 and energy < 1e-8 and sz < 1e-10 and secs < 300.0
    return CriterionResult(2, "conservation", ok,
                           {"norm_drift": norm, "energy_drift_rel": energy, "sigma_z_drift": sz,
                            "runtime_s": secs}, secs)


def criterion_isolation(seed: int = 1, window: float = 0.25) -> CriterionResult:
    t0 = time.perf_counter()
    up = run_protocol(preset("isolation", seed, qubit_init=(1.0, 0.0)))
    down = run_protocol(preset("isolation", seed, qubit_init=(0.0, 1.0)))
    x_up, x_down = up.trailing_mean_x(window), down.trailing_mean_x(window)
    ok = x_up < -0.5 and x_down > 0.5
    return CriterionResult(3, "isolation bifurcation", ok,
                           {"trailing_x_qubit0": x_up, "trailing_x_qubit1": x_down},
                           time.perf_counter() - t0)


def criterion_superposition(seed: int = 1) -> CriterionResult:
    t0 = time.perf_counter()
    rec = run_protocol(preset("superposition", seed))
    trailing = abs(rec.trailing_mean_x(0.5))
    max_pop = float(max(np.max(rec.p_left_series), np.max(rec.p_right_series)))
    ok = trailing < 0.25 and max_pop <= 0.8
    return CriterionResult(4, "superposition stays delocalized", ok,
                           {"trailing_half_abs_mean_x": trailing, "max_well_population": max_pop,
                            "final_qubit_purity": rec.qubit_purity_series[-1]},
                           time.perf_counter() - t0)


def criterion_decoherence_only(seed: int = 1, window: float = 0.25) -> CriterionResult:
    t0 = time.perf_counter()
    rec = run_protocol(preset("decoherence_only", seed, n_env=4))
    qp = rec.qubit_purity_series[-1]
    t = np.asarray(rec.times)
    sel = t >= t[-1] - window * (t[-1] - t[0]) - 1e-12
    trailing = float(np.max(np.abs(np.asarray(rec.mean_x_series)[sel])))
    ok = abs(qp - 0.5) <= 0.05 and trailing < 0.5
    return CriterionResult(5, "decoherence without definiteness", ok,
                           {"final_qubit_purity": qp, "trailing_max_abs_x": trailing},
                           time.perf_counter() - t0)


def criterion_emergent_classicality(seed: int | None = None) -> CriterionResult:
    t0 = time.perf_counter()
    proto = preset("full_model") if seed is None else preset("full_model", seed)
    rec = run_protocol(proto)
    checks = classicality_criteria(rec)
    details = {c.name: c.value for c in checks}
    details["failed"] = ",".join(c.name for c in checks if not c.passed) or "none"
    return CriterionResult(6, "emergent classicality", all(c.passed for c in checks), details,
                           time.perf_counter() - t0)


def random_pure_state(layout: SpaceLayout, rng) -> StateVector:
    v = rng.standard_normal(layout.total_dim) + 1j * rng.standard_normal(layout.total_dim)
    return StateVector(v / np.linalg.norm(v), layout)


def criterion_property_suites(seed: int = 7) -> CriterionResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst_schmidt = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 6))
        dims = [int(d) for d in rng.integers(2, 5, size=n)]
        while np.prod(dims) > 256:
            dims[int(np.argmax(dims))] -= 1
        layout = SpaceLayout(dims)
        psi = random_pure_state(layout, rng)
        k = int(rng.integers(1, n))
        keep = sorted(rng.choice(n, size=k, replace=False).tolist())
        rest = [i for i in range(n) if i not in keep]
        s_a = von_neumann_entropy(partial_trace(psi, keep))
        s_b = von_neumann_entropy(partial_trace(psi, rest))
        worst_schmidt = max(worst_schmidt, abs(s_a - s_b))

    # partial trace physicality and purity bounds
    worst_trace = worst_herm = 0.0
    min_eig = 0.0
    purity_ok = True
    for _ in range(50):
        layout = SpaceLayout([2, 2, 4, 4])
        psi = random_pure_state(layout, rng)
        keep = sorted(rng.choice(4, size=int(rng.integers(1, 4)), replace=False).tolist())
        rho = partial_trace(psi, keep)
        worst_trace = max(worst_trace, abs(rho.trace() - 1))
        worst_herm = max(worst_herm, float(np.max(np.abs(rho.entries - rho.entries.conj().T))))
        min_eig = min(min_eig, float(rho.eigenvalues().min()))
        p = purity(rho)
        purity_ok &= 1.0 / rho.dim - 1e-10 <= p <= 1 + 1e-10

    # mutual information: non-negative, monotone in fragment size (nested fragments)
    min_mi = math.inf
    monotone = True
    for _ in range(10):
        layout = SpaceLayout([2] * 7)
        psi = random_pure_state(layout, rng)
        order = rng.permutation(np.arange(1, 7)).tolist()
        prev = -1e-9
        for f in range(1, 7):
            mi = mutual_information(psi, [0], order[:f])
            min_mi = min(min_mi, mi)
            monotone &= mi >= prev - 1e-9
            prev = mi
    curve = redundancy_scan(random_pure_state(SpaceLayout([2] * 6 + [4]), rng), [1, 2, 3, 4], 10, seed)
    secs = time.perf_counter() - t0
    ok = (worst_schmidt < 1e-8 and worst_trace < 1e-10 and worst_herm < 1e-10 and min_eig > -1e-10
          and purity_ok and min_mi >= -1e-9 and monotone and min(curve.mean_information) >= -1e-9
          and secs < 60.0)
    return CriterionResult(7, "property suites", ok,
                           {"schmidt_asymmetry": worst_schmidt, "trace_error": worst_trace,
                            "hermiticity_error": worst_herm, "min_eigenvalue": min_eig,
                            "purity_bounds": purity_ok, "min_mutual_information": min_mi,
                            "nested_monotone": monotone, "runtime_s": secs}, secs)


def criterion_determinism(config_text: str | None = None) -> CriterionResult:
    from .cli import main

    t0 = time.perf_counter()
    config_text = config_text or "protocol = isolation\n"
    with tempfile.TemporaryDirectory() as tmp:
        cfg = Path(tmp) / "run.cfg"
        cfg.write_text(config_text, encoding="utf-8")
        outs = []
        for tag in ("a", "b"):
            out = Path(tmp) / tag
            code = main(["run", str(cfg), "--output-dir", str(out), "--no-svg", "--quiet"])
            outs.append((code, {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}))
        (ca, fa), (cb, fb) = outs
        ok = ca == 0 and cb == 0 and bool(fa) and fa == fb
        details = {"exit_codes": f"{ca},{cb}", "csv_files": ",".join(sorted(fa)), "identical": fa == fb}
    return CriterionResult(8, "determinism", ok, details, time.perf_counter() - t0)


CRITERIA = {
    1: criterion_oracle_equivalence,
    2: criterion_conservation,
    3: criterion_isolation,
    4: criterion_superposition,
    5: criterion_decoherence_only,
    6: criterion_emergent_classicality,
    7: criterion_property_suites,
    8: criterion_determinism,
}


def run_battery(numbers=None, echo=print) -> list[CriterionResult]:
    results = []
    for n in numbers or sorted(CRITERIA):
        res = CRITERIA[n]()
        if echo is not None:
            echo(res.line())
        results.append(res)
    return results
