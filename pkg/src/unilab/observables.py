"""Reduced-state diagnostics: purities, entropies, mutual information, well
populations and the redundancy of environmental records.

Entropies use the natural logarithm throughout.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from math import comb

import numpy as np

from .errors import ConfigurationError, InvalidStateError, ResourceError
from .tensorspace import MAX_REDUCED_DIM, DensityMatrix, StateVector, partial_trace

EIGEN_CUTOFF = 1e-12


def purity(rho: DensityMatrix) -> float:
    m = rho.entries
    # Tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
    return float(np.vdot(m, m).real)


def von_neumann_entropy(rho: DensityMatrix) -> float:
    p = rho.eigenvalues()
    if p.min() < -1e-8:
        raise InvalidStateError(f"density matrix has eigenvalue {p.min():.3e} < -1e-8")
    p = p[p > EIGEN_CUTOFF]
    return float(max(0.0, -np.sum(p * np.log(p))))


def mutual_information(state: StateVector, part_a, part_b) -> float:
    """I(A:B) = S(A) + S(B) - S(AB) of the global pure ``state``."""
    a, b = set(part_a), set(part_b)
    if not a or not b:
        raise ConfigurationError("mutual_information needs two non-empty factor sets")
    if a & b:
        raise ConfigurationError(f"factor sets overlap: {sorted(a & b)}")
    s_a = von_neumann_entropy(partial_trace(state, a))
    s_b = von_neumann_entropy(partial_trace(state, b))
    s_ab = von_neumann_entropy(partial_trace(state, a | b))
    return s_a + s_b - s_ab


@dataclass(frozen=True)
class WellBasis:
    """Left/right memory states of the observer, plus the doublet they come from."""

    left_state: np.ndarray
    right_state: np.ndarray
    overlap: float
    doublet_splitting: float = 0.0
    gap_to_third: float = float("inf")


def well_basis_from_hamiltonian(h_observer: np.ndarray, x_nodes: np.ndarray) -> WellBasis:
    """Parity combinations of the two lowest eigenstates of H_O.

    ``left = (gs - e1)/sqrt2`` and ``right = (gs + e1)/sqrt2`` with the sign of
    the first excited state fixed so that <left|x|left> < 0.
    """
    w, z = np.linalg.eigh(np.asarray(h_observer))
    gs, e1 = z[:, 0], z[:, 1]
    # sign-fix so that <gs|x|e1> > 0, then (gs - e1) leans left
    if np.sum(x_nodes * gs.conj() * e1).real < 0:
        e1 = -e1
    left = (gs - e1) / np.sqrt(2.0)
    right = (gs + e1) / np.sqrt(2.0)
    splitting = float(w[1] - w[0])
    gap = float(w[2] - w[1]) if w.size > 2 else float("inf")
    if gap < 5.0 * splitting:
        warnings.warn(
            f"well doublet (splitting {splitting:.3g}) is not separated from the next level "
            f"(gap {gap:.3g}); left/right states are poorly defined",
            RuntimeWarning,
            stacklevel=2,
        )
    overlap = float(abs(np.vdot(left, right)))
    return WellBasis(left.astype(complex), right.astype(complex), overlap, splitting, gap)


@dataclass
class RedundancyCurve:
    fragment_sizes: list[int]
    mean_information: list[float]
    std_information: list[float]
    qubit_entropy: float
    single_spin_fraction: float | None = None


@dataclass
class ClassicalityReport:
    p_left: float
    p_right: float
    coherence: float
    observer_purity: float
    qubit_purity: float
    mean_x: float
    redundancy: float | None = None
    doublet_residual: float = 0.0
    distribution: np.ndarray = field(default=None, repr=False)

    @property
    def winning_population(self) -> float:
        return max(self.p_left, self.p_right)

    @property
    def outcome(self) -> str:
        return "left" if self.p_left >= self.p_right else "right"

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("distribution")
        return d


def observer_statistics(state: StateVector, x_nodes: np.ndarray, wells: WellBasis,
                        redundancy: float | None = None) -> ClassicalityReport:
    layout = state.layout
    rho_o = partial_trace(state, [layout.observer]).entries
    rho_q = partial_trace(state, [layout.qubit])
    dist = np.clip(np.diag(rho_o).real, 0.0, None)
    left, right = wells.left_state, wells.right_state
    p_left = float(np.vdot(left, rho_o @ left).real)
    p_right = float(np.vdot(right, rho_o @ right).real)
    return ClassicalityReport(
        p_left=p_left,
        p_right=p_right,
        coherence=float(abs(np.vdot(left, rho_o @ right))),
        observer_purity=float(np.vdot(rho_o, rho_o).real),
        qubit_purity=purity(rho_q),
        mean_x=float(np.dot(np.asarray(x_nodes), dist)),
        redundancy=redundancy,
        doublet_residual=1.0 - p_left - p_right,
        distribution=dist,
    )


def redundancy_scan(state: StateVector, fragment_sizes, n_samples: int = 50, seed: int = 0,
                    threshold: float = 0.5) -> RedundancyCurve:
    """Mutual information between the qubit and random bath fragments.

    For every fragment size f, up to ``n_samples`` distinct fragments of f
    bath spins are drawn (all of them when C(N_E, f) is small enough).
    ``single_spin_fraction`` is the fraction of one-spin fragments carrying
    more than ``threshold * S(rho_Q)``.
    """
    layout = state.layout
    n_env = layout.n_env
    q = layout.qubit
    rng = np.random.default_rng(seed)
    s_q = von_neumann_entropy(partial_trace(state, [q]))
    sizes, means, stds = [], [], []
    single_fraction = None
    for f in fragment_sizes:
        f = int(f)
        if not 1 <= f <= n_env:
            raise ConfigurationError(f"fragment size {f} outside [1, {n_env}]")
        if 2 ** (f + 1) > MAX_REDUCED_DIM:
            raise ResourceError(f"fragment of {f} spins plus qubit exceeds dense limit")
        fragments = _sample_fragments(n_env, f, n_samples, rng)
        info = [mutual_information(state, [q], [layout.env(j) for j in frag]) for frag in fragments]
        sizes.append(f)
        means.append(float(np.mean(info)))
        stds.append(float(np.std(info)))
        if f == 1:
            single_fraction = float(np.mean(np.asarray(info) > threshold * s_q)) if s_q > 0 else 0.0
    return RedundancyCurve(sizes, means, stds, s_q, single_fraction)


def _sample_fragments(n_env: int, f: int, n_samples: int, rng) -> list[tuple[int, ...]]:
    if comb(n_env, f) <= n_samples:
        from itertools import combinations

        return list(combinations(range(n_env), f))
    seen: set[tuple[int, ...]] = set()
    out = []
    while len(out) < n_samples:
        frag = tuple(sorted(rng.choice(n_env, size=f, replace=False).tolist()))
        if frag not in seen:
            seen.add(frag)
            out.append(frag)
    return out


def stability_metric(times, mean_x, window: float = 0.25) -> float:
    """max |<x>(t) - <x>(t_final)| over the trailing ``window`` fraction of the run."""
    t = np.asarray(times, dtype=float)
    x = np.asarray(mean_x, dtype=float)
    if t.size == 0:
        raise ConfigurationError("empty trajectory")
    t0 = t[-1] - window * (t[-1] - t[0])
    sel = t >= t0 - 1e-12
    if np.count_nonzero(sel) < 10:
        warnings.warn("fewer than 10 snapshots in the stability window", RuntimeWarning, stacklevel=2)
    return float(np.max(np.abs(x[sel] - x[-1])))
