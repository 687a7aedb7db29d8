"""Physical parameters and the term-by-term construction of the universe Hamiltonian.

Terms (hbar = 1)::

    H_Q  = omega0/2 sz
    H_E  = sum_j omega_j/2 sz_j
    H_QE = sum_j g_j sz (x) s_j          s = sz or sx, see ``qe_axis``
    H_O  = p^2/2m - a x^2 + b x^4       central differences, hard walls
    H_QO = lam sz (x) x
    H_EO = sum_j kappa_j x (x) sz_j
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ConfigurationError
from .tensorspace import ProductTerm, SiteOperator, SpaceLayout, sigma_x, sigma_z

TERM_GROUPS = ("Q", "E", "O", "QE", "QO", "EO")
QE_AXES = ("zz", "zx")

# Seeded draw ranges for per-spin parameters when none are given explicitly.
DEFAULT_OMEGA_RANGE = (0.5, 1.5)
DEFAULT_G_RANGE = (0.05, 0.15)
DEFAULT_KAPPA_RANGE = (0.01, 0.05)


@dataclass(frozen=True)
class PhysicalParams:
    omega0: float = 1.0
    omega_env: tuple[float, ...] = ()
    g_env: tuple[float, ...] = ()
    lambda_qo: float = 0.1
    kappa_eo: tuple[float, ...] = ()
    mass: float = 1.0
    a_well: float = 1.0
    b_well: float = 0.32
    grid_points: int = 128
    grid_half_width: float = 6.0
    qe_axis: str = "zx"
    # Off only for exact-diagonalization oracles on tiny grids.
    resolution_checks: bool = True

    def __post_init__(self):
        for name in ("omega_env", "g_env", "kappa_eo"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        object.__setattr__(self, "grid_points", int(self.grid_points))
        self.validate()

    def validate(self) -> None:
        if not (self.a_well > 0 and self.b_well > 0):
            raise ConfigurationError(
                f"double-well coefficients must satisfy a, b > 0 (got a={self.a_well}, b={self.b_well})"
            )
        if self.mass <= 0:
            raise ConfigurationError(f"mass must be > 0, got {self.mass}")
        if self.grid_half_width <= 0:
            raise ConfigurationError(f"grid_half_width must be > 0, got {self.grid_half_width}")
        if self.grid_points < 4 or (self.resolution_checks and self.grid_points < 32):
            raise ConfigurationError(f"grid_points must be >= 32, got {self.grid_points}")
        n = len(self.omega_env)
        if len(self.g_env) != n or len(self.kappa_eo) != n:
            raise ConfigurationError(
                "omega_env, g_env and kappa_eo must all have length n_env "
                f"(got {n}, {len(self.g_env)}, {len(self.kappa_eo)})"
            )
        if self.qe_axis not in QE_AXES:
            raise ConfigurationError(f"qe_axis must be one of {QE_AXES}, got {self.qe_axis!r}")

    @property
    def n_env(self) -> int:
        return len(self.omega_env)

    @classmethod
    def with_random_bath(cls, n_env: int, seed: int = 0,
                         omega_range=DEFAULT_OMEGA_RANGE,
                         g_range=DEFAULT_G_RANGE,
                         kappa_range=DEFAULT_KAPPA_RANGE,
                         **kwargs) -> "PhysicalParams":
        """Draw omega_j, g_j, kappa_j uniformly from their ranges."""
        rng = np.random.default_rng(seed)
        omega = rng.uniform(*omega_range, size=n_env)
        g = rng.uniform(*g_range, size=n_env)
        kappa = rng.uniform(*kappa_range, size=n_env)
        return cls(omega_env=tuple(omega), g_env=tuple(g), kappa_eo=tuple(kappa), **kwargs)

    def replace(self, **changes) -> "PhysicalParams":
        return dataclasses.replace(self, **changes)

    def layout(self) -> SpaceLayout:
        return SpaceLayout.universe(self.n_env, self.grid_points)

    def grid(self) -> "GridSpec":
        return GridSpec(self.grid_points, self.grid_half_width)


@dataclass(frozen=True)
class GridSpec:
    """Uniform midpoint grid on [-L, L]: x_i = -L + (i + 1/2) dx."""

    points: int
    half_width: float
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x = -self.half_width + (np.arange(self.points) + 0.5) * self.spacing
        x.setflags(write=False)
        object.__setattr__(self, "nodes", x)

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points


def double_well_potential(x, a: float, b: float):
    return -a * np.asarray(x) ** 2 + b * np.asarray(x) ** 4


def well_minima(a: float, b: float) -> float:
    """Positive minimum location sqrt(a / 2b) of the untilted well."""
    return float(np.sqrt(a / (2.0 * b)))


def barrier_height(a: float, b: float) -> float:
    return a * a / (4.0 * b)


def build_double_well(params: PhysicalParams) -> tuple[SiteOperator, SiteOperator]:
    """Kinetic (tridiagonal) and potential (diagonal) observer operators."""
    grid = params.grid()
    x_min = well_minima(params.a_well, params.b_well)
    if params.resolution_checks and 2.0 * x_min / grid.spacing < 8:
        raise ConfigurationError(
            f"grid spacing {grid.spacing:.4g} leaves fewer than 8 nodes between the well minima"
        )
    if x_min >= params.grid_half_width:
        raise ConfigurationError("well minima lie outside the grid")
    n = grid.points
    c = 1.0 / (params.mass * grid.spacing ** 2)
    kin = np.diag(np.full(n, c)) + np.diag(np.full(n - 1, -0.5 * c), 1) + np.diag(np.full(n - 1, -0.5 * c), -1)
    kinetic = SiteOperator.dense(kin, name="kinetic")
    potential = SiteOperator.diag(double_well_potential(grid.nodes, params.a_well, params.b_well), name="V")
    return kinetic, potential


def observer_hamiltonian(params: PhysicalParams) -> np.ndarray:
    """Dense N_x x N_x matrix of H_O."""
    kinetic, potential = build_double_well(params)
    return (kinetic.matrix + np.diag(potential.diagonal)).real


def position_operator(params: PhysicalParams) -> SiteOperator:
    return SiteOperator.diag(params.grid().nodes, name="x")


def build_total_hamiltonian(params: PhysicalParams, layout: SpaceLayout | None = None,
                            mask: Iterable[str] | None = None) -> list[ProductTerm]:
    """Product terms of H, restricted to the groups in ``mask`` (default: all).

    Groups are ``Q, E, O, QE, QO, EO``; disabled groups are simply omitted.
    """
    layout = layout or params.layout()
    if layout.n_env != params.n_env or layout.factors[-1] != params.grid_points:
        raise ConfigurationError(
            f"layout {layout.factors} inconsistent with n_env={params.n_env}, N_x={params.grid_points}"
        )
    enabled = set(TERM_GROUPS if mask is None else mask)
    unknown = enabled - set(TERM_GROUPS)
    if unknown:
        raise ConfigurationError(f"unknown Hamiltonian groups {sorted(unknown)}")

    q, o = layout.qubit, layout.observer
    sz = sigma_z()
    env_op = sigma_x() if params.qe_axis == "zx" else sz
    x_op = position_operator(params)
    terms: list[ProductTerm] = []

    if "Q" in enabled:
        terms.append(ProductTerm(params.omega0 / 2.0, ((q, sz),), "H_Q"))
    if "E" in enabled:
        for j, w in enumerate(params.omega_env):
            terms.append(ProductTerm(w / 2.0, ((layout.env(j), sz),), f"H_E[{j}]"))
    if "QE" in enabled:
        for j, g in enumerate(params.g_env):
            terms.append(ProductTerm(g, ((q, sz), (layout.env(j), env_op)), f"H_QE[{j}]"))
    if "O" in enabled:
        kinetic, potential = build_double_well(params)
        terms.append(ProductTerm(1.0, ((o, kinetic),), "H_O:kinetic"))
        terms.append(ProductTerm(1.0, ((o, potential),), "H_O:potential"))
    if "QO" in enabled:
        terms.append(ProductTerm(params.lambda_qo, ((q, sz), (o, x_op)), "H_QO"))
    if "EO" in enabled:
        for j, k in enumerate(params.kappa_eo):
            terms.append(ProductTerm(k, ((layout.env(j), sz), (o, x_op)), f"H_EO[{j}]"))
    return terms


class TiltedPotentials(NamedTuple):
    """Observer potentials conditioned on the qubit's sz eigenvalue."""

    v_plus: np.ndarray     # sz = +1: V(x) + lam x
    v_minus: np.ndarray    # sz = -1: V(x) - lam x
    minima_plus: tuple[float, ...]
    minima_minus: tuple[float, ...]


def tilted_minima(a: float, b: float, tilt: float) -> tuple[float, ...]:
    """Local minima of V(x) + tilt * x, sorted by energy (global minimum first)."""
    roots = np.roots([4.0 * b, 0.0, -2.0 * a, tilt])
    real = roots[np.abs(roots.imag) < 1e-9].real
    minima = [r for r in real if 12.0 * b * r * r - 2.0 * a > 0]
    minima.sort(key=lambda r: double_well_potential(r, a, b) + tilt * r)
    return tuple(float(r) for r in minima)


def effective_potentials(params: PhysicalParams) -> TiltedPotentials:
    x = params.grid().nodes
    v = double_well_potential(x, params.a_well, params.b_well)
    lam = params.lambda_qo
    return TiltedPotentials(
        v + lam * x,
        v - lam * x,
        tilted_minima(params.a_well, params.b_well, lam),
        tilted_minima(params.a_well, params.b_well, -lam),
    )
