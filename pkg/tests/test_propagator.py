import numpy as np
import pytest
from scipy.linalg import expm

from unilab.errors import ConfigurationError, NumericalBreakdown, ResourceError
from unilab.experiments import fidelity, oracle_params, prepare_initial_state, Protocol
from unilab.hamiltonian import build_total_hamiltonian
from unilab.propagator import PropagatorConfig, dense_reference_evolve, evolve, krylov_step
from unilab.tensorspace import HamiltonianSet, ProductTerm, SiteOperator, SpaceLayout, StateVector, sigma_z


def qubit_hset(omega=1.0):
    lay = SpaceLayout([2])
    return HamiltonianSet([ProductTerm(omega / 2, ((0, sigma_z()),))], lay), lay


def random_state(layout, rng):
    v = rng.standard_normal(layout.total_dim) + 1j * rng.standard_normal(layout.total_dim)
    return StateVector(v / np.linalg.norm(v), layout)


@pytest.mark.parametrize("bad", [dict(dt=0), dict(krylov_dim=1), dict(krylov_dim=101), dict(tolerance=1e-3),
                                 dict(t_final=-1), dict(record_stride=0)])
def test_config_validation(bad):
    with pytest.raises(ConfigurationError):
        PropagatorConfig(**bad)


def test_zero_hamiltonian_is_identity():
    lay = SpaceLayout([2, 3])
    psi = random_state(lay, np.random.default_rng(0))
    out, _ = krylov_step(psi, HamiltonianSet([], lay), 0.7)
    np.testing.assert_allclose(out.amplitudes, psi.amplitudes, atol=1e-15)


def test_qubit_half_turn():
    hset, lay = qubit_hset()
    plus = StateVector(np.array([1, 1]) / np.sqrt(2), lay)
    out, _ = krylov_step(plus, hset, np.pi)
    np.testing.assert_allclose(out.amplitudes, np.array([np.exp(-0.5j * np.pi), np.exp(0.5j * np.pi)]) / np.sqrt(2),
                               atol=1e-12)
    minus = np.array([1, -1]) / np.sqrt(2)
    assert abs(abs(np.vdot(minus, out.amplitudes)) - 1) < 1e-12


def test_random_dense_against_expm():
    rng = np.random.default_rng(1)
    d = 256
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    h = (a + a.conj().T) / (2 * np.sqrt(d))
    lay = SpaceLayout([d])
    hset = HamiltonianSet([ProductTerm(1.0, ((0, SiteOperator.dense(h)),))], lay)
    psi = random_state(lay, rng)
    out, _ = krylov_step(psi, hset, 0.3)
    ref = expm(-0.3j * h) @ psi.amplitudes
    assert np.linalg.norm(out.amplitudes - ref) < 1e-9


def test_t_final_zero_single_snapshot():
    hset, lay = qubit_hset()
    psi = StateVector(np.array([1, 0]), lay)
    traj = evolve(psi, hset, PropagatorConfig(t_final=0.0), [lambda t, s: s.norm()])
    assert traj.times == [0.0]
    np.testing.assert_array_equal(traj.final_state.amplitudes, psi.amplitudes)


def test_snapshot_schedule_lands_on_t_final():
    hset, lay = qubit_hset()
    psi = StateVector(np.array([1, 0]), lay)
    traj = evolve(psi, hset, PropagatorConfig(dt=0.3, t_final=1.0, record_stride=2))
    assert traj.steps == [0, 2, 4]
    assert traj.times[-1] == pytest.approx(1.0, abs=1e-15)


def test_larmor_frequency():
    omega = 1.3
    hset, lay = qubit_hset(omega)
    plus = StateVector(np.array([1, 1]) / np.sqrt(2), lay)
    t_final = 20 * 2 * np.pi / omega
    sx = np.array([[0, 1], [1, 0]])
    cfg = PropagatorConfig(dt=0.05, t_final=t_final, record_stride=1)
    traj = evolve(plus, hset, cfg, [lambda t, s: np.vdot(s.amplitudes, sx @ s.amplitudes).real])
    t, y = np.asarray(traj.times), traj.series(0)
    # count upward zero crossings of <sx>, interpolated
    idx = np.nonzero((y[:-1] < 0) & (y[1:] >= 0))[0]
    cross = t[idx] - y[idx] * (t[idx + 1] - t[idx]) / (y[idx + 1] - y[idx])
    period = np.mean(np.diff(cross))
    assert abs(2 * np.pi / period - omega) / omega < 1e-3


def small_model(n_env=2, n_x=16):
    p = oracle_params(n_env=n_env, grid_points=n_x)
    layout = p.layout()
    hset = HamiltonianSet(build_total_hamiltonian(p, layout), layout)
    psi0 = prepare_initial_state(Protocol("full_model", p, PropagatorConfig()), layout)
    return hset, psi0


def test_krylov_matches_dense_reference():
    hset, psi0 = small_model()
    cfg = PropagatorConfig(dt=0.01, t_final=5.0, record_stride=10 ** 6)
    kry = evolve(psi0, hset, cfg).final_state
    ref = dense_reference_evolve(psi0, hset.to_dense(), 5.0)
    assert fidelity(kry, ref) > 1 - 1e-9


def test_time_reversal():
    hset, psi0 = small_model()
    cfg = PropagatorConfig(dt=0.05)
    psi = psi0
    for _ in range(20):
        psi, _ = krylov_step(psi, hset, 0.05, cfg)
    for _ in range(20):
        psi, _ = krylov_step(psi, hset, -0.05, cfg)
    assert np.linalg.norm(psi.amplitudes - psi0.amplitudes) < 1e-9


def test_dense_round_trip():
    hset, psi0 = small_model()
    h = hset.to_dense()
    back = dense_reference_evolve(dense_reference_evolve(psi0, h, 3.0), h, -3.0)
    np.testing.assert_allclose(back.amplitudes, psi0.amplitudes, atol=1e-12)


def test_norm_and_energy_preserved():
    hset, psi0 = small_model(3, 32)
    cfg = PropagatorConfig(dt=0.01, t_final=2.0, record_stride=20)
    traj = evolve(psi0, hset, cfg, [lambda t, s: hset.expectation(s)])
    e = traj.series(0)
    assert traj.norm_drift < 1e-9
    assert np.max(np.abs(e - e[0])) / abs(e[0]) < 1e-8


def test_dt_self_convergence():
    hset, psi0 = small_model(3, 32)
    ref = dense_reference_evolve(psi0, hset.to_dense(), 2.0)
    deficits = []
    for dt in (0.02, 0.01):
        out = evolve(psi0, hset, PropagatorConfig(dt=dt, t_final=2.0, record_stride=10 ** 6)).final_state
        deficits.append(1 - fidelity(out, ref))
    assert max(deficits) < 1e-9


def test_breakdown_raised_with_diagnostics():
    hset, psi0 = small_model()
    cfg = PropagatorConfig(dt=5.0, krylov_dim=2, tolerance=1e-12)
    with pytest.raises(NumericalBreakdown) as exc:
        krylov_step(psi0, hset, 5.0, cfg)
    assert exc.value.diagnostics["krylov_dim"] == 2
    assert exc.value.exit_code == 3


def test_substepping_recovers():
    # too small a Krylov space for dt, but enough after a few halvings
    hset, psi0 = small_model()
    cfg = PropagatorConfig(krylov_dim=8, tolerance=1e-10)
    out, info = krylov_step(psi0, hset, 0.5, cfg)
    ref = dense_reference_evolve(psi0, hset.to_dense(), 0.5)
    assert info.substeps > 1
    assert fidelity(out, ref) > 1 - 1e-9


def test_dense_reference_size_limit():
    lay = SpaceLayout([2, 4096])
    psi = StateVector(np.ones(lay.total_dim), lay)
    with pytest.raises(ResourceError):
        dense_reference_evolve(psi, np.zeros((8192, 1)), 1.0)
