import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unilab.errors import ConfigurationError, InvalidStateError
from unilab.experiments import default_params, ready_state, wells_for
from unilab.observables import (
    WellBasis,
    mutual_information,
    observer_statistics,
    purity,
    redundancy_scan,
    stability_metric,
    von_neumann_entropy,
    well_basis_from_hamiltonian,
)
from unilab.tensorspace import DensityMatrix, SpaceLayout, StateVector, partial_trace


def rho(entries):
    return DensityMatrix(np.asarray(entries, dtype=complex), (0,))


def random_state(layout, rng):
    v = rng.standard_normal(layout.total_dim) + 1j * rng.standard_normal(layout.total_dim)
    return StateVector(v / np.linalg.norm(v), layout)


def ghz(n):
    v = np.zeros(2 ** n)
    v[0] = v[-1] = 1 / np.sqrt(2)
    return StateVector(v, SpaceLayout([2] * n))


class TestEntropy:
    def test_pure(self):
        assert purity(rho([[1, 0], [0, 0]])) == pytest.approx(1.0)
        assert von_neumann_entropy(rho([[1, 0], [0, 0]])) == 0.0

    def test_maximally_mixed(self):
        assert purity(rho(np.eye(2) / 2)) == pytest.approx(0.5)
        assert von_neumann_entropy(rho(np.eye(2) / 2)) == pytest.approx(math.log(2), abs=1e-14)

    def test_biased_mixture(self):
        r = rho(np.diag([0.9, 0.1]))
        assert von_neumann_entropy(r) == pytest.approx(-0.9 * math.log(0.9) - 0.1 * math.log(0.1), abs=1e-14)
        assert von_neumann_entropy(r) == pytest.approx(0.3251, abs=1e-4)

    def test_negative_eigenvalue_rejected(self):
        with pytest.raises(InvalidStateError):
            von_neumann_entropy(rho(np.diag([1.1, -0.1])))

    def test_tiny_negative_eigenvalue_tolerated(self):
        assert von_neumann_entropy(rho(np.diag([1.0 + 1e-10, -1e-10]))) == pytest.approx(0.0, abs=1e-12)


class TestMutualInformation:
    def test_product_state(self):
        psi = StateVector(np.kron([1, 0], [0.6, 0.8]), SpaceLayout([2, 2]))
        assert mutual_information(psi, [0], [1]) == pytest.approx(0.0, abs=1e-12)

    def test_bell(self):
        psi = StateVector(np.array([1, 0, 0, 1]) / np.sqrt(2), SpaceLayout([2, 2]))
        assert mutual_information(psi, [0], [1]) == pytest.approx(2 * math.log(2), abs=1e-12)

    def test_ghz_pair(self):
        assert mutual_information(ghz(3), [0], [1]) == pytest.approx(math.log(2), abs=1e-12)

    def test_overlap_rejected(self):
        with pytest.raises(ConfigurationError):
            mutual_information(ghz(3), [0, 1], [1])

    def test_dense_oracle(self):
        rng = np.random.default_rng(3)
        lay = SpaceLayout([2, 2, 3])
        psi = random_state(lay, rng)
        full = np.outer(psi.amplitudes, psi.amplitudes.conj()).reshape(2, 2, 3, 2, 2, 3)
        r_ab = np.einsum("abcdec->abde", full).reshape(4, 4)
        r_a = np.einsum("abcdbc->ad", full)
        r_b = np.einsum("abcaec->be", full)

        def s(m):
            p = np.linalg.eigvalsh(m)
            p = p[p > 1e-12]
            return -np.sum(p * np.log(p))

        assert mutual_information(psi, [0], [1]) == pytest.approx(s(r_a) + s(r_b) - s(r_ab), abs=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1), st.integers(1, 4))
    def test_schmidt_symmetry(self, seed, cut):
        rng = np.random.default_rng(seed)
        lay = SpaceLayout([2, 3, 2, 2, 2])
        psi = random_state(lay, rng)
        a = list(range(cut))
        b = list(range(cut, 5))
        s_a = von_neumann_entropy(partial_trace(psi, a))
        s_b = von_neumann_entropy(partial_trace(psi, b))
        assert abs(s_a - s_b) < 1e-8

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1))
    def test_nested_monotone(self, seed):
        rng = np.random.default_rng(seed)
        psi = random_state(SpaceLayout([2] * 6), rng)
        order = rng.permutation(np.arange(1, 6)).tolist()
        values = [mutual_information(psi, [0], order[:f]) for f in range(1, 6)]
        assert min(values) >= -1e-10
        assert all(b >= a - 1e-10 for a, b in zip(values, values[1:]))


class TestRedundancy:
    def test_product_gives_zero(self):
        lay = SpaceLayout([2, 2, 2, 4])
        v = np.kron(np.kron(np.kron([0.6, 0.8], [1, 0]), [0, 1]), [0.5, 0.5, 0.5, 0.5])
        curve = redundancy_scan(StateVector(v, lay), [1, 2])
        assert max(curve.mean_information) < 1e-12

    def test_ghz_single_spin(self):
        # qubit + 3 bath spins + trivial 2-dim observer in |0>
        g = ghz(4).amplitudes
        lay = SpaceLayout([2, 2, 2, 2, 2])
        curve = redundancy_scan(StateVector(np.kron(g, [1, 0]), lay), [1, 2, 3])
        np.testing.assert_allclose(curve.mean_information, [math.log(2), math.log(2), 2 * math.log(2)],
                                   atol=1e-12)
        assert curve.single_spin_fraction == 1.0
        assert curve.qubit_entropy == pytest.approx(math.log(2))

    def test_bad_fragment_size(self):
        lay = SpaceLayout([2, 2, 2])
        with pytest.raises(ConfigurationError):
            redundancy_scan(random_state(lay, np.random.default_rng(0)), [2])

    def test_sampling_seeded(self):
        lay = SpaceLayout([2] * 9 + [2])
        psi = random_state(lay, np.random.default_rng(1))
        a = redundancy_scan(psi, [3], n_samples=5, seed=4)
        b = redundancy_scan(psi, [3], n_samples=5, seed=4)
        assert a.mean_information == b.mean_information


@pytest.fixture(scope="module")
def wells():
    p = default_params(0)
    return p, wells_for(p)


class TestWellBasis:
    def test_parity(self, wells):
        p, w = wells
        np.testing.assert_allclose(np.abs(w.left_state), np.abs(w.right_state[::-1]), atol=1e-10)
        assert w.overlap < 1e-10

    def test_left_sits_in_left_well(self, wells):
        p, w = wells
        x = p.grid().nodes
        x_left = np.vdot(w.left_state, x * w.left_state).real
        assert x_left < 0
        assert abs(x_left + 1.25) < 0.15

    def test_unresolved_doublet_warns(self):
        from unilab.hamiltonian import observer_hamiltonian
        p = default_params(0, mass=1.0)
        with pytest.warns(RuntimeWarning):
            well_basis_from_hamiltonian(observer_hamiltonian(p), p.grid().nodes)


class TestObserverStatistics:
    def setup_method(self):
        self.x = np.array([-1.5, -0.5, 0.5, 1.5])
        left = np.array([1, 1, 0, 0]) / np.sqrt(2)
        right = np.array([0, 0, 1, 1]) / np.sqrt(2)
        self.wells = WellBasis(left.astype(complex), right.astype(complex), 0.0)
        self.lay = SpaceLayout([2, 2, 4])

    def test_all_left(self):
        v = np.kron(np.kron([1, 0], [1, 0]), self.wells.left_state)
        rep = observer_statistics(StateVector(v, self.lay), self.x, self.wells)
        assert rep.p_left == pytest.approx(1.0)
        assert rep.p_right == pytest.approx(0.0)
        assert rep.coherence == pytest.approx(0.0)
        assert rep.observer_purity == pytest.approx(1.0)
        assert rep.mean_x == pytest.approx(-1.0)
        assert rep.outcome == "left"

    def test_entangled_branches(self):
        v = (np.kron(np.kron([1, 0], [1, 0]), self.wells.left_state)
             + np.kron(np.kron([0, 1], [1, 0]), self.wells.right_state)) / np.sqrt(2)
        rep = observer_statistics(StateVector(v, self.lay), self.x, self.wells)
        assert rep.p_left == pytest.approx(0.5)
        assert rep.coherence == pytest.approx(0.0, abs=1e-15)
        assert rep.qubit_purity == pytest.approx(0.5)
        assert rep.observer_purity == pytest.approx(0.5)
        assert rep.winning_population == pytest.approx(0.5)


class TestStability:
    def test_constant(self):
        t = np.linspace(0, 10, 101)
        assert stability_metric(t, np.full_like(t, 0.3)) == 0.0

    def test_sinusoid(self):
        amp = 0.4
        t = np.linspace(0, 40, 4001)
        # the run ends on a trough, so the excursion from the final value is the full swing
        x = amp * np.sin(2 * np.pi * t / 2.0 - np.pi / 2)
        assert stability_metric(t, x) == pytest.approx(2 * amp, abs=0.01)

    def test_sparse_window_warns(self):
        with pytest.warns(RuntimeWarning):
            stability_metric([0, 1, 2, 3], [0, 0, 0, 0])

    def test_empty(self):
        with pytest.raises(ConfigurationError):
            stability_metric([], [])


def test_ready_state_is_normalized_and_centered():
    p = default_params(0)
    psi = ready_state(p)
    x = p.grid().nodes
    assert abs(np.linalg.norm(psi) - 1) < 1e-14
    assert abs(np.dot(x, np.abs(psi) ** 2)) < 1e-12
