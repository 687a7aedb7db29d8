import numpy as np
import pytest

from unilab.errors import ConfigurationError
from unilab.experiments import (
    PROTOCOLS,
    Protocol,
    classicality_criteria,
    convergence_suite,
    prepare_initial_state,
    preset,
    qubit_populations,
    run_full_model,
    run_protocol,
    seed_sweep,
)
from unilab.tensorspace import partial_trace


@pytest.fixture(scope="module")
def isolation_pair():
    up = run_protocol(preset("isolation", qubit_init=(1.0, 0.0)))
    down = run_protocol(preset("isolation", qubit_init=(0.0, 1.0)))
    return up, down


@pytest.fixture(scope="module")
def superposition():
    return run_protocol(preset("superposition"))


@pytest.fixture(scope="module")
def decoherence():
    return run_protocol(preset("decoherence_only", n_env=4))


def test_protocol_names():
    assert set(PROTOCOLS) == {"isolation", "superposition", "decoherence_only", "full_model", "redundancy"}
    with pytest.raises(ConfigurationError):
        preset("nonsense")


def test_unnormalized_qubit_rejected():
    with pytest.raises(ConfigurationError):
        preset("isolation", qubit_init=(1.0, 1.0))


def test_masks():
    assert preset("isolation").term_mask == {"Q", "E", "O", "QO"}
    assert preset("superposition").term_mask == {"Q", "E", "O", "QO", "EO"}
    assert preset("decoherence_only").term_mask == {"Q", "E", "O", "QE", "QO"}
    assert preset("full_model").term_mask == {"Q", "E", "O", "QE", "QO", "EO"}


class TestInitialState:
    def test_product_structure(self):
        proto = preset("full_model")
        psi = prepare_initial_state(proto)
        assert psi.layout.total_dim == 2 * 2 ** 8 * 128
        assert abs(psi.norm() - 1) < 1e-12
        assert abs(np.trace(np.linalg.matrix_power(partial_trace(psi, [0]).entries, 2)) - 1) < 1e-12
        np.testing.assert_allclose(qubit_populations(psi), [0.5, 0.5], atol=1e-12)

    def test_observer_centered(self):
        proto = preset("isolation")
        psi = prepare_initial_state(proto)
        x = proto.params.grid().nodes
        dist = np.diag(partial_trace(psi, [psi.layout.observer]).entries).real
        assert abs(np.dot(x, dist)) < 1e-12

    def test_env_seed_changes_bath_only(self):
        a = prepare_initial_state(preset("isolation", 1))
        b = prepare_initial_state(preset("isolation", 2))
        assert not np.allclose(a.amplitudes, b.amplitudes)
        np.testing.assert_allclose(partial_trace(a, [0]).entries, partial_trace(b, [0]).entries, atol=1e-14)

    def test_truncated_gaussian_rejected(self):
        with pytest.raises(ConfigurationError):
            prepare_initial_state(preset("isolation", params={"mass": 1e-4, "grid_half_width": 2.0}))


class TestControls:
    def test_isolation_bifurcates(self, isolation_pair):
        up, down = isolation_pair
        assert up.trailing_mean_x(0.25) < -0.5
        assert down.trailing_mean_x(0.25) > 0.5

    def test_isolation_qubit_stays_pure(self, isolation_pair):
        up, _ = isolation_pair
        assert min(up.qubit_purity_series) > 1 - 1e-10

    def test_superposition_delocalized(self, superposition):
        rec = superposition
        assert abs(rec.trailing_mean_x(0.5)) < 0.25
        assert max(max(rec.p_left_series), max(rec.p_right_series)) <= 0.8
        assert abs(np.mean(rec.mean_x_series)) < 0.1

    def test_decoherence_without_definiteness(self, decoherence):
        rec = decoherence
        assert abs(rec.qubit_purity_series[-1] - 0.5) <= 0.05
        t = np.asarray(rec.times)
        sel = t >= 0.75 * t[-1]
        assert np.max(np.abs(np.asarray(rec.mean_x_series)[sel])) < 0.5

    @pytest.mark.parametrize("name", ["isolation_pair", "superposition", "decoherence"])
    def test_sigma_z_populations_constant(self, name, request):
        rec = request.getfixturevalue(name)
        recs = rec if isinstance(rec, tuple) else (rec,)
        for r in recs:
            assert r.drift("sigma_z_series") < 1e-10
            assert r.drift("norm_series") < 1e-9
            assert r.drift("energy_series") / abs(r.energy_series[0]) < 1e-8


def test_mirror_symmetry():
    kw = dict(prop={"t_final": 3.0, "record_stride": 10})
    up = run_protocol(preset("isolation", qubit_init=(1.0, 0.0), **kw))
    down = run_protocol(preset("isolation", qubit_init=(0.0, 1.0), **kw))
    np.testing.assert_allclose(up.mean_x_series, -np.asarray(down.mean_x_series), atol=1e-6)
    np.testing.assert_allclose(up.p_left_series, down.p_right_series, atol=1e-6)


def test_determinism():
    kw = dict(prop={"t_final": 1.0})
    a = run_protocol(preset("decoherence_only", 3, **kw))
    b = run_protocol(preset("decoherence_only", 3, **kw))
    assert a.mean_x_series == b.mean_x_series
    np.testing.assert_array_equal(a.final_state.amplitudes, b.final_state.amplitudes)
    assert a.provenance["param_hash"] == b.provenance["param_hash"]


def test_resume_matches_uninterrupted():
    proto = preset("superposition", prop={"t_final": 1.0, "record_stride": 10})
    full = run_protocol(proto)
    saved = {}

    def grab(step, t, psi, values):
        if step == 50:
            saved["psi"] = psi.copy()

    run_protocol(proto, on_snapshot=grab)
    resumed = run_protocol(proto, initial_state=saved["psi"], start_step=50)
    np.testing.assert_array_equal(resumed.final_state.amplitudes, full.final_state.amplitudes)
    assert resumed.times == full.times[5:]
    assert resumed.mean_x_series == full.mean_x_series[5:]


def test_full_model_requirements():
    with pytest.raises(ConfigurationError):
        run_full_model(preset("full_model", n_env=4))
    with pytest.raises(ConfigurationError):
        run_full_model(preset("superposition", n_env=8))


@pytest.mark.slow
@pytest.mark.parametrize("axis", ["zz", "zx"])
def test_full_model_conserves_sigma_z(axis):
    proto = preset("full_model", params={"qe_axis": axis}, prop={"t_final": 0.5, "record_stride": 1}).replace(
        fragment_sizes=(1,), fragment_samples=2)
    rec = run_protocol(proto)
    assert rec.drift("sigma_z_series") < 1e-10
    assert rec.drift("norm_series") < 1e-9
    crit = classicality_criteria(rec)
    assert [c.name for c in crit] == ["qubit_purity", "winning_well_population", "interwell_coherence",
                                      "observer_purity", "stability_metric", "mean_x_to_tilted_minimum"]


@pytest.mark.slow
def test_seed_sweep_reports_outcomes():
    base = preset("full_model", n_env=8, prop={"t_final": 0.2}).replace(fragment_sizes=(1,), fragment_samples=1)
    out = seed_sweep([1, 2], base)
    assert set(out) == {1, 2}
    assert set(out.values()) <= {"left", "right"}


def test_convergence_suite_small():
    rep = convergence_suite(include_grid=False)
    assert rep["krylov_vs_dense"]["fidelity"] > 1 - 1e-9
    deficits = [r["fidelity_deficit"] for r in rep["dt_convergence"]["runs"]]
    assert max(deficits) < 1e-9


@pytest.mark.slow
def test_grid_refinement():
    rep = convergence_suite(include_grid=True)
    # grid refinement shifts the final <x> by much less than the well separation
    assert rep["grid_refinement"]["difference"] < 0.05


def test_protocol_dict_roundtrip():
    p = preset("redundancy")
    d = p.to_dict()
    assert d["name"] == "redundancy" and d["params"]["mass"] == p.params.mass
    assert isinstance(p.param_hash(), str) and len(p.param_hash()) == 64
    assert isinstance(p, Protocol)
