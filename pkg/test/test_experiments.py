import numpy as np
import pytest

from app.errors import ConfigError, FileAccessError, GammaBoundError
from app.models import DelayKind, ScenarioConfig
from app.services.experiment_service import ExperimentService, initial_values
from app.utils.metrics import consensus_error, iterations_to_tolerance


@pytest.fixture
def service():
    return ExperimentService(max_workers=1)


def _config(fig1_path, **kwargs):
    values = dict(graph=fig1_path, delay_kind=DelayKind.UNIFORM, tau_bar=2, gamma=0.1, iters=300, runs=1, seed=0)
    values.update(kwargs)
    return ScenarioConfig(**values)


@pytest.mark.parametrize(
    "x,average,expected",
    [
        (np.full(4, 2.5), 2.5, 0.0),
        (np.arange(1, 11, dtype=float), 5.5, 8.25),
        (np.array([0.0, 2.0]), 1.0, 1.0),
    ],
)
def test_consensus_error(x, average, expected):
    """Test consensus error against the average"""
    assert consensus_error(x, average) == pytest.approx(expected)


def test_iterations_to_tolerance():
    """Test first iteration under tolerance"""
    assert iterations_to_tolerance(np.array([1.0, 0.1, 1e-7, 1e-8]), 1e-6) == 2
    assert iterations_to_tolerance(np.array([1.0, 0.5]), 1e-6) is None


def test_initial_values_modes(tmp_path):
    """Test initial value modes"""
    np.testing.assert_array_equal(initial_values("index", 3), [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(initial_values("const:2.5", 3), [2.5, 2.5, 2.5])

    path = tmp_path / "x0.txt"
    path.write_text("4 5\n6\n")
    np.testing.assert_array_equal(initial_values(f"file:{path}", 3), [4.0, 5.0, 6.0])

    drawn = initial_values("random", 5, seed=3)
    assert drawn.shape == (5,)
    assert ((drawn >= 0) & (drawn < 5)).all()
    np.testing.assert_array_equal(drawn, initial_values("random", 5, seed=3))


def test_initial_values_file_errors(tmp_path):
    """Test initial value file errors"""
    path = tmp_path / "x0.txt"
    path.write_text("1 2\n")
    with pytest.raises(ConfigError):
        initial_values(f"file:{path}", 3)
    with pytest.raises(FileAccessError):
        initial_values(f"file:{tmp_path / 'missing.txt'}", 3)


def test_scenario_config_rejects_bad_init():
    """Test scenario init validation"""
    with pytest.raises(ValueError):
        ScenarioConfig(init="ones")
    with pytest.raises(ValueError):
        ScenarioConfig(init="const:.")
    assert ScenarioConfig(init="const:-1.5e-3").init == "const:-1.5e-3"


def test_constant_init_must_be_numeric():
    """Test a non-numeric constant reaching initial_values"""
    with pytest.raises(ConfigError):
        initial_values("const:abc", 3)


def test_scenario_seed_range():
    """Test run i of a batch uses seed + i, which must stay below 2**64"""
    assert ScenarioConfig(seed=2**64 - 1, runs=1).seed == 2**64 - 1
    with pytest.raises(ValueError):
        ScenarioConfig(seed=2**64 - 1, runs=2)
    with pytest.raises(ValueError):
        ScenarioConfig(seed=2**64)


def test_scenario_merge_prefers_flags():
    """Test flags override scenario file values"""
    cfg = ScenarioConfig.merged({"gamma": "0.2", "tau_bar": "2"}, gamma=0.05, tau_bar=None)
    assert cfg.gamma == 0.05
    assert cfg.tau_bar == 2


def test_run_scenario_converges(service, fig1_path):
    """Test single run converges to the average"""
    result = service.run_scenario(_config(fig1_path))
    assert result.trajectory.error[-1] < 1e-3
    assert result.curve.mean_error.shape == (301,)
    assert (result.curve.mean_error >= 0).all()


def test_run_scenario_zero_horizon(service, fig1_path):
    """Test a run with no iterations"""
    result = service.run_scenario(_config(fig1_path, iters=0))
    np.testing.assert_allclose(result.curve.mean_error, [8.25])


def test_constant_init_has_no_error(service, fig1_path):
    """Test equal initial values stay put"""
    result = service.run_scenario(_config(fig1_path, init="const:3", iters=50))
    np.testing.assert_allclose(result.curve.mean_error, 0.0, atol=1e-24)


def test_run_scenario_is_deterministic(service, fig1_path):
    """Test the same seed repeats the run"""
    a = service.run_scenario(_config(fig1_path, seed=5, iters=60))
    b = service.run_scenario(_config(fig1_path, seed=5, iters=60))
    np.testing.assert_array_equal(a.trajectory.x, b.trajectory.x)


def test_run_scenario_rejects_large_gamma(service, fig1_path):
    """Test run with gain above the bound"""
    with pytest.raises(GammaBoundError):
        service.run_scenario(_config(fig1_path, gamma=0.5))


def test_single_run_monte_carlo_equals_scenario(service, fig1_path):
    """Test a one-run batch equals the single run"""
    cfg = _config(fig1_path, iters=80, seed=11)
    curve = service.monte_carlo(cfg)
    np.testing.assert_array_equal(curve.mean_error, service.run_scenario(cfg).curve.mean_error)


def test_monte_carlo_is_mean_of_runs(service, fig1_path):
    """Test batch curve is the mean of its runs"""
    cfg = _config(fig1_path, iters=80, runs=6)
    curves = service.run_curves(cfg)
    mean = service.monte_carlo(cfg).mean_error
    np.testing.assert_allclose(mean, sum(curves) / len(curves), atol=1e-12)


def test_parallel_runs_give_same_mean(fig1_path):
    """Test worker count does not change the curve"""
    cfg = _config(fig1_path, iters=60, runs=5)
    serial = ExperimentService(max_workers=1).monte_carlo(cfg).mean_error
    parallel = ExperimentService(max_workers=3).monte_carlo(cfg).mean_error
    np.testing.assert_array_equal(serial, parallel)


def test_progress_callback(service, fig1_path):
    """Test per-run progress callback"""
    seen = []
    service.monte_carlo(_config(fig1_path, iters=10, runs=3), progress=lambda i, err: seen.append(i))
    assert sorted(seen) == [0, 1, 2]


def test_compare_curves_labels(service, fig1_path):
    """Test comparison curve labels"""
    curves = service.compare_curves(_config(fig1_path, iters=20, runs=2), "tau_bar", [0, 2])
    assert list(curves) == ["tau_bar=0", "tau_bar=2"]
    with pytest.raises(ConfigError):
        service.compare_curves(_config(fig1_path), "iters", [1])


def test_trace_kind_needs_file(service, fig1_path):
    """Test trace delays without a trace file"""
    with pytest.raises(ConfigError):
        service.run_scenario(_config(fig1_path, delay_kind=DelayKind.TRACE))


@pytest.mark.slow
def test_error_grows_with_delay_bound(service, fig1_path):
    """Test larger delay bounds converge slower"""
    finals = {}
    for tau_bar in (0, 2, 5):
        curve = service.monte_carlo(_config(fig1_path, tau_bar=tau_bar, runs=100))
        finals[tau_bar] = curve.final
    assert finals[0] < 1e-4
    assert finals[2] < 1e-3
    assert finals[5] < 1e-2
    assert finals[0] <= finals[2] <= finals[5]


@pytest.mark.slow
def test_moderate_gain_converges_fastest(service, fig1_path):
    """Test a moderate gain beats small and large ones"""
    finals = {
        gamma: service.monte_carlo(_config(fig1_path, gamma=gamma, runs=100)).final
        for gamma in (0.01, 0.1, 0.3)
    }
    assert finals[0.1] < finals[0.01]
    assert finals[0.1] < finals[0.3]
