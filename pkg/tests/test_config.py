import pytest

from fillscape.config import LabConfig, get_config, load_config, set_config
from fillscape.errors import (
    ArgumentError,
    ConfigError,
    ConvergenceError,
    FillscapeError,
    NonconvergenceError,
    SolverError,
    SurfaceError,
)
from fillscape.parallel import derived_rng, parallel_map


class TestLabConfig:
    def test_defaults(self):
        cfg = LabConfig()
        assert cfg.tol == 1e-9
        assert cfg.step == 1.0 / 64.0
        assert cfg.starts == 32
        assert cfg.collar == 0.05
        assert cfg.threads >= 1

    def test_with_overrides_ignores_none_and_unknown(self):
        cfg = LabConfig().with_overrides(tol=1e-6, starts=None, colour="blue")
        assert cfg.tol == 1e-6
        assert cfg.starts == 32

    def test_env_overrides(self, monkeypatch):
        monkeypatch.setenv("FILLSCAPE_THREADS", "3")
        monkeypatch.setenv("FILLSCAPE_TOL", "1e-7")
        cfg = load_config()
        assert cfg.threads == 3
        assert cfg.tol == 1e-7

    @pytest.mark.parametrize("value", ["zero", "-2", "0"])
    def test_invalid_env_values_fall_back(self, monkeypatch, value):
        monkeypatch.setenv("FILLSCAPE_STARTS", value)
        assert load_config().starts == 32

    def test_set_and_get(self):
        installed = set_config(LabConfig(threads=1, starts=5))
        assert get_config() is installed
        assert get_config().starts == 5


class TestErrors:
    @pytest.mark.parametrize("exc,code", [
        (ArgumentError, 2),
        (ConfigError, 2),
        (SurfaceError, 2),
        (SolverError, 3),
        (ConvergenceError, 3),
        (NonconvergenceError, 3),
    ])
    def test_exit_codes(self, exc, code):
        assert issubclass(exc, FillscapeError)
        assert exc.exit_code == code

    def test_argument_error_is_value_error(self):
        with pytest.raises(ValueError):
            raise ConfigError("bad key")

    def test_nonconvergence_carries_pair(self):
        err = NonconvergenceError("no start", best_residual=0.5, pair=([0.0, 0.0], [1.0, 0.0]))
        assert err.pair == ([0.0, 0.0], [1.0, 0.0])
        assert err.best_residual == 0.5


class TestParallel:
    @pytest.mark.parametrize("threads", [1, 4])
    def test_order_is_preserved(self, threads):
        assert parallel_map(lambda x: x * x, range(20), threads) == [x * x for x in range(20)]

    def test_derived_rng_is_reproducible(self):
        a = derived_rng(7, 3).normal(size=4)
        b = derived_rng(7, 3).normal(size=4)
        c = derived_rng(7, 4).normal(size=4)
        assert (a == b).all()
        assert not (a == c).all()
