import pytest

from fillscape.logger import get_logger, init_logger


@pytest.fixture(autouse=True)
def restore_logger():
    """Handlers bind to the streams capsys installs."""
    yield
    init_logger(verbose=False)


def test_channels_route_to_stdout_and_stderr(capsys):
    log = init_logger(verbose=False)
    log.info("verdict")
    log.debug("hidden")
    log.warning("careful")
    out, err = capsys.readouterr()
    assert out == "verdict\n"
    assert err == "careful\n"


def test_verbose_shows_debug(capsys):
    log = init_logger(verbose=True)
    log.debug("step 3")
    err = capsys.readouterr().err
    assert "[DEBUG] step 3" in err


def test_run_scope_tags_stderr_only(capsys):
    log = init_logger(verbose=False)
    with log.run_scope("hemisphere-s0-abc"):
        assert log.current_run == "hemisphere-s0-abc"
        log.warning("discarded")
        log.info("summary")
    log.warning("after")
    out, err = capsys.readouterr()
    assert out == "summary\n"
    assert err == "[hemisphere-s0-abc] discarded\nafter\n"
    assert log.current_run is None


def test_get_logger_returns_global():
    log = init_logger(verbose=False)
    assert get_logger() is log
