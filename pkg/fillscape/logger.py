"""Two-channel logging: run summaries on stdout, solver chatter on stderr."""

import logging
import sys
from contextlib import contextmanager
from typing import Iterator, Optional

TIMESTAMP = '%Y-%m-%d %H:%M:%S'


class _RunTag(logging.Filter):
    """Prefixes stderr records with the active run name."""

    def __init__(self):
        super().__init__()
        self.run: Optional[str] = None

    def filter(self, record: logging.LogRecord) -> bool:
        record.run = f"[{self.run}] " if self.run else ""
        return True


class FillscapeLogger:
    """Routes run summaries to stdout and solver progress to stderr."""

    def __init__(self, verbose: bool = False):
        self.verbose = verbose
        self._tag = _RunTag()
        self.info_logger = self._channel('fillscape.info', sys.stdout, logging.INFO, '%(message)s')
        solver_level = logging.DEBUG if verbose else logging.WARNING
        self.debug_logger = self._channel('fillscape.solver', sys.stderr, solver_level,
                                          '[%(levelname)s] %(run)s%(message)s' if verbose else '%(run)s%(message)s')
        self.debug_logger.addFilter(self._tag)

    def _channel(self, name: str, stream, level: int, fmt: str) -> logging.Logger:
        channel = logging.getLogger(name)
        channel.setLevel(level)
        channel.handlers.clear()
        channel.filters.clear()
        handler = logging.StreamHandler(stream)
        handler.setLevel(level)
        if self.verbose:
            handler.setFormatter(logging.Formatter('%(asctime)s ' + fmt, datefmt=TIMESTAMP))
        else:
            handler.setFormatter(logging.Formatter(fmt))
        channel.addHandler(handler)
        channel.propagate = False
        return channel

    @contextmanager
    def run_scope(self, run_name: str) -> Iterator[None]:
        """Tag stderr messages with ``run_name`` for the duration of one experiment."""
        previous, self._tag.run = self._tag.run, run_name
        try:
            yield
        finally:
            self._tag.run = previous

    @property
    def current_run(self) -> Optional[str]:
        return self._tag.run

    def info(self, message: str):
        """Run summaries and verdicts."""
        self.info_logger.info(message)

    def debug(self, message: str):
        """Solver progress, shown only with --verbose."""
        self.debug_logger.debug(message)

    def warning(self, message: str):
        self.debug_logger.warning(message)

    def error(self, message: str):
        self.debug_logger.error(message)


# set by the CLI; library callers get a quiet instance on first use
logger: Optional[FillscapeLogger] = None


def get_logger() -> FillscapeLogger:
    global logger
    if logger is None:
        logger = FillscapeLogger(verbose=False)
    return logger


def init_logger(verbose: bool = False) -> FillscapeLogger:
    """Replace the global logger, rebinding handlers to the current streams."""
    global logger
    logger = FillscapeLogger(verbose)
    return logger
