import logging
import sys

from core.config import settings

_FORMAT = "%(asctime)s [%(component)s] %(levelname)s %(message)s"


class _ComponentAdapter(logging.LoggerAdapter):
    def process(self, msg, kwargs):
        kwargs.setdefault("extra", {})["component"] = self.extra["component"]
        return msg, kwargs


def get_logger(component: str) -> logging.LoggerAdapter:
    """
    Logger whose records print as "[Component] message".
    The level follows settings.LOG_LEVEL and can be changed at runtime with set_level.
    """
    logger = logging.getLogger(f"microgrid.{component}")
    root = logging.getLogger("microgrid")
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(_FORMAT, datefmt="%H:%M:%S"))
        root.addHandler(handler)
        root.setLevel(settings.LOG_LEVEL.upper())
        root.propagate = False
    return _ComponentAdapter(logger, {"component": component})


def set_level(level: str):
    logging.getLogger("microgrid").setLevel(level.upper())
