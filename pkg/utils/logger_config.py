import logging
import logging.config

from tqdm import tqdm

try:
    import colorlog  # noqa: F401
    COLORLOG_AVAILABLE = True
except ImportError:
    COLORLOG_AVAILABLE = False

LOGGING_NAME = "InpaintBench"
LOG_FORMAT = "%(asctime)s | %(levelname)s | %(module)s:%(lineno)d | %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
LOG_COLORS = {
    "DEBUG": "cyan",
    "INFO": "green",
    "WARNING": "yellow",
    "ERROR": "red",
    "CRITICAL": "bold_red",
}


class TqdmHandler(logging.StreamHandler):
    """Console handler that prints through tqdm.write so progress bars stay on one line."""

    def emit(self, record):
        try:
            tqdm.write(self.format(record), file=self.stream)
            self.flush()
        except Exception:
            self.handleError(record)


def _formatter(color: bool) -> dict:
    if not color:
        return {"format": LOG_FORMAT, "datefmt": DATE_FORMAT}
    return {
        "()": "colorlog.ColoredFormatter",
        "format": "%(log_color)s" + LOG_FORMAT,
        "datefmt": DATE_FORMAT,
        "log_colors": LOG_COLORS,
    }


def set_logging(name=LOGGING_NAME, verbose=True, debug=False):
    # --verbose -> DEBUG, default -> INFO, --quiet -> WARNING
    level = logging.DEBUG if debug else (logging.INFO if verbose else logging.WARNING)
    formatter = "color" if COLORLOG_AVAILABLE else "plain"

    # stderr only; nothing is logged into output trees
    logging.config.dictConfig({
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {formatter: _formatter(COLORLOG_AVAILABLE)},
        "handlers": {
            "console": {
                "()": TqdmHandler,
                "level": level,
                "formatter": formatter,
            }
        },
        "loggers": {
            name: {
                "handlers": ["console"],
                "level": level,
                "propagate": False,
            }
        },
    })
    return logging.getLogger(name)


LOGGER = set_logging(verbose=True)
