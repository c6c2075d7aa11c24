"""
Paths for writable data (config, logs) and the per-module file loggers.
Data lives next to the code unless RD_DATA_DIR points somewhere else, so a
read-only install can still write its logs.
"""
import logging
import os

APP_NAME = "ResonatorDetection"
DATA_DIR_ENV = "RD_DATA_DIR"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"


def get_data_dir_override() -> str:
    """Writable directory from RD_DATA_DIR, created on demand; '' when unset."""
    path = (os.environ.get(DATA_DIR_ENV) or "").strip()
    if not path:
        return ""
    path = os.path.abspath(os.path.expanduser(path))
    os.makedirs(path, exist_ok=True)
    return path


def get_project_root_for_data(__file__: str) -> str:
    """
    Root directory for writable data (config.json, logs/).
    Pass the caller's __file__; RD_DATA_DIR wins when set.
    """
    override = get_data_dir_override()
    if override:
        return override
    return os.path.dirname(os.path.abspath(__file__))


def get_logger(name: str) -> logging.Logger:
    """
    Named logger with one file handler at <data root>/logs/<name>.log.
    Falls back to handler-less logging when the directory is not writable.
    """
    log = logging.getLogger(name)
    if getattr(log, "_rd_configured", False):
        return log
    log.setLevel(logging.INFO)
    try:
        log_dir = os.path.join(get_project_root_for_data(__file__), "logs")
        os.makedirs(log_dir, exist_ok=True)
        handler = logging.FileHandler(os.path.join(log_dir, name + ".log"), encoding="utf-8", delay=True)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        log.addHandler(handler)
    except Exception:
        pass  # no file logging
    log._rd_configured = True
    return log
