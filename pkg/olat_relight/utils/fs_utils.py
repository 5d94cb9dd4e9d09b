#!/usr/bin/env python3
"""
Filesystem and job-count utilities for OLAT Relight
"""

import os
import tempfile
import logging
from typing import Optional, Union

logger = logging.getLogger(__name__)

JOBS_ENV_VAR = "OLAT_RELIGHT_JOBS"

PathLike = Union[str, "os.PathLike[str]"]


def atomic_write_bytes(path: PathLike, payload: bytes) -> None:
    """
    Write a file atomically (temporary file in the same directory + rename)

    Args:
        path: Destination path. Its parent directory must exist.
        payload: File content
    """
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def atomic_write_text(path: PathLike, text: str) -> None:
    """
    Write a UTF-8 text file atomically

    Args:
        path: Destination path
        text: File content
    """
    atomic_write_bytes(path, text.encode("utf-8"))


def ensure_directory(path: PathLike) -> str:
    """
    Create a directory (and parents) if it does not exist yet

    Args:
        path: Directory path

    Returns:
        The directory path as a string
    """
    path = os.fspath(path)
    if not os.path.isdir(path):
        logger.debug(f"Creating directory {path}")
        os.makedirs(path, exist_ok=True)
    return path


def resolve_jobs(flag: Optional[int] = None, configured: Optional[int] = None) -> int:
    """
    Resolve the worker count for batch commands

    Precedence: explicit flag, then the OLAT_RELIGHT_JOBS environment variable,
    then the configured value, then the CPU count.

    Args:
        flag: Value of --jobs, if given
        configured: Value of the `jobs` config key, if set

    Returns:
        Number of workers (at least 1)
    """
    if flag is not None:
        return max(1, int(flag))

    env_value = os.environ.get(JOBS_ENV_VAR)
    if env_value:
        try:
            return max(1, int(env_value))
        except ValueError:
            logger.warning(f"Ignoring invalid {JOBS_ENV_VAR}={env_value!r}")

    if configured is not None:
        return max(1, int(configured))

    return os.cpu_count() or 1
