#!/usr/bin/env python3
"""
Operation log for OLAT Relight

One line per command, appended to a dated file, kept apart from the console
output of the library loggers.
"""

import os
import logging
from datetime import datetime
from typing import Dict, Optional

OPERATIONS = ("PROBE", "PROJECT", "RELIGHT", "GAMMA_FIT", "SYNTH", "ESTIMATE", "SIMULATE", "LOSS")


class RelightLogger:
    """
    Appends SUCCESS/FAILURE records of CLI operations to olat_relight_YYYY-MM-DD.log
    """

    def __init__(self, log_dir: Optional[str] = None):
        """
        Initialize the logger

        Args:
            log_dir: Directory to store log files. If None, logs to
                $OLAT_RELIGHT_HOME/logs or ~/.olat_relight/logs
        """
        if not log_dir:
            home = os.environ.get("OLAT_RELIGHT_HOME") or os.path.expanduser("~/.olat_relight")
            log_dir = os.path.join(home, "logs")
        os.makedirs(log_dir, exist_ok=True)

        timestamp = datetime.now().strftime("%Y-%m-%d")
        self.log_file = os.path.abspath(os.path.join(log_dir, f"olat_relight_{timestamp}.log"))

        self.logger = logging.getLogger("olat_relight.operations")
        self.logger.setLevel(logging.INFO)
        self.logger.propagate = False

        attached = False
        for handler in list(self.logger.handlers):
            if not isinstance(handler, logging.FileHandler):
                continue
            if handler.baseFilename == self.log_file:
                attached = True
            else:
                # one log file per process
                self.logger.removeHandler(handler)
                handler.close()
        if not attached:
            file_handler = logging.FileHandler(self.log_file)
            file_handler.setLevel(logging.INFO)
            file_handler.setFormatter(logging.Formatter(
                "%(asctime)s - %(levelname)s - %(message)s",
                datefmt="%Y-%m-%d %H:%M:%S"
            ))
            self.logger.addHandler(file_handler)

    def log_operation(self, operation: str, target: Optional[str] = None, success: bool = True, details: Optional[str] = None):
        """
        Log an operation

        Args:
            operation: One of OPERATIONS
            target: Main input or output of the operation
            success: Whether the operation was successful
            details: Additional details
        """
        status = "SUCCESS" if success else "FAILURE"

        message = f"{operation} - {status}"
        if target:
            message += f" - Target: {target}"
        if details:
            message += f" - Details: {details}"

        if success:
            self.logger.info(message)
        else:
            self.logger.error(message)

    def log_estimate(self, frames: int, method: str, success: bool, details: Optional[str] = None):
        """
        Log an estimation run

        Args:
            frames: Number of frames
            method: Estimator name
            success: Whether every frame was estimated
            details: Additional details
        """
        summary = f"Frames: {frames}, Method: {method}"
        if details:
            summary += f", {details}"
        self.log_operation("ESTIMATE", None, success, summary)

    def log_values(self, operation: str, target: Optional[str], values: Dict[str, float]):
        """
        Log a successful operation that produced named scalar results

        Args:
            operation: One of OPERATIONS
            target: Main input of the operation
            values: Results, e.g. fitted exponents or losses
        """
        details = ", ".join(f"{name}: {value:.6g}" for name, value in values.items())
        self.log_operation(operation, target, True, details)


def get_logger(log_dir: Optional[str] = None) -> RelightLogger:
    """
    Get an operation logger

    Args:
        log_dir: Directory to store log files

    Returns:
        Logger instance
    """
    return RelightLogger(log_dir)
