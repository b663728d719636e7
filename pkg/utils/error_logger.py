"""
Error logging for backend elicitation, equilibrium solving and evaluation runs.

Errors are appended as JSON lines to a daily file per component so a long
run can be audited afterwards (rate limits, invalid model answers, games
whose equilibria could not be resolved, games excluded from a comparison).
"""

import datetime
import json
import os
import threading
import time
from collections import defaultdict

from utils import settings


class ErrorTracker:
    """Counts errors and successes per type and writes errors to disk."""

    def __init__(self, log_dir=None):
        self.log_dir = log_dir or settings.LOG_DIR
        self.error_counts = defaultdict(int)
        self.last_error_time = defaultdict(float)
        self.success_counts = defaultdict(int)
        self._lock = threading.Lock()

    def log_error(self, error_type, details, component="backend"):
        """Log an error with details to `{component}_errors_{date}.log`."""
        with self._lock:
            self.error_counts[error_type] += 1
            self.last_error_time[error_type] = time.time()
            count = self.error_counts[error_type]

        now = datetime.datetime.now()
        log_entry = {
            "timestamp": now.strftime("%Y-%m-%d %H:%M:%S"),
            "component": component,
            "error_type": error_type,
            "details": details if isinstance(details, dict) else str(details),
            "count": count,
        }

        os.makedirs(self.log_dir, exist_ok=True)
        log_filename = os.path.join(self.log_dir, f"{component}_errors_{now.strftime('%Y-%m-%d')}.log")
        with self._lock:
            with open(log_filename, "a") as f:
                f.write(json.dumps(log_entry, default=str) + "\n")

        return log_entry

    def log_success(self, operation_type):
        with self._lock:
            self.success_counts[operation_type] += 1

    def get_error_summary(self):
        summary = {
            "total_errors": sum(self.error_counts.values()),
            "error_types": dict(self.error_counts),
            "success_counts": dict(self.success_counts),
        }
        current_time = time.time()
        summary["time_since_last_error"] = {
            error_type: round(current_time - last_time, 2)
            for error_type, last_time in self.last_error_time.items()
            if last_time > 0
        }
        return summary

    def should_continue(self, error_type, threshold=5, window_seconds=300):
        """
        False once `threshold` errors of `error_type` arrived with the last
        one inside `window_seconds`; elicitation stops issuing draws then.
        A quiet window resets the count.
        """
        if self.error_counts.get(error_type, 0) < threshold:
            return True

        if time.time() - self.last_error_time[error_type] > window_seconds:
            with self._lock:
                self.error_counts[error_type] = 0
            return True

        return False


error_tracker = ErrorTracker()


def get_error_tracker():
    """Get the process-wide error tracker."""
    return error_tracker
