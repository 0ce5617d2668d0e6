"""
Progress Tracker

Phase-based progress reporting for the fuzz and convergence harnesses.
Everything goes through logging on stderr; nothing is ever written to stdout,
so reports stay byte-stable.
"""

import logging
import threading
import time
from typing import Any, Dict, List, Optional

from .logging_config import is_quiet_mode


class ProgressTracker:
    """
    Tracks an operation made of weighted phases.

    Silent in quiet mode. Otherwise phase starts are logged at DEBUG and
    completed operations at INFO with their duration.
    """

    def __init__(self):
        self.logger = logging.getLogger(__name__)
        self._lock = threading.Lock()

        self.operation_description = ""
        self.operation_start_time: Optional[float] = None
        self.total_phases = 0
        self.completed_phases = 0

        self.current_phase: Optional[str] = None
        self.phase_start_time: Optional[float] = None
        self.phase_progress = 0.0
        self.phase_durations: Dict[str, float] = {}
        self.failures: List[str] = []

    def start_operation(self, description: str, total_phases: int = 1) -> None:
        """
        Start a new operation.

        Args:
            description: Description of the operation
            total_phases: Number of phases it will run
        """
        with self._lock:
            self.operation_description = description
            self.operation_start_time = time.time()
            self.total_phases = max(total_phases, 1)
            self.completed_phases = 0
            self.current_phase = None
            self.phase_durations = {}
            self.failures = []

    def start_phase(self, description: str) -> None:
        with self._lock:
            if self.current_phase is not None:
                self._close_phase()
            self.current_phase = description
            self.phase_start_time = time.time()
            self.phase_progress = 0.0
            if not is_quiet_mode():
                self.logger.debug(f"Started phase: {description}")

    def update_progress(self, done: int, total: int) -> None:
        with self._lock:
            self.phase_progress = 1.0 if total <= 0 else min(1.0, done / total)

    def complete_phase(self) -> None:
        with self._lock:
            if self.current_phase is not None:
                self._close_phase()

    def report_failure(self, message: str) -> None:
        """Failures are always logged, quiet mode or not."""
        with self._lock:
            self.failures.append(message)
        self.logger.error(f"{self.operation_description}: {message}")

    def complete_operation(self) -> float:
        """Finish the operation and return its duration in seconds."""
        with self._lock:
            if self.current_phase is not None:
                self._close_phase()
            duration = 0.0
            if self.operation_start_time is not None:
                duration = time.time() - self.operation_start_time
            if not is_quiet_mode():
                self.logger.info(f"{self.operation_description} finished in "
                                 f"{self._format_duration(duration)}")
            self.operation_start_time = None
            return duration

    def get_status(self) -> Dict[str, Any]:
        with self._lock:
            overall = (self.completed_phases + (self.phase_progress if self.current_phase else 0.0))
            return {
                'operation_description': self.operation_description,
                'current_phase': self.current_phase,
                'phase_progress': self.phase_progress,
                'overall_progress': min(1.0, overall / self.total_phases) if self.total_phases else 0.0,
                'completed_phases': self.completed_phases,
                'total_phases': self.total_phases,
                'failures': len(self.failures),
            }

    def _close_phase(self) -> None:
        if self.phase_start_time is not None:
            self.phase_durations[self.current_phase] = time.time() - self.phase_start_time
        if not is_quiet_mode():
            self.logger.debug(f"Completed phase: {self.current_phase}")
        self.completed_phases += 1
        self.current_phase = None
        self.phase_progress = 0.0

    @staticmethod
    def _format_duration(seconds: float) -> str:
        if seconds < 60:
            return f"{seconds:.1f}s"
        minutes = int(seconds // 60)
        return f"{minutes}m {int(seconds % 60)}s"
