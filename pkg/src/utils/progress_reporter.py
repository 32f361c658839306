"""
Progress Reporting Utilities

Consistent progress logging for the long loops of the pipeline:
optimizer steps, reverse-time substeps, verification suites and
rate-study sizes.
"""

import logging
import time
from contextlib import contextmanager
from datetime import timedelta
from typing import Dict, Generator, Optional


class ProgressReporter:
    """
    Periodic progress logging with elapsed time, ETA and running values.

    Example:
        reporter = ProgressReporter("Interval 3", total=2000, report_interval=200)

        for step in range(2000):
            loss = train_step()
            reporter.update(step + 1, loss=loss)

        reporter.complete()
    """

    def __init__(
        self,
        task_name: str,
        total: Optional[int] = None,
        logger: Optional[logging.Logger] = None,
        report_interval: int = 10
    ):
        """
        Initialize progress reporter.

        Args:
            task_name: Name of the task being reported
            total: Total number of items (None if unknown)
            logger: Logger instance (module logger if None)
            report_interval: Report every N items
        """
        self.task_name = task_name
        self.total = total
        self.logger = logger or logging.getLogger(__name__)
        self.report_interval = max(1, int(report_interval))

        self.current = 0
        self.start_time = time.perf_counter()

    def update(self, current: Optional[int] = None, **values: float) -> None:
        """
        Advance the counter and log at the reporting interval.

        Args:
            current: Current item number (increments by 1 if None)
            **values: Running quantities shown next to the counter (loss=..., w1=...)
        """
        self.current = self.current + 1 if current is None else current

        if self.current % self.report_interval == 0 or self.current == self.total:
            self._report(values)

    def _report(self, values: Dict[str, float]) -> None:
        elapsed = time.perf_counter() - self.start_time

        if self.total:
            percentage = 100.0 * self.current / self.total
            progress = f"{self.current}/{self.total} ({percentage:.1f}%)"
            rate = self.current / elapsed if elapsed > 0 else 0.0
            eta = (self.total - self.current) / rate if rate > 0 else 0.0
            timing = f" | Elapsed: {self.format_seconds(elapsed)} | ETA: {self.format_seconds(eta)}"
        else:
            progress = str(self.current)
            timing = f" | Elapsed: {self.format_seconds(elapsed)}"

        extra = " | ".join(f"{k}={v:.4g}" for k, v in values.items())
        message = f"  Progress [{self.task_name}]: {progress}{timing}"
        if extra:
            message += f" | {extra}"
        self.logger.info(message)

    def complete(self, final_message: str = "") -> float:
        """
        Log completion and return elapsed seconds.

        Args:
            final_message: Optional completion message
        """
        elapsed = time.perf_counter() - self.start_time
        if self.total and self.current != self.total:
            self.logger.warning(
                f"Task '{self.task_name}' stopped at {self.current}/{self.total}"
            )
        message = f"✓ {self.task_name} completed: {self.current} items in {self.format_seconds(elapsed)}"
        if final_message:
            message += f" | {final_message}"
        self.logger.info(message)
        return elapsed

    def error(self, error_message: str) -> None:
        """Log a task failure."""
        elapsed = time.perf_counter() - self.start_time
        self.logger.error(
            f"✗ {self.task_name} failed after {self.format_seconds(elapsed)}: {error_message}"
        )

    @staticmethod
    def format_seconds(seconds: float) -> str:
        """Format a duration as 12s / 3m 4s / 1h 2m."""
        total_seconds = int(timedelta(seconds=seconds).total_seconds())
        if total_seconds < 60:
            return f"{total_seconds}s"
        if total_seconds < 3600:
            return f"{total_seconds // 60}m {total_seconds % 60}s"
        return f"{total_seconds // 3600}h {(total_seconds % 3600) // 60}m"


@contextmanager
def timed_stage(name: str, logger: Optional[logging.Logger] = None) -> Generator[Dict[str, float], None, None]:
    """
    Context manager logging start, end and duration of a pipeline stage.

    Yields:
        Dict that receives "seconds" on exit

    Example:
        with timed_stage("sampling") as timing:
            samples = generate(cfg, score)
        print(timing["seconds"])
    """
    logger = logger or logging.getLogger(__name__)
    timing: Dict[str, float] = {}
    logger.info(f"→ {name} ...")
    start = time.perf_counter()
    try:
        yield timing
    except Exception:
        timing["seconds"] = time.perf_counter() - start
        logger.error(f"✗ {name} failed after {timing['seconds']:.2f}s", exc_info=True)
        raise
    timing["seconds"] = time.perf_counter() - start
    logger.info(f"✓ {name} done in {timing['seconds']:.2f}s")


def report_section(title: str, logger: Optional[logging.Logger] = None) -> None:
    """Log a section header."""
    logger = logger or logging.getLogger(__name__)
    logger.info("")
    logger.info("=" * 70)
    logger.info(title.center(70))
    logger.info("=" * 70)


def report_subsection(title: str, logger: Optional[logging.Logger] = None) -> None:
    """Log a subsection header."""
    logger = logger or logging.getLogger(__name__)
    logger.info("")
    logger.info("-" * 70)
    logger.info(title)
    logger.info("-" * 70)


def report_stats(stats: dict, logger: Optional[logging.Logger] = None) -> None:
    """
    Log a name -> value table.

    Example:
        report_stats({"Intervals": 12, "Weighted error": 0.031})
    """
    logger = logger or logging.getLogger(__name__)
    if not stats:
        return
    width = max(len(str(k)) for k in stats)
    logger.info("")
    for key, value in stats.items():
        shown = f"{value:.6g}" if isinstance(value, float) else value
        logger.info(f"  {str(key).ljust(width)} : {shown}")
