"""
Performance Logger
==================
Tracks execution metrics across sweep points (emulation, training, rank checks).
Writes 2 crash-safe JSON Lines files, linked by session_id.

Log files (all in output_data/<experiment>/performance_logs/):
  log_session.jsonl  - One row per CLI invocation (summary)
  log_points.jsonl   - One row per sweep point x seed x scheme
"""

import json
import os
from datetime import datetime
from typing import Optional


class RunLogger:
    """Collects and logs performance metrics for experiment runs."""

    def __init__(self, log_dir: str):
        """
        Initialize logger with output directory (not a single file path).

        Args:
            log_dir: Directory where both log files will be written.
        """
        self.log_dir = log_dir
        self.session_start = datetime.now()
        self.session_id = self.session_start.strftime("%Y%m%d_%H%M%S")

        # Session-level counters
        self.total_points = 0
        self.ok_points = 0
        self.failed_points = 0
        self.total_point_sec = 0.0
        self.total_iterations = 0

    # ------------------------------------------------------------------
    # Per-point tracking
    # ------------------------------------------------------------------

    def track_point(self, command: str, sweep_value, seed: int, start: datetime, end: datetime, status: str,
                    scheme: Optional[str] = None, iterations: Optional[int] = None,
                    error: Optional[str] = None):
        """Log one sweep point to log_points.jsonl."""
        elapsed = (end - start).total_seconds()
        self.total_points += 1
        self.total_point_sec += elapsed
        if status == "ok":
            self.ok_points += 1
        else:
            self.failed_points += 1
        if iterations:
            self.total_iterations += int(iterations)

        entry = {
            "session_id": self.session_id,
            "command": command,
            "sweep_value": sweep_value,
            "seed": seed,
            "scheme": scheme,
            "start": start.isoformat(),
            "end": end.isoformat(),
            "elapsed_sec": round(elapsed, 4),
            "status": status,
            "iterations": iterations,
            "error": error,
        }
        self._append("log_points.jsonl", entry)

    # ------------------------------------------------------------------
    # Session summary
    # ------------------------------------------------------------------

    def write_log(self, command: str, experiment: str, config_hash: str, threads: int):
        """Write session summary to log_session.jsonl and print console summary."""
        n = self.total_points
        wall = (datetime.now() - self.session_start).total_seconds()

        log_entry = {
            "session_id": self.session_id,
            "timestamp": self.session_start.isoformat(),
            "command": command,
            "experiment": experiment,
            "config_hash": config_hash,
            "threads": threads,
            "total_points": n,
            "ok_points": self.ok_points,
            "failed_points": self.failed_points,
            "timing": {
                "wall_sec": round(wall, 2),
                "total_point_sec": round(self.total_point_sec, 2),
                "avg_point_sec": round(self.total_point_sec / n, 4) if n > 0 else 0.0,
            },
            "total_iterations": self.total_iterations,
        }
        self._append("log_session.jsonl", log_entry)

        session_log_path = os.path.join(self.log_dir, "log_session.jsonl")
        print(f"\n✓ Performance log written: {session_log_path}")
        print(f"  - Session ID:            {self.session_id}")
        print(f"  - Points:                {n} ({self.ok_points} ok / {self.failed_points} failed)")
        print(f"  - Point time:            {self.total_point_sec:.2f}s total  (avg {log_entry['timing']['avg_point_sec']:.2f}s/point)")
        print(f"  - Wall time:             {wall:.2f}s  ({threads} thread(s))")

    # ------------------------------------------------------------------
    # Internal helper
    # ------------------------------------------------------------------

    def _append(self, filename: str, entry: dict):
        """Append one JSON entry to a log file in log_dir."""
        os.makedirs(self.log_dir, exist_ok=True)
        path = os.path.join(self.log_dir, filename)
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps(entry, ensure_ascii=False, default=str) + "\n")
