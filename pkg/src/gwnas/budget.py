"""Time/energy budget monitor.

Energy is modeled, not measured: the gateway is assumed to draw its peak
power ``w_bar`` for the whole run, so ``energy_wh = elapsed_s * w_bar / 3600``.
The same model produces the per-evaluation energy bound used for cropping.
"""

from __future__ import annotations

import logging
import math
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

log = logging.getLogger(__name__)

TIME_BUDGET = "time_budget"
ENERGY_BUDGET = "energy_budget"

Clock = Callable[[], float]


class FakeClock:
    """Scripted monotonic clock for tests and surrogate runs."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)
        self._lock = threading.Lock()

    def __call__(self) -> float:
        with self._lock:
            return self._now

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("a monotonic clock cannot go backwards")
        with self._lock:
            self._now += seconds

    def set(self, value: float) -> None:
        with self._lock:
            if value < self._now:
                raise ValueError("a monotonic clock cannot go backwards")
            self._now = float(value)


def wh(seconds: float, watts: float) -> float:
    return seconds * watts / 3600.0


@dataclass
class BudgetLedger:
    power_watts: float
    time_budget_s: float = math.inf
    energy_budget_wh: float = math.inf
    clock: Clock = time.monotonic
    started_at: Optional[float] = None
    stop_flag: bool = False
    stop_reason: Optional[str] = None
    _last_elapsed: float = field(default=0.0, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if not self.power_watts > 0:
            raise ValueError(f"power_watts must be > 0, got {self.power_watts}")
        if self.time_budget_s < 0 or self.energy_budget_wh < 0:
            raise ValueError("budgets must be >= 0")

    def start(self) -> "BudgetLedger":
        self.started_at = self.clock()
        self._last_elapsed = 0.0
        return self

    def elapsed_and_energy(self) -> tuple[float, float]:
        if self.started_at is None:
            raise RuntimeError("ledger not started")
        elapsed = max(self.clock() - self.started_at, self._last_elapsed)
        self._last_elapsed = elapsed
        return elapsed, wh(elapsed, self.power_watts)

    def should_stop(self) -> Optional[str]:
        """Return the breached budget, latching it; time wins a simultaneous breach."""
        with self._lock:
            if self.stop_flag:
                return self.stop_reason
            elapsed, energy = self.elapsed_and_energy()
            if elapsed >= self.time_budget_s:
                self.stop_reason = TIME_BUDGET
            elif energy >= self.energy_budget_wh:
                self.stop_reason = ENERGY_BUDGET
            else:
                return None
            self.stop_flag = True
            log.info("budget stop: %s at %.1f s / %.4f Wh", self.stop_reason, elapsed, energy)
            return self.stop_reason

    def status_line(self) -> str:
        elapsed, energy = self.elapsed_and_energy()
        return (
            f"elapsed={elapsed:.2f}s/{self.time_budget_s:g}s "
            f"energy={energy:.5f}Wh/{self.energy_budget_wh:g}Wh stop={self.stop_reason}"
        )


class Watchdog:
    """Stop flag shared between the search and an optional monitor thread.

    The search polls :meth:`poll` at candidate and batch boundaries. With
    ``start_thread`` a daemon thread also checks the ledger periodically, so
    the flag is raised even while an evaluation is running.
    """

    def __init__(self, ledger: BudgetLedger):
        self.ledger = ledger
        self._event = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._halt = threading.Event()

    def poll(self) -> Optional[str]:
        if self._event.is_set():
            return self.ledger.stop_reason
        reason = self.ledger.should_stop()
        if reason is not None:
            self._event.set()
        return reason

    @property
    def fired(self) -> bool:
        return self._event.is_set()

    def log_status(self, where: str) -> None:
        log.info("[%s] %s", where, self.ledger.status_line())

    def start_thread(self, interval_s: float = 1.0) -> "Watchdog":
        def run():
            while not self._halt.wait(interval_s):
                if self.poll() is not None:
                    return

        self._thread = threading.Thread(target=run, name="gwnas-watchdog", daemon=True)
        self._thread.start()
        return self

    def stop_thread(self) -> None:
        self._halt.set()
        if self._thread is not None:
            self._thread.join()
            self._thread = None

    def __enter__(self) -> "Watchdog":
        return self

    def __exit__(self, *exc) -> None:
        self.stop_thread()
