"""Query pacing and budget accounting for black-box scorers.

The slot limiter enforces a minimum spacing of ``1/qps`` seconds between
permits; the ledger counts queries against a daily cap and can persist the
count across processes. Both are safe for concurrent callers: the limiter
serializes permits (linearizable order) and the ledger increments under a
lock.
"""

from __future__ import annotations

import datetime as _dt
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import BudgetExhausted


@dataclass(frozen=True)
class RateLimit:
    """Queries-per-second ceiling plus an optional daily cap."""

    qps: float = 1.0
    daily_cap: int | None = None

    def __post_init__(self) -> None:
        if self.qps <= 0:
            raise ValueError("qps must be > 0")
        if self.daily_cap is not None and self.daily_cap <= 0:
            raise ValueError("daily_cap must be positive or None")


class MonotonicClock:
    """Wall clock: ``time.monotonic`` plus real sleeping."""

    def monotonic(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class MockClock:
    """Simulated clock for tests; sleeping advances it instantly."""

    def __init__(self, start: float = 0.0):
        self.now = start

    def monotonic(self) -> float:
        return self.now

    def sleep(self, seconds: float) -> None:
        self.now += seconds


class SlotLimiter:
    """Grants permits no faster than ``rate.qps`` per second.

    The first permit is immediate; each later permit is granted only once
    ``1/qps`` seconds have elapsed since the previous one. ``acquire``
    blocks (sleeps on the clock) until its slot opens.
    """

    def __init__(self, rate: RateLimit, clock=None):
        self._interval = 1.0 / rate.qps
        self._clock = clock if clock is not None else MonotonicClock()
        self._next_free: float | None = None
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            now = self._clock.monotonic()
            if self._next_free is None:
                self._next_free = now + self._interval
                return
            wait = self._next_free - now
            if wait > 0:
                self._clock.sleep(wait)
                now = self._clock.monotonic()
            self._next_free = max(self._next_free, now) + self._interval


def acquire_slot(limiter: SlotLimiter) -> None:
    """Block until the limiter grants the next permit."""
    limiter.acquire()


class BudgetLedger:
    """Counts queries against a cap, optionally persisted to a JSON file.

    The file holds ``{"cap": N|null, "used": N, "date": "YYYY-MM-DD"}``;
    the used count resets when the stored date differs from today. The
    invariant ``used <= cap`` holds at all times: :meth:`check` raises
    *before* a query would exceed the cap, so callers can guarantee no
    side effect (e.g. network I/O) happens once the budget is spent.
    """

    def __init__(
        self,
        cap: int | None,
        used: int = 0,
        persisted_path: str | Path | None = None,
        today=None,
    ):
        if cap is not None and cap <= 0:
            raise ValueError("cap must be positive or None (unlimited)")
        if used < 0 or (cap is not None and used > cap):
            raise ValueError("used must satisfy 0 <= used <= cap")
        self.cap = cap
        self.used = used
        self.persisted_path = Path(persisted_path) if persisted_path else None
        self._today = today if today is not None else _dt.date.today
        self._date = self._today()
        self._lock = threading.Lock()

    @classmethod
    def load(
        cls, path: str | Path, cap: int | None = None, today=None
    ) -> "BudgetLedger":
        """Restore a ledger from ``path``; a missing file starts fresh."""
        path = Path(path)
        today_fn = today if today is not None else _dt.date.today
        used = 0
        stored_cap = cap
        if path.exists():
            data = json.loads(path.read_text(encoding="utf-8"))
            if cap is None:
                stored_cap = data.get("cap")
            if data.get("date") == today_fn().isoformat():
                used = int(data.get("used", 0))
        if stored_cap is not None:
            used = min(used, stored_cap)
        return cls(stored_cap, used=used, persisted_path=path, today=today)

    def _roll_date(self) -> None:
        today = self._today()
        if today != self._date:
            self._date = today
            self.used = 0

    def remaining(self) -> int | None:
        with self._lock:
            self._roll_date()
            if self.cap is None:
                return None
            return self.cap - self.used

    def check(self) -> None:
        """Raise :class:`BudgetExhausted` if no query may be spent."""
        with self._lock:
            self._roll_date()
            if self.cap is not None and self.used >= self.cap:
                raise BudgetExhausted(
                    f"budget cap {self.cap} reached (used {self.used})"
                )

    def record(self) -> None:
        """Count one spent query and persist if a path is configured."""
        with self._lock:
            self._roll_date()
            if self.cap is not None and self.used >= self.cap:
                raise BudgetExhausted(
                    f"budget cap {self.cap} reached (used {self.used})"
                )
            self.used += 1
            self._save_locked()

    def save(self) -> None:
        with self._lock:
            self._save_locked()

    def _save_locked(self) -> None:
        if self.persisted_path is None:
            return
        payload = {
            "cap": self.cap,
            "used": self.used,
            "date": self._date.isoformat(),
        }
        self.persisted_path.parent.mkdir(parents=True, exist_ok=True)
        self.persisted_path.write_text(
            json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8"
        )
