"""CPU resource monitor feeding the controls bus.

Samples flow through Cpu-category dispatch (so an installed transform can
derive controls like an overload flag) and the monitor itself publishes
``cpu.load`` plus per-core values. A synthetic sampler can replace psutil
for tests and the end-to-end adaptive-loop scenario.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from .controls import ControlsBus
from .engine import CategoryId, Engine, InterceptContext
from .errors import PlatformUnsupported

log = logging.getLogger(__name__)


@dataclass
class CpuSample:
    t_ms: float
    total_load_percent: float
    per_core: list[dict] = field(default_factory=list)

    def validate(self) -> None:
        loads = [self.total_load_percent] + [c["load_percent"] for c in self.per_core]
        for value in loads:
            if not 0.0 <= value <= 100.0:
                raise ValueError(f"cpu load must be within [0, 100], got {value}")

    def to_doc(self) -> dict:
        return {"t_ms": self.t_ms, "total_load_percent": self.total_load_percent,
                "per_core": list(self.per_core)}


def psutil_sampler() -> CpuSample:
    try:
        import psutil
        per_core = psutil.cpu_percent(percpu=True)
        total = sum(per_core) / len(per_core) if per_core else 0.0
    except Exception as exc:  # pragma: no cover - platform dependent
        raise PlatformUnsupported(f"cpu sampling unavailable: {exc}") from exc
    return CpuSample(
        t_ms=time.time() * 1000.0,
        total_load_percent=total,
        per_core=[{"core": i, "load_percent": load}
                  for i, load in enumerate(per_core)])


def synthetic_sampler(total: float, per_core: Optional[list[float]] = None) -> Callable[[], CpuSample]:
    def sample() -> CpuSample:
        cores = per_core if per_core is not None else [total]
        return CpuSample(t_ms=time.time() * 1000.0, total_load_percent=total,
                         per_core=[{"core": i, "load_percent": l}
                                   for i, l in enumerate(cores)])
    return sample


class CpuMonitor:
    def __init__(self, engine: Engine, controls: ControlsBus,
                 sampler: Callable[[], CpuSample] = psutil_sampler,
                 period_ms: int = 2000):
        self.engine = engine
        self.controls = controls
        self.sampler = sampler
        self.period_ms = period_ms
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self.disabled = False

    def sample_once(self) -> Optional[CpuSample]:
        """One sample: dispatch through the Cpu category, then publish the
        load controls. Returns None when the platform cannot sample."""
        try:
            sample = self.sampler()
            sample.validate()
        except PlatformUnsupported as exc:
            if not self.disabled:
                log.warning("cpu monitor disabled: %s", exc)
            self.disabled = True
            return None
        ctx = InterceptContext(context="sample", kind="event", session_id="cpu-monitor")
        self.engine.dispatch(CategoryId.CPU, ctx, sample)
        self.controls.set("cpu.load", sample.total_load_percent)
        for core in sample.per_core:
            self.controls.set(f"cpu.core{core['core']}", core["load_percent"])
        return sample

    def start(self) -> None:
        if self._thread is not None:
            return
        self._stop.clear()

        def loop():
            while not self._stop.wait(self.period_ms / 1000.0):
                if self.sample_once() is None and self.disabled:
                    return

        self._thread = threading.Thread(target=loop, name="cpu-monitor", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None
