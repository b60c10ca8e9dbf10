"""Preset runs shared by several test modules within one pytest session."""
from __future__ import annotations

import time
from functools import lru_cache

from vmhd.sim import PRESETS, SimConfig, run

SHIPPED = tuple(PRESETS)


@lru_cache(maxsize=None)
def preset_run(name: str, dt: float | None = None):
    """``(RunResult, wall_seconds)`` for a shipped preset, optionally with another ``dt``."""
    overrides = {} if dt is None else {"dt": dt}
    config = SimConfig.from_preset(name, **overrides)
    start = time.perf_counter()
    result = run(config)
    return result, time.perf_counter() - start
