"""
Per-stage wall-clock timing for the frame pipeline.
"""
from __future__ import annotations

import time
from collections import defaultdict
from contextlib import contextmanager
from typing import Any, Iterator

import pandas as pd

from models.registry import registry


PipelineStage = registry.PipelineStage


class StageTimer:
    """Collects per-frame stage durations in milliseconds; disabled timers record nothing."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self._samples: dict[str, list[float]] = defaultdict(list)
        self._frame: dict[str, float] = {}

    @contextmanager
    def stage(self, stage: PipelineStage | str) -> Iterator[None]:
        if not self.enabled:
            yield
            return
        name = stage.value if isinstance(stage, PipelineStage) else str(stage)
        start = time.perf_counter()
        try:
            yield
        finally:
            self._frame[name] = self._frame.get(name, 0.0) + (time.perf_counter() - start) * 1000.0

    def record(self, stage: PipelineStage | str, millis: float) -> None:
        if self.enabled:
            name = stage.value if isinstance(stage, PipelineStage) else str(stage)
            self._frame[name] = self._frame.get(name, 0.0) + millis

    def end_frame(self) -> None:
        for name, ms in self._frame.items():
            self._samples[name].append(ms)
        self._frame = {}

    def to_frame(self) -> pd.DataFrame:
        rows = [{"stage": name, "ms": ms} for name, values in self._samples.items() for ms in values]
        return pd.DataFrame(rows, columns=["stage", "ms"])

    def summary(self) -> dict[str, Any]:
        """Median, mean, p95 and max per stage plus the sample count."""
        df = self.to_frame()
        if df.empty:
            return {"frames": 0, "stages": {}}
        grouped = df.groupby("stage")["ms"]
        table = pd.DataFrame(
            {
                "median_ms": grouped.median(),
                "mean_ms": grouped.mean(),
                "p95_ms": grouped.quantile(0.95),
                "max_ms": grouped.max(),
                "samples": grouped.count(),
            }
        )
        order = [s.value for s in PipelineStage if s.value in table.index]
        stages = {
            name: {k: (int(v) if k == "samples" else round(float(v), 4)) for k, v in table.loc[name].items()}
            for name in order
        }
        frames = len(self._samples.get(PipelineStage.total.value, [])) or int(table["samples"].max())
        return {"frames": frames, "stages": stages}
