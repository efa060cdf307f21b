"""Rollout bookkeeping and kernel-regression estimates of agent competence."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .metric import MetricSpec, sq_euclidean_fast

__all__ = [
    "RolloutRecord",
    "PerformanceBuffer",
    "BufferSnapshot",
    "Regressor",
    "predict",
    "update_buffer",
    "success_indicator",
]


@dataclass(frozen=True)
class RolloutRecord:
    context: np.ndarray
    metric_value: float
    episode_return: float
    steps: int

    def __post_init__(self):
        object.__setattr__(self, "context", np.asarray(self.context, dtype=float).ravel())
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if not (np.isfinite(self.metric_value) and np.isfinite(self.episode_return)):
            raise ValueError("rollout values must be finite")
        if not np.all(np.isfinite(self.context)):
            raise ValueError("context must be finite")

    def to_json(self) -> str:
        return json.dumps(
            {
                "context": self.context.tolist(),
                "metric_value": float(self.metric_value),
                "episode_return": float(self.episode_return),
                "steps": int(self.steps),
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "RolloutRecord":
        d = json.loads(line)
        return cls(np.array(d["context"]), d["metric_value"], d["episode_return"], d["steps"])


def success_indicator(record: RolloutRecord, delta: float) -> bool:
    return record.metric_value >= delta


@dataclass(frozen=True)
class BufferSnapshot:
    """Immutable view of both buffers, safe to share between readers."""

    contexts: np.ndarray
    values: np.ndarray

    def __len__(self):
        return self.values.size


class PerformanceBuffer:
    """Two FIFO ring buffers: successful rollouts and the most recent rollouts."""

    def __init__(self, success_capacity: int, recent_capacity: int, delta: float):
        if success_capacity < 1 or recent_capacity < 1:
            raise ValueError("buffer capacities must be positive")
        self.delta = float(delta)
        self.success_records: deque[RolloutRecord] = deque(maxlen=success_capacity)
        self.recent_records: deque[RolloutRecord] = deque(maxlen=recent_capacity)

    def __len__(self):
        return len(self.success_records) + len(self.recent_records)

    def records(self) -> list[RolloutRecord]:
        """Union of both buffers; a record held by both appears once."""
        seen = {id(r) for r in self.success_records}
        return [*self.success_records, *(r for r in self.recent_records if id(r) not in seen)]

    def snapshot(self) -> BufferSnapshot:
        recs = self.records()
        if not recs:
            return BufferSnapshot(np.zeros((0, 0)), np.zeros(0))
        contexts = np.stack([r.context for r in recs])
        values = np.array([r.metric_value for r in recs], dtype=float)
        contexts.setflags(write=False)
        values.setflags(write=False)
        return BufferSnapshot(contexts, values)

    def to_jsonl(self, path):
        """One record per line, tagged with its buffer.

        Recent entries that are also in the success buffer are written as a
        reference to their success-buffer position.
        """
        index = {id(r): i for i, r in enumerate(self.success_records)}
        with open(path, "w") as f:
            f.write(json.dumps({"delta": self.delta,
                                "success_capacity": self.success_records.maxlen,
                                "recent_capacity": self.recent_records.maxlen}) + "\n")
            for rec in self.success_records:
                d = json.loads(rec.to_json())
                d["buffer"] = "success"
                f.write(json.dumps(d) + "\n")
            for rec in self.recent_records:
                if id(rec) in index:
                    d = {"buffer": "recent", "ref": index[id(rec)]}
                else:
                    d = json.loads(rec.to_json())
                    d["buffer"] = "recent"
                f.write(json.dumps(d) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "PerformanceBuffer":
        with open(path) as f:
            header = json.loads(f.readline())
            buf = cls(header["success_capacity"], header["recent_capacity"], header["delta"])
            for line in f:
                d = json.loads(line)
                if "ref" in d:
                    buf.recent_records.append(buf.success_records[d["ref"]])
                    continue
                rec = RolloutRecord(np.array(d["context"]), d["metric_value"], d["episode_return"], d["steps"])
                target = buf.success_records if d["buffer"] == "success" else buf.recent_records
                target.append(rec)
        return buf


def update_buffer(buffer: PerformanceBuffer, records) -> None:
    for rec in records:
        buffer.recent_records.append(rec)
        if rec.metric_value >= buffer.delta:
            buffer.success_records.append(rec)


@dataclass(frozen=True)
class Regressor:
    bandwidth: float
    metric: MetricSpec

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")


def predict(reg: Regressor, buffer: PerformanceBuffer | BufferSnapshot, c, chunk: int = 4096) -> np.ndarray | float:
    """Nadaraya-Watson estimate of the success metric at ``c``.

    ``c`` may be a single context or a (Q, D) batch.  Kernel weights are
    computed relative to the nearest record, so they cannot all underflow;
    in the small-bandwidth limit this reduces to the nearest record's value.
    """
    snap = buffer.snapshot() if isinstance(buffer, PerformanceBuffer) else buffer
    if len(snap) == 0:
        raise ValueError("cannot predict from an empty buffer")
    c = np.asarray(c, dtype=float)
    single = c.ndim == 1
    Q = reg.metric.whiten(np.atleast_2d(c))
    L = reg.metric.whiten(snap.contexts)
    scale = 1.0 / (2.0 * reg.bandwidth**2)
    out = np.empty(Q.shape[0])
    for i in range(0, Q.shape[0], chunk):
        d2 = sq_euclidean_fast(Q[i : i + chunk], L)
        logw = -(d2 - d2.min(axis=1, keepdims=True)) * scale
        w = np.exp(logw)
        out[i : i + chunk] = (w @ snap.values) / w.sum(axis=1)
    return float(out[0]) if single else out
