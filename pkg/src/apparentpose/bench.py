"""Stage latency measurement and sequential vs pipelined throughput.

With batch size 1 and one executor per stage, a strictly sequential pipeline
delivers one frame per sum of stage latencies, while a non-blocking pipeline
(stage k works on frame i+1 while stage k+1 handles frame i) is limited by
its slowest stage.
"""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyPipeline

BUNDLED_PROFILE = "jetson_orin_nano_vitb224_fp32.json"


@dataclass(frozen=True)
class StageProfile:
    name: str
    mean_ms: float
    std_ms: float = 0.0
    source: str = "configured"

    def __post_init__(self):
        if not self.mean_ms > 0:
            raise ValueError(f"stage {self.name!r}: mean latency must be > 0, got {self.mean_ms!r}")
        if not self.std_ms >= 0:
            raise ValueError(f"stage {self.name!r}: std must be >= 0, got {self.std_ms!r}")


@dataclass(frozen=True)
class ThroughputReport:
    sequential_latency_ms: float
    sequential_fps: float
    pipelined_fps: float
    bottleneck: str

    def to_text(self) -> str:
        return (
            f"sequential latency : {self.sequential_latency_ms:.2f} ms\n"
            f"sequential FPS     : {self.sequential_fps:.2f}\n"
            f"pipelined FPS      : {self.pipelined_fps:.2f}\n"
            f"bottleneck stage   : {self.bottleneck}\n"
        )


def model_throughput(stages: Sequence[StageProfile]) -> ThroughputReport:
    if not stages:
        raise EmptyPipeline("throughput model needs at least one stage")
    total = sum(s.mean_ms for s in stages)
    slowest = max(stages, key=lambda s: s.mean_ms)
    return ThroughputReport(total, 1000.0 / total, 1000.0 / slowest.mean_ms, slowest.name)


def _stage_latencies(stages, n_frames, rng):
    means = np.array([s.mean_ms for s in stages])
    if rng is None:
        return np.broadcast_to(means, (n_frames, len(stages)))
    stds = np.array([s.std_ms for s in stages])
    draws = rng.normal(means, stds, size=(n_frames, len(stages)))
    return np.maximum(draws, 0.0)


def simulate_schedules(
    stages: Sequence[StageProfile],
    n_frames: int,
    mode: str = "pipelined",
    rng: np.random.Generator | None = None,
) -> float:
    """Makespan in ms of ``n_frames`` through the stages, one executor each.

    Sequential mode admits a frame only once the previous one has left the last
    stage. Pipelined mode lets each stage start the next frame as soon as it is
    free and the frame has cleared the previous stage (unbounded buffers). Pass
    ``rng`` to draw latencies from normals truncated at zero instead of using
    the means.
    """
    if not stages:
        raise EmptyPipeline("cannot simulate an empty pipeline")
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if mode not in ("sequential", "pipelined"):
        raise ValueError(f"mode must be 'sequential' or 'pipelined', got {mode!r}")
    if mode == "sequential" and rng is None:
        return n_frames * sum(s.mean_ms for s in stages)
    lat = _stage_latencies(stages, n_frames, rng)
    if mode == "sequential":
        return float(lat.sum())
    stage_free = [0.0] * len(stages)
    for i in range(n_frames):
        ready = 0.0
        for k in range(len(stages)):
            start = max(ready, stage_free[k])
            ready = start + float(lat[i, k])
            stage_free[k] = ready
    return stage_free[-1]


def simulated_fps(stages, n_frames: int, mode: str = "pipelined", rng=None) -> float:
    return 1000.0 * n_frames / simulate_schedules(stages, n_frames, mode, rng)


def measure_stages(
    stages: Sequence[tuple[str, Callable]],
    repetitions: int = 20,
    warmup: int = 2,
    initial=None,
) -> list[StageProfile]:
    """Time a chain of callables; each receives the previous stage's output.

    The first ``warmup`` passes are run but not recorded. Std is the population
    std over the recorded passes (0 for a single repetition).
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if warmup < 0:
        raise ValueError("warmup must be >= 0")
    samples = {name: [] for name, _ in stages}
    for it in range(warmup + repetitions):
        value = initial
        for name, fn in stages:
            t0 = time.perf_counter_ns()
            value = fn(value)
            dt = (time.perf_counter_ns() - t0) / 1e6
            if it >= warmup:
                samples[name].append(dt)
    out = []
    for name, _ in stages:
        xs = samples[name]
        # a stage can time below clock resolution; keep the profile valid
        mean = max(statistics.fmean(xs), 1e-6)
        std = statistics.pstdev(xs) if len(xs) > 1 else 0.0
        out.append(StageProfile(name, mean, std, "measured"))
    return out


def profile_from_dict(d) -> list[StageProfile]:
    stages = d["stages"] if isinstance(d, dict) else d
    if not isinstance(stages, list):
        raise ValueError("profile must be a list of stages or an object with a 'stages' list")
    out = []
    for s in stages:
        try:
            out.append(StageProfile(str(s["name"]), float(s["mean_ms"]), float(s.get("std_ms", 0.0)), s.get("source", "configured")))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed stage entry {s!r}: {exc}") from None
    return out


def load_profile(path) -> list[StageProfile]:
    with open(path) as f:
        return profile_from_dict(json.load(f))


def bundled_profile_dict() -> dict:
    return json.loads(resources.files("apparentpose").joinpath("profiles", BUNDLED_PROFILE).read_text())


def bundled_profile() -> list[StageProfile]:
    """Published Jetson Orin Nano (25 W) stage latencies, ViT-B-224/16 at FP32."""
    return profile_from_dict(bundled_profile_dict())
