import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apparentpose.bench import (
    StageProfile,
    bundled_profile,
    bundled_profile_dict,
    load_profile,
    measure_stages,
    model_throughput,
    profile_from_dict,
    simulate_schedules,
    simulated_fps,
)
from apparentpose.errors import EmptyPipeline


def stages(*means):
    return [StageProfile(f"s{i}", m) for i, m in enumerate(means)]


class TestModel:
    def test_worked_example(self):
        r = model_throughput(stages(10, 20, 5))
        assert r.sequential_latency_ms == 35
        assert r.sequential_fps == pytest.approx(1000 / 35, rel=1e-12)
        assert r.pipelined_fps == 50
        assert r.bottleneck == "s1"

    def test_single_stage(self):
        r = model_throughput(stages(8))
        assert r.sequential_fps == r.pipelined_fps == 125

    def test_two_equal_stages(self):
        r = model_throughput(stages(10, 10))
        assert r.pipelined_fps == pytest.approx(2 * r.sequential_fps, rel=1e-12)

    def test_bundled(self):
        r = model_throughput(bundled_profile())
        assert r.sequential_latency_ms == pytest.approx(74.18, abs=1e-9)
        assert r.sequential_fps == pytest.approx(13.48, abs=0.01)
        assert r.pipelined_fps == pytest.approx(32.79, abs=0.01)
        assert r.bottleneck == "Detector"
        assert "bottleneck stage   : Detector" in r.to_text()

    def test_empty(self):
        with pytest.raises(EmptyPipeline):
            model_throughput([])

    @given(st.lists(st.floats(0.01, 1000), min_size=1, max_size=8))
    def test_pipelined_never_slower(self, means):
        r = model_throughput(stages(*means))
        assert r.pipelined_fps >= r.sequential_fps * (1 - 1e-12)


class TestSimulation:
    def test_sequential_makespan(self):
        s = stages(13.23, 30.5, 3.7)
        assert simulate_schedules(s, 100, "sequential") == pytest.approx(100 * 47.43, rel=1e-12)

    def test_pipelined_closed_form(self):
        # deterministic flow shop: first frame fills the pipe, then one frame per max
        s = stages(4, 9, 2, 7)
        for n in (1, 2, 10, 500):
            assert simulate_schedules(s, n) == pytest.approx(22 + (n - 1) * 9, rel=1e-12)

    def test_converges_to_model(self):
        prof = bundled_profile()
        model = model_throughput(prof)
        assert simulated_fps(prof, 1000) == pytest.approx(model.pipelined_fps, rel=0.01)
        assert simulated_fps(prof, 1000, "sequential") == pytest.approx(model.sequential_fps, rel=1e-12)

    def test_stochastic(self):
        prof = bundled_profile()
        rng = np.random.default_rng(0)
        fps = simulated_fps(prof, 5000, rng=rng)
        # jitter on the bottleneck makes it slightly slower than the mean model
        assert fps == pytest.approx(model_throughput(prof).pipelined_fps, rel=0.05)
        seq = simulate_schedules(prof, 5000, "sequential", rng=np.random.default_rng(0))
        assert seq / 5000 == pytest.approx(74.18, rel=0.01)

    @settings(max_examples=50)
    @given(st.lists(st.floats(0.1, 100), min_size=1, max_size=6), st.integers(1, 200), st.integers(0, 1000))
    def test_pipelined_bounded_by_sequential(self, means, n, seed):
        s = [StageProfile(f"s{i}", m, 0.3 * m) for i, m in enumerate(means)]
        pipe = simulate_schedules(s, n, "pipelined", np.random.default_rng(seed))
        seq = simulate_schedules(s, n, "sequential", np.random.default_rng(seed))
        assert pipe <= seq * (1 + 1e-12)

    def test_errors(self):
        with pytest.raises(EmptyPipeline):
            simulate_schedules([], 10)
        with pytest.raises(ValueError):
            simulate_schedules(stages(1), 0)
        with pytest.raises(ValueError):
            simulate_schedules(stages(1), 5, mode="parallel")


class TestMeasure:
    def test_sleep_stub(self):
        prof = measure_stages([("a", lambda x: time.sleep(0.01)), ("b", lambda x: x)], repetitions=3, warmup=0)
        assert [p.name for p in prof] == ["a", "b"]
        assert prof[0].mean_ms >= 9.5
        assert prof[1].mean_ms < prof[0].mean_ms
        assert all(p.source == "measured" for p in prof)

    def test_chain_passes_values(self):
        seen = []
        measure_stages([("x2", lambda v: v * 2), ("rec", seen.append)], repetitions=2, warmup=1, initial=3)
        assert seen == [6, 6, 6]

    def test_single_repetition(self):
        prof = measure_stages([("a", lambda x: x)], repetitions=1, warmup=0)
        assert prof[0].std_ms == 0.0 and prof[0].mean_ms > 0

    def test_warmup_discarded(self):
        calls = []

        def slow_first(x):
            if not calls:
                time.sleep(0.05)
            calls.append(1)

        prof = measure_stages([("a", slow_first)], repetitions=3, warmup=1)
        assert len(calls) == 4
        assert prof[0].mean_ms < 20

    def test_invalid(self):
        with pytest.raises(ValueError):
            measure_stages([("a", lambda x: x)], repetitions=0)
        with pytest.raises(ValueError):
            measure_stages([("a", lambda x: x)], warmup=-1)


class TestProfiles:
    def test_bundled_contents(self):
        d = bundled_profile_dict()
        assert [s["name"] for s in d["stages"]] == ["Pre-proc", "Detector", "Bridge", "ViT", "Post-processing"]
        assert d["published_end_to_end_ms"][0] == 74.2

    def test_load_list_or_object(self, tmp_path):
        (tmp_path / "a.json").write_text('[{"name": "x", "mean_ms": 2}]')
        (tmp_path / "b.json").write_text('{"stages": [{"name": "x", "mean_ms": 2}]}')
        assert load_profile(tmp_path / "a.json") == load_profile(tmp_path / "b.json") == [StageProfile("x", 2.0)]

    @pytest.mark.parametrize("bad", [{"stages": [{"name": "x"}]}, {"stages": [{"name": "x", "mean_ms": -1}]}, {"stages": "x"}])
    def test_malformed(self, bad):
        with pytest.raises(ValueError):
            profile_from_dict(bad)
