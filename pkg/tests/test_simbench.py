import math

import numpy as np
import pytest
from scipy import integrate

from mtcert.simbench import (
    BridgeTask,
    BridgeWorldDist,
    MixtureComponent,
    Policy,
    SlipGridTaskDist,
    SlipTask,
    coverage_experiment,
    rollout_outcomes,
    sample_tasks,
    simulate_dataset,
    stream,
    tightness_curve,
    true_performance,
    true_safety,
)

POINT_ZERO = SlipGridTaskDist(components=(MixtureComponent(1.0, 0.0, 0.0),))


class TestStreams:
    def test_reproducible(self):
        assert stream(3, 1, 2).random() == stream(3, 1, 2).random()

    def test_distinct_keys(self):
        assert stream(3, 1, 2).random() != stream(3, 2, 1).random()

    def test_empty_key(self):
        with pytest.raises(ValueError):
            stream()


class TestDistributions:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            SlipGridTaskDist(components=((0.5, 0.1, 0.01), (0.4, 0.2, 0.01)))

    def test_tuple_components(self):
        d = SlipGridTaskDist(components=((1.0, 0.2, 0.05),))
        assert isinstance(d.components[0], MixtureComponent)

    def test_bridge_validation(self):
        with pytest.raises(ValueError):
            BridgeWorldDist(left_steps=7, right_steps=5)
        with pytest.raises(ValueError):
            BridgeWorldDist(p_left_range=(0.2, 1.0))

    def test_pdf_integrates_to_one(self):
        d = SlipGridTaskDist()
        total, _ = integrate.quad(d.pdf, 0, 1, points=[0.1, 0.25], limit=200)
        assert total == pytest.approx(1.0, abs=1e-8)


class TestSampleTasks:
    def test_point_mass(self):
        d = SlipGridTaskDist(components=((1.0, 0.1, 0.0),))
        assert [t.p for t in sample_tasks(d, 3, 0)] == [0.1, 0.1, 0.1]

    def test_deterministic(self):
        d = SlipGridTaskDist()
        assert sample_tasks(d, 50, 9) == sample_tasks(d, 50, 9)
        assert sample_tasks(d, 50, 9) != sample_tasks(d, 50, 10)

    def test_component_proportions(self):
        d = SlipGridTaskDist(components=((0.3, 0.1, 0.01), (0.7, 0.6, 0.01)))
        n = 100_000
        ps = np.array([t.p for t in sample_tasks(d, n, 1)])
        frac = np.mean(ps < 0.35)
        assert abs(frac - 0.3) <= 3 * math.sqrt(0.3 * 0.7 / n)

    def test_truncated_support(self):
        d = SlipGridTaskDist(components=((1.0, 0.0, 0.3),))
        ps = [t.p for t in sample_tasks(d, 5000, 2)]
        assert min(ps) >= 0.0 and max(ps) < 1.0

    def test_bridge_ranges(self):
        tasks = sample_tasks(BridgeWorldDist(), 2000, 4)
        assert all(0.2 <= t.p_left <= 0.3 and 0.0 <= t.p_right <= 0.2 for t in tasks)

    def test_needs_tasks(self):
        with pytest.raises(ValueError):
            sample_tasks(SlipGridTaskDist(), 0, 0)


class TestTruePerformance:
    def test_examples(self):
        assert true_performance(SlipTask(0.0), Policy.SLIP_FORWARD) == 1.0
        assert true_performance(SlipTask(0.5, 5), "forward") == 0.03125
        assert true_performance(BridgeTask(0.25, 0.0), Policy.BRIDGE_RIGHT) == 1.0
        assert true_performance(BridgeTask(0.5, 0.0, 2, 7), Policy.BRIDGE_LEFT) == 0.25

    def test_incompatible(self):
        with pytest.raises(ValueError):
            true_performance(SlipTask(0.1), Policy.BRIDGE_LEFT)
        with pytest.raises(ValueError):
            true_performance(BridgeTask(0.2, 0.1), Policy.SLIP_FORWARD)

    def test_bridge_median_ordering(self):
        tasks = sample_tasks(BridgeWorldDist(), 5001, 12)
        left = np.median([true_performance(t, Policy.BRIDGE_LEFT) for t in tasks])
        right = np.median([true_performance(t, Policy.BRIDGE_RIGHT) for t in tasks])
        assert right > left


class TestTrueSafety:
    def test_point_mass_zero(self):
        for B in (1e-9, 0.3, 1.0):
            assert true_safety(POINT_ZERO, Policy.SLIP_FORWARD, B) == 1.0

    def test_clamps(self):
        d = SlipGridTaskDist()
        assert true_safety(d, "forward", 1.5) == 0.0
        assert true_safety(d, "forward", 0.0) == 1.0
        assert true_safety(d, "forward", -2.0) == 1.0

    @pytest.mark.parametrize(
        "components",
        [
            ((0.5, 0.10, 0.03), (0.5, 0.25, 0.05)),
            ((0.2, 0.05, 0.1), (0.3, 0.4, 0.2), (0.5, 0.9, 0.3)),
            ((1.0, 0.0, 0.15),),
        ],
    )
    @pytest.mark.parametrize("B", [0.05, 0.5, 0.8, 0.99])
    def test_against_quadrature(self, components, B):
        d = SlipGridTaskDist(components=components)
        p_star = 1 - B ** (1 / d.path_length)
        ref, _ = integrate.quad(d.pdf, 0, p_star, limit=200, epsabs=1e-12)
        assert true_safety(d, Policy.SLIP_FORWARD, B) == pytest.approx(ref, abs=1e-6)

    def test_bridge_closed_form(self):
        d = BridgeWorldDist()
        B = 0.9
        p_star = 1 - B ** (1 / 7)
        assert true_safety(d, Policy.BRIDGE_RIGHT, B) == pytest.approx(p_star / 0.2, abs=1e-12)
        assert true_safety(d, Policy.BRIDGE_LEFT, B) == 0.0

    def test_nonincreasing(self):
        d = SlipGridTaskDist()
        vals = [true_safety(d, "forward", B) for B in np.linspace(0.01, 1, 200)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))


class TestRollouts:
    def test_extremes(self):
        assert rollout_outcomes(SlipTask(0.0), "forward", 37, 1).successes == 37
        assert rollout_outcomes(BridgeTask(0.2, 0.0, 5, 7), "right", 20, 1).successes == 20
        assert rollout_outcomes(BridgeTask(1.0, 0.0), "left", 20, 1).successes == 0

    def test_half(self):
        task = SlipTask(1 - 0.5 ** (1 / 5))
        m = 100_000
        s = rollout_outcomes(task, "forward", m, 7).successes
        assert abs(s / m - 0.5) <= 3 * math.sqrt(0.25 / m)

    def test_dataset_ids_and_determinism(self):
        tasks, recs = simulate_dataset(SlipGridTaskDist(), "forward", 5, 40, 3)
        assert [r.task_id for r in recs] == [f"task-{i:05d}" for i in range(5)]
        assert simulate_dataset(SlipGridTaskDist(), "forward", 5, 40, 3) == (tasks, recs)

    def test_task_streams_independent_of_order(self):
        tasks, recs = simulate_dataset(SlipGridTaskDist(), "forward", 10, 50, 8)
        assert recs[7].stats == rollout_outcomes(tasks[7], "forward", 50, (8, 7))


class TestCoverage:
    def test_perfect_policy(self):
        rep = coverage_experiment(POINT_ZERO, "forward", 20, 50, None, 0.05, [0.5], 1, 0)
        assert rep.violations == 0 and rep.repetitions == 1

    def test_thresholds_above_one(self):
        rep = coverage_experiment(SlipGridTaskDist(), "forward", 30, 100, None, 0.05, [1.1, 2.0], 3, 0)
        assert rep.violations == 0

    def test_deterministic(self):
        args = (SlipGridTaskDist(), "forward", 40, 200, None, 0.05, None, 5, 17)
        assert coverage_experiment(*args) == coverage_experiment(*args)

    def test_report_fields(self):
        rep = coverage_experiment(SlipGridTaskDist(), "forward", 30, 100, None, 0.1, None, 10, 1)
        assert rep.violations <= rep.repetitions
        assert rep.empirical_violation_rate == rep.violations / rep.repetitions
        assert rep.beta == pytest.approx(0.1 / 30)
        assert 0.0 <= rep.binomial_p_value() <= 1.0

    def test_needs_repetitions(self):
        with pytest.raises(ValueError):
            coverage_experiment(SlipGridTaskDist(), "forward", 10, 10, None, 0.1, None, 0, 0)

    def test_bridge(self):
        rep = coverage_experiment(BridgeWorldDist(), "right", 50, 300, None, 0.05, None, 5, 2)
        assert rep.violations <= 1


class TestTightness:
    def test_point_mass(self):
        tc = tightness_curve(POINT_ZERO, "forward", 15, 30, None, 0.05, 0, extra_thresholds=[0.2, 1.0])
        assert all(c < 1.0 for c in tc.certified)
        assert all(t == 1.0 for t in tc.true)

    def test_sound_and_aligned(self):
        tc = tightness_curve(SlipGridTaskDist(), "forward", 100, 500, None, 0.01, 4)
        assert len(tc.thresholds) == len(tc.certified) == len(tc.true)
        assert all(g >= 0 for g in tc.gaps)
