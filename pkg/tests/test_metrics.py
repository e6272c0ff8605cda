import csv

import numpy as np
import pytest

from datamkt import (
    UnsupportedModelError,
    compute_regrets,
    decomposition_bound,
    dominant_profile,
    effective_regret,
    expected_effective_utility,
    make_random_closeness,
    make_random_joint,
    simulate,
    social_optimum,
    social_welfare,
    welfare_regret,
    write_regret_csv,
)
from datamkt.learning.engine import SimulationTrace


@pytest.fixture(scope="module")
def instance():
    return make_random_closeness(3, 4, 1.0, seed=55, alpha=0.5)


@pytest.fixture(scope="module")
def zoom_trace(instance):
    return simulate(instance, 800, seed=30)


def constant_trace(instance, profile, total):
    """Minimal trace pinned to one profile (for regret arithmetic)."""
    n = instance.n
    profiles = np.tile(np.asarray(profile, dtype=np.int32), (total, 1))
    zeros = np.zeros((total, n))
    return SimulationTrace(
        n=n, k=instance.k, total_rounds=total, seed=0,
        learners=("dominant-scripted",) * n, alpha_mode="fixed", backend="python",
        alpha=np.full(total, instance.alpha), profiles=profiles,
        sampled_gain=zeros, realized_utility=zeros, transactions=zeros,
        observed_effective=zeros, chosen_pulls=np.ones((total, n), dtype=np.int64),
        active_count=np.ones((total, n), dtype=np.int32),
        activation_log=((),) * n, phase_starts=(0,), cover_ok=True,
        clean_event_ok=None)


class TestEffectiveRegret:
    def test_zero_at_dominant(self, instance):
        trace = simulate(instance, 300, learners="dominant-scripted", seed=1)
        series = compute_regrets(instance, trace)
        assert (series.effective_cum[-1] == 0.0).all()

    def test_constant_gap_accumulates_linearly(self, instance):
        dom = dominant_profile(instance)
        other = tuple((m + 1) % instance.num_sets for m in dom)
        total = 64
        series = compute_regrets(instance, constant_trace(instance, other, total))
        for i in range(instance.n):
            gap = (expected_effective_utility(instance, i, dom[i])
                   - expected_effective_utility(instance, i, other[i]))
            assert series.effective_cum[-1, i] == pytest.approx(total * gap, abs=1e-9)

    def test_matches_recomputation_from_profiles(self, instance, zoom_trace):
        series = compute_regrets(instance, zoom_trace)
        for i in range(instance.n):
            dom = series.dominant[i]
            best = expected_effective_utility(instance, i, dom)
            expect = np.cumsum([best - expected_effective_utility(instance, i, int(m))
                                for m in zoom_trace.profiles[:, i]])
            assert np.allclose(effective_regret(instance, zoom_trace, i), expect,
                               atol=1e-9)

    def test_per_round_never_negative(self, instance, zoom_trace):
        series = compute_regrets(instance, zoom_trace)
        assert (series.effective_per_round >= -1e-9).all()
        assert (series.effective_cum[-1] >= -1e-9).all()

    def test_joint_model_rejected(self):
        inst = make_random_joint(2, 2, seed=1)
        trace = constant_trace(inst, (0, 0), 4)
        with pytest.raises(UnsupportedModelError):
            compute_regrets(inst, trace)


class TestWelfareRegret:
    def test_zero_at_optimum(self, instance):
        opt, _ = social_optimum(instance)
        series = compute_regrets(instance, constant_trace(instance, opt, 32))
        assert series.welfare_cum[-1] == pytest.approx(0.0, abs=1e-9)

    def test_dominant_profile_bounded_by_wrae_cap(self, instance):
        total = 128
        trace = simulate(instance, total, learners="dominant-scripted", seed=2)
        series = compute_regrets(instance, trace)
        cap = total * instance.n * (1.0 - instance.alpha)
        assert series.welfare_cum[-1] <= cap + 1e-9
        dom = dominant_profile(instance)
        _, opt_w = social_optimum(instance)
        expect = total * (opt_w - social_welfare(instance, dom))
        assert series.welfare_cum[-1] == pytest.approx(expect, abs=1e-9)

    def test_matches_per_round_recomputation(self, instance, zoom_trace):
        series = compute_regrets(instance, zoom_trace)
        _, opt_w = social_optimum(instance)
        expect = np.cumsum([opt_w - social_welfare(instance, tuple(int(m) for m in row))
                            for row in zoom_trace.profiles])
        assert np.allclose(welfare_regret(instance, zoom_trace), expect, atol=1e-9)


class TestDecomposition:
    def test_bound_holds_on_learning_trace(self, instance, zoom_trace):
        lhs, rhs = decomposition_bound(instance, zoom_trace)
        assert lhs <= rhs

    def test_bound_holds_under_schedule(self, instance):
        trace = simulate(instance, 500, seed=6, alpha="corollary")
        lhs, rhs = decomposition_bound(instance, trace)
        assert lhs <= rhs


class TestCsvExport:
    def test_columns_and_values(self, instance, zoom_trace, tmp_path):
        series = compute_regrets(instance, zoom_trace)
        path = tmp_path / "regret.csv"
        write_regret_csv(path, series)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "effective_regret_0", "effective_regret_1",
                           "effective_regret_2", "welfare_regret"]
        assert len(rows) == 1 + zoom_trace.total_rounds
        last = rows[-1]
        assert int(last[0]) == zoom_trace.total_rounds
        assert float(last[-1]) == pytest.approx(series.welfare_cum[-1], abs=1e-12)
        assert float(last[1]) == pytest.approx(series.effective_cum[-1, 0], abs=1e-12)
