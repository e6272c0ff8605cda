import json

import numpy as np
import pytest

from datamkt import (
    GeneratorSpec,
    MarketError,
    NoiseModel,
    ParseError,
    build_instance,
    dominant_strategy,
    expected_utility,
    is_pure_equilibrium,
    load_instance,
    make_bundle_trap,
    make_joint_cycle,
    make_random_closeness,
    make_random_independent,
    make_random_symmetric,
    make_singleton_conflict,
    make_symmetric_gap,
    save_instance,
    social_welfare,
    validate_instance,
)
from datamkt.instances import spec_from_dict, spec_to_dict
from datamkt.market import popcount_table


class TestSingletonConflict:
    def test_golden_tables(self):
        n, eps = 4, 0.1
        inst = make_singleton_conflict(n, eps)
        assert inst.k == n
        for i in range(n):
            own = 1 << i
            assert inst.gain[i, 0] == 0.0
            assert inst.gain[i, own] == 1.0
            others = [m for m in range(1, 1 << n) if m != own]
            assert (inst.gain[i, others] == 1.0 - eps).all()
            for j in range(n):
                if j == i:
                    continue
                col = inst.externality.table[j, i]
                assert col[own] == pytest.approx(1.0 / (n - 1), abs=1e-15)
                assert (np.delete(col, own) == 0.0).all()

    def test_caused_sum_saturates_bound(self):
        inst = make_singleton_conflict(3, 0.1)
        e = inst.externality.table
        assert sum(e[j, 0, 1] for j in (1, 2)) == pytest.approx(1.0, abs=1e-12)

    def test_rejects_bad_params(self):
        with pytest.raises(MarketError):
            make_singleton_conflict(1, 0.1)
        with pytest.raises(MarketError):
            make_singleton_conflict(3, 0.0)


class TestBundleTrap:
    def test_golden_tables(self):
        inst = make_bundle_trap(4, 0.25, 0.01)
        assert inst.k == 2
        for i in range(4):
            assert list(inst.gain[i]) == [0.0, 0.0, 1.0 - 0.25 - 0.01, 1.0]
            for j in range(4):
                if j != i:
                    assert list(inst.externality.table[i, j]) == [0.0, 0.0, 0.0, 1 / 3]

    def test_epsilon_must_leave_headroom(self):
        with pytest.raises(MarketError):
            make_bundle_trap(4, 0.5, 0.6)


class TestJointCycle:
    def test_focal_state_utilities(self):
        for alpha in (0.0, 0.25, 0.75):
            inst = make_joint_cycle(3, 2, 5, alpha)
            assert expected_utility(inst, 0, (2, 2)) == pytest.approx(
                1 - (1 - alpha) * 0.5, abs=1e-12)
            assert expected_utility(inst, 1, (2, 2)) == pytest.approx(
                1 - 0.5 * alpha, abs=1e-12)

    def test_rejects_empty_focal_masks(self):
        with pytest.raises(MarketError):
            make_joint_cycle(2, 0, 1, 0.5)
        with pytest.raises(MarketError):
            make_joint_cycle(2, 1, 1, 0.5)


class TestSymmetricGap:
    def test_welfare_landmarks(self):
        n, eps = 5, 0.01
        inst = make_symmetric_gap(n, eps)
        assert social_welfare(inst, (2,) * n) == pytest.approx(n * eps, abs=1e-12)
        assert social_welfare(inst, (3,) * n) == pytest.approx(n - 6 * eps, abs=1e-12)
        assert is_pure_equilibrium(inst, (2,) * n)

    def test_matrix_entries(self):
        n, eps = 4, 0.02
        inst = make_symmetric_gap(n, eps)
        e = inst.externality.table
        s = 1 / (n - 1)
        assert e[0, 2, 1, 3] == pytest.approx(4 * eps * s, abs=1e-15)
        assert e[0, 2, 2, 2] == pytest.approx((1 - eps) * s, abs=1e-15)
        assert e[0, 2, 3, 3] == pytest.approx(eps * s, abs=1e-15)
        assert e[1, 3, 3, 3] == 0.0
        assert e[1, 3, 2, 2] == pytest.approx((1 - eps) * s, abs=1e-15)

    def test_is_symmetric(self):
        inst = make_symmetric_gap(3, 0.05)
        checks = validate_instance(inst, expect_symmetric=True)
        assert all(c.ok for c in checks)


class TestRandomGenerators:
    def test_outputs_validate(self):
        for seed in range(10):
            for inst in (make_random_independent(3, 3, seed=seed),
                         make_random_symmetric(4, 2, seed=seed),
                         make_random_closeness(3, 4, 1.0, seed=seed)):
                checks = validate_instance(inst)
                assert all(c.ok for c in checks), [c for c in checks if not c.ok]

    def test_symmetric_swap_property(self):
        inst = make_random_symmetric(4, 2, seed=9)
        e = inst.externality.table
        for i in range(4):
            for j in range(4):
                if i != j:
                    assert np.array_equal(e[i, j], e[j, i].T)

    def test_seeds_reproduce(self):
        a = make_random_independent(3, 3, seed=123)
        b = make_random_independent(3, 3, seed=123)
        assert np.array_equal(a.gain, b.gain)
        assert np.array_equal(a.externality.table, b.externality.table)
        c = make_random_closeness(3, 4, 1.0, seed=77)
        d = make_random_closeness(3, 4, 1.0, seed=77)
        assert np.array_equal(c.gain, d.gain)
        assert np.array_equal(c.externality.table, d.externality.table)


class TestClosenessGenerator:
    def effective(self, inst, i):
        e = inst.externality.table
        caused = e[[j for j in range(inst.n) if j != i], i, :].sum(axis=0)
        return inst.gain[i] - inst.alpha * caused

    def test_gaps_inside_band(self):
        lam = 1.0
        for seed in range(10):
            inst = make_random_closeness(3, 5, lam, seed=seed, alpha=0.5)
            pop = popcount_table(5)
            for i in range(3):
                eff = self.effective(inst, i)
                best = int(np.argmax(eff))
                top = eff[best]
                for m in range(32):
                    d = pop[m ^ best] / 5
                    gap = top - eff[m]
                    assert gap >= max(0.0, lam * (d - 1 / 5)) - 1e-9
                    assert gap <= lam * d + 1e-9

    def test_adjacent_masks_land_in_short_band(self):
        inst = make_random_closeness(2, 5, 1.0, seed=4, alpha=0.5)
        pop = popcount_table(5)
        eff = self.effective(inst, 0)
        best = int(np.argmax(eff))
        for m in range(32):
            if pop[m ^ best] == 1:
                gap = eff[best] - eff[m]
                assert -1e-9 <= gap <= 1 / 5 + 1e-9

    def test_dominant_strategy_recovers_anchor(self):
        for seed in range(10):
            inst = make_random_closeness(3, 4, 1.0, seed=seed, alpha=0.5)
            for i in range(3):
                eff = self.effective(inst, i)
                assert dominant_strategy(inst, i) == int(np.argmax(eff))
                # the anchor's utility sits in [0.5, 1]
                assert 0.5 - 1e-9 <= eff.max() <= 1.0 + 1e-9

    def test_empty_set_gain_forced_zero(self):
        inst = make_random_closeness(3, 5, 1.0, seed=8, alpha=0.5)
        assert (inst.gain[:, 0] == 0.0).all()

    def test_alpha_zero_variant(self):
        inst = make_random_closeness(2, 4, 1.0, seed=5, alpha=0.0)
        assert (inst.gain[:, 0] == 0.0).all()
        checks = validate_instance(inst)
        assert all(c.ok for c in checks)

    def test_k_cap(self):
        with pytest.raises(MarketError):
            make_random_closeness(2, 13, 1.0, seed=1)


class TestGeneratorSpecs:
    def test_dispatch_matches_constructors(self):
        spec = GeneratorSpec(kind="singleton-conflict", n=3, epsilon=0.1)
        inst = build_instance(spec)
        ref = make_singleton_conflict(3, 0.1)
        assert np.array_equal(inst.gain, ref.gain)

        spec = GeneratorSpec(kind="joint-cycle", k=2, a=1, b=2, alpha=0.25)
        inst = build_instance(spec)
        ref = make_joint_cycle(2, 1, 2, 0.25)
        assert np.array_equal(inst.externality.table, ref.externality.table)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ParseError):
            GeneratorSpec(kind="mystery")

    def test_missing_fields_named(self):
        with pytest.raises(ParseError, match="requires fields"):
            build_instance(GeneratorSpec(kind="bundle-trap", n=3))

    def test_doc_round_trip(self):
        spec = GeneratorSpec(kind="random-closeness", n=3, k=5, lam=1.0, seed=12,
                             alpha=0.5)
        again = spec_from_dict(json.loads(json.dumps(spec_to_dict(spec))))
        assert again == spec

    def test_unknown_field_rejected(self):
        with pytest.raises(ParseError):
            spec_from_dict({"kind": "random-independent", "n": 2, "k": 2, "zeta": 1})


class TestFileRoundTrips:
    def test_every_constructor_round_trips(self, tmp_path):
        noise = NoiseModel(0.2, 0.1, "uniform")
        builders = [
            make_singleton_conflict(3, 0.1, noise),
            make_bundle_trap(4, 0.5, 0.01, noise),
            make_joint_cycle(2, 1, 2, 0.25, noise),
            make_symmetric_gap(4, 0.01, noise),
            make_random_independent(3, 3, seed=1, noise=noise),
            make_random_symmetric(3, 2, seed=2, noise=noise),
            make_random_closeness(3, 4, 1.0, seed=3, noise=noise),
        ]
        for idx, inst in enumerate(builders):
            path = tmp_path / f"i{idx}.json"
            save_instance(inst, path)
            again = load_instance(path)
            assert np.array_equal(again.gain, inst.gain)
            assert np.array_equal(again.externality.table, inst.externality.table)
            assert (again.n, again.k, again.alpha, again.lam, again.noise) == \
                (inst.n, inst.k, inst.alpha, inst.lam, inst.noise)
