"""Round loop protocol: metrics, test-before-train causality, target-label
quarantine, determinism, ablation gating, and the numeric abort path."""

import dataclasses
import math

import numpy as np
import pytest

from streamadapt.engine import AblationFlags, evaluate, run
from streamadapt.errors import NumericalAbort, ValidationError
from streamadapt.model import ModelConfig, init_network, predict
from streamadapt.streams import (
    Rounds,
    StreamSet,
    UnlabeledBatch,
    build_rounds,
    gen_sea,
)

from conftest import scrambled_net


def small_rounds(seed=0, n=900, sources=2, rounds=3):
    ds = gen_sea(n, rng=np.random.default_rng([seed, 0]))
    return build_rounds(ds, n_sources=sources, rounds=rounds)


class TestEvaluate:
    def test_all_correct(self):
        net = scrambled_net(1, 1, 2, seed=0)
        net.W_out[:] = 0.0
        net.b_out[:] = [5.0, 0.0]  # always predicts the first class
        X = np.random.default_rng(0).random((6, 1))
        ev = evaluate(net, X, np.zeros(6, dtype=int))
        assert ev.accuracy == 1.0
        assert ev.precision[0] == 1.0 and ev.recall[0] == 1.0

    def test_absent_class_is_flagged_degenerate(self):
        net = scrambled_net(1, 1, 2, seed=0)
        net.W_out[:] = 0.0
        net.b_out[:] = [5.0, 0.0]
        X = np.random.default_rng(0).random((6, 1))
        ev = evaluate(net, X, np.zeros(6, dtype=int))
        assert ev.degenerate[1]
        assert ev.precision[1] == 0.0 and ev.recall[1] == 0.0
        assert not ev.degenerate[0]

    def test_half_right_confusion_arithmetic(self):
        # Predictions (cls0, cls0, cls1, cls1) against truth
        # (cls0, cls1, cls0, cls1): accuracy and both class-0 rates are 0.5.
        net = scrambled_net(1, 1, 2, seed=1)
        net.W_enc[:] = 20.0
        net.b_enc[:] = -10.0
        net.W_out[:] = [[-10.0, 10.0]]
        net.b_out[:] = [5.0, -5.0]
        X = np.array([[0.0], [0.0], [1.0], [1.0]])
        assert list(np.argmax(predict(net, X), axis=1)) == [0, 0, 1, 1]
        ev = evaluate(net, X, np.array([0, 1, 0, 1]))
        assert ev.accuracy == 0.5
        assert ev.precision[0] == 0.5 and ev.recall[0] == 0.5

    def test_out_of_range_labels_rejected(self):
        net = scrambled_net(1, 1, 2)
        with pytest.raises(ValidationError):
            evaluate(net, np.zeros((2, 1)), np.array([0, 2]))


class TestZeroStep:
    def test_zero_step_run_is_inert(self):
        rounds = small_rounds(seed=3, rounds=1)
        cfg = ModelConfig(learning_rate=0.0, rng_seed=3)
        off = run(cfg, AblationFlags(False, False, False), rounds)
        on = run(cfg, AblationFlags(True, True, True), rounds)
        for a, b in zip(off.net.params(), on.net.params()):
            assert np.array_equal(a, b)
        assert on.records[0].grow_events == 0
        assert on.records[0].prune_events == 0
        # Still a fresh network: nothing trained it.
        fresh = init_network(3, 1, 2, np.random.default_rng([3, 1]))
        for a, b in zip(on.net.params(), fresh.params()):
            assert np.array_equal(a, b)


class TestCausality:
    def test_each_round_is_scored_with_the_previous_rounds_parameters(self):
        rounds = small_rounds(seed=1, n=1200, rounds=4)
        snapshots = {}
        res = run(ModelConfig(rng_seed=1), AblationFlags(), rounds,
                  on_round_end=lambda k, net: snapshots.__setitem__(k, net.copy()))
        # Round 1 is scored by the untrained initial network.
        first = init_network(3, 1, 2, np.random.default_rng([1, 1]))
        ss = rounds.items[0]
        ev = evaluate(first, ss.target.X, ss.target.labels_for_evaluation())
        assert ev.accuracy == res.records[0].acc_target
        # Every later round is scored by the previous round's final state.
        for ss in rounds.items[1:]:
            prev = snapshots[ss.round_index - 1]
            ev = evaluate(prev, ss.target.X, ss.target.labels_for_evaluation())
            assert ev.accuracy == res.records[ss.round_index - 1].acc_target
            for j, src in enumerate(ss.sources):
                ev = evaluate(prev, src.X, src.y)
                assert ev.accuracy == \
                    res.records[ss.round_index - 1].acc_sources[j]


class TestQuarantine:
    def test_target_labels_cannot_influence_training(self):
        rounds = small_rounds(seed=2, n=1200, rounds=3)
        scrambled_items = []
        for ss in rounds.items:
            y = ss.target.labels_for_evaluation()
            scrambled_items.append(StreamSet(
                sources=ss.sources,
                target=UnlabeledBatch(X=ss.target.X, _y_hidden=1 - y),
                round_index=ss.round_index))
        scrambled = Rounds(items=scrambled_items, n_features=rounds.n_features,
                           n_classes=rounds.n_classes)
        a = run(ModelConfig(rng_seed=2), AblationFlags(), rounds)
        b = run(ModelConfig(rng_seed=2), AblationFlags(), scrambled)
        for pa, pb in zip(a.net.params(), b.net.params()):
            assert np.array_equal(pa, pb)
        assert [r.grow_events for r in a.records] == [r.grow_events for r in b.records]
        assert [r.cmd_values for r in a.records] == [r.cmd_values for r in b.records]
        # Only the evaluation changed.
        assert any(ra.acc_target != rb.acc_target
                   for ra, rb in zip(a.records, b.records))

    def test_run_completes_without_any_target_labels(self):
        rounds = small_rounds(seed=4, rounds=2)
        blind_items = [StreamSet(sources=ss.sources,
                                 target=ss.target.without_labels(),
                                 round_index=ss.round_index)
                       for ss in rounds.items]
        blind = Rounds(items=blind_items, n_features=rounds.n_features,
                       n_classes=rounds.n_classes)
        ref = run(ModelConfig(rng_seed=4), AblationFlags(), rounds)
        res = run(ModelConfig(rng_seed=4), AblationFlags(), blind)
        assert all(math.isnan(r.acc_target) for r in res.records)
        assert all(all(r.degenerate) for r in res.records)
        # Training is untouched by the missing evaluation labels.
        for pa, pb in zip(ref.net.params(), res.net.params()):
            assert np.array_equal(pa, pb)


class TestDeterminism:
    def test_same_seed_reproduces_everything_but_wall_clock(self):
        rounds = small_rounds(seed=5, rounds=3)
        a = run(ModelConfig(rng_seed=5), AblationFlags(), rounds)
        b = run(ModelConfig(rng_seed=5), AblationFlags(), rounds)
        for ra, rb in zip(a.records, b.records):
            assert ra.acc_target == rb.acc_target
            assert ra.acc_sources == rb.acc_sources
            assert ra.hidden_nodes == rb.hidden_nodes
            assert ra.grow_events == rb.grow_events
            assert ra.prune_events == rb.prune_events
            assert ra.cmd_values == rb.cmd_values
        for pa, pb in zip(a.net.params(), b.net.params()):
            assert np.array_equal(pa, pb)

    def test_different_seeds_differ(self):
        rounds = small_rounds(seed=6, rounds=2)
        a = run(ModelConfig(rng_seed=6), AblationFlags(), rounds)
        b = run(ModelConfig(rng_seed=7), AblationFlags(), rounds)
        assert any(not np.array_equal(pa, pb)
                   for pa, pb in zip(a.net.params(), b.net.params()))


class TestAblationGating:
    def test_each_flag_changes_the_run(self):
        rounds = small_rounds(seed=8, n=1200, rounds=3)
        cfg = ModelConfig(rng_seed=8)
        full = run(cfg, AblationFlags(), rounds)
        for flags in (AblationFlags(enable_reweight=False),
                      AblationFlags(enable_structure=False),
                      AblationFlags(enable_cmd=False)):
            other = run(cfg, flags, rounds)
            assert any(
                a.shape != b.shape or not np.array_equal(a, b)
                for a, b in zip(full.net.params(), other.net.params()))

    def test_structure_off_keeps_node_count_fixed(self):
        rounds = small_rounds(seed=9, rounds=3)
        res = run(ModelConfig(rng_seed=9), AblationFlags(enable_structure=False),
                  rounds)
        assert res.final_hidden_nodes == 1
        assert all(r.grow_events == 0 and r.prune_events == 0 for r in res.records)

    def test_discrepancies_are_reported_even_when_not_applied(self):
        rounds = small_rounds(seed=10, rounds=2, sources=3)
        res = run(ModelConfig(rng_seed=10), AblationFlags(enable_cmd=False), rounds)
        for r in res.records:
            assert len(r.cmd_values) == 3
            assert all(np.isfinite(v) and v >= 0 for v in r.cmd_values)


class TestSummary:
    def test_summary_means_cover_all_rounds_by_default(self):
        rounds = small_rounds(seed=11, rounds=3)
        res = run(ModelConfig(rng_seed=11), AblationFlags(), rounds)
        assert res.mean_target_accuracy == pytest.approx(
            float(np.mean([r.acc_target for r in res.records])), abs=1e-12)

    def test_cold_start_round_can_be_left_out(self):
        rounds = small_rounds(seed=11, rounds=3)
        res = run(ModelConfig(rng_seed=11), AblationFlags(), rounds,
                  summary_skip_first=True)
        assert res.mean_target_accuracy == pytest.approx(
            float(np.mean([r.acc_target for r in res.records[1:]])), abs=1e-12)
        assert len(res.records) == 3  # records themselves are all kept


class TestNumericalAbort:
    def test_poisoned_features_abort_with_phase_and_round(self):
        rounds = small_rounds(seed=12, rounds=3)
        items = list(rounds.items)
        bad_src = dataclasses.replace(items[1].sources[0])
        bad_X = bad_src.X.copy()
        bad_X[0, 0] = float("nan")
        bad_src = dataclasses.replace(bad_src, X=bad_X)
        items[1] = StreamSet(sources=[bad_src] + list(items[1].sources[1:]),
                             target=items[1].target,
                             round_index=items[1].round_index)
        poisoned = Rounds(items=items, n_features=rounds.n_features,
                          n_classes=rounds.n_classes)
        with pytest.raises(NumericalAbort) as err:
            run(ModelConfig(rng_seed=12), AblationFlags(), poisoned)
        assert err.value.round_index == 2
        assert "reconstruction" in err.value.phase
        assert "round 2" in str(err.value)
