"""Parity between the compiled hot-loop backend and its pure reference:
identical losses, identical parameter mutations, identical structural
events on the same inputs."""

import numpy as np
import pytest

import streamadapt.kernels as kernels
from streamadapt.kernels import _ref
from streamadapt.structure import SPC_SLOTS, spc_update_vec

from conftest import scrambled_net

_hot = pytest.importorskip(
    "streamadapt.kernels._hot",
    reason="compiled backend not built; parity needs both implementations",
)


def _param_arrays(seed, u=4, R=3, m=3):
    net = scrambled_net(u, R, m, seed=seed)
    return (np.ascontiguousarray(net.W_enc), np.ascontiguousarray(net.b_enc),
            np.ascontiguousarray(net.W_out), np.ascontiguousarray(net.b_out))


def _batch(seed, n=40, u=4, m=3):
    rng = np.random.default_rng(seed)
    return rng.random((n, u)), rng.integers(0, m, size=n).astype(np.int64)


class TestBackendSelection:
    def test_active_backend_is_reported(self):
        assert kernels.BACKEND in ("pure", "compiled")
        assert kernels.BACKEND == "compiled"  # _hot imported fine above


class TestSingleStepParity:
    def test_loss_and_mutations_agree(self):
        for seed in range(10):
            pa = _param_arrays(seed)
            pb = tuple(p.copy() for p in pa)
            X, y = _batch(1000 + seed, n=15)
            for i in range(15):
                la = _ref.ce_sgd_step(*pa, X[i], int(y[i]), 0.05)
                lb = _hot.ce_sgd_step(*pb, X[i], int(y[i]), 0.05)
                assert la == pytest.approx(lb, rel=1e-12, abs=1e-12)
            for a, b in zip(pa, pb):
                assert np.allclose(a, b, atol=1e-12)

    def test_losses_are_finite_and_positive(self):
        pa = _param_arrays(0)
        X, y = _batch(0, n=5)
        loss = _hot.ce_sgd_step(*pa, X[0], int(y[0]), 0.01)
        assert np.isfinite(loss) and loss > 0


class TestPassParity:
    def _run_pass(self, impl, seed, use_structure):
        pa = _param_arrays(seed)
        X, y = _batch(2000 + seed, n=60)
        rng = np.random.default_rng(3000 + seed)
        mu = rng.random(4)
        var = rng.random(4) * 0.1
        vec = np.zeros(SPC_SLOTS)
        events = []
        start = 0
        while True:
            nxt, event, ce = impl.discriminative_pass(
                *pa, X, y, mu, var, vec, 0.05, use_structure, start)
            events.append((nxt, event, ce))
            if event == 0:
                break
            # Keep parameters unchanged on events so both backends stay on
            # the same trajectory; just resume after the flagged sample.
            start = nxt + 1
            if start >= X.shape[0]:
                break
        return pa, vec, events

    @pytest.mark.parametrize("use_structure", [False, True])
    def test_full_pass_matches_reference(self, use_structure):
        for seed in range(8):
            pa, vec_a, ev_a = self._run_pass(_ref, seed, use_structure)
            pb, vec_b, ev_b = self._run_pass(_hot, seed, use_structure)
            assert len(ev_a) == len(ev_b)
            for (ia, ea, ca), (ib, eb, cb) in zip(ev_a, ev_b):
                assert ia == ib and ea == eb
                assert ca == pytest.approx(cb, rel=1e-12, abs=1e-12)
            for a, b in zip(pa, pb):
                assert np.allclose(a, b, atol=1e-12)
            assert np.allclose(vec_a, vec_b, atol=1e-12)

    def test_event_interrupts_before_the_samples_step(self):
        # Prime the chart so the third consulted sample must fire, and
        # check the flagged sample's gradient was not applied.
        for impl in (_ref, _hot):
            pa = _param_arrays(5)
            before = tuple(p.copy() for p in pa)
            X, y = _batch(5, n=3)
            vec = np.zeros(SPC_SLOTS)
            spc_update_vec(vec, 0.10, 0.01)
            spc_update_vec(vec, 0.12, 0.01)
            # Saturate the statistics so the next consultation fires grow.
            mu = np.full(4, 0.5)
            var = np.zeros(4)
            # Force a guaranteed-high bias: point the labels away from the
            # head's argmax by trying every class on sample 0.
            fired = False
            for cls in range(3):
                y2 = y.copy()
                y2[0] = cls
                vec2 = vec.copy()
                p2 = tuple(p.copy() for p in before)
                nxt, event, ce = impl.discriminative_pass(
                    *p2, X, y2, mu, var, vec2, 0.05, True, 0)
                if event == 1 and nxt == 0:
                    fired = True
                    assert ce == 0.0
                    for a, b in zip(p2, before):
                        assert np.array_equal(a, b)
            assert fired

    def test_prune_suppressed_on_single_node(self):
        # One hidden node: a prune signal is swallowed (event stays 0 or
        # grow), never surfaced as event 2.
        for impl in (_ref, _hot):
            net = scrambled_net(4, 1, 3, seed=9)
            pa = (np.ascontiguousarray(net.W_enc), np.ascontiguousarray(net.b_enc),
                  np.ascontiguousarray(net.W_out), np.ascontiguousarray(net.b_out))
            X, y = _batch(9, n=50)
            rng = np.random.default_rng(9)
            mu, var = rng.random(4), rng.random(4) * 0.1
            vec = np.zeros(SPC_SLOTS)
            start = 0
            while True:
                nxt, event, _ = impl.discriminative_pass(
                    *pa, X, y, mu, var, vec, 0.05, True, start)
                assert event != 2
                if event == 0:
                    break
                start = nxt + 1
                if start >= 50:
                    break

    def test_structure_off_consults_no_chart(self):
        for impl in (_ref, _hot):
            pa = _param_arrays(11)
            X, y = _batch(11, n=20)
            vec = np.zeros(SPC_SLOTS)
            nxt, event, _ = impl.discriminative_pass(
                *pa, X, y, np.zeros(4), np.zeros(4), vec, 0.05, False, 0)
            assert (nxt, event) == (20, 0)
            assert np.all(vec == 0)
