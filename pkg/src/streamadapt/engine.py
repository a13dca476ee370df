"""Training orchestration: prequential test-then-train over rounds.

Each round runs, in order: density update from the source batches, a
test pass with the pre-update parameters, per-source generative then
per-sample discriminative training (with structural grow/prune), a
target generative step, the unsupervised smoothness step on the target
batch, and one discrepancy-weighted decay step per source.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from streamadapt import kernels
from streamadapt.errors import NumericalAbort, ValidationError
from streamadapt.model import (
    ModelConfig,
    Network,
    apply_gradients,
    corrupt,
    encode,
    grow_node,
    init_network,
    predict,
    prune_node,
)
from streamadapt.objectives import (
    cmd,
    cmd_reg_loss_grad,
    recon_loss_grad,
    smoothness_loss_grad,
)
from streamadapt.streams import Rounds
from streamadapt.structure import (
    DensityEstimate,
    SpcState,
    least_significant_node,
    update_density,
)


@dataclass
class AblationFlags:
    """Feature switches for the component studies; all on by default."""

    enable_reweight: bool = True
    enable_structure: bool = True
    enable_cmd: bool = True


@dataclass
class EvalResult:
    """Classification metrics of one batch; ``degenerate`` marks classes
    whose precision or recall denominator was empty (reported as 0)."""

    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    degenerate: np.ndarray


@dataclass
class TraceRecord:
    """One evaluation round: test metrics (pre-update parameters) plus
    that round's training activity."""

    round_index: int
    acc_target: float
    acc_sources: tuple[float, ...]
    hidden_nodes: int
    grow_events: int
    prune_events: int
    cmd_values: tuple[float, ...]
    train_ms: float
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    degenerate: tuple[bool, ...]


@dataclass
class RunResult:
    """All round records plus summary aggregates and final parameters."""

    records: list[TraceRecord]
    mean_target_accuracy: float
    mean_source_accuracies: tuple[float, ...]
    mean_precision: tuple[float, ...]
    mean_recall: tuple[float, ...]
    final_hidden_nodes: int
    total_train_ms: float
    net: Network = field(repr=False)


def evaluate(net: Network, X: np.ndarray, y_true: np.ndarray) -> EvalResult:
    """Accuracy plus per-class precision/recall of argmax predictions."""
    y_true = np.asarray(y_true, dtype=int)
    if y_true.size and (y_true.min() < 0 or y_true.max() >= net.m):
        raise ValidationError(
            f"labels must lie in [0, {net.m}), got range "
            f"[{y_true.min()}, {y_true.max()}]"
        )
    pred = np.argmax(predict(net, X), axis=1)
    accuracy = float(np.mean(pred == y_true))
    precision = np.zeros(net.m)
    recall = np.zeros(net.m)
    degenerate = np.zeros(net.m, dtype=bool)
    for c in range(net.m):
        tp = int(np.sum((pred == c) & (y_true == c)))
        pp = int(np.sum(pred == c))
        ap = int(np.sum(y_true == c))
        precision[c] = tp / pp if pp else 0.0
        recall[c] = tp / ap if ap else 0.0
        degenerate[c] = pp == 0 or ap == 0
    return EvalResult(accuracy=accuracy, precision=precision, recall=recall,
                      degenerate=degenerate)


def _check_finite(loss: float, phase: str, round_index: int) -> None:
    if not np.isfinite(loss):
        raise NumericalAbort(phase, round_index, float(loss))


def _validate_rounds(rounds: Rounds) -> None:
    if not rounds.items:
        raise ValidationError("need at least one round")
    u, m = rounds.n_features, rounds.n_classes
    for ss in rounds.items:
        if not ss.sources:
            raise ValidationError(f"round {ss.round_index}: no source streams")
        for j, src in enumerate(ss.sources):
            if src.X.ndim != 2 or src.X.shape[1] != u:
                raise ValidationError(
                    f"round {ss.round_index}: source {j + 1} has feature "
                    f"width {src.X.shape[1:]}, expected {u}"
                )
            if src.y.size and (src.y.min() < 0 or src.y.max() >= m):
                raise ValidationError(
                    f"round {ss.round_index}: source {j + 1} labels exceed "
                    f"the {m} known classes"
                )
        if ss.target.X.ndim != 2 or ss.target.X.shape[1] != u:
            raise ValidationError(
                f"round {ss.round_index}: target has feature width "
                f"{ss.target.X.shape[1:]}, expected {u}"
            )


def _discriminative_pass(net: Network, X: np.ndarray, y: np.ndarray,
                         est: DensityEstimate, spc: SpcState,
                         config: ModelConfig, use_structure: bool,
                         rng: np.random.Generator):
    """Run the per-sample kernel over one source batch, applying any
    structural events it surfaces.  Returns (net, loss sum, grows, prunes)."""
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=np.int64)
    mu = est.mean
    var = est.variance
    ce_sum = 0.0
    grows = prunes = 0
    start = 0
    while True:
        next_i, event, part = kernels.discriminative_pass(
            net.W_enc, net.b_enc, net.W_out, net.b_out, X, y, mu, var,
            spc.vec, config.learning_rate, use_structure, start)
        ce_sum += part
        if event == 0:
            break
        if event == 1:
            net = grow_node(net, rng)
            grows += 1
        else:
            net = prune_node(net, least_significant_node(net, est))
            prunes += 1
        ce_sum += kernels.ce_sgd_step(
            net.W_enc, net.b_enc, net.W_out, net.b_out, X[next_i],
            int(y[next_i]), config.learning_rate)
        start = next_i + 1
    return net, ce_sum, grows, prunes


def run(config: ModelConfig, ablation: AblationFlags, rounds: Rounds, *,
        summary_skip_first: bool = False, on_round_end=None) -> RunResult:
    """Execute the full protocol and collect one record per round.

    ``on_round_end(round_index, net)`` is called after each round's
    training with the then-current network (callers snapshot via
    ``net.copy()``).  ``summary_skip_first`` drops the cold-start round
    from the summary averages only; its record is always kept.
    """
    _validate_rounds(rounds)
    u, m = rounds.n_features, rounds.n_classes
    # A zero step size makes the whole run inert (an evaluation-only
    # pass), so structural moves -- parameter changes too -- stay off.
    use_structure = ablation.enable_structure and config.learning_rate > 0
    rng = np.random.default_rng([config.rng_seed, 1])
    net = init_network(u, config.initial_nodes, m, rng)
    est = DensityEstimate.empty(u)
    spc = SpcState()
    records: list[TraceRecord] = []
    nan_m = tuple([float("nan")] * m)

    for ss in rounds.items:
        k = ss.round_index
        t0 = time.perf_counter()
        for src in ss.sources:
            update_density(est, src.X)
        density_dt = time.perf_counter() - t0

        acc_sources = tuple(
            evaluate(net, src.X, src.y).accuracy for src in ss.sources)
        y_target = ss.target.labels_for_evaluation()
        if y_target is None:
            acc_target = float("nan")
            prec, rec, degen = nan_m, nan_m, tuple([True] * m)
        else:
            ev = evaluate(net, ss.target.X, y_target)
            acc_target = ev.accuracy
            prec = tuple(ev.precision.tolist())
            rec = tuple(ev.recall.tolist())
            degen = tuple(bool(b) for b in ev.degenerate)

        t1 = time.perf_counter()
        grow_events = prune_events = 0
        for j, src in enumerate(ss.sources):
            noisy = corrupt(src.X, config.noise_fraction, rng)
            loss, g = recon_loss_grad(net, src.X, noisy)
            _check_finite(loss, f"source {j + 1} reconstruction", k)
            net = apply_gradients(net, g, config.learning_rate)

            net, ce_sum, grows, prunes = _discriminative_pass(
                net, src.X, src.y, est, spc, config,
                use_structure, rng)
            _check_finite(ce_sum, f"source {j + 1} discriminative", k)
            grow_events += grows
            prune_events += prunes

        noisy = corrupt(ss.target.X, config.noise_fraction, rng)
        loss, g = recon_loss_grad(net, ss.target.X, noisy)
        _check_finite(loss, "target reconstruction", k)
        net = apply_gradients(net, g, config.learning_rate)

        if ablation.enable_reweight:
            loss, g = smoothness_loss_grad(net, ss.target.X,
                                           bandwidth=config.bandwidth)
            _check_finite(loss, "smoothness", k)
            # The smoothness objective sums over all ordered sample
            # pairs while every other phase steps on a per-sample mean;
            # stepping on its pair mean keeps the phases at one scale
            # (the raw sum overwhelms the classifier at any batch size).
            n_t = ss.target.X.shape[0]
            pairs = n_t * (n_t - 1)
            if pairs > 0:
                net = apply_gradients(net, g, config.learning_rate / pairs)

        cmd_values = []
        h_target = None
        for j, src in enumerate(ss.sources):
            if ablation.enable_cmd:
                loss, value, g = cmd_reg_loss_grad(
                    net, src.X, ss.target.X, config.alpha, config.cmd_order)
                _check_finite(loss, f"source {j + 1} discrepancy", k)
                net = apply_gradients(net, g, config.learning_rate)
            else:
                if h_target is None:
                    h_target = encode(net, ss.target.X)
                value = cmd(encode(net, src.X), h_target, config.cmd_order,
                            0.0, 1.0)
            cmd_values.append(value)
        train_ms = (density_dt + time.perf_counter() - t1) * 1000.0

        records.append(TraceRecord(
            round_index=k, acc_target=acc_target, acc_sources=acc_sources,
            hidden_nodes=net.R, grow_events=grow_events,
            prune_events=prune_events, cmd_values=tuple(cmd_values),
            train_ms=train_ms, precision=prec, recall=rec, degenerate=degen))
        if on_round_end is not None:
            on_round_end(k, net)

    summ = records[1:] if summary_skip_first and len(records) > 1 else records
    n_src = len(rounds.items[0].sources)
    return RunResult(
        records=records,
        mean_target_accuracy=float(np.mean([r.acc_target for r in summ])),
        mean_source_accuracies=tuple(
            float(np.mean([r.acc_sources[j] for r in summ]))
            for j in range(n_src)),
        mean_precision=tuple(
            float(np.mean([r.precision[c] for r in summ])) for c in range(m)),
        mean_recall=tuple(
            float(np.mean([r.recall[c] for r in summ])) for c in range(m)),
        final_hidden_nodes=net.R,
        total_train_ms=float(sum(r.train_ms for r in records)),
        net=net,
    )
