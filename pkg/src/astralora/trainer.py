"""The hybrid training step and full runs with per-purpose query accounting."""
from __future__ import annotations

import csv
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import checkpoint_write
from .config import RunConfig, TrainConfig
from .data import Dataset
from .hybridnet import Network, build_network, loss
from .numlin import RngStream, make_streams
from .photonics import BlackBoxLayer, materialize
from .surrogate import SurrogateModel, init_oracle, init_sketch, ipsi_update
from .zograd import ZoConfig, estimate_batch

log = logging.getLogger(__name__)

PURPOSES = ("init", "forward", "zo", "psi", "eval", "diagnostic")
TRAINING_PURPOSES = ("forward", "zo", "psi")
METRICS_COLUMNS = ("step", "phase", "loss", "accuracy", "sm_rel_err",
                   "q_forward", "q_zo", "q_psi", "q_total", "wall_ms")


class TrainingDiverged(RuntimeError):
    def __init__(self, message, dump):
        super().__init__(message)
        self.dump = dump


class QueryLedger:
    """Attributes oracle-counter deltas to a purpose tag."""

    def __init__(self, layers):
        self.layers = list(layers)
        self.counts = dict.fromkeys(PURPOSES, 0)

    def counter(self):
        return sum(l.query_count for l in self.layers)

    @contextmanager
    def tag(self, purpose):
        before = self.counter()
        try:
            yield
        finally:
            self.counts[purpose] += self.counter() - before

    @property
    def training_total(self):
        return sum(self.counts[p] for p in TRAINING_PURPOSES)

    @property
    def total(self):
        return sum(self.counts.values())


@dataclass
class StepReport:
    step: int
    loss: float
    accuracy: float
    sm_rel_err: float | None
    queries: dict
    wall_ms: float


class BatchSampler:
    """Epoch-wise shuffled minibatches from a dedicated stream."""

    def __init__(self, n, batch_size, stream: RngStream):
        self.n, self.b, self.stream = n, min(batch_size, n), stream
        self._order = np.empty(0, dtype=np.int64)

    def next(self):
        if self._order.size < self.b:
            self._order = np.concatenate([self._order, self.stream.permutation(self.n)])
        idx, self._order = self._order[: self.b], self._order[self.b :]
        return idx


@dataclass
class TrainState:
    net: Network
    streams: dict
    ledger: QueryLedger
    step: int = 0


def measure_sm_error(layer: BlackBoxLayer, sm: SurrogateModel):
    """Relative Frobenius error of the surrogate against the materialized layer."""
    a = materialize(layer)
    return float(np.linalg.norm(a - sm.dense()) / np.linalg.norm(a))


def init_surrogates(state: TrainState, cfg: TrainConfig):
    with state.ledger.tag("init"):
        for _, node in state.net.hybrid_nodes():
            if cfg.sm_init == "oracle":
                node.sm = init_oracle(node.layer, cfg.rank)
            else:
                node.sm = init_sketch(node.layer, cfg.rank, cfg.oversample, state.streams["init"],
                                      m_probe=cfg.m_probe)


def make_state(run: RunConfig, d_in, n_classes, seed=None) -> TrainState:
    seed = run.train.seed if seed is None else seed
    streams = make_streams(seed)
    net = build_network(run.layers, d_in, n_classes, streams)
    state = TrainState(net, streams, QueryLedger(net.black_boxes()))
    init_surrogates(state, run.train)
    return state


def _dump(state, loss_value):
    return {
        "step": state.step,
        "loss": loss_value,
        "param_norms": {k: float(np.linalg.norm(v)) for k, v in state.net.parameters().items()},
        "bb_norms": [float(np.linalg.norm(n.layer.params)) for _, n in state.net.hybrid_nodes()],
        "queries": dict(state.ledger.counts),
    }


def train_step(state: TrainState, xb, yb, cfg: TrainConfig) -> StepReport:
    """One step: oracle forward, surrogate backward, SGD, ZO update of ``w``, I-PSI realignment."""
    t0 = time.perf_counter()
    net, ledger = state.net, state.ledger
    with ledger.tag("forward"):
        logits = net.forward(xb)
    value = loss(logits, yb)
    if not np.isfinite(value):
        raise TrainingDiverged(f"non-finite loss at step {state.step}", _dump(state, value))
    grads = net.backward(logits, yb)
    net.sgd_step(grads, cfg.eta)

    if cfg.eta_bb > 0:
        zo = ZoConfig(mu=cfg.mu, m_bb=cfg.m_bb, share_directions=cfg.share_directions)
        for _, node in net.hybrid_nodes():
            w0 = node.layer.params
            with ledger.tag("zo"):
                est = estimate_batch(node.layer, w0, node.x, node.bb_errors(), zo, state.streams["zo"])
            w1 = w0 - cfg.eta_bb * est.g
            if not np.all(np.isfinite(w1)):
                raise TrainingDiverged(f"non-finite black-box update at step {state.step}",
                                       _dump(state, value))
            node.layer.set_params(w1)
            if cfg.psi_updates:
                with ledger.tag("psi"):
                    node.sm = ipsi_update(node.sm, node.layer, w0, w1, cfg.m_sm, state.streams["psi"])

    sm_err = None
    if cfg.measure_sm_error and net.hybrid_nodes():
        with ledger.tag("diagnostic"):
            sm_err = float(np.mean([measure_sm_error(n.layer, n.sm) for _, n in net.hybrid_nodes()]))
    acc = float(np.mean(np.argmax(logits, axis=1) == yb))
    state.step += 1
    return StepReport(state.step, value, acc, sm_err, dict(ledger.counts),
                      1000.0 * (time.perf_counter() - t0))


def evaluate(state: TrainState, ds: Dataset):
    with state.ledger.tag("eval"):
        logits = state.net.forward(ds.features, train=False)
    return loss(logits, ds.labels), float(np.mean(np.argmax(logits, axis=1) == ds.labels))


def checkpoint_tensors(state: TrainState) -> dict:
    tensors = {k: np.array(v, dtype=np.float64) for k, v in state.net.parameters().items()}
    for i, node in state.net.hybrid_nodes():
        tensors[f"{i}.w"] = node.layer.params
        tensors[f"{i}.U"], tensors[f"{i}.S"], tensors[f"{i}.V"] = node.sm.U, node.sm.S, node.sm.V
    tensors["step"] = np.array(float(state.step))
    return tensors


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


@dataclass
class RunResult:
    rows: list
    final_loss: float
    final_accuracy: float
    queries: dict
    state: TrainState = field(repr=False)


def train_run(run: RunConfig, train: Dataset, test: Dataset, out_dir=None, seed=None) -> RunResult:
    """Train for ``run.train.steps`` steps; optionally write ``metrics.csv`` and ``checkpoint.bin``."""
    cfg = run.train
    state = make_state(run, train.dim, max(train.n_classes, test.n_classes), seed)
    sampler = BatchSampler(len(train), cfg.batch_size, state.streams["data"])
    rows = []

    def wall(ms):
        return ms if cfg.log_wall_time else 0

    def row(step, phase, loss_, acc, sm_err, wall_ms):
        c = state.ledger.counts
        rows.append([step, phase, loss_, acc, sm_err, c["forward"], c["zo"], c["psi"],
                     state.ledger.training_total, round(wall(wall_ms), 3)])

    test_loss, test_acc = float("nan"), float("nan")
    for _ in range(cfg.steps):
        idx = sampler.next()
        rep = train_step(state, train.features[idx], train.labels[idx], cfg)
        row(rep.step, "train", rep.loss, rep.accuracy, rep.sm_rel_err, rep.wall_ms)
        if rep.step == cfg.steps or (cfg.eval_every and rep.step % cfg.eval_every == 0):
            t0 = time.perf_counter()
            test_loss, test_acc = evaluate(state, test)
            row(rep.step, "eval", test_loss, test_acc, None, 1000.0 * (time.perf_counter() - t0))
            log.info("step %d: train loss %.4f, test acc %.4f", rep.step, rep.loss, test_acc)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics(rows, out / "metrics.csv")
        checkpoint_write(out / "checkpoint.bin", checkpoint_tensors(state))
    return RunResult(rows, test_loss, test_acc, dict(state.ledger.counts), state)


def write_metrics(rows, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for r in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in r])
