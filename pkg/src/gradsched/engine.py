"""Deterministic discrete-event simulation of K learners driving one server.

Simulated wall time exists only to order gradient arrivals: learners draw
compute durations from per-learner seeded streams, finished gradients are
delivered in (time, sequence) order, and the server applies or parks them
according to the policy. Server-side work costs nothing; a blocked learner
consumes no time while parked. Each learner has exactly one gradient in
flight, so a run is a pure function of its config.

Epoch accounting is update-driven: with n training examples, batch size B
and K learners, epoch e completes the moment the server has applied
e * ceil(n/(B*K)) * K updates, and accuracy is measured on the server
parameters at exactly that instant. The per-epoch budget is a multiple of
K so scheduled rounds tile epochs exactly.
"""

import math
import os
from dataclasses import dataclass, field
from heapq import heappop, heappush
from itertools import count
from typing import NamedTuple

import numpy as np

from .data import generate_synthetic_split, load_idx, partition_noniid, partition_partial, sample_batch
from .metrics import RunResult, make_result
from .models import ModelSpec, accuracy, gradient, init_params
from .optim import SvrgSnapshot, lr_at, svrg_local_gradient
from .schedulers import (
    SVRG_FAMILIES,
    MOMENTUMLESS_FAMILIES,
    AsyncServer,
    GsgmServer,
    SspServer,
    local_momentum_wrap,
    parse_policy,
    shard_full_gradient,
)

TRACE_COLUMNS = (
    "time",
    "kind",
    "learner",
    "clock",
    "epoch",
    "round",
    "eta",
    "grad_norm",
    "accuracy",
)


@dataclass(frozen=True)
class SpeedModel:
    """Per-computation duration model for the learners.

    uniform: every computation takes exactly ``mean``.
    lognormal: mean-preserving jitter, mean * exp(sigma*Z - sigma^2/2).
    straggler: lognormal base, with learners listed in ``stragglers``
    slowed down by ``slowdown``.
    """

    kind: str = "lognormal"
    mean: float = 1.0
    sigma: float = 0.5
    stragglers: tuple = ()
    slowdown: float = 10.0

    def __post_init__(self):
        if self.kind not in ("uniform", "lognormal", "straggler"):
            raise ValueError(f"unknown speed model kind {self.kind!r}")
        if not self.mean > 0:
            raise ValueError(f"speed mean must be positive, got {self.mean}")
        if self.sigma < 0:
            raise ValueError(f"speed sigma must be >= 0, got {self.sigma}")
        if not self.slowdown > 0:
            raise ValueError(f"slowdown must be positive, got {self.slowdown}")
        object.__setattr__(self, "stragglers", tuple(self.stragglers))
        if self.kind != "straggler" and self.stragglers:
            raise ValueError("stragglers are only meaningful for kind='straggler'")


class SpeedSampler:
    """Seeded per-learner compute-time streams; every draw is positive."""

    def __init__(self, model: SpeedModel, num_learners: int, seed_seq):
        bad = [k for k in model.stragglers if not 1 <= k <= num_learners]
        if bad:
            raise ValueError(f"straggler ids {bad} outside 1..{num_learners}")
        self.model = model
        self._rngs = {
            k + 1: np.random.default_rng(child)
            for k, child in enumerate(seed_seq.spawn(num_learners))
        }
        self._factor = {
            k: model.slowdown if (model.kind == "straggler" and k in model.stragglers) else 1.0
            for k in self._rngs
        }

    def next_time(self, learner: int) -> float:
        m = self.model
        if m.kind == "uniform":
            return m.mean
        base = m.mean
        if m.sigma > 0:
            z = self._rngs[learner].standard_normal()
            base = m.mean * math.exp(m.sigma * z - 0.5 * m.sigma * m.sigma)
        return base * self._factor[learner]


class Event(NamedTuple):
    time: float
    seq: int
    learner: int


class EventQueue:
    """Min-heap of events ordered by (time, push sequence).

    The sequence number makes simultaneous arrivals pop in push order, so
    ties are deterministic.
    """

    def __init__(self):
        self._heap = []
        self._seq = count()

    def push(self, time: float, learner: int) -> None:
        heappush(self._heap, Event(time, next(self._seq), learner))

    def pop(self) -> Event:
        if not self._heap:
            raise RuntimeError("event queue is empty")
        return heappop(self._heap)

    def __len__(self) -> int:
        return len(self._heap)


def next_event(queue: EventQueue) -> Event:
    """Pop the earliest pending event (ties by push order)."""
    return queue.pop()


@dataclass
class RunCapture:
    """Optional instrumentation collected during run_experiment.

    pushes lists every gradient the learners handed to the server, in
    arrival order and including parked ones, which is enough to replay the
    whole run against a fresh server. applied_w / directions mirror
    server.records entry for entry. round_velocities snapshots the
    scheduled policy's velocity right after each restoration.
    """

    arrivals: list = field(default_factory=list)  # (time, learner)
    pushes: list = field(default_factory=list)  # (learner, payload, eta)
    records: list = field(default_factory=list)  # UpdateRecord, clock order
    directions: list = field(default_factory=list)  # applied vector per record
    applied_w: list = field(default_factory=list)  # server w after each record
    round_velocities: list = field(default_factory=list)  # (round, velocity)
    w0: np.ndarray | None = None  # initial parameters, set by the run


def _make_server(family, threshold, w0, K, alpha, callback):
    if family in ("gsgm", "gsgm_svrg"):
        return GsgmServer(w0, K, alpha, update_callback=callback)
    if family in ("async", "asvrg"):
        return AsyncServer(w0, K, local_momentum=False, update_callback=callback)
    if family == "async_lm":
        return AsyncServer(w0, K, local_momentum=True, update_callback=callback)
    if family in ("ssp", "dvrg"):
        return SspServer(w0, K, threshold, local_momentum=False, update_callback=callback)
    if family == "ssp_lm":
        return SspServer(w0, K, threshold, local_momentum=True, update_callback=callback)
    raise ValueError(f"unknown policy family {family!r}")


class _Simulation:
    def __init__(self, config, capture):
        self.config = config
        self.capture = capture
        self.family, self.threshold = parse_policy(config.policy)
        self.local_momentum = self.family.endswith("_lm")
        # Momentumless policies run at 10x the base rate for comparability.
        self.lr_scale = 10.0 if self.family in MOMENTUMLESS_FAMILIES else 1.0

        ss = np.random.SeedSequence(config.seed)
        data_ss, part_ss, init_ss, batch_ss, speed_ss = ss.spawn(5)

        d = config.dataset
        if d.kind == "synthetic":
            self.train, self.test = generate_synthetic_split(
                d.num_classes, d.per_class, d.test_per_class, d.input_dim,
                d.separation, data_ss,
            )
        else:
            self.train = load_idx(d.images, d.labels)
            self.test = load_idx(d.test_images, d.test_labels)

        K = config.num_learners
        if config.noniid_fraction == 1.0:
            self.shards = partition_noniid(self.train, K, part_ss)
        else:
            self.shards = partition_partial(
                self.train, K, config.noniid_fraction, part_ss
            )
        smallest = min(s.size for s in self.shards)
        if config.hyperparams.batch_size > smallest:
            raise ValueError(
                f"batch_size {config.hyperparams.batch_size} exceeds the smallest "
                f"shard ({smallest} examples)"
            )

        self.spec = ModelSpec(
            config.model_kind,
            input_dim=self.train.input_dim,
            num_classes=self.train.num_classes,
            hidden_dim=config.hidden_dim,
        )
        self.w0 = init_params(self.spec, np.random.default_rng(init_ss))
        self.batch_rngs = {
            k + 1: np.random.default_rng(child)
            for k, child in enumerate(batch_ss.spawn(K))
        }
        self.sampler = SpeedSampler(config.speed_model, K, speed_ss)

        h = config.hyperparams
        n = len(self.train)
        self.updates_per_epoch = math.ceil(n / (h.batch_size * K)) * K
        if self.family in SVRG_FAMILIES:
            self.total_epochs = config.outer_loops * config.inner_loops
        else:
            self.total_epochs = config.epochs

        if capture is not None:
            capture.w0 = self.w0.copy()
        self.server = _make_server(
            self.family, self.threshold, self.w0, K, h.alpha, self._on_update
        )
        self.views = {k: self.w0.copy() for k in self.batch_rngs}
        self.velocities = (
            {k: np.zeros_like(self.w0) for k in self.batch_rngs}
            if self.local_momentum
            else None
        )
        self.now = 0.0
        self.events = EventQueue()
        self.series = []
        self.trace_rows = []
        self._last_round_seen = 0

    # -- update observation hook (runs inside server.on_gradient) ----------

    def _on_update(self, rec, direction):
        self.trace_rows.append(
            {
                "time": self.now,
                "kind": "update",
                "learner": rec.learner,
                "clock": rec.clock,
                "round": rec.round_index,
                "eta": rec.eta,
                "grad_norm": rec.grad_norm,
            }
        )
        cap = self.capture
        if cap is not None:
            cap.records.append(rec)
            cap.directions.append(np.array(direction))
            cap.applied_w.append(self.server.w.copy())
            if (
                isinstance(self.server, GsgmServer)
                and rec.round_index != self._last_round_seen
            ):
                self._last_round_seen = rec.round_index
                cap.round_velocities.append(
                    (rec.round_index, self.server.velocity.copy())
                )
        if rec.clock % self.updates_per_epoch == 0:
            epoch = rec.clock // self.updates_per_epoch
            if epoch <= self.total_epochs:
                acc = accuracy(self.spec, self.server.w, self.test)
                self.series.append((epoch, acc))
                self.trace_rows.append(
                    {
                        "time": self.now,
                        "kind": "epoch",
                        "clock": rec.clock,
                        "epoch": epoch,
                        "accuracy": acc,
                    }
                )

    # -- event plumbing -----------------------------------------------------

    def _schedule(self, learner):
        self.events.push(self.now + self.sampler.next_time(learner), learner)

    def _deliver(self, replies):
        for j, w_j in replies:
            self.views[j] = w_j
            self._schedule(j)

    def _process_arrival(self, grad_fn, eta):
        ev = next_event(self.events)
        self.now = ev.time
        k = ev.learner
        self.trace_rows.append({"time": self.now, "kind": "arrival", "learner": k})
        if self.capture is not None:
            self.capture.arrivals.append((self.now, k))
        batch = sample_batch(
            self.shards[k - 1], self.train,
            self.config.hyperparams.batch_size, self.batch_rngs[k],
        )
        g = grad_fn(k, batch)
        if self.local_momentum:
            self.velocities[k], payload = local_momentum_wrap(
                self.velocities[k], g, self.config.hyperparams.alpha, eta
            )
        else:
            payload = g
        if self.capture is not None:
            self.capture.pushes.append((k, payload.copy(), eta))
        self._deliver(self.server.on_gradient(k, payload, eta))

    def _run_until(self, target_clock, grad_fn, eta_fn):
        while self.server.clock < target_clock:
            if len(self.events) == 0:
                # Cannot happen under the one-gradient-in-flight protocol;
                # finish a completed round defensively, then give up.
                if isinstance(self.server, GsgmServer):
                    self._deliver(self.server.flush(eta_fn()))
                if len(self.events) == 0:
                    raise RuntimeError("simulation starved: no runnable learner")
                continue
            self._process_arrival(grad_fn, eta_fn())

    # -- top-level drivers ----------------------------------------------------

    def run_sgd(self):
        h = self.config.hyperparams

        def plain_grad(k, batch):
            return gradient(self.spec, self.views[k], batch)

        def eta_now():
            return self.lr_scale * lr_at(h, self.server.clock // self.updates_per_epoch)

        for k in self.batch_rngs:
            self._schedule(k)
        self._run_until(self.total_epochs * self.updates_per_epoch, plain_grad, eta_now)

    def run_svrg(self):
        cfg = self.config
        h = cfg.hyperparams
        for outer in range(cfg.outer_loops):
            eta = self.lr_scale * lr_at(h, outer)
            # Synchronous snapshot: everyone sweeps its own shard once; the
            # phase resumes when the slowest sweep finishes.
            self.now += max(
                self.sampler.next_time(k)
                * math.ceil(self.shards[k - 1].size / h.batch_size)
                for k in self.batch_rngs
            )
            full = shard_full_gradient(
                self.spec, self.server.w, self.shards, self.train,
                cfg.svrg_uniform_average,
            )
            snapshot = SvrgSnapshot(self.server.w.copy(), full)
            self.trace_rows.append(
                {
                    "time": self.now,
                    "kind": "snapshot",
                    "clock": self.server.clock,
                    "round": outer,
                }
            )
            for k in self.views:
                self.views[k] = snapshot.params
            if isinstance(self.server, SspServer):
                self.server.reset_counts()

            def vr_grad(k, batch, snapshot=snapshot):
                return svrg_local_gradient(self.spec, self.views[k], snapshot, batch)

            self.events = EventQueue()
            for k in self.batch_rngs:
                self._schedule(k)
            # Absolute target: a staleness drain may overshoot a phase by a
            # few updates, and epoch boundaries live at absolute multiples
            # of the per-epoch budget.
            target = (outer + 1) * cfg.inner_loops * self.updates_per_epoch
            self._run_until(target, vr_grad, lambda eta=eta: eta)
            # In-flight and parked gradients predate the next snapshot;
            # drop them, everyone resyncs at the top of the loop.
            if hasattr(self.server, "drop_queued"):
                self.server.drop_queued()

    def run(self) -> RunResult:
        if self.family in SVRG_FAMILIES:
            self.run_svrg()
        else:
            self.run_sgd()
        trace_path = None
        if self.config.output_dir is not None:
            os.makedirs(self.config.output_dir, exist_ok=True)
            trace_path = os.path.join(self.config.output_dir, "trace.csv")
            _write_trace(self.trace_rows, trace_path)
        return make_result(self.series, trace_path, self.config.to_dict())


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_trace(rows, path):
    with open(path, "w", newline="") as f:
        f.write(",".join(TRACE_COLUMNS) + "\n")
        for row in rows:
            f.write(",".join(_format_cell(row.get(c)) for c in TRACE_COLUMNS) + "\n")


def run_experiment(config, capture: RunCapture | None = None) -> RunResult:
    """Simulate one full training run described by an ExperimentConfig.

    Returns the RunResult; also writes trace.csv under config.output_dir
    when one is set. Identical configs produce identical results and
    byte-identical traces.
    """
    return _Simulation(config, capture).run()
