"""Server-side update policies as sequential state machines.

Every server consumes one learner gradient at a time through
``on_gradient`` and returns the replies to deliver: ``(learner, params)``
pairs, issued exactly when that learner's gradient has been applied. A
learner whose gradient is parked in a wait queue gets no reply and stays
blocked until the policy releases it. The simulation engine serializes
all calls; servers are not thread-safe and do not need to be.

The scheduled policy keeps a white list of learners whose gradient is
still owed for the current round, a FIFO wait queue for early arrivals, a
running per-round average of the applied directions, and a server-side
velocity that is refreshed from that average exactly once per round. The
bounded-staleness policy admits a gradient only while its sender's applied
count stays within a threshold of the slowest learner's. The fully
asynchronous policy applies everything on arrival.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

from .optim import momentum_step
from .vecops import l2_norm

__all__ = [
    "UpdateRecord",
    "SchedulerProtocolError",
    "GsgmServer",
    "AsyncServer",
    "SspServer",
    "local_momentum_wrap",
    "shard_full_gradient",
    "gsgm_svrg_round",
    "parse_policy",
    "SVRG_FAMILIES",
    "MOMENTUMLESS_FAMILIES",
]


class SchedulerProtocolError(RuntimeError):
    """A learner pushed a new gradient while its previous one was still queued."""


# Families that train against a variance-reduction snapshot.
SVRG_FAMILIES = ("gsgm_svrg", "asvrg", "dvrg")
# Families that carry no momentum anywhere and therefore run at 10x eta0.
MOMENTUMLESS_FAMILIES = ("async", "ssp", "asvrg", "dvrg")
_THRESHOLD_FAMILIES = ("ssp", "ssp_lm", "dvrg")
_PLAIN_FAMILIES = ("gsgm", "gsgm_svrg", "async", "async_lm", "asvrg")


def parse_policy(policy: str):
    """Split a policy string into (family, staleness threshold).

    Accepted forms: gsgm, gsgm_svrg, async, async_lm, asvrg, ssp:<t>,
    ssp_lm:<t>, dvrg:<t> with integer t >= 0.
    """
    s = str(policy).strip()
    head, sep, tail = s.partition(":")
    if sep:
        if head not in _THRESHOLD_FAMILIES:
            raise ValueError(f"policy {head!r} takes no staleness threshold")
        try:
            t = int(tail)
        except ValueError:
            raise ValueError(
                f"staleness threshold must be an integer, got {tail!r}"
            ) from None
        if t < 0:
            raise ValueError(f"staleness threshold must be >= 0, got {t}")
        return head, t
    if s in _THRESHOLD_FAMILIES:
        raise ValueError(f"policy {s!r} needs a threshold, e.g. {s}:1")
    if s not in _PLAIN_FAMILIES:
        raise ValueError(
            f"unknown policy {s!r}; expected one of "
            f"{', '.join(_PLAIN_FAMILIES + tuple(f + ':<t>' for f in _THRESHOLD_FAMILIES))}"
        )
    return s, None


@dataclass(frozen=True)
class UpdateRecord:
    """One applied update, in server clock order."""

    clock: int
    learner: int
    grad_norm: float  # l2 norm of the applied direction (after any blending)
    eta: float
    round_index: int


class _ServerBase:
    def __init__(self, w0, num_learners, update_callback=None):
        w0 = np.asarray(w0, dtype=np.float64)
        if w0.ndim != 1:
            raise ValueError(f"parameters must be a flat vector, got {w0.shape}")
        if num_learners < 1:
            raise ValueError(f"num_learners must be >= 1, got {num_learners}")
        self.w = w0.copy()
        self.num_learners = num_learners
        self.clock = 0
        self.records: list[UpdateRecord] = []
        # Optional hook fired on every applied update with (record, direction);
        # used by tests and traces to observe the exact applied vectors.
        self.update_callback = update_callback

    def _record(self, learner, direction, eta, round_index, replies):
        self.clock += 1
        rec = UpdateRecord(self.clock, learner, l2_norm(direction), eta, round_index)
        self.records.append(rec)
        if self.update_callback is not None:
            self.update_callback(rec, direction)
        replies.append((learner, self.w.copy()))


class GsgmServer(_ServerBase):
    """White-list scheduler with per-round averaged gradients and momentum.

    On each received gradient:

    1. If the white list is empty (the previous round just finished), the
       finished round's average becomes the new velocity, the average
       resets, the list is restored to all learners, and the wait queue is
       drained in arrival order, applying each parked gradient.
    2. If the sender is (now) on the white list, its gradient is applied
       immediately; otherwise it is parked in the wait queue and the
       sender blocks until the next restoration.

    Applying gradient g for learner k: direction = alpha*velocity + g,
    round_avg += direction/K, w -= eta*direction, clock advances, and k
    leaves the white list. The velocity is only ever refreshed at
    restoration, so every direction within one round blends against the
    same velocity.
    """

    def __init__(self, w0, num_learners, alpha, update_callback=None):
        super().__init__(w0, num_learners, update_callback)
        if not 0.0 <= alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
        self.alpha = alpha
        self.velocity = np.zeros_like(self.w)
        self.round_avg = np.zeros_like(self.w)
        self.whitelist = set(range(1, num_learners + 1))
        self.wait_queue: deque = deque()
        self.round_index = 0

    def on_gradient(self, learner, g, eta):
        if any(j == learner for j, _ in self.wait_queue):
            raise SchedulerProtocolError(
                f"learner {learner} already has a gradient in the wait queue"
            )
        replies = []
        if not self.whitelist:
            self._restore(eta, replies)
        if learner in self.whitelist:
            self._apply(learner, g, eta, replies)
        else:
            self.wait_queue.append((learner, np.asarray(g, dtype=np.float64)))
        return replies

    def flush(self, eta):
        """Run the restoration step without waiting for the next arrival.

        No-op unless the current round is complete. Returns replies for any
        drained learners.
        """
        replies = []
        if not self.whitelist:
            self._restore(eta, replies)
        return replies

    def drop_queued(self):
        """Discard parked gradients (used at resync boundaries).

        Returns the learners whose gradients were dropped; they are owed no
        reply and must be restarted by the caller.
        """
        dropped = [j for j, _ in self.wait_queue]
        self.wait_queue.clear()
        return dropped

    def _restore(self, eta, replies):
        self.velocity = self.round_avg
        self.round_avg = np.zeros_like(self.w)
        self.whitelist = set(range(1, self.num_learners + 1))
        self.round_index += 1
        while self.wait_queue:
            j, g = self.wait_queue.popleft()
            self._apply(j, g, eta, replies)

    def _apply(self, learner, g, eta, replies):
        direction = self.alpha * self.velocity + g
        self.round_avg += direction / self.num_learners
        self.w = self.w - eta * direction
        self.whitelist.discard(learner)
        self._record(learner, direction, eta, self.round_index, replies)


class AsyncServer(_ServerBase):
    """No admission control: every gradient is applied the moment it arrives.

    With ``local_momentum`` the payload is a learner-computed parameter
    delta and is added as-is; otherwise w -= eta*payload.
    """

    def __init__(self, w0, num_learners, local_momentum=False, update_callback=None):
        super().__init__(w0, num_learners, update_callback)
        self.local_momentum = local_momentum

    def on_gradient(self, learner, payload, eta):
        replies = []
        if self.local_momentum:
            self.w = self.w + payload
        else:
            self.w = self.w - eta * payload
        self._record(learner, payload, eta, 0, replies)
        return replies


class SspServer(_ServerBase):
    """Bounded staleness: learner k applies only while count(k) - min <= threshold.

    Counts are applied updates per learner. Over-threshold arrivals park in
    a FIFO wait queue and drain, oldest eligible first, whenever the
    minimum advances. ``threshold=None`` means unbounded (identical to the
    fully asynchronous policy); threshold 0 forces lockstep rounds.
    """

    def __init__(
        self,
        w0,
        num_learners,
        threshold,
        local_momentum=False,
        update_callback=None,
    ):
        super().__init__(w0, num_learners, update_callback)
        if threshold is None:
            threshold = float("inf")
        if threshold < 0:
            raise ValueError(f"staleness threshold must be >= 0, got {threshold}")
        self.threshold = threshold
        self.local_momentum = local_momentum
        self.counts = {k: 0 for k in range(1, num_learners + 1)}
        self.wait_queue: deque = deque()

    def _eligible(self, learner):
        return self.counts[learner] - min(self.counts.values()) <= self.threshold

    def _apply(self, learner, payload, eta, replies):
        if self.local_momentum:
            self.w = self.w + payload
        else:
            self.w = self.w - eta * payload
        self.counts[learner] += 1
        self._record(learner, payload, eta, min(self.counts.values()), replies)

    def _drain(self, eta, replies):
        # Applying one parked gradient can advance the minimum and release
        # others; rescan from the front until a full pass admits nobody.
        progressed = True
        while progressed:
            progressed = False
            for i, (j, payload) in enumerate(self.wait_queue):
                if self._eligible(j):
                    del self.wait_queue[i]
                    self._apply(j, payload, eta, replies)
                    progressed = True
                    break

    def on_gradient(self, learner, payload, eta):
        if any(j == learner for j, _ in self.wait_queue):
            raise SchedulerProtocolError(
                f"learner {learner} already has a gradient in the wait queue"
            )
        replies = []
        if self._eligible(learner):
            self._apply(learner, payload, eta, replies)
            self._drain(eta, replies)
        else:
            self.wait_queue.append((learner, np.asarray(payload, dtype=np.float64)))
        return replies

    def reset_counts(self):
        """Zero the staleness counters (used at resync boundaries)."""
        for k in self.counts:
            self.counts[k] = 0

    def drop_queued(self):
        dropped = [j for j, _ in self.wait_queue]
        self.wait_queue.clear()
        return dropped


def local_momentum_wrap(velocity, g, alpha, eta):
    """Learner-side momentum: returns (velocity', payload).

    The payload is the parameter delta the server should add verbatim;
    both equal alpha*velocity - eta*g.
    """
    return momentum_step(velocity, g, alpha, eta)


def shard_full_gradient(spec, w, shards, dataset, uniform_average=False):
    """Weighted average of per-shard full gradients at w.

    Weights are shard sizes over the total by default; ``uniform_average``
    selects a plain 1/K mean instead.
    """
    from .models import Batch, gradient

    total = sum(s.size for s in shards)
    full = np.zeros_like(w)
    for shard in shards:
        batch = Batch(
            np.ascontiguousarray(dataset.features[shard.indices]),
            np.ascontiguousarray(dataset.labels[shard.indices]),
        )
        weight = 1.0 / len(shards) if uniform_average else shard.size / total
        full += weight * gradient(spec, w, batch)
    return full


def gsgm_svrg_round(
    server: GsgmServer,
    shards,
    dataset,
    spec,
    h,
    inner_iters,
    rng,
    eta=None,
    uniform_average=False,
    arrival_order=None,
):
    """One outer loop of scheduled variance-reduced training.

    Synchronous phase: snapshot the server parameters, average the shards'
    full gradients, and hand every learner the snapshot as its working
    point. Inner phase: each learner contributes ``inner_iters``
    variance-reduced batch gradients, delivered by default in round-robin
    order (a custom ``arrival_order`` may interleave them differently, as
    long as no learner outruns its own replies). Completes any trailing
    round before returning the snapshot used.
    """
    from .data import sample_batch
    from .optim import SvrgSnapshot, svrg_local_gradient

    if inner_iters < 1:
        raise ValueError("inner_iters must be >= 1")
    if eta is None:
        eta = h.eta0
    K = len(shards)
    if K != server.num_learners:
        raise ValueError(f"{K} shards for {server.num_learners} learners")

    full = shard_full_gradient(spec, server.w, shards, dataset, uniform_average)
    snapshot = SvrgSnapshot(server.w.copy(), full)
    views = {s.owner: snapshot.params for s in shards}
    by_owner = {s.owner: s for s in shards}

    if arrival_order is None:
        arrival_order = [s.owner for s in shards] * inner_iters
    sent = {s.owner: 0 for s in shards}
    for k in arrival_order:
        if sent[k] >= inner_iters:
            raise ValueError(f"arrival order sends learner {k} too many gradients")
        sent[k] += 1
        batch = sample_batch(by_owner[k], dataset, h.batch_size, rng)
        g = svrg_local_gradient(spec, views[k], snapshot, batch)
        for j, w_j in server.on_gradient(k, g, eta):
            views[j] = w_j
    if any(c != inner_iters for c in sent.values()):
        raise ValueError("arrival order must send inner_iters gradients per learner")
    for j, w_j in server.flush(eta):
        views[j] = w_j
    return snapshot
