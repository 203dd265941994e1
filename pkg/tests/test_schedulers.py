import numpy as np
import pytest

from gradsched.data import Dataset, partition_noniid
from gradsched.models import ModelSpec
from gradsched.optim import Hyperparams
from gradsched.schedulers import (
    AsyncServer,
    GsgmServer,
    SchedulerProtocolError,
    SspServer,
    gsgm_svrg_round,
    local_momentum_wrap,
    parse_policy,
    shard_full_gradient,
)

D = 4  # parameter length used by the direct-drive tests


def _g(rng):
    return rng.standard_normal(D)


# ---------------------------------------------------------------------------
# policy strings

def test_parse_policy_accepts_all_families():
    assert parse_policy("gsgm") == ("gsgm", None)
    assert parse_policy("gsgm_svrg") == ("gsgm_svrg", None)
    assert parse_policy("async") == ("async", None)
    assert parse_policy("async_lm") == ("async_lm", None)
    assert parse_policy("asvrg") == ("asvrg", None)
    assert parse_policy("ssp:0") == ("ssp", 0)
    assert parse_policy("ssp_lm:3") == ("ssp_lm", 3)
    assert parse_policy("dvrg:7") == ("dvrg", 7)


def test_parse_policy_rejects_malformed():
    for bad in ("ssp", "dvrg", "gsgm:2", "ssp:-1", "ssp:one", "psgd", ""):
        with pytest.raises(ValueError):
            parse_policy(bad)


# ---------------------------------------------------------------------------
# scheduled policy: single-learner equivalence with plain momentum

def test_single_learner_equals_momentum_sgd():
    rng = np.random.default_rng(0)
    alpha, eta = 0.9, 0.05
    w0 = rng.standard_normal(D)
    server = GsgmServer(w0, 1, alpha)
    w_ref = w0.copy()
    v_ref = np.zeros(D)
    for _ in range(200):
        g = _g(rng)
        server.on_gradient(1, g, eta)
        v_ref = alpha * v_ref - eta * g
        w_ref = w_ref + v_ref
        assert np.allclose(server.w, w_ref, rtol=0, atol=1e-12)


def test_single_learner_applied_directions():
    # First three applied directions must be g1, a*g1+g2, a^2*g1+a*g2+g3.
    rng = np.random.default_rng(1)
    a = 0.9
    g1, g2, g3 = _g(rng), _g(rng), _g(rng)
    seen = []
    server = GsgmServer(np.zeros(D), 1, a, update_callback=lambda r, d: seen.append(d.copy()))
    for g in (g1, g2, g3):
        server.on_gradient(1, g, 0.1)
    assert np.array_equal(seen[0], g1)
    assert np.allclose(seen[1], a * g1 + g2, rtol=0, atol=1e-15)
    assert np.allclose(seen[2], a * (a * g1 + g2) + g3, rtol=0, atol=1e-15)


# ---------------------------------------------------------------------------
# scheduled policy: admission control

def test_early_second_gradient_waits_for_round_end():
    rng = np.random.default_rng(2)
    server = GsgmServer(np.zeros(D), 2, 0.9)
    r1 = server.on_gradient(1, _g(rng), 0.1)
    assert [j for j, _ in r1] == [1]  # applied immediately
    r2 = server.on_gradient(1, _g(rng), 0.1)
    assert r2 == []  # learner 1 already contributed this round: parked
    assert len(server.wait_queue) == 1
    r3 = server.on_gradient(2, _g(rng), 0.1)
    assert [j for j, _ in r3] == [2]  # round completes
    # next arrival triggers restoration: the parked gradient drains first
    r4 = server.on_gradient(2, _g(rng), 0.1)
    assert [j for j, _ in r4] == [1, 2]
    assert [rec.learner for rec in server.records] == [1, 2, 1, 2]


def test_round_atomicity_every_learner_once_per_round():
    rng = np.random.default_rng(3)
    for K in (2, 5, 10):
        server = GsgmServer(np.zeros(D), K, 0.9)
        pending = set()
        for _ in range(60 * K):
            k = int(rng.choice([j for j in range(1, K + 1) if j not in pending]))
            replies = server.on_gradient(k, _g(rng), 0.1)
            pending.add(k)
            for j, _ in replies:
                pending.discard(j)
            # a learner is never both admitted and parked
            queued = {j for j, _ in server.wait_queue}
            assert not (queued & server.whitelist)
            assert len(queued) == len(server.wait_queue)
        by_round = {}
        for rec in server.records:
            by_round.setdefault(rec.round_index, []).append(rec.learner)
        full_rounds = [r for r in sorted(by_round) if r < max(by_round)]
        for r in full_rounds:
            assert sorted(by_round[r]) == list(range(1, K + 1))


def test_prefix_fairness_bound():
    rng = np.random.default_rng(4)
    for K in (2, 5, 10):
        server = GsgmServer(np.zeros(D), K, 0.9)
        pending = set()
        applied = {k: 0 for k in range(1, K + 1)}
        for _ in range(40 * K):
            k = int(rng.choice([j for j in range(1, K + 1) if j not in pending]))
            replies = server.on_gradient(k, _g(rng), 0.1)
            pending.add(k)
            for j, _ in replies:
                pending.discard(j)
        for rec in server.records:
            applied[rec.learner] += 1
            counts = list(applied.values())
            assert max(counts) - min(counts) <= 1


def test_round_average_becomes_velocity_bitwise():
    rng = np.random.default_rng(5)
    K = 3
    directions = []
    server = GsgmServer(
        np.zeros(D), K, 0.9, update_callback=lambda r, d: directions.append(d.copy())
    )
    for k in (1, 2, 3):
        server.on_gradient(k, _g(rng), 0.1)
    # replicate the running average in the same operation order
    expected = np.zeros(D)
    for d in directions:
        expected += d / K
    server.on_gradient(1, _g(rng), 0.1)  # triggers restoration
    assert np.array_equal(server.velocity, expected)


def test_velocity_frozen_within_round():
    rng = np.random.default_rng(6)
    K = 3
    server = GsgmServer(np.zeros(D), K, 0.9)
    gs = [_g(rng) for _ in range(K)]
    seen = []
    server.update_callback = lambda r, d: seen.append(d.copy())
    for k, g in zip((1, 2, 3), gs):
        server.on_gradient(k, g, 0.1)
    v = np.zeros(D)  # initial velocity
    for g, d in zip(gs, seen):
        assert np.array_equal(d, 0.9 * v + g)


def test_alpha_zero_reduces_to_plain_sgd():
    rng = np.random.default_rng(7)
    server = GsgmServer(np.zeros(D), 2, 0.0)
    w = np.zeros(D)
    for k in (1, 2, 1, 2, 2, 1):
        g = _g(rng)
        server.on_gradient(k, g, 0.2)
        w = w - 0.2 * g
    assert np.allclose(server.w, w, rtol=0, atol=1e-15)


def test_duplicate_pending_gradient_rejected():
    rng = np.random.default_rng(8)
    server = GsgmServer(np.zeros(D), 2, 0.9)
    server.on_gradient(1, _g(rng), 0.1)
    server.on_gradient(1, _g(rng), 0.1)  # parked
    with pytest.raises(SchedulerProtocolError):
        server.on_gradient(1, _g(rng), 0.1)


def test_flush_equals_restoration_on_arrival():
    rng = np.random.default_rng(9)
    gs = [_g(rng) for _ in range(4)]
    a = GsgmServer(np.zeros(D), 2, 0.9)
    b = GsgmServer(np.zeros(D), 2, 0.9)
    for server in (a, b):
        server.on_gradient(1, gs[0], 0.1)
        server.on_gradient(1, gs[1], 0.1)  # parked
        server.on_gradient(2, gs[2], 0.1)  # round complete
    # a: explicit flush, then the next arrival; b: arrival does the restore
    fl = a.flush(0.1)
    assert [j for j, _ in fl] == [1]
    ra = a.on_gradient(2, gs[3], 0.1)
    rb = b.on_gradient(2, gs[3], 0.1)
    assert [j for j, _ in rb] == [1, 2] and [j for j, _ in ra] == [2]
    assert np.array_equal(a.w, b.w)
    assert np.array_equal(a.velocity, b.velocity)
    assert [r.learner for r in a.records] == [r.learner for r in b.records]


def test_flush_noop_mid_round():
    rng = np.random.default_rng(10)
    server = GsgmServer(np.zeros(D), 2, 0.9)
    server.on_gradient(1, _g(rng), 0.1)
    before = server.w.copy()
    assert server.flush(0.1) == []
    assert np.array_equal(server.w, before)


def test_drop_queued_reports_learners():
    rng = np.random.default_rng(11)
    server = GsgmServer(np.zeros(D), 3, 0.9)
    server.on_gradient(1, _g(rng), 0.1)
    server.on_gradient(1, _g(rng), 0.1)  # parked
    assert server.drop_queued() == [1]
    assert len(server.wait_queue) == 0


# ---------------------------------------------------------------------------
# async and bounded staleness

def test_async_applies_everything_immediately():
    rng = np.random.default_rng(12)
    server = AsyncServer(np.zeros(D), 3)
    w = np.zeros(D)
    for k in (1, 1, 1, 2, 3, 1):
        g = _g(rng)
        replies = server.on_gradient(k, g, 0.3)
        w = w - 0.3 * g
        assert [j for j, _ in replies] == [k]
    assert np.array_equal(server.w, w)
    assert [r.learner for r in server.records] == [1, 1, 1, 2, 3, 1]


def test_async_local_momentum_adds_payload_verbatim():
    rng = np.random.default_rng(13)
    server = AsyncServer(np.zeros(D), 2, local_momentum=True)
    delta = _g(rng)
    server.on_gradient(2, delta, 0.5)
    assert np.array_equal(server.w, delta)


def test_ssp_unbounded_equals_async():
    rng = np.random.default_rng(14)
    a = SspServer(np.zeros(D), 3, threshold=None)
    b = AsyncServer(np.zeros(D), 3)
    for k in (1, 1, 2, 1, 1, 3, 1):
        g = _g(rng)
        ra = a.on_gradient(k, g, 0.1)
        rb = b.on_gradient(k, g, 0.1)
        assert [j for j, _ in ra] == [j for j, _ in rb]
    assert np.array_equal(a.w, b.w)


def test_ssp_threshold_zero_is_lockstep():
    rng = np.random.default_rng(15)
    server = SspServer(np.zeros(D), 3, threshold=0)
    # learner 1 races ahead: parked until everyone catches up
    assert [j for j, _ in server.on_gradient(1, _g(rng), 0.1)] == [1]
    assert server.on_gradient(1, _g(rng), 0.1) == []
    assert [j for j, _ in server.on_gradient(2, _g(rng), 0.1)] == [2]
    replies = server.on_gradient(3, _g(rng), 0.1)
    # 3 applies, min advances, 1's parked gradient drains
    assert [j for j, _ in replies] == [3, 1]
    assert [r.learner for r in server.records] == [1, 2, 3, 1]


def test_ssp_blocks_beyond_threshold():
    rng = np.random.default_rng(16)
    server = SspServer(np.zeros(D), 2, threshold=1)
    # alternate to counts (4, 3), always within the bound
    for k in (1, 2, 1, 2, 1, 2, 1):
        assert [j for j, _ in server.on_gradient(k, _g(rng), 0.1)] == [k]
    assert server.counts == {1: 4, 2: 3}
    # gap before the update is 1, still admissible
    assert [j for j, _ in server.on_gradient(1, _g(rng), 0.1)] == [1]
    assert server.counts == {1: 5, 2: 3}
    # now learner 1 is two ahead: parked
    assert server.on_gradient(1, _g(rng), 0.1) == []
    replies = server.on_gradient(2, _g(rng), 0.1)
    assert [j for j, _ in replies] == [2, 1]  # min advanced, parked gradient drains
    assert server.counts == {1: 6, 2: 4}


def test_ssp_drains_fifo_among_eligible():
    rng = np.random.default_rng(17)
    server = SspServer(np.zeros(D), 3, threshold=0)
    server.on_gradient(1, _g(rng), 0.1)
    server.on_gradient(2, _g(rng), 0.1)
    server.on_gradient(1, _g(rng), 0.1)  # parked first
    server.on_gradient(2, _g(rng), 0.1)  # parked second
    replies = server.on_gradient(3, _g(rng), 0.1)
    assert [j for j, _ in replies] == [3, 1, 2]  # arrival order preserved


def test_ssp_duplicate_pending_rejected():
    rng = np.random.default_rng(18)
    server = SspServer(np.zeros(D), 2, threshold=0)
    server.on_gradient(1, _g(rng), 0.1)
    server.on_gradient(1, _g(rng), 0.1)  # parked
    with pytest.raises(SchedulerProtocolError):
        server.on_gradient(1, _g(rng), 0.1)


def test_ssp_validation():
    with pytest.raises(ValueError):
        SspServer(np.zeros(D), 2, threshold=-1)


def test_local_momentum_wrap_matches_momentum_step():
    rng = np.random.default_rng(19)
    v = np.zeros(D)
    w = np.zeros(D)
    etas = [0.1, 0.1, 0.05]
    gs = [_g(rng) for _ in range(3)]
    for g, eta in zip(gs, etas):
        v, payload = local_momentum_wrap(v, g, 0.9, eta)
        assert np.array_equal(payload, v)
        w = w + payload
    # unrolled reference
    v_ref = np.zeros(D)
    w_ref = np.zeros(D)
    for g, eta in zip(gs, etas):
        v_ref = 0.9 * v_ref - eta * g
        w_ref = w_ref + v_ref
    assert np.array_equal(w, w_ref)


# ---------------------------------------------------------------------------
# variance-reduced round driver

def _vr_setup(K=2, per_shard=4):
    rng = np.random.default_rng(20)
    n = K * per_shard
    X = rng.standard_normal((n, 3))
    y = (np.arange(n) % 2).astype(np.int64)
    ds = Dataset(X, y, 2)
    shards = partition_noniid(ds, K, seed=0)
    spec = ModelSpec("softmax_regression", input_dim=3, num_classes=2)
    return ds, shards, spec


def test_full_gradient_weighting():
    rng = np.random.default_rng(21)
    X = rng.standard_normal((5, 3))
    y = np.array([0, 1, 0, 1, 0], dtype=np.int64)
    ds = Dataset(X, y, 2)
    shards = partition_noniid(ds, 2, seed=0)  # sizes 3 and 2
    spec = ModelSpec("softmax_regression", input_dim=3, num_classes=2)
    w = rng.standard_normal(spec.param_count)
    from gradsched.models import Batch, gradient

    g1 = gradient(spec, w, Batch(X[shards[0].indices], y[shards[0].indices]))
    g2 = gradient(spec, w, Batch(X[shards[1].indices], y[shards[1].indices]))
    sized = shard_full_gradient(spec, w, shards, ds)
    uniform = shard_full_gradient(spec, w, shards, ds, uniform_average=True)
    assert np.allclose(sized, 0.6 * g1 + 0.4 * g2, rtol=0, atol=1e-15)
    assert np.allclose(uniform, 0.5 * (g1 + g2), rtol=0, atol=1e-15)


def test_vr_round_first_directions_equal_full_gradient():
    # Batch size equal to the shard size makes the batch terms cancel on the
    # first inner update, so the applied direction is exactly the snapshot
    # gradient for every learner in round one.
    ds, shards, spec = _vr_setup()
    h = Hyperparams(eta0=0.1, alpha=0.9, batch_size=4)
    directions = []
    server = GsgmServer(
        np.zeros(spec.param_count), 2, 0.9,
        update_callback=lambda r, d: directions.append(d.copy()),
    )
    snap = gsgm_svrg_round(
        server, shards, ds, spec, h, inner_iters=2, rng=np.random.default_rng(0)
    )
    assert np.array_equal(directions[0], snap.full_grad)
    assert np.array_equal(directions[1], snap.full_grad)
    assert server.clock == 4  # K * inner_iters applied
    counts = {}
    for rec in server.records:
        counts[rec.learner] = counts.get(rec.learner, 0) + 1
    assert counts == {1: 2, 2: 2}


def test_vr_round_snapshot_is_serverside_anchor():
    ds, shards, spec = _vr_setup()
    h = Hyperparams(eta0=0.05, alpha=0.9, batch_size=2)
    server = GsgmServer(np.zeros(spec.param_count), 2, 0.9)
    w_before = server.w.copy()
    snap = gsgm_svrg_round(
        server, shards, ds, spec, h, inner_iters=3, rng=np.random.default_rng(1)
    )
    assert np.array_equal(snap.params, w_before)
    assert not np.array_equal(server.w, w_before)


def test_vr_round_rejects_lopsided_order():
    ds, shards, spec = _vr_setup()
    h = Hyperparams(eta0=0.05, alpha=0.9, batch_size=2)
    server = GsgmServer(np.zeros(spec.param_count), 2, 0.9)
    with pytest.raises(ValueError):
        gsgm_svrg_round(
            server, shards, ds, spec, h, inner_iters=2,
            rng=np.random.default_rng(2), arrival_order=[1, 1, 1, 2],
        )
