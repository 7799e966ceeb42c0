"""Slotted discrete-event simulator of DCF contention on orthogonal channels.

Time advances in generic slots: an idle slot lasts ``sigma``, a success
``a + T_o + sigma`` for the winner's payload ``a`` and a collision
``T_c + sigma`` (RTS/CTS) or ``T_o + max(a) + sigma`` (basic access).
Every station that does not transmit in a slot decrements its back-off
counter once, so a counter is stored as the absolute index of the slot
in which the station transmits next and idle stretches are skipped.
"""

from __future__ import annotations

import dataclasses
import heapq
import math
import random
from dataclasses import dataclass, field

import numpy as np

from . import mac

IDLE, SUCCESS, COLLISION = 0, 1, 2


@dataclass(frozen=True)
class SimConfig:
    """Simulation input.

    ``counts[j][c]`` is the number of class-``c`` stations on channel
    ``j``; ``rates[j]`` the (classes, regions) rate matrix of channel
    ``j`` in bits/slot.  Payload durations are rounded up to whole slots.
    ``horizon`` counts generic slots including ``warmup``; the warmup
    defaults to a tenth of the horizon.
    """

    counts: list
    macs: list
    rates: list
    frame_len: np.ndarray
    region_probs: np.ndarray
    horizon: int = 1_100_000
    warmup: int | None = None
    seed: int = 0
    batches: int = 20

    def __post_init__(self):
        counts = [np.atleast_1d(np.asarray(c, int)) for c in self.counts]
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "frame_len", np.atleast_1d(np.asarray(self.frame_len, float)))
        object.__setattr__(self, "region_probs", np.atleast_1d(np.asarray(self.region_probs, float)))
        rates = [np.atleast_2d(np.asarray(r, float)) for r in self.rates]
        C, N = len(self.frame_len), len(self.region_probs)
        rates = [np.broadcast_to(r, (C, N)) for r in rates]
        object.__setattr__(self, "rates", rates)
        if self.warmup is None:
            object.__setattr__(self, "warmup", self.horizon // 10)
        if not len(counts) == len(self.macs) == len(rates):
            raise ValueError("counts, macs and rates need one entry per channel")
        if any(len(c) != C or np.any(c < 0) for c in counts):
            raise ValueError(f"each channel needs {C} nonnegative class counts")
        if not self.horizon > self.warmup >= 0:
            raise ValueError("need horizon > warmup >= 0")
        if np.any(np.concatenate([r.ravel() for r in rates]) <= 0):
            raise ValueError("rates must be positive")

    @classmethod
    def single(cls, params: mac.MacParameters, n: int, frame_len=None, rate=1.0, **kw):
        """One class, one region, one channel; payload ``T_s`` unless ``frame_len`` given."""
        frame_len = params.T_s * rate if frame_len is None else frame_len
        return cls([[n]], [params], [[[rate]]], [frame_len], [1.0], **kw)

    @property
    def n_classes(self):
        return len(self.frame_len)

    def payload_slots(self, channel: int) -> np.ndarray:
        """Whole-slot payload durations, shape (classes, regions)."""
        return np.ceil(self.frame_len[:, None] / self.rates[channel] - 1e-9)


@dataclass
class ChannelStats:
    n: int
    slots: int
    time: float
    slot_freq: np.ndarray
    tagged_freq: np.ndarray
    throughput: np.ndarray
    throughput_hw: np.ndarray
    service_mean: np.ndarray
    service_var: np.ndarray
    service_hw: np.ndarray
    collision_prob: np.ndarray
    attempts: np.ndarray
    successes: np.ndarray
    drops: np.ndarray
    empty_fraction: float
    node_class: np.ndarray
    node_region: np.ndarray


@dataclass
class SimResult:
    channels: list
    config: SimConfig = field(repr=False)

    def to_rows(self):
        rows = []
        for j, ch in enumerate(self.channels):
            for c in range(self.config.n_classes):
                rows.append((j, c, int(self.config.counts[j][c]), ch.throughput[c],
                             ch.throughput_hw[c], ch.service_mean[c], ch.service_hw[c],
                             ch.collision_prob[c], *ch.slot_freq, *ch.tagged_freq))
        return rows

    columns = ("channel", "class", "nodes", "throughput", "throughput_hw", "service_mean",
               "service_hw", "collision_prob", "idle", "success", "collision",
               "tagged_idle", "tagged_success", "tagged_collision")


def _half_width(batch_values):
    b = np.asarray(batch_values, float)
    if len(b) < 2:
        return math.nan
    return float(1.96 * b.std(ddof=1) / math.sqrt(len(b)))


def _simulate_channel(cfg: SimConfig, j: int, seed_seq: np.random.SeedSequence) -> ChannelStats:
    p: mac.MacParameters = cfg.macs[j]
    counts = cfg.counts[j]
    C = cfg.n_classes
    n = int(counts.sum())
    np_rng = np.random.default_rng(seed_seq)
    rng = random.Random(int(np_rng.integers(2 ** 63)))
    cls = np.repeat(np.arange(C), counts)
    regions = np_rng.choice(len(cfg.region_probs), size=n, p=cfg.region_probs)
    payload = cfg.payload_slots(j)[cls, regions].tolist() if n else []
    W = [int(w) for w in p.windows]
    M = p.M
    sig, T_o, T_c = p.sigma, p.T_o, p.T_c
    basic = p.mode is mac.AccessMode.BASIC
    saturated = p.saturated
    rate = p.arrival_rate
    horizon, warmup = cfg.horizon, cfg.warmup
    nb = max(1, cfg.batches)
    batch_len = max(1, (horizon - warmup) // nb)

    stage = [0] * n
    queue = [1 if saturated else 0] * n
    hol_start = [0.0] * n
    last_seen = [0.0] * n       # time up to which arrivals were drawn
    heap = []                   # (transmit slot, node)
    arrivals = []               # (arrival time, node) for empty stations

    def backoff(i, slot, now):
        heapq.heappush(heap, (slot + 1 + rng.randrange(W[stage[i]]), i))

    for i in range(n):
        if saturated:
            backoff(i, -1, 0.0)
        else:
            arrivals.append((float(np_rng.geometric(rate)), i))
    heapq.heapify(arrivals)

    # statistics after warmup
    slot_count = np.zeros(3)
    tagged = np.zeros(3)
    attempts = np.zeros(n)
    collisions = np.zeros(n)
    successes = np.zeros(n)
    drops = np.zeros(n)
    bits = np.zeros((nb, C))
    batch_time = np.zeros(nb)
    svc_sum = np.zeros((nb, C))
    svc_cnt = np.zeros((nb, C))
    svc_sq = np.zeros(C)
    empty_time = 0.0
    L = cfg.frame_len

    slot = 0
    now = 0.0
    t_warm = None
    backlogged = n if saturated else 0

    def record_idle(k, start_slot):
        """Account for ``k`` idle slots starting at ``start_slot``."""
        nonlocal empty_time
        if k <= 0:
            return
        lo = max(start_slot, warmup)
        hi = min(start_slot + k, horizon)
        if hi > lo:
            m = hi - lo
            slot_count[IDLE] += m
            tagged[IDLE] += m * backlogged
            empty_time += m * sig * (n - backlogged)
            # idle time can straddle batch boundaries
            s = lo
            while s < hi:
                b = min((s - warmup) // batch_len, nb - 1)
                end = hi if b == nb - 1 else min(hi, warmup + (b + 1) * batch_len)
                batch_time[b] += (end - s) * sig
                s = end

    def drain_arrivals(i, t):
        """Add Bernoulli arrivals of station ``i`` over ``(last_seen, t]``."""
        units = int(t - last_seen[i])
        if units > 0:
            queue[i] = min(p.buffer, queue[i] + int(np_rng.binomial(units, rate)))
            last_seen[i] += units

    while slot < horizon:
        next_tx = heap[0][0] if heap else horizon
        if arrivals:
            t_arr, i_arr = arrivals[0]
            arr_slot = slot + max(0, math.ceil((t_arr - now) / sig))
            if arr_slot < next_tx and arr_slot < horizon:
                heapq.heappop(arrivals)
                record_idle(arr_slot - slot, slot)
                now += (arr_slot - slot) * sig
                slot = arr_slot
                queue[i_arr] = 1
                last_seen[i_arr] = math.floor(t_arr)
                hol_start[i_arr] = now
                stage[i_arr] = 0
                backlogged += 1
                heapq.heappush(heap, (slot + rng.randrange(W[0]), i_arr))
                continue
        if next_tx >= horizon:
            record_idle(horizon - slot, slot)
            now += (horizon - slot) * sig
            slot = horizon
            break
        record_idle(next_tx - slot, slot)
        now += (next_tx - slot) * sig
        slot = next_tx
        tx = []
        while heap and heap[0][0] == slot:
            tx.append(heapq.heappop(heap)[1])
        k = len(tx)
        if k == 1:
            kind = SUCCESS
            dur = payload[tx[0]] + T_o + sig
        else:
            kind = COLLISION
            dur = (T_o + max(payload[i] for i in tx) if basic else T_c) + sig
        counted = slot >= warmup
        b = min((slot - warmup) // batch_len, nb - 1) if counted else -1
        if counted:
            slot_count[kind] += 1
            others = backlogged - k
            tagged[SUCCESS if k == 1 else COLLISION] += others
            batch_time[b] += dur
            empty_time += dur * (n - backlogged)
        end = now + dur
        for i in tx:
            if counted:
                attempts[i] += 1
            done = False
            if kind == SUCCESS:
                if counted:
                    successes[i] += 1
                    bits[b, cls[i]] += L[cls[i]]
                done = True
            else:
                if counted:
                    collisions[i] += 1
                if stage[i] + 1 >= M:
                    if counted:
                        drops[i] += 1
                    done = True
                else:
                    stage[i] += 1
            if done:
                if counted and hol_start[i] >= (t_warm if t_warm is not None else math.inf):
                    st = end - hol_start[i]
                    svc_sum[b, cls[i]] += st
                    svc_cnt[b, cls[i]] += 1
                    svc_sq[cls[i]] += st * st
                stage[i] = 0
                hol_start[i] = end
                if not saturated:
                    drain_arrivals(i, end)
                    queue[i] -= 1
                    if queue[i] == 0:
                        backlogged -= 1
                        arrivals_at = end + float(np_rng.geometric(rate))
                        last_seen[i] = math.inf
                        heapq.heappush(arrivals, (arrivals_at, i))
                        continue
            heapq.heappush(heap, (slot + 1 + rng.randrange(W[stage[i]]), i))
        now = end
        slot += 1
        if t_warm is None and slot >= warmup:
            t_warm = now
    if t_warm is None:
        t_warm = now

    total_time = batch_time.sum()
    by_class = [cls == c for c in range(C)]
    cnt = np.maximum(counts, 1)
    thr_batches = bits / np.maximum(batch_time, 1e-300)[:, None] / cnt
    throughput = bits.sum(axis=0) / max(total_time, 1e-300) / cnt
    svc_total = svc_cnt.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        svc_mean = svc_sum.sum(axis=0) / svc_total
        svc_var = svc_sq / svc_total - svc_mean ** 2
        svc_batches = svc_sum / svc_cnt
    coll = np.array([collisions[m].sum() / max(attempts[m].sum(), 1) for m in by_class])
    slot_freq = slot_count / max(slot_count.sum(), 1)
    tagged_freq = tagged / tagged.sum() if tagged.sum() > 0 else np.array([1.0, 0.0, 0.0])
    return ChannelStats(
        n=n, slots=int(slot_count.sum()), time=float(total_time), slot_freq=slot_freq,
        tagged_freq=tagged_freq, throughput=throughput,
        throughput_hw=np.array([_half_width(thr_batches[:, c]) for c in range(C)]),
        service_mean=svc_mean, service_var=svc_var,
        service_hw=np.array([_half_width(svc_batches[:, c][np.isfinite(svc_batches[:, c])])
                             for c in range(C)]),
        collision_prob=coll,
        attempts=np.array([attempts[m].sum() for m in by_class]),
        successes=np.array([successes[m].sum() for m in by_class]),
        drops=np.array([drops[m].sum() for m in by_class]),
        empty_fraction=float(empty_time / max(total_time * n, 1e-300)) if n else 1.0,
        node_class=cls, node_region=np.asarray(regions, int))


def run(config: SimConfig) -> SimResult:
    """Simulate every channel independently; reproducible per ``config.seed``."""
    seeds = np.random.SeedSequence(config.seed).spawn(len(config.counts))
    return SimResult([_simulate_channel(config, j, s) for j, s in enumerate(seeds)], config)


@dataclass
class Comparison:
    metric: str
    channel: int
    cls: int
    simulated: float
    analytic: float

    @property
    def rel_error(self):
        if self.analytic == 0:
            return 0.0 if self.simulated == 0 else math.inf
        return abs(self.simulated - self.analytic) / abs(self.analytic)


def _node_mix(slots, classes, regions, keep):
    a, k = np.unique(slots[classes[keep], regions[keep]], return_counts=True)
    return mac.PayloadMix(k / k.sum(), a)


def analytic_channel(config: SimConfig, j: int, stats: ChannelStats | None = None):
    """Analytic fixed point, back-off view and payload mixes matching channel ``j``.

    Returns ``(params, fp, states, mix, own)`` where ``mix`` is the payload
    distribution over all contenders and ``own[c]`` that of a class-``c``
    station.  Without ``stats`` the mixes follow the configured region
    probabilities; with ``stats`` they follow the regions actually drawn
    for the simulated stations, which is what a short run with few
    stations should be compared against.
    """
    p = config.macs[j]
    counts = config.counts[j]
    n = int(counts.sum())
    slots = config.payload_slots(j)
    if stats is None:
        share = counts / max(n, 1)
        q = (share[:, None] * config.region_probs[None, :]).ravel()
        mix = mac.PayloadMix(q / q.sum(), slots.ravel())
        own = [mac.PayloadMix(config.region_probs, slots[c]) for c in range(len(counts))]
    else:
        nc, nr = stats.node_class, stats.node_region
        mix = _node_mix(slots, nc, nr, np.ones(n, bool))
        own = [_node_mix(slots, nc, nr, nc == c) if counts[c] else None
               for c in range(len(counts))]
    # the mean payload stands in for T_s in the others' success and collision times
    p = dataclasses.replace(p, T_s=mix.mean)
    fp = mac.solve_fixed_point(p, n)
    states = mac.channel_state_probs(fp.beta, n)
    return p, fp, states, mix, own


def compare_with_analytic(result: SimResult) -> list:
    """Simulated against analytic throughput, mean service time and collision probability."""
    cfg = result.config
    out = []
    for j, ch in enumerate(result.channels):
        if ch.n == 0:
            continue
        p, fp, states, mix, own = analytic_channel(cfg, j, ch)
        for c in range(cfg.n_classes):
            if cfg.counts[j][c] == 0:
                continue
            thr = mac.throughput(p, fp, cfg.frame_len[c], mean_payload=mix.mean, n=ch.n)
            if not p.saturated:
                thr = min(thr, p.arrival_rate * cfg.frame_len[c])
            svc = mac.mean_service_time(p, fp, states, own[c])
            out += [Comparison("throughput", j, c, ch.throughput[c], thr),
                    Comparison("service_time", j, c, ch.service_mean[c], svc),
                    Comparison("collision_prob", j, c, ch.collision_prob[c], fp.gamma)]
        for name, sim_v, ana_v in zip(("p_idle", "p_succ", "p_coll"), ch.tagged_freq,
                                      states.as_array()):
            out.append(Comparison(name, j, -1, float(sim_v), float(ana_v)))
    return out
