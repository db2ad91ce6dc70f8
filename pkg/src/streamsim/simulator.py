"""Slotted-time engine: admit, credit debts, select, transmit, expire.

``run`` drives the compiled kernel and is what experiments use. ``Simulation``
is a slot-at-a-time engine built directly on the policy and ledger objects;
it yields one ``SlotOutcome`` per slot and serves as the reference the
kernel is tested against.
"""
from __future__ import annotations

import copy
import io
import json
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import _kernel
from .channel import DEFAULT_EWMA_ALPHA, BernoulliChannel, ReliabilityEstimator, update_estimate
from .model import DEFAULT_SLOT_WIDTH, ClientConfig, ConfigError, Packet, SlotOutcome, as_fraction
from .scheduling import DebtLedger, Policy, PolicyKind, QueueView

ACHIEVED_FRACTION = Fraction(95, 100)
_EXACT_LIMIT = 2 ** 52
_POLICY_CODE = {PolicyKind.EDF: _kernel.EDF, PolicyKind.LDF: _kernel.LDF,
                PolicyKind.EPDF: _kernel.EPDF, PolicyKind.COST_INDEX: _kernel.COST_INDEX}


@dataclass
class SimConfig:
    clients: list[ClientConfig]
    sources: list
    policy: Policy
    horizon: int
    seed: int = 0
    slot_width: Fraction = DEFAULT_SLOT_WIDTH
    ewma_alpha: float = DEFAULT_EWMA_ALPHA
    ewma_initial: float = 1.0
    use_estimates: bool = True
    workload_from_estimate: bool = False
    record_schedule: bool = False

    def __post_init__(self):
        self.slot_width = as_fraction(self.slot_width)
        self.validate()

    def validate(self) -> None:
        if not self.clients:
            raise ConfigError("at least one client is required")
        if len(self.sources) != len(self.clients):
            raise ConfigError(f"{len(self.clients)} clients but {len(self.sources)} traffic sources")
        for i, c in enumerate(self.clients, start=1):
            if c.index != i:
                raise ConfigError(f"client indices must be 1..N in order, got {c.index} at position {i}")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1 slot")
        if self.slot_width <= 0:
            raise ConfigError("slot width must be positive")
        if self.policy.kind is PolicyKind.COST_INDEX and self.policy.costs is None:
            raise ConfigError("COST_INDEX needs per-client dropping costs")
        if self.policy.costs is not None and len(self.policy.costs) != len(self.clients):
            raise ConfigError("one dropping cost per client is required")

    @property
    def n_clients(self) -> int:
        return len(self.clients)

    @property
    def bucket_slots(self) -> int:
        return max(1, math.floor(1 / self.slot_width))


@dataclass
class RunMetrics:
    horizon: int
    policy: str
    delivered: list[int]
    generated: list[int]
    expired: list[int]
    queued: list[int]
    attempts: list[int]
    idle_slots: int
    per_second: np.ndarray
    final_debts: list
    bucket_slots: int
    schedule: dict | None = field(default=None, repr=False)

    @property
    def throughput(self) -> list[Fraction]:
        return [Fraction(d, self.horizon) for d in self.delivered]

    def throughput_float(self) -> np.ndarray:
        return np.asarray(self.delivered, dtype=float) / self.horizon

    def check(self) -> None:
        for n, (g, d, e, q) in enumerate(zip(self.generated, self.delivered, self.expired, self.queued), 1):
            if g != d + e + q:
                raise AssertionError(f"client {n}: generated {g} != delivered {d} + expired {e} + queued {q}")
        if sum(self.delivered) > self.horizon:
            raise AssertionError("more deliveries than slots")
        if int(self.per_second.sum()) != sum(self.delivered):
            raise AssertionError("per-second series does not sum to deliveries")

    def to_dict(self) -> dict:
        return {
            "horizon_slots": self.horizon,
            "policy": self.policy,
            "delivered": list(self.delivered),
            "generated": list(self.generated),
            "expired": list(self.expired),
            "queued": list(self.queued),
            "attempts": list(self.attempts),
            "throughput": [d / self.horizon for d in self.delivered],
            "idle_slots": self.idle_slots,
            "final_debts": [str(d) for d in self.final_debts],
            "bucket_slots": self.bucket_slots,
            "per_second_delivered": self.per_second.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _streams(seed: int, n_clients: int):
    ss = np.random.SeedSequence(seed)
    chan, tie, *traffic = ss.spawn(2 + n_clients)
    return (np.random.default_rng(chan), np.random.default_rng(tie),
            [np.random.default_rng(s) for s in traffic])


def _fresh(source):
    src = copy.copy(source)
    if hasattr(src, "reset"):
        src.reset()
    return src


def arrival_matrix(config: SimConfig, traffic_rngs=None) -> np.ndarray:
    if traffic_rngs is None:
        traffic_rngs = _streams(config.seed, config.n_clients)[2]
    rows = [np.asarray(_fresh(s).arrivals(config.horizon, r), dtype=np.int64)
            for s, r in zip(config.sources, traffic_rngs)]
    return np.vstack(rows)


def _debt_encoding(config: SimConfig):
    """Scale debts to integers (held exactly in float64) when the range allows."""
    m = config.policy.m_frame
    incs = [m * c.workload for c in config.clients]
    if not config.workload_from_estimate:
        scale = math.lcm(*(f.denominator for f in incs)) if incs else 1
        bound = (config.horizon // m + 1) * max(incs, default=0) * scale + scale
        if bound < _EXACT_LIMIT:
            inc = np.array([float(f * scale) for f in incs])
            return inc, float(scale), 0.0, scale
    return np.array([float(f) for f in incs]), 1.0, 1e-9, None


def run(config: SimConfig, arrivals: np.ndarray | None = None) -> RunMetrics:
    """Simulate ``config.horizon`` slots; a pure function of ``config`` (incl. seed).

    ``arrivals`` may be passed to reuse a precomputed arrival matrix; it must
    equal ``arrival_matrix(config)``.
    """
    config.validate()
    n = config.n_clients
    chan_rng, tie_rng, traffic_rngs = _streams(config.seed, n)
    if arrivals is None:
        arrivals = arrival_matrix(config, traffic_rngs)
    arrivals = np.ascontiguousarray(arrivals, dtype=np.int64)
    if arrivals.shape != (n, config.horizon):
        raise ConfigError(f"arrival matrix has shape {arrivals.shape}, expected {(n, config.horizon)}")
    u_chan = chan_rng.random(config.horizon)
    u_tie = tie_rng.random(config.horizon)
    inc, dec, eps, scale = _debt_encoding(config)
    pol = config.policy
    costs = np.array(pol.costs if pol.costs is not None else [0.0] * n, dtype=float)
    out = _kernel.simulate(
        arrivals, np.array([c.delay_bound for c in config.clients], dtype=np.int64),
        _POLICY_CODE[pol.kind], pol.m_frame, inc, dec, eps, pol.random_ties,
        np.array([float(c.reliability) for c in config.clients]), costs,
        np.full(n, float(config.ewma_initial)), float(config.ewma_alpha), config.use_estimates,
        config.workload_from_estimate, np.array([float(c.required_throughput) for c in config.clients]),
        u_chan, u_tie, config.bucket_slots, config.record_schedule)
    (delivered, generated, expired, attempts, qlen, idle, per_bucket,
     debt, _p_hat, rec_client, rec_deadline, rec_success) = out
    if scale is not None:
        debts = [Fraction(int(round(d)), scale) for d in debt]
    else:
        debts = [float(d) for d in debt]
    schedule = None
    if config.record_schedule:
        schedule = {"client": rec_client, "deadline": rec_deadline, "success": rec_success}
    return RunMetrics(config.horizon, pol.name, delivered.tolist(), generated.tolist(), expired.tolist(),
                      qlen.tolist(), attempts.tolist(), int(idle), per_bucket, debts,
                      config.bucket_slots, schedule)


class Simulation:
    """Slot-by-slot reference engine over explicit ``Packet`` objects."""

    def __init__(self, config: SimConfig):
        config.validate()
        self.config = config
        n = config.n_clients
        self._chan_rng, self._tie_rng, traffic_rngs = _streams(config.seed, n)
        self.arrivals = arrival_matrix(config, traffic_rngs)
        self.u_chan = self._chan_rng.random(config.horizon)
        self.channel = BernoulliChannel([float(c.reliability) for c in config.clients])
        self.estimator = ReliabilityEstimator(n, config.ewma_alpha, config.ewma_initial)
        self.ledger = DebtLedger([c.workload for c in config.clients], config.policy.m_frame)
        self.queues: list[deque[Packet]] = [deque() for _ in range(n)]
        self.t = 0
        self._next_id = 0
        self.delivered = [0] * n
        self.generated = [0] * n
        self.expired = [0] * n
        self.attempts = [0] * n
        self.idle_slots = 0
        self.per_second = np.zeros((n, -(-config.horizon // config.bucket_slots)), dtype=np.int64)

    def view(self) -> QueueView:
        return QueueView(self.t, [pk for q in self.queues for pk in q])

    def step(self) -> SlotOutcome:
        cfg = self.config
        t = self.t = self.t + 1
        if t > cfg.horizon:
            raise StopIteration
        for i, c in enumerate(cfg.clients):
            for _ in range(int(self.arrivals[i, t - 1])):
                self.queues[i].append(Packet.create(self._next_id, c.index, t - 1, c.delay_bound))
                self._next_id += 1
                self.generated[i] += 1

        if cfg.workload_from_estimate and (t - 1) % cfg.policy.m_frame == 0:
            self.ledger.set_workloads([c.required_throughput / Fraction(self.estimator[c.index])
                                       for c in cfg.clients])
        self.ledger.open_slot(t)
        view = self.view()
        p_for_cost = (self.estimator.estimates if cfg.use_estimates
                      else [float(c.reliability) for c in cfg.clients])
        pk = cfg.policy.select(view, self.ledger, t, self._tie_rng, p_for_cost)

        n_clients = cfg.n_clients
        delivered = [0] * n_clients
        success = False
        if pk is None:
            self.idle_slots += 1
        else:
            i = pk.client - 1
            self.attempts[i] += 1
            success = self.channel.success(pk.client, self.u_chan[t - 1])
            if success:
                self.queues[i].remove(pk)
                self.delivered[i] += 1
                delivered[i] = 1
                self.per_second[i, (t - 1) // cfg.bucket_slots] += 1
            update_estimate(self.estimator, pk.client, success)
        self.ledger.close_slot(t, None if pk is None else pk.client)

        expired = [0] * n_clients
        for i, q in enumerate(self.queues):
            while q and q[0].deadline <= t:
                q.popleft()
                expired[i] += 1
            self.expired[i] += expired[i]
        out = SlotOutcome(t, None if pk is None else pk.client, None if pk is None else pk.id, success,
                          tuple(delivered), tuple(expired), None if pk is None else pk.deadline)
        out.check()
        return out

    def __iter__(self):
        while self.t < self.config.horizon:
            yield self.step()

    def run(self) -> RunMetrics:
        for _ in self:
            pass
        return self.metrics()

    def metrics(self) -> RunMetrics:
        return RunMetrics(self.t, self.config.policy.name, list(self.delivered), list(self.generated),
                          list(self.expired), [len(q) for q in self.queues], list(self.attempts),
                          self.idle_slots, self.per_second, list(self.ledger.debts), self.config.bucket_slots)


def achieved(metrics: RunMetrics, clients: Sequence[ClientConfig], fraction=ACHIEVED_FRACTION) -> bool:
    """Every client got at least ``fraction`` (95%) of its required throughput."""
    fraction = as_fraction(fraction)
    return all(Fraction(d, metrics.horizon) >= fraction * c.required_throughput
               for d, c in zip(metrics.delivered, clients))


def shortfalls(metrics: RunMetrics, clients: Sequence[ClientConfig], fraction=ACHIEVED_FRACTION) -> list[float]:
    """Per-client ``max(0, fraction*q - throughput)`` in packets/slot."""
    fraction = as_fraction(fraction)
    return [float(max(Fraction(0), fraction * c.required_throughput - Fraction(d, metrics.horizon)))
            for d, c in zip(metrics.delivered, clients)]


def per_second_series(metrics: RunMetrics, client: int) -> list[int]:
    return metrics.per_second[client - 1].tolist()


def per_second_csv(metrics: RunMetrics, client: int) -> str:
    buf = io.StringIO()
    buf.write("second,count\n")
    for s, c in enumerate(per_second_series(metrics, client)):
        buf.write(f"{s},{c}\n")
    return buf.getvalue()
