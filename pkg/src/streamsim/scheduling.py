"""Scheduling policies (EDF, LDF, EPDF, cost index) and the truncated time-debt ledger."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .model import ConfigError, Packet, as_fraction


class PolicyKind(enum.Enum):
    EDF = "EDF"
    LDF = "LDF"
    EPDF = "EPDF"
    COST_INDEX = "COST_INDEX"

    @classmethod
    def parse(cls, name: str) -> "PolicyKind":
        key = name.strip().upper().replace("-", "_")
        if key in ("COST", "CI", "DUA_BAMBOS"):
            key = "COST_INDEX"
        try:
            return cls[key]
        except KeyError:
            raise ConfigError(f"unknown policy {name!r}; expected one of {[k.value for k in cls]}") from None

    @property
    def uses_debt(self) -> bool:
        return self in (PolicyKind.LDF, PolicyKind.EPDF)


class LedgerError(RuntimeError):
    pass


class DebtLedger:
    """Truncated time debts, kept as exact fractions.

    Every ``m_frame`` slots (at slots ``1, M+1, 2M+1, ...``) client ``n`` is
    credited ``M * w_n``; each slot in which it is scheduled costs one unit,
    and the result is floored at zero. ``open_slot(t)`` applies the credit
    and exposes the values a policy sees in slot ``t``; ``close_slot`` applies
    the scheduling charge.
    """

    def __init__(self, workloads: Sequence, m_frame: int):
        if m_frame < 1:
            raise ConfigError(f"debt frame length must be >= 1, got {m_frame}")
        self.m_frame = int(m_frame)
        self.workloads = [as_fraction(w) for w in workloads]
        self.debts = [Fraction(0)] * len(self.workloads)
        self.slot = 0  # last closed slot
        self._open: int | None = None

    @property
    def increments(self) -> list[Fraction]:
        return [self.m_frame * w for w in self.workloads]

    def set_workloads(self, workloads: Sequence) -> None:
        self.workloads = [as_fraction(w) for w in workloads]

    def open_slot(self, t: int) -> list[Fraction]:
        if self._open is not None or t != self.slot + 1:
            raise LedgerError(f"slot {t} opened out of order (last closed {self.slot}, open {self._open})")
        if (t - 1) % self.m_frame == 0:
            self.debts = [d + inc for d, inc in zip(self.debts, self.increments)]
        self._open = t
        return list(self.debts)

    def close_slot(self, t: int, scheduled: int | None) -> list[Fraction]:
        if self._open != t:
            raise LedgerError(f"slot {t} closed without being opened")
        if scheduled is not None:
            i = scheduled - 1
            self.debts[i] = max(self.debts[i] - 1, Fraction(0))
        self.slot, self._open = t, None
        return list(self.debts)

    def tick(self, t: int, scheduled: int | None) -> list[Fraction]:
        """One full step of the recursion: ``d(t) = [d(t-1) + credit - charge]^+``."""
        self.open_slot(t)
        return self.close_slot(t, scheduled)

    def __getitem__(self, n: int) -> Fraction:
        return self.debts[n - 1]

    def positive(self, n: int) -> bool:
        return self.debts[n - 1] > 0


def debt_tick(ledger: DebtLedger, t: int, scheduled: int | None) -> DebtLedger:
    ledger.tick(t, scheduled)
    return ledger


@dataclass
class QueueView:
    """Packets schedulable in slot ``t``, ordered by (deadline, client, id)."""

    t: int
    packets: list[Packet] = field(default_factory=list)

    def __post_init__(self):
        for pk in self.packets:
            if not pk.available_from <= self.t <= pk.deadline:
                raise ValueError(f"packet {pk.id} is not schedulable in slot {self.t}")
        self.packets = sorted(self.packets, key=lambda pk: (pk.deadline, pk.client, pk.id))

    def __len__(self):
        return len(self.packets)

    def clients(self) -> list[int]:
        return sorted({pk.client for pk in self.packets})

    def head(self, n: int) -> Packet | None:
        for pk in self.packets:
            if pk.client == n:
                return pk
        return None


def _earliest(packets: list[Packet], u: float | None) -> Packet | None:
    """Earliest-deadline packet; ties go to the lowest client, or uniformly by ``u``."""
    if not packets:
        return None
    dmin = min(pk.deadline for pk in packets)
    tied = sorted((pk for pk in packets if pk.deadline == dmin), key=lambda pk: (pk.client, pk.id))
    if u is None:
        return tied[0]
    return tied[min(int(u * len(tied)), len(tied) - 1)]


def select_edf(view: QueueView, rng) -> Packet | None:
    """Minimum deadline, ties uniformly at random among the tied packets."""
    return _earliest(view.packets, rng.random())


def select_ldf(view: QueueView, ledger: DebtLedger, rng=None) -> Packet | None:
    u = None if rng is None else rng.random()
    return _ldf(view, ledger, u)


def _ldf(view, ledger, u):
    clients = view.clients()
    if not clients:
        return None
    dmax = max(ledger[n] for n in clients)
    tied = [n for n in clients if ledger[n] == dmax]
    n = tied[0] if u is None else tied[min(int(u * len(tied)), len(tied) - 1)]
    return view.head(n)


def select_epdf(view: QueueView, ledger: DebtLedger, rng=None) -> Packet | None:
    """Earliest deadline among positive-debt clients, else earliest overall."""
    u = None if rng is None else rng.random()
    return _epdf(view, ledger, u)


def _epdf(view, ledger, u):
    positive = [pk for pk in view.packets if ledger.positive(pk.client)]
    return _earliest(positive or view.packets, u)


def select_cost_index(view: QueueView, costs: Sequence[float], estimates: Sequence[float], t: int) -> Packet | None:
    """Maximize ``c_n * p_n / laxity`` with laxity ``deadline - t + 1``.

    Stand-in for a dropping-cost heuristic that weighs cost, deadline and
    link quality; ties go to the earlier deadline, then the lower client.
    """
    best, best_key = None, None
    for n in view.clients():
        pk = view.head(n)
        lax = pk.deadline - t + 1
        index = float(costs[n - 1]) * float(estimates[n - 1]) / float(lax)
        key = (index, -pk.deadline, -n)
        if best_key is None or key > best_key:
            best, best_key = pk, key
    return best


@dataclass
class Policy:
    kind: PolicyKind
    m_frame: int = 1
    costs: tuple[float, ...] | None = None
    random_ties: bool = False

    def __post_init__(self):
        if isinstance(self.kind, str):
            self.kind = PolicyKind.parse(self.kind)
        if self.m_frame < 1:
            raise ConfigError(f"debt frame length must be >= 1, got {self.m_frame}")
        if self.costs is not None:
            self.costs = tuple(float(c) for c in self.costs)
            if any(c < 0 for c in self.costs):
                raise ConfigError("dropping costs must be >= 0")

    @property
    def name(self) -> str:
        return self.kind.value

    def select(self, view: QueueView, ledger: DebtLedger | None, t: int, rng,
               estimates: Sequence[float] | None = None) -> Packet | None:
        """Pick a packet for slot ``t``; always consumes exactly one draw from ``rng``."""
        u = rng.random()
        tie_u = u if self.random_ties else None
        if self.kind is PolicyKind.EDF:
            return _earliest(view.packets, u)
        if self.kind is PolicyKind.LDF:
            return _ldf(view, ledger, tie_u)
        if self.kind is PolicyKind.EPDF:
            return _epdf(view, ledger, tie_u)
        if self.costs is None:
            raise ConfigError("COST_INDEX policy needs per-client costs")
        return select_cost_index(view, self.costs, estimates, t)
