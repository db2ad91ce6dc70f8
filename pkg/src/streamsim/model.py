"""Shared domain types and the slot/deadline conventions.

Slots are numbered from 1. A packet generated during slot ``g`` becomes
available in slot ``g + 1`` and may be transmitted up to and including its
deadline slot ``g + tau``, so its eligibility window is exactly ``tau`` slots
long. Expiry happens after the transmission attempt of the deadline slot.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

DEFAULT_SLOT_WIDTH = Fraction(3, 4000)  # 750 us
DEFAULT_MTU = 1500


class ConfigError(ValueError):
    """Invalid model or experiment configuration."""


def as_fraction(x) -> Fraction:
    """Exact rational view of a number; floats go through their shortest repr.

    ``0.1`` becomes ``1/10`` rather than the binary expansion, which keeps
    workloads such as ``q/p`` small-denominator rationals.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, Rational):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    return Fraction(repr(float(x)))


def deadline_of(generated_at: int, tau: int) -> int:
    if tau < 1:
        raise ConfigError(f"delay bound must be >= 1 slot, got {tau}")
    return generated_at + tau


@dataclass(frozen=True, slots=True)
class Packet:
    id: int
    client: int
    generated_at: int
    deadline: int
    size_bytes: int = DEFAULT_MTU

    @property
    def available_from(self) -> int:
        return self.generated_at + 1

    @classmethod
    def create(cls, id: int, client: int, generated_at: int, tau: int,
               size_bytes: int = DEFAULT_MTU) -> "Packet":
        return cls(id, client, generated_at, deadline_of(generated_at, tau), size_bytes)


def is_schedulable(packet: Packet, t: int) -> bool:
    return packet.available_from <= t <= packet.deadline


@dataclass(frozen=True)
class ClientConfig:
    """Per-client link and requirement parameters.

    ``index`` is 1-based. ``reliability``, ``required_throughput`` and
    ``mean_rate`` are stored as exact fractions so that the implied workload
    ``q/p`` is exact.
    """

    index: int
    reliability: Fraction
    delay_bound: int
    required_throughput: Fraction = Fraction(0)
    mean_rate: Fraction | None = None

    def __post_init__(self):
        for name in ("reliability", "required_throughput"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))
        if self.mean_rate is not None:
            object.__setattr__(self, "mean_rate", as_fraction(self.mean_rate))
        if self.index < 1:
            raise ConfigError(f"client index must be >= 1, got {self.index}")
        if not 0 < self.reliability <= 1:
            raise ConfigError(f"client {self.index}: reliability must be in (0, 1], got {self.reliability}")
        if int(self.delay_bound) != self.delay_bound or self.delay_bound < 1:
            raise ConfigError(f"client {self.index}: delay bound must be an integer >= 1, got {self.delay_bound}")
        if self.required_throughput < 0:
            raise ConfigError(f"client {self.index}: negative throughput requirement")
        if self.mean_rate is not None and self.required_throughput > self.mean_rate:
            raise ConfigError(
                f"client {self.index}: requirement {self.required_throughput} exceeds mean rate {self.mean_rate}")

    @property
    def workload(self) -> Fraction:
        return self.required_throughput / self.reliability


@dataclass
class SlotOutcome:
    slot: int
    scheduled_client: int | None = None
    scheduled_packet: int | None = None
    success: bool = False
    delivered: tuple[int, ...] = ()
    expired_counts: tuple[int, ...] = ()
    scheduled_deadline: int | None = None

    @property
    def idle(self) -> bool:
        return self.scheduled_client is None

    def check(self) -> None:
        if self.success and self.scheduled_client is None:
            raise AssertionError(f"slot {self.slot}: success without a scheduled client")
        if sum(self.delivered) > 1:
            raise AssertionError(f"slot {self.slot}: more than one delivery")
        if self.scheduled_client is None and self.scheduled_packet is not None:
            raise AssertionError(f"slot {self.slot}: packet without client")

