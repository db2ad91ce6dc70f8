"""Small fixed scenarios used by the tests, the acceptance suite and the demos."""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from .capacity import HomogeneousSpec
from .model import ClientConfig
from .scheduling import Policy, PolicyKind
from .simulator import SimConfig
from .traffic import ArrivalSchedule, MarkovSource


def three_client_example(m_frame: int, horizon: int = 1_000_000, seed: int = 0,
                         record: bool = False) -> SimConfig:
    """The three-client small-M counterexample.

    Clients 1 and 2 generate a packet every slot (delay bound 1, perfect
    links); client 3 generates in slots 2, 6, 10, ... with delay bound 2 and
    reliability 1/2. Requirements are (1/2, 0, 3/16).
    """
    clients = [ClientConfig(1, 1, 1, Fraction(1, 2)),
               ClientConfig(2, 1, 1, 0),
               ClientConfig(3, Fraction(1, 2), 2, Fraction(3, 16))]
    sources = [ArrivalSchedule(np.array([1])), ArrivalSchedule(np.array([1])),
               ArrivalSchedule(np.array([0, 0, 1, 0]))]
    return SimConfig(clients, sources, Policy(PolicyKind.EPDF, m_frame), horizon, seed,
                     record_schedule=record, use_estimates=False)


def homogeneous_config(spec: HomogeneousSpec, horizon: int = 1_000_000, seed: int = 0,
                       policy: PolicyKind = PolicyKind.EDF) -> SimConfig:
    """Slot-level version of a homogeneous spec: one packet per client at each interval start."""
    counts = np.zeros(spec.interval, dtype=np.int64)
    counts[0] = 1
    clients = [ClientConfig(n, spec.reliability, spec.delay_bound) for n in range(1, spec.n_clients + 1)]
    sources = [ArrivalSchedule(counts) for _ in clients]
    return SimConfig(clients, sources, Policy(policy), horizon, seed, use_estimates=False)


def on_off(p_on: float, p_off: float, burst: int) -> MarkovSource:
    """Two-state source: ``burst`` packets per slot while on, none while off.

    ``p_on`` is the off-to-on switching probability, ``p_off`` the on-to-off one.
    """
    return MarkovSource(np.array([[1 - p_on, p_on], [p_off, 1 - p_off]]), [0, burst])


def markov_instances() -> dict[str, dict]:
    """Desk-scale instances with Markov traffic for LP-versus-simulation checks."""
    return {
        "bursty-pair": dict(reliability=[0.7, 0.9], delay_bounds=[2, 1],
                            sources=[on_off(0.4, 0.5, 2), on_off(0.7, 0.7, 1)]),
        "two-deep": dict(reliability=[0.6, 0.8], delay_bounds=[2, 2],
                         sources=[on_off(0.5, 0.5, 1), on_off(0.3, 0.6, 2)]),
        "three-mixed": dict(reliability=[0.5, 0.75, 1.0], delay_bounds=[1, 2, 1],
                            sources=[on_off(0.6, 0.4, 1), on_off(0.5, 0.5, 1), on_off(0.2, 0.8, 1)]),
    }
