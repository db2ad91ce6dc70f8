from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from streamsim.model import ConfigError, Packet
from streamsim.scheduling import (DebtLedger, LedgerError, Policy, PolicyKind, QueueView, debt_tick,
                                  select_cost_index, select_edf, select_epdf, select_ldf)

F = Fraction
WORKLOADS = [F(1, 2), 0, F(3, 8)]


def pkt(id, client, deadline, t=1):
    # generated in the slot before t with tau chosen so the deadline matches
    return Packet(id, client, t - 1, deadline)


def ledger_with(debts, m_frame=1):
    led = DebtLedger([0] * len(debts), m_frame)
    led.debts = [F(d) for d in debts]
    return led


def test_ledger_initial_credit():
    led = DebtLedger(WORKLOADS, 2)
    assert led.open_slot(1) == [1, 0, F(3, 4)]


def test_ledger_values_slot_three():
    led = DebtLedger(WORKLOADS, 2)
    debt_tick(led, 1, 1)
    debt_tick(led, 2, 2)
    assert led.open_slot(3) == [1, 0, F(3, 2)]


def test_ledger_truncates_at_zero():
    led = DebtLedger([0, F(1, 4)], 2)
    debt_tick(led, 1, 1)
    debt_tick(led, 2, 2)
    assert led.debts == [0, 0]


def test_ledger_rejects_double_tick():
    led = DebtLedger([F(1, 2)], 1)
    led.tick(1, None)
    with pytest.raises(LedgerError):
        led.tick(1, None)
    with pytest.raises(LedgerError):
        led.close_slot(2, None)


def test_ledger_requires_positive_frame():
    with pytest.raises(ConfigError):
        DebtLedger([0], 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.lists(st.integers(0, 12), min_size=1, max_size=4), st.data())
def test_integral_increments_keep_debts_integral(m, nums, data):
    workloads = [F(k, m) for k in nums]
    led = DebtLedger(workloads, m)
    for t in range(1, 60):
        led.tick(t, data.draw(st.sampled_from([None] + list(range(1, len(nums) + 1)))))
        assert all(d.denominator == 1 and d >= 0 for d in led.debts)


def test_edf_examples():
    v = QueueView(1, [pkt(0, 1, 5), pkt(1, 2, 3), pkt(2, 3, 9)])
    assert select_edf(v, np.random.default_rng(0)).deadline == 3
    assert select_edf(QueueView(1, []), np.random.default_rng(0)) is None


def test_edf_ties_are_uniform():
    v = QueueView(1, [pkt(0, 1, 3), pkt(1, 2, 3)])
    rng = np.random.default_rng(123)
    picks = [select_edf(v, rng).client for _ in range(10_000)]
    assert abs(picks.count(1) / 10_000 - 0.5) < 0.02


def test_ldf_examples():
    v = QueueView(1, [pkt(0, 1, 4), pkt(1, 2, 6), pkt(2, 2, 5)])
    assert select_ldf(v, ledger_with([2, 5])).id == 2  # client 2's earliest packet
    only2 = QueueView(1, [pkt(1, 2, 6)])
    assert select_ldf(only2, ledger_with([5, 2])).client == 2
    assert select_ldf(v, ledger_with([0, 0])).client == 1


def test_epdf_prefers_positive_debt():
    v = QueueView(1, [pkt(0, 1, 2), pkt(1, 2, 7)])
    assert select_epdf(v, ledger_with([0, 1])).client == 2
    assert select_epdf(v, ledger_with([1, 1])).client == 1


def test_epdf_falls_back_to_zero_debt_client():
    # the positive-debt client has nothing schedulable
    v = QueueView(1, [pkt(0, 2, 4)])
    assert select_epdf(v, ledger_with([3, 0])).client == 2
    assert select_epdf(QueueView(1, []), ledger_with([3, 0])) is None


def test_cost_index_examples():
    one = QueueView(1, [pkt(0, 1, 4)])
    assert select_cost_index(one, [1], [1], 1).id == 0
    v = QueueView(1, [pkt(0, 1, 1), pkt(1, 2, 5)])
    assert select_cost_index(v, [1, 1], [1, 1], 1).client == 1
    w = QueueView(1, [pkt(0, 1, 2), pkt(1, 2, 2)])
    assert select_cost_index(w, [0.2, 0.8], [1, 0.5], 1).client == 2


def test_cost_index_tie_prefers_earlier_deadline():
    v = QueueView(1, [pkt(0, 2, 1), pkt(1, 1, 2)])
    # indices 1*1/1 = 1 and 2*1/2 = 1 tie; earlier deadline (client 2) wins
    assert select_cost_index(v, [2, 1], [1, 1], 1).client == 2


def test_queue_view_rejects_unschedulable():
    with pytest.raises(ValueError):
        QueueView(1, [Packet(0, 1, 1, 3)])  # available from slot 2
    with pytest.raises(ValueError):
        QueueView(5, [Packet(0, 1, 1, 3)])  # expired


def test_policy_parse():
    assert PolicyKind.parse("epdf") is PolicyKind.EPDF
    assert PolicyKind.parse("cost") is PolicyKind.COST_INDEX
    with pytest.raises(ConfigError):
        PolicyKind.parse("fifo")


def test_policy_consumes_one_draw():
    for kind in PolicyKind:
        pol = Policy(kind, costs=[1, 1] if kind is PolicyKind.COST_INDEX else None)
        rng, ref = np.random.default_rng(4), np.random.default_rng(4)
        pol.select(QueueView(1, [pkt(0, 1, 2)]), ledger_with([0, 0]), 1, rng, [1, 1])
        ref.random()
        assert rng.random() == ref.random()


packets = st.lists(st.tuples(st.integers(1, 4), st.integers(0, 5)), max_size=12)


@settings(max_examples=200, deadline=None)
@given(packets, st.lists(st.integers(0, 3), min_size=4, max_size=4), st.sampled_from(list(PolicyKind)),
       st.integers(0, 2 ** 31))
def test_policies_are_work_conserving(spec, debts, kind, seed):
    t = 10
    view = QueueView(t, [Packet(i, n, t - 1, t + lax) for i, (n, lax) in enumerate(spec)])
    pol = Policy(kind, costs=[1, 2, 3, 4] if kind is PolicyKind.COST_INDEX else None)
    pk = pol.select(view, ledger_with(debts), t, np.random.default_rng(seed), [0.5, 0.6, 0.7, 0.8])
    assert (pk is None) == (len(view) == 0)
    if kind is PolicyKind.EPDF and pk is not None:
        has_positive = any(debts[p.client - 1] > 0 for p in view.packets)
        assert debts[pk.client - 1] > 0 or not has_positive
        pool = [p for p in view.packets if debts[p.client - 1] > 0] or view.packets
        assert pk.deadline == min(p.deadline for p in pool)
    if kind is PolicyKind.LDF and pk is not None:
        assert debts[pk.client - 1] == max(debts[n - 1] for n in view.clients())
