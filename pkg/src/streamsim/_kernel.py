"""Compiled slot loop behind ``simulator.run``.

Per-client queues are rings of per-deadline packet counts: a client's
packets share one delay bound, so deadlines are admitted in increasing order
and the live ones, ``[t, t + tau - 1]``, map to distinct residues mod tau.
"""
import numpy as np
from numba import njit

EDF, LDF, EPDF, COST_INDEX = 0, 1, 2, 3


@njit(cache=True)
def _advance_head(counts, head, qlen, tau, n, t):
    if head[n] < t:
        head[n] = t
    if qlen[n] == 0:
        return
    while counts[n, head[n] % tau[n]] == 0:
        head[n] += 1


@njit(cache=True)
def _pick_earliest(counts, head, qlen, tau, eligible, u, random_ties):
    n_clients = len(tau)
    dmin = -1
    for n in range(n_clients):
        if eligible[n] and qlen[n] > 0:
            if dmin < 0 or head[n] < dmin:
                dmin = head[n]
    if dmin < 0:
        return -1, -1
    if not random_ties:
        for n in range(n_clients):
            if eligible[n] and qlen[n] > 0 and head[n] == dmin:
                return n, dmin
    total = 0
    for n in range(n_clients):
        if eligible[n] and qlen[n] > 0 and head[n] == dmin:
            total += counts[n, dmin % tau[n]]
    k = int(u * total)
    if k >= total:
        k = total - 1
    for n in range(n_clients):
        if eligible[n] and qlen[n] > 0 and head[n] == dmin:
            c = counts[n, dmin % tau[n]]
            if k < c:
                return n, dmin
            k -= c
    return -1, -1


@njit(cache=True)
def simulate(arrivals, tau, policy, m_frame, inc, dec, pos_eps, random_ties,
             p_true, costs, p_hat0, alpha, cost_uses_estimate,
             workload_from_estimate, q_req,
             u_chan, u_tie, bucket_slots, record):
    n_clients, horizon = arrivals.shape
    tau_max = 1
    for n in range(n_clients):
        if tau[n] > tau_max:
            tau_max = tau[n]
    counts = np.zeros((n_clients, tau_max), dtype=np.int64)
    head = np.zeros(n_clients, dtype=np.int64)
    qlen = np.zeros(n_clients, dtype=np.int64)

    delivered = np.zeros(n_clients, dtype=np.int64)
    generated = np.zeros(n_clients, dtype=np.int64)
    expired = np.zeros(n_clients, dtype=np.int64)
    attempts = np.zeros(n_clients, dtype=np.int64)
    n_buckets = (horizon + bucket_slots - 1) // bucket_slots
    per_bucket = np.zeros((n_clients, n_buckets), dtype=np.int64)
    debt = np.zeros(n_clients, dtype=np.float64)
    incr = inc.copy()
    p_hat = p_hat0.copy()
    eligible = np.ones(n_clients, dtype=np.bool_)
    rec_len = horizon if record else 0
    rec_client = np.zeros(rec_len, dtype=np.int64)
    rec_deadline = np.zeros(rec_len, dtype=np.int64)
    rec_success = np.zeros(rec_len, dtype=np.bool_)
    idle = 0

    for t in range(1, horizon + 1):
        # admit packets generated during slot t-1
        for n in range(n_clients):
            a = arrivals[n, t - 1]
            if a > 0:
                d = t - 1 + tau[n]
                if qlen[n] == 0:
                    head[n] = d
                counts[n, d % tau[n]] += a
                qlen[n] += a
                generated[n] += a

        if (t - 1) % m_frame == 0:
            if workload_from_estimate:
                for n in range(n_clients):
                    incr[n] = m_frame * q_req[n] / p_hat[n] if p_hat[n] > 0 else 0.0
            for n in range(n_clients):
                debt[n] += incr[n]

        u = u_tie[t - 1]
        sel = -1
        dsel = -1
        if policy == EDF:
            for n in range(n_clients):
                eligible[n] = True
            sel, dsel = _pick_earliest(counts, head, qlen, tau, eligible, u, True)
        elif policy == EPDF:
            any_pos = False
            for n in range(n_clients):
                eligible[n] = debt[n] > pos_eps and qlen[n] > 0
                if eligible[n]:
                    any_pos = True
            if not any_pos:
                for n in range(n_clients):
                    eligible[n] = True
            sel, dsel = _pick_earliest(counts, head, qlen, tau, eligible, u, random_ties)
        elif policy == LDF:
            best = -1.0
            ntied = 0
            for n in range(n_clients):
                if qlen[n] > 0:
                    if sel < 0 or debt[n] > best:
                        sel = n
                        best = debt[n]
                        ntied = 1
                    elif debt[n] == best:
                        ntied += 1
            if sel >= 0 and random_ties and ntied > 1:
                k = int(u * ntied)
                if k >= ntied:
                    k = ntied - 1
                for n in range(n_clients):
                    if qlen[n] > 0 and debt[n] == best:
                        if k == 0:
                            sel = n
                            break
                        k -= 1
            if sel >= 0:
                dsel = head[sel]
        else:
            best = -1.0
            for n in range(n_clients):
                if qlen[n] > 0:
                    lax = head[n] - t + 1
                    p = p_hat[n] if cost_uses_estimate else p_true[n]
                    index = costs[n] * p / lax
                    if (sel < 0 or index > best
                            or (index == best and head[n] < dsel)):
                        sel = n
                        best = index
                        dsel = head[n]

        if sel < 0:
            idle += 1
        else:
            attempts[sel] += 1
            ok = u_chan[t - 1] < p_true[sel]
            if ok:
                counts[sel, dsel % tau[sel]] -= 1
                qlen[sel] -= 1
                delivered[sel] += 1
                per_bucket[sel, (t - 1) // bucket_slots] += 1
                _advance_head(counts, head, qlen, tau, sel, t)
            p_hat[sel] = (1.0 - alpha) * p_hat[sel] + alpha * (1.0 if ok else 0.0)
            debt[sel] -= dec
            if debt[sel] < 0.0:
                debt[sel] = 0.0
            if record:
                rec_success[t - 1] = ok
        if record:
            rec_client[t - 1] = sel + 1
            rec_deadline[t - 1] = dsel

        # expire packets whose deadline is this slot
        for n in range(n_clients):
            if qlen[n] > 0:
                r = t % tau[n]
                e = counts[n, r]
                if e > 0 and head[n] == t:
                    expired[n] += e
                    qlen[n] -= e
                    counts[n, r] = 0
                _advance_head(counts, head, qlen, tau, n, t + 1)

    return (delivered, generated, expired, attempts, qlen, idle, per_bucket,
            debt, p_hat, rec_client, rec_deadline, rec_success)
