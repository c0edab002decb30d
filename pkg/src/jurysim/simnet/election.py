"""Network-wide wait-time election after a blame flood.

Every node starts waiting when the blame reaches it. Certificates are
flooded with merit pruning: a node forwards a certificate only if it enters
its leaderboard. Two interchangeable engines produce identical results:

* ``numba``: array-based event loop, used for large networks;
* ``python``: the same event order driven through
  :class:`~jurysim.protocol.election.NodeState` objects.

Both schedule events in the same order and break timestamp ties by
insertion sequence, so their outputs can be compared exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numba
import numpy as np

from ..protocol.election import (
    JelOutcome,
    NodeState,
    ProtocolParams,
    WaitOutcome,
    on_election_timeout,
    on_wait_complete,
)
from .events import EventKind, EventQueue
from .topology import MeshTopology

NODE_BITS = 20
NODE_MASK = (1 << NODE_BITS) - 1
EMPTY = np.iinfo(np.int64).max

WAIT_DONE, ANNOUNCE, CERT_BATCH, TIMEOUT = 0, 1, 2, 3


def encode_key(wait_time, node):
    return (np.asarray(wait_time, dtype=np.int64) << NODE_BITS) | np.asarray(node, dtype=np.int64)


def decode_node(key):
    return np.asarray(key, dtype=np.int64) & NODE_MASK


def decode_wait(key):
    return np.asarray(key, dtype=np.int64) >> NODE_BITS


@dataclass
class ElectionResult:
    wait_done: np.ndarray
    timeout: np.ndarray
    announced: np.ndarray
    juror: np.ndarray
    # leaderboard keys of every node at its own timeout, ascending
    snapshots: np.ndarray
    messages: int
    last_delivery: int
    events: int

    @property
    def jurors(self) -> np.ndarray:
        return np.flatnonzero(self.juror)

    def roster(self, node: int) -> Tuple[int, ...]:
        row = self.snapshots[node]
        return tuple(int(k) for k in decode_node(row[row != EMPTY]))

    def roster_keys(self, node: int) -> Tuple[int, ...]:
        row = self.snapshots[node]
        return tuple(int(k) for k in row[row != EMPTY])

    def ideal_jury(self, waits: np.ndarray, j: int) -> np.ndarray:
        """The j globally smallest announced certificates' nodes."""
        nodes = np.flatnonzero(self.announced)
        keys = encode_key(waits[nodes], nodes)
        return decode_node(np.sort(keys)[:j])


# -- numba engine ----------------------------------------------------------


@numba.njit(cache=True)
def _offer(jel, u, key, j):
    """Insert key into row u if it has merit and is new; True if inserted."""
    last = jel[u, j - 1]
    if key >= last:
        return False
    lo, hi = 0, j
    while lo < hi:
        mid = (lo + hi) >> 1
        if jel[u, mid] < key:
            lo = mid + 1
        else:
            hi = mid
    if jel[u, lo] == key:
        return False
    for k in range(j - 1, lo, -1):
        jel[u, k] = jel[u, k - 1]
    jel[u, lo] = key
    return True


@numba.njit(cache=True)
def _contains(jel, u, key, j):
    for k in range(j):
        if jel[u, k] == key:
            return True
        if jel[u, k] > key:
            return False
    return False


@numba.njit(cache=True)
def _election_kernel(nbr, deg, start, waits, eligible, j, t_ele, cert_delay, hop_cost, node_bits):
    # Every event kind is scheduled a fixed delay after the event that
    # creates it, so each kind forms a stream already sorted by
    # (time, sequence). Merging the four stream heads pops events in
    # exactly the order a single priority queue would.
    n = nbr.shape[0]
    empty = np.iinfo(np.int64).max
    jel = np.full((n, j), empty, np.int64)
    snap = np.full((n, j), empty, np.int64)
    announced = np.zeros(n, np.bool_)
    juror = np.zeros(n, np.bool_)
    wait_done = start + waits
    timeout = wait_done + t_ele

    # stream 0: wait completions, sequence numbers 0..n-1 in node order
    order = np.argsort(wait_done, kind="mergesort")
    w_head = 0
    # streams 1 and 3: announcements and timeouts, at most n each
    a_time = np.empty(n, np.int64)
    a_seq = np.empty(n, np.int64)
    a_node = np.empty(n, np.int64)
    a_head = 0
    a_tail = 0
    o_time = np.empty(n, np.int64)
    o_seq = np.empty(n, np.int64)
    o_node = np.empty(n, np.int64)
    o_head = 0
    o_tail = 0
    # stream 2: certificate batches, a growable ring buffer
    cap = max(1024, 4 * n)
    c_buf = np.empty((cap, 5), np.int64)
    c_head = 0
    c_len = 0

    seq = n
    messages = 0
    last_delivery = 0
    events = 0
    while True:
        # pick the stream whose head has the smallest (time, seq)
        best = -1
        bt = empty
        bs = empty
        if w_head < n:
            v = order[w_head]
            best, bt, bs = 0, wait_done[v], v
        if a_head < a_tail and (a_time[a_head] < bt or (a_time[a_head] == bt and a_seq[a_head] < bs)):
            best, bt, bs = 1, a_time[a_head], a_seq[a_head]
        if c_len > 0:
            ct = c_buf[c_head, 0]
            cs = c_buf[c_head, 1]
            if ct < bt or (ct == bt and cs < bs):
                best, bt, bs = 2, ct, cs
        if o_head < o_tail and (o_time[o_head] < bt or (o_time[o_head] == bt and o_seq[o_head] < bs)):
            best, bt, bs = 3, o_time[o_head], o_seq[o_head]
        if best < 0:
            break
        events += 1
        t = bt
        if best == 0:
            a = order[w_head]
            w_head += 1
            own = (waits[a] << node_bits) | a
            if eligible[a] and _offer(jel, a, own, j):
                announced[a] = True
                a_time[a_tail] = t + cert_delay
                a_seq[a_tail] = seq
                a_node[a_tail] = a
                a_tail += 1
                seq += 1
            o_time[o_tail] = t + t_ele
            o_seq[o_tail] = seq
            o_node[o_tail] = a
            o_tail += 1
            seq += 1
        elif best == 1:
            a = a_node[a_head]
            a_head += 1
            messages += deg[a]
            own = (waits[a] << node_bits) | a
            c_buf, c_head, c_len = _enqueue(c_buf, c_head, c_len, t + hop_cost, seq, a, -1, own)
            seq += 1
        elif best == 2:
            a = c_buf[c_head, 2]
            came_from = c_buf[c_head, 3]
            key = c_buf[c_head, 4]
            c_head += 1
            if c_head == c_buf.shape[0]:
                c_head = 0
            c_len -= 1
            delivered = False
            for k in range(4):
                u = nbr[a, k]
                if u < 0 or u == came_from:
                    continue
                delivered = True
                if _offer(jel, u, key, j):
                    if deg[u] > 1:
                        messages += deg[u] - 1
                        c_buf, c_head, c_len = _enqueue(c_buf, c_head, c_len, t + hop_cost, seq, u, a, key)
                        seq += 1
            if delivered:
                last_delivery = t
        else:
            a = o_node[o_head]
            o_head += 1
            own = (waits[a] << node_bits) | a
            for k in range(j):
                snap[a, k] = jel[a, k]
            juror[a] = _contains(jel, a, own, j)
    return wait_done, timeout, announced, juror, snap, messages, last_delivery, events


@numba.njit(cache=True)
def _enqueue(buf, head, length, t, seq, a, b, key):
    cap = buf.shape[0]
    if length == cap:
        bigger = np.empty((cap * 2, 5), np.int64)
        for i in range(length):
            src = (head + i) % cap
            for k in range(5):
                bigger[i, k] = buf[src, k]
        buf = bigger
        head = 0
        cap *= 2
    i = (head + length) % cap
    buf[i, 0] = t
    buf[i, 1] = seq
    buf[i, 2] = a
    buf[i, 3] = b
    buf[i, 4] = key
    return buf, head, length + 1


def _run_numba(topology, start, waits, eligible, j, t_ele, cert_delay, hop_cost) -> ElectionResult:
    out = _election_kernel(
        topology.neighbor_table,
        topology.degree,
        start,
        waits,
        eligible,
        int(j),
        int(t_ele),
        int(cert_delay),
        int(hop_cost),
        NODE_BITS,
    )
    wait_done, timeout, announced, juror, snap, messages, last, events = out
    return ElectionResult(wait_done, timeout, announced, juror, snap, int(messages), int(last), int(events))


# -- python engine ---------------------------------------------------------


def _run_python(topology, start, waits, eligible, j, t_ele, cert_delay, hop_cost) -> ElectionResult:
    n = topology.n
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        params = ProtocolParams(j, 0, int(waits.max()), t_ele, quorum_q=j)
    states = [NodeState(v, params) for v in range(n)]
    for v, s in enumerate(states):
        s.start_election((0, 0), int(waits[v]))
    neighbors = [topology.neighbors(v) for v in range(n)]
    deg = topology.degree
    wait_done = (start + waits).astype(np.int64)
    timeout = wait_done + t_ele
    announced = np.zeros(n, dtype=bool)
    juror = np.zeros(n, dtype=bool)
    snap = np.full((n, j), EMPTY, dtype=np.int64)
    queue = EventQueue()
    for v in range(n):
        queue.push(int(wait_done[v]), EventKind.TIMER_EXPIRY, v, (WAIT_DONE, None, None))
    messages = 0
    last_delivery = 0
    while queue:
        ev = queue.pop()
        kind, came_from, cert = ev.payload
        v, t = ev.node, ev.timestamp
        if kind == WAIT_DONE:
            own = states[v].own_certificate
            if eligible[v] and on_wait_complete(states[v]) is WaitOutcome.ANNOUNCE_OWN_CERTIFICATE:
                announced[v] = True
                queue.push(t + cert_delay, EventKind.PROCESSING_DONE, v, (ANNOUNCE, None, own))
            states[v].own_certificate = own
            queue.push(t + t_ele, EventKind.TIMER_EXPIRY, v, (TIMEOUT, None, None))
        elif kind == ANNOUNCE:
            messages += int(deg[v])
            queue.push(t + hop_cost, EventKind.DELIVER, v, (CERT_BATCH, None, cert))
        elif kind == CERT_BATCH:
            delivered = False
            for u in neighbors[v]:
                if u == came_from:
                    continue
                delivered = True
                if states[u].jel.consider(cert) is JelOutcome.INSERTED_AND_FORWARD and deg[u] > 1:
                    messages += int(deg[u]) - 1
                    queue.push(t + hop_cost, EventKind.DELIVER, u, (CERT_BATCH, v, cert))
            if delivered:
                last_delivery = t
        else:
            result = on_election_timeout(states[v])
            keys = [c.wait_time << NODE_BITS | c.node for c in result.roster.certificates]
            snap[v, : len(keys)] = keys
            juror[v] = announced[v] and states[v].own_certificate in states[v].jel
    return ElectionResult(wait_done, timeout, announced, juror, snap, messages, last_delivery, queue.popped)


def run_election(
    topology: MeshTopology,
    start: np.ndarray,
    waits: np.ndarray,
    j: int,
    t_ele: int,
    cert_delay: int,
    hop_cost: int,
    backend: str = "numba",
    eligible: Optional[np.ndarray] = None,
) -> ElectionResult:
    """Simulate the election; ``start[v]`` is when node v processed the blame.

    Nodes with ``eligible[v]`` False relay certificates but never announce
    their own.
    """
    if topology.n > NODE_MASK + 1:
        raise ValueError(f"at most {NODE_MASK + 1} nodes supported")
    start = np.asarray(start, dtype=np.int64)
    waits = np.asarray(waits, dtype=np.int64)
    eligible = np.ones(topology.n, dtype=np.bool_) if eligible is None else np.asarray(eligible, dtype=np.bool_)
    args = (topology, start, waits, eligible, j, t_ele, cert_delay, hop_cost)
    if backend == "numba":
        return _run_numba(*args)
    if backend == "python":
        return _run_python(*args)
    raise ValueError(f"unknown backend {backend!r}")
