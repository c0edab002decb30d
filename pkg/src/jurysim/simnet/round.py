"""One complete blame round on the mesh, measured phase by phase.

Phase completion times are absolute simulation times of the last message
belonging to the phase, so phases overlap. Floods (blame, decision) are
evaluated in closed form on the grid: every node forwards on first receipt,
so arrival times are hop distances and transmission counts follow from node
degrees. The election runs in :mod:`jurysim.simnet.election`; BFT and the
blamer attestation run in an event loop hosting
:class:`~jurysim.protocol.bft.JurorReplica` objects.
"""

from __future__ import annotations

import bisect
import enum
import hashlib
import warnings
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..attestation import IntegrityScheme, validate
from ..protocol.bft import (
    Agreement,
    AutoBlame,
    Behavior,
    Decided,
    GiveUp,
    JurorReplica,
    RequestValidation,
    Send,
    SetTimer,
)
from ..protocol.election import (
    NodeState,
    ProtocolParams,
    initiate_blame,
    sample_wait_times,
    standard_quorum,
)
from ..protocol.messages import (
    BFT_MESSAGE_BYTES,
    BLAME_MESSAGE_BYTES,
    DECISION_MESSAGE_BYTES,
    WAIT_CERTIFICATE_BYTES,
    AttestationRequest,
    AttestationResponse,
    BlameMessage,
    DecisionMessage,
    Verdict,
    ms,
)
from ..protocol.rounds import RequestBlamerAttestation, decision_on, finalize_round
from .election import NODE_MASK, ElectionResult, encode_key, run_election
from .events import EventKind, EventQueue
from .topology import MeshTopology, build_mesh, default_time_params


class Phase(str, enum.Enum):
    INITIAL_ATTESTATION = "InitialAttestation"
    BLAME = "Blame"
    ELECTION = "Election"
    BFT = "BFT"
    BLAMER_ATT = "BlamerAtt"
    BLAMER_BFT = "BlamerBFT"
    DECISION = "Decision"


class BlameKind(str, enum.Enum):
    JUSTIFIED = "justified"
    # the blamer is an adversary blaming an honest node
    UNJUSTIFIED = "unjustified"


JUSTIFIED_PHASES = (Phase.INITIAL_ATTESTATION, Phase.BLAME, Phase.ELECTION, Phase.BFT, Phase.DECISION)
UNJUSTIFIED_PHASES = JUSTIFIED_PHASES[:4] + (Phase.BLAMER_ATT, Phase.BLAMER_BFT, Phase.DECISION)


@dataclass(frozen=True)
class Latencies:
    attestation_generation: int = ms(835)
    attestation_validation: int = ms(849)
    certificate_generation: int = ms(89)
    bft_step: int = ms(5)
    link: int = ms(5)
    # processing a relay spends on a flooded message before forwarding it;
    # decisions carry a signature that is checked like a BFT message
    blame_relay: int = 0
    certificate_relay: int = 0
    decision_relay: int = ms(5)


@dataclass(frozen=True)
class WireSizes:
    blame: int = BLAME_MESSAGE_BYTES
    certificate: int = WAIT_CERTIFICATE_BYTES
    decision: int = DECISION_MESSAGE_BYTES
    bft: int = BFT_MESSAGE_BYTES
    attestation_request: int = AttestationRequest.wire_size_bytes
    attestation_response: int = AttestationResponse.wire_size_bytes


@dataclass(frozen=True)
class Scenario:
    """Everything one simulated round depends on. Times in microseconds;
    None time parameters are derived from ``n``."""

    n: int
    j: int = 22
    quorum_q: Optional[int] = None
    blame_kind: BlameKind = BlameKind.JUSTIFIED
    t_min: Optional[int] = None
    t_max: Optional[int] = None
    t_ele: Optional[int] = None
    wait_mean: Optional[float] = None
    adversary_fraction: float = 0.0
    adversaries: Optional[Tuple[int, ...]] = None
    byzantine_behavior: Behavior = Behavior.SILENT
    view_timeout: Optional[int] = None
    seed: int = 0
    latencies: Latencies = field(default_factory=Latencies)
    sizes: WireSizes = field(default_factory=WireSizes)
    election_backend: str = "numba"

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError(f"n must be at least 2, got {self.n}")
        if not 1 <= self.j < self.n:
            raise ValueError(f"need 1 <= j < n, got j={self.j}, n={self.n}")
        if not 0.0 <= self.adversary_fraction <= 1.0:
            raise ValueError("adversary_fraction must lie in [0, 1]")
        if self.adversaries is not None and any(not 0 <= a < self.n for a in self.adversaries):
            raise ValueError("adversary ids must be valid node ids")

    @property
    def time_params(self) -> Tuple[int, int, int]:
        t_min, t_max, t_ele = default_time_params(self.n, self.latencies.link)
        return (
            t_min if self.t_min is None else self.t_min,
            t_max if self.t_max is None else self.t_max,
            t_ele if self.t_ele is None else self.t_ele,
        )

    @property
    def quorum(self) -> int:
        return standard_quorum(self.j) if self.quorum_q is None else self.quorum_q

    def protocol_params(self) -> ProtocolParams:
        t_min, t_max, t_ele = self.time_params
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return ProtocolParams(self.j, t_min, t_max, t_ele, self.quorum, wait_mean=self.wait_mean)

    @property
    def phases(self) -> Tuple[Phase, ...]:
        return UNJUSTIFIED_PHASES if self.blame_kind is BlameKind.UNJUSTIFIED else JUSTIFIED_PHASES

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)


@dataclass
class PhaseMetrics:
    phase: str
    # absolute time of the phase's last message; None if it never happened
    completion_time: Optional[int]
    messages: int
    bytes_sent: int
    n: int

    @property
    def messages_per_node(self) -> float:
        return self.messages / self.n

    @property
    def bytes_per_node(self) -> float:
        return self.bytes_sent / self.n

    @property
    def completion_seconds(self) -> float:
        return float("nan") if self.completion_time is None else self.completion_time / 1e6


@dataclass
class RoundResult:
    scenario: Scenario
    phases: Dict[str, PhaseMetrics]
    decisions_reached: int
    non_juror_bft_messages: int
    election_messages_per_node: float
    claimed_jurors: int
    jury: Tuple[int, ...]
    blamer: int
    blamed: int
    final_decision: Optional[DecisionMessage]
    auto_blames: Tuple[AutoBlame, ...]
    consensus_failures: int
    trace_hash: str

    @property
    def completed(self) -> bool:
        return self.final_decision is not None

    @property
    def total_time(self) -> int:
        return max(p.completion_time for p in self.phases.values() if p.completion_time is not None)

    @property
    def total_messages(self) -> int:
        return sum(p.messages for p in self.phases.values())

    @property
    def total_bytes(self) -> int:
        return sum(p.bytes_sent for p in self.phases.values())

    def excluding(self, *phases: str) -> Tuple[int, int]:
        """(messages, bytes) over all phases except the given ones."""
        keep = [p for name, p in self.phases.items() if name not in phases]
        return sum(p.messages for p in keep), sum(p.bytes_sent for p in keep)


# -- floods on the grid ----------------------------------------------------


@dataclass
class GridFlood:
    arrival: np.ndarray
    sources: Tuple[Tuple[int, int], ...]
    transmissions: int
    last_delivery: int


def grid_flood(topology: MeshTopology, sources: Sequence[Tuple[int, int]], hop_cost: int) -> GridFlood:
    """Flood from ``(node, time)`` sources where every node forwards once.

    Each source sends to all neighbours; every other node forwards its
    first copy to all neighbours but the sender.
    """
    if not sources:
        raise ValueError("flood needs at least one source")
    arrival = np.full(topology.n, np.iinfo(np.int64).max, dtype=np.int64)
    nodes = np.arange(topology.n, dtype=np.int64)
    for node, t in sources:
        np.minimum(arrival, t + topology.hops_from(node, nodes) * hop_cost, out=arrival)
    deg = topology.degree.astype(np.int64)
    is_source = np.zeros(topology.n, dtype=bool)
    is_source[[s for s, _ in sources]] = True
    sends = np.where(is_source, deg, deg - 1)
    transmissions = int(sends.sum())
    senders = sends > 0
    last = int(arrival[senders].max()) + hop_cost if senders.any() else int(arrival.max())
    return GridFlood(arrival, tuple(sources), transmissions, last)


# -- BFT and blamer attestation host ---------------------------------------


@dataclass
class _Instance:
    agreement: Agreement
    messages: int = 0
    bytes_sent: int = 0
    last_arrival: Optional[int] = None
    decide_times: Dict[int, int] = field(default_factory=dict)
    decisions: Dict[int, DecisionMessage] = field(default_factory=dict)
    adopted: set = field(default_factory=set)
    failures: int = 0


class _RoundHost:
    def __init__(self, scenario: Scenario, topology: MeshTopology, blame: BlameMessage, jury: Sequence[int], adversaries):
        self.sc = scenario
        self.top = topology
        self.lat = scenario.latencies
        self.sizes = scenario.sizes
        self.blame = blame
        self.jury = frozenset(int(v) for v in jury)
        self.adversaries = adversaries
        self.queue = EventQueue(trace=True)
        self.busy: Dict[int, int] = defaultdict(int)
        self.replicas: Dict[Tuple[int, int], JurorReplica] = {}
        # current leaderboard keys of every claimed juror
        self.boards: Dict[int, List[int]] = {}
        # announced certificate key of every node
        self.keys: Dict[int, int] = {}
        self.instances: List[_Instance] = []
        self.auto_blames: List[AutoBlame] = []
        self.non_juror_messages = 0
        self.decision_sources: List[Tuple[int, int]] = []
        self.final_decision: Optional[DecisionMessage] = None
        self.flood_hop = self.lat.link + self.lat.decision_relay
        self.blamer_att_started = False
        self.att = dict(messages=0, bytes_sent=0, completion=None)
        self.scheme = IntegrityScheme(
            self.lat.attestation_generation, self.lat.attestation_validation, self.sizes.attestation_response
        )

    # - helpers

    def behavior(self, node: int) -> Behavior:
        return self.sc.byzantine_behavior if node in self.adversaries else Behavior.HONEST

    def unicast(self, src: int, dst: int, now: int, size: int) -> Tuple[int, int]:
        """(arrival time, hop count); every hop counts as one transmission."""
        hops = self.top.hops(src, dst)
        return now + hops * self.lat.link, hops

    def add_instance(self, agreement: Agreement) -> int:
        self.instances.append(_Instance(agreement))
        return len(self.instances) - 1

    def add_replica(self, inst: int, node: int, roster: Sequence[int], full_prepare: bool, start_at: Optional[int]):
        t_ele = self.sc.time_params[2]
        timeout = self.sc.view_timeout or 3 * t_ele + self.lat.attestation_validation
        replica = JurorReplica(
            node,
            roster,
            self.sc.quorum,
            self.instances[inst].agreement,
            full_prepare=full_prepare,
            behavior=self.behavior(node),
            view_timeout=timeout,
        )
        self.replicas[(inst, node)] = replica
        if start_at is not None:
            self.queue.push(start_at, EventKind.TIMER_EXPIRY, node, ("start", inst))
        return replica

    # - event handling

    def run(self) -> None:
        q = self.queue
        while q:
            ev = q.pop()
            now, node = ev.timestamp, ev.node
            tag, inst = ev.payload[0], ev.payload[1]
            if tag == "att_request":
                self.on_attestation_request(node, now, inst, ev.payload[2])
                continue
            if tag == "att_fallback":
                if not self.blamer_att_started:
                    self.start_blamer_attestation(inst, node, now)
                continue
            if tag == "att_response":
                self.on_attestation_response(node, now, inst, ev.payload[2])
                continue
            replica = self.replicas.get((inst, node))
            if tag == "roster":
                self.on_roster_change(node, now, ev.payload[2])
                continue
            if replica is None or replica.done:
                continue
            if tag == "start":
                self.apply(inst, node, now, replica.start())
            elif tag == "arrive":
                done = max(now, self.busy[node]) + self.lat.bft_step
                self.busy[node] = done
                q.push(done, EventKind.PROCESSING_DONE, node, ("handle", inst, ev.payload[2]))
            elif tag == "handle":
                msg = ev.payload[2]
                if inst == 0 and msg.sender not in replica.members:
                    self.consider_sender(node, now, msg.sender)
                if not replica.done:
                    self.apply(inst, node, now, replica.on_message(msg))
            elif tag == "validated":
                self.apply(inst, node, now, replica.on_validated(validate(ev.payload[2])))
            elif tag == "decision":
                if replica.adopt(ev.payload[2]):
                    self.instances[inst].adopted.add(node)
            elif tag == "timer":
                self.apply(inst, node, now, replica.on_timer(ev.payload[2]))

    def consider_sender(self, node: int, now: int, sender: int) -> None:
        """BFT messages carry the sender's wait certificate; one with merit
        enters the receiver's leaderboard, possibly evicting the receiver."""
        key = self.keys.get(sender)
        board = self.boards[node]
        if key is None or key in board or (len(board) >= self.sc.j and key > board[-1]):
            return
        self.on_roster_change(node, now, key)

    def on_roster_change(self, node: int, now: int, key: int) -> None:
        board = self.boards[node]
        bisect.insort(board, key)
        del board[self.sc.j:]
        roster = [k & NODE_MASK for k in board]
        # only the election-derived jury moves; later agreements use a
        # roster fixed by the first decision
        replica = self.replicas.get((0, node))
        if replica is not None:
            self.apply(0, node, now, replica.update_roster(roster))

    def apply(self, inst: int, node: int, now: int, actions) -> None:
        rec = self.instances[inst]
        for act in actions:
            if isinstance(act, Send):
                arrival, hops = self.unicast(node, act.to, now, self.sizes.bft)
                rec.messages += hops
                rec.bytes_sent += hops * self.sizes.bft
                rec.last_arrival = arrival if rec.last_arrival is None else max(rec.last_arrival, arrival)
                if node not in self.jury:
                    self.non_juror_messages += 1
                self.queue.push(arrival, EventKind.DELIVER, act.to, ("arrive", inst, act.message))
            elif isinstance(act, SetTimer):
                self.queue.push(now + act.delay, EventKind.TIMER_EXPIRY, node, ("timer", inst, act.view))
            elif isinstance(act, RequestValidation):
                done = max(now, self.busy[node]) + self.lat.attestation_validation
                self.busy[node] = done
                self.queue.push(done, EventKind.PROCESSING_DONE, node, ("validated", inst, act.report))
            elif isinstance(act, Decided):
                rec.decide_times[node] = now
                rec.decisions[node] = act.decision
                self.on_decided(inst, node, now, act.decision)
            elif isinstance(act, AutoBlame):
                self.auto_blames.append(act)
            elif isinstance(act, GiveUp):
                rec.failures += 1

    def on_decided(self, inst: int, node: int, now: int, decision: DecisionMessage) -> None:
        followups = finalize_round(decision, self.blame)
        if decision_on(followups) is not None:
            reached = min(
                (t + self.top.hops(s, node) * self.flood_hop for s, t in self.decision_sources),
                default=None,
            )
            if reached is None or reached > now:
                # first copy this node sees is its own: it originates a flood
                self.decision_sources.append((node, now))
                if self.final_decision is None:
                    self.final_decision = decision
                for (i, peer), replica in self.replicas.items():
                    if i == inst and peer != node and not replica.done:
                        at = now + self.top.hops(node, peer) * self.flood_hop
                        self.queue.push(at, EventKind.DELIVER, peer, ("decision", inst, decision))
        replica = self.replicas[(inst, node)]
        wants_att = any(isinstance(f, RequestBlamerAttestation) for f in followups)
        if wants_att and not self.blamer_att_started:
            if replica.primary(replica.view) == node:
                self.start_blamer_attestation(inst, node, now)
            else:
                # if the primary never gets there, take over after a view timeout
                self.queue.push(now + replica.view_timeout, EventKind.TIMER_EXPIRY, node, ("att_fallback", inst))

    # - blamer attestation

    def start_blamer_attestation(self, inst: int, leader: int, now: int) -> None:
        self.blamer_att_started = True
        blamer = self.blame.blamer
        arrival, hops = self.unicast(leader, blamer, now, self.sizes.attestation_request)
        self.att["messages"] += hops
        self.att["bytes_sent"] += hops * self.sizes.attestation_request
        self.queue.push(arrival, EventKind.DELIVER, blamer, ("att_request", inst, leader))

    def on_attestation_request(self, blamer: int, now: int, inst: int, leader: int) -> None:
        done = max(now, self.busy[blamer]) + self.lat.attestation_generation
        self.busy[blamer] = done
        # the adversarial blamer is the compromised node in this scenario
        report, _ = self.scheme.generate_report(blamer, True, self.blame.round_id)
        arrival, hops = self.unicast(blamer, leader, done, self.sizes.attestation_response)
        self.att["messages"] += hops
        self.att["bytes_sent"] += hops * self.sizes.attestation_response
        self.queue.push(arrival, EventKind.DELIVER, leader, ("att_response", inst, report))

    def on_attestation_response(self, leader: int, now: int, inst: int, report) -> None:
        """The leader forwards the blamer's report to its jury, which starts
        the second agreement on the leader's roster.

        The roster travels with the report and is vouched for by the first
        agreement's decision, so every participant agrees on it and every
        named member takes part, including nodes whose own election view
        left them out.
        """
        base = self.replicas[(inst, leader)]
        agreement = Agreement(self.blame.round_id, 1, self.blame.blamer, report)
        second = self.add_instance(agreement)
        last = now
        for member in base.roster:
            if member == leader:
                self.add_replica(second, member, base.roster, True, now)
                continue
            arrival, hops = self.unicast(leader, member, now, self.sizes.attestation_response)
            self.att["messages"] += hops
            self.att["bytes_sent"] += hops * self.sizes.attestation_response
            last = max(last, arrival)
            self.add_replica(second, member, base.roster, True, arrival)
        self.att["completion"] = last


# -- the round -------------------------------------------------------------


def _choose_participants(sc: Scenario, top: MeshTopology, rng: np.random.Generator):
    blamed = int(rng.integers(sc.n))
    neighbors = top.neighbors(blamed)
    blamer = int(neighbors[int(rng.integers(len(neighbors)))])
    if sc.adversaries is not None:
        adversaries = set(sc.adversaries)
    else:
        k = int(round(sc.adversary_fraction * sc.n))
        adversaries = {int(v) for v in rng.choice(sc.n, size=k, replace=False)} if k else set()
    if sc.blame_kind is BlameKind.UNJUSTIFIED:
        adversaries.add(blamer)
        adversaries.discard(blamed)
    else:
        adversaries.add(blamed)
    return blamer, blamed, adversaries


def _trace_hash(host: _RoundHost, election: ElectionResult, blamer: int, blamed: int) -> str:
    h = hashlib.sha256()
    h.update(f"{blamer}:{blamed}:{election.messages}:{election.last_delivery};".encode())
    h.update(election.juror.tobytes())
    h.update(election.snapshots.tobytes())
    h.update(host.queue.trace_hash.encode())
    return h.hexdigest()


def run_round(scenario: Scenario, topology: Optional[MeshTopology] = None) -> RoundResult:
    """Simulate the first round after a blame, including a fresh election."""
    sc = scenario
    lat, sizes, n = sc.latencies, sc.sizes, sc.n
    top = topology if topology is not None else build_mesh(n, lat.link)
    if top.n != n:
        raise ValueError(f"topology has {top.n} nodes, scenario {n}")
    params = sc.protocol_params()
    rng = np.random.default_rng(sc.seed)
    blamer, blamed, adversaries = _choose_participants(sc, top, rng)
    waits = sample_wait_times(rng, params, n)
    phases: Dict[str, PhaseMetrics] = {}

    # initial attestation: the blamed node's report reaches a neighbour who validates it
    scheme = IntegrityScheme(lat.attestation_generation, lat.attestation_validation, sizes.attestation_response)
    report, gen_time = scheme.generate_report(blamed, sc.blame_kind is BlameKind.JUSTIFIED)
    received = gen_time + top.hops(blamed, blamer) * lat.link
    _, val_time = scheme.validate_report(report)
    t_blame = received + val_time
    blame = initiate_blame(NodeState(blamer, params), report, adversarial=sc.blame_kind is BlameKind.UNJUSTIFIED)
    if blame is None:
        raise RuntimeError("blamer found no reason to blame")
    phases[Phase.INITIAL_ATTESTATION.value] = PhaseMetrics(
        Phase.INITIAL_ATTESTATION.value, received + val_time, top.hops(blamed, blamer),
        top.hops(blamed, blamer) * sizes.attestation_response, n,
    )

    blame_flood = grid_flood(top, [(blamer, t_blame)], lat.link + lat.blame_relay)
    phases[Phase.BLAME.value] = PhaseMetrics(
        Phase.BLAME.value, blame_flood.last_delivery, blame_flood.transmissions,
        blame_flood.transmissions * sizes.blame, n,
    )

    eligible = np.ones(n, dtype=bool)
    eligible[blamed] = False
    election = run_election(
        top, blame_flood.arrival, waits, sc.j, params.t_ele, lat.certificate_generation, lat.link + lat.certificate_relay,
        backend=sc.election_backend, eligible=eligible,
    )
    phases[Phase.ELECTION.value] = PhaseMetrics(
        Phase.ELECTION.value, election.last_delivery if election.messages else None,
        election.messages, election.messages * sizes.certificate, n,
    )
    jury = tuple(int(v) for v in election.ideal_jury(waits, sc.j))

    host = _RoundHost(sc, top, blame, jury, adversaries)
    first = host.add_instance(Agreement.for_blame(blame, 0))
    for v in election.jurors:
        v = int(v)
        host.boards[v] = list(election.roster_keys(v))
        host.add_replica(first, v, election.roster(v), False, int(election.timeout[v]))
    announced = np.flatnonzero(election.announced)
    host.keys = dict(zip(announced.tolist(), encode_key(waits[announced], announced).tolist()))
    host.run()

    def bft_metrics(name: str, rec: Optional[_Instance]) -> PhaseMetrics:
        if rec is None:
            return PhaseMetrics(name, None, 0, 0, n)
        done = max(rec.decide_times.values()) if rec.decide_times else rec.last_arrival
        return PhaseMetrics(name, done, rec.messages, rec.bytes_sent, n)

    rec0 = host.instances[first]
    phases[Phase.BFT.value] = bft_metrics(Phase.BFT.value, rec0)
    if sc.blame_kind is BlameKind.UNJUSTIFIED:
        phases[Phase.BLAMER_ATT.value] = PhaseMetrics(
            Phase.BLAMER_ATT.value, host.att["completion"], host.att["messages"], host.att["bytes_sent"], n
        )
        second = host.instances[1] if len(host.instances) > 1 else None
        phases[Phase.BLAMER_BFT.value] = bft_metrics(Phase.BLAMER_BFT.value, second)

    final_decision = None
    if host.decision_sources:
        flood = grid_flood(top, host.decision_sources, host.flood_hop)
        phases[Phase.DECISION.value] = PhaseMetrics(
            Phase.DECISION.value, flood.last_delivery, flood.transmissions, flood.transmissions * sizes.decision, n
        )
        final_decision = host.final_decision
    else:
        phases[Phase.DECISION.value] = PhaseMetrics(Phase.DECISION.value, None, 0, 0, n)

    return RoundResult(
        scenario=sc,
        phases=phases,
        decisions_reached=len((set(rec0.decisions) | rec0.adopted) & set(jury)),
        non_juror_bft_messages=host.non_juror_messages,
        election_messages_per_node=election.messages / n,
        claimed_jurors=int(election.juror.sum()),
        jury=jury,
        blamer=blamer,
        blamed=blamed,
        final_decision=final_decision,
        auto_blames=tuple(host.auto_blames),
        consensus_failures=sum(rec.failures for rec in host.instances),
        trace_hash=_trace_hash(host, election, blamer, blamed),
    )
