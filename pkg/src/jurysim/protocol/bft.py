"""PBFT among jurors.

:class:`JurorReplica` is a pure state machine: every handler returns a list
of actions (sends, timers, validation requests, decisions) for its host to
carry out. The network simulator hosts replicas with real link delays;
:func:`run_bft` hosts them in memory for unit and property tests.

Verdicts come from deterministic validation, so honest jurors always commit
the same verdict. A commit certificate (``quorum_q`` matching commits in
one view) therefore always contains an honest commit when at most
``j - quorum_q`` jurors are faulty, which is why a fresh jury may skip the
prepare phase.
"""

from __future__ import annotations

import enum
import heapq
import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .. import attestation
from .messages import (
    AttestationReport,
    BftMessage,
    BftPhase,
    BlameMessage,
    ConsensusFailure,
    DecisionMessage,
    NodeId,
    RoundId,
    Verdict,
    digest_of,
)


class Behavior(enum.Enum):
    HONEST = "honest"
    SILENT = "silent"
    # votes the opposite verdict; as primary proposes a forged request
    DISSENT = "dissent"
    # tells half the jury one thing and the other half another
    EQUIVOCATE = "equivocate"


@dataclass(frozen=True)
class Agreement:
    """What one BFT instance decides about."""

    round_id: RoundId
    sequence: int
    subject: NodeId
    report: AttestationReport
    # set for the blamed node of a blame; None for automatic blames
    blamer: Optional[NodeId] = None

    @property
    def digest(self) -> bytes:
        return digest_of("agreement", self.round_id, self.sequence, self.subject, self.report.payload_digest)

    @classmethod
    def for_blame(cls, blame: BlameMessage, sequence: int = 0) -> "Agreement":
        return cls(blame.round_id, sequence, blame.blamed, blame.report, blame.blamer)

    def verdict_for(self, integrity: "attestation.IntegrityVerdict") -> Verdict:
        if integrity is attestation.IntegrityVerdict.TAMPERED:
            return Verdict.COMPROMISED
        if self.blamer is not None:
            return Verdict.BENIGN_BLAMED_NODE_BLAMER_NOW_BLAMED
        return Verdict.BENIGN


def flipped(verdict: Verdict, agreement: Agreement) -> Verdict:
    if verdict is Verdict.COMPROMISED:
        return Verdict.BENIGN_BLAMED_NODE_BLAMER_NOW_BLAMED if agreement.blamer is not None else Verdict.BENIGN
    return Verdict.COMPROMISED


@dataclass(frozen=True)
class Send:
    to: NodeId
    message: BftMessage


@dataclass(frozen=True)
class RequestValidation:
    report: AttestationReport


@dataclass(frozen=True)
class SetTimer:
    delay: int
    view: int


@dataclass(frozen=True)
class Decided:
    decision: DecisionMessage


@dataclass(frozen=True)
class AutoBlame:
    accuser: NodeId
    target: NodeId
    reason: str


@dataclass(frozen=True)
class GiveUp:
    failure: ConsensusFailure


Action = Union[Send, RequestValidation, SetTimer, Decided, AutoBlame, GiveUp]


class JurorReplica:
    def __init__(
        self,
        node: NodeId,
        roster: Sequence[NodeId],
        quorum_q: int,
        agreement: Agreement,
        *,
        full_prepare: bool = False,
        behavior: Behavior = Behavior.HONEST,
        view_timeout: int = 10_000_000,
        view_budget: Optional[int] = None,
        eager: bool = True,
    ):
        self.node = node
        # when False the host calls poll() after delivering a batch of
        # simultaneous events, so the decision carries every commit seen
        self.eager = eager
        self.roster = tuple(roster)
        self.members = frozenset(self.roster)
        if node not in self.members:
            raise ValueError(f"node {node} is not in its own roster")
        self.quorum_q = quorum_q
        self.agreement = agreement
        self.full_prepare = full_prepare
        self.behavior = behavior
        self.view_timeout = view_timeout
        self.view_budget = len(self.roster) if view_budget is None else view_budget

        self.view = 0
        self.view_changes = 0
        self.started = False
        self.decided: Optional[DecisionMessage] = None
        self.failed: Optional[ConsensusFailure] = None
        self.own_verdict: Optional[Verdict] = None
        self.validating = False
        # set once a roster update drops this node from the jury
        self.evicted = False
        # True when the decision was learned from another juror's broadcast
        self.adopted = False

        self._accepted: Dict[int, bytes] = {}
        self._proposed: Set[int] = set()
        self._prepares: Dict[int, Set[NodeId]] = defaultdict(set)
        self._prepared: Set[int] = set()
        self._commit_pending: Set[int] = set()
        self._committed: Set[int] = set()
        self._commits: Dict[Tuple[int, Verdict], Set[NodeId]] = defaultdict(set)
        self._view_votes: Dict[int, Set[NodeId]] = defaultdict(set)
        self._buffered: Dict[int, List[BftMessage]] = defaultdict(list)
        self._blamed: Set[NodeId] = set()
        # authentic messages from senders outside the current roster
        self._foreign: Dict[NodeId, List[BftMessage]] = defaultdict(list)
        self._others = tuple(m for m in self.roster if m != node)

    # -- helpers -----------------------------------------------------------

    @property
    def done(self) -> bool:
        return self.decided is not None or self.failed is not None or self.evicted

    def primary(self, view: int) -> NodeId:
        return self.roster[view % len(self.roster)]

    def _msg(self, phase: BftPhase, view: int, digest: Optional[bytes] = None, verdict: Optional[Verdict] = None):
        return BftMessage.signed(
            phase,
            view,
            self.agreement.sequence,
            self.agreement.digest if digest is None else digest,
            self.node,
            verdict,
        )

    def _broadcast(self, phase: BftPhase, view: int, verdict: Optional[Verdict] = None) -> List[Action]:
        if self.behavior is Behavior.SILENT:
            return []
        if self.behavior is Behavior.EQUIVOCATE and phase in (BftPhase.PRE_PREPARE, BftPhase.COMMIT):
            half = len(self._others) // 2
            out: List[Action] = []
            for i, peer in enumerate(self._others):
                if i < half:
                    out.append(Send(peer, self._msg(phase, view, verdict=verdict)))
                elif phase is BftPhase.PRE_PREPARE:
                    out.append(Send(peer, self._msg(phase, view, digest=digest_of("forged", self.node))))
                else:
                    out.append(Send(peer, self._msg(phase, view, verdict=flipped(verdict, self.agreement))))
            return out
        digest = None
        if self.behavior is Behavior.DISSENT and phase is BftPhase.PRE_PREPARE:
            digest = digest_of("forged", self.node)
        return [Send(peer, self._msg(phase, view, digest=digest, verdict=verdict)) for peer in self._others]

    def _blame(self, target: NodeId, reason: str) -> List[Action]:
        if self.behavior is not Behavior.HONEST or target in self._blamed:
            return []
        self._blamed.add(target)
        return [AutoBlame(self.node, target, reason)]

    # -- entry points ------------------------------------------------------

    def start(self) -> List[Action]:
        if self.started:
            return []
        self.started = True
        if self.behavior is Behavior.SILENT:
            return []
        actions: List[Action] = [SetTimer(self.view_timeout, 0)]
        if self.primary(0) == self.node:
            actions += self._propose(0)
        for msg in self._buffered.pop(0, []):
            actions += self.on_message(msg)
        return actions

    def on_message(self, msg: BftMessage) -> List[Action]:
        if self.behavior is Behavior.SILENT or self.done:
            return []
        if not msg.authentic or msg.sequence != self.agreement.sequence:
            return []
        if msg.sender not in self.members:
            self._foreign[msg.sender].append(msg)
            return []
        if not self.started and msg.phase is not BftPhase.VIEW_CHANGE:
            self._buffered[msg.view].append(msg)
            return []
        if msg.phase is BftPhase.PRE_PREPARE:
            return self._on_pre_prepare(msg)
        if msg.phase is BftPhase.PREPARE:
            return self._on_prepare(msg)
        if msg.phase is BftPhase.COMMIT:
            return self._on_commit(msg)
        return self._on_view_change(msg)

    def on_validated(self, integrity: "attestation.IntegrityVerdict") -> List[Action]:
        if self.done:
            return []
        verdict = self.agreement.verdict_for(integrity)
        if self.behavior is Behavior.DISSENT:
            verdict = flipped(verdict, self.agreement)
        self.own_verdict = verdict
        actions: List[Action] = []
        for (view, v), senders in sorted(self._commits.items(), key=lambda kv: kv[0][0]):
            if v is not verdict:
                for s in sorted(senders):
                    actions += self._blame(s, "dissenting commit")
        for view in sorted(self._commit_pending):
            if view == self.view:
                actions += self._commit(view)
        self._commit_pending.clear()
        return actions + self._try_decide()

    def update_roster(self, roster: Sequence[NodeId]) -> List[Action]:
        """Adopt a leaderboard that changed after the election timeout.

        Messages held back from newcomers are replayed; a replica whose own
        node dropped out of the roster stops.
        """
        if self.done:
            return []
        self.roster = tuple(roster)
        self.members = frozenset(self.roster)
        self._others = tuple(m for m in self.roster if m != self.node)
        if self.node not in self.members:
            self.evicted = True
            return []
        actions: List[Action] = []
        for sender in sorted(s for s in self._foreign if s in self.members):
            for msg in self._foreign.pop(sender):
                actions += self.on_message(msg)
        return actions + self._try_decide()

    def adopt(self, decision: DecisionMessage) -> bool:
        """Accept a broadcast decision certified by this replica's roster."""
        if self.done or self.behavior is Behavior.SILENT:
            return False
        if not decision.is_valid_for(self.roster, self.quorum_q):
            return False
        if decision.round_id != self.agreement.round_id or decision.sequence != self.agreement.sequence:
            return False
        self.decided = decision
        self.adopted = True
        return True

    def on_timer(self, view: int) -> List[Action]:
        if self.done or view != self.view or self.behavior is Behavior.SILENT:
            return []
        return self._change_view(self.view + 1)

    # -- phases ------------------------------------------------------------

    def _propose(self, view: int) -> List[Action]:
        if view in self._proposed:
            return []
        self._proposed.add(view)
        actions = self._broadcast(BftPhase.PRE_PREPARE, view)
        return actions + self._accept(view)

    def _on_pre_prepare(self, msg: BftMessage) -> List[Action]:
        if msg.view > self.view:
            self._buffered[msg.view].append(msg)
            return []
        if msg.view < self.view or msg.sender != self.primary(msg.view) or msg.view in self._accepted:
            return []
        if msg.digest != self.agreement.digest:
            actions = self._blame(msg.sender, "inconsistent primary")
            return actions + self._change_view(self.view + 1)
        return self._accept(msg.view)

    def _accept(self, view: int) -> List[Action]:
        self._accepted[view] = self.agreement.digest
        if not self.full_prepare:
            return self._ready_to_commit(view)
        self._prepares[view].update((self.node, self.primary(view)))
        actions = [] if self.primary(view) == self.node else self._broadcast(BftPhase.PREPARE, view)
        return actions + self._check_prepared(view)

    def _on_prepare(self, msg: BftMessage) -> List[Action]:
        if msg.digest != self.agreement.digest:
            return []
        self._prepares[msg.view].add(msg.sender)
        if msg.view == self.view:
            return self._check_prepared(msg.view)
        return []

    def _check_prepared(self, view: int) -> List[Action]:
        if view in self._prepared or view not in self._accepted or len(self._prepares[view]) < self.quorum_q:
            return []
        self._prepared.add(view)
        return self._ready_to_commit(view)

    def _ready_to_commit(self, view: int) -> List[Action]:
        if self.own_verdict is not None:
            return self._commit(view)
        self._commit_pending.add(view)
        return self._request_validation()

    def _request_validation(self) -> List[Action]:
        if self.validating:
            return []
        self.validating = True
        return [RequestValidation(self.agreement.report)]

    def _commit(self, view: int) -> List[Action]:
        if view in self._committed:
            return []
        self._committed.add(view)
        verdict = self.own_verdict
        self._commits[(view, verdict)].add(self.node)
        return self._broadcast(BftPhase.COMMIT, view, verdict) + self._try_decide()

    def _on_commit(self, msg: BftMessage) -> List[Action]:
        if msg.digest != self.agreement.digest or msg.verdict is None:
            return []
        self._commits[(msg.view, msg.verdict)].add(msg.sender)
        actions: List[Action] = []
        if self.own_verdict is not None and msg.verdict is not self.own_verdict:
            actions += self._blame(msg.sender, "dissenting commit")
        if self.own_verdict is None and len(self._commits[(msg.view, msg.verdict)]) >= self.quorum_q:
            # certificate observed before validating; validate the blame's report
            actions += self._request_validation()
        return actions + self._try_decide()

    def poll(self) -> List[Action]:
        return self._decide()

    def _try_decide(self) -> List[Action]:
        return self._decide() if self.eager else []

    def _decide(self) -> List[Action]:
        if self.done or self.own_verdict is None or self.behavior is not Behavior.HONEST:
            return []
        for (view, verdict), senders in sorted(self._commits.items(), key=lambda kv: kv[0][0]):
            signers = senders & self.members
            if verdict is self.own_verdict and len(signers) >= self.quorum_q:
                self.decided = DecisionMessage(
                    round_id=self.agreement.round_id,
                    verdict=verdict,
                    signers=frozenset(signers),
                    subject=self.agreement.subject,
                    sequence=self.agreement.sequence,
                )
                return [Decided(self.decided)]
        return []

    # -- view change -------------------------------------------------------

    def _change_view(self, new_view: int) -> List[Action]:
        if new_view <= self.view:
            return []
        if self.view_changes >= self.view_budget:
            self.failed = ConsensusFailure(self.agreement.round_id, self.agreement.sequence, self.view_changes)
            return [GiveUp(self.failed)]
        self.view_changes += 1
        self.view = new_view
        self._view_votes[new_view].add(self.node)
        actions = self._broadcast(BftPhase.VIEW_CHANGE, new_view)
        actions.append(SetTimer(self.view_timeout, new_view))
        actions += self._maybe_new_view(new_view)
        for msg in self._buffered.pop(new_view, []):
            actions += self.on_message(msg)
        return actions

    def _on_view_change(self, msg: BftMessage) -> List[Action]:
        w = msg.view
        self._view_votes[w].add(msg.sender)
        actions: List[Action] = []
        faults = len(self.roster) - self.quorum_q
        if self.started and w > self.view and len(self._view_votes[w]) >= faults + 1:
            actions += self._change_view(w)
        if w == self.view:
            actions += self._maybe_new_view(w)
        return actions

    def _maybe_new_view(self, view: int) -> List[Action]:
        if self.primary(view) != self.node or len(self._view_votes[view]) < self.quorum_q:
            return []
        return self._propose(view)


# -- in-memory host --------------------------------------------------------


@dataclass
class BftTrace:
    decisions: Dict[NodeId, DecisionMessage] = field(default_factory=dict)
    failures: Dict[NodeId, ConsensusFailure] = field(default_factory=dict)
    blames: List[AutoBlame] = field(default_factory=list)
    messages: int = 0
    end_time: int = 0

    @property
    def outcome(self) -> Union[DecisionMessage, ConsensusFailure]:
        if self.decisions:
            return min(self.decisions.values(), key=lambda d: sorted(d.signers))
        if self.failures:
            return max(self.failures.values(), key=lambda f: f.view_changes)
        raise RuntimeError("BFT instance neither decided nor failed")


def run_bft(
    jurors: Sequence[NodeId],
    agreement: Agreement,
    quorum_q: int,
    *,
    behaviors: Optional[Dict[NodeId, Behavior]] = None,
    full_prepare: bool = False,
    delay: Union[int, Callable[[NodeId, NodeId], int]] = 1,
    validation_latency: int = 0,
    start_times: Optional[Dict[NodeId, int]] = None,
    view_timeout: int = 1_000,
    rng: Optional[np.random.Generator] = None,
    max_jitter: int = 0,
) -> BftTrace:
    """Run one instance among ``jurors`` (roster order) with in-memory delivery."""
    behaviors = behaviors or {}
    replicas = {
        node: JurorReplica(
            node,
            jurors,
            quorum_q,
            agreement,
            full_prepare=full_prepare,
            behavior=behaviors.get(node, Behavior.HONEST),
            view_timeout=view_timeout,
            eager=False,
        )
        for node in jurors
    }
    trace = BftTrace()
    queue: list = []
    seq = itertools.count()

    def link_delay(a: NodeId, b: NodeId) -> int:
        base = delay(a, b) if callable(delay) else delay
        if rng is not None and max_jitter:
            base += int(rng.integers(0, max_jitter + 1))
        return base

    def apply(node: NodeId, now: int, actions: List[Action]) -> None:
        for act in actions:
            if isinstance(act, Send):
                trace.messages += 1
                heapq.heappush(queue, (now + link_delay(node, act.to), next(seq), "msg", act.to, act.message))
            elif isinstance(act, SetTimer):
                heapq.heappush(queue, (now + act.delay, next(seq), "timer", node, act.view))
            elif isinstance(act, RequestValidation):
                heapq.heappush(queue, (now + validation_latency, next(seq), "valid", node, act.report))
            elif isinstance(act, Decided):
                trace.decisions[node] = act.decision
            elif isinstance(act, AutoBlame):
                trace.blames.append(act)
            elif isinstance(act, GiveUp):
                trace.failures[node] = act.failure

    for node in jurors:
        t0 = (start_times or {}).get(node, 0)
        heapq.heappush(queue, (t0, next(seq), "start", node, None))
    while queue:
        now = queue[0][0]
        touched = []
        while queue and queue[0][0] == now:
            _, _, kind, node, payload = heapq.heappop(queue)
            replica = replicas[node]
            touched.append(node)
            if kind == "start":
                apply(node, now, replica.start())
            elif kind == "msg":
                apply(node, now, replica.on_message(payload))
            elif kind == "timer":
                apply(node, now, replica.on_timer(payload))
            else:
                apply(node, now, replica.on_validated(attestation.validate(payload)))
        trace.end_time = now
        for node in dict.fromkeys(touched):
            apply(node, now, replicas[node].poll())
        if all(r.done or r.behavior is not Behavior.HONEST for r in replicas.values()):
            break
    return trace


def bft_round(
    jurors: Sequence[NodeId],
    primary: NodeId,
    blame: BlameMessage,
    byzantine_set: Union[Set[NodeId], Dict[NodeId, Behavior]] = frozenset(),
    *,
    quorum_q: Optional[int] = None,
    behavior: Behavior = Behavior.SILENT,
    full_prepare: bool = False,
    **kwargs,
) -> Union[DecisionMessage, ConsensusFailure]:
    """Agree on ``blame`` among ``jurors``; ``primary`` leads view 0."""
    order = [primary] + [m for m in jurors if m != primary]
    if primary not in jurors:
        raise ValueError("primary must be a juror")
    q = quorum_q if quorum_q is not None else (2 * (len(order) - 1)) // 3 + 1
    if isinstance(byzantine_set, dict):
        behaviors = dict(byzantine_set)
    else:
        behaviors = {node: behavior for node in byzantine_set}
    trace = run_bft(order, Agreement.for_blame(blame), q, behaviors=behaviors, full_prepare=full_prepare, **kwargs)
    return trace.outcome
