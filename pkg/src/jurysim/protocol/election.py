"""Per-node blame initiation and wait-time jury election."""

from __future__ import annotations

import bisect
import enum
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np

from .. import attestation
from .messages import (
    AttestationReport,
    BlameMessage,
    NodeId,
    Roster,
    RoundId,
    WaitCertificate,
)


def standard_quorum(j: int) -> int:
    return (2 * (j - 1)) // 3 + 1


@dataclass(frozen=True)
class ProtocolParams:
    jury_size_j: int
    t_min: int
    t_max: int
    t_ele: int
    quorum_q: Optional[int] = None
    reelect_every_r_rounds: int = 10
    # mean of the exponential part of the wait; None means (t_max - t_min) / 3
    wait_mean: Optional[float] = None

    def __post_init__(self) -> None:
        j = self.jury_size_j
        if j < 1:
            raise ValueError(f"jury_size_j must be positive, got {j}")
        if not 0 <= self.t_min <= self.t_max:
            raise ValueError(f"need 0 <= t_min <= t_max, got {self.t_min}, {self.t_max}")
        if self.t_ele < 0:
            raise ValueError("t_ele must be non-negative")
        if self.reelect_every_r_rounds < 1:
            raise ValueError("reelect_every_r_rounds must be positive")
        if self.quorum_q is None:
            object.__setattr__(self, "quorum_q", standard_quorum(j))
        elif not standard_quorum(j) <= self.quorum_q <= j:
            raise ValueError(f"quorum_q={self.quorum_q} outside [{standard_quorum(j)}, {j}]")
        if self.wait_mean is not None and self.wait_mean < 0:
            raise ValueError("wait_mean must be non-negative")
        if j < 4:
            warnings.warn(f"jury of {j} tolerates no byzantine juror", stacklevel=2)

    @property
    def mean_wait(self) -> float:
        if self.wait_mean is not None:
            return float(self.wait_mean)
        return (self.t_max - self.t_min) / 3


def sample_wait_time(rng: np.random.Generator, params: ProtocolParams) -> int:
    """``t_min + min(E, t_max - t_min)`` with E exponential, in microseconds."""
    span = params.t_max - params.t_min
    extra = int(round(rng.exponential(params.mean_wait))) if params.mean_wait > 0 else 0
    return params.t_min + min(extra, span)


def sample_wait_times(rng: np.random.Generator, params: ProtocolParams, size: int) -> np.ndarray:
    """Vectorised :func:`sample_wait_time`; consumes the stream identically."""
    span = params.t_max - params.t_min
    if params.mean_wait > 0:
        extra = np.rint(rng.exponential(params.mean_wait, size=size)).astype(np.int64)
    else:
        extra = np.zeros(size, dtype=np.int64)
    return params.t_min + np.minimum(extra, span)


class JelOutcome(enum.Enum):
    INSERTED_AND_FORWARD = "inserted_and_forward"
    NO_MERIT_DROP = "no_merit_drop"


class WaitOutcome(enum.Enum):
    ANNOUNCE_OWN_CERTIFICATE = "announce"
    DISCARD_OWN_CERTIFICATE = "discard"


class JuryLeaderboard:
    """The ``capacity`` smallest certificates seen, ascending by (wait, node)."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._keys: List[Tuple[int, int]] = []
        self._certs: List[WaitCertificate] = []

    def __len__(self) -> int:
        return len(self._certs)

    def __iter__(self):
        return iter(self._certs)

    def __contains__(self, item: object) -> bool:
        if isinstance(item, WaitCertificate):
            i = bisect.bisect_left(self._keys, item.key)
            return i < len(self._keys) and self._keys[i] == item.key
        return any(c.node == item for c in self._certs)

    @property
    def entries(self) -> Tuple[WaitCertificate, ...]:
        return tuple(self._certs)

    @property
    def full(self) -> bool:
        return len(self._certs) >= self.capacity

    def has_merit(self, cert: WaitCertificate) -> bool:
        return not self.full or cert.key < self._keys[-1]

    def consider(self, cert: WaitCertificate) -> JelOutcome:
        for i, held in enumerate(self._certs):
            if held.node == cert.node:
                if cert.wait_time >= held.wait_time:
                    return JelOutcome.NO_MERIT_DROP
                del self._certs[i], self._keys[i]
                break
        if not self.has_merit(cert):
            return JelOutcome.NO_MERIT_DROP
        i = bisect.bisect_left(self._keys, cert.key)
        self._keys.insert(i, cert.key)
        self._certs.insert(i, cert)
        if len(self._certs) > self.capacity:
            self._keys.pop()
            self._certs.pop()
        return JelOutcome.INSERTED_AND_FORWARD

    def roster(self, round_id: Optional[RoundId] = None) -> Roster:
        return Roster(tuple(self._certs), round_id)


class NodePhase(enum.Enum):
    IDLE = "idle"
    WAITING = "waiting"
    ELECTING = "electing"
    JUROR_BFT = "juror_bft"
    DONE = "done"


@dataclass
class NodeState:
    node: NodeId
    params: ProtocolParams
    phase: NodePhase = NodePhase.IDLE
    jel: JuryLeaderboard = None  # type: ignore[assignment]
    own_certificate: Optional[WaitCertificate] = None
    current_round: Optional[RoundId] = None
    rounds_since_election: int = 0
    roster: Optional[Roster] = None
    last_round_succeeded: bool = True
    blame_counter: int = 0
    rosters_seen: List[Roster] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.jel is None:
            self.jel = JuryLeaderboard(self.params.jury_size_j)

    def start_election(self, round_id: RoundId, wait_time: int) -> WaitCertificate:
        """Receipt of a blame: reset the leaderboard and start waiting."""
        self.current_round = round_id
        self.jel = JuryLeaderboard(self.params.jury_size_j)
        self.own_certificate = WaitCertificate(self.node, wait_time, round_id)
        self.phase = NodePhase.WAITING
        return self.own_certificate


def initiate_blame(
    state: NodeState,
    received_report: AttestationReport,
    *,
    adversarial: bool = False,
) -> Optional[BlameMessage]:
    """Blame the prover of a report that fails local validation.

    Returns None when the report validates as genuine, unless the blamer is
    ``adversarial`` and blames the honest prover anyway.
    """
    verdict = attestation.validate(received_report)
    if verdict is attestation.IntegrityVerdict.GENUINE and not adversarial:
        return None
    state.blame_counter += 1
    round_id = (state.node, state.blame_counter)
    blame = BlameMessage(
        blamer=state.node,
        blamed=received_report.prover,
        report=received_report,
        round_id=round_id,
    )
    state.current_round = round_id
    state.phase = NodePhase.WAITING
    return blame


def jel_consider(state: NodeState, cert: WaitCertificate) -> JelOutcome:
    if state.current_round is not None and cert.round_id is not None and cert.round_id != state.current_round:
        raise ValueError(f"certificate for round {cert.round_id}, node is in {state.current_round}")
    return state.jel.consider(cert)


def on_wait_complete(state: NodeState) -> WaitOutcome:
    own = state.own_certificate
    if own is None:
        raise ValueError("node has no certificate to announce")
    state.phase = NodePhase.ELECTING
    if state.jel.consider(own) is JelOutcome.INSERTED_AND_FORWARD:
        return WaitOutcome.ANNOUNCE_OWN_CERTIFICATE
    state.own_certificate = None
    return WaitOutcome.DISCARD_OWN_CERTIFICATE


@dataclass(frozen=True)
class BecomeJuror:
    primary: NodeId
    roster: Roster


@dataclass(frozen=True)
class RemainObserver:
    roster: Roster


ElectionResult = Union[BecomeJuror, RemainObserver]


def on_election_timeout(state: NodeState) -> ElectionResult:
    roster = state.jel.roster(state.current_round)
    state.roster = roster
    if state.own_certificate is not None and state.own_certificate in state.jel:
        state.phase = NodePhase.JUROR_BFT
        state.rounds_since_election = 0
        return BecomeJuror(roster.primary(0), roster)
    state.phase = NodePhase.DONE
    return RemainObserver(roster)


def resolve_conflicting_elections(roster_a: Roster, roster_b: Roster) -> Roster:
    """The roster holding the overall shortest wait wins."""
    if roster_a == roster_b:
        return roster_a
    return roster_a if roster_a.head.key <= roster_b.head.key else roster_b


class Retention(enum.Enum):
    REUSE_JURY = "reuse_jury"
    TRIGGER_ELECTION = "trigger_election"


def jury_retention(state: NodeState, rounds_since_election: Optional[int] = None) -> Retention:
    count = state.rounds_since_election if rounds_since_election is None else rounds_since_election
    if state.roster is None or not state.last_round_succeeded:
        return Retention.TRIGGER_ELECTION
    if count >= state.params.reelect_every_r_rounds:
        return Retention.TRIGGER_ELECTION
    return Retention.REUSE_JURY
