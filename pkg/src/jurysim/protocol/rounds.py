"""What happens after the jury has (or has not) agreed."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Union

from .bft import AutoBlame
from .messages import BlameMessage, ConsensusFailure, DecisionMessage, NodeId, RoundId, Verdict


@dataclass(frozen=True)
class BroadcastDecision:
    decision: DecisionMessage


@dataclass(frozen=True)
class MarkCompromised:
    node: NodeId


@dataclass(frozen=True)
class RequestBlamerAttestation:
    """Primary fetches the blamer's report; the jury then agrees on it."""

    blamer: NodeId
    round_id: RoundId


@dataclass(frozen=True)
class QueueAutoBlame:
    target: NodeId
    reason: str


@dataclass(frozen=True)
class ScheduleReElection:
    round_id: RoundId


FollowUp = Union[BroadcastDecision, MarkCompromised, RequestBlamerAttestation, QueueAutoBlame, ScheduleReElection]


def finalize_round(
    decision_or_failure: Union[DecisionMessage, ConsensusFailure],
    blame: BlameMessage,
    dissent_blames: Iterable[AutoBlame] = (),
) -> List[FollowUp]:
    if isinstance(decision_or_failure, ConsensusFailure):
        return [ScheduleReElection(decision_or_failure.round_id)]
    decision = decision_or_failure
    actions: List[FollowUp] = []
    if decision.verdict is Verdict.COMPROMISED:
        actions += [BroadcastDecision(decision), MarkCompromised(decision.subject)]
    elif decision.verdict is Verdict.BENIGN_BLAMED_NODE_BLAMER_NOW_BLAMED:
        # the decision on the blamer is broadcast after the second agreement
        actions += [
            RequestBlamerAttestation(blame.blamer, blame.round_id),
            QueueAutoBlame(blame.blamer, "unjustified blame"),
        ]
    else:
        actions.append(BroadcastDecision(decision))
    seen = set()
    for b in dissent_blames:
        if b.target not in seen:
            seen.add(b.target)
            actions.append(QueueAutoBlame(b.target, b.reason))
    return actions


def auto_blame_targets(actions: Iterable[FollowUp]) -> List[NodeId]:
    return [a.target for a in actions if isinstance(a, QueueAutoBlame)]


def decision_on(actions: Iterable[FollowUp]) -> Optional[DecisionMessage]:
    for a in actions:
        if isinstance(a, BroadcastDecision):
            return a.decision
    return None
