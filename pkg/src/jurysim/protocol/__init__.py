from .bft import Agreement, Behavior, BftTrace, JurorReplica, bft_round, run_bft
from .election import (
    BecomeJuror,
    JelOutcome,
    JuryLeaderboard,
    NodePhase,
    NodeState,
    ProtocolParams,
    RemainObserver,
    Retention,
    WaitOutcome,
    initiate_blame,
    jel_consider,
    jury_retention,
    on_election_timeout,
    on_wait_complete,
    resolve_conflicting_elections,
    sample_wait_time,
    sample_wait_times,
)
from .messages import (
    AttestationReport,
    BftMessage,
    BftPhase,
    BlameMessage,
    ConsensusFailure,
    DecisionMessage,
    Roster,
    Verdict,
    WaitCertificate,
    ms,
)
from .rounds import finalize_round

__all__ = [
    "Agreement",
    "AttestationReport",
    "BecomeJuror",
    "Behavior",
    "BftMessage",
    "BftPhase",
    "BftTrace",
    "BlameMessage",
    "ConsensusFailure",
    "DecisionMessage",
    "JelOutcome",
    "JurorReplica",
    "JuryLeaderboard",
    "NodePhase",
    "NodeState",
    "ProtocolParams",
    "RemainObserver",
    "Retention",
    "Roster",
    "Verdict",
    "WaitCertificate",
    "WaitOutcome",
    "bft_round",
    "finalize_round",
    "initiate_blame",
    "jel_consider",
    "jury_retention",
    "ms",
    "on_election_timeout",
    "on_wait_complete",
    "resolve_conflicting_elections",
    "run_bft",
    "sample_wait_time",
    "sample_wait_times",
]
