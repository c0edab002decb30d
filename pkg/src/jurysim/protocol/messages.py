"""Wire-level message types.

All durations in this package are integer microseconds. Wire sizes include
40 bytes of TCP/IP headers; BFT and decision messages include a 128-byte
aggregated Schnorr signature.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Optional, Tuple

NodeId = int
# (blamer id, blamer-local counter), ordered lexicographically
RoundId = Tuple[int, int]

HEADER_BYTES = 40
SIGNATURE_BYTES = 128
ATTESTATION_REPORT_BYTES = 4096
BLAME_MESSAGE_BYTES = 4276
WAIT_CERTIFICATE_BYTES = 192
DECISION_MESSAGE_BYTES = 184
BFT_MESSAGE_BYTES = 188


def ms(value: float) -> int:
    """Milliseconds to integer microseconds."""
    return int(round(value * 1000))


def digest_of(*parts: object) -> bytes:
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode())
        h.update(b"\x00")
    return h.digest()


class Verdict(enum.Enum):
    COMPROMISED = "compromised"
    # the blamed node validated as genuine, so the blamer is blamed next
    BENIGN_BLAMED_NODE_BLAMER_NOW_BLAMED = "benign_blamed_node_blamer_now_blamed"
    # subject of an automatic blame validated as genuine; nobody further to blame
    BENIGN = "benign"


class BftPhase(enum.Enum):
    PRE_PREPARE = "pre_prepare"
    PREPARE = "prepare"
    COMMIT = "commit"
    VIEW_CHANGE = "view_change"


@dataclass(frozen=True)
class AttestationReport:
    prover: NodeId
    payload_digest: bytes
    verdict_seed: bool
    round_id: Optional[RoundId] = None
    size_bytes: int = ATTESTATION_REPORT_BYTES

    def __post_init__(self) -> None:
        if self.size_bytes != ATTESTATION_REPORT_BYTES:
            raise ValueError(f"attestation reports are {ATTESTATION_REPORT_BYTES} bytes")


@dataclass(frozen=True)
class BlameMessage:
    blamer: NodeId
    blamed: NodeId
    report: AttestationReport
    round_id: RoundId
    wire_size_bytes: int = BLAME_MESSAGE_BYTES

    def __post_init__(self) -> None:
        if self.blamer == self.blamed:
            raise ValueError("a node cannot blame itself")

    @property
    def digest(self) -> bytes:
        return digest_of("blame", self.blamer, self.blamed, self.round_id, self.report.payload_digest)


@dataclass(frozen=True)
class WaitCertificate:
    node: NodeId
    wait_time: int
    round_id: Optional[RoundId] = None
    wire_size_bytes: int = WAIT_CERTIFICATE_BYTES

    @property
    def key(self) -> Tuple[int, int]:
        """Total election order: shorter wait first, lower node id on ties."""
        return (self.wait_time, self.node)

    def __lt__(self, other: "WaitCertificate") -> bool:
        return self.key < other.key


@dataclass(frozen=True)
class Signature:
    """Modeled signature: the signer and the digest it vouches for."""

    signer: NodeId
    digest: bytes

    def verifies(self, sender: NodeId, digest: bytes) -> bool:
        return self.signer == sender and self.digest == digest


@dataclass(frozen=True)
class BftMessage:
    phase: BftPhase
    view: int
    sequence: int
    digest: bytes
    sender: NodeId
    signature: Signature
    verdict: Optional[Verdict] = None
    wire_size_bytes: int = BFT_MESSAGE_BYTES

    @classmethod
    def signed(
        cls,
        phase: BftPhase,
        view: int,
        sequence: int,
        digest: bytes,
        sender: NodeId,
        verdict: Optional[Verdict] = None,
    ) -> "BftMessage":
        vouched = digest_of(digest, verdict.value if verdict else None)
        return cls(phase, view, sequence, digest, sender, Signature(sender, vouched), verdict)

    @property
    def authentic(self) -> bool:
        vouched = digest_of(self.digest, self.verdict.value if self.verdict else None)
        return self.signature.verifies(self.sender, vouched)


@dataclass(frozen=True)
class DecisionMessage:
    round_id: RoundId
    verdict: Verdict
    signers: frozenset
    subject: NodeId
    sequence: int = 0
    wire_size_bytes: int = DECISION_MESSAGE_BYTES

    def is_valid_for(self, roster, quorum_q: int) -> bool:
        """At least ``quorum_q`` distinct signers drawn from ``roster``.

        Signers outside the receiver's roster are ignored rather than fatal,
        since rosters may differ slightly between honest nodes.
        """
        return len(self.signers & set(roster)) >= quorum_q


@dataclass(frozen=True)
class ConsensusFailure:
    round_id: RoundId
    sequence: int
    view_changes: int
    reason: str = "quorum unreachable within view-change budget"


@dataclass(frozen=True)
class AttestationRequest:
    """Primary asking a node for a fresh attestation report."""

    requester: NodeId
    prover: NodeId
    round_id: RoundId
    wire_size_bytes: int = BFT_MESSAGE_BYTES


@dataclass(frozen=True)
class AttestationResponse:
    report: AttestationReport
    sender: NodeId
    wire_size_bytes: int = ATTESTATION_REPORT_BYTES + SIGNATURE_BYTES + HEADER_BYTES


@dataclass
class Roster:
    """An elected jury in primary order (ascending certificate key)."""

    certificates: Tuple[WaitCertificate, ...]
    round_id: Optional[RoundId] = None
    members: Tuple[NodeId, ...] = field(init=False)

    def __post_init__(self) -> None:
        self.certificates = tuple(sorted(self.certificates, key=lambda c: c.key))
        self.members = tuple(c.node for c in self.certificates)

    @property
    def head(self) -> WaitCertificate:
        return self.certificates[0]

    def primary(self, view: int = 0) -> NodeId:
        return self.members[view % len(self.members)]

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, node: object) -> bool:
        return node in self.members

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Roster):
            return NotImplemented
        return [c.key for c in self.certificates] == [c.key for c in other.certificates]

    def __hash__(self) -> int:
        return hash(tuple(c.key for c in self.certificates))
