"""Integrity-validation stub with calibrated latencies.

Reports carry the scenario's ground truth (is the prover compromised?) and
are bound to the round that requested them. Validation is a pure function
of the report, so any two validators reach the same verdict.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Tuple

from .protocol.messages import (
    ATTESTATION_REPORT_BYTES,
    AttestationReport,
    NodeId,
    RoundId,
    digest_of,
    ms,
)


class IntegrityVerdict(enum.Enum):
    GENUINE = "genuine"
    TAMPERED = "tampered"


@dataclass(frozen=True)
class IntegrityScheme:
    generation_latency: int = ms(835)
    validation_latency: int = ms(849)
    report_size_bytes: int = ATTESTATION_REPORT_BYTES

    def __post_init__(self) -> None:
        if self.generation_latency < 0 or self.validation_latency < 0:
            raise ValueError("latencies must be non-negative")

    def generate_report(
        self,
        prover: NodeId,
        ground_truth_compromised: bool,
        round_id: Optional[RoundId] = None,
    ) -> Tuple[AttestationReport, int]:
        """Produce ``prover``'s report; the elapsed time is simulated, not waited."""
        report = AttestationReport(
            prover=prover,
            payload_digest=_payload_digest(prover, round_id, ground_truth_compromised),
            verdict_seed=bool(ground_truth_compromised),
            round_id=round_id,
        )
        return report, self.generation_latency

    def validate_report(
        self,
        report: object,
        expected_round: Optional[RoundId] = None,
    ) -> Tuple[IntegrityVerdict, int]:
        """Validate a report. Malformed or stale reports are treated as tampered."""
        return validate(report, expected_round), self.validation_latency


def _payload_digest(prover: NodeId, round_id: Optional[RoundId], compromised: bool) -> bytes:
    return digest_of("attestation", prover, round_id, compromised)


def validate(report: object, expected_round: Optional[RoundId] = None) -> IntegrityVerdict:
    if not isinstance(report, AttestationReport):
        return IntegrityVerdict.TAMPERED
    if report.payload_digest != _payload_digest(report.prover, report.round_id, report.verdict_seed):
        return IntegrityVerdict.TAMPERED
    if expected_round is not None and report.round_id != expected_round:
        # replayed from an earlier round
        return IntegrityVerdict.TAMPERED
    return IntegrityVerdict.TAMPERED if report.verdict_seed else IntegrityVerdict.GENUINE


DEFAULT_SCHEME = IntegrityScheme()


def generate_report(prover: NodeId, ground_truth_compromised: bool, round_id: Optional[RoundId] = None):
    return DEFAULT_SCHEME.generate_report(prover, ground_truth_compromised, round_id)


def validate_report(report: object, expected_round: Optional[RoundId] = None):
    return DEFAULT_SCHEME.validate_report(report, expected_round)
