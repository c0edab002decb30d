"""Blame-driven adversary identification by randomly elected juries.

Subpackages: :mod:`jurysim.protocol` (per-node state machines),
:mod:`jurysim.simnet` (discrete-event network simulation),
:mod:`jurysim.cli` (campaign runner); modules :mod:`jurysim.probability`
and :mod:`jurysim.attestation`.
"""

__version__ = "0.1.0"
