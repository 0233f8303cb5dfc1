"""Executable model of a resilient embedded SoC security stack.

Authenticated prover/verifier handshake, frame-based secure boot with an
onboard recovery engine, remote attestation, and a property-checking layer
(event traces, finite-trace LTL, bounded explicit-state model checking).
"""

__version__ = "0.1.0"
