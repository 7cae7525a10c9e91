"""Executable model of layered measurement and TPM-based attestation.

Systems are graphs of measures/context relations, executions are labeled
partial orders, and TPM evidence is a symbolic term.  The package checks
ordering and evidence-bundling properties on concrete systems, either on a
single execution or exhaustively within an adversary budget.
"""

__version__ = "0.1.0"
