"""Exception taxonomy shared by every sandiag module.

All errors raised on purpose derive from :class:`SanDiagError` so callers
(and the CLI) can catch one base class and print a message instead of a
stack trace.
"""

from __future__ import annotations


class SanDiagError(Exception):
    """Base class for all sandiag errors."""


# --- parsing / validation -------------------------------------------------

class ParseError(SanDiagError):
    """Input document is not syntactically valid (bad JSON/CSV, empty file)."""


class SchemaViolation(SanDiagError):
    """Input parsed but violates a documented schema constraint."""


class NonMonotoneTimestamps(SanDiagError):
    """Metric rows for one (component, metric) series are out of time order."""


# --- graph construction ---------------------------------------------------

class UnknownTablespace(SanDiagError):
    """A plan reads a tablespace the topology does not declare."""


class DanglingConnection(SanDiagError):
    """A topology edge references a component that does not exist."""


class InvalidEdge(SanDiagError):
    """An edge connects node kinds its edge kind does not permit."""


class CyclicPlan(SanDiagError):
    """The operator tree of a plan is malformed (cycle or duplicate node)."""


class UnknownNode(SanDiagError):
    """A node id is absent from the graph."""


class WrongKind(SanDiagError):
    """A node exists but has the wrong kind for the requested operation."""


# --- run store ------------------------------------------------------------

class DuplicateRunId(SanDiagError):
    """A run with this id is already stored."""


class IoFailure(SanDiagError):
    """The store could not be read or durably written."""


# --- analytics ------------------------------------------------------------

class EmptyInput(SanDiagError):
    """A baseline fit was requested over zero samples."""


class EmptyWindow(SanDiagError):
    """An anomaly score was requested over an empty window."""


class InsufficientHistory(SanDiagError):
    """Fewer historical runs than the configured minimum k."""


class FingerprintMismatch(SanDiagError):
    """Historical runs do not all share the current plan fingerprint."""


class InsufficientOverlap(SanDiagError):
    """Two series share fewer joint timestamps than correlation needs."""


class ZeroVariance(SanDiagError):
    """A correlation input is constant over the joint window."""


# --- symptoms database ----------------------------------------------------

class DuplicateCauseId(SanDiagError):
    """Two root-cause entries share an id."""


class InvalidPredicate(SanDiagError):
    """A symptom predicate is malformed (bad weight, wrong fields for kind)."""


# --- engine ---------------------------------------------------------------

class UnknownRun(SanDiagError):
    """The requested run id is not in the store."""


class NonPositiveDelta(SanDiagError):
    """Impact roll-up requires a positive total slowdown."""


# --- simulator ------------------------------------------------------------

class InvalidScenario(SanDiagError):
    """Scenario document is inconsistent (bad windows, unknown references)."""


class InconsistentFaultTarget(SanDiagError):
    """A fault targets a component of the wrong kind for its fault type."""
