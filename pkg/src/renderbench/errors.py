"""Exception hierarchy shared across the toolkit."""


class RenderBenchError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(RenderBenchError):
    """Bad scenario/config input; maps to CLI exit code 2."""


class InvariantError(RenderBenchError):
    """A tracking invariant was violated; maps to CLI exit code 1."""


# --- tagging / frames ---------------------------------------------------

class ReservedTag(RenderBenchError):
    """The all-zero (client_id, seq) combination encodes 'no tag'."""


class FrameTooSmall(RenderBenchError):
    """Pixel buffer too small to hold an embedded tag."""


class StashMismatch(InvariantError):
    """Stash and frame sequence numbers disagree on restore."""


class TrackingError(InvariantError):
    """Tag bookkeeping broke (extracted tag != expected, duplicates, ...)."""


# --- virtual device -----------------------------------------------------

class DeviceStopped(RenderBenchError):
    """Command submitted to a device that is shutting down."""


class InvalidHandle(RenderBenchError):
    """Unknown render-command handle."""


class TicketAlreadyFinished(RenderBenchError):
    """copy_frame_finish called twice on one ticket."""


class QueryNotReady(RenderBenchError):
    """Double-buffered time query read before its slot rotated."""


# --- wire protocol / codecs ----------------------------------------------

class WireError(RenderBenchError):
    """Base for protocol decode failures."""


class Truncated(WireError):
    pass


class BadKind(WireError):
    pass


class BadCodec(WireError):
    pass


class PixelLengthMismatch(WireError):
    pass


class BadRun(WireError):
    """RLE pair with count 0."""


class OddLength(WireError):
    """RLE buffer not made of (count, value) pairs."""


# --- pipeline / analysis --------------------------------------------------

class NonConstantCosts(RenderBenchError):
    """Closed-form period needs constant cost distributions."""


class MissingAnnotation(RenderBenchError):
    """Reactive agent got a frame without an annotation block."""


class MissingStage(RenderBenchError):
    """Stage-sum estimator lacks a required span."""


class ZeroReference(RenderBenchError):
    """percent_error with a zero reference mean."""


class DuplicateTagInTrace(InvariantError):
    """Same tag sent (or matched) twice; tracking is broken."""


class UnmatchedTag(InvariantError):
    """A response frame carried a tag with no outstanding input."""


class InfeasibleTarget(RenderBenchError):
    """Contention calibration target below 1.0."""


class SchemaMismatch(RenderBenchError):
    """compare() got reports with different shapes."""
