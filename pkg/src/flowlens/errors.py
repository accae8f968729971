"""Exception taxonomy for the pipeline."""


class FlowlensError(Exception):
    """Base class for all engine errors."""


class SequenceError(FlowlensError):
    """A code chunk arrived out of order."""


class IncompleteSnippetError(FlowlensError):
    """Stream ended with text that can never close into a statement."""

    def __init__(self, message: str, residue: str):
        super().__init__(message)
        self.residue = residue


class StateTransitionError(FlowlensError):
    """Illegal node state transition (e.g. activating a non-pending node)."""


class UnknownNodeError(FlowlensError):
    """Node id not present in the diagram."""


class UnknownFormatError(FlowlensError):
    """Unsupported export format."""


class StaleSpanError(FlowlensError):
    """An edit targeted a span that no longer matches the source."""


class ReplayDivergenceError(FlowlensError):
    """Replay produced a probe record different from the recorded one."""

    def __init__(self, message: str, unit_id: str, probe_index: int):
        super().__init__(message)
        self.unit_id = unit_id
        self.probe_index = probe_index


class ProtocolError(FlowlensError):
    """Malformed traffic on the driver protocol or probe channel."""


class SandboxError(FlowlensError):
    """The sandbox interpreter failed outside normal code errors."""


class FixtureMissError(FlowlensError):
    """A replay-mode language-model client ran out of scripted responses."""


class RewriteRejectedError(FlowlensError):
    """A suggested code rewrite did not parse and was not applied."""
