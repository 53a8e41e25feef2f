"""Exception hierarchy shared across the runtime."""


class AceError(Exception):
    """Base class for all runtime errors."""


class ValidationError(AceError, ValueError):
    """A value violates its type invariants (e.g. salience outside [0, 1])."""


class PrivilegeError(AceError, PermissionError):
    """A caller attempted an operation reserved for a more privileged party."""


class ContractViolation(AceError):
    """An operation was called with its precondition unmet."""


class ProtocolError(AceError):
    """A message arrived that does not fit the conversation state."""


class ConstitutionParseError(AceError, ValueError):
    pass


class CognitionRequestError(AceError, ValueError):
    pass


class EngineUnavailable(AceError):
    """The external cognition service did not answer in time."""


class ConfigurationError(AceError, ValueError):
    pass


class CorruptionError(AceError):
    """An append-only log (episodic memory or trace) is damaged.

    ``last_good_seq`` names the last record that verified, or ``None`` when
    nothing verified.
    """

    def __init__(self, message: str, last_good_seq: int | None = None):
        super().__init__(message)
        self.last_good_seq = last_good_seq
