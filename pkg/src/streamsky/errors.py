"""Exception hierarchy shared by every layer."""


class StreamSkyError(Exception):
    """Base class for all errors raised by this package."""


class BackendUnavailable(StreamSkyError):
    pass


class ContextMismatch(StreamSkyError):
    """Elements or keys from two different group contexts were combined."""


class DeserializationError(StreamSkyError, ValueError):
    pass


class PolicyError(StreamSkyError, ValueError):
    """Invalid policy parameters (bad threshold, unsupported window size, ...)."""


class MessageRangeError(StreamSkyError, ValueError):
    """Plaintext outside [0, v_max]."""


class WindowError(StreamSkyError, ValueError):
    """Malformed window handed to compute_sum (count, order or alignment)."""


class TableMiss(StreamSkyError):
    """Discrete-log lookup failed.

    Signals a wrong key, wrong window alignment or parameters the key does
    not authorize; never a crash condition for a user client.
    """


class TableTooLarge(StreamSkyError, ValueError):
    pass


class XacmlError(StreamSkyError, ValueError):
    """Policy/request document outside the supported XACML subset.

    ``line`` and ``column`` locate the offending spot when known.
    """

    def __init__(self, reason, line=None, column=None):
        self.reason = reason
        self.line = line
        self.column = column
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"{reason}{where}")


class StoreError(StreamSkyError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class WireError(StreamSkyError, ValueError):
    pass


class FrameTooLarge(WireError):
    pass


class ConnectionClosed(WireError):
    pass


class ProtocolError(StreamSkyError):
    pass


class ConfigError(StreamSkyError, ValueError):
    pass
