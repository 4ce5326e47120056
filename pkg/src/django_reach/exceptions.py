__author__ = "Thorin Schiffer"


class ReachError(RuntimeError):
    """
    Base class of everything the analyzer raises on purpose
    """


class ModelError(ReachError):
    """
    The model is ill-formed: unknown or duplicate names, type errors, empty or unbounded domains,
    out-of-domain assignments
    """


class BliteSyntaxError(ModelError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class LimitExceeded(ReachError):
    pass


class ConfigurationError(ReachError):
    pass


class LddError(ReachError):
    pass


class ProtocolError(ReachError):
    pass


class ProviderError(ReachError):
    """
    A NextState call failed; the message names the group and the projected state
    """

    def __init__(self, message, group=None, state=None):
        self.group = group
        self.state = state
        super().__init__(message)
