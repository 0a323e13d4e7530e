class NumericalError(RuntimeError):
    """A solver or decomposition produced, or was fed, non-finite values."""

    def __init__(self, message, phase=None):
        self.phase = phase
        if phase is not None:
            message = f"[{phase}] {message}"
        super().__init__(message)


class FormatError(OSError):
    """A file does not follow its declared container layout."""
