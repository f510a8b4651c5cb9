class FormatError(ValueError):
    """A file does not match the expected binary layout."""


class UnsupportedVersionError(FormatError):
    pass


class DegenerateClusteringWarning(UserWarning):
    """Var-Part could not split a cluster into two non-empty halves."""
