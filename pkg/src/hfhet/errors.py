"""Exception hierarchy shared by all hfhet modules."""


class HfhetError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(HfhetError, ValueError):
    """A scalar argument is outside its admissible range (e.g. sigma <= 0)."""


class ConfigurationError(HfhetError, ValueError):
    """A derived window or tuning combination is unusable for the given n."""


class DataError(HfhetError, ValueError):
    """Input observations are malformed (non-finite values, bad schema)."""


class DegenerateDataError(HfhetError, ValueError):
    """Data is formally valid but statistically degenerate (e.g. flat path)."""


class BlockIndexError(HfhetError, IndexError):
    """A spot-volatility block index is outside the admissible range."""
