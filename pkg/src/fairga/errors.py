"""Exception types shared across the package."""


class FairgaError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(FairgaError):
    """Invalid configuration value or argument combination."""


class MalformedRow(FairgaError):
    """A dataset row that cannot be parsed."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class UnknownCategory(FairgaError):
    """A categorical value outside the feature's declared domain."""

    def __init__(self, feature: str, value: str):
        super().__init__(f"feature {feature!r}: unknown category {value!r}")
        self.feature = feature
        self.value = value


class OutOfRange(FairgaError):
    """A numeric value outside the feature's declared range."""

    def __init__(self, feature: str, value):
        super().__init__(f"feature {feature!r}: value {value!r} out of range")
        self.feature = feature
        self.value = value


class EmptyCorpus(FairgaError):
    """A text corpus with no usable documents."""


class Diverged(FairgaError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged at epoch {epoch}")
        self.epoch = epoch


class AdapterDown(FairgaError):
    """The external prediction adapter is unreachable or terminated."""


class ProtocolViolation(FairgaError):
    """The external adapter sent a response that breaks the wire protocol."""

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class MalformedTriple(FairgaError):
    """A graph file line that is not a valid relation triple."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class NoPairAvailable(FairgaError):
    """No counterpart pair can be built for a sensitive word."""


class OovWord(FairgaError):
    """Word missing from the embedding store."""

    def __init__(self, word: str):
        super().__init__(f"out-of-vocabulary word: {word!r}")
        self.word = word


class SingularFit(FairgaError):
    """Surrogate regression is rank-deficient beyond ridge repair."""


class NotInExplanation(FairgaError):
    """Position queried for rank is absent from the explanation."""

    def __init__(self, position: int):
        super().__init__(f"position {position} not in explanation")
        self.position = position


class NoSensitiveFeature(FairgaError):
    """Dataset has no position resolvable to a protected attribute."""


class EmptySeedSet(FairgaError):
    """Seed selection found no qualifying samples; consider raising epsilon."""


class NotEnoughRecords(FairgaError):
    """Fewer discriminatory records available than augmentation requires."""
