"""Exception hierarchy shared by every stage of the pipeline."""


class VotestackError(Exception):
    """Base class for all errors raised by votestack."""


class ArgumentError(VotestackError, ValueError):
    """An argument violates a documented precondition."""


class FormatError(VotestackError, ValueError):
    """A file does not follow its declared format."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyDatasetError(VotestackError, ValueError):
    pass


class RecordError(VotestackError, ValueError):
    """A single record is structurally valid but semantically unusable."""


class StratificationError(VotestackError, ValueError):
    pass


class ShapeError(VotestackError, ValueError):
    pass


class DivergenceError(VotestackError, RuntimeError):
    pass


class ContractError(VotestackError):
    """Inputs were produced under a different pipeline than the model expects."""


class CoverageError(VotestackError, ValueError):
    pass


class ModelLoadError(VotestackError):
    pass


class ConfigError(VotestackError):
    """Run configuration is invalid; ``problems`` lists every offending field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  {p}" for p in self.problems))
