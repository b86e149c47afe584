"""Exception types raised across the package.

Every error carries a short machine-readable ``code`` so the CLI can emit a
single parsable line.
"""


class SimError(ValueError):
    code = "error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)


class InvalidParameterError(SimError):
    code = "invalid-parameter"


class InsufficientPositiveWeightsError(SimError):
    code = "insufficient-positive-weights"


class DegenerateCandidatesError(SimError):
    code = "degenerate-candidates"


class UnknownCategoryError(SimError):
    code = "unknown-category"


class ShapeMismatchError(SimError):
    code = "shape-mismatch"


class NonFiniteLossError(SimError):
    code = "non-finite-loss"


class EmptyDatasetError(SimError):
    code = "empty-dataset"


class AllZeroScoresError(SimError):
    code = "all-zero-scores"


class EmptyStreamError(SimError):
    code = "empty-stream"


class SchemaVersionError(SimError):
    code = "schema-version-mismatch"


class MissingPathError(SimError):
    code = "missing-path"
