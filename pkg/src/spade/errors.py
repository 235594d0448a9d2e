"""Exception hierarchy.

Every error carries a stable machine-readable ``code`` and the process
``exit_status`` the command-line front end reports for it.
"""


class SpadeError(Exception):
    code = "ERROR"
    exit_status = 2


# I/O (exit 1)
class IoFailure(SpadeError):
    code = "IO"
    exit_status = 1


# validation (exit 2)
class MalformedFile(SpadeError):
    code = "MALFORMED_FILE"


class NonFiniteValue(SpadeError):
    code = "NON_FINITE_VALUE"


class EmptyDataset(SpadeError):
    code = "EMPTY_DATASET"


class SchemaMismatch(SpadeError):
    code = "SCHEMA_MISMATCH"


class ZeroVector(SpadeError):
    code = "ZERO_VECTOR"


class InsufficientClassSize(SpadeError):
    code = "INSUFFICIENT_CLASS_SIZE"


class SingleClass(SpadeError):
    code = "SINGLE_CLASS"


class DuplicateInput(SpadeError):
    code = "DUPLICATE_INPUT"


class InvalidProbability(SpadeError):
    code = "INVALID_PROBABILITY"


class TooFewExceedances(SpadeError):
    code = "TOO_FEW_EXCEEDANCES"


class DegenerateSample(SpadeError):
    code = "DEGENERATE_SAMPLE"


class NonConvergence(SpadeError):
    code = "NON_CONVERGENCE"


class DimensionMismatch(SpadeError):
    code = "DIMENSION_MISMATCH"


class UnknownClass(SpadeError):
    code = "UNKNOWN_CLASS"


class InvalidTau(SpadeError):
    code = "INVALID_TAU"


class EmptyScores(SpadeError):
    code = "EMPTY_SCORES"


class InvalidArgument(SpadeError):
    code = "INVALID_ARGUMENT"


# dataset / bundle binding (exit 3)
class FingerprintMismatch(SpadeError):
    code = "FINGERPRINT_MISMATCH"
    exit_status = 3


# missing data (exit 4)
class MissingPrediction(SpadeError):
    code = "MISSING_PREDICTION"
    exit_status = 4


# missing models (exit 5)
class MissingPairModels(SpadeError):
    code = "MISSING_PAIR_MODELS"
    exit_status = 5
