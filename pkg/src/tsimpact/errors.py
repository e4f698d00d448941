"""Typed error hierarchy.

``DataError`` subclasses map to CLI exit code 3, ``ModelError`` subclasses
to exit code 4; flag problems are handled by the CLI itself (exit code 2).
"""


class TsimpactError(Exception):
    """Base class for all package errors."""


class DataError(TsimpactError):
    """Invalid data, configuration, or file content."""


class ModelError(TsimpactError):
    """Failure of a probabilistic model or the external-model protocol."""


# --- core -------------------------------------------------------------

class SeriesTooShort(DataError):
    """Time series shorter than the minimum length of 2."""


class NonFiniteValue(DataError):
    """NaN or infinity found where finite values are required."""


class NonUniformLength(DataError):
    """Series of differing lengths in one dataset."""


class LabelCountMismatch(DataError):
    """Label list length differs from series count."""


class EmptyDataset(DataError):
    """Dataset constructed from zero series."""


class InvalidSimplifiedInput(DataError):
    """Simplified-input vector with entries other than 0/1 or bad length."""


class AdditivityViolation(DataError):
    """Impact vector whose entries do not sum to prediction - base_value."""


# --- dsp --------------------------------------------------------------

class OverlappingBands(DataError):
    """Stop bands overlap or are not sorted."""


class BandOutOfRange(DataError):
    """Stop band outside the valid bin range [1, d//2]."""


class SingularDesignSystem(DataError):
    """Filter design problem is ill-posed for the requested band layout."""


class FilterLongerThanSeries(DataError):
    """Filter length L exceeds the series length d."""


# --- mappings ---------------------------------------------------------

class FragmentCountOutOfRange(DataError):
    """Fragment count d' outside the valid range for the series length."""


class DimensionMismatch(DataError):
    """Input length does not match the expected dimension."""


class EmptyReference(DataError):
    """Replacement strategy needs a non-empty reference set."""


class VarianceUndefined(DataError):
    """Too few reference values to estimate a variance."""


class ZeroVariance(DataError):
    """Constant specimen cannot be re-scaled (zero standard deviation)."""


# --- shap -------------------------------------------------------------

class DegenerateCoalition(DataError):
    """Kernel weight requested for the empty or full coalition."""


class RankDeficient(DataError):
    """Too few distinct coalitions to solve for d' coefficients."""


class TooManyFragments(DataError):
    """Exact enumeration requested beyond the supported fragment count."""


# --- explain ----------------------------------------------------------

class MissingLabels(DataError):
    """Classifier explanation requires a labeled reference set."""


class EmptyClass(DataError):
    """A class with zero member series."""


# --- similarity -------------------------------------------------------

class ZeroVariancePair(DataError):
    """Correlation of a constant impact vector is undefined."""


class AllUndefined(DataError):
    """No defined coefficients to take a median over."""


class IncompatibleExplanations(DataError):
    """Explanations that cannot be compared (mismatched d' or specimens)."""


# --- io ---------------------------------------------------------------

class ParseError(DataError):
    """Malformed input file; message carries the line or field."""


class SchemaVersionMismatch(DataError):
    """Explanation document written by an unsupported schema version."""


# --- models -----------------------------------------------------------

class EmptyTrainingSet(DataError):
    """Model fitted on zero series."""


class ProtocolViolation(ModelError):
    """External model broke the wire protocol contract."""


class Timeout(ModelError):
    """External model did not answer within the allowed time."""


class ProcessExit(ModelError):
    """External model process ended while a response was pending."""
