"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`PolyPropError`
so the CLI and the tool server can turn it into a structured error payload.
"""


class PolyPropError(Exception):
    """Base class for all package errors."""

    def to_dict(self):
        return {"error": type(self).__name__, "message": str(self)}


# parsing ---------------------------------------------------------------------

class ParseError(PolyPropError):
    pass


class NotAThermoLog(ParseError):
    pass


class MalformedRow(ParseError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class UnsupportedUnits(ParseError):
    pass


class HeaderMismatch(ParseError):
    pass


class DanglingBond(ParseError):
    pass


class MissingIdColumn(ParseError):
    pass


class InconsistentAtomSet(ParseError):
    pass


class MissingColumn(ParseError):
    pass


# analysis --------------------------------------------------------------------

class AnalysisError(PolyPropError):
    pass


class DegenerateFluctuation(AnalysisError):
    pass


class InsufficientData(AnalysisError):
    pass


class NoSuchStage(AnalysisError):
    pass


class TooFewBins(AnalysisError):
    pass


class NoPhysicalSplit(AnalysisError):
    pass


class RMaxExceedsHalfBox(AnalysisError):
    pass


class UnwrapFailure(AnalysisError):
    pass


class TooFewReplicates(AnalysisError):
    pass


class MissingReference(AnalysisError):
    pass


# protocol generation ---------------------------------------------------------

class InvalidSpec(PolyPropError):
    pass


class InvalidSweep(InvalidSpec):
    pass


# job registry ----------------------------------------------------------------

class JobNotFound(PolyPropError):
    pass


class JobNotReady(PolyPropError):
    pass
