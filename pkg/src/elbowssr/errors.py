"""Exception hierarchy. Every error carries a short machine-readable ``code``."""


class ElbowSSRError(ValueError):
    code = "error"


class InvalidInputError(ElbowSSRError):
    code = "invalid-input"


class InvalidConfigurationError(ElbowSSRError):
    code = "invalid-configuration"


class DegenerateShapeError(ElbowSSRError):
    code = "degenerate-shape"


class DimensionMismatchError(ElbowSSRError):
    code = "dimension-mismatch"


class BudgetExceededError(ElbowSSRError):
    code = "budget-exceeded"

    def __init__(self, size, budget):
        self.size = size
        self.budget = budget
        super().__init__(f"{size} combinations exceed the budget of {budget}")


class RefinementFailedError(ElbowSSRError):
    code = "refinement-failed"


class AlignmentError(ElbowSSRError):
    code = "alignment"


class FormatError(ElbowSSRError):
    code = "format"


class HeaderError(FormatError):
    code = "hmt-bad-header"


class UnsupportedDtypeError(FormatError):
    code = "hmt-unsupported-dtype"


class LengthMismatchError(FormatError):
    code = "hmt-length-mismatch"


class NonFiniteError(FormatError):
    code = "hmt-non-finite"


class TableError(FormatError):
    code = "table"

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateKeyError(TableError):
    code = "duplicate-key"
