"""Exception hierarchy.

Errors are grouped in two families that the command line maps to exit
codes: :class:`InputError` (bad data, bad spec files, bad arguments) and
:class:`NumericalError` (EM failures, degenerate calibration).
"""


class CatmixError(Exception):
    """Base class for every error raised by the package."""


class InputError(CatmixError, ValueError):
    pass


class RaggedRows(InputError):
    def __init__(self, row, expected, got):
        self.row = row
        super().__init__(f"row {row}: expected {expected} columns, got {got}")


class UnparseableCell(InputError):
    def __init__(self, row, column, cell, reason="cannot parse"):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column}: {reason}: {cell!r}")


class DegenerateVariable(InputError):
    def __init__(self, column, label):
        self.column = column
        super().__init__(
            f"column {column}: only one observed state ({label!r}); "
            "a variable needs at least two states"
        )


class SpecError(InputError):
    """A model spec or report file does not follow its schema."""


class NumericalError(CatmixError, ArithmeticError):
    pass


class AllComponentsZero(NumericalError):
    def __init__(self, rows):
        self.rows = list(rows)
        super().__init__(
            f"{len(self.rows)} observation(s) have zero density under every "
            f"component (first: row {self.rows[0]})"
        )


class EmptyCluster(NumericalError):
    def __init__(self, cluster, mass):
        self.cluster = cluster
        self.mass = mass
        super().__init__(f"cluster {cluster} has total responsibility {mass:.3g}")


class EmptyPool(NumericalError):
    pass


class BudgetExceeded(NumericalError):
    pass


class FlatPath(NumericalError):
    """The dimension path shows no jump at all."""

    def __init__(self, message, report=None):
        self.report = report or {}
        super().__init__(message)


class DegenerateRegression(NumericalError):
    pass


class SpaceTooLarge(NumericalError):
    pass
