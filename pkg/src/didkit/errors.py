"""Exception hierarchy shared across the package.

Two broad families matter to callers: :class:`UsageError` (bad inputs or
configuration; CLI exit code 2) and :class:`EstimationError` (the data do not
support the requested computation; CLI exit code 3).
"""


class DidError(Exception):
    """Base class for all didkit errors."""


class UsageError(DidError):
    """Invalid configuration, flags, or input files."""


class EstimationError(DidError):
    """The requested estimate cannot be computed from the given data."""


# ---------------------------------------------------------------- panel


class MissingColumn(UsageError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"required column {column!r} not found in header")


class NonNumericCell(UsageError):
    def __init__(self, row, column, value):
        self.row, self.column, self.value = row, column, value
        super().__init__(
            f"non-numeric value {value!r} in column {column!r} at data row {row}"
        )


class UnbalancedPanel(UsageError):
    def __init__(self, unit, missing_periods):
        self.unit = unit
        self.missing_periods = tuple(missing_periods)
        super().__init__(
            f"unit {unit!r} is missing periods {sorted(self.missing_periods)}"
        )


class DuplicateObservation(UsageError):
    def __init__(self, unit, period):
        self.unit, self.period = unit, period
        super().__init__(f"duplicate observation for unit {unit!r} in period {period}")


class NoComparisonPossible(EstimationError):
    """After normalization no usable comparison structure remains."""


# ------------------------------------------------------------- nuisance


class RankDeficient(EstimationError):
    def __init__(self, column, detail=""):
        self.column = column
        msg = f"design matrix is rank deficient; column {column} is collinear"
        super().__init__(msg + (f" ({detail})" if detail else ""))


class EmptySample(EstimationError):
    """No observations with positive weight."""


class EmptyClass(EstimationError):
    """One of the label classes carries zero total weight."""


# ---------------------------------------------------------------- 2x2


class EmptyArm(EstimationError):
    def __init__(self, arm):
        self.arm = arm
        super().__init__(f"{arm} arm is empty (or carries zero total weight)")


class DegenerateWeights(EstimationError):
    """A comparison unit's fitted propensity score is numerically 1."""


class EmptyCell(EstimationError):
    def __init__(self, cell):
        self.cell = cell
        super().__init__(f"partition cell {cell!r} lacks treated or comparison units")


# ------------------------------------------------------------ inference


class SingleCluster(EstimationError):
    """Clustered variance needs at least two clusters."""


class NoPretrends(EstimationError):
    """The operation needs at least one estimated pre-trend."""


class NoPostPeriods(EstimationError):
    """The curve has no event time >= 0."""


class NoBalancedCohort(EstimationError):
    def __init__(self, window):
        self.window = tuple(window)
        super().__init__(f"no cohort is observed over the full window {self.window}")


# ---------------------------------------------------------- diagnostics


class WrongShape(EstimationError):
    """Dataset does not have the structure the diagnostic requires."""


# ------------------------------------------------------------- simulate


class InfeasibleShares(UsageError):
    def __init__(self, detail):
        super().__init__(f"infeasible cohort shares: {detail}")
