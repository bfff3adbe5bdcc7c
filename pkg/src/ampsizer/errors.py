"""Exception hierarchy shared by every ampsizer module."""


class AmpSizerError(Exception):
    """Base class for all errors raised by ampsizer."""


# -- testbench / literals ----------------------------------------------------

class MalformedLiteral(AmpSizerError, ValueError):
    pass


class MissingLine(AmpSizerError, ValueError):
    def __init__(self, role: str):
        super().__init__(f"testbench has no {role} line")
        self.role = role


class DuplicateParam(AmpSizerError, ValueError):
    def __init__(self, name: str):
        super().__init__(f"parameter {name!r} assigned more than once")
        self.name = name


class UnrecognizedName(AmpSizerError, ValueError):
    pass


class UnknownProcess(AmpSizerError, ValueError):
    pass


class UnknownParam(AmpSizerError, LookupError):
    def __init__(self, name: str):
        super().__init__(f"no parameter named {name!r} in testbench")
        self.name = name


# -- design space ------------------------------------------------------------

class UnclassifiableParam(AmpSizerError, ValueError):
    pass


class OverrideOutOfNodeBounds(AmpSizerError, ValueError):
    pass


class PointOutOfBounds(AmpSizerError, ValueError):
    pass


class DimensionMismatch(AmpSizerError, ValueError):
    pass


# -- metrics -----------------------------------------------------------------

class NonpositivePower(AmpSizerError, ValueError):
    pass


class DegenerateDenominator(AmpSizerError, ValueError):
    pass


class NonpositiveDenominator(AmpSizerError, ValueError):
    pass


class MissingMetric(AmpSizerError, KeyError):
    def __init__(self, metric: str):
        super().__init__(metric)
        self.metric = metric

    def __str__(self) -> str:
        return f"metric {self.metric!r} not present"


class MissingBaseline(AmpSizerError, KeyError):
    def __init__(self, metric: str):
        super().__init__(metric)
        self.metric = metric

    def __str__(self) -> str:
        return f"baseline has no reference value for {self.metric!r}"


class EmptyInput(AmpSizerError, ValueError):
    pass


# -- simulation --------------------------------------------------------------

class BackendUnavailable(AmpSizerError, RuntimeError):
    pass


class RoleUnassigned(AmpSizerError, ValueError):
    pass


# -- optimisation ------------------------------------------------------------

class BudgetTooSmall(AmpSizerError, ValueError):
    pass


class SingularKernel(AmpSizerError, ArithmeticError):
    pass


class ReplayMismatch(AmpSizerError, RuntimeError):
    """A replayed ledger entry does not match the optimizer's proposal."""


# -- harness -----------------------------------------------------------------

class ConfigParseError(AmpSizerError, ValueError):
    pass


class ValidationError(AmpSizerError, ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


class HashMismatch(AmpSizerError, ValueError):
    pass


class CorruptLedger(AmpSizerError, ValueError):
    pass


class OutputDirUnwritable(AmpSizerError, OSError):
    pass


class RunLocked(AmpSizerError, RuntimeError):
    """Another live process owns the output directory."""
