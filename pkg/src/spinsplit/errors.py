"""Exception hierarchy; the CLI maps each class to an exit code."""


class SpinSplitError(Exception):
    exit_code = 1


class ConfigError(SpinSplitError):
    exit_code = 2


class LatticeError(SpinSplitError, ValueError):
    exit_code = 2


class OperatorError(SpinSplitError, ValueError):
    exit_code = 2


class VerificationError(SpinSplitError):
    exit_code = 3


class InsufficientDataError(SpinSplitError):
    exit_code = 4


class SolverError(SpinSplitError):
    exit_code = 5
