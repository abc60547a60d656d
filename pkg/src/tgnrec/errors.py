"""Exception types. Each maps to a CLI exit code."""


class TGNRecError(Exception):
    exit_code = 1


class ConfigError(TGNRecError):
    exit_code = 1


class DataError(TGNRecError):
    exit_code = 2


class NumericError(TGNRecError):
    exit_code = 3


class ShapeError(ValueError):
    pass
