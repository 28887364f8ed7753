"""Exception hierarchy shared by all modules."""


class AmgStokesError(Exception):
    """Base class for every error raised by the package."""


class DimensionMismatch(AmgStokesError, ValueError):
    pass


class IndexOutOfRange(AmgStokesError, IndexError):
    pass


class SingularBlock(AmgStokesError, ArithmeticError):
    pass


class ZeroDiagonal(AmgStokesError, ArithmeticError):
    pass


class ZeroPivot(AmgStokesError, ArithmeticError):
    def __init__(self, row, msg=None):
        self.row = int(row)
        super().__init__(msg or f"zero pivot in row {self.row}")


class ZeroRow(AmgStokesError, ArithmeticError):
    pass


class NotDivisible(AmgStokesError, ValueError):
    pass


class EmptySelection(AmgStokesError, ValueError):
    pass


class PrecisionOverflow(AmgStokesError, OverflowError):
    pass


class ParseError(AmgStokesError, ValueError):
    def __init__(self, msg, line=None):
        self.line = line
        if line is not None:
            msg = f"line {line}: {msg}"
        super().__init__(msg)


class UnsupportedField(ParseError):
    pass


class SetupFailure(AmgStokesError, RuntimeError):
    def __init__(self, msg, stage=None):
        self.stage = stage
        if stage is not None:
            msg = f"[{stage}] {msg}"
        super().__init__(msg)


class InvalidSize(AmgStokesError, ValueError):
    pass
