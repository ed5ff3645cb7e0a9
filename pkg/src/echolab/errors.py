"""Exception hierarchy shared by every echolab module."""


class EchoLabError(Exception):
    pass


class InvalidArgument(EchoLabError, ValueError):
    pass


class SearchError(EchoLabError, RuntimeError):
    """An optimizer could not find an interior optimum in its window."""


class VanishingSignalError(EchoLabError, ZeroDivisionError):
    """Error propagation hit a zero slope.

    Carries both sides of the quotient so callers can report them.
    """

    def __init__(self, message, numerator=float("nan"), denominator=0.0):
        super().__init__(f"{message} (numerator={numerator!r}, denominator={denominator!r})")
        self.numerator = numerator
        self.denominator = denominator


class NonPositiveSlopeError(EchoLabError, ArithmeticError):
    """The noise slope is <= 0, so its log10 (the robustness coefficient) is undefined."""

    def __init__(self, message, slope):
        super().__init__(f"{message} (raw slope={slope!r})")
        self.slope = slope


class DegenerateRateError(EchoLabError, ValueError):
    pass


class ConfigError(EchoLabError, ValueError):
    def __init__(self, diagnostics):
        if isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))
