"""Exception types raised by the library."""


class CocycleLabError(Exception):
    pass


class NotUnimodular(CocycleLabError, ValueError):
    pass


class NotHyperbolic(CocycleLabError, ValueError):
    pass


class LeafRadiusExceeded(CocycleLabError, ValueError):
    pass


class LeafMismatch(CocycleLabError, ValueError):
    pass


class CocycleOverflow(CocycleLabError, OverflowError):
    pass


class Degenerate(CocycleLabError, ArithmeticError):
    pass


class NoConvergence(CocycleLabError, ArithmeticError):
    def __init__(self, message, n_max=None):
        super().__init__(message)
        self.n_max = n_max


class MultipleModuli(CocycleLabError, ValueError):
    pass


class NotInvariant(CocycleLabError, ValueError):
    def __init__(self, message, point=None, index=None):
        super().__init__(message)
        self.point = point
        self.index = index


class NotBounded(CocycleLabError, ValueError):
    pass


class TwistNotBounded(CocycleLabError, ValueError):
    pass


class SingularC(CocycleLabError, ArithmeticError):
    pass


class InsufficientSignal(CocycleLabError, ValueError):
    pass


class GapTooSmall(CocycleLabError, ValueError):
    pass


class ConfigError(CocycleLabError, ValueError):
    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
