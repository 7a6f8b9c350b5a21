"""Exception types raised by pamor.

All numerical failures derive from :class:`NumericalError`, all input or
configuration problems from :class:`InputError`, so callers (the CLI in
particular) can map them to exit codes without enumerating every case.
"""


class PamorError(Exception):
    pass


class InputError(PamorError, ValueError):
    pass


class NumericalError(PamorError, ArithmeticError):
    pass


# --- input / contract violations -------------------------------------------

class DimensionMismatch(InputError):
    pass


class NonSymmetric(InputError):
    pass


class InvalidConfig(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class NotBiorthogonal(InputError):
    pass


class FeedthroughMismatch(InputError):
    pass


class NoProjectionData(InputError):
    pass


class UncertifiedSolution(InputError):
    pass


# --- numerical failures ----------------------------------------------------

class NotStable(NumericalError):
    pass


class SpectraOverlap(NumericalError):
    pass


class NoHamiltonianSplit(NumericalError):
    pass


class Indefinite(NumericalError):
    pass


class NotPsd(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class SingularShift(NumericalError):
    pass


class Infinite(NumericalError):
    pass


class SingularFeedthrough(NumericalError):
    pass


class ESingular(NumericalError):
    pass


class RankDeficientBasis(NumericalError):
    pass


class NoStableRom(NumericalError):
    pass


class DefectiveSpectrum(NumericalError):
    pass


class InnerRomUnstable(NumericalError):
    pass


class XNotPd(NumericalError):
    pass


class DualNotPassive(NumericalError):
    pass


class FeedthroughSingular(NumericalError):
    pass
