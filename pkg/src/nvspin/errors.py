"""Exception and warning types shared across nvspin."""


class NVSpinError(Exception):
    """Base class for all nvspin errors."""


class InvalidMatrix(NVSpinError, ValueError):
    pass


class FrameMismatch(NVSpinError, ValueError):
    pass


class DegenerateSite(NVSpinError, ValueError):
    """Both A_ZZ and T_nd vanish, so the zero-field splitting is zero."""


class InvalidRange(NVSpinError, ValueError):
    pass


class ParseError(NVSpinError, ValueError):
    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")


class EmptyFamily(NVSpinError, ValueError):
    pass


class SingularDensity(NVSpinError, ValueError):
    def __init__(self, index, position, distance):
        self.index = index
        self.position = tuple(float(x) for x in position)
        self.distance = float(distance)
        super().__init__(
            f"density point {index} at {self.position} lies {distance:.3g} A "
            "from the nucleus (inside the singularity guard)"
        )


class InvalidSequence(NVSpinError, ValueError):
    pass


class AmbiguousFamily(UserWarning):
    """A stability cluster does not have 3 or 6 members."""


class AmbiguousSign(UserWarning):
    """The sign of A_ZZ cannot be recovered from a zero-field splitting."""


class NearAvoidedCrossing(UserWarning):
    pass


class UnnormalizedDensity(UserWarning):
    pass
