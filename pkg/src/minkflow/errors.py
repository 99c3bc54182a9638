"""Exception hierarchy shared by all modules."""


class MinkflowError(Exception):
    """Base class for every error raised by the package."""


class BadGrid(MinkflowError):
    pass


class NonPositive(MinkflowError):
    pass


class NonConvex(MinkflowError):
    pass


class WindingError(MinkflowError):
    pass


class MeshFailure(MinkflowError):
    pass


class NoConvergence(MinkflowError):
    pass


class SingularSystem(MinkflowError):
    pass


class DegenerateGradient(MinkflowError):
    pass


class NonConvexPerturbation(NonConvex):
    pass


class StepRejected(MinkflowError):
    pass


class GuardViolation(MinkflowError):
    """A priori bound on h or K left the configured window."""

    def __init__(self, message: str, bound: str, value: float):
        super().__init__(message)
        self.bound = bound
        self.value = value


class ConfigError(MinkflowError):
    pass
