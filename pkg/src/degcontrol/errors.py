"""Exception types raised by the solver stack."""


class InvalidArgument(ValueError):
    """An input violates a documented precondition."""


class AssemblyFailure(RuntimeError):
    """The finite-element operators could not be assembled."""


class StepFailure(RuntimeError):
    """A time step could not be completed.

    ``step`` is the index of the time level that failed to be produced.
    """

    def __init__(self, message, step):
        super().__init__(f"{message} (step {step})")
        self.step = step
