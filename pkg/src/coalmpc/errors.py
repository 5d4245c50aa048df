class SolverToleranceError(RuntimeError):
    """A solver returned a point that fails the post-solve accuracy checks."""
