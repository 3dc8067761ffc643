"""Exception types shared across the package."""

from __future__ import annotations


class KdfError(Exception):
    """Base class for every error raised by kdfmat."""


class SingularMatrix(KdfError, ArithmeticError):
    """A pivot fell below the singularity threshold during inversion."""

    def __init__(self, pivot: float, threshold: float):
        super().__init__(f"matrix is singular: pivot {pivot:.3e} below threshold {threshold:.3e}")
        self.pivot = pivot
        self.threshold = threshold


class SingularShift(KdfError, ArithmeticError):
    """``X + kI`` is singular for a parameter matrix that must be inverted.

    ``k`` is the first offending shift; ``role`` and ``index`` locate the
    matrix inside a parameter list when known.
    """

    def __init__(self, k: int, role: str | None = None, index: int | None = None):
        where = ""
        if role is not None:
            where = f" in {role}[{index}]" if index is not None else f" in {role}"
        super().__init__(f"singular shift at k={k}{where}")
        self.k = k
        self.role = role
        self.index = index

    def located(self, role: str, index: int) -> "SingularShift":
        return SingularShift(self.k, role, index)


class ConvergenceFailure(KdfError):
    """The eigenvalue iteration ran out of its iteration budget."""


class BranchCut(KdfError, ValueError):
    """A scalar base lies on the closed negative real axis."""


class DomainViolation(KdfError, ValueError):
    """A series argument lies outside the series' convergence domain."""


class NotConverged(KdfError):
    """The diagonal cap was reached with the tail still above tolerance.

    The partial result is attached as ``result``.
    """

    def __init__(self, result):
        super().__init__(
            f"series not converged after {result.terms_used} terms "
            f"(tail {result.last_tail_norm:.3e})"
        )
        self.result = result


class HypothesisViolation(KdfError):
    """An identity instance fails one of its hypothesis clauses."""

    def __init__(self, clause: str, defect: float | None = None):
        msg = f"hypothesis violated: {clause}"
        if defect is not None:
            msg += f" (defect {defect:.3e})"
        super().__init__(msg)
        self.clause = clause
        self.defect = defect


class GenerationFailure(KdfError):
    """No well-conditioned basis was found within the resampling budget."""
