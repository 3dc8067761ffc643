"""Matrix-parameter Kampe de Feriet series, their identities and a checking toolkit."""

from __future__ import annotations

from .errors import (BranchCut, ConvergenceFailure, DomainViolation, GenerationFailure, HypothesisViolation,
                     KdfError, NotConverged, SingularMatrix, SingularShift)
from .matrix import expm, fro, identity, inverse, matrix_from_json, matrix_to_json, scalar_power, spectrum
from .pochhammer import ROLES, MatrixList, list_poch, poch, poch_inv
from .series import (DEFAULT_CONTROL, KdFParams, SeriesControl, SeriesResult, appell, deriv_y, gauss_2f1,
                     kdf_eval, one_f0, one_f0_series)
from .paramgen import CommutingFamily, GenSpec, Hypotheses, gen_family, gen_point, validate
from .identities import (IDS, REGISTRY, IdentityInstance, IdentityReport, check, check_finite_sum,
                         check_infinite_sum, check_recursion, run_instance, swap_involution)
from .campaign import campaign, instance_seed, make_instance

__all__ = [
    "BranchCut", "ConvergenceFailure", "DomainViolation", "GenerationFailure", "HypothesisViolation",
    "KdfError", "NotConverged", "SingularMatrix", "SingularShift",
    "expm", "fro", "identity", "inverse", "matrix_from_json", "matrix_to_json", "scalar_power", "spectrum",
    "ROLES", "MatrixList", "list_poch", "poch", "poch_inv",
    "DEFAULT_CONTROL", "KdFParams", "SeriesControl", "SeriesResult", "appell", "deriv_y", "gauss_2f1",
    "kdf_eval", "one_f0", "one_f0_series",
    "CommutingFamily", "GenSpec", "Hypotheses", "gen_family", "gen_point", "validate",
    "IDS", "REGISTRY", "IdentityInstance", "IdentityReport", "check", "check_finite_sum",
    "check_infinite_sum", "check_recursion", "run_instance", "swap_involution",
    "campaign", "instance_seed", "make_instance",
]
