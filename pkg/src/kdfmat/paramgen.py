"""Seeded generation of commuting parameter families and sample points.

Every member of a family is ``P diag(lambda) P^{-1}`` for one shared random
basis ``P``, so all members commute by construction.  Eigenvalues are drawn
from a box in the right half-plane and kept at least ``integer_margin`` away
from every integer, which makes every ``X + kI`` (any integer ``k``)
invertible and well conditioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import GenerationFailure
from .matrix import (commutator_defect, fro, inverse, matrix_from_json, matrix_to_json,
                     spectrum)
from .pochhammer import ROLES, MatrixList
from .series import KdFParams, appell_domain_ok

COMMUTE_RTOL = 1e-10
SINGULAR_ATOL = 1e-8


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for ``(seed, stream...)``; no replay of other streams needed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream)))


_STREAM_BASIS = 1
_STREAM_EIG = 2
_STREAM_POINT = 3


@dataclass(frozen=True)
class GenSpec:
    r: int
    shape: tuple = (1, 1, 1, 1, 1, 1)
    re_range: tuple = (0.6, 2.5)
    im_max: float = 0.5
    basis_cond_cap: float = 20.0
    seed: int = 0
    integer_margin: float = 0.1
    minus_shift: int = 0
    minus_roles: tuple = ()

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("dimension must be positive")
        if len(self.shape) != 6 or any(k < 0 for k in self.shape):
            raise ValueError(f"shape must be six non-negative integers, got {self.shape}")
        if self.re_range[0] < 0.5 or self.re_range[1] <= self.re_range[0]:
            raise ValueError("eigenvalue box must satisfy 0.5 <= re_min < re_max")

    def box(self, role: str) -> tuple:
        lo, hi = self.re_range
        if role in self.minus_roles:
            lo, hi = lo + self.minus_shift, hi + self.minus_shift
        return lo, hi


@dataclass
class CommutingFamily:
    spec: GenSpec
    basis: np.ndarray
    eigenvalues: dict = field(repr=False)
    params: KdFParams = field(repr=False)

    @property
    def seed(self) -> int:
        return self.spec.seed

    def to_json(self) -> dict:
        return {
            "seed": self.spec.seed,
            "r": self.spec.r,
            "shape": list(self.params.shape),
            "basis": matrix_to_json(self.basis),
            "roles": {role: [matrix_to_json(m) for m in getattr(self.params, role)] for role in ROLES},
        }

    @staticmethod
    def params_from_json(obj: dict) -> KdFParams:
        roles = obj.get("roles", {})
        r = int(obj["r"])
        return KdFParams.build(dim=r, **{role: [matrix_from_json(m) for m in roles.get(role, [])]
                                         for role in ROLES})


def _sample_eigenvalue(rng: np.random.Generator, lo: float, hi: float, im_max: float,
                       margin: float) -> complex:
    for _ in range(10_000):
        z = complex(rng.uniform(lo, hi), rng.uniform(-im_max, im_max))
        if abs(z - round(z.real)) >= margin:
            return z
    raise GenerationFailure("could not place an eigenvalue away from the integers")


def random_basis(rng: np.random.Generator, r: int, cap: float, attempts: int = 100) -> np.ndarray:
    for _ in range(attempts):
        g = (rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))) / math.sqrt(2.0)
        if np.linalg.cond(g) <= cap:
            return g
    raise GenerationFailure(f"no basis with condition <= {cap} in {attempts} attempts")


def gen_family(spec: GenSpec) -> CommutingFamily:
    basis = random_basis(rng_for(spec.seed, _STREAM_BASIS), spec.r, spec.basis_cond_cap)
    basis_inv = inverse(basis)
    eigs: dict = {}
    lists: dict = {}
    for ri, (role, count) in enumerate(zip(ROLES, spec.shape)):
        lo, hi = spec.box(role)
        members = []
        eigs[role] = []
        for j in range(count):
            rng = rng_for(spec.seed, _STREAM_EIG, ri, j)
            lam = np.array([_sample_eigenvalue(rng, lo, hi, spec.im_max, spec.integer_margin)
                            for _ in range(spec.r)])
            eigs[role].append(lam)
            members.append((basis * lam) @ basis_inv)
        lists[role] = members
    params = KdFParams.build(dim=spec.r, **lists)
    return CommutingFamily(spec, basis, eigs, params)


# -- validation -----------------------------------------------------------------


@dataclass(frozen=True)
class Hypotheses:
    """What an identity instance needs from its parameters.

    ``commute``: role pairs that must commute (``"all"`` for every pair of
    members, including within one list).  ``positive_stable``: roles whose
    members must be positive stable.  ``shift_invertible``: roles whose
    members need ``X + kI`` invertible for all ``k >= 0``.  ``downshift``:
    ``(role, index, s)`` entries needing ``X - kI`` invertible for
    ``0 < k <= s``.
    """

    commute: object = "all"
    positive_stable: tuple = ROLES
    shift_invertible: tuple = ("D", "E", "F")
    downshift: tuple = ()


@dataclass(frozen=True)
class Clause:
    name: str
    members: tuple
    passed: bool
    defect: float


@dataclass
class ValidationReport:
    clauses: list

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.clauses)

    @property
    def failures(self) -> list:
        return [c for c in self.clauses if not c.passed]

    def first_failure(self) -> Clause | None:
        for c in self.clauses:
            if not c.passed:
                return c
        return None


def _member_name(role: str, j: int) -> str:
    return f"{role}[{j}]"


def _first_bad_shift(lam: np.ndarray, kmin: int) -> int | None:
    """Smallest integer ``k >= kmin`` with ``lam_i + k`` numerically zero, if any."""
    worst = None
    for z in np.atleast_1d(lam):
        k = -round(z.real)
        if k >= kmin and abs(z + k) <= SINGULAR_ATOL * max(1.0, abs(z)):
            worst = k if worst is None else min(worst, k)
    return worst


def _commute_pairs(params: KdFParams, commute) -> Iterable:
    members = list(params.members())
    for a in range(len(members)):
        for b in range(a + 1, len(members)):
            ra, rb = members[a][0], members[b][0]
            if commute == "all" or (ra, rb) in commute or (rb, ra) in commute:
                yield members[a], members[b]


def validate(family: CommutingFamily | KdFParams, needed: Hypotheses = Hypotheses()) -> ValidationReport:
    """Check each hypothesis clause and record its measured defect; never raises."""
    params = family.params if isinstance(family, CommutingFamily) else family
    clauses = []
    for (ra, ja, ma), (rb, jb, mb) in _commute_pairs(params, needed.commute):
        defect = commutator_defect(ma, mb)
        names = (_member_name(ra, ja), _member_name(rb, jb))
        clauses.append(Clause(f"commute({names[0]},{names[1]})", names, defect <= COMMUTE_RTOL, defect))
    spectra = {}
    for role, j, m in params.members():
        spectra[(role, j)] = spectrum(m)
    for role, j, m in params.members():
        lam = spectra[(role, j)]
        name = _member_name(role, j)
        if role in needed.positive_stable:
            margin = float(np.min(lam.real))
            clauses.append(Clause(f"positive_stable({name})", (name,), margin > 0.0, -margin))
        if role in needed.shift_invertible:
            k = _first_bad_shift(lam, 0)
            label = f"shift_invertible({name})" if k is None else f"shift_invertible({name},k={k})"
            clauses.append(Clause(label, (name,), k is None, 0.0 if k is None else float(k)))
    for role, j, s in needed.downshift:
        name = _member_name(role, j)
        lam = spectra[(role, j)]
        k = _first_bad_shift(lam, -s)
        if k is not None and k < 0:
            clauses.append(Clause(f"downshift_invertible({name},k={-k})", (name,), False, float(-k)))
        else:
            clauses.append(Clause(f"downshift_invertible({name},k<={s})", (name,), True, 0.0))
    return ValidationReport(clauses)


# -- points ---------------------------------------------------------------------

KDF_SAFE_RADIUS = 0.5
T_RADIUS = 0.25
POINT_MARGIN = 0.05


def _polar(rng: np.random.Generator, radius: float) -> complex:
    return radius * complex(np.exp(1j * rng.uniform(-np.pi, np.pi)))


def gen_point(spec: GenSpec, region: str, counter: int = 0, real: bool = False,
              radius: float | None = None):
    """A point strictly inside ``region`` (margin 0.05), deterministic in ``(seed, counter)``.

    Regions: ``kdf_safe`` (``|x|+|y| <= 0.5``), ``F1``..``F4`` (Appell
    domains), ``unit_disc`` and ``t`` (``|t| <= 0.25``).  The last two return
    a scalar, the rest a pair.  ``radius`` replaces the region's bound (the
    ``1`` of the Appell and disc conditions), e.g. ``radius=0.5`` for
    ``|x| + |y| < 0.5`` under ``F2``.
    """
    rng = rng_for(spec.seed, _STREAM_POINT, counter)

    def draw(bound):
        rad = rng.uniform(0.0, bound)
        if real:
            return complex(rad * rng.choice((-1.0, 1.0)))
        return _polar(rng, rad)

    if region == "t":
        return draw((T_RADIUS if radius is None else radius))
    if region == "unit_disc":
        return draw((1.0 if radius is None else radius) - POINT_MARGIN)
    if region == "kdf_safe":
        total = rng.uniform(0.0, (KDF_SAFE_RADIUS if radius is None else radius) - POINT_MARGIN)
        u = rng.uniform(0.0, 1.0)
        if real:
            sx, sy = rng.choice((-1.0, 1.0), size=2)
            return complex(sx * u * total), complex(sy * (1 - u) * total)
        return _polar(rng, u * total), _polar(rng, (1 - u) * total)
    if region in ("F1", "F2", "F3", "F4"):
        bound = 1.0 if radius is None else radius
        # F4 is bounded in sqrt|x| + sqrt|y|, so its moduli scale quadratically
        scale = bound**2 if region == "F4" else bound
        while True:
            x, y = draw(scale), draw(scale)
            if appell_domain_ok(region, x / scale, y / scale, margin=POINT_MARGIN):
                return x, y
    raise ValueError(f"unknown region {region!r}")


def perturb_member(params: KdFParams, role: str, j: int, rel: float, rng: np.random.Generator) -> KdFParams:
    """Replace member ``role[j]`` by ``X + E`` with a random ``E``, ``||E|| = rel ||X||``."""
    x = getattr(params, role)[j]
    r = params.dim
    e = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
    e *= rel * fro(x) / fro(e)
    return params.with_list(role, MatrixList.of(role, getattr(params, role).replace(j, x + e).items, r))
