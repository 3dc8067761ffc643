"""Randomized instances for the identity suite.

An instance is a pure function of ``(identity id, instance seed)`` plus an
optional fixed dimension, so any report line can be replayed from its seed.
Campaign seeds map to instance seeds through :func:`instance_seed`.
"""

from __future__ import annotations

import numpy as np

from . import identities as ids
from .identities import IdentityInstance
from .paramgen import GenSpec, gen_family, gen_point, rng_for
from .pochhammer import ROLES
from .series import DEFAULT_CONTROL, SeriesControl

_STREAM_CHOICES = 10
MAX_LIST = 2
MAX_SHIFT = 3
# bound on the geometric ratio of the outer sums of I4 and I5
TERMINATING_RATIO = 0.55
SINGULAR_GAP = 0.05

_NEEDS = {
    "R1": "A", "R2": "A", "R3": "A", "R4": "A", "R13": "A", "R14": "A", "I1": "A",
    "R5": "B", "R6": "B", "R7": "B", "R8": "B", "I2": "B", "I4": "B", "I5": "B",
    "R9": "C", "R10": "C", "S1": "C",
    "R11": "D",
    "S2": "F", "S3": "F", "S4": "F",
}


def instance_seed(campaign_seed: int, identity_id: str, index: int) -> int:
    """Deterministic 63-bit seed for instance ``index`` of ``identity_id``."""
    key = ids.IDS.index(identity_id)
    ss = np.random.SeedSequence(int(campaign_seed), spawn_key=(key, int(index)))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def balanced(shape) -> bool:
    """Shapes whose series converge on ``|x| + |y| < 1``."""
    m1, n1, n1p, m2, n2, n2p = shape
    return m1 <= m2 + 1 and m1 + n1 <= m2 + n2 + 1 and m1 + n1p <= m2 + n2p + 1


def sample_shape(rng: np.random.Generator, required: tuple = ()) -> tuple:
    while True:
        shape = tuple(int(v) for v in rng.integers(0, MAX_LIST + 1, size=6))
        if all(shape[ROLES.index(r)] >= 1 for r in required) and balanced(shape):
            return shape


def _sample_knobs(ident, rng: np.random.Generator) -> dict:
    kn = {}
    for name in ident.knobs:
        if name in ("s", "p"):
            kn[name] = int(rng.integers(0, MAX_SHIFT + 1))
        elif name == "sign":
            kn[name] = int(rng.choice((1, -1)))
        elif name == "role":
            kn[name] = str(rng.choice(("E", "F")))
    return kn


def _point_ok(identity_id: str, x: complex, t: complex | None) -> bool:
    if identity_id == "I4":
        return abs(t) >= SINGULAR_GAP and abs(t) + abs(1 + t) * abs(x) <= TERMINATING_RATIO
    if identity_id == "I5":
        return (abs(t + x) >= SINGULAR_GAP
                and (abs(t + x) + abs(1 + t) * abs(x)) / abs(1 - x) <= TERMINATING_RATIO)
    return True


def make_instance(identity_id: str, seed: int, dim: int | None = None,
                  ctrl: SeriesControl = DEFAULT_CONTROL, tol: float = ids.DEFAULT_IDENTITY_TOL,
                  knobs: dict | None = None) -> IdentityInstance:
    """Build the instance determined by ``(identity_id, seed)``.

    ``knobs`` overrides individual sampled knob values (``i`` excepted,
    which must index the sampled shape).
    """
    ident = ids.get(identity_id)
    rng = rng_for(seed, _STREAM_CHOICES)
    r = int(dim) if dim is not None else int(rng.integers(1, 4))
    kn = _sample_knobs(ident, rng)
    if knobs:
        kn.update({k: v for k, v in knobs.items() if k != "i"})
    required = (_NEEDS[identity_id],) if identity_id in _NEEDS else ()
    if identity_id == "R12":
        required = (kn["role"],)
    shape = sample_shape(rng, required)
    role = ident.index_role(kn)
    if "i" in ident.knobs:
        kn["i"] = int(rng.integers(0, shape[ROLES.index(role)]))
        if knobs and "i" in knobs:
            kn["i"] = int(knobs["i"])
    down = ident.downshift(kn)
    minus_roles, minus_shift = (), 0
    if down:
        minus_roles, minus_shift = (down[0][0],), int(down[0][2])
    spec = GenSpec(r=r, shape=shape, seed=int(seed), minus_shift=minus_shift, minus_roles=minus_roles)
    family = gen_family(spec)
    counter = 0
    while True:
        x, y = gen_point(spec, "kdf_safe", counter=2 * counter)
        t = gen_point(spec, "t", counter=2 * counter + 1) if "t" in ident.knobs else None
        if _point_ok(identity_id, x, t):
            break
        counter += 1
    if t is not None:
        kn["t"] = complex(knobs["t"]) if knobs and "t" in knobs else t
    order = [k for k in ident.knobs]
    kn = {k: kn[k] for k in order}
    return IdentityInstance(identity_id, family.params, x, y, kn, int(seed), ctrl, tol)


def campaign(identity_ids, count: int, seed: int, dim: int | None = None,
             ctrl: SeriesControl = DEFAULT_CONTROL, tol: float = ids.DEFAULT_IDENTITY_TOL):
    """Yield ``count`` instances per id, in id order then index order."""
    for identity_id in identity_ids:
        for index in range(count):
            yield make_instance(identity_id, instance_seed(seed, identity_id, index), dim, ctrl, tol)
