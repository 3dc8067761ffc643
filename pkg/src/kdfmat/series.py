"""Truncated series for 2F1, the four Appell functions and the Kampe de Feriet function.

All double series are summed by diagonals ``d = m + n`` (inner loop
``m = 0..d``).  Pochhammer factors are taken from incrementally grown
tables and multiplied left to right in the order they are written in the
series definition, so non-commuting inputs are evaluated exactly as
defined.  Summation stops once the largest term norm over the last
``tail_window`` diagonals drops below ``tol * (1 + ||partial sum||_F)``.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import DomainViolation, NotConverged
from .matrix import as_matrix, fro, identity, scalar_power
from .pochhammer import ROLES, ListTable, MatrixList, list_poch


@dataclass(frozen=True)
class SeriesControl:
    tol: float = 1e-12
    max_diagonal: int = 400
    tail_window: int = 3
    collect_diagnostics: bool = False

    def __post_init__(self):
        if not self.tol >= 1e-13:
            raise ValueError(f"tol must be >= 1e-13, got {self.tol}")
        if self.max_diagonal < 1:
            raise ValueError("max_diagonal must be >= 1")
        if self.tail_window < 1:
            raise ValueError("tail_window must be >= 1")


DEFAULT_CONTROL = SeriesControl()


@dataclass
class SeriesResult:
    value: np.ndarray
    terms_used: int
    last_tail_norm: float
    converged: bool
    diagonal_norms: list | None = None

    def to_json(self) -> dict:
        from .matrix import matrix_to_json

        out = {
            "value": matrix_to_json(self.value),
            "terms_used": self.terms_used,
            "last_tail_norm": self.last_tail_norm,
            "converged": self.converged,
        }
        if self.diagonal_norms is not None:
            out["diagonal_norms"] = list(self.diagonal_norms)
        return out


@dataclass(frozen=True)
class KdFParams:
    """The six parameter lists ``(A; B, C; D; E, F)`` of one KdF function."""

    A: MatrixList
    B: MatrixList
    C: MatrixList
    D: MatrixList
    E: MatrixList
    F: MatrixList
    dim: int = field(default=0)

    def __post_init__(self):
        dims = {getattr(self, role).dim for role in ROLES}
        if len(dims) != 1:
            raise ValueError(f"parameter lists disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "dim", dims.pop())

    @classmethod
    def build(cls, dim: int | None = None, **lists: Sequence) -> "KdFParams":
        unknown = set(lists) - set(ROLES)
        if unknown:
            raise ValueError(f"unknown parameter roles {sorted(unknown)}")
        if dim is None:
            for role in ROLES:
                if lists.get(role):
                    dim = as_matrix(lists[role][0]).shape[0]
                    break
            else:
                raise ValueError("all parameter lists are empty; pass dim")
        return cls(**{role: MatrixList.of(role, lists.get(role, ()), dim) for role in ROLES})

    @property
    def shape(self) -> tuple:
        """``(m1, n1, n1', m2, n2, n2')``."""
        return tuple(len(getattr(self, role)) for role in ROLES)

    def lists(self) -> dict:
        return {role: getattr(self, role) for role in ROLES}

    def with_list(self, role: str, items: MatrixList) -> "KdFParams":
        return replace(self, **{role: MatrixList.of(role, items.items, self.dim)})

    def shifted(self, **shifts: float) -> "KdFParams":
        """Shift whole lists, e.g. ``p.shifted(A=1, D=1)`` for ``(A+I; ...; D+I; ...)``."""
        return replace(self, **{role: getattr(self, role).shifted(k) for role, k in shifts.items()})

    def shift_item(self, role: str, j: int, k: float) -> "KdFParams":
        """Move the single member ``role[j]`` by ``k I``; ``k == 0`` returns ``self``."""
        if k == 0:
            return self
        return replace(self, **{role: getattr(self, role).shift_item(j, k)})

    def replace_item(self, role: str, j: int, m: np.ndarray) -> "KdFParams":
        return replace(self, **{role: getattr(self, role).replace(j, m)})

    def members(self):
        for role in ROLES:
            for j, m in enumerate(getattr(self, role)):
                yield role, j, m


# -- engine ---------------------------------------------------------------------


def _log_or_none(z: complex):
    return None if z == 0 else cmath.log(z)


def _slice_norms(prod: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(prod.real**2 + prod.imag**2, axis=(-2, -1)))


def _converged(norms: list, total: np.ndarray, ctrl: SeriesControl):
    w = ctrl.tail_window
    if len(norms) < w:
        return False, max(norms) if norms else np.inf
    tail = max(norms[-w:])
    return tail <= ctrl.tol * (1.0 + fro(total)), tail


def _double_series(factors, x: complex, y: complex, dim: int, ctrl: SeriesControl) -> SeriesResult:
    """Sum ``sum_{m,n} c_{mn} x^m y^n / (m! n!)`` where the matrix coefficient is
    the left-to-right product of ``factors``.

    ``factors`` is a sequence of ``(ListTable, kind)`` with kind one of
    ``"N"`` (indexed by m+n), ``"m"`` or ``"n"``.
    """
    lx, ly = _log_or_none(complex(x)), _log_or_none(complex(y))
    logfact = gammaln(np.arange(ctrl.max_diagonal + 2) + 1.0)
    total = np.zeros((dim, dim), dtype=complex)
    eye = identity(dim)
    norms: list = []
    terms = 0
    tail = np.inf
    for d in range(ctrl.max_diagonal + 1):
        m = np.arange(d + 1)
        keep = np.ones(d + 1, dtype=bool)
        if lx is None:
            keep &= m == 0
        if ly is None:
            keep &= m == d
        m = m[keep]
        n = d - m
        if m.size:
            logc = -(logfact[m] + logfact[n]) + 0j
            if lx is not None:
                logc = logc + m * lx
            if ly is not None:
                logc = logc + n * ly
            prod = None
            for table, kind in factors:
                idx = d if kind == "N" else (m if kind == "m" else n)
                table.ensure(int(np.max(idx)))
                logc = logc + table.logs[idx]
                mat = table.mats[idx]
                prod = mat if prod is None else prod @ mat
            coef = np.exp(logc)
            if prod is None:
                prod = eye
            if prod.ndim == 2:
                total += coef.sum() * prod
                norms.append(float(np.max(np.abs(coef))) * fro(prod))
            else:
                total += np.tensordot(coef, prod, axes=1)
                norms.append(float(np.max(np.abs(coef) * _slice_norms(prod))))
            terms += m.size
        else:
            norms.append(0.0)
        done, tail = _converged(norms, total, ctrl)
        if done:
            return SeriesResult(total, terms, float(tail), True,
                                norms if ctrl.collect_diagnostics else None)
    result = SeriesResult(total, terms, float(tail), False,
                          norms if ctrl.collect_diagnostics else None)
    raise NotConverged(result)


def _single_series(factors, x: complex, dim: int, ctrl: SeriesControl) -> SeriesResult:
    """``sum_n c_n x^n / n!`` with ``c_n`` the left-to-right product of ``factors``."""
    lx = _log_or_none(complex(x))
    total = np.zeros((dim, dim), dtype=complex)
    eye = identity(dim)
    norms: list = []
    tail = np.inf
    for k in range(ctrl.max_diagonal + 1):
        if lx is None and k > 0:
            norms.append(0.0)
        else:
            logc = -gammaln(k + 1) + (k * lx if k else 0.0)
            prod = None
            for table in factors:
                table.ensure(k)
                logc = logc + table.logs[k]
                prod = table.mats[k] if prod is None else prod @ table.mats[k]
            if prod is None:
                prod = eye
            coef = complex(np.exp(logc))
            total += coef * prod
            norms.append(abs(coef) * fro(prod))
        done, tail = _converged(norms, total, ctrl)
        if done:
            return SeriesResult(total, k + 1, float(tail), True,
                                norms if ctrl.collect_diagnostics else None)
    raise NotConverged(SeriesResult(total, ctrl.max_diagonal + 1, float(tail), False,
                                    norms if ctrl.collect_diagnostics else None))


def _table(label: str, mats, inverted: bool, cache: dict, dim: int) -> ListTable:
    if not isinstance(mats, MatrixList):
        mats = MatrixList.of(label, mats if isinstance(mats, (list, tuple)) else [mats], dim)
    return ListTable(mats, inverted, cache)


# -- public evaluators ----------------------------------------------------------


def gauss_2f1(a, b, c, x: complex, ctrl: SeriesControl = DEFAULT_CONTROL) -> SeriesResult:
    """``sum_n (A)_n (B)_n (C)_n^{-1} x^n / n!`` for ``|x| < 1``."""
    a, b, c = as_matrix(a), as_matrix(b), as_matrix(c)
    if abs(complex(x)) >= 1.0:
        raise DomainViolation(f"2F1 needs |x| < 1, got |x| = {abs(complex(x)):.6g}")
    dim = a.shape[0]
    cache: dict = {}
    factors = [_table("A", a, False, cache, dim), _table("B", b, False, cache, dim),
               _table("C", c, True, cache, dim)]
    return _single_series(factors, x, dim, ctrl)


APPELL_ROLES = {
    "F1": ("A", "B", "B'", "C"),
    "F2": ("A", "B", "B'", "C", "C'"),
    "F3": ("A", "A'", "B", "B'", "C"),
    "F4": ("A", "B", "C", "C'"),
}

# (parameter, index kind, inverted) in multiplication order
_APPELL_LAYOUT = {
    "F1": (("A", "N", False), ("B", "m", False), ("B'", "n", False), ("C", "N", True)),
    "F2": (("A", "N", False), ("B", "m", False), ("B'", "n", False), ("C", "m", True),
           ("C'", "n", True)),
    "F3": (("A", "m", False), ("A'", "n", False), ("B", "m", False), ("B'", "n", False),
           ("C", "N", True)),
    "F4": (("A", "N", False), ("B", "N", False), ("C", "m", True), ("C'", "n", True)),
}


def appell_domain_ok(kind: str, x: complex, y: complex, margin: float = 0.0) -> bool:
    ax, ay = abs(complex(x)), abs(complex(y))
    if kind in ("F1", "F3"):
        return ax < 1.0 - margin and ay < 1.0 - margin
    if kind == "F2":
        return ax + ay < 1.0 - margin
    if kind == "F4":
        return np.sqrt(ax) + np.sqrt(ay) < 1.0 - margin
    raise ValueError(f"unknown Appell kind {kind!r}")


def appell(kind: str, params: Mapping[str, np.ndarray], x: complex, y: complex,
           ctrl: SeriesControl = DEFAULT_CONTROL) -> SeriesResult:
    """Appell ``F1``..``F4`` with matrix parameters keyed ``A, A', B, B', C, C'``."""
    if kind not in _APPELL_LAYOUT:
        raise ValueError(f"unknown Appell kind {kind!r}")
    missing = [p for p in APPELL_ROLES[kind] if p not in params]
    if missing:
        raise ValueError(f"Appell {kind} is missing parameters {missing}")
    if not appell_domain_ok(kind, x, y):
        raise DomainViolation(f"({x}, {y}) is outside the {kind} convergence region")
    mats = {p: as_matrix(params[p]) for p in APPELL_ROLES[kind]}
    dim = next(iter(mats.values())).shape[0]
    cache: dict = {}
    factors = [(_table(p, mats[p], inv, cache, dim), kind_) for p, kind_, inv in _APPELL_LAYOUT[kind]]
    return _double_series(factors, x, y, dim, ctrl)


def kdf_eval(p: KdFParams, x: complex, y: complex, ctrl: SeriesControl = DEFAULT_CONTROL,
             cache: dict | None = None) -> SeriesResult:
    """The Kampe de Feriet double series at ``(x, y)``.

    ``cache`` may be shared between calls so that Pochhammer tables of
    members common to several evaluations are built once.
    """
    cache = {} if cache is None else cache
    layout = (("A", "N", False), ("B", "m", False), ("C", "n", False),
              ("D", "N", True), ("E", "m", True), ("F", "n", True))
    factors = [(ListTable(getattr(p, role), inv, cache), kind)
               for role, kind, inv in layout if len(getattr(p, role))]
    return _double_series(factors, x, y, p.dim, ctrl)


def one_f0(a, t: complex) -> np.ndarray:
    """Closed form ``1F0(A; -; t) = (1 - t)^{-A}``."""
    a = as_matrix(a)
    return scalar_power(1.0 - complex(t), -a)


def one_f0_series(a, t: complex, ctrl: SeriesControl = DEFAULT_CONTROL) -> SeriesResult:
    """Truncated ``sum_k (A)_k t^k / k!``."""
    a = as_matrix(a)
    return _single_series([_table("A", a, False, {}, a.shape[0])], t, a.shape[0], ctrl)


def deriv_y(p: KdFParams, x: complex, y: complex, q: int,
            ctrl: SeriesControl = DEFAULT_CONTROL) -> SeriesResult:
    """``q``-th y-derivative via the shifted-parameter closed form

    ``[A]_q [C]_q F(A+qI; B, C+qI; D+qI; E, F+qI) [D]_q^{-1} [F]_q^{-1}``.
    """
    if q < 0:
        raise ValueError("derivative order must be non-negative")
    inner = kdf_eval(p.shifted(A=q, C=q, D=q, F=q), x, y, ctrl)
    left = list_poch(p.A, q) @ list_poch(p.C, q)
    right = list_poch(p.D, q, inverted=True) @ list_poch(p.F, q, inverted=True)
    value = left @ inner.value @ right
    return SeriesResult(value, inner.terms_used, inner.last_tail_norm, inner.converged,
                        inner.diagonal_norms)
