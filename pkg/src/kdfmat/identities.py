"""Registry of matrix KdF identities and a numerical checker for them.

Each identity is an equality ``lhs == rhs`` between expressions built from
KdF function values, bracket products and scalar powers.  Instances fix the
parameter family, the point ``(x, y)`` and the identity's free knobs:

========  ===========================================================
``i``     index of the distinguished member in its list
``s``     number of unit shifts (recursions)
``p``     order of a finite sum
``t``     auxiliary complex variable of an infinite sum
``sign``  ``+1`` / ``-1``: upward or downward form (C-list analogues)
``role``  ``"E"`` or ``"F"``: which lower list is shifted downward
========  ===========================================================

Notation in the ``formula`` strings: ``F`` is ``F(A; B, C; D; E, F; x, y)``,
``[X]_k`` the bracket product over list ``X``, ``X^i`` the list ``X`` with
member ``i`` removed, ``X+k`` every member shifted by ``kI``, ``^-1`` an
inverse, with juxtaposition meaning a left-to-right matrix product.

Before any series is summed the instance's hypotheses are checked: all
members pairwise commuting, all members positive stable, and every
matrix that gets inverted non-singular.  Each formula's own hypothesis list
(``hypotheses``) is a subset of what the checker enforces.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .errors import HypothesisViolation, KdfError, NotConverged
from .matrix import fro, identity, inverse, matrix_from_json, matrix_to_json, scalar_power
from .paramgen import Hypotheses, validate
from .pochhammer import ROLES, ListTable, MatrixList
from .series import DEFAULT_CONTROL, KdFParams, SeriesControl, SeriesResult, _converged, deriv_y, kdf_eval

DEFAULT_IDENTITY_TOL = 1e-7
PARTNER = {"B": "E", "C": "F"}
FD_STEP = 1e-5
FD_TOL = 1e-13
CONTOUR_POINTS = 32
CONTOUR_RADIUS = 0.1


@dataclass(frozen=True)
class Identity:
    id: str
    kind: str  # "recursion", "finite_sum" or "infinite_sum"
    title: str
    formula: str
    hypotheses: tuple
    knobs: tuple
    rule: Callable = field(repr=False)
    index_role: Callable = field(repr=False)
    downshift: Callable = field(repr=False)
    trivial: dict | None = None
    referee: bool = False

    def needs(self, knobs: dict) -> Hypotheses:
        down = self.downshift(knobs)
        return Hypotheses(downshift=tuple(down))


# -- evaluation helpers ---------------------------------------------------------


class _Side:
    """Evaluates KdF values for one side of an identity and counts series terms."""

    def __init__(self, ctrl: SeriesControl, cache: dict):
        self.ctrl = ctrl
        self.cache = cache
        self.terms = 0

    def F(self, p: KdFParams, x: complex, y: complex, ctrl: SeriesControl | None = None) -> np.ndarray:
        res = kdf_eval(p, x, y, ctrl or self.ctrl, self.cache)
        self.terms += res.terms_used
        return res.value


def _br(lst: MatrixList, k: int = 1, inv: bool = False) -> np.ndarray:
    return ListTable(lst, inv).value(k)


def _single(m: np.ndarray, label: str) -> MatrixList:
    return MatrixList.of(label, [m])


def _eye_shift(m: np.ndarray, k: float) -> np.ndarray:
    return m + k * identity(m.shape[0])


def _adaptive_sum(term: Callable, ctrl: SeriesControl, dim: int) -> np.ndarray:
    """``sum_k term(k)``, stopped by the same tail rule as the series engine.

    ``term`` returns ``None`` when the k-th term is exactly zero.
    """
    total = np.zeros((dim, dim), dtype=complex)
    norms: list = []
    tail = np.inf
    for k in range(ctrl.max_diagonal + 1):
        v = term(k)
        if v is None:
            norms.append(0.0)
        else:
            total = total + v
            norms.append(fro(v))
        done, tail = _converged(norms, total, ctrl)
        if done:
            return total
    raise NotConverged(SeriesResult(total, ctrl.max_diagonal + 1, float(tail), False))


def _scaled_coef(log_scalar: complex, *tables_at) -> np.ndarray:
    """``exp(log_scalar) * prod mats`` for ``(table, index)`` pairs, without overflow."""
    log = log_scalar
    prod = None
    for table, k in tables_at:
        if table.empty:
            continue
        table.ensure(k)
        log = log + table.logs[k]
        prod = table.mats[k] if prod is None else prod @ table.mats[k]
    if prod is None:
        return complex(np.exp(log)) * identity(tables_at[0][0].dim)
    return complex(np.exp(log)) * prod


def _pow_log(z: complex, k: int):
    """``log(z**k)`` or ``None`` if the power is exactly zero."""
    if k == 0:
        return 0j
    if z == 0:
        return None
    return k * cmath.log(z)


# -- recursions in A ---------------------------------------------------------------


def _a_correction(L, R, p, x, y, i, offsets, sign):
    """``F +- x[A^i][B] (sum F(..)) [D]^-1[E]^-1 +- y[A^i][C] (sum F(..)) [D]^-1[F]^-1``."""
    base = R.F(p, x, y)
    if not offsets:
        return base
    a_i = p.A[i]
    rest = p.A.without(i)
    px = p.shifted(A=1, B=1, D=1, E=1)
    py = p.shifted(A=1, C=1, D=1, F=1)
    sx = sum(R.F(px.replace_item("A", i, _eye_shift(a_i, o)), x, y) for o in offsets)
    sy = sum(R.F(py.replace_item("A", i, _eye_shift(a_i, o)), x, y) for o in offsets)
    ai = _br(rest)
    dinv = _br(p.D, inv=True)
    out = base + sign * x * (ai @ _br(p.B) @ sx @ dinv @ _br(p.E, inv=True))
    return out + sign * y * (ai @ _br(p.C) @ sy @ dinv @ _br(p.F, inv=True))


def _rule_r1(L, R, p, x, y, kn):
    i, s = kn["i"], kn["s"]
    return L.F(p.shift_item("A", i, s), x, y), _a_correction(L, R, p, x, y, i, list(range(1, s + 1)), 1)


def _rule_r2(L, R, p, x, y, kn):
    i, s = kn["i"], kn["s"]
    return L.F(p.shift_item("A", i, -s), x, y), _a_correction(L, R, p, x, y, i, [-k for k in range(s)], -1)


def _rule_r13(L, R, p, x, y, kn):
    i = kn["i"]
    return L.F(p.shift_item("A", i, 1), x, y), _a_correction(L, R, p, x, y, i, [1], 1)


def _rule_r14(L, R, p, x, y, kn):
    i = kn["i"]
    return L.F(p.shift_item("A", i, -1), x, y), _a_correction(L, R, p, x, y, i, [0], -1)


def _multinomial_a(L, R, p, x, y, i, s, sign):
    rest = ListTable(p.A.without(i), False)
    tb, tc = ListTable(p.B, False), ListTable(p.C, False)
    td, te, tf = ListTable(p.D, True), ListTable(p.E, True), ListTable(p.F, True)
    a_i = p.A[i]
    total = None
    for k1 in range(s + 1):
        for k2 in range(s + 1 - k1):
            kk = k1 + k2
            lx, ly = _pow_log(sign * x, k1), _pow_log(sign * y, k2)
            if lx is None or ly is None:
                continue
            logm = gammaln(s + 1) - gammaln(k1 + 1) - gammaln(k2 + 1) - gammaln(s - kk + 1)
            left = _scaled_coef(logm + lx + ly, (rest, kk), (tb, k1), (tc, k2))
            q = p.shifted(A=kk, B=k1, C=k2, D=kk, E=k1, F=k2)
            if sign < 0:
                q = q.replace_item("A", i, a_i)
            right = td.value(kk) @ te.value(k1) @ tf.value(k2)
            term = left @ R.F(q, x, y) @ right
            total = term if total is None else total + term
    return total


def _rule_r3(L, R, p, x, y, kn):
    i, s = kn["i"], kn["s"]
    return L.F(p.shift_item("A", i, s), x, y), _multinomial_a(L, R, p, x, y, i, s, 1)


def _rule_r4(L, R, p, x, y, kn):
    i, s = kn["i"], kn["s"]
    return L.F(p.shift_item("A", i, -s), x, y), _multinomial_a(L, R, p, x, y, i, s, -1)


# -- recursions in B and C -----------------------------------------------------------


def _num_correction(R, p, x, y, role, i, offsets, sign):
    """``F +- v [A][N^i] (sum F(..)) [D]^-1 [N']^-1`` for numerator list ``N``."""
    base = R.F(p, x, y)
    if not offsets:
        return base
    den = PARTNER[role]
    v = x if role == "B" else y
    lst = getattr(p, role)
    q = p.shifted(**{"A": 1, "D": 1, role: 1, den: 1})
    acc = sum(R.F(q.replace_item(role, i, _eye_shift(lst[i], o)), x, y) for o in offsets)
    left = _br(p.A) @ _br(lst.without(i))
    return base + sign * v * (left @ acc @ _br(p.D, inv=True) @ _br(getattr(p, den), inv=True))


def _binomial_num(R, p, x, y, role, i, s, sign):
    """``sum_k C(s,k) [A]_k [N^i]_k (+-v)^k F(A+k; N+k; D+k; N'+k) [D]_k^-1 [N']_k^-1``."""
    den = PARTNER[role]
    v = sign * (x if role == "B" else y)
    lst = getattr(p, role)
    ta, tn = ListTable(p.A, False), ListTable(lst.without(i), False)
    td, tden = ListTable(p.D, True), ListTable(getattr(p, den), True)
    total = None
    for k in range(s + 1):
        lv = _pow_log(v, k)
        if lv is None:
            continue
        logb = gammaln(s + 1) - gammaln(k + 1) - gammaln(s - k + 1)
        q = p.shifted(**{"A": k, "D": k, role: k, den: k})
        if sign < 0:
            q = q.replace_item(role, i, lst[i])
        term = _scaled_coef(logb + lv, (ta, k), (tn, k)) @ R.F(q, x, y) @ td.value(k) @ tden.value(k)
        total = term if total is None else total + term
    return total


def _up_shift(role):
    def rule(L, R, p, x, y, kn):
        i, s = kn["i"], kn["s"]
        return L.F(p.shift_item(role, i, s), x, y), _num_correction(R, p, x, y, role, i, list(range(1, s + 1)), 1)
    return rule


def _down_shift(role):
    def rule(L, R, p, x, y, kn):
        i, s = kn["i"], kn["s"]
        return L.F(p.shift_item(role, i, -s), x, y), _num_correction(R, p, x, y, role, i, [-k for k in range(s)], -1)
    return rule


def _binomial_shift(role, fixed_sign=None):
    def rule(L, R, p, x, y, kn):
        i, s = kn["i"], kn["s"]
        sign = fixed_sign if fixed_sign is not None else kn["sign"]
        return L.F(p.shift_item(role, i, sign * s), x, y), _binomial_num(R, p, x, y, role, i, s, sign)
    return rule


def _rule_r9(L, R, p, x, y, kn):
    return (_up_shift("C") if kn["sign"] > 0 else _down_shift("C"))(L, R, p, x, y, kn)


# -- downward shifts of lower parameters --------------------------------------------


def _lower_correction(R, p, x, y, role, i, s):
    """Correction sums for ``F(role_i - sI)`` with ``role`` in D, E, F."""
    base = R.F(p, x, y)
    if s == 0:
        return base
    lst = getattr(p, role)
    m = lst[i]

    def shifted_sum(q):
        acc = None
        for k in range(1, s + 1):
            term = (R.F(q.replace_item(role, i, _eye_shift(m, 2 - k)), x, y)
                    @ inverse(_eye_shift(m, -k)) @ inverse(_eye_shift(m, -(k - 1))))
            acc = term if acc is None else acc + term
        return acc

    out = base
    rest_inv = _br(lst.without(i), inv=True)
    if role in ("D", "E"):
        sx = shifted_sum(p.shifted(A=1, B=1, D=1, E=1))
        if role == "D":
            tail = rest_inv @ _br(p.E, inv=True)
        else:
            tail = rest_inv @ _br(p.D, inv=True)
        out = out + x * (_br(p.A) @ _br(p.B) @ sx @ tail)
    if role in ("D", "F"):
        sy = shifted_sum(p.shifted(A=1, C=1, D=1, F=1))
        if role == "D":
            tail = rest_inv @ _br(p.F, inv=True)
        else:
            tail = rest_inv @ _br(p.D, inv=True)
        out = out + y * (_br(p.A) @ _br(p.C) @ sy @ tail)
    return out


def _rule_r11(L, R, p, x, y, kn):
    i, s = kn["i"], kn["s"]
    return L.F(p.shift_item("D", i, -s), x, y), _lower_correction(R, p, x, y, "D", i, s)


def _rule_r12(L, R, p, x, y, kn):
    i, s, role = kn["i"], kn["s"], kn["role"]
    return L.F(p.shift_item(role, i, -s), x, y), _lower_correction(R, p, x, y, role, i, s)


# -- finite sums in y -------------------------------------------------------------


def contour_derivative(f: Callable, y: complex, order: int, radius: float = CONTOUR_RADIUS,
                       points: int = CONTOUR_POINTS) -> np.ndarray:
    """``d^order f / dy^order`` at ``y`` by the trapezoidal rule on a circle."""
    acc = None
    for j in range(points):
        w = cmath.exp(2j * math.pi * j / points)
        v = f(y + radius * w) * w ** (-order)
        acc = v if acc is None else acc + v
    return acc * (math.factorial(order) / (points * radius**order))


def fd_derivative_y(side: _Side, p: KdFParams, x: complex, y: complex, order: int) -> np.ndarray:
    """Finite-difference oracle for ``d^order F / dy^order`` (series tol 1e-13).

    Order 1 uses a central difference with step 1e-5; higher orders use a
    32-point contour of radius 0.1.
    """
    ctrl = SeriesControl(tol=FD_TOL, max_diagonal=side.ctrl.max_diagonal, tail_window=side.ctrl.tail_window)
    if order == 0:
        return side.F(p, x, y)
    if order == 1:
        h = FD_STEP
        return (side.F(p, x, y + h, ctrl) - side.F(p, x, y - h, ctrl)) / (2 * h)
    r = min(CONTOUR_RADIUS, max(1e-3, (1.0 - abs(x) - abs(y)) / 3.0))
    return contour_derivative(lambda yy: side.F(p, x, yy, ctrl), y, order, radius=r)


def _rule_s0(L, R, p, x, y, kn):
    q = kn["p"]
    res = deriv_y(p, x, y, q, L.ctrl)
    L.terms += res.terms_used
    return res.value, fd_derivative_y(R, p, x, y, q)


def _rule_s1(L, R, p, x, y, kn):
    i, n = kn["i"], kn["p"]
    ta, tc = ListTable(p.A, False), ListTable(p.C.without(i), False)
    td, tf = ListTable(p.D, True), ListTable(p.F, True)
    lhs = None
    for k in range(n + 1):
        ly = _pow_log(y, k)
        if ly is None:
            continue
        logb = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
        term = (_scaled_coef(logb + ly, (ta, k), (tc, k)) @ L.F(p.shifted(A=k, C=k, D=k, F=k), x, y)
                @ td.value(k) @ tf.value(k))
        lhs = term if lhs is None else lhs + term
    return lhs, R.F(p.shift_item("C", i, n), x, y)


def _rule_s2(L, R, p, x, y, kn):
    i, n = kn["i"], kn["p"]
    ta, tc = ListTable(p.A, False), ListTable(p.C, False)
    td, tf = ListTable(p.D, True), ListTable(p.F, True)
    tfi = ListTable(_single(_eye_shift(p.F[i], -n), "F"), True)
    lhs = None
    for k in range(n + 1):
        ly = _pow_log(y, k)
        if ly is None:
            continue
        logb = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
        term = (_scaled_coef(logb + ly, (ta, k), (tc, k)) @ L.F(p.shifted(A=k, C=k, D=k, F=k), x, y)
                @ tfi.value(k) @ td.value(k) @ tf.value(k))
        lhs = term if lhs is None else lhs + term
    return lhs, R.F(p.shift_item("F", i, -n), x, y)


def _rule_s3(L, R, p, x, y, kn):
    i, n = kn["i"], kn["p"]
    f_i = p.F[i]
    up = ListTable(_single(identity(p.dim) - f_i, "F"), False)
    down = ListTable(_single((2 - n) * identity(p.dim) - f_i, "F"), True)
    lhs = None
    for k in range(n + 1):
        c = math.comb(n, k) * (-1) ** k
        term = c * (L.F(p.shift_item("F", i, -k), x, y) @ up.value(k) @ down.value(k))
        lhs = term if lhs is None else lhs + term
    rhs = _s_tail(R, p, x, y, n, p.shifted(A=n, C=n, D=n, F=n),
                  ListTable(_single(_eye_shift(f_i, -1), "F"), True), (-1) ** n, after=True)
    return lhs, rhs


def _rule_s4(L, R, p, x, y, kn):
    i, n = kn["i"], kn["p"]
    f_i = p.F[i]
    up = ListTable(_single(_eye_shift(f_i, n - 1), "F"), False)
    down = ListTable(_single(f_i, "F"), True)
    lhs = None
    for k in range(n + 1):
        c = math.comb(n, k) * (-1) ** k
        term = c * (L.F(p.shift_item("F", i, k), x, y) @ up.value(k) @ down.value(k))
        lhs = term if lhs is None else lhs + term
    q = p.shifted(A=n, C=n, D=n, F=n).shift_item("F", i, n)
    rhs = _s_tail(R, p, x, y, n, q, ListTable(_single(_eye_shift(f_i, n), "F"), True), 1, after=False)
    return lhs, rhs


def _s_tail(R, p, x, y, n, q, extra: ListTable, sign, after: bool):
    """``sign [A]_n [C]_n y^n F(q) ...`` with the single-member inverse placed
    right after ``F(q)`` (``after``) or at the end."""
    ly = _pow_log(y, n)
    if ly is None:
        return np.zeros((p.dim, p.dim), dtype=complex)
    ta, tc = ListTable(p.A, False), ListTable(p.C, False)
    inner = R.F(q, x, y)
    tail = _br(p.D, n, True) @ _br(p.F, n, True)
    mid = inner @ extra.value(n) @ tail if after else inner @ tail @ extra.value(n)
    return sign * (_scaled_coef(ly, (ta, n), (tc, n)) @ mid)


# -- infinite sums in t -----------------------------------------------------------


def _pretable(m: np.ndarray, label: str) -> ListTable:
    return ListTable(_single(m, label), False)


def _logfact(k: int) -> float:
    return float(gammaln(k + 1))


def _rule_i1(L, R, p, x, y, kn):
    i, t = kn["i"], kn["t"]
    a_i = p.A[i]
    ta = _pretable(a_i, "A")

    def term(k):
        lt = _pow_log(t, k)
        if lt is None:
            return None
        return _scaled_coef(lt - _logfact(k), (ta, k)) @ L.F(p.shift_item("A", i, k), x, y)

    lhs = _adaptive_sum(term, L.ctrl, p.dim)
    w = 1.0 - t
    return lhs, scalar_power(w, -a_i) @ R.F(p, x / w, y / w)


def _rule_i2(L, R, p, x, y, kn):
    i, t = kn["i"], kn["t"]
    b_i = p.B[i]
    tb = _pretable(b_i, "B")

    def term(k):
        lt = _pow_log(t, k)
        if lt is None:
            return None
        return _scaled_coef(lt - _logfact(k), (tb, k)) @ L.F(p.shift_item("B", i, k), x, y)

    lhs = _adaptive_sum(term, L.ctrl, p.dim)
    w = 1.0 - t
    return lhs, scalar_power(w, -b_i) @ R.F(p, x / w, y)


def _rule_i3(L, R, p, x, y, kn):
    t = kn["t"]
    ta, tb = ListTable(p.A, False), ListTable(p.B, False)
    td, te = ListTable(p.D, True), ListTable(p.E, True)

    def term(k):
        lt = _pow_log(t, k)
        if lt is None:
            return None
        left = _scaled_coef(lt - _logfact(k), (ta, k), (tb, k))
        return left @ R.F(p.shifted(A=k, B=k, D=k, E=k), x, y) @ td.value(k) @ te.value(k)

    return L.F(p, x + t, y), _adaptive_sum(term, R.ctrl, p.dim)


def _terminating_sum(L, p, i, u, xx, y):
    """``sum_k (B_i)_k u^k / k! F(B_i -> -kI; xx, y)``."""
    b_i = p.B[i]
    tb = _pretable(b_i, "B")
    eye = identity(p.dim)

    def term(k):
        lu = _pow_log(u, k)
        if lu is None:
            return None
        q = p.replace_item("B", i, -k * eye)
        return _scaled_coef(lu - _logfact(k), (tb, k)) @ L.F(q, xx, y)

    return _adaptive_sum(term, L.ctrl, p.dim)


def _rule_i4(L, R, p, x, y, kn):
    i, t = kn["i"], kn["t"]
    if t == 0:
        raise ValueError("I4 is singular at t = 0")
    lhs = _terminating_sum(L, p, i, -t, (1 + t) * x / t, y)
    return lhs, scalar_power(1 + t, -p.B[i]) @ R.F(p, x, y)


def _rule_i5(L, R, p, x, y, kn):
    i, t = kn["i"], kn["t"]
    if t + x == 0:
        raise ValueError("I5 is singular at t = -x")
    lhs = _terminating_sum(L, p, i, (t + x) / (x - 1), (1 + t) * x / (t + x), y)
    return lhs, scalar_power((1 - x) / (t + 1), p.B[i]) @ R.F(p, x, y)


# -- registry -----------------------------------------------------------------------


def _idx(role):
    return lambda kn: role


def _no_down(kn):
    return []


def _down(role, key="s", extra=0):
    return lambda kn: [(role, kn["i"], kn[key] + extra)] if kn[key] + extra > 0 else []


def _down_signed(role):
    return lambda kn: [(role, kn["i"], kn["s"])] if kn["sign"] < 0 and kn["s"] > 0 else []


COMMUTE_NOTE = "all members commute"
STABLE_NOTE = "all members positive stable"


def _mk(id, kind, title, formula, hyps, knobs, rule, index_role=None, downshift=_no_down,
        trivial=None, referee=False):
    return Identity(id, kind, title, formula, (COMMUTE_NOTE, STABLE_NOTE) + tuple(hyps), tuple(knobs),
                    rule, index_role or (lambda kn: None), downshift, trivial, referee)


_REGISTRY = [
    _mk("R1", "recursion", "raise A_i by s, correction-sum form",
        "F(A_i+s) = F + x[A^i][B] sum_{k=1..s} F(A_i+k, A^i+1; B+1, C; D+1; E+1, F)[D]^-1[E]^-1"
        " + y[A^i][C] sum_{k=1..s} F(A_i+k, A^i+1; B, C+1; D+1; E, F+1)[D]^-1[F]^-1",
        ("D, E, F shifts invertible",), ("i", "s"), _rule_r1, _idx("A"), trivial={"s": 0}),
    _mk("R2", "recursion", "lower A_i by s, correction-sum form",
        "F(A_i-s) = F - x[A^i][B] sum_{k=0..s-1} F(A_i-k, A^i+1; B+1, C; D+1; E+1, F)[D]^-1[E]^-1"
        " - y[A^i][C] sum_{k=0..s-1} F(A_i-k, A^i+1; B, C+1; D+1; E, F+1)[D]^-1[F]^-1",
        ("D, E, F shifts invertible", "A_i - kI invertible for k <= s"), ("i", "s"), _rule_r2, _idx("A"),
        _down("A"), trivial={"s": 0}),
    _mk("R3", "recursion", "raise A_i by s, multinomial form",
        "F(A_i+s) = sum_{k1+k2<=s} s!/(k1! k2! (s-k1-k2)!) [A^i]_{k1+k2}[B]_{k1}[C]_{k2} x^k1 y^k2"
        " F(A+k1+k2; B+k1, C+k2; D+k1+k2; E+k1, F+k2)[D]^-1_{k1+k2}[E]^-1_{k1}[F]^-1_{k2}",
        ("D, E, F shifts invertible",), ("i", "s"), _rule_r3, _idx("A"), trivial={"s": 0}),
    _mk("R4", "recursion", "lower A_i by s, multinomial form",
        "F(A_i-s) = sum_{k1+k2<=s} s!/(k1! k2! (s-k1-k2)!) [A^i]_{k1+k2}[B]_{k1}[C]_{k2} (-x)^k1 (-y)^k2"
        " F(A_i, A^i+k1+k2; B+k1, C+k2; D+k1+k2; E+k1, F+k2)[D]^-1_{k1+k2}[E]^-1_{k1}[F]^-1_{k2}",
        ("D, E, F shifts invertible", "A_i - kI invertible for k <= s"), ("i", "s"), _rule_r4, _idx("A"),
        _down("A"), trivial={"s": 0}),
    _mk("R5", "recursion", "raise B_i by s, correction-sum form",
        "F(B_i+s) = F + x[A][B^i] sum_{k=1..s} F(A+1; B_i+k, B^i+1, C; D+1; E+1, F)[D]^-1[E]^-1",
        ("D, E shifts invertible",), ("i", "s"), _up_shift("B"), _idx("B"), trivial={"s": 0}),
    _mk("R6", "recursion", "lower B_i by s, correction-sum form",
        "F(B_i-s) = F - x[A][B^i] sum_{k=0..s-1} F(A+1; B_i-k, B^i+1, C; D+1; E+1, F)[D]^-1[E]^-1",
        ("D, E shifts invertible", "B_i - kI invertible for k <= s"), ("i", "s"), _down_shift("B"), _idx("B"),
        _down("B"), trivial={"s": 0}),
    _mk("R7", "recursion", "raise B_i by s, binomial form",
        "F(B_i+s) = sum_{k=0..s} C(s,k)[A]_k[B^i]_k x^k F(A+k; B+k, C; D+k; E+k, F)[D]^-1_k[E]^-1_k",
        ("D, E shifts invertible",), ("i", "s"), _binomial_shift("B", 1), _idx("B"), trivial={"s": 0}),
    _mk("R8", "recursion", "lower B_i by s, binomial form",
        "F(B_i-s) = sum_{k=0..s} C(s,k)[A]_k[B^i]_k (-x)^k F(A+k; B_i, B^i+k, C; D+k; E+k, F)[D]^-1_k[E]^-1_k",
        ("D, E shifts invertible", "B_i - kI invertible for k <= s"), ("i", "s"), _binomial_shift("B", -1),
        _idx("B"), _down("B"), trivial={"s": 0}),
    _mk("R9", "recursion", "shift C_i by sign*s, correction-sum form",
        "F(C_i+s) = F + y[A][C^i] sum_{k=1..s} F(A+1; B, C_i+k, C^i+1; D+1; E, F+1)[D]^-1[F]^-1;"
        " F(C_i-s) = F - y[A][C^i] sum_{k=0..s-1} F(A+1; B, C_i-k, C^i+1; D+1; E, F+1)[D]^-1[F]^-1",
        ("D, F shifts invertible", "C_i - kI invertible for k <= s when lowering"), ("i", "s", "sign"),
        _rule_r9, _idx("C"), _down_signed("C"), trivial={"s": 0}),
    _mk("R10", "recursion", "shift C_i by sign*s, binomial form",
        "F(C_i+sign*s) = sum_{k=0..s} C(s,k)[A]_k[C^i]_k (sign*y)^k F(A+k; B, C'+k; D+k; E, F+k)[D]^-1_k[F]^-1_k"
        " with C'_i = C_i when lowering and C_i+k when raising",
        ("D, F shifts invertible", "C_i - kI invertible for k <= s when lowering"), ("i", "s", "sign"),
        _binomial_shift("C"), _idx("C"), _down_signed("C"), trivial={"s": 0}),
    _mk("R11", "recursion", "lower D_i by s",
        "F(D_i-s) = F + x[A][B] sum_{k=1..s} F(A+1; B+1, C; D_i+(2-k), D^i+1; E+1, F)(D_i-k)^-1(D_i-(k-1))^-1"
        " [D^i]^-1[E]^-1 + y[A][C] sum_{k=1..s} F(A+1; B, C+1; D_i+(2-k), D^i+1; E, F+1)"
        "(D_i-k)^-1(D_i-(k-1))^-1 [D^i]^-1[F]^-1",
        ("D, E, F shifts invertible", "D_i - kI invertible for k <= s"), ("i", "s"), _rule_r11, _idx("D"),
        _down("D"), trivial={"s": 0}, referee=True),
    _mk("R12", "recursion", "lower E_i (role E) or F_i (role F) by s",
        "F(E_i-s) = F + x[A][B] sum_{k=1..s} F(A+1; B+1, C; D+1; E_i+(2-k), E^i+1, F)(E_i-k)^-1(E_i-(k-1))^-1"
        " [E^i]^-1[D]^-1, and the same with (E, B, x) replaced by (F, C, y)",
        ("D, E, F shifts invertible", "E_i (F_i) - kI invertible for k <= s"), ("i", "s", "role"), _rule_r12,
        lambda kn: kn["role"], lambda kn: [(kn["role"], kn["i"], kn["s"])] if kn["s"] else [],
        trivial={"s": 0}),
    _mk("R13", "recursion", "unit step up in A_i",
        "F(A_i+1) = F + x[A^i][B] F(A+1; B+1, C; D+1; E+1, F)[D]^-1[E]^-1"
        " + y[A^i][C] F(A+1; B, C+1; D+1; E, F+1)[D]^-1[F]^-1",
        ("D, E, F shifts invertible",), ("i",), _rule_r13, _idx("A")),
    _mk("R14", "recursion", "unit step down in A_i",
        "F(A_i-1) = F - x[A^i][B] F(A_i, A^i+1; B+1, C; D+1; E+1, F)[D]^-1[E]^-1"
        " - y[A^i][C] F(A_i, A^i+1; B, C+1; D+1; E, F+1)[D]^-1[F]^-1",
        ("D, E, F shifts invertible", "A_i - I invertible"), ("i",), _rule_r14, _idx("A"),
        lambda kn: [("A", kn["i"], 1)]),
    _mk("S0", "finite_sum", "p-th y-derivative, closed form against a finite-difference oracle",
        "d^p F/dy^p = [A]_p[C]_p F(A+p; B, C+p; D+p; E, F+p)[D]^-1_p[F]^-1_p",
        ("D, F shifts invertible",), ("p",), _rule_s0, trivial={"p": 0}),
    _mk("S1", "finite_sum", "binomial expansion of a raised C_i",
        "sum_{k=0..p} C(p,k)[A]_k[C^i]_k y^k F(A+k; B, C+k; D+k; E, F+k)[D]^-1_k[F]^-1_k = F(C_i+p)",
        ("D, F shifts invertible",), ("i", "p"), _rule_s1, _idx("C"), trivial={"p": 0}),
    _mk("S2", "finite_sum", "binomial expansion of a lowered F_i",
        "sum_{k=0..p} C(p,k)[A]_k[C]_k y^k F(A+k; B, C+k; D+k; E, F+k)(F_i-p)^-1_k[D]^-1_k[F]^-1_k = F(F_i-p)",
        ("D, F shifts invertible", "F_i - kI invertible for k <= p"), ("i", "p"), _rule_s2, _idx("F"),
        _down("F", "p"), trivial={"p": 0}),
    _mk("S3", "finite_sum", "alternating sum over lowered F_i",
        "sum_{k=0..p} C(p,k)(-1)^k F(F_i-k)(I-F_i)_k((2-p)I-F_i)^-1_k"
        " = (-1)^p [A]_p[C]_p y^p F(A+p; B, C+p; D+p; E, F+p)(F_i-I)^-1_p[D]^-1_p[F]^-1_p",
        ("D, F shifts invertible", "F_i - kI invertible for k <= max(p, 1)"), ("i", "p"), _rule_s3, _idx("F"),
        lambda kn: [("F", kn["i"], max(kn["p"], 1))] if kn["p"] else [], trivial={"p": 0}),
    _mk("S4", "finite_sum", "alternating sum over raised F_i",
        "sum_{k=0..p} C(p,k)(-1)^k F(F_i+k)(F_i+(p-1)I)_k(F_i)^-1_k"
        " = [A]_p[C]_p y^p F(A+p; B, C+p; D+p; E, F_i+2p, F^i+p)[D]^-1_p[F]^-1_p(F_i+p)^-1_p",
        ("D, F shifts invertible",), ("i", "p"), _rule_s4, _idx("F"), trivial={"p": 0}),
    _mk("I1", "infinite_sum", "generating function in A_i",
        "sum_k (A_i)_k t^k/k! F(A_i+k) = (1-t)^-A_i F(x/(1-t), y/(1-t))",
        ("D, E, F shifts invertible", "|t| < 1"), ("i", "t"), _rule_i1, _idx("A"), trivial={"t": 0}),
    _mk("I2", "infinite_sum", "generating function in B_i",
        "sum_k (B_i)_k t^k/k! F(B_i+k) = (1-t)^-B_i F(x/(1-t), y)",
        ("D, E, F shifts invertible", "|t| < 1"), ("i", "t"), _rule_i2, _idx("B"), trivial={"t": 0}),
    _mk("I3", "infinite_sum", "Taylor shift in x",
        "F(x+t, y) = sum_k [A]_k[B]_k t^k/k! F(A+k; B+k, C; D+k; E+k, F)[D]^-1_k[E]^-1_k",
        ("D, E, F shifts invertible",), ("t",), _rule_i3, trivial={"t": 0}),
    _mk("I4", "infinite_sum", "terminating expansion with B_i replaced by -kI",
        "sum_k (B_i)_k (-t)^k/k! F(B_i -> -kI; (1+t)x/t, y) = (1+t)^-B_i F",
        ("D, E, F shifts invertible", "t != 0"), ("i", "t"), _rule_i4, _idx("B")),
    _mk("I5", "infinite_sum", "terminating expansion with B_i replaced by -kI, second form",
        "sum_k (B_i)_k/k! ((t+x)/(x-1))^k F(B_i -> -kI; (1+t)x/(t+x), y) = ((1-x)/(t+1))^B_i F",
        ("D, E, F shifts invertible", "t + x != 0"), ("i", "t"), _rule_i5, _idx("B")),
]

REGISTRY = {ident.id: ident for ident in _REGISTRY}
IDS = tuple(REGISTRY)


def get(identity_id: str) -> Identity:
    try:
        return REGISTRY[identity_id]
    except KeyError:
        raise ValueError(f"unknown identity id {identity_id!r}") from None


def swap_involution(p: KdFParams, x: complex, y: complex):
    """``(A; B, C; D; E, F; x, y) -> (A; C, B; D; F, E; y, x)``, which leaves F unchanged."""
    swapped = KdFParams(A=p.A, B=MatrixList.of("B", p.C.items, p.dim), C=MatrixList.of("C", p.B.items, p.dim),
                        D=p.D, E=MatrixList.of("E", p.F.items, p.dim), F=MatrixList.of("F", p.E.items, p.dim))
    return swapped, y, x


# -- instances and reports -------------------------------------------------------


def _complex_to_json(z: complex) -> dict:
    z = complex(z)
    return {"re": z.real, "im": z.imag}


def _complex_from_json(obj, field_name: str) -> complex:
    if isinstance(obj, (int, float)):
        return complex(obj)
    try:
        return complex(float(obj["re"]), float(obj.get("im", 0.0)))
    except (KeyError, TypeError, ValueError):
        raise ValueError(f"field {field_name!r} must be a number or {{\"re\", \"im\"}}") from None


def params_to_json(p: KdFParams) -> dict:
    return {role: [matrix_to_json(m) for m in getattr(p, role)] for role in ROLES}


def params_from_json(obj: dict, dim: int | None = None) -> KdFParams:
    if not isinstance(obj, dict):
        raise ValueError("field 'params' must be an object keyed by role")
    unknown = set(obj) - set(ROLES)
    if unknown:
        raise ValueError(f"field 'params' has unknown roles {sorted(unknown)}")
    lists = {}
    for role in ROLES:
        items = obj.get(role, [])
        if not isinstance(items, list):
            raise ValueError(f"field 'params.{role}' must be a list of matrix literals")
        mats = []
        for j, m in enumerate(items):
            try:
                mats.append(matrix_from_json(m))
            except ValueError as exc:
                raise ValueError(f"field 'params.{role}[{j}]': {exc}") from None
        lists[role] = mats
    try:
        return KdFParams.build(dim=dim, **lists)
    except ValueError as exc:
        raise ValueError(f"field 'params': {exc}") from None


@dataclass
class IdentityInstance:
    id: str
    params: KdFParams
    x: complex
    y: complex
    knobs: dict
    seed: int | None = None
    ctrl: SeriesControl = DEFAULT_CONTROL
    tol: float = DEFAULT_IDENTITY_TOL

    def to_json(self) -> dict:
        knobs = {k: (_complex_to_json(v) if k == "t" else v) for k, v in self.knobs.items()}
        return {"id": self.id, "seed": self.seed, "r": self.params.dim, "params": params_to_json(self.params),
                "x": _complex_to_json(self.x), "y": _complex_to_json(self.y), "knobs": knobs}

    @classmethod
    def from_json(cls, obj: dict, ctrl: SeriesControl = DEFAULT_CONTROL,
                  tol: float = DEFAULT_IDENTITY_TOL) -> "IdentityInstance":
        if not isinstance(obj, dict):
            raise ValueError("instance must be a JSON object")
        for key in ("id", "params", "x", "y"):
            if key not in obj:
                raise ValueError(f"instance is missing field {key!r}")
        knobs = dict(obj.get("knobs", {}))
        if "t" in knobs:
            knobs["t"] = _complex_from_json(knobs["t"], "knobs.t")
        return cls(str(obj["id"]), params_from_json(obj["params"], obj.get("r")),
                   _complex_from_json(obj["x"], "x"), _complex_from_json(obj["y"], "y"), knobs,
                   obj.get("seed"), ctrl, tol)


def _finite_or_none(v: float):
    return v if math.isfinite(v) else None


@dataclass
class IdentityReport:
    id: str
    seed: int | None
    r: int
    knobs: dict
    abs_residual: float
    rel_residual: float
    passed: bool
    lhs_terms: int
    rhs_terms: int
    status: str
    error: str | None = None
    lhs: np.ndarray | None = field(default=None, repr=False)
    rhs: np.ndarray | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        knobs = {k: (_complex_to_json(v) if k == "t" else v) for k, v in self.knobs.items()}
        out = {"id": self.id, "seed": self.seed, "r": self.r, "knobs": knobs,
               "abs_residual": _finite_or_none(self.abs_residual),
               "rel_residual": _finite_or_none(self.rel_residual), "pass": self.passed,
               "lhs_terms": self.lhs_terms, "rhs_terms": self.rhs_terms, "status": self.status}
        if self.error is not None:
            out["error"] = self.error
        return out


def _check_knobs(ident: Identity, p: KdFParams, kn: dict) -> None:
    missing = [k for k in ident.knobs if k not in kn]
    extra = [k for k in kn if k not in ident.knobs]
    if missing or extra:
        raise ValueError(f"{ident.id} takes knobs {list(ident.knobs)}; missing {missing}, unexpected {extra}")
    for k in ("s", "p"):
        if k in kn and (not isinstance(kn[k], (int, np.integer)) or kn[k] < 0):
            raise ValueError(f"knob {k!r} must be a non-negative integer")
    if "sign" in kn and kn["sign"] not in (1, -1):
        raise ValueError("knob 'sign' must be +1 or -1")
    if "role" in kn and kn["role"] not in ("E", "F"):
        raise ValueError("knob 'role' must be 'E' or 'F'")
    role = ident.index_role(kn)
    if role is not None:
        n = len(getattr(p, role))
        if not isinstance(kn.get("i"), (int, np.integer)) or not 0 <= kn["i"] < n:
            raise ValueError(f"knob 'i' must index list {role} of length {n}")
    if "t" in kn:
        t = complex(kn["t"])
        kn["t"] = t
        if abs(t) >= 1:
            raise ValueError("knob 't' must satisfy |t| < 1")


def check_hypotheses(ident: Identity, p: KdFParams, knobs: dict) -> None:
    """Raise :class:`HypothesisViolation` for the first failing clause."""
    bad = validate(p, ident.needs(knobs)).first_failure()
    if bad is not None:
        raise HypothesisViolation(bad.name, bad.defect)


def check(inst: IdentityInstance) -> IdentityReport:
    """Evaluate both sides of one instance.

    Raises :class:`HypothesisViolation` before any series is summed if a
    clause fails, and lets series errors (``NotConverged``, ``SingularShift``)
    propagate.
    """
    ident = get(inst.id)
    knobs = dict(inst.knobs)
    _check_knobs(ident, inst.params, knobs)
    check_hypotheses(ident, inst.params, knobs)
    cache: dict = {}
    left, right = _Side(inst.ctrl, cache), _Side(inst.ctrl, cache)
    lhs, rhs = ident.rule(left, right, inst.params, complex(inst.x), complex(inst.y), knobs)
    diff = fro(lhs - rhs)
    rel = diff / (1.0 + max(fro(lhs), fro(rhs)))
    ok = bool(rel <= inst.tol)
    status = "pass" if ok else ("finding" if ident.referee else "fail")
    return IdentityReport(inst.id, inst.seed, inst.params.dim, inst.knobs, float(diff), float(rel), ok,
                          left.terms, right.terms, status, lhs=lhs, rhs=rhs)


def _check_kind(kind: str):
    def run(inst: IdentityInstance) -> IdentityReport:
        if get(inst.id).kind != kind:
            raise ValueError(f"{inst.id} is not a {kind.replace('_', ' ')} identity")
        return check(inst)
    run.__name__ = f"check_{kind}"
    run.__doc__ = f":func:`check` restricted to {kind.replace('_', ' ')} identities."
    return run


check_recursion = _check_kind("recursion")
check_finite_sum = _check_kind("finite_sum")
check_infinite_sum = _check_kind("infinite_sum")


def run_instance(inst: IdentityInstance) -> IdentityReport:
    """Like :func:`check` but never raises: errors become ``status == "error"``."""
    try:
        return check(inst)
    except (KdfError, ValueError, ArithmeticError) as exc:
        return IdentityReport(inst.id, inst.seed, inst.params.dim, inst.knobs, math.nan, math.nan, False,
                              0, 0, "error", f"{type(exc).__name__}: {exc}")
