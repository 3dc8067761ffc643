"""Matrix shifted factorials and the bracket products built from them.

``(A)_n = A (A+I) ... (A+(n-1)I)`` is accumulated left to right, and
``[A+kI]_s`` is the product of ``(A_i+kI)_s`` over a parameter list in list
order.  :class:`PochTable` is the incremental, rescaled version used inside
series evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import SingularMatrix, SingularShift
from .matrix import as_matrix, commutator_defect, fro, identity, inverse

ROLES = ("A", "B", "C", "D", "E", "F")


@dataclass(frozen=True)
class MatrixList:
    """An ordered parameter list ``X_1..X_k`` of one role, all of dimension ``dim``."""

    items: tuple
    label: str
    dim: int

    @classmethod
    def of(cls, label: str, items: Iterable, dim: int | None = None) -> "MatrixList":
        mats = tuple(as_matrix(m) for m in items)
        if dim is None:
            if not mats:
                raise ValueError(f"empty list {label} needs an explicit dim")
            dim = mats[0].shape[0]
        for j, m in enumerate(mats):
            if m.shape[0] != dim:
                raise ValueError(f"{label}[{j}] has dim {m.shape[0]}, expected {dim}")
            m.setflags(write=False)
        return cls(mats, label, int(dim))

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, j):
        return self.items[j]

    def shifted(self, k: float) -> "MatrixList":
        """Every item moved by ``k I``."""
        if k == 0:
            return self
        eye = identity(self.dim)
        return MatrixList.of(self.label, [m + k * eye for m in self.items], self.dim)

    def replace(self, j: int, m: np.ndarray) -> "MatrixList":
        items = list(self.items)
        items[j] = m
        return MatrixList.of(self.label, items, self.dim)

    def shift_item(self, j: int, k: float) -> "MatrixList":
        if k == 0:
            return self
        return self.replace(j, self.items[j] + k * identity(self.dim))

    def without(self, j: int) -> "MatrixList":
        return MatrixList.of(self.label, self.items[:j] + self.items[j + 1 :], self.dim)

    def max_commutation_defect(self) -> float:
        worst = 0.0
        for a in range(len(self.items)):
            for b in range(a + 1, len(self.items)):
                worst = max(worst, commutator_defect(self.items[a], self.items[b]))
        return worst


def poch(a: np.ndarray, n: int) -> np.ndarray:
    """``(A)_n`` with ``(A)_0 = I``.

    An exactly-zero factor (``A = -kI``, ``n > k``) short-circuits to the zero
    matrix.
    """
    a = np.asarray(a, dtype=complex)
    r = a.shape[0]
    eye = identity(r)
    out = eye
    for k in range(n):
        f = a + k * eye
        if not f.any():
            return np.zeros((r, r), dtype=complex)
        out = out @ f
    return out


def poch_inv(a: np.ndarray, n: int) -> np.ndarray:
    """``((A)_n)^{-1} = (A+(n-1)I)^{-1} ... A^{-1}``.

    Raises :class:`SingularShift` naming the first ``k`` with ``A + kI``
    singular.
    """
    a = np.asarray(a, dtype=complex)
    eye = identity(a.shape[0])
    out = eye
    for k in range(n):
        try:
            out = inverse(a + k * eye) @ out
        except SingularMatrix:
            raise SingularShift(k) from None
    return out


def list_poch(items: MatrixList | Sequence[np.ndarray], n: int, inverted: bool = False,
              dim: int | None = None) -> np.ndarray:
    """``prod_i (X_i)_n`` (or ``prod_i (X_i)_n^{-1}``) in list order; empty list gives I."""
    label = getattr(items, "label", None)
    if dim is None:
        dim = getattr(items, "dim", None)
    if dim is None:
        if not len(items):
            raise ValueError("empty list needs an explicit dim")
        dim = np.asarray(items[0]).shape[0]
    out = identity(dim)
    for j, m in enumerate(items):
        if inverted:
            try:
                f = poch_inv(m, n)
            except SingularShift as exc:
                raise exc.located(label, j) from None
        else:
            f = poch(m, n)
        out = out @ f
    return out


# -- incremental tables for series evaluation -----------------------------------

_CHUNK = 16


class PochTable:
    """Lazily grown ``(X)_n`` or ``(X)_n^{-1}`` for ``n = 0, 1, ...``.

    Entry ``n`` is stored as ``exp(logs[n]) * mats[n]`` with ``mats[n]`` of unit
    Frobenius norm (entry 0 is the exact identity), so long tables neither
    overflow nor underflow.  Each entry comes from the previous one by a
    single factor and is never recomputed.
    """

    def __init__(self, base: np.ndarray, inverted: bool, role: str | None = None,
                 index: int | None = None, capacity: int = 64):
        self.base = np.asarray(base, dtype=complex)
        self.inverted = inverted
        self.role = role
        self.index = index
        r = self.base.shape[0]
        self.eye = identity(r)
        self.mats = np.zeros((capacity, r, r), dtype=complex)
        self.logs = np.zeros(capacity)
        self.mats[0] = self.eye
        self.size = 1
        self._zero = False
        self._shift_inv = {}
        self._bad_shift: int | None = None

    def _grow(self, need: int) -> None:
        cap = self.mats.shape[0]
        if need <= cap:
            return
        new = max(need, 2 * cap)
        mats = np.zeros((new,) + self.mats.shape[1:], dtype=complex)
        mats[:cap] = self.mats
        logs = np.zeros(new)
        logs[:cap] = self.logs
        self.mats, self.logs = mats, logs

    def _inverse_shift(self, k: int) -> np.ndarray:
        if k in self._shift_inv:
            return self._shift_inv[k]
        if self._bad_shift is not None and k >= self._bad_shift:
            raise SingularShift(self._bad_shift, self.role, self.index)
        ks = np.arange(k, k + _CHUNK)
        stack = self.base[None] + ks[:, None, None] * self.eye
        try:
            invs = inverse(stack)
        except SingularMatrix:
            invs = []
            for j, kk in enumerate(ks):
                try:
                    invs.append(inverse(stack[j]))
                except SingularMatrix:
                    self._bad_shift = int(kk)
                    break
        for kk, inv in zip(ks, invs):
            self._shift_inv[int(kk)] = inv
        if k not in self._shift_inv:
            raise SingularShift(self._bad_shift, self.role, self.index)
        return self._shift_inv[k]

    def ensure(self, n: int) -> None:
        """Make entries ``0..n`` available."""
        if self.size > n:
            return
        self._grow(n + 1)
        while self.size <= n:
            k = self.size - 1
            prev = self.mats[k]
            if self._zero:
                nxt = prev
            elif self.inverted:
                nxt = self._inverse_shift(k) @ prev
            else:
                f = self.base + k * self.eye
                nxt = prev @ f if f.any() else np.zeros_like(prev)
            nrm = fro(nxt)
            if nrm == 0.0:
                self._zero = True
                self.mats[self.size] = 0.0
                self.logs[self.size] = 0.0
            else:
                self.mats[self.size] = nxt / nrm
                self.logs[self.size] = self.logs[k] + math.log(nrm)
            self.size += 1

    def value(self, n: int) -> np.ndarray:
        self.ensure(n)
        return math.exp(self.logs[n]) * self.mats[n]


class ListTable:
    """Rescaled ``[X]_n`` (product over a list, possibly inverted) for ``n = 0, 1, ...``."""

    def __init__(self, items: MatrixList, inverted: bool, cache: dict | None = None):
        self.dim = items.dim
        self.label = items.label
        self.inverted = inverted
        self.empty = len(items) == 0
        cache = {} if cache is None else cache
        self.tables = []
        for j, m in enumerate(items):
            key = (m.tobytes(), inverted, items.label, j)
            if key not in cache:
                cache[key] = PochTable(m, inverted, items.label, j)
            self.tables.append(cache[key])
        r = self.dim
        self.mats = np.zeros((64, r, r), dtype=complex)
        self.logs = np.zeros(64)
        self.mats[0] = identity(r)
        self.size = 1

    def ensure(self, n: int) -> None:
        if self.empty or self.size > n:
            return
        if n >= self.mats.shape[0]:
            new = max(n + 1, 2 * self.mats.shape[0])
            mats = np.zeros((new,) + self.mats.shape[1:], dtype=complex)
            mats[: self.size] = self.mats[: self.size]
            logs = np.zeros(new)
            logs[: self.size] = self.logs[: self.size]
            self.mats, self.logs = mats, logs
        for t in self.tables:
            t.ensure(n)
        for idx in range(self.size, n + 1):
            prod = self.tables[0].mats[idx]
            log = self.tables[0].logs[idx]
            for t in self.tables[1:]:
                prod = prod @ t.mats[idx]
                log += t.logs[idx]
            nrm = fro(prod)
            if nrm == 0.0:
                self.mats[idx] = 0.0
                self.logs[idx] = 0.0
            else:
                self.mats[idx] = prod / nrm
                self.logs[idx] = log + math.log(nrm)
        self.size = n + 1

    def value(self, n: int) -> np.ndarray:
        """``[X]_n`` (or its inverse) at natural scale; identity for an empty list."""
        if self.empty:
            return identity(self.dim)
        self.ensure(n)
        return math.exp(self.logs[n]) * self.mats[n]
