"""Small dense complex matrix kernel.

Matrices are plain ``numpy`` arrays of shape ``(r, r)`` and dtype
``complex128``.  Everything here is written for tiny dimensions (r <= 8):
the eigenvalue solver, inverse and exponential are straightforward textbook
algorithms with no blocking or workspace reuse.
"""

from __future__ import annotations

import cmath
import math
from typing import Any, Mapping

import numpy as np

from .errors import BranchCut, ConvergenceFailure, SingularMatrix

EPS = float(np.finfo(float).eps)
PIVOT_RTOL = 1e-12
TAYLOR_ORDER = 18
SQUARING_TARGET = 0.5


def as_matrix(obj: Any) -> np.ndarray:
    """Coerce ``obj`` to a finite square complex matrix (copying it)."""
    m = np.array(obj, dtype=complex)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def identity(r: int) -> np.ndarray:
    return np.eye(r, dtype=complex)


def fro(m: np.ndarray) -> float:
    """Frobenius norm."""
    return math.sqrt(np.vdot(m, m).real)


def commutator_defect(a: np.ndarray, b: np.ndarray) -> float:
    """``||ab - ba||_F / (||a||_F ||b||_F)``, zero when either is zero."""
    scale = fro(a) * fro(b)
    if scale == 0.0:
        return 0.0
    return fro(a @ b - b @ a) / scale


# -- JSON literal --------------------------------------------------------------


def matrix_to_json(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=complex)
    flat = m.reshape(-1)
    return {
        "dim": int(m.shape[0]),
        "re": [float(v) for v in flat.real],
        "im": [float(v) for v in flat.imag],
    }


def matrix_from_json(obj: Mapping[str, Any]) -> np.ndarray:
    """Parse ``{"dim": r, "re": [...], "im": [...]}`` (row-major, ``im`` optional)."""
    try:
        r = int(obj["dim"])
        re = obj["re"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"matrix literal is missing field {exc}") from None
    im = obj.get("im", [0.0] * len(re))
    if r < 1:
        raise ValueError("matrix literal field 'dim' must be positive")
    if len(re) != r * r:
        raise ValueError(f"matrix literal field 're' must have {r * r} entries")
    if len(im) != r * r:
        raise ValueError(f"matrix literal field 'im' must have {r * r} entries")
    m = (np.asarray(re, dtype=float) + 1j * np.asarray(im, dtype=float)).reshape(r, r)
    return as_matrix(m)


# -- inverse -------------------------------------------------------------------


def inverse(m: np.ndarray) -> np.ndarray:
    """Gauss-Jordan inverse with partial pivoting.

    Accepts a single ``(r, r)`` matrix or a stack ``(b, r, r)``.  Raises
    :class:`SingularMatrix` when a pivot is smaller than ``1e-12 * ||m||_F``;
    for stacks the exception's ``index`` is the offending batch position.
    """
    a = np.array(m, dtype=complex)
    single = a.ndim == 2
    if single:
        a = a[None]
    b, r, _ = a.shape
    threshold = PIVOT_RTOL * np.sqrt(np.sum(a.real**2 + a.imag**2, axis=(1, 2)))
    inv = np.broadcast_to(identity(r), a.shape).copy()
    rows = np.arange(b)
    for col in range(r):
        piv = col + np.argmax(np.abs(a[:, col:, col]), axis=1)
        pval = np.abs(a[rows, piv, col])
        bad = (pval < threshold) | (pval == 0.0)
        if bad.any():
            j = int(np.argmax(bad))
            exc = SingularMatrix(float(pval[j]), float(threshold[j]))
            exc.index = None if single else j
            raise exc
        for arr in (a, inv):
            top = arr[rows, col].copy()
            arr[rows, col] = arr[rows, piv]
            arr[rows, piv] = top
        p = a[:, col, col][:, None].copy()
        a[:, col] /= p
        inv[:, col] /= p
        f = a[:, :, col].copy()
        f[:, col] = 0.0
        a -= f[:, :, None] * a[:, col][:, None, :]
        inv -= f[:, :, None] * inv[:, col][:, None, :]
    return inv[0] if single else inv


# -- spectrum ------------------------------------------------------------------


def hessenberg(m: np.ndarray) -> np.ndarray:
    """Unitary similarity reduction to upper Hessenberg form (Householder)."""
    h = np.array(m, dtype=complex)
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1 :, k]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x.copy()
        v[0] += phase * alpha
        v /= np.linalg.norm(v)
        h[k + 1 :, :] -= 2.0 * np.outer(v, v.conj() @ h[k + 1 :, :])
        h[:, k + 1 :] -= 2.0 * np.outer(h[:, k + 1 :] @ v, v.conj())
        h[k + 2 :, k] = 0.0
    return h


def _wilkinson_shift(a, b, c, d) -> complex:
    half = (a - d) / 2
    disc = cmath.sqrt(half * half + b * c)
    mu1 = (a + d) / 2 + disc
    mu2 = (a + d) / 2 - disc
    return mu1 if abs(mu1 - d) <= abs(mu2 - d) else mu2


def _qr_step(block: np.ndarray, mu: complex) -> None:
    """One shifted QR sweep ``B - mu I = QR, B <- RQ + mu I`` in place."""
    p = block.shape[0]
    block[np.diag_indices(p)] -= mu
    rots = []
    for k in range(p - 1):
        a, b = block[k, k], block[k + 1, k]
        rr = math.hypot(abs(a), abs(b))
        if rr == 0.0:
            g = np.eye(2, dtype=complex)
        else:
            c, s = a / rr, b / rr
            g = np.array([[c.conjugate(), s.conjugate()], [-s, c]])
        block[k : k + 2, k:] = g @ block[k : k + 2, k:]
        block[k + 1, k] = 0.0
        rots.append(g)
    for k, g in enumerate(rots):
        block[: k + 2, k : k + 2] = block[: k + 2, k : k + 2] @ g.conj().T
    block[np.diag_indices(p)] += mu


def spectrum(m: np.ndarray, max_iter: int | None = None) -> np.ndarray:
    """Eigenvalues of ``m`` by shifted complex QR on its Hessenberg form.

    Returns a 1-D complex array of length r (with multiplicity, unordered).
    """
    h = hessenberg(as_matrix(m))
    n = h.shape[0]
    eig = np.zeros(n, dtype=complex)
    budget = max_iter if max_iter is not None else 60 * n
    norm = fro(h)
    hi = n - 1
    its = 0
    total = 0
    while hi >= 0:
        if hi == 0:
            eig[0] = h[0, 0]
            break
        lo = hi
        while lo > 0:
            scale = abs(h[lo - 1, lo - 1]) + abs(h[lo, lo])
            if scale == 0.0:
                scale = norm
            if abs(h[lo, lo - 1]) <= EPS * scale:
                h[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            eig[hi] = h[hi, hi]
            hi -= 1
            its = 0
            continue
        if total >= budget:
            raise ConvergenceFailure(f"QR iteration did not converge in {budget} sweeps")
        if its and its % 10 == 0:
            mu = h[hi, hi] + 0.75 * abs(h[hi, hi - 1])
        else:
            mu = _wilkinson_shift(h[hi - 1, hi - 1], h[hi - 1, hi], h[hi, hi - 1], h[hi, hi])
        block = h[lo : hi + 1, lo : hi + 1]
        _qr_step(block, mu)
        its += 1
        total += 1
    return eig


def is_positive_stable(m: np.ndarray) -> bool:
    return bool(np.min(spectrum(m).real) > 0.0)


# -- exponential and scalar-base powers ----------------------------------------


def expm(x: np.ndarray) -> np.ndarray:
    """Matrix exponential: order-18 Taylor polynomial with scaling and squaring."""
    x = np.asarray(x, dtype=complex)
    r = x.shape[0]
    norm1 = float(np.max(np.sum(np.abs(x), axis=0))) if r else 0.0
    s = 0
    if norm1 > SQUARING_TARGET:
        s = int(math.ceil(math.log2(norm1 / SQUARING_TARGET)))
    y = x / (2.0**s)
    # Horner evaluation of sum_{k<=18} y^k / k!
    out = identity(r)
    for k in range(TAYLOR_ORDER, 0, -1):
        out = identity(r) + (y @ out) / k
    for _ in range(s):
        out = out @ out
    return out


def scalar_power(c: complex, a: np.ndarray) -> np.ndarray:
    """``c**A = exp(log(c) A)`` with the principal logarithm of ``c``."""
    c = complex(c)
    if c.imag == 0.0 and c.real <= 0.0:
        raise BranchCut(f"scalar base {c} lies on the branch cut (-inf, 0]")
    return expm(cmath.log(c) * np.asarray(a, dtype=complex))

