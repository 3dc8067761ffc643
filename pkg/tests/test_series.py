from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kdfmat import (DomainViolation, GenSpec, KdFParams, NotConverged, SeriesControl, appell, deriv_y,
                    gauss_2f1, gen_family, gen_point, kdf_eval, one_f0, one_f0_series, swap_involution)
from kdfmat.campaign import balanced
from oracles import matrix_kdf_dy, rel, scalar_kdf

# high-precision reference values computed once with an arbitrary-precision library
GAUSS_1_1_2_HALF = 1.386294361119890618834464242916353136151
F2_UNIT_POINT2 = 1.263357696078529982569092167838451111812
F2_SAMPLE = 1.603871596694436527044804113132637179363
KDF_111_111_015 = 1.214409014948484874656444941009240486029

SCALARS = dict(A=[1.3], B=[0.7], C=[1.1], D=[1.9], E=[1.4], F=[0.8])


def _scalar_params(**roles):
    return KdFParams.build(dim=1, **{k: [np.array([[v]]) for v in vals] for k, vals in roles.items()})


def _family(seed, shape, r=2):
    return gen_family(GenSpec(r=r, shape=shape, seed=seed)).params


def test_gauss_examples():
    a, b, c = (np.array([[v]]) for v in (1.0, 1.0, 2.0))
    assert abs(gauss_2f1(a, b, c, 0.5).value[0, 0] - GAUSS_1_1_2_HALF) <= 1e-10 * GAUSS_1_1_2_HALF
    tight = gauss_2f1(a, b, c, 0.5, SeriesControl(tol=1e-13)).value[0, 0]
    assert abs(tight - GAUSS_1_1_2_HALF) <= 1e-13
    m = np.array([[1.2, 0.3], [0.1, 0.9]])
    np.testing.assert_array_equal(gauss_2f1(m, m, m, 0.0).value, np.eye(2))
    z = np.zeros((2, 2))
    np.testing.assert_array_equal(gauss_2f1(z, z, m, 0.7).value, np.eye(2))


def test_gauss_rejects_outside_disc():
    one = np.eye(1)
    with pytest.raises(DomainViolation):
        gauss_2f1(one, one, 2 * one, 1.0)


@pytest.mark.parametrize("kind", ["F1", "F2", "F3", "F4"])
def test_appell_origin_is_identity(kind):
    from kdfmat.series import APPELL_ROLES

    p = _family(3, (len(APPELL_ROLES[kind]), 0, 0, 0, 0, 0))
    params = {name: p.A[j] for j, name in enumerate(APPELL_ROLES[kind])}
    np.testing.assert_array_equal(appell(kind, params, 0.0, 0.0).value, np.eye(2))


def test_appell_f2_values():
    one = {k: np.array([[v]]) for k, v in {"A": 1, "B": 1, "B'": 1, "C": 2, "C'": 2}.items()}
    assert abs(appell("F2", one, 0.2, 0.2).value[0, 0] - F2_UNIT_POINT2) <= 1e-10 * F2_UNIT_POINT2
    tight = appell("F2", one, 0.2, 0.2, SeriesControl(tol=1e-13)).value[0, 0]
    assert abs(tight - F2_UNIT_POINT2) <= 2e-13
    sample = {k: np.array([[v]]) for k, v in {"A": 1.3, "B": 0.7, "B'": 1.1, "C": 1.4, "C'": 0.8}.items()}
    assert abs(appell("F2", sample, 0.2, 0.15).value[0, 0] - F2_SAMPLE) <= 1e-10 * F2_SAMPLE


def test_appell_f1_at_y0_is_gauss():
    p = {k: np.array([[v]]) for k, v in {"A": 1.3, "B": 0.7, "B'": 1.1, "C": 1.9}.items()}
    f1 = appell("F1", p, 0.4, 0.0).value
    g = gauss_2f1(p["A"], p["B"], p["C"], 0.4).value
    assert rel(f1, g) <= 1e-10


def test_appell_errors():
    p = {k: np.eye(1) for k in ("A", "B", "B'", "C", "C'")}
    with pytest.raises(DomainViolation):
        appell("F2", p, 0.6, 0.5)
    with pytest.raises(ValueError, match="missing"):
        appell("F3", p, 0.1, 0.1)
    with pytest.raises(ValueError):
        appell("F5", p, 0.1, 0.1)


def test_kdf_origin_is_identity():
    p = _family(11, (2, 1, 1, 1, 2, 1))
    np.testing.assert_array_equal(kdf_eval(p, 0.0, 0.0).value, np.eye(2))


def test_kdf_scalar_frozen_value():
    p = _scalar_params(**SCALARS)
    got = kdf_eval(p, 0.15, 0.15).value[0, 0]
    assert abs(got - KDF_111_111_015) <= 1e-10 * KDF_111_111_015
    assert abs(scalar_kdf(*SCALARS.values(), 0.15, 0.15) - KDF_111_111_015) <= 1e-13


@given(st.integers(0, 10_000), st.tuples(*[st.integers(0, 2)] * 6))
def test_kdf_scalar_against_brute_force(seed, shape):
    if not balanced(shape):
        return
    spec = GenSpec(r=1, shape=shape, seed=seed)
    p = gen_family(spec).params
    x, y = gen_point(spec, "kdf_safe")
    want = scalar_kdf(*([complex(m[0, 0]) for m in getattr(p, role)] for role in "ABCDEF"), x, y)
    assert rel(kdf_eval(p, x, y).value, want) <= 1e-10


@given(st.integers(0, 10_000), st.integers(1, 3))
def test_kdf_f2_shape_equals_appell(seed, r):
    spec = GenSpec(r=r, shape=(1, 1, 1, 0, 1, 1), seed=seed)
    p = gen_family(spec).params
    x, y = gen_point(spec, "F2", radius=0.5)
    want = appell("F2", {"A": p.A[0], "B": p.B[0], "B'": p.C[0], "C": p.E[0], "C'": p.F[0]}, x, y).value
    assert rel(kdf_eval(p, x, y).value, want) <= 1e-10


@given(st.integers(0, 10_000), st.integers(1, 3))
def test_swap_symmetry(seed, r):
    spec = GenSpec(r=r, shape=(1, 2, 1, 1, 1, 2), seed=seed)
    p = gen_family(spec).params
    x, y = gen_point(spec, "kdf_safe")
    q, xs, ys = swap_involution(p, x, y)
    assert rel(kdf_eval(q, xs, ys).value, kdf_eval(p, x, y).value) <= 1e-10


def test_truncation_soundness():
    p = _family(5, (1, 1, 1, 1, 1, 1), r=3)
    loose = SeriesControl(tol=1e-8)
    a = kdf_eval(p, 0.3, 0.15, loose).value
    b = kdf_eval(p, 0.3, 0.15, SeriesControl(tol=1e-13)).value
    assert np.linalg.norm(a - b) <= 10 * loose.tol * (1 + np.linalg.norm(b))


def test_not_converged_carries_partial_result():
    p = _family(5, (1, 1, 1, 1, 1, 1))
    with pytest.raises(NotConverged) as info:
        kdf_eval(p, 0.3, 0.2, SeriesControl(max_diagonal=4))
    res = info.value.result
    assert not res.converged and res.terms_used == 15 and res.value.shape == (2, 2)


def test_diagnostics_and_json():
    p = _family(5, (1, 1, 1, 1, 1, 1))
    res = kdf_eval(p, 0.1, 0.1, SeriesControl(collect_diagnostics=True))
    assert res.converged and len(res.diagonal_norms) >= 3
    obj = res.to_json()
    assert obj["value"]["dim"] == 2 and "diagonal_norms" in obj


def test_series_control_validation():
    with pytest.raises(ValueError):
        SeriesControl(tol=1e-14)
    with pytest.raises(ValueError):
        SeriesControl(max_diagonal=0)


def test_one_f0_examples():
    a = np.array([[1.2, 0.3], [0.1, 0.9]])
    np.testing.assert_allclose(one_f0(a, 0.0), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(one_f0(np.eye(2), 0.5), 2 * np.eye(2), rtol=1e-14)
    closed = one_f0(np.diag([1.0, 2.0]), 0.3)
    np.testing.assert_allclose(np.diag(closed), [1 / 0.7, 1 / 0.49], rtol=1e-14)
    assert rel(closed, one_f0_series(np.diag([1.0, 2.0]), 0.3).value) <= 1e-10


def test_deriv_y_order_zero_is_unchanged():
    p = _family(8, (1, 1, 2, 1, 1, 1))
    np.testing.assert_array_equal(deriv_y(p, 0.2, 0.1, 0).value, kdf_eval(p, 0.2, 0.1).value)


def test_deriv_y_first_order_central_difference():
    p = _scalar_params(A=[1.3], B=[0.7], C=[1.1], E=[1.4], F=[0.8])
    h, fine = 1e-5, SeriesControl(tol=1e-13)
    fd = (kdf_eval(p, 0.1, 0.1 + h, fine).value - kdf_eval(p, 0.1, 0.1 - h, fine).value) / (2 * h)
    assert rel(deriv_y(p, 0.1, 0.1, 1).value, fd) <= 1e-6


def test_deriv_y_second_order_against_term_by_term():
    p = _family(42, (1, 1, 1, 1, 1, 1))
    want = matrix_kdf_dy(p, 0.1, 0.1, 2)
    assert rel(deriv_y(p, 0.1, 0.1, 2).value, want) <= 1e-8


def test_deriv_y_rejects_negative_order():
    with pytest.raises(ValueError):
        deriv_y(_family(1, (1, 0, 0, 0, 0, 0)), 0.1, 0.1, -1)
