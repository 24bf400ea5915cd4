import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import jacobi_polar, jacobi_svd
from orthocut.errors import InputError, ShapeError
from orthocut.linalg import (
    RngSeed,
    adjoint,
    gaussian_matrix,
    haar_unitary,
    is_psd,
    polar,
    singular_values,
    stiefel_residual,
    svd_thin,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def well_conditioned(a, limit=1e6):
    s = np.linalg.svd(a, compute_uv=False)
    return s[0] > 1e-100 and s[-1] * limit > s[0]


@st.composite
def wide_matrices(draw, complex_=None):
    d = draw(st.integers(1, 4))
    r = draw(st.integers(d, 7))
    re = draw(arrays(float, (d, r), elements=finite))
    if complex_ is None:
        complex_ = draw(st.booleans())
    if complex_:
        return re + 1j * draw(arrays(float, (d, r), elements=finite))
    return re


@settings(max_examples=150, deadline=None)
@given(wide_matrices())
def test_svd_matches_jacobi_oracle(a):
    res = svd_thin(a)
    _, s_ref, _ = jacobi_svd(a)
    scale = max(1.0, float(np.abs(a).max()))
    assert np.allclose(res.singulars, s_ref, atol=1e-10 * scale)
    assert np.allclose((res.left * res.singulars) @ adjoint(res.right), a, atol=1e-10 * scale)
    assert np.all(np.diff(res.singulars) <= 1e-12 * scale)


@settings(max_examples=150, deadline=None)
@given(wide_matrices())
def test_polar_rows_orthonormal(a):
    p, flag = polar(a, return_flag=True)
    d = a.shape[0]
    assert np.abs(p @ adjoint(p) - np.eye(d)).max() < 1e-10
    if well_conditioned(a):
        assert np.allclose(p, jacobi_polar(a), atol=1e-7)


@settings(max_examples=100, deadline=None)
@given(wide_matrices(), st.integers(0, 2**32 - 1))
def test_polar_is_nearest_and_equivariant(a, seed):
    p, flag = polar(a, return_flag=True)
    if flag or not well_conditioned(a):
        return
    d, r = a.shape
    field = "complex" if np.iscomplexobj(a) else "real"
    # Re tr(P A*) is maximal over row-orthonormal matrices
    q = polar(gaussian_matrix(d, r, 1.0, field, seed))
    assert np.real(np.trace(p @ adjoint(a))) >= np.real(np.trace(q @ adjoint(a))) - 1e-9
    # P A* = U S U* is Hermitian PSD
    h = p @ adjoint(a)
    assert np.allclose(h, adjoint(h), atol=1e-8 * max(1, np.abs(a).max()))
    u = haar_unitary(d, field, seed)
    assert np.allclose(polar(u @ a), u @ p, atol=1e-7)


def test_polar_fixes_row_orthonormal():
    x = polar(gaussian_matrix(3, 7, 1.0, "complex", 4))
    assert np.allclose(polar(x), x, atol=1e-12)


def test_polar_scalar_case_and_zero():
    a = np.array([[3.0, -4.0]])
    assert np.array_equal(polar(a), a / 5.0)
    p, flag = polar(np.zeros((1, 3)), return_flag=True)
    assert flag and np.array_equal(p, [[1.0, 0.0, 0.0]])
    assert polar(np.array([[-2.5]]))[0, 0] == -1.0


def test_polar_rank_deficient_flagged_but_feasible():
    a = np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    p, flag = polar(a, return_flag=True)
    assert flag
    assert stiefel_residual(p[None]) < 1e-12


def test_polar_stack():
    a = gaussian_matrix(2, 5, 1.0, "real", 1, batch=(3, 4))
    p = polar(a)
    assert p.shape == (3, 4, 2, 5)
    assert np.allclose(p[1, 2], polar(a[1, 2]))


@pytest.mark.parametrize("bad", [np.ones((3, 2)), np.ones(4), np.array([[np.nan, 1.0]])])
def test_wide_validation(bad):
    with pytest.raises(InputError):
        svd_thin(bad)


def test_tall_is_shape_error():
    with pytest.raises(ShapeError):
        polar(np.ones((3, 2)))


@pytest.mark.parametrize("field", ["real", "complex"])
def test_gaussian_moments(field):
    g = gaussian_matrix(4, 5, 0.3, field, RngSeed(9), batch=40_000)
    n = g.size
    se = np.sqrt(2 * 0.3 ** 2 / n) * 4
    assert abs(np.mean(np.abs(g) ** 2) - 0.3) < se
    assert abs(np.mean(g)) < 4 * np.sqrt(0.3 / n)
    if field == "complex":
        assert abs(np.mean(g.real ** 2) - 0.15) < se
        assert abs(np.mean(g.imag ** 2) - 0.15) < se
        # circular: E g^2 = 0
        assert abs(np.mean(g ** 2)) < 4 * 0.3 / np.sqrt(n)
    else:
        assert g.dtype == np.float64


def test_seed_streams():
    a = gaussian_matrix(2, 2, 1.0, "real", RngSeed(5, 1))
    b = gaussian_matrix(2, 2, 1.0, "real", RngSeed(5, 1))
    c = gaussian_matrix(2, 2, 1.0, "real", RngSeed(5, 2))
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    s = RngSeed(3)
    assert s.spawn(0) != s.spawn(1) and s.spawn(4) == RngSeed(3).spawn(4)
    with pytest.raises(InputError):
        RngSeed(-1)


def test_singular_values_batched():
    g = gaussian_matrix(3, 3, 1.0, "complex", 2, batch=5)
    sv = singular_values(g)
    for k in range(5):
        assert np.allclose(sv[k], jacobi_svd(g[k])[1])


def test_is_psd():
    ok, lam = is_psd(np.diag([1.0, 0.0, 2.0]))
    assert ok and abs(lam) < 1e-15
    assert not is_psd(np.diag([1.0, -1e-3]))[0]
    with pytest.raises(InputError):
        is_psd(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_haar_is_unitary():
    u = haar_unitary(4, "complex", 3)
    assert np.allclose(u @ adjoint(u), np.eye(4))
