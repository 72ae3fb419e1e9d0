import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irs_robust import affine as af
from irs_robust.conic_builder import ProgramBuilder, Status, embed_hermitian_lmi, schur_norm_lmi, solve

from conftest import crand


def test_lp_and_equality():
    bld = ProgramBuilder()
    x = bld.real(2)
    bld.add_nonneg(x)
    bld.add_eq(x[0] + x[1] - 1.0)
    bld.minimize(2 * x[0] + x[1])
    sol = solve(bld.build())
    assert sol.status is Status.OPTIMAL
    assert np.allclose(x.value(sol.x), [0, 1], atol=1e-7)


@given(st.integers(0, 1000), st.integers(1, 4))
@settings(max_examples=20)
def test_soc_projection(seed, n):
    rng = np.random.default_rng(seed)
    c = crand(rng, n)
    bld = ProgramBuilder()
    z = bld.complex(n)
    t = bld.real()
    bld.add_soc(t, z - c)
    bld.minimize(t + 0.0 * z.real.sum())
    sol = solve(bld.build())
    assert sol.ok and abs(sol.objective_value) < 1e-6


@given(st.integers(0, 1000), st.integers(1, 4))
@settings(max_examples=20)
def test_hermitian_psd_trace_minimum(seed, n):
    """min Tr X s.t. X >= A has value sum of positive eigenvalues of A."""
    rng = np.random.default_rng(seed)
    B = crand(rng, n, n)
    A = B + B.conj().T
    bld = ProgramBuilder()
    X = bld.hermitian(n)
    bld.add_hermitian_psd(X)
    bld.add_hermitian_psd(X - A)
    bld.minimize(X.trace().real)
    sol = solve(bld.build())
    w = np.linalg.eigvalsh(A)
    assert sol.ok
    assert np.isclose(sol.objective_value, w[w > 0].sum(), atol=1e-6)
    assert bld.build().max_residual(sol.x) < 1e-6


@given(st.integers(0, 1000), st.integers(1, 4))
def test_real_embedding_spectrum(seed, n):
    rng = np.random.default_rng(seed)
    B = crand(rng, n, n)
    H = B + B.conj().T
    E = embed_hermitian_lmi(af.as_affine(H)).const
    assert np.allclose(np.sort(np.linalg.eigvalsh(E)), np.sort(np.repeat(np.linalg.eigvalsh(H), 2)))


def test_embedding_rejects_non_hermitian():
    with pytest.raises(ValueError):
        embed_hermitian_lmi(af.as_affine(np.array([[0, 1], [0, 0]], complex)))


def test_schur_norm_lmi():
    v = np.array([1.0, 2.0j])
    assert np.linalg.eigvalsh(schur_norm_lmi(5.0, v).const).min() > -1e-12
    assert np.linalg.eigvalsh(schur_norm_lmi(4.9, v).const).min() < 0


def test_infeasible_detected():
    bld = ProgramBuilder()
    x = bld.real()
    bld.add_nonneg(x - 1.0)
    bld.add_nonneg(-x)
    bld.minimize(x)
    assert solve(bld.build()).status is Status.INFEASIBLE


def test_dump_lists_all_blocks():
    bld = ProgramBuilder()
    X = bld.hermitian(2)
    bld.add_hermitian_psd(X)
    bld.add_soc(X.trace().real, X[0, 1])
    bld.minimize(X.trace().real)
    text = bld.build().dump()
    assert "psd" in text.lower() and "soc" in text.lower()
