import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adiabound.errors import (AmbiguousMatching, DegenerateGroundState, DifferentiationFailure,
                              DimensionMismatch, NonHermitian)
from adiabound.linalg import (derivative_norms, finite_difference, gauge_transport, hermitian_eigs,
                              min_gap, transported_frames)
from adiabound.models import (FunctionModel, linear_interpolation_model,
                              marzlin_sanders_model, search_model)
from adiabound.pathsum import beta_matrix


def random_hermitian(rng, n):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (A + A.conj().T) / 2


# eigen-decomposition

def test_identity_is_degenerate_but_orthonormal():
    sp = hermitian_eigs(np.eye(2))
    assert np.allclose(sp.eigenvalues, [1, 1])
    assert np.allclose(sp.eigenvectors.conj().T @ sp.eigenvectors, np.eye(2), atol=1e-14)


def test_diagonal_gives_standard_basis():
    sp = hermitian_eigs(np.diag([0.0, 3.0]))
    assert np.allclose(sp.eigenvalues, [0, 3])
    assert np.allclose(np.abs(sp.eigenvectors), np.eye(2))


def test_search_midpoint_gap(search4):
    sp = hermitian_eigs(search4.evaluate(0.5), 0.5)
    assert abs(sp.gap(1, 0) - 0.5) < 1e-12


def test_rejects_non_hermitian_and_small():
    with pytest.raises(NonHermitian):
        hermitian_eigs(np.array([[0, 1], [0, 0]]))
    with pytest.raises(DimensionMismatch):
        hermitian_eigs(np.ones((1, 1)))
    with pytest.raises(DimensionMismatch):
        hermitian_eigs(np.ones((2, 3)))


def test_bitwise_deterministic():
    M = random_hermitian(np.random.default_rng(3), 5)
    a, b = hermitian_eigs(M), hermitian_eigs(M)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert np.array_equal(a.eigenvectors, b.eigenvectors)


def test_spectrum_arrays_read_only():
    sp = hermitian_eigs(np.diag([0.0, 1.0]))
    with pytest.raises(ValueError):
        sp.eigenvalues[0] = 5


@given(st.integers(2, 6), st.integers(0, 2 ** 32 - 1))
def test_eigen_invariants(n, seed):
    M = random_hermitian(np.random.default_rng(seed), n)
    sp = hermitian_eigs(M)
    V, E = sp.eigenvectors, sp.eigenvalues
    norm = np.linalg.norm(M, 2)
    assert np.all(np.diff(E) >= 0)
    assert np.linalg.norm(V.conj().T @ V - np.eye(n)) <= 1e-10
    assert np.max(np.linalg.norm(M @ V - V * E, axis=0)) <= 1e-10 * norm
    assert np.linalg.norm(sp.reconstruct() - M) <= 1e-10 * norm


# gauge transport

def test_transport_of_identical_spectrum_is_noop():
    sp = hermitian_eigs(random_hermitian(np.random.default_rng(1), 4))
    out = gauge_transport(sp, sp)
    assert np.allclose(out.eigenvectors, sp.eigenvectors, atol=1e-14)


def test_transport_removes_global_phase():
    sp = hermitian_eigs(random_hermitian(np.random.default_rng(2), 3))
    from adiabound.linalg import Spectrum
    rotated = Spectrum(0.0, np.array(sp.eigenvalues), sp.eigenvectors * np.exp(1j * np.pi / 3))
    out = gauge_transport(sp, rotated)
    assert np.allclose(out.eigenvectors, sp.eigenvectors, atol=1e-13)


def test_transport_small_step_has_real_overlaps(search4):
    a = hermitian_eigs(search4.evaluate(0.0), 0.0)
    b = gauge_transport(a, hermitian_eigs(search4.evaluate(1e-3), 1e-3))
    ov = np.sum(a.eigenvectors.conj() * b.eigenvectors, axis=0)
    assert np.max(np.abs(ov.imag)) <= 1e-6
    assert b.anchor_s == 0.0


def test_transport_rejects_unrelated_frames():
    n = 5
    F = np.exp(2j * np.pi * np.outer(np.arange(n), np.arange(n)) / n) / np.sqrt(n)
    from adiabound.linalg import Spectrum
    prev = hermitian_eigs(np.diag(np.arange(n, dtype=float)))
    cur = Spectrum(1.0, np.arange(n, dtype=float), F)
    with pytest.raises(AmbiguousMatching):
        gauge_transport(prev, cur)


def smooth_three_level():
    rng = np.random.default_rng(11)
    return linear_interpolation_model(np.diag([0.0, 1.0, 2.5]) + 0.3 * random_hermitian(rng, 3),
                                      np.diag([0.0, 1.5, 3.0]) + 0.3 * random_hermitian(rng, 3))


@pytest.mark.parametrize("factory", [lambda: search_model(4), smooth_three_level])
def test_transported_frames_are_parallel(factory):
    # <v(s+d) - v(s), v(s)> / d is O(d) for a parallel frame
    model = factory()
    s0 = 0.37
    quot = []
    for d in (1e-2, 5e-3, 2.5e-3):
        fr = transported_frames(model, np.array([0.0, s0, s0 + d]))
        V0, V1 = fr.vectors[1], fr.vectors[2]
        q = np.abs(np.sum((V1 - V0).conj() * V0, axis=0)) / d
        quot.append(np.max(q[:2]))
    assert quot[1] <= 0.6 * quot[0] + 1e-10
    assert quot[2] <= 0.6 * quot[1] + 1e-10


def test_beta_matches_derivative_of_frame():
    model = smooth_three_level()
    s0, d = 0.4, 1e-4
    fr = transported_frames(model, np.array([0.0, s0 - d, s0, s0 + d]))
    Vd = (fr.vectors[3] - fr.vectors[1]) / (2 * d)
    B = beta_matrix(model.derivative(s0, 1), fr.energies[2], fr.vectors[2])
    # B[n, m] = <n'|m> for n != m
    num = Vd.conj().T @ fr.vectors[2]
    off = ~np.eye(3, dtype=bool)
    assert np.max(np.abs(num[off] - B[off])) <= 1e-6


# finite differences and norms

def test_finite_difference_matches_analytic(search4):
    fm = FunctionModel(search4.evaluate, 4)
    for s in (0.1, 0.5, 0.9):
        assert np.max(np.abs(fm.derivative(s, 1) - search4.derivative(s, 1))) <= 1e-8
        assert np.max(np.abs(fm.derivative(s, 2))) <= 1e-5


def test_finite_difference_step_floor():
    with pytest.raises(DifferentiationFailure):
        finite_difference(lambda s: np.eye(2) * s, 0.5, 1, step=1e-13)


def test_search_norms_against_dense_oracle(search4):
    u = np.full(4, 0.5)
    m = np.zeros(4)
    m[0] = 1.0
    oracle = np.linalg.norm(np.outer(u, u) - np.outer(m, m), 2)
    n = derivative_norms(search4)
    assert abs(n.h1 - oracle) <= 1e-12
    assert abs(n.h1 - np.sqrt(3) / 2) <= 1e-12
    assert n.h2 == 0 and n.h3 == 0
    assert abs(n.gamma_min - 0.5) <= 1e-9
    assert n.method == "analytic"


def test_constant_model_norms_vanish(flat):
    n = derivative_norms(flat)
    assert n.as_tuple() == (0.0, 0.0, 0.0)
    assert n.gamma_min == 1.0


def test_min_gap_scopes(search4, flat):
    assert abs(min_gap(search4) - 0.5) <= 1e-9
    assert abs(min_gap(search4, scope="ground") - 0.5) <= 1e-9
    # the first excited level meets the degenerate block at the endpoints
    assert min_gap(search4, scope="all") <= 1e-6
    assert min_gap(flat) == 1.0
    with pytest.raises(ValueError):
        min_gap(flat, scope="nope")


def test_min_gap_marzlin_sanders_closed_form():
    m = marzlin_sanders_model(1.0, 100.0)
    assert abs(min_gap(m) - 2.0) <= 1e-9
    s = np.linspace(0, 1, 2001)
    assert np.allclose(m.gap(s), np.diff(np.linalg.eigvalsh(m.evaluate(s)), axis=1)[:, 0], atol=1e-12)


def test_level_crossing_raises():
    crossing = linear_interpolation_model(np.diag([0.0, 1.0]), np.diag([1.0, 0.0]))
    with pytest.raises(DegenerateGroundState):
        min_gap(crossing)


@pytest.mark.parametrize("a,slope", [(1.0, 1.0), (0.5, 0.5)])
def test_marzlin_sanders_norm_scaling(a, slope):
    Ts = (100.0, 1000.0, 10000.0)
    n = [derivative_norms(marzlin_sanders_model(1.0, T, a)) for T in Ts]
    h2 = np.array([x.h2 for x in n])
    fit = np.polyfit(np.log(Ts), np.log(h2), 1)[0]
    assert abs(fit - slope) <= 0.1
    h1 = np.array([x.h1 for x in n])
    assert np.all(h1 < 4 * np.pi + 2 * np.pi)
