import math

import numpy as np
import pytest
from scipy.integrate import quad

from adiabound.errors import TimesNotOnGrid, ValidationError
from adiabound.linalg import hermitian_eigs, transported_frames
from adiabound.models import FunctionModel, ReversedModel, two_level_toy_model
from adiabound.pathsum import (JumpPath, PanelGrid, beta, beta_matrix, first_order_term, jump_contribution,
                               one_jump_phasors, path_product_check)
from adiabound.propagator import error_vector, evolve_adaptive


def kappa(N):
    f = lambda s: math.sqrt(1 - 4 * (1 - 1 / N) * s * (1 - s))  # noqa: E731
    return quad(f, 0, 1, epsabs=1e-14, epsrel=1e-14)[0]


def test_panel_quadrature_is_exact_for_polynomials():
    pg = PanelGrid.build(4)
    assert abs(pg.integral(pg.nodes ** 9) - 0.1) <= 1e-15
    cum = pg.cumulative(np.cos(pg.nodes))
    assert np.max(np.abs(cum - np.sin(pg.nodes))) <= 1e-14


def test_beta_basic(search4, flat):
    sp = hermitian_eigs(search4.evaluate(0.5), 0.5)
    assert beta(search4, sp, 1, 1) == 0
    assert abs(abs(beta(search4, sp, 1, 0)) - math.sqrt(3)) <= 1e-12
    spf = hermitian_eigs(flat.evaluate(0.3), 0.3)
    assert np.all(beta_matrix(flat.derivative(0.3, 1), spf.eigenvalues, spf.eigenvectors) == 0)


def test_beta_matches_analytic_rotation_rate(search4):
    an = search4.analytics
    for s in (0.1, 0.5, 0.8):
        sp = hermitian_eigs(search4.evaluate(s), s)
        assert abs(abs(beta(search4, sp, 1, 0)) - an.phi_dot(s)) <= 1e-12


def test_jump_path_validation():
    for labels, times in [((1, 0), (0, 0.5)), ((0, 1), (0.1, 0.5)), ((0, 1, 2), (0, 0.5, 0.5)),
                          ((0, 1), (0, 1.5)), ((0, 0), (0, 0.5)), ((0, 1), (0,))]:
        with pytest.raises(ValidationError):
            JumpPath(labels, times)
    p = JumpPath((0, 1, 0), (0, 0.25, 0.75))
    assert p.q == 2 and not p.non_adiabatic


def test_path_check_grid_rules(search4):
    p = JumpPath((0, 1), (0.0, 0.3))
    with pytest.raises(TimesNotOnGrid):
        path_product_check(p, 512, search4)
    chk = path_product_check(p, 512, search4, snap=True)
    assert chk.snapped
    with pytest.raises(ValidationError):
        path_product_check(JumpPath((0, 1), (0.0, 0.5)), 4, search4)


def test_path_check_constant_model(flat):
    chk = path_product_check(JumpPath((0, 1), (0.0, 0.5)), 64, flat)
    assert chk.residual == 0.0


def rotating_two_level(rate=0.7):
    def H(s):
        c, sn = math.cos(rate * s), math.sin(rate * s)
        R = np.array([[c, -sn], [sn, c]])
        return R @ np.diag([0.0, 1.0 + s]) @ R.T
    return FunctionModel(H, 2)


def test_one_jump_quadrature_against_oracle():
    # constant rotation rate and linear gap: |C1| = rate |int exp(i T (s + s^2/2)) ds|
    rate, T = 0.7, 20.0
    c1 = jump_contribution(rotating_two_level(rate), T, 1, quad_tol=1e-10)
    re = quad(lambda s: math.cos(T * (s + s * s / 2)), 0, 1, limit=500, epsabs=1e-13)[0]
    im = quad(lambda s: math.sin(T * (s + s * s / 2)), 0, 1, limit=500, epsabs=1e-13)[0]
    assert abs(c1.norm - rate * math.hypot(re, im)) <= 1e-8


def test_jump_contributions_vanish_without_coupling(flat):
    assert jump_contribution(flat, 10.0, 1).norm == 0.0
    assert jump_contribution(flat, 10.0, 2).norm == 0.0
    assert first_order_term(flat, 10.0).norm == 0.0


def test_second_order_vanishes_for_search(search4):
    # every excited level couples only to the ground level
    assert jump_contribution(search4, 40.0, 2).norm <= 1e-10


def test_one_jump_scaling(search4):
    for T in (500.0, 2000.0):
        c1 = jump_contribution(search4, T, 1)
        assert c1.norm * T <= 4 * math.sqrt(3) + 1e-6


def test_one_jump_reversal_symmetry(search4):
    for T in (15.0, 37.0):
        a = jump_contribution(search4, T, 1).norm
        b = jump_contribution(ReversedModel(search4), T, 1).norm
        assert abs(a - b) <= 1e-8 * max(a, 1e-12)


def test_first_order_closed_form(search4):
    k = kappa(4)
    for T in (10.0, 77.0, 500.0):
        exact = math.sqrt(3) / (2 * T) * abs(math.sin(k * T / 2))
        assert abs(first_order_term(search4, T).norm - exact) <= 1e-12
    T1 = 2 * math.pi / k
    assert first_order_term(search4, 10 * T1).norm <= 1e-12


def test_one_jump_tracks_exact_error(search4):
    # what one jump misses is O(1/T^2): residual * T^2 stays bounded as T doubles
    scaled = []
    for T in (200.0, 400.0):
        res = evolve_adaptive(search4, T, rel_tol=1e-3, schedule="phi", state_tol=1e-7)
        ev = error_vector(res.final_state, search4)
        c1 = jump_contribution(search4, T, 1)
        scaled.append(float(np.linalg.norm(ev - c1.state_vector)) * T ** 2)
    assert scaled[1] <= 1.5 * scaled[0]
    assert max(scaled) <= 10.0


def test_phasors():
    toy = two_level_toy_model()
    ph = one_jump_phasors(toy, 0.0, 5)
    assert np.allclose(ph, 1.0)
    ph = one_jump_phasors(toy, 4.0, 21)
    assert np.allclose(np.abs(ph), 1.0, atol=1e-14)
    assert abs(ph.sum()) <= 21
    assert abs(one_jump_phasors(toy, 0.01, 21).sum()) >= 20.9
    with pytest.raises(ValueError):
        one_jump_phasors(toy, 1.0, 1)


def test_frames_cover_degenerate_block(search4):
    fr = transported_frames(search4, np.linspace(0, 1, 65))
    V = fr.vectors
    assert np.max(np.abs(np.conj(np.swapaxes(V, 1, 2)) @ V - np.eye(4))) <= 1e-12
