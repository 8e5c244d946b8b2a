"""Closed-form error bounds and the quantities they are built from.

All functions take maxima of derivative norms ``h1, h2, h3`` (of the first,
second and third ``s``-derivatives of ``H``) and a minimum gap ``gamma``.
Bounds on the error at total time ``T`` have the shape
``|error - leading| <= R / T**2``, where ``leading`` is the norm of the
boundary term from :func:`adiabound.pathsum.first_order_term`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import simpson

from .errors import NotApplicable
from .linalg import (
    COUPLING_TOLERANCE,
    GAP_TOLERANCE,
    DerivativeNorms,
    default_grid,
    derivative_norms,
    hermitian_eigs,
    spectral_norm,
)
from .pathsum import first_order_term

SERIES_SWITCH = 1e-8
ENDPOINT_TOLERANCE = 1e-9
JRS_MIN_SAMPLES = 513


@dataclass(frozen=True)
class Norms:
    """Plain container for ``h1, h2, h3`` when no model is involved."""

    h1: float
    h2: float
    h3: float


@dataclass(frozen=True)
class BoundReport:
    T: float
    norms: DerivativeNorms
    gamma_min: float
    ground_gap_min: float
    delta0: float
    delta1: float
    Gamma: float
    R: float
    R0: float
    C2_bound: float
    tail: float
    leading_norm: float
    upper: float
    lower: float
    jrs: float
    two_level_upper: Optional[float]
    two_level: bool
    t_dependent: bool


def timescales(norms, gamma_min: float, T: Optional[float] = None,
               ground_gap_min: Optional[float] = None):
    """Return ``(delta0, delta1)``; ``delta0`` is None when ``T`` is not given.

    ``delta1 = (h3/g + h2**3/g**3 + h1**6/g**6) / g`` with ``g = gamma_min``
    and ``delta0 = h1 / ground_gap_min**2 + delta1 / (g T)``.  The ground gap
    defaults to ``gamma_min``.
    """
    g = float(gamma_min)
    h1, h2, h3 = norms.h1, norms.h2, norms.h3
    d1 = (h3 / g + h2 ** 3 / g ** 3 + h1 ** 6 / g ** 6) / g
    if T is None:
        return None, d1
    gg = g if ground_gap_min is None else float(ground_gap_min)
    return h1 / gg ** 2 + d1 / (g * T), d1


def gamma_factor(norms, gamma_min: float) -> float:
    """``6 h1**3/g**3 + h1 h2/g**2 + 2 h1**2/g**2``."""
    g = float(gamma_min)
    h1, h2 = norms.h1, norms.h2
    return 6 * h1 ** 3 / g ** 3 + h1 * h2 / g ** 2 + 2 * h1 ** 2 / g ** 2


def _expm1(x: float) -> float:
    try:
        return math.expm1(x)
    except OverflowError:
        return math.inf


def _expm1_minus_x(x: float) -> float:
    if x < SERIES_SWITCH:
        return x * x / 2 + x ** 3 / 6 + x ** 4 / 24 + x ** 5 / 120
    if x < 0.5:
        # expm1(x) - x still cancels here; sum the series to full precision
        term = total = x * x / 2
        k = 2
        while term > 1e-17 * total:
            k += 1
            term *= x / k
            total += term
        return total
    return _expm1(x) - x


def tail_bound(Gamma: float, norms, gamma_min: float, T: float) -> float:
    """Bound on the summed size of all paths with three or more jumps.

    ``(1 + Gamma/(h1 T)) (exp(x) - 1) - x`` with ``x = Gamma / (gamma_min T)``.
    """
    if Gamma == 0:
        return 0.0
    x = Gamma / (gamma_min * T)
    y = Gamma / (norms.h1 * T)
    return y * _expm1(x) + _expm1_minus_x(x)


def odd_tail_bound(Gamma: float, norms, gamma_min: float, T: float) -> float:
    """Tail restricted to odd jump counts: ``(Gamma/(h1 T)) (exp(x) - 1)``."""
    if Gamma == 0:
        return 0.0
    return Gamma / (norms.h1 * T) * _expm1(Gamma / (gamma_min * T))


def remainder_polynomial(norms, gamma_min: float) -> float:
    g = float(gamma_min)
    h1, h2, h3 = norms.h1, norms.h2, norms.h3
    return ((2 * h2 + h3) / g ** 3
            + (25 * h1 * h2 + 16 * h1 ** 2 + h2 ** 2) / g ** 4
            + (12 * h2 * h1 ** 2 + 118 * h1 ** 3) / g ** 5
            + 36 * h1 ** 4 / g ** 6)


def remainder_R(norms, gamma_min: float, T: float) -> float:
    """``R`` such that ``|error - leading| <= R / T**2``."""
    poly = remainder_polynomial(norms, gamma_min)
    if norms.h1 == 0:
        return poly
    G = gamma_factor(norms, gamma_min)
    return poly + T ** 2 * tail_bound(G, norms, gamma_min, T)


def one_jump_remainder_bounds(norms, gamma_min: float, T: float):
    """Bounds ``(R0, C2_bound)`` on ``||C1 - leading||`` and on ``||C2||``."""
    g = float(gamma_min)
    h1, h2, h3 = norms.h1, norms.h2, norms.h3
    r0 = ((2 * h2 + h3) / g ** 3 + (20 * h1 * h2 + 12 * h1 ** 2) / g ** 4
          + 88 * h1 ** 3 / g ** 5) / T ** 2
    c2 = ((h2 ** 2 + 4 * h1 ** 2 + 5 * h1 * h2) / g ** 4
          + (12 * h2 * h1 ** 2 + 30 * h1 ** 3) / g ** 5
          + 36 * h1 ** 4 / g ** 6) / T ** 2
    return r0, c2


def beta_derivative_bounds(norms, gamma_min: float):
    """Bounds on ``|d beta/ds|``, ``|d2 beta/ds2|`` and on the second derivative of a gap."""
    g = float(gamma_min)
    h1, h2, h3 = norms.h1, norms.h2, norms.h3
    return (4 * h1 ** 2 / g ** 2 + h2 / g,
            44 * h1 ** 3 / g ** 3 + 12 * h1 * h2 / g ** 2 + h3 / g,
            2 * h2 + 8 * h1 ** 2 / g)


def jrs_from_profiles(hdot0: float, hdot1: float, xi, gap, hdot, hddot,
                      T: float, m: int = 1) -> float:
    """Comparison bound from sampled profiles of ``||dH||``, ``||d2H||`` and the gap."""
    gap = np.asarray(gap, dtype=float)
    integrand = m * np.asarray(hddot) / gap ** 2 + 7 * m * math.sqrt(m) * np.asarray(hdot) ** 2 / gap ** 3
    return float((m * hdot0 / gap[0] ** 2 + m * hdot1 / gap[-1] ** 2
                  + simpson(integrand, x=xi)) / T)


def jrs_bound(model, T: float, m: int = 1, samples: Optional[int] = None) -> float:
    """Comparison bound evaluated with composite Simpson on an odd uniform grid."""
    if m < 1:
        raise ValueError("m must be >= 1")
    model = _bind(model, T)
    n = max(JRS_MIN_SAMPLES, len(default_grid(model)) if samples is None else samples)
    n += (n + 1) % 2
    xi = np.linspace(0.0, 1.0, n)
    vals = np.linalg.eigvalsh(model.evaluate(xi))
    gap = vals[:, 1] - vals[:, 0]
    hd = spectral_norm(model.derivative(xi, 1))
    hdd = spectral_norm(model.derivative(xi, 2))
    return jrs_from_profiles(hd[0], hd[-1], xi, gap, hd, hdd, T, m)


def _bind(model, T):
    if model.t_dependent and getattr(model, "T", None) != T:
        return model.at_time(T)
    return model


def effective_two_level(model, grid=None) -> bool:
    """True when the ground level only ever couples to one other level.

    Levels are linked when ``dH/ds`` has a non-negligible matrix element
    between them at some interior grid point; the test passes when the
    ground level's linked component holds exactly two levels.
    """
    grid = default_grid(model) if grid is None else np.asarray(grid, dtype=float)
    inner = grid[(grid > 0) & (grid < 1)]
    _, V = np.linalg.eigh(model.evaluate(inner))
    Hd = model.derivative(inner, 1)
    C = np.abs(np.conj(np.swapaxes(V, -1, -2)) @ Hd @ V)
    scale = np.maximum(spectral_norm(Hd), np.finfo(float).tiny)[:, None, None]
    adj = np.any(C > COUPLING_TOLERANCE * scale, axis=0)
    np.fill_diagonal(adj, False)
    seen = {0}
    todo = [0]
    while todo:
        n = todo.pop()
        for k in np.nonzero(adj[n])[0]:
            if int(k) not in seen:
                seen.add(int(k))
                todo.append(int(k))
    return len(seen) == 2


def error_bounds(model, T: float, norms: Optional[DerivativeNorms] = None,
                   jrs_m: int = 1) -> BoundReport:
    """All bounds at total time ``T``.

    Derivative norms are recomputed for models that depend on ``T``; for
    others a precomputed ``norms`` may be passed to save work across a sweep.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    model = _bind(model, T)
    if norms is None or model.t_dependent:
        norms = derivative_norms(model)
    g = norms.gamma_min
    d0, d1 = timescales(norms, g, T, norms.ground_gap_min)
    G = gamma_factor(norms, g)
    R = remainder_R(norms, g, T)
    R0, C2b = one_jump_remainder_bounds(norms, g, T)
    tail = tail_bound(G, norms, g, T) if norms.h1 > 0 else 0.0
    leading = first_order_term(model, T).norm
    upper = leading + R / T ** 2
    lower = max(0.0, leading - R / T ** 2)
    two = effective_two_level(model)
    two_upper = None
    if two:
        odd = odd_tail_bound(G, norms, g, T) if norms.h1 > 0 else 0.0
        two_upper = leading + R0 + odd
    return BoundReport(T, norms, g, norms.ground_gap_min, d0, d1, G, R, R0, C2b, tail,
                       leading, upper, lower, jrs_bound(model, T, jrs_m), two_upper, two,
                       bool(model.t_dependent))


def _adaptive_simpson(f, a: float, b: float, rel_tol: float, max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) * (fa + 4 * fm + fb) / 6
    total_scale = abs(whole)
    tol = rel_tol * max(total_scale, np.finfo(float).tiny)
    result = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a, b, fa, fm, fb, whole, tol, depth = stack.pop()
        m = 0.5 * (a + b)
        lm, rm = f(0.5 * (a + m)), f(0.5 * (m + b))
        left = (m - a) * (fa + 4 * lm + fm) / 6
        right = (b - m) * (fm + 4 * rm + fb) / 6
        delta = left + right - whole
        if depth >= max_depth or abs(delta) <= 15 * tol:
            result += left + right + delta / 15
        else:
            stack.append((a, m, fa, lm, fm, left, tol / 2, depth + 1))
            stack.append((m, b, fm, rm, fb, right, tol / 2, depth + 1))
    return result


def integrated_gap(model, rel_tol: float = 1e-10) -> float:
    """``int_0^1 (E_1 - E_G) ds`` over the two lowest levels."""
    def gap(s):
        v = np.linalg.eigvalsh(model.evaluate(s))
        return float(v[1] - v[0])

    return _adaptive_simpson(gap, 0.0, 1.0, rel_tol)


def _endpoint_coupling(model, s: float):
    """Gap to the first excited level and ``||P_1 dH |G>|| / gap``.

    ``P_1`` projects onto the whole (possibly degenerate) first excited
    level, so the value does not depend on a basis choice inside it.
    """
    sp = hermitian_eigs(model.evaluate(s), s)
    vals, vecs = np.asarray(sp.eigenvalues), np.asarray(sp.eigenvectors)
    g = vals[1] - vals[0]
    tol = GAP_TOLERANCE * max(float(np.max(np.abs(vals))), np.finfo(float).tiny)
    level = np.abs(vals - vals[1]) <= tol
    coupled = vecs[:, level].conj().T @ (model.derivative(s, 1) @ vecs[:, 0])
    return float(g), float(np.linalg.norm(coupled) / g)


def cancellation_times(model, n_max: int, rel_tol: float = 1e-10) -> list:
    """Total times ``2 pi n / int_0^1 gap`` at which the leading error term vanishes.

    Requires equal gaps and equal coupling strengths at both ends, checked
    to ``1e-9``; otherwise the boundary terms cannot cancel and
    :class:`NotApplicable` is raised.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if model.t_dependent:
        raise NotApplicable("cancellation times need a Hamiltonian independent of T")
    g0, b0 = _endpoint_coupling(model, 0.0)
    g1, b1 = _endpoint_coupling(model, 1.0)
    problems = []
    if abs(g0 - g1) > ENDPOINT_TOLERANCE * max(g0, g1):
        problems.append(f"end gaps differ ({g0:.12g} vs {g1:.12g})")
    if abs(b0 - b1) > ENDPOINT_TOLERANCE * max(b0, b1, np.finfo(float).tiny):
        problems.append(f"end couplings differ ({b0:.12g} vs {b1:.12g})")
    if max(b0, b1) == 0:
        problems.append("no coupling at the ends; the leading term is identically zero")
    if problems:
        raise NotApplicable("; ".join(problems))
    kappa = integrated_gap(model, rel_tol)
    return [2 * math.pi * n / kappa for n in range(1, n_max + 1)]
