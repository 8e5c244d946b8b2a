"""Time evolution of ``i d psi/ds = T H(s) psi`` on ``s`` in [0, 1].

Two independent engines are provided:

* :func:`evolve_product` multiplies exact step exponentials of the
  piecewise-constant Hamiltonian, each built from an eigendecomposition, so
  every step is unitary to rounding.  :func:`evolve_adaptive` doubles the step
  count until the adiabatic error settles.
* :func:`evolve_rk` integrates the ODE with an embedded Dormand-Prince 5(4)
  pair and is used as a cross-check.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BudgetExceeded, DegenerateGroundState, NoAnalytics, StepUnderflow
from .linalg import GAP_TOLERANCE, _eigh, hermitian_eigs

DEFAULT_CAP = 2 ** 26
ERROR_FLOOR = 1e-12
CHUNK = 1 << 15


@dataclass(frozen=True, eq=False)
class Schedule:
    """Breakpoints ``0 = s_0 < s_1 < ... < s_L = 1`` of the step grid."""

    kind: str
    breakpoints: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        if b.ndim != 1 or len(b) < 2:
            raise ValueError("a schedule needs at least two breakpoints")
        if b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must increase strictly from 0 to 1")
        b.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)

    @property
    def L(self) -> int:
        return len(self.breakpoints) - 1


def uniform_schedule(L: int) -> Schedule:
    if L < 1:
        raise ValueError("L must be >= 1")
    b = np.arange(L + 1, dtype=float) / L
    return Schedule("uniform", b)


def phi_schedule(analytics, L: int) -> Schedule:
    """Breakpoints equally spaced in the eigenvector rotation angle."""
    if analytics is None or not hasattr(analytics, "s_of_phi"):
        raise NoAnalytics("phi schedule needs a model with a closed-form rotation angle")
    if L < 2:
        raise ValueError("L must be >= 2")
    phi1 = float(analytics.phi(1.0))
    b = analytics.s_of_phi(phi1 * np.arange(L + 1) / L)
    b[0], b[-1] = 0.0, 1.0
    return Schedule("phi", b)


def make_schedule(model, L: int, kind: str = "uniform") -> Schedule:
    if kind == "uniform":
        return uniform_schedule(L)
    if kind == "phi":
        return phi_schedule(getattr(model, "analytics", None), L)
    raise ValueError(f"unknown schedule kind {kind!r}")


@dataclass(eq=False)
class EvolutionResult:
    final_state: np.ndarray
    L_used: int
    error: float
    method: str
    diagnostics: dict = field(default_factory=dict)


def _bind(model, T):
    if model.t_dependent and getattr(model, "T", None) != T:
        return model.at_time(T)
    return model


def ground_state(model, s: float = 0.0) -> np.ndarray:
    """Ground eigenvector at ``s`` with canonical phase; degenerate ground levels are rejected."""
    sp = hermitian_eigs(model.evaluate(s), s)
    vals = np.asarray(sp.eigenvalues)
    scale = max(float(np.max(np.abs(vals))), np.finfo(float).tiny)
    if vals[1] - vals[0] <= GAP_TOLERANCE * scale:
        raise DegenerateGroundState(f"ground level degenerate at s = {s}")
    return np.array(sp.eigenvectors[:, 0])


def error_vector(state, model) -> np.ndarray:
    """Component of ``state`` orthogonal to the ground state at ``s = 1``."""
    g = ground_state(model, 1.0)
    state = np.asarray(state, dtype=complex)
    return state - g * np.vdot(g, state)


def adiabatic_error(result, model) -> float:
    """``||(1 - P_G(1)) psi||`` for a unit ``psi``; accepts a result or a raw state."""
    state = result.final_state if isinstance(result, EvolutionResult) else result
    return float(min(1.0, np.linalg.norm(error_vector(state, model))))


def _tree_product(U):
    # U[0] acts first; returns U[-1] @ ... @ U[0]
    while U.shape[0] > 1:
        tail = None
        if U.shape[0] % 2:
            tail, U = U[-1:], U[:-1]
        U = U[1::2] @ U[0::2]
        if tail is not None:
            U = np.concatenate([U, tail])
    return U[0]


def evolve_product(model, T: float, schedule: Schedule,
                   initial_state: Optional[np.ndarray] = None) -> EvolutionResult:
    """Apply ``prod_j exp(-i T (s_j - s_{j-1}) H(s_j))`` to the initial ground state.

    Each factor is formed from the eigendecomposition of ``H`` at the right
    endpoint of its step; factors are combined in chunks by pairwise products
    and each chunk product is replaced by its nearest unitary.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    model = _bind(model, T) if T > 0 else model
    psi0 = ground_state(model, 0.0) if initial_state is None else np.asarray(initial_state, complex)
    psi = psi0.copy()
    s = schedule.breakpoints
    if T > 0:
        for a in range(1, len(s), CHUNK):
            b = min(len(s), a + CHUNK)
            E, V = _eigh(model.evaluate(s[a:b]))
            d = s[a:b] - s[a - 1:b - 1]
            phase = np.exp(-1j * T * E * d[:, None])
            U = (V * phase[:, None, :]) @ np.conj(np.swapaxes(V, -1, -2))
            # polar factor removes rounding drift accumulated over the chunk
            W, _, Vh = np.linalg.svd(_tree_product(U))
            psi = (W @ Vh) @ psi
    norm = float(np.linalg.norm(psi))
    err = adiabatic_error(psi, model)
    return EvolutionResult(psi, schedule.L, err, f"product-{schedule.kind}",
                           {"norm_drift": abs(norm - 1.0), "T": T})


def evolve_adaptive(model, T: float, rel_tol: float = 0.01, schedule: str = "uniform",
                    cap: int = DEFAULT_CAP, state_tol: Optional[float] = None,
                    L0: Optional[int] = None) -> EvolutionResult:
    """Product evolution with the step count doubled until the error settles.

    Starts at ``L0 = max(64, ceil(8 T max||H||))`` and stops once
    ``|e(2L) - e(L)| <= rel_tol * max(e(2L), 1e-12)``; the ``2L`` result is
    returned.  With ``state_tol`` set, the final states must in addition
    agree to that tolerance in vector norm, which is needed when the state
    itself (not only the error) is compared against another integrator.
    """
    if not 0 < rel_tol <= 0.5:
        raise ValueError("rel_tol must lie in (0, 0.5]")
    model = _bind(model, T) if T > 0 else model
    if L0 is None:
        L0 = max(64, math.ceil(8 * T * model.norm_max()))
    L = int(L0)
    if 2 * L > cap:
        raise BudgetExceeded(f"initial step count {2 * L} exceeds cap {cap}")
    prev = evolve_product(model, T, make_schedule(model, L, schedule))
    history = [(L, prev.error)]
    while True:
        if 2 * L > cap:
            raise BudgetExceeded(f"no convergence before L = {L} (cap {cap}); history {history}")
        cur = evolve_product(model, T, make_schedule(model, 2 * L, schedule))
        history.append((2 * L, cur.error))
        ok = abs(cur.error - prev.error) <= rel_tol * max(cur.error, ERROR_FLOOR)
        if ok and state_tol is not None:
            ok = np.linalg.norm(cur.final_state - prev.final_state) <= state_tol
        if ok:
            cur.method = f"adaptive-{schedule}"
            cur.diagnostics["history"] = history
            cur.diagnostics["L0"] = int(L0)
            return cur
        prev = cur
        L *= 2


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def evolve_rk(model, T: float, tol: float = 1e-10,
              initial_state: Optional[np.ndarray] = None,
              max_steps: int = 10_000_000) -> EvolutionResult:
    """Adaptive Dormand-Prince 5(4) integration with local error ``<= tol`` per step.

    The local error is the max-norm of the difference between the embedded
    fifth- and fourth-order solutions.  The final state is renormalised and
    the drift reported as ``diagnostics["norm_drift"]``.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    model = _bind(model, T) if T > 0 else model
    psi = ground_state(model, 0.0) if initial_state is None else np.asarray(initial_state, complex)
    psi = psi.astype(complex).copy()
    if T == 0:
        return EvolutionResult(psi, 0, adiabatic_error(psi, model), "rk45",
                               {"norm_drift": 0.0, "steps": 0, "rejected": 0})
    hmax = model.norm_max()
    if T * hmax > 1e3:
        warnings.warn(f"T*||H|| = {T * hmax:.3g} is large; explicit integration loses accuracy",
                      RuntimeWarning, stacklevel=2)

    def rhs(s, y):
        return -1j * T * (model.evaluate(s) @ y)

    s = 0.0
    h = min(1.0, 0.1 / max(T * hmax, 1e-300))
    k = [rhs(s, psi)] + [None] * 6
    steps = rejected = 0
    while s < 1.0:
        if steps + rejected > max_steps:
            raise StepUnderflow(f"step budget {max_steps} exhausted at s = {s}")
        h = min(h, 1.0 - s)
        for i in range(1, 7):
            y = psi + h * sum(a * k[j] for j, a in enumerate(_A[i]))
            k[i] = rhs(s + _C[i] * h, y)
        y5 = y  # stage 7 is evaluated at the fifth-order solution
        err = float(np.max(np.abs(h * sum(e * kk for e, kk in zip(_E, k)))))
        if err <= tol:
            s = 1.0 if h >= 1.0 - s else s + h
            psi = y5
            k[0] = k[6]
            steps += 1
        else:
            rejected += 1
        fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * (tol / err) ** 0.2))
        h *= fac
        if h < 1e-14 and s < 1.0:
            raise StepUnderflow(f"step size {h:.3g} below 1e-14 at s = {s}")
    norm = float(np.linalg.norm(psi))
    psi = psi / norm
    return EvolutionResult(psi, steps, adiabatic_error(psi, model), "rk45",
                           {"norm_drift": abs(norm - 1.0), "steps": steps, "rejected": rejected})
