"""Jump paths between instantaneous levels and their contributions to the error.

In the frame of gauge-transported eigenvectors, the amplitude ``c_n`` of level
``n`` obeys ``dc_n/ds = sum_m exp(i T (k_n - k_m)) beta_nm c_m`` with
``k_n(s)`` the integrated energy and ``beta_nm = <n|dH|m> / (E_n - E_m)``.
Expanding in powers of ``beta`` gives one term per number of jumps; the
first two are computed here by quadrature, the rest is bounded in
:mod:`adiabound.bounds`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import numpy as np
from numpy.polynomial import legendre

from .errors import QuadratureBudget, TimesNotOnGrid, ValidationError
from .linalg import GAP_TOLERANCE, Spectrum, default_grid, transported_frames

GL_ORDER = 16
MIN_PANELS = 16
MAX_PANELS = 1 << 18
PHASE_PER_PANEL = np.pi / 4
ROUNDING_FACTOR = 1e4


@lru_cache(maxsize=None)
def _gauss_rule(order: int = GL_ORDER):
    """Nodes, weights and cumulative-integration matrix on [-1, 1].

    ``S[i, j]`` integrates the Lagrange basis polynomial of node ``j`` from
    -1 to node ``i``.
    """
    x, w = legendre.leggauss(order)
    coef = np.linalg.inv(legendre.legvander(x, order - 1))
    S = legendre.legval(x, legendre.legint(coef, lbnd=-1, axis=0)).T
    return x, w, S


@dataclass(frozen=True, eq=False)
class PanelGrid:
    """Composite Gauss-Legendre rule of ``panels`` equal panels on [0, 1]."""

    panels: int
    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def build(cls, panels: int) -> "PanelGrid":
        x, w, _ = _gauss_rule()
        h = 1.0 / panels
        left = np.arange(panels) * h
        nodes = (left[:, None] + 0.5 * h * (x + 1.0)).ravel()
        weights = np.tile(0.5 * h * w, panels)
        return cls(panels, nodes, weights)

    def cumulative(self, f):
        """``int_0^{s_i} f`` at every node; ``f`` has the nodes on axis 0."""
        _, w, S = _gauss_rule()
        P = self.panels
        h = 1.0 / P
        fp = f.reshape((P, GL_ORDER) + f.shape[1:])
        inner = 0.5 * h * np.einsum("ij,pj...->pi...", S, fp)
        totals = 0.5 * h * np.einsum("j,pj...->p...", w, fp)
        offsets = np.concatenate([np.zeros((1,) + totals.shape[1:], totals.dtype),
                                  np.cumsum(totals, axis=0)[:-1]])
        return (inner + offsets[:, None]).reshape(f.shape)

    def integral(self, f):
        return np.tensordot(self.weights, f, axes=(0, 0))


def beta_matrix(hdot, energies, vectors):
    """``beta[n, m] = <n|dH|m> / (E_n - E_m)``; zero on the diagonal and on degenerate pairs.

    Works on single spectra and on stacks.
    """
    V = np.asarray(vectors)
    M = np.conj(np.swapaxes(V, -1, -2)) @ np.asarray(hdot) @ V
    E = np.asarray(energies)
    D = E[..., :, None] - E[..., None, :]
    scale = np.maximum(np.max(np.abs(E), axis=-1), np.finfo(float).tiny)
    live = np.abs(D) > GAP_TOLERANCE * scale[..., None, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(live, M / np.where(live, D, 1.0), 0.0)


def beta(model, spectrum: Spectrum, n: int, m: int) -> complex:
    """Transition amplitude per unit ``s`` from level ``m`` to level ``n``."""
    B = beta_matrix(model.derivative(spectrum.s, 1), spectrum.eigenvalues,
                    spectrum.eigenvectors)
    return complex(B[n, m])


@dataclass(frozen=True)
class JumpPath:
    """Level labels ``labels[0] = 0`` (ground), ..., ``labels[q]`` and times ``0 = times[0] < ... <= 1``.

    The path sits on ``labels[l]`` between ``times[l]`` and ``times[l + 1]``;
    ``times[l]`` for ``l >= 1`` is the moment of the ``l``-th jump.
    """

    labels: tuple
    times: tuple

    def __post_init__(self):
        labels = tuple(int(v) for v in self.labels)
        times = tuple(float(t) for t in self.times)
        problems = []
        if len(labels) != len(times):
            problems.append("labels and times must have equal length")
        if not labels or labels[0] != 0:
            problems.append("paths start on the ground level (label 0)")
        if times and times[0] != 0.0:
            problems.append("the first time must be 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            problems.append("times must increase strictly")
        if times and times[-1] > 1.0:
            problems.append("times must not exceed 1")
        if any(a == b for a, b in zip(labels, labels[1:])):
            problems.append("consecutive labels must differ")
        if problems:
            raise ValidationError(problems)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "times", times)

    @property
    def q(self) -> int:
        return len(self.labels) - 1

    @property
    def non_adiabatic(self) -> bool:
        return self.labels[-1] != 0


@dataclass(eq=False)
class PathCheck:
    product: np.ndarray
    formula: np.ndarray
    L: int
    q: int
    snapped: bool

    @property
    def residual(self) -> float:
        return float(np.linalg.norm(self.product - self.formula, 2))

    @property
    def scaled_residual(self) -> float:
        """Residual in units of the size of the leading formula, ``L**-q``."""
        return self.residual * float(self.L) ** self.q


def path_product_check(path: JumpPath, L: int, model, snap: bool = False) -> PathCheck:
    """Multiply the step projectors of ``path`` explicitly and compare with the ``beta`` product.

    On the grid ``s_j = j / L`` the path occupies level ``labels[l]`` on the
    steps ``j`` with ``L * times[l] < j <= L * times[l + 1]``.  The ordered
    product of the projectors ``|v(s_j)><v(s_j)|`` over ``j = 1..L`` is
    returned together with
    ``|labels[q](1)><G(0)| * prod_l beta_{labels[l], labels[l-1]}(times[l]) / L**q``.
    """
    if L < 10 * max(path.q, 1):
        raise ValidationError(f"L = {L} is below 10 q = {10 * path.q}")
    idx = np.asarray(path.times) * L
    near = np.round(idx)
    snapped = bool(np.any(np.abs(idx - near) > 1e-9 * L))
    if snapped and not snap:
        raise TimesNotOnGrid(f"path times {path.times} are not multiples of 1/{L}")
    jumps = [int(j) for j in near]
    if any(b <= a for a, b in zip(jumps, jumps[1:])):
        raise TimesNotOnGrid("snapping merged two jump times")
    grid = np.arange(L + 1) / L
    fr = transported_frames(model, grid)
    bounds = jumps[1:] + [L]
    labels = np.empty(L + 1, dtype=int)
    labels[0] = path.labels[0]
    lo = 0
    for lab, hi in zip(path.labels, bounds):
        labels[lo + 1:hi + 1] = lab
        lo = hi
    if bounds[-1] != L:
        raise TimesNotOnGrid("path does not reach s = 1")
    vecs = fr.vectors[np.arange(1, L + 1), :, labels[1:]]  # (L, N)
    P = vecs[:, :, None] * vecs[:, None, :].conj()
    while P.shape[0] > 1:
        tail = None
        if P.shape[0] % 2:
            tail, P = P[-1:], P[:-1]
        P = P[1::2] @ P[0::2]
        if tail is not None:
            P = np.concatenate([P, tail])
    product = P[0]

    amp = 1.0 + 0j
    for l in range(1, path.q + 1):
        j = jumps[l]
        B = beta_matrix(model.derivative(grid[j], 1), fr.energies[j], fr.vectors[j])
        amp *= B[path.labels[l], path.labels[l - 1]] / L
    final = fr.vectors[L][:, path.labels[-1]]
    start = fr.vectors[0][:, 0]
    formula = amp * np.outer(final, start.conj())
    return PathCheck(product, formula, L, path.q, snapped)


@dataclass(eq=False)
class JumpContribution:
    """Amplitude of all ``q``-jump paths that end off the ground level.

    ``amplitude_vector[n]`` is the coefficient on ``|n(1)>``; ``state_vector``
    is the same vector in the computational basis.
    """

    order: int
    amplitude_vector: np.ndarray
    state_vector: np.ndarray
    panels: int
    refinements: int

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitude_vector))


def _bind(model, T):
    if model.t_dependent and getattr(model, "T", None) != T:
        return model.at_time(T)
    return model


def _phase_panels(model, T: float) -> int:
    vals = np.linalg.eigvalsh(model.evaluate(default_grid(model)))
    spread = float(np.max(vals[:, -1] - vals[:, 0]))
    need = int(np.ceil(spread * T / PHASE_PER_PANEL))
    return max(MIN_PANELS, need, int(np.ceil(4.0 / model.time_scale)))


def _panel_data(model, panels: int):
    pg = PanelGrid.build(panels)
    s = np.concatenate([[0.0], pg.nodes, [1.0]])
    fr = transported_frames(model, s)
    E = fr.energies[1:-1]
    V = fr.vectors[1:-1]
    B = beta_matrix(model.derivative(pg.nodes, 1), E, V)
    rel = pg.cumulative(E - E[:, :1])  # int_0^s (E_n - E_G)
    rel1 = pg.integral(E - E[:, :1])
    kG1 = float(pg.integral(E[:, 0]))
    return pg, fr, B, rel, rel1, kG1


def _contributions(model, T: float, panels: int):
    pg, fr, B, rel, rel1, kG1 = _panel_data(model, panels)
    final_phase = np.exp(-1j * T * (kG1 + rel1))  # exp(-i T k_n(1))
    ph = np.exp(1j * T * rel)  # (K, N): exp(i T (k_n - k_G))
    f1 = ph * B[:, :, 0]
    c1 = final_phase * pg.integral(f1)
    inner = pg.cumulative(f1)  # amplitude on level m after one jump, at each node
    inner[:, 0] = 0.0
    f2 = ph * np.einsum("knm,km->kn", B, inner / ph)
    c2 = final_phase * pg.integral(f2)
    c1[0] = 0.0
    c2[0] = 0.0
    # size of the integrands, for the rounding floor of the convergence test
    mass1 = float(pg.integral(np.abs(f1[:, 1:])).sum())
    mass = (mass1, mass1 * float(np.max(np.abs(B), initial=0.0)))
    return c1, c2, fr.vectors[-1], mass


def jump_contribution(model, T: float, order: int, quad_tol: float = 1e-8,
                      max_panels: int = MAX_PANELS) -> JumpContribution:
    """Sum over ``order``-jump paths (``order`` 1 or 2) ending off the ground level.

    Panels start narrow enough that the fastest relative phase turns by at
    most a quarter of pi across each one and are doubled until two
    successive results agree to ``quad_tol`` relative to their size, or to
    rounding level when the contribution cancels to zero.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if not 0 < quad_tol <= 1e-2:
        raise ValueError("quad_tol must lie in (0, 1e-2]")
    model = _bind(model, T)
    P = _phase_panels(model, T)
    prev = None
    refinements = 0
    while True:
        if P > max_panels:
            raise QuadratureBudget(f"more than {max_panels} panels needed")
        c1, c2, V1, mass = _contributions(model, T, P)
        cur = c1 if order == 1 else c2
        floor = ROUNDING_FACTOR * np.finfo(float).eps * max(mass[order - 1], 1e-300)
        if prev is not None:
            diff = float(np.linalg.norm(cur - prev))
            if diff <= max(quad_tol * float(np.linalg.norm(cur)), floor):
                return JumpContribution(order, cur, V1 @ cur, P, refinements)
        prev = cur
        P *= 2
        refinements += 1


@dataclass(eq=False)
class FirstOrderTerm:
    vector: np.ndarray  # in the computational basis
    amplitudes: np.ndarray  # on |n(1)>
    norm: float


def first_order_term(model, T: float, panels: int = 256) -> FirstOrderTerm:
    """Boundary terms from integrating the one-jump amplitude by parts once.

    For each excited level ``n`` the coefficient on ``|n(1)>`` is
    ``exp(-i T k_n(1)) [b_n(1) exp(i T (k_n(1) - k_G(1))) - b_n(0)]`` with
    ``b_n = beta_nG / (i T (E_n - E_G))``.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    model = _bind(model, T)
    panels = max(panels, int(np.ceil(4.0 / model.time_scale)))
    pg, fr, _, _, rel1, kG1 = _panel_data(model, panels)
    hd0, hd1 = model.derivative(0.0, 1), model.derivative(1.0, 1)
    B0 = beta_matrix(hd0, fr.energies[0], fr.vectors[0])[:, 0]
    B1 = beta_matrix(hd1, fr.energies[-1], fr.vectors[-1])[:, 0]
    g0 = fr.energies[0] - fr.energies[0][0]
    g1 = fr.energies[-1] - fr.energies[-1][0]
    with np.errstate(divide="ignore", invalid="ignore"):
        b0 = np.where(B0 != 0, B0 / (1j * T * g0), 0.0)
        b1 = np.where(B1 != 0, B1 / (1j * T * g1), 0.0)
    amp = np.exp(-1j * T * (kG1 + rel1)) * (b1 * np.exp(1j * T * rel1) - b0)
    amp[0] = 0.0
    vec = fr.vectors[-1] @ amp
    return FirstOrderTerm(vec, amp, float(np.linalg.norm(amp)))


def one_jump_phasors(model, T: float, count: int) -> np.ndarray:
    """``exp(-i T int_{s1}^1 (E_1 - E_G))`` for ``s1 = j / (count - 1)``.

    ``E_G`` and ``E_1`` are the two lowest levels.
    """
    if count < 2:
        raise ValueError("count must be >= 2")
    model = _bind(model, T) if T > 0 else model
    s1 = np.linspace(0.0, 1.0, count)
    x, w, _ = _gauss_rule()
    sub = 8
    # composite rule on [s1, 1] for every jump time at once
    a = s1[:, None] + (1.0 - s1[:, None]) * np.arange(sub)[None, :] / sub
    h = (1.0 - s1)[:, None] / sub
    nodes = a[:, :, None] + 0.5 * h[:, :, None] * (x + 1.0)
    vals = np.linalg.eigvalsh(model.evaluate(nodes.ravel()))
    gap = (vals[:, 1] - vals[:, 0]).reshape(nodes.shape)
    integral = np.sum(0.5 * h[:, :, None] * w * gap, axis=(1, 2))
    return np.exp(-1j * T * integral)
