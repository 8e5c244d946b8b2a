"""Dense Hermitian linear algebra: spectra, gauge transport, gaps and norms.

Eigenvectors are always columns.  A *frame* is a sequence of spectra along
increasing ``s`` whose eigenvector phases have been fixed by discrete
parallel transport, i.e. ``<v_k | v_{k+1}>`` is real and positive for every
level, which is the discrete form of ``<dv/ds | v> = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment, minimize_scalar

from .errors import (
    AmbiguousMatching,
    DegenerateGroundState,
    DifferentiationFailure,
    DimensionMismatch,
    NoConvergence,
    NonHermitian,
)

GAP_TOLERANCE = 1e-10
HERMITIAN_TOLERANCE = 1e-12
MATCH_THRESHOLD = 0.5
COUPLING_TOLERANCE = 1e-8
FD_FLOOR = 1e-12
DEFAULT_GRID_POINTS = 1025


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigen-decomposition of ``H(s)`` at a single ``s``.

    ``eigenvalues[n]`` belongs to column ``eigenvectors[:, n]``.  Label 0 is
    the tracked ground level.  ``anchor_s`` records the ``s`` of the spectrum
    this one was gauge-transported against, if any.
    """

    s: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    anchor_s: Optional[float] = None

    def __post_init__(self):
        for arr in (self.eigenvalues, self.eigenvectors):
            arr.setflags(write=False)

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def gap(self, n: int = 1, m: int = 0) -> float:
        return abs(float(self.eigenvalues[n] - self.eigenvalues[m]))

    @property
    def ground_gap(self) -> float:
        others = np.delete(self.eigenvalues, 0)
        return float(np.min(others - self.eigenvalues[0]))

    def vector(self, n: int) -> np.ndarray:
        return self.eigenvectors[:, n]

    def projector(self, n: int) -> np.ndarray:
        v = self.eigenvectors[:, n]
        return np.outer(v, v.conj())

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T


@dataclass(frozen=True, eq=False)
class Frames:
    """Gauge-transported spectra on an increasing grid of ``s`` values."""

    s: np.ndarray
    energies: np.ndarray  # (K, N)
    vectors: np.ndarray  # (K, N, N), columns are eigenvectors

    def __len__(self):
        return len(self.s)

    def spectrum(self, k: int) -> Spectrum:
        anchor = float(self.s[k - 1]) if k > 0 else None
        return Spectrum(float(self.s[k]), self.energies[k].copy(),
                        self.vectors[k].copy(), anchor)


@dataclass(frozen=True, eq=False)
class DerivativeNorms:
    """Maximum spectral norms of the first three derivatives of ``H``.

    ``gamma_min`` is the smallest gap between coupled, non-degenerate levels;
    ``ground_gap_min`` the smallest gap between the ground level and any other
    level.  ``samples`` keeps the per-``s`` profiles used for the maxima.
    """

    h1: float
    h2: float
    h3: float
    gamma_min: float
    ground_gap_min: float
    method: str
    samples: dict = field(default_factory=dict, repr=False)

    def as_tuple(self):
        return self.h1, self.h2, self.h3


def _degeneracy_tol(values) -> float:
    scale = float(np.max(np.abs(values))) if np.size(values) else 0.0
    return GAP_TOLERANCE * max(scale, np.finfo(float).tiny)


def _clusters(values, tol):
    """Group indices of sorted ``values`` whose neighbours differ by <= tol."""
    groups = [[0]]
    for i in range(1, len(values)):
        if values[i] - values[i - 1] <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def _canonical_phases(vecs):
    # first significant component real and positive
    out = vecs.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        idx = int(np.argmax(np.abs(col) > 1e-8 * np.max(np.abs(col))))
        c = col[idx]
        out[:, j] = col * (np.conj(c) / abs(c))
    return out


def _first_significant(col):
    return int(np.argmax(np.abs(col) > 1e-8 * np.max(np.abs(col))))


def _canonical_order(vals, vecs):
    tol = _degeneracy_tol(vals)
    order = []
    for group in _clusters(vals, tol):
        order.extend(sorted(group, key=lambda j: (_first_significant(vecs[:, j]), j)))
    order = np.array(order)
    return vals[order], vecs[:, order]


def check_hermitian(M, tol=HERMITIAN_TOLERANCE) -> np.ndarray:
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NonHermitian("matrix has non-finite entries")
    scale = float(np.max(np.abs(M))) if M.size else 0.0
    asym = float(np.max(np.abs(M - M.conj().T))) if M.size else 0.0
    if asym > tol * max(scale, np.finfo(float).tiny):
        raise NonHermitian(f"max|M - M^H| = {asym:.3e} exceeds {tol:g} * max|M|")
    return M


def _eigh(M):
    try:
        return np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc


def hermitian_eigs(M, s: float = float("nan")) -> Spectrum:
    """Ascending eigenvalues and orthonormal eigenvectors of a Hermitian matrix.

    Within numerically degenerate clusters, columns are ordered by the index
    of their first significant component; every column is phased so that
    component is real and positive.  The output is a deterministic function
    of ``M``.
    """
    M = check_hermitian(M)
    if M.shape[0] < 2:
        raise DimensionMismatch("need N >= 2")
    vals, vecs = _eigh(0.5 * (M + M.conj().T))
    vals, vecs = _canonical_order(vals, vecs)
    return Spectrum(float(s), vals, _canonical_phases(vecs))


def _resolve(vals, vecs, hdot):
    """Rotate degenerate clusters so that ``hdot`` is diagonal inside them.

    This picks the basis that the levels split into as ``s`` moves forward,
    ordered by ascending first-order shift.
    """
    tol = _degeneracy_tol(vals)
    order = np.argsort(vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    for group in _clusters(vals, tol):
        if len(group) < 2:
            continue
        Vc = vecs[:, group]
        w, u = _eigh(Vc.conj().T @ hdot @ Vc)
        vecs[:, group] = _canonical_phases(Vc @ u)
    return vals, vecs


def resolve_degeneracies(spectrum: Spectrum, hdot) -> Spectrum:
    vals, vecs = _resolve(np.array(spectrum.eigenvalues), np.array(spectrum.eigenvectors),
                          np.asarray(hdot, dtype=complex))
    return Spectrum(spectrum.s, vals, vecs, spectrum.anchor_s)


def _align(prev_vecs, cur_vals, cur_vecs):
    """Relabel and re-phase ``cur`` to continue the labels of ``prev``.

    Levels are matched by maximal total overlap (Hungarian assignment over
    degenerate clusters); each cluster is then rotated by the unitary polar
    factor of its overlap block, which for a single level reduces to making
    ``<prev|cur>`` real and positive.
    """
    n = len(cur_vals)
    order = np.argsort(cur_vals, kind="stable")
    cur_vals = cur_vals[order]
    cur_vecs = cur_vecs[:, order]
    groups = _clusters(cur_vals, _degeneracy_tol(cur_vals))

    overlap2 = np.abs(prev_vecs.conj().T @ cur_vecs) ** 2  # [prev, cur]
    slot_group = [g for g, grp in enumerate(groups) for _ in grp]
    cost = np.empty((n, n))
    for slot, g in enumerate(slot_group):
        cost[slot] = -overlap2[:, groups[g]].sum(axis=1)
    rows, cols = linear_sum_assignment(cost)

    new_vals = np.empty(n)
    new_vecs = np.empty_like(cur_vecs)
    for g, grp in enumerate(groups):
        labels = sorted(cols[r] for r in rows if slot_group[r] == g)
        block = cur_vecs[:, grp]
        A = block.conj().T @ prev_vecs[:, labels]
        X, _, Yh = np.linalg.svd(A)
        W = X @ Yh
        new_vecs[:, labels] = block @ W
        new_vals[labels] = (np.abs(W) ** 2).T @ cur_vals[grp]
    overlaps = np.abs(np.sum(prev_vecs.conj() * new_vecs, axis=0))
    worst = int(np.argmin(overlaps))
    if overlaps[worst] < MATCH_THRESHOLD:
        raise AmbiguousMatching(
            f"level {worst}: best overlap {overlaps[worst]:.3f} < {MATCH_THRESHOLD}")
    return new_vals, new_vecs


def gauge_transport(prev: Spectrum, cur: Spectrum) -> Spectrum:
    """Phase and order ``cur`` continuously from ``prev``."""
    if prev.dim != cur.dim:
        raise DimensionMismatch("spectra of different dimension")
    vals, vecs = _align(np.asarray(prev.eigenvectors), np.array(cur.eigenvalues),
                        np.array(cur.eigenvectors))
    return Spectrum(cur.s, vals, vecs, anchor_s=prev.s)


def _fast_run(vecs, out, k, r, groups):
    """Transport ``out[k]`` through raw frames ``vecs[k+1..r]`` with a fixed cluster layout.

    Returns False (leaving ``out`` partially written) when some step fails the
    overlap test, so the caller can redo the run with :func:`_align`.
    """
    for grp in groups:
        A = vecs[k:r][:, :, grp]
        B = vecs[k + 1:r + 1][:, :, grp]
        if len(grp) == 1:
            c = grp[0]
            d = np.sum(A[:, :, 0].conj() * B[:, :, 0], axis=1)
            if np.min(np.abs(d)) < MATCH_THRESHOLD:
                return False
            m0 = np.vdot(vecs[k][:, c], out[k][:, c])
            # product of unit phasors; summing angles loses precision as the sum grows
            m = m0 * np.cumprod(np.conj(d) / np.abs(d))
            m /= np.abs(m)
            out[k + 1:r + 1, :, c] = B[:, :, 0] * m[:, None]
            continue
        O = np.conj(np.swapaxes(A, -1, -2)) @ B
        X, sv, Yh = np.linalg.svd(np.conj(np.swapaxes(O, -1, -2)))
        if np.min(sv) < MATCH_THRESHOLD:
            return False
        P = X @ Yh
        M = vecs[k][:, grp].conj().T @ out[k][:, grp]
        for j in range(r - k):
            M = P[j] @ M
            out[k + 1 + j][:, grp] = B[j] @ M
    return True


def transported_frames(model, s_values, resolve: bool = True) -> Frames:
    """Gauge-transported eigenframes of ``model`` on the increasing grid ``s_values``.

    The first frame is canonical (see :func:`hermitian_eigs`) with degenerate
    clusters split along ``dH/ds``.  Runs of steps over which the cluster
    layout of the spectrum does not change are transported in bulk, one
    cluster at a time; steps where it changes go through :func:`_align`.
    """
    s = np.asarray(s_values, dtype=float)
    if s.ndim != 1 or len(s) == 0 or np.any(np.diff(s) <= 0):
        raise ValueError("s_values must be a non-empty strictly increasing 1-d array")
    vals, vecs = _eigh(model.evaluate(s))
    first = hermitian_eigs(model.evaluate(s[0]), s[0])
    v0, V0 = np.array(first.eigenvalues), np.array(first.eigenvectors)
    if resolve:
        v0, V0 = _resolve(v0, V0, model.derivative(s[0], 1))
    vals[0], vecs[0] = v0, V0
    out = vecs.copy()
    K = len(s)
    if K == 1:
        return Frames(s, vals, out)

    scale = np.maximum(np.max(np.abs(vals), axis=1), np.finfo(float).tiny)
    split = np.diff(vals, axis=1) > GAP_TOLERANCE * scale[:, None]
    same = np.all(split[:-1] == split[1:], axis=1)  # step j -> j+1 keeps the layout
    sorted_labels = True
    k = 0
    while k < K - 1:
        if sorted_labels and same[k]:
            r = k
            while r < K - 1 and same[r]:
                r += 1
            groups = _clusters_from_split(split[k])
            if _fast_run(vecs, out, k, r, groups):
                k = r
                continue
            for j in range(k, r):
                vals[j + 1], out[j + 1] = _align(out[j], vals[j + 1], vecs[j + 1])
            k = r
        else:
            vals[k + 1], out[k + 1] = _align(out[k], vals[k + 1], vecs[k + 1])
            k += 1
        sorted_labels = sorted_labels and bool(np.all(np.diff(vals[k]) >= 0))
    return Frames(s, vals, out)


def _clusters_from_split(split_row):
    groups = [[0]]
    for i, gap_open in enumerate(split_row):
        if gap_open:
            groups.append([i + 1])
        else:
            groups[-1].append(i + 1)
    return groups



def spectral_norm(M) -> np.ndarray:
    """Largest singular value; works on stacks of matrices."""
    M = np.asarray(M)
    if M.shape[-1] == 0:
        return np.zeros(M.shape[:-2])
    return np.linalg.norm(M, ord=2, axis=(-2, -1))


def finite_difference(f: Callable, s, k: int, step: Optional[float] = None,
                      scale: float = 1.0):
    """Fourth-order central difference of ``f`` (matrix valued) of order ``k``."""
    if k not in (1, 2, 3):
        raise ValueError("derivative order must be 1, 2 or 3")
    h = step if step is not None else np.finfo(float).eps ** (1.0 / (k + 2)) * scale
    if not h >= FD_FLOOR:
        raise DifferentiationFailure(f"finite-difference step {h:g} below floor {FD_FLOOR:g}")
    s = np.asarray(s, dtype=float)
    F = {j: f(s + j * h) for j in range(-3, 4) if j}
    if k == 1:
        return (-F[2] + 8 * F[1] - 8 * F[-1] + F[-2]) / (12 * h)
    if k == 2:
        return (-F[2] + 16 * F[1] - 30 * f(s) + 16 * F[-1] - F[-2]) / (12 * h * h)
    return (-F[3] + 8 * F[2] - 13 * F[1] + 13 * F[-1] - 8 * F[-2] + F[-3]) / (8 * h ** 3)


def default_grid(model, points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Uniform grid on [0, 1] with at least 32 samples per model time scale."""
    n = max(points, int(np.ceil(32.0 / model.time_scale)) + 1)
    return np.linspace(0.0, 1.0, n)


def _refine(fun, grid, i, maximize):
    """One bounded scalar refinement around grid index ``i``."""
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    best = fun(grid[i])
    if hi <= lo:
        return best
    sign = -1.0 if maximize else 1.0
    res = minimize_scalar(lambda x: sign * fun(x), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12 * max(1.0, hi - lo)})
    cand = fun(res.x)
    return max(best, cand) if maximize else min(best, cand)


def _ground_gaps(model, grid):
    vals = np.linalg.eigvalsh(model.evaluate(grid))
    gaps = vals[:, 1] - vals[:, 0]
    scale = np.maximum(np.max(np.abs(vals), axis=1), np.finfo(float).tiny)
    bad = np.nonzero(gaps <= GAP_TOLERANCE * scale)[0]
    if len(bad):
        raise DegenerateGroundState(f"ground level degenerate at s = {grid[bad[0]]:.6g}")
    return gaps


def gap_profile(model, grid=None) -> np.ndarray:
    """Gap between the ground level and the nearest other level, per grid point."""
    grid = default_grid(model) if grid is None else np.asarray(grid, dtype=float)
    return _ground_gaps(model, grid)


def _coupled_gaps(model, grid):
    """Per-sample smallest gap among non-degenerate level pairs that ``dH/ds`` couples.

    NaN where no pair is coupled (e.g. a constant Hamiltonian).
    """
    H = model.evaluate(grid)
    Hd = model.derivative(grid, 1)
    vals, vecs = _eigh(H)
    C = np.abs(np.conj(np.swapaxes(vecs, -1, -2)) @ Hd @ vecs)
    D = np.abs(vals[:, :, None] - vals[:, None, :])
    scale = np.maximum(np.max(np.abs(vals), axis=1), np.finfo(float).tiny)
    hnorm = spectral_norm(Hd)
    coupled = C > COUPLING_TOLERANCE * np.maximum(hnorm, np.finfo(float).tiny)[:, None, None]
    live = coupled & (D > GAP_TOLERANCE * scale[:, None, None])
    D = np.where(live, D, np.inf)
    out = D.reshape(len(grid), -1).min(axis=1)
    return np.where(np.isfinite(out), out, np.nan)


def min_gap(model, grid=None, scope: str = "coupled") -> float:
    """Minimum eigenvalue gap over ``grid`` with one local refinement.

    ``scope`` selects which gaps count:

    ``"ground"``
        ground level against every other level;
    ``"all"``
        any two distinct (non-degenerate) levels;
    ``"coupled"``
        distinct levels connected by a nonzero matrix element of ``dH/ds``.
        Falls back to ``"ground"`` when nothing is coupled.

    Raises :class:`DegenerateGroundState` whenever the ground level touches
    another level on the grid.
    """
    grid = default_grid(model) if grid is None else np.asarray(grid, dtype=float)
    ground = _ground_gaps(model, grid)
    if scope == "ground":
        prof = ground
        fun = lambda x: float(_ground_gaps(model, np.array([x]))[0])  # noqa: E731
    elif scope == "all":
        vals = np.linalg.eigvalsh(model.evaluate(grid))

        def per_s(v):
            d = np.diff(v, axis=-1)
            tol = GAP_TOLERANCE * np.maximum(np.max(np.abs(v), axis=-1), np.finfo(float).tiny)
            return np.where(d > tol[..., None], d, np.inf).min(axis=-1)

        prof = per_s(vals)
        fun = lambda x: float(per_s(np.linalg.eigvalsh(model.evaluate(x))))  # noqa: E731
    elif scope == "coupled":
        prof = _coupled_gaps(model, grid)
        if np.all(np.isnan(prof)):
            return min_gap(model, grid, scope="ground")
        prof = np.where(np.isnan(prof), np.inf, prof)

        def fun(x):
            v = _coupled_gaps(model, np.array([x]))[0]
            return float(v) if np.isfinite(v) else np.inf
    else:
        raise ValueError(f"unknown gap scope {scope!r}")
    i = int(np.argmin(prof))
    return float(_refine(fun, grid, i, maximize=False))


def derivative_norms(model, grid=None) -> DerivativeNorms:
    """Maxima of ``||d^k H/ds^k||`` for k = 1, 2, 3, plus the relevant minimum gaps."""
    grid = default_grid(model) if grid is None else np.asarray(grid, dtype=float)
    samples = {"s": grid}
    maxima = []
    for k in (1, 2, 3):
        prof = spectral_norm(model.derivative(grid, k))
        samples[f"h{k}"] = prof
        i = int(np.argmax(prof))
        if prof[i] == 0.0:
            maxima.append(0.0)
            continue
        fun = lambda x, k=k: float(spectral_norm(model.derivative(x, k)))  # noqa: E731
        maxima.append(_refine(fun, grid, i, maximize=True))
    ground = _ground_gaps(model, grid)
    samples["ground_gap"] = ground
    gmin = min_gap(model, grid, scope="coupled")
    ground_min = min_gap(model, grid, scope="ground")
    method = "analytic" if model.analytic_derivatives else "finite-difference"
    return DerivativeNorms(maxima[0], maxima[1], maxima[2], gmin, ground_min, method, samples)
