"""Model Hamiltonians ``H(s)`` on ``s`` in [0, 1] and a JSON loader.

Every model evaluates on scalars (returning an ``(N, N)`` matrix) and on
arrays of ``s`` (returning a stack ``(..., N, N)``).  Models whose entries
depend on the total evolution time carry ``t_dependent = True`` and must be
bound to a concrete ``T`` with :meth:`HamiltonianModel.at_time` before use.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, InputError, ParseError, UnknownModel, ValidationError
from .linalg import check_hermitian, default_grid, finite_difference, spectral_norm


class HamiltonianModel:
    """Base class.  Subclasses implement :meth:`_evaluate` and :meth:`_derivative`.

    Attributes
    ----------
    name : str
        Builtin name used by the loader.
    dim : int
        Hilbert-space dimension ``N``.
    t_dependent : bool
        Whether the entries depend on the total evolution time ``T``.
    time_scale : float
        Shortest scale in ``s`` on which ``H`` varies; sets default sampling
        density and finite-difference steps.
    analytics : object or None
        Closed-form reference quantities, when known.
    """

    name = "model"
    t_dependent = False
    analytic_derivatives = True

    def __init__(self, dim: int, time_scale: float = 1.0, analytics=None):
        self.dim = int(dim)
        self.time_scale = float(time_scale)
        self.analytics = analytics

    def evaluate(self, s):
        return self._evaluate(np.asarray(s, dtype=float))

    def derivative(self, s, k: int):
        if k not in (1, 2, 3):
            raise ValueError("derivative order must be 1, 2 or 3")
        return self._derivative(np.asarray(s, dtype=float), k)

    def _evaluate(self, s):
        raise NotImplementedError

    def _derivative(self, s, k):
        return finite_difference(self._evaluate, s, k, scale=self.time_scale)

    def at_time(self, T: float) -> "HamiltonianModel":
        """Model with the total time fixed; identity for time-independent models."""
        return self

    def norm_max(self, grid=None) -> float:
        """Largest spectral norm of ``H(s)`` over the default grid."""
        grid = default_grid(self) if grid is None else grid
        return float(np.max(spectral_norm(self.evaluate(grid))))

    def config(self) -> dict:
        """JSON-serialisable description accepted by :func:`load_model`."""
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


def _matrix_to_pairs(M):
    M = np.asarray(M, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in M]


class LinearInterpolationModel(HamiltonianModel):
    """``H(s) = (1 - s) H0 + s H1``."""

    name = "linear"

    def __init__(self, H0, H1, analytics=None):
        H0 = check_hermitian(H0)
        H1 = check_hermitian(H1)
        if H0.shape != H1.shape:
            raise DimensionMismatch(f"H0 has shape {H0.shape}, H1 has shape {H1.shape}")
        if H0.shape[0] < 2:
            raise DimensionMismatch("need N >= 2")
        super().__init__(H0.shape[0], 1.0, analytics)
        self.H0 = H0
        self.H1 = H1
        self.H0.setflags(write=False)
        self.H1.setflags(write=False)
        self._D = H1 - H0

    def _evaluate(self, s):
        return self.H0 + s[..., None, None] * self._D

    def _derivative(self, s, k):
        shape = s.shape + (self.dim, self.dim)
        if k == 1:
            return np.broadcast_to(self._D, shape).copy()
        return np.zeros(shape, dtype=complex)

    def config(self):
        return {"model": "linear", "H0": _matrix_to_pairs(self.H0),
                "H1": _matrix_to_pairs(self.H1)}


def linear_interpolation_model(H0, H1) -> LinearInterpolationModel:
    return LinearInterpolationModel(H0, H1)


def constant_model(H) -> LinearInterpolationModel:
    return LinearInterpolationModel(H, H)


def two_level_toy_model() -> LinearInterpolationModel:
    """Ground energy 0 and excited energy ``1 + s`` with no coupling."""
    m = LinearInterpolationModel(np.diag([0.0, 1.0]), np.diag([0.0, 2.0]))
    m.name = "toy"
    return m


@dataclass(frozen=True)
class SearchAnalytics:
    """Closed forms for the interpolating search Hamiltonian of dimension ``N``.

    The two relevant levels live in the plane spanned by the uniform state
    and the marked state; the ground state is rotated by ``phi(s)`` from the
    uniform state towards the marked state, reaching ``theta`` at ``s = 1``.
    """

    N: int

    @property
    def theta(self) -> float:
        return float(np.arccos(1.0 / np.sqrt(self.N)))

    def gap(self, s):
        s = np.asarray(s, dtype=float)
        return np.sqrt(1.0 - 4.0 * (1.0 - 1.0 / self.N) * s * (1.0 - s))

    def phi(self, s):
        s = np.asarray(s, dtype=float)
        t2 = 2.0 * self.theta
        return 0.5 * np.arctan2(s * np.sin(t2), 1.0 - s + s * np.cos(t2))

    def phi_dot(self, s):
        return np.sin(2.0 * self.theta) / (2.0 * self.gap(s) ** 2)

    def s_of_phi(self, phi):
        """Inverse of :meth:`phi` in closed form."""
        u = 2.0 * np.asarray(phi, dtype=float)
        t2 = 2.0 * self.theta
        den = np.sin(t2) * np.cos(u) + (1.0 - np.cos(t2)) * np.sin(u)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(u == 0.0, 0.0, np.sin(u) / den)
        return np.clip(out, 0.0, 1.0)

    def uniform_state(self) -> np.ndarray:
        return np.full(self.N, 1.0 / np.sqrt(self.N), dtype=complex)

    def marked_state(self) -> np.ndarray:
        v = np.zeros(self.N, dtype=complex)
        v[0] = 1.0
        return v

    def eigenvectors(self, s):
        """Ground and first excited state at ``s``, both real and transported."""
        th = self.theta
        ph = float(self.phi(s))
        u, m = self.uniform_state(), self.marked_state()
        ground = (np.sin(th - ph) * u + np.sin(ph) * m) / np.sin(th)
        excited = (np.cos(th - ph) * u - np.cos(ph) * m) / np.sin(th)
        return ground, excited

    def energies(self, s):
        g = self.gap(s)
        return 0.5 * (1.0 - g), 0.5 * (1.0 + g)


def search_eigvectors(analytics: SearchAnalytics, s):
    return analytics.eigenvectors(s)


class SearchModel(LinearInterpolationModel):
    """``H(s) = 1 - (1 - s)|u><u| - s|m><m|`` with ``u`` uniform and ``m = e_0``."""

    name = "search"

    def __init__(self, N: int):
        if int(N) != N or N < 2:
            raise ValidationError(f"search model needs integer N >= 2, got {N!r}")
        an = SearchAnalytics(int(N))
        u, m = an.uniform_state(), an.marked_state()
        eye = np.eye(int(N), dtype=complex)
        super().__init__(eye - np.outer(u, u.conj()), eye - np.outer(m, m.conj()), an)

    def config(self):
        return {"model": "search", "N": self.dim}


def search_model(N: int) -> SearchModel:
    return SearchModel(N)


_PAULI = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)


class MarzlinSandersModel(HamiltonianModel):
    """Bloch-vector Hamiltonian ``H(s) = b(s) . (sx, sy, sz)`` of the resonant counterexample.

    With ``tau = T**softening``, ``w = omega0 * tau`` and ``A = 2 pi / tau``::

        b(s) = omega0 (cos 2 pi s, sin 2 pi s, 0)
               + A sin(w s) (-sin 2 pi s cos(w s), cos 2 pi s cos(w s), sin(w s))

    ``softening = 1`` is the original model.  Smaller values slow the drive
    and shrink its amplitude together, so that ``||d2H/ds2||`` grows like
    ``T**softening``.  Each component is expanded into a short cosine series
    so derivatives of every order are exact.
    """

    name = "marzlin_sanders"
    t_dependent = True

    def __init__(self, omega0: float = 1.0, softening: float = 1.0, T: Optional[float] = None):
        if not omega0 > 0:
            raise ValidationError(f"omega0 must be positive, got {omega0!r}")
        if not 0.0 <= softening <= 1.0:
            raise ValidationError(f"softening must lie in [0, 1], got {softening!r}")
        if T is not None and not T > 0:
            raise ValidationError(f"T must be positive, got {T!r}")
        self.omega0 = float(omega0)
        self.softening = float(softening)
        self.T = None if T is None else float(T)
        time_scale = 1.0
        if self.T is not None:
            tau = self.T ** self.softening
            w = self.omega0 * tau
            time_scale = 2 * np.pi / (2 * np.pi + 2 * w)
            A = 2 * np.pi / tau
            h = -np.pi / 2
            # (component, amplitude, frequency, phase)
            self._terms = [
                (0, self.omega0, 2 * np.pi, 0.0),
                (0, -A / 4, 2 * np.pi - 2 * w, 0.0),
                (0, A / 4, 2 * np.pi + 2 * w, 0.0),
                (1, self.omega0, 2 * np.pi, h),
                (1, A / 4, 2 * np.pi + 2 * w, h),
                (1, -A / 4, 2 * np.pi - 2 * w, h),
                (2, A / 2, 0.0, 0.0),
                (2, -A / 2, 2 * w, 0.0),
            ]
        super().__init__(2, time_scale)

    def at_time(self, T: float) -> "MarzlinSandersModel":
        return MarzlinSandersModel(self.omega0, self.softening, T)

    def bloch_vector(self, s, k: int = 0):
        """``d^k b / ds^k`` as an array of shape ``s.shape + (3,)``."""
        if self.T is None:
            raise InputError("Marzlin-Sanders model needs a total time; call at_time(T)")
        s = np.asarray(s, dtype=float)
        b = np.zeros(s.shape + (3,))
        for comp, amp, freq, ph in self._terms:
            if k and freq == 0.0:
                continue
            b[..., comp] += amp * freq ** k * np.cos(freq * s + ph + k * np.pi / 2)
        return b

    def _evaluate(self, s):
        return np.einsum("...i,ijk->...jk", self.bloch_vector(s), _PAULI)

    def _derivative(self, s, k):
        return np.einsum("...i,ijk->...jk", self.bloch_vector(s, k), _PAULI)

    def gap(self, s):
        """Closed-form gap ``2 |b(s)|``."""
        tau = self.T ** self.softening
        s = np.asarray(s, dtype=float)
        return 2.0 * np.sqrt(self.omega0 ** 2
                             + (2 * np.pi * np.sin(self.omega0 * s * tau) / tau) ** 2)

    def config(self):
        out = {"model": "marzlin_sanders", "omega0": self.omega0, "softening": self.softening}
        if self.T is not None:
            out["T"] = self.T
        return out

    def __repr__(self):
        return (f"MarzlinSandersModel(omega0={self.omega0}, softening={self.softening}, "
                f"T={self.T})")


def marzlin_sanders_model(omega0: float = 1.0, T: Optional[float] = None,
                          softening: float = 1.0) -> MarzlinSandersModel:
    return MarzlinSandersModel(omega0, softening, T)


class FunctionModel(HamiltonianModel):
    """Model from a Python callable ``f(s) -> (N, N)``; derivatives by finite differences."""

    name = "function"
    analytic_derivatives = False

    def __init__(self, fn: Callable, dim: int, time_scale: float = 1.0,
                 step: Optional[float] = None):
        super().__init__(dim, time_scale)
        self._fn = fn
        self._step = step

    def _evaluate(self, s):
        flat = np.atleast_1d(s).ravel()
        out = np.stack([np.asarray(self._fn(float(x)), dtype=complex) for x in flat])
        return out.reshape(np.shape(s) + (self.dim, self.dim))

    def _derivative(self, s, k):
        return finite_difference(self._evaluate, s, k, step=self._step, scale=self.time_scale)


class ScaledModel(HamiltonianModel):
    """``lam * H(s)``; combined with ``T / lam`` the dynamics are unchanged."""

    def __init__(self, base: HamiltonianModel, lam: float):
        super().__init__(base.dim, base.time_scale, None)
        self.base = base
        self.lam = float(lam)
        self.name = base.name
        self.analytic_derivatives = base.analytic_derivatives

    def _evaluate(self, s):
        return self.lam * self.base.evaluate(s)

    def _derivative(self, s, k):
        return self.lam * self.base.derivative(s, k)


class ReversedModel(HamiltonianModel):
    """``H(1 - s)``."""

    def __init__(self, base: HamiltonianModel):
        super().__init__(base.dim, base.time_scale, None)
        self.base = base
        self.name = base.name
        self.analytic_derivatives = base.analytic_derivatives

    def _evaluate(self, s):
        return self.base.evaluate(1.0 - s)

    def _derivative(self, s, k):
        return (-1.0) ** k * self.base.derivative(1.0 - s, k)


def _parse_matrix(value, field: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{field}: entries must be numbers or [re, im] pairs") from exc
    if arr.ndim == 3 and arr.shape[-1] == 2:
        arr = arr[..., 0] + 1j * arr[..., 1]
    elif arr.ndim != 2:
        raise ParseError(f"{field}: expected an N x N array of [re, im] pairs, got shape {arr.shape}")
    if arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"{field}: matrix is {arr.shape[0]} x {arr.shape[1]}")
    return arr.astype(complex)


def _number(cfg, key, default, kind=float):
    v = cfg.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"field {key!r} must be a number, got {v!r}")
    if kind is int and int(v) != v:
        raise ParseError(f"field {key!r} must be an integer, got {v!r}")
    return kind(v)


def load_model(config) -> HamiltonianModel:
    """Build a model from a JSON string or an already-decoded dict.

    Recognised ``model`` values: ``search`` (``N``), ``marzlin_sanders``
    (``omega0``, ``softening``, optional ``T``), ``linear`` (``H0``, ``H1``),
    ``constant`` (``H``) and ``toy``.  Matrices are nested arrays whose
    entries are real numbers or ``[re, im]`` pairs.
    """
    if isinstance(config, (str, bytes)):
        try:
            config = json.loads(config)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(config, dict):
        raise ParseError("model config must be a JSON object")
    kind = config.get("model")
    if not isinstance(kind, str):
        raise ParseError("model config needs a string field 'model'")
    if kind == "search":
        if "N" not in config:
            raise ParseError("search model needs field 'N'")
        return SearchModel(_number(config, "N", None, int))
    if kind == "marzlin_sanders":
        T = config.get("T")
        if T is not None:
            T = _number(config, "T", None)
        return MarzlinSandersModel(_number(config, "omega0", 1.0),
                                   _number(config, "softening", 1.0), T)
    if kind == "linear":
        for key in ("H0", "H1"):
            if key not in config:
                raise ParseError(f"linear model needs field {key!r}")
        return LinearInterpolationModel(_parse_matrix(config["H0"], "H0"),
                                        _parse_matrix(config["H1"], "H1"))
    if kind == "constant":
        if "H" not in config:
            raise ParseError("constant model needs field 'H'")
        H = _parse_matrix(config["H"], "H")
        return constant_model(H)
    if kind == "toy":
        return two_level_toy_model()
    raise UnknownModel(f"unknown model {kind!r}")
