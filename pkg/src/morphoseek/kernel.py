"""Surface kinetic energy diagnostic computed from sea level.

The application under test maps a sea-surface-height field ``ssh[t, y, x]``
plus grid spacings ``dy``, ``dx`` and the constants ``G`` and ``F`` to a time
series of area-mean kinetic energy of the geostrophic surface velocities::

    u = -(G/F) d(ssh)/dy,   v = (G/F) d(ssh)/dx,   e(t) = 0.5 * mean(u**2 + v**2)

Two implementations are provided.  :func:`energy_cyclic` wraps indices at the
domain edges (doubly periodic grid).  :func:`energy_noncyclic` ignores the
periodicity: it uses one-sided differences on the first and last rows and
clamps column indices at the first and last columns.  The two agree in the
interior and disagree at the boundary, which is exactly what translation
relations detect.

All array entry points also accept batches of flattened states, see
:func:`energy_batch`.  The flat layout is part of the relation file format:
``ssh`` in C order (t slowest, x fastest), followed by ``dy, dx, G, F``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import ConfigurationError, DimensionError, NumericError, ParameterError

N_PARAMS = 4
PARAM_NAMES = ("dy", "dx", "G", "F")


@dataclass(frozen=True)
class GridDims:
    """Shape of the discretized domain: time slices and grid points per axis."""

    T: int
    NY: int
    NX: int

    def __post_init__(self):
        for name, value, low in (("T", self.T, 1), ("NY", self.NY, 3), ("NX", self.NX, 3)):
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise DimensionError(f"{name} must be an integer, got {value!r}")
            if value < low:
                raise DimensionError(f"{name} must be >= {low}, got {value}")
            object.__setattr__(self, name, int(value))

    @property
    def n_ssh(self) -> int:
        return self.T * self.NY * self.NX

    @property
    def size(self) -> int:
        """Flat state-vector length ``T*NY*NX + 4``."""
        return self.n_ssh + N_PARAMS

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.T, self.NY, self.NX)

    @classmethod
    def parse(cls, text: str) -> "GridDims":
        """Parse ``"TxNYxNX"``, e.g. ``"3x16x16"``."""
        parts = str(text).lower().replace("×", "x").split("x")
        if len(parts) != 3:
            raise DimensionError(f"grid must look like TxNYxNX, got {text!r}")
        try:
            return cls(*(int(p) for p in parts))
        except ValueError as exc:
            raise DimensionError(f"grid must look like TxNYxNX, got {text!r}") from exc

    def as_dict(self) -> dict:
        return {"T": self.T, "NY": self.NY, "NX": self.NX}

    def __str__(self):
        return f"{self.T}x{self.NY}x{self.NX}"


DESK_GRID = GridDims(3, 16, 16)
DISCOVERY_GRID = GridDims(2, 4, 4)


@dataclass
class StateVector:
    """All atomic inputs of the kernel."""

    ssh: np.ndarray
    dy: float
    dx: float
    G: float
    F: float

    def __post_init__(self):
        self.ssh = np.asarray(self.ssh, dtype=float)
        if self.ssh.ndim != 3:
            raise DimensionError(f"ssh must have dimensions (T, NY, NX), got shape {self.ssh.shape}")
        self.dy, self.dx, self.G, self.F = (float(v) for v in (self.dy, self.dx, self.G, self.F))

    @property
    def dims(self) -> GridDims:
        return GridDims(*self.ssh.shape)

    def is_valid(self) -> bool:
        """True if the state may be passed to the energy kernels."""
        return (
            bool(np.all(np.isfinite(self.ssh)))
            and all(math.isfinite(v) for v in (self.dy, self.dx, self.G, self.F))
            and self.dy > 0
            and self.dx > 0
            and self.F != 0
        )

    def __eq__(self, other):
        if not isinstance(other, StateVector):
            return NotImplemented
        return (
            self.ssh.shape == other.ssh.shape
            and bool(np.array_equal(self.ssh, other.ssh))
            and (self.dy, self.dx, self.G, self.F) == (other.dy, other.dx, other.G, other.F)
        )


@dataclass
class VelocityField:
    u: np.ndarray
    v: np.ndarray


def flatten(state: StateVector) -> np.ndarray:
    """Canonical flat vector: ssh (C order), then dy, dx, G, F."""
    return np.concatenate([state.ssh.ravel(), [state.dy, state.dx, state.G, state.F]])


def unflatten(vec, dims: GridDims) -> StateVector:
    vec = np.asarray(vec, dtype=float)
    if vec.ndim != 1 or vec.shape[0] != dims.size:
        raise DimensionError(f"expected a flat vector of length {dims.size} for grid {dims}, got shape {vec.shape}")
    ssh = vec[: dims.n_ssh].reshape(dims.shape).copy()
    dy, dx, G, F = vec[dims.n_ssh:]
    return StateVector(ssh, dy, dx, G, F)


def norm(vec) -> float:
    """Euclidean norm of all atomic data points of ``vec``."""
    vec = np.asarray(vec, dtype=float).ravel()
    if not np.all(np.isfinite(vec)):
        raise NumericError("norm of a vector with non-finite entries")
    return float(np.sqrt(np.sum(vec * vec)))


def row_norms(vecs: np.ndarray) -> np.ndarray:
    """Norm of each row, without the finiteness check (inf/nan propagate)."""
    return np.sqrt(np.sum(vecs * vecs, axis=-1))


# -- finite differences ---------------------------------------------------------
#
# Boundary modes per axis: 0 wraps periodically, 1 switches to one-sided
# differences at the first/last index, 2 clamps the out-of-range neighbour to
# the edge (keeping the centered denominator).

WRAP, ONE_SIDED, CLAMP = 0, 1, 2
_MODES = {"cyclic": (WRAP, WRAP), "noncyclic": (ONE_SIDED, CLAMP)}


@numba.njit(cache=True, error_model="numpy")
def _stencil(k, n, mode):
    """Forward index, backward index and width (in grid steps) at index ``k``."""
    if mode == WRAP:
        return (k + 1) % n, (k - 1) % n, 2.0
    plus = min(k + 1, n - 1)
    minus = max(k - 1, 0)
    if mode == ONE_SIDED:
        return plus, minus, float(plus - minus)
    return plus, minus, 2.0


@numba.njit(cache=True, error_model="numpy")
def _velocity_rows(vecs, T, NY, NX, ymode, xmode, u, v):
    n_ssh = T * NY * NX
    for b in range(vecs.shape[0]):
        dy = vecs[b, n_ssh]
        dx = vecs[b, n_ssh + 1]
        ratio = vecs[b, n_ssh + 2] / vecs[b, n_ssh + 3]
        for t in range(T):
            base = t * NY * NX
            for j in range(NY):
                jp, jm, wy = _stencil(j, NY, ymode)
                for i in range(NX):
                    ip, im, wx = _stencil(i, NX, xmode)
                    dsdy = (vecs[b, base + jp * NX + i] - vecs[b, base + jm * NX + i]) / (wy * dy)
                    dsdx = (vecs[b, base + j * NX + ip] - vecs[b, base + j * NX + im]) / (wx * dx)
                    u[b, t, j, i] = -ratio * dsdy
                    v[b, t, j, i] = ratio * dsdx


@numba.njit(cache=True, error_model="numpy")
def _energy_rows(vecs, T, NY, NX, ymode, xmode):
    B = vecs.shape[0]
    u = np.empty((B, T, NY, NX))
    v = np.empty((B, T, NY, NX))
    _velocity_rows(vecs, T, NY, NX, ymode, xmode, u, v)
    out = np.empty((B, T))
    for b in range(B):
        for t in range(T):
            acc = 0.0
            for j in range(NY):
                for i in range(NX):
                    acc += u[b, t, j, i] * u[b, t, j, i] + v[b, t, j, i] * v[b, t, j, i]
            out[b, t] = 0.5 * acc / (NY * NX)
    return out


def _modes(kind):
    try:
        return _MODES[kind]
    except KeyError:
        raise ConfigurationError(f"unknown kernel {kind!r}; choose from {sorted(_MODES)}") from None


def kernel_domain_mask(vecs: np.ndarray, dims: GridDims) -> np.ndarray:
    """Rows of ``vecs`` that satisfy the kernel preconditions."""
    params = vecs[:, dims.n_ssh:]
    return np.isfinite(vecs).all(axis=1) & (params[:, 0] > 0) & (params[:, 1] > 0) & (params[:, 3] != 0)


def velocity_batch(vecs, dims: GridDims, kind: str = "cyclic"):
    """Velocities ``(u, v)``, each (B, T, NY, NX), for a (B, D) array of flat states."""
    vecs = np.ascontiguousarray(vecs, dtype=float)
    shape = (vecs.shape[0],) + dims.shape
    u, v = np.empty(shape), np.empty(shape)
    _velocity_rows(vecs, dims.T, dims.NY, dims.NX, *_modes(kind), u, v)
    return u, v


def energy_batch(vecs, dims: GridDims, kind: str = "cyclic") -> np.ndarray:
    """Energy series (B, T) for each row of a (B, D) array of flat states.

    Sums run in row-major order (y outer, x inner).  No precondition checks;
    rows outside the kernel domain produce inf/nan.
    """
    vecs = np.ascontiguousarray(vecs, dtype=float)
    if vecs.ndim != 2 or vecs.shape[1] != dims.size:
        raise DimensionError(f"expected an array of shape (B, {dims.size}), got {vecs.shape}")
    return _energy_rows(vecs, dims.T, dims.NY, dims.NX, *_modes(kind))


def _check_kernel_domain(state: StateVector):
    if not np.all(np.isfinite(state.ssh)) or not all(
        math.isfinite(v) for v in (state.dy, state.dx, state.G, state.F)
    ):
        raise NumericError("state contains non-finite entries")
    if state.F == 0:
        raise ParameterError("F must be nonzero")
    if state.dy <= 0 or state.dx <= 0:
        raise ParameterError(f"grid spacings must be positive, got dy={state.dy}, dx={state.dx}")


def _velocities_single(state: StateVector, kind: str) -> VelocityField:
    _check_kernel_domain(state)
    u, v = velocity_batch(flatten(state)[None], state.dims, kind)
    return VelocityField(u[0], v[0])


def velocities_cyclic(state: StateVector) -> VelocityField:
    """Geostrophic velocities with centered differences wrapped periodically."""
    return _velocities_single(state, "cyclic")


def velocities_noncyclic(state: StateVector) -> VelocityField:
    return _velocities_single(state, "noncyclic")


def _energy_single(state: StateVector, kind: str) -> np.ndarray:
    _check_kernel_domain(state)
    return energy_batch(flatten(state)[None], state.dims, kind)[0]


def energy_cyclic(state: StateVector) -> np.ndarray:
    """Kinetic energy series ``e[t]`` on a doubly periodic grid."""
    return _energy_single(state, "cyclic")


def energy_noncyclic(state: StateVector) -> np.ndarray:
    """Kinetic energy series that (wrongly) ignores the periodic boundaries.

    Rows ``j = 0`` and ``j = NY-1`` use one-sided differences; columns
    ``i = 0`` and ``i = NX-1`` clamp the out-of-range neighbour to the edge.
    """
    return _energy_single(state, "noncyclic")


energy_cyclic.kind = "cyclic"
energy_noncyclic.kind = "noncyclic"

KERNELS: dict[str, Callable[[StateVector], np.ndarray]] = {
    "cyclic": energy_cyclic,
    "noncyclic": energy_noncyclic,
}


def get_kernel(name: str):
    try:
        return KERNELS[name]
    except KeyError:
        raise ConfigurationError(f"unknown kernel {name!r}; choose from {sorted(KERNELS)}") from None


def kernel_kind(f) -> str | None:
    """``"cyclic"``/``"noncyclic"`` for the bundled kernels, else None."""
    kind = getattr(f, "kind", None)
    return kind if kind in _MODES else None


def batched(f, dims: GridDims):
    """Return ``(B, D) -> (B, T)`` evaluating ``f`` on every row.

    The vectorized path is used for the bundled kernels; any other callable
    taking a :class:`StateVector` is evaluated row by row.  Rows outside the
    kernel domain or where ``f`` raises a parameter error come back as nan.
    """
    kind = kernel_kind(f)
    if kind is not None:
        return lambda vecs: energy_batch(vecs, dims, kind)

    def loop(vecs):
        out = np.full((vecs.shape[0], dims.T), np.nan)
        for b, row in enumerate(vecs):
            try:
                out[b] = np.asarray(f(unflatten(row, dims)), dtype=float)
            except (ParameterError, NumericError):
                pass
        return out

    return loop


# -- sampling -------------------------------------------------------------------

@dataclass(frozen=True)
class SamplingRanges:
    """Distribution of random kernel inputs.

    ssh entries are uniform in ``[-ssh_amplitude, ssh_amplitude]``; spacings and
    ``G`` uniform in their intervals; ``F`` has uniform magnitude in
    ``F_magnitude`` and a random sign.
    """

    ssh_amplitude: float = 1.0
    spacing: tuple[float, float] = (0.5, 2.0)
    G: tuple[float, float] = (1.0, 20.0)
    F_magnitude: tuple[float, float] = (0.5, 2.0)

    def __post_init__(self):
        object.__setattr__(self, "spacing", tuple(float(v) for v in self.spacing))
        object.__setattr__(self, "G", tuple(float(v) for v in self.G))
        object.__setattr__(self, "F_magnitude", tuple(float(v) for v in self.F_magnitude))
        values = (self.ssh_amplitude, *self.spacing, *self.G, *self.F_magnitude)
        if not all(math.isfinite(v) for v in values):
            raise ConfigurationError("sampling ranges must be finite")
        if self.ssh_amplitude < 0:
            raise ConfigurationError("ssh_amplitude must be nonnegative")
        for name in ("spacing", "G", "F_magnitude"):
            lo, hi = getattr(self, name)
            if len(getattr(self, name)) != 2 or lo > hi:
                raise ConfigurationError(f"{name} must be an interval (low, high) with low <= high")
        if self.spacing[0] <= 0:
            raise ConfigurationError("spacing interval must be strictly positive")
        if self.F_magnitude[0] <= 0:
            raise ConfigurationError("F_magnitude interval must exclude zero")


def random_state(dims: GridDims, ranges: SamplingRanges | None = None, rng=None) -> StateVector:
    ranges = ranges or SamplingRanges()
    rng = np.random.default_rng(rng)
    a = ranges.ssh_amplitude
    ssh = rng.uniform(-a, a, size=dims.shape)
    dy, dx = rng.uniform(*ranges.spacing, size=2)
    G = rng.uniform(*ranges.G)
    F = rng.uniform(*ranges.F_magnitude) * rng.choice((-1.0, 1.0))
    return StateVector(ssh, dy, dx, G, F)


def random_states(dims: GridDims, n: int, ranges: SamplingRanges | None = None, rng=None) -> np.ndarray:
    """``n`` flattened random states as an (n, D) array, drawn in order."""
    rng = np.random.default_rng(rng)
    out = np.empty((n, dims.size))
    for k in range(n):
        out[k] = flatten(random_state(dims, ranges, rng))
    return out


# -- estimator wrapper ----------------------------------------------------------

class KineticEnergy(TransformerMixin, BaseEstimator):
    """The kernel as a stateless transformer on rows of flattened states.

    Parameters
    ----------
    grid : str or GridDims
        Grid the flat rows are laid out on, e.g. ``"3x16x16"``.
    kernel : {"cyclic", "noncyclic"}
    """

    def __init__(self, grid="3x16x16", kernel="cyclic"):
        self.grid = grid
        self.kernel = kernel

    def fit(self, X=None, y=None):
        self.dims_ = self.grid if isinstance(self.grid, GridDims) else GridDims.parse(self.grid)
        get_kernel(self.kernel)
        if X is not None:
            check_states(X, self.dims_)
        self.n_features_in_ = self.dims_.size
        return self

    def transform(self, X):
        from sklearn.utils.validation import check_is_fitted

        check_is_fitted(self, "dims_")
        X = check_states(X, self.dims_)
        if not np.all(kernel_domain_mask(X, self.dims_)):
            raise ParameterError("every row needs dy > 0, dx > 0 and F != 0")
        return energy_batch(X, self.dims_, self.kernel)


def check_states(X, dims: GridDims) -> np.ndarray:
    """Validate a 2-D array of flattened states for ``dims``."""
    from sklearn.utils import check_array

    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if X.shape[1] != dims.size:
        raise DimensionError(f"X has {X.shape[1]} columns, grid {dims} needs {dims.size}")
    return X
