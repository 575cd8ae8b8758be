"""Run configuration: defaults, TOML file, command-line overrides.

Precedence is flags > config file > defaults.  The file is flat TOML whose
keys are the field names of :class:`RunConfig`, for example::

    seed = 7
    kernel = "noncyclic"
    grid = "3x16x16"
    holdout = 100
    tolerance = 1e-9

``grid`` left unset means: the discovery grid (2x4x4) for ``discover``, the
grid stored in the relation files for ``verify``/``compare``/``emit-tests``,
and the desk grid (3x16x16) otherwise.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cost import DEFAULT_N_HOLDOUT, DEFAULT_TOL_VALIDATE
from .exceptions import ConfigurationError
from .kernel import KERNELS, GridDims, SamplingRanges
from .relations import SPACES
from .search import SearchConfig


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    kernel: str = "cyclic"
    # second kernel for ``compare``
    against: str = "noncyclic"
    grid: str | None = None
    holdout: int = DEFAULT_N_HOLDOUT
    tolerance: float = DEFAULT_TOL_VALIDATE
    # distinctness threshold; None means 1e-6 * sqrt(D)
    distinct: float | None = None
    gf_factor: float = 2.5
    ssh_amplitude: float = 1.0
    spacing_min: float = 0.5
    spacing_max: float = 2.0
    G_min: float = 1.0
    G_max: float = 20.0
    F_min: float = 0.5
    F_max: float = 2.0
    space: str = "diagonal"
    batch_size: int = 8
    max_iterations: int = 200_000
    p_accept: float = 0.02
    sigma_init: float = 0.5
    sigma_mut: float = 0.1
    k_mut: float = 2.0
    stagnation_window: int = 5000
    sigma_floor: float = 1e-6
    epsilon_converge: float = 1e-10
    max_relations: int = 4
    max_restarts: int = 50
    max_evaluations: int | None = None
    out: str = "morphoseek-out"

    def __post_init__(self):
        for name in ("kernel", "against"):
            if getattr(self, name) not in KERNELS:
                raise ConfigurationError(f"{name} must be one of {sorted(KERNELS)}, got {getattr(self, name)!r}")
        if self.space not in SPACES:
            raise ConfigurationError(f"space must be one of {SPACES}, got {self.space!r}")
        if self.grid is not None:
            GridDims.parse(self.grid)
        if self.holdout < 1:
            raise ConfigurationError("holdout must be >= 1")
        if not self.tolerance > 0:
            raise ConfigurationError("tolerance must be > 0")
        self.ranges  # validates the sampling intervals

    @property
    def ranges(self) -> SamplingRanges:
        return SamplingRanges(self.ssh_amplitude, (self.spacing_min, self.spacing_max),
                              (self.G_min, self.G_max), (self.F_min, self.F_max))

    def dims(self, default: GridDims) -> GridDims:
        return default if self.grid is None else GridDims.parse(self.grid)

    def search_config(self, dims: GridDims) -> SearchConfig:
        return SearchConfig(
            space=self.space, dims=dims, batch_size=self.batch_size, max_iterations=self.max_iterations,
            p_accept=self.p_accept, sigma_init=self.sigma_init, sigma_mut=self.sigma_mut, k_mut=self.k_mut,
            stagnation_window=self.stagnation_window, sigma_floor=self.sigma_floor,
            epsilon_converge=self.epsilon_converge, max_relations=self.max_relations,
            max_restarts=self.max_restarts, seed=self.seed, max_evaluations=self.max_evaluations,
            n_holdout=self.holdout, tol_validate=self.tolerance, delta_distinct=self.distinct,
            ranges=self.ranges,
        )

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        """Digest of every field that can change a verdict (output path excluded)."""
        payload = {k: v for k, v in self.as_dict().items() if k != "out"}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name, value):
    default = _FIELDS[name].default
    kind = type(default)
    if value is None:
        return None
    if default is None or name == "grid":
        kind = {"grid": str, "distinct": float, "max_evaluations": int}[name]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind is float and isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigurationError(f"config key {name!r} expects {kind.__name__}, got {value!r}")
    return value


def load_config(path=None, overrides=None) -> RunConfig:
    values = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config file {path}: {exc.strerror}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid TOML: {exc}") from None
        unknown = sorted(set(data) - set(_FIELDS))
        if unknown:
            raise ConfigurationError(f"{path}: unknown config keys {unknown}")
        values.update({k: _coerce(k, v) for k, v in data.items()})
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = _coerce(key, value)
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc)) from None
