"""Cost of a candidate relation and held-out validation.

For a candidate ``g``, previously known relations ``g_0 = identity, g_1, ...``
and an input ``X``::

    cost = |f(g(X)) - f(X)| / prod_i |g(X) - g_i(X)|**2

The numerator vanishes for a metamorphic relation; the denominator blows the
cost up near anything already known.  Candidates that land within
``delta_guard`` (squared distance) of a prior, or map ``X`` outside the
kernel domain, get ``+inf``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .exceptions import ConfigurationError, DimensionError
from .kernel import (_MODES, GridDims, StateVector, _energy_rows, batched, flatten, kernel_domain_mask,
                     kernel_kind, random_states, row_norms)
from .relations import AffineRelation, N_PARAMS

DEFAULT_TOL_VALIDATE = 1e-8
DEFAULT_N_HOLDOUT = 50


def default_delta_guard(dims: GridDims) -> float:
    return 1e-12 * dims.size


def default_delta_distinct(dims: GridDims) -> float:
    return 1e-6 * math.sqrt(dims.size)


def is_identity(rel: AffineRelation) -> bool:
    if np.any(rel.beta != 0):
        return False
    if rel.space == "dense":
        return bool(np.array_equal(rel.alpha, np.eye(rel.dims.size)))
    if rel.space == "diagonal":
        return bool(np.all(rel.alpha == 1))
    a = rel.alpha
    return bool(
        np.array_equal(a.ssh_perm, np.arange(rel.dims.n_ssh))
        and np.array_equal(a.param_perm, np.arange(N_PARAMS))
        and np.all(a.ssh_scale == 1)
        and np.all(a.param_scale == 1)
    )


def _check_priors(g: AffineRelation, priors):
    if not priors:
        raise ConfigurationError("priors must contain at least the identity")
    if not is_identity(priors[0]):
        raise ConfigurationError("priors[0] must be the identity relation")
    for p in priors:
        if p.dims != g.dims:
            raise DimensionError(f"prior on grid {p.dims} does not match candidate grid {g.dims}")


@numba.njit(cache=True, error_model="numpy")
def _fused_costs(image, reference, prior_images, T, NY, NX, ymode, xmode, guard):
    """Per-row costs for the bundled kernels, same rules as the numpy path."""
    B, D = image.shape
    n_ssh = T * NY * NX
    costs = np.full(B, np.inf)
    valid = np.ones(B, dtype=np.bool_)
    den = np.ones(B)
    for b in range(B):
        for k in range(D):
            if not np.isfinite(image[b, k]):
                valid[b] = False
        if image[b, n_ssh] <= 0 or image[b, n_ssh + 1] <= 0 or image[b, n_ssh + 3] == 0:
            valid[b] = False
        for p in range(prior_images.shape[0]):
            d2 = 0.0
            for k in range(D):
                diff = image[b, k] - prior_images[p, b, k]
                d2 += diff * diff
            if d2 < guard:
                valid[b] = False
            den[b] *= d2
        if not np.isfinite(den[b]):
            valid[b] = False
    energies = _energy_rows(image, T, NY, NX, ymode, xmode)
    for b in range(B):
        if valid[b]:
            acc = 0.0
            for t in range(T):
                diff = energies[b, t] - reference[b, t]
                acc += diff * diff
            num = np.sqrt(acc)
            if np.isfinite(num):
                costs[b] = num / den[b]
    return costs


class BatchCost:
    """Cost evaluator over a fixed batch of inputs.

    Energies of the unmodified batch and the images of the batch under every
    prior are computed once, so repeated evaluation during a descent only pays
    for the candidate itself.  Calling the instance returns the per-input
    costs; :meth:`mean` aggregates them.
    """

    def __init__(self, priors, batch, f, dims: GridDims, delta_guard=None):
        self.dims = dims
        self.batch = np.asarray(batch, dtype=float)
        if self.batch.ndim != 2 or self.batch.shape[0] == 0:
            raise ConfigurationError("batch must be a nonempty list of states")
        if self.batch.shape[1] != dims.size:
            raise DimensionError(f"batch rows have length {self.batch.shape[1]}, grid {dims} needs {dims.size}")
        self.f = batched(f, dims)
        self.delta_guard = default_delta_guard(dims) if delta_guard is None else delta_guard
        self.reference = self.f(self.batch)
        self.prior_images = [p.apply(self.batch) for p in priors]
        self.n_evaluations = 0
        kind = kernel_kind(f)
        self._fast = _MODES[kind] if kind is not None else None
        self._prior_stack = np.ascontiguousarray(np.stack(self.prior_images)) if priors else None

    def __call__(self, g: AffineRelation) -> np.ndarray:
        return self.costs_of_image(g.apply(self.batch))

    def costs_of_image(self, image: np.ndarray) -> np.ndarray:
        """Per-input costs given the image of the batch under a candidate."""
        self.n_evaluations += 1
        if self._fast is not None:
            return _fused_costs(np.ascontiguousarray(image), self.reference, self._prior_stack,
                                self.dims.T, self.dims.NY, self.dims.NX, *self._fast, self.delta_guard)
        B = image.shape[0]
        costs = np.full(B, np.inf)
        with np.errstate(over="ignore", invalid="ignore"):
            den = np.ones(B)
            for prior_image in self.prior_images:
                d2 = row_norms(image - prior_image) ** 2
                den = np.where(d2 < self.delta_guard, np.nan, den * d2)
            ok = kernel_domain_mask(image, self.dims) & np.isfinite(den)
            if not np.any(ok):
                return costs
            num = row_norms(self.f(image[ok]) - self.reference[ok])
            costs[ok] = np.where(np.isfinite(num), num / den[ok], np.inf)
        return costs

    def mean(self, g: AffineRelation) -> float:
        costs = self(g)
        if np.any(np.isinf(costs)):
            return math.inf
        return float(np.mean(costs))


def cost_single(g: AffineRelation, priors, X: StateVector, f) -> float:
    """Cost of ``g`` on a single input; ``+inf`` near a prior or off-domain."""
    _check_priors(g, priors)
    if X.dims != g.dims:
        raise DimensionError(f"state on grid {X.dims} does not match relation grid {g.dims}")
    return float(BatchCost(priors, flatten(X)[None], f, g.dims)(g)[0])


def cost_batch(g: AffineRelation, priors, batch, f) -> float:
    """Mean cost over ``batch``; ``+inf`` if any member is ``+inf``."""
    _check_priors(g, priors)
    if len(batch) == 0:
        raise ConfigurationError("cost_batch needs a nonempty batch")
    rows = [flatten(s) if isinstance(s, StateVector) else np.asarray(s, dtype=float) for s in batch]
    return BatchCost(priors, np.array(rows), f, g.dims).mean(g)


@dataclass
class ValidationReport:
    max_rel_err: float
    mean_rel_err: float
    min_prior_distance: float
    n_inputs: int
    passed: bool
    tol_validate: float
    delta_distinct: float
    rel_errs: np.ndarray = field(repr=False, default=None)

    def as_dict(self) -> dict:
        return {
            "max_rel_err": self.max_rel_err,
            "mean_rel_err": self.mean_rel_err,
            "min_prior_distance": self.min_prior_distance,
            "n_inputs": self.n_inputs,
            "passed": self.passed,
        }


def relative_errors(g: AffineRelation, f, X: np.ndarray) -> np.ndarray:
    """``|f(g(x)) - f(x)| / (|f(x)| + 1e-12*T)`` for each row ``x``; inf off-domain."""
    dims = g.dims
    fb = batched(f, dims)
    image = g.apply(X)
    errs = np.full(X.shape[0], np.inf)
    ok = kernel_domain_mask(image, dims)
    if np.any(ok):
        with np.errstate(over="ignore", invalid="ignore"):
            ref = fb(X[ok])
            err = row_norms(fb(image[ok]) - ref) / (row_norms(ref) + 1e-12 * dims.T)
        errs[ok] = np.where(np.isfinite(err), err, np.inf)
    return errs


def validate(g: AffineRelation, priors, f, rng=None, n_holdout=DEFAULT_N_HOLDOUT,
             tol_validate=DEFAULT_TOL_VALIDATE, delta_distinct=None, ranges=None) -> ValidationReport:
    """Check ``g`` on ``n_holdout`` fresh random inputs.

    Passes when the worst relative error is below ``tol_validate`` and ``g``
    stays farther than ``delta_distinct`` from every prior on every input.
    """
    if n_holdout < 1:
        raise ConfigurationError("n_holdout must be at least 1")
    _check_priors(g, priors)
    dims = g.dims
    if delta_distinct is None:
        delta_distinct = default_delta_distinct(dims)
    X = random_states(dims, n_holdout, ranges, rng)
    errs = relative_errors(g, f, X)
    image = g.apply(X)
    min_dist = min(float(np.min(row_norms(image - p.apply(X)))) for p in priors)
    max_err = float(np.max(errs))
    return ValidationReport(
        max_rel_err=max_err,
        mean_rel_err=float(np.mean(errs)),
        min_prior_distance=min_dist,
        n_inputs=n_holdout,
        passed=bool(max_err < tol_validate and min_dist > delta_distinct),
        tol_validate=tol_validate,
        delta_distinct=delta_distinct,
        rel_errs=errs,
    )
