"""Affine input transformations ``X' = alpha @ X + beta`` on flat states.

A relation lives in one of three coefficient spaces:

``dense``
    full ``D x D`` matrix ``alpha``.
``diagonal``
    ``alpha`` is a length-``D`` vector (element-wise scaling).
``signed-perm-scale``
    the ssh block is permuted and rescaled entry by entry
    (``out[ssh_perm[k]] = ssh_scale[k] * x[k]``); the four parameters
    ``dy, dx, G, F`` are rescaled by ``param_scale`` and, for the
    transposition only, permuted by ``param_perm``.

Every space also carries a full offset vector ``beta``.  The structured
spaces are exact sub-families of the dense one; :meth:`AffineRelation.to_dense`
gives the equivalent matrix.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import DimensionError, FormatError, ParameterError, ShapeError
from .kernel import N_PARAMS, GridDims, row_norms

SCHEMA = "morphoseek-relation/1"
SPACES = ("dense", "diagonal", "signed-perm-scale")


@dataclass(frozen=True)
class SignedPermScale:
    ssh_perm: np.ndarray
    ssh_scale: np.ndarray
    param_scale: np.ndarray
    param_perm: np.ndarray = field(default_factory=lambda: np.arange(N_PARAMS))


@dataclass(frozen=True, eq=False)
class AffineRelation:
    """Candidate or known metamorphic transformation on flat state vectors.

    Instances are treated as immutable; the coefficient arrays are marked
    read-only on construction.
    """

    dims: GridDims
    space: str
    alpha: object
    beta: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        D, n = self.dims.size, self.dims.n_ssh
        if self.space not in SPACES:
            raise ParameterError(f"unknown space {self.space!r}; expected one of {SPACES}")
        beta = _frozen(self.beta, float)
        if beta.shape != (D,):
            raise DimensionError(f"beta must have length {D}, got shape {beta.shape}")
        object.__setattr__(self, "beta", beta)
        if self.space == "dense":
            alpha = _frozen(self.alpha, float)
            if alpha.shape != (D, D):
                raise DimensionError(f"dense alpha must be {D}x{D}, got shape {alpha.shape}")
        elif self.space == "diagonal":
            alpha = _frozen(self.alpha, float)
            if alpha.shape != (D,):
                raise DimensionError(f"diagonal alpha must have length {D}, got shape {alpha.shape}")
        else:
            a = self.alpha
            alpha = SignedPermScale(
                _frozen(a.ssh_perm, np.intp),
                _frozen(a.ssh_scale, float),
                _frozen(a.param_scale, float),
                _frozen(a.param_perm, np.intp),
            )
            if alpha.ssh_perm.shape != (n,) or alpha.ssh_scale.shape != (n,):
                raise DimensionError(f"ssh_perm and ssh_scale must have length {n}")
            if alpha.param_scale.shape != (N_PARAMS,) or alpha.param_perm.shape != (N_PARAMS,):
                raise DimensionError(f"param_scale and param_perm must have length {N_PARAMS}")
            if not _is_permutation(alpha.ssh_perm, n):
                raise ParameterError("ssh_perm is not a permutation of the ssh indices")
            if not _is_permutation(alpha.param_perm, N_PARAMS):
                raise ParameterError("param_perm is not a permutation of the parameter indices")
            if np.any(alpha.param_scale == 0):
                raise ParameterError("param_scale entries must be nonzero")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "meta", dict(self.meta))
        if not all(np.all(np.isfinite(c)) for c in self.coefficient_arrays()):
            raise ParameterError("relation coefficients must be finite")

    @property
    def name(self) -> str | None:
        return self.meta.get("name")

    def coefficient_arrays(self):
        if self.space == "signed-perm-scale":
            return [self.alpha.ssh_scale, self.alpha.param_scale, self.beta]
        return [self.alpha, self.beta]

    def with_meta(self, **meta) -> "AffineRelation":
        return replace(self, meta={**self.meta, **meta})

    def apply(self, vec) -> np.ndarray:
        """Image of one flat vector, or of each row of a 2-D array."""
        X = np.asarray(vec, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.ndim != 2 or X.shape[1] != self.dims.size:
            raise DimensionError(
                f"relation on grid {self.dims} expects vectors of length {self.dims.size}, got shape {np.shape(vec)}"
            )
        out = self._apply_rows(X)
        return out[0] if single else out

    def _apply_rows(self, X: np.ndarray) -> np.ndarray:
        if self.space == "dense":
            out = X @ self.alpha.T
        elif self.space == "diagonal":
            out = X * self.alpha
        else:
            n = self.dims.n_ssh
            a = self.alpha
            out = np.empty_like(X)
            out[:, a.ssh_perm] = X[:, :n] * a.ssh_scale
            out[:, n + a.param_perm] = X[:, n:] * a.param_scale
        out += self.beta
        return out

    def transform(self, X) -> np.ndarray:
        """Row-wise :meth:`apply` for an (n_samples, D) array."""
        from sklearn.utils import check_array

        return self.apply(check_array(X, dtype=np.float64))

    def to_dense(self) -> np.ndarray:
        D, n = self.dims.size, self.dims.n_ssh
        if self.space == "dense":
            return np.array(self.alpha)
        if self.space == "diagonal":
            return np.diag(self.alpha)
        a = self.alpha
        mat = np.zeros((D, D))
        mat[a.ssh_perm, np.arange(n)] = a.ssh_scale
        mat[n + a.param_perm, n + np.arange(N_PARAMS)] = a.param_scale
        return mat

    def as_dense(self) -> "AffineRelation":
        return AffineRelation(self.dims, "dense", self.to_dense(), self.beta, self.meta)

    def same_coefficients(self, other: "AffineRelation") -> bool:
        if self.dims != other.dims or self.space != other.space:
            return False
        if self.space == "signed-perm-scale":
            a, b = self.alpha, other.alpha
            pairs = zip((a.ssh_perm, a.ssh_scale, a.param_scale, a.param_perm),
                        (b.ssh_perm, b.ssh_scale, b.param_scale, b.param_perm))
        else:
            pairs = [(self.alpha, other.alpha)]
        return all(np.array_equal(x, y) for x, y in pairs) and np.array_equal(self.beta, other.beta)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<AffineRelation{label} space={self.space} grid={self.dims}>"


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _is_permutation(perm: np.ndarray, n: int) -> bool:
    return perm.shape == (n,) and np.array_equal(np.sort(perm), np.arange(n))


def apply(rel: AffineRelation, vec) -> np.ndarray:
    return rel.apply(vec)


def distance(a: AffineRelation, b: AffineRelation, vec) -> float:
    """Norm of the difference of the two images of ``vec``."""
    if a.dims != b.dims:
        raise DimensionError(f"relations live on different grids: {a.dims} vs {b.dims}")
    diff = a.apply(vec) - b.apply(vec)
    return float(row_norms(diff)) if diff.ndim == 1 else row_norms(diff)


# -- constructors ---------------------------------------------------------------

def identity(dims: GridDims, space: str = "signed-perm-scale") -> AffineRelation:
    D, n = dims.size, dims.n_ssh
    if space == "dense":
        alpha = np.eye(D)
    elif space == "diagonal":
        alpha = np.ones(D)
    else:
        alpha = SignedPermScale(np.arange(n), np.ones(n), np.ones(N_PARAMS))
    return AffineRelation(dims, space, alpha, np.zeros(D), {"name": "identity"})


def _ssh_permutation(dims: GridDims, index_map) -> np.ndarray:
    """Target flat index for every source ssh index.

    ``index_map`` maps the (t, j, i) index grids to the target (t, j, i).
    """
    t, j, i = np.indices(dims.shape)
    tt, jj, ii = index_map(t, j, i)
    return np.ravel_multi_index((tt, jj, ii), dims.shape).ravel()


def _sps(dims, name, perm=None, ssh_scale=1.0, param_scale=(1, 1, 1, 1), param_perm=None, **meta):
    n = dims.n_ssh
    alpha = SignedPermScale(
        np.arange(n) if perm is None else perm,
        np.full(n, float(ssh_scale)),
        np.asarray(param_scale, dtype=float),
        np.arange(N_PARAMS) if param_perm is None else np.asarray(param_perm),
    )
    return AffineRelation(dims, "signed-perm-scale", alpha, np.zeros(dims.size), {"name": name, **meta})


def negate_ssh(dims):
    return _sps(dims, "negate_ssh", ssh_scale=-1.0)


def negate_y(dims):
    """Mirror the ssh field along y (the y -> -y sign change on a periodic grid)."""
    return _sps(dims, "negate_y", _ssh_permutation(dims, lambda t, j, i: (t, dims.NY - 1 - j, i)))


def negate_x(dims):
    return _sps(dims, "negate_x", _ssh_permutation(dims, lambda t, j, i: (t, j, dims.NX - 1 - i)))


def negate_G(dims):
    return _sps(dims, "negate_G", param_scale=(1, 1, -1, 1))


def negate_F(dims):
    return _sps(dims, "negate_F", param_scale=(1, 1, 1, -1))


def scale_gf(dims, factor=2.5):
    """Scale G and F by the same nonzero factor."""
    if factor == 0 or not math.isfinite(factor):
        raise ParameterError("scale_gf needs a finite nonzero factor")
    return _sps(dims, "scale_gf", param_scale=(1, 1, factor, factor), factor=float(factor))


def translate(dims, sy, sx):
    """Cyclic shift of ssh by ``sy`` rows and ``sx`` columns."""
    perm = _ssh_permutation(dims, lambda t, j, i: (t, (j + sy) % dims.NY, (i + sx) % dims.NX))
    return _sps(dims, f"translate_{sy}_{sx}", perm)


def transpose_xy(dims):
    """Swap the y and x axes of ssh together with the spacings dy and dx."""
    if dims.NY != dims.NX:
        raise ShapeError(f"transposition needs a square grid, got NY={dims.NY}, NX={dims.NX}")
    perm = _ssh_permutation(dims, lambda t, j, i: (t, i, j))
    return _sps(dims, "transpose_xy", perm, param_perm=(1, 0, 2, 3))


CATALOGUE_TRANSLATIONS = ((0, 1), (1, 0), (3, 2))


def known_symmetries(dims: GridDims, gf_factor: float = 2.5) -> dict[str, AffineRelation]:
    """Hand-derived symmetries of the kernel, keyed by name.

    The scaling factor and the translation steps are arbitrary representatives
    of their families.  The transposition is only included on square grids.
    """
    rels = [negate_ssh(dims), negate_y(dims), negate_x(dims), negate_G(dims), negate_F(dims),
            scale_gf(dims, gf_factor)]
    rels += [translate(dims, sy, sx) for sy, sx in CATALOGUE_TRANSLATIONS]
    if dims.NY == dims.NX:
        rels.append(transpose_xy(dims))
    return {r.name: r for r in rels}


# -- serialization --------------------------------------------------------------

def to_document(rel: AffineRelation) -> dict:
    if rel.space == "signed-perm-scale":
        a = rel.alpha
        alpha = {
            "ssh_perm": a.ssh_perm.tolist(),
            "ssh_scale": a.ssh_scale.tolist(),
            "param_scale": a.param_scale.tolist(),
        }
        if not np.array_equal(a.param_perm, np.arange(N_PARAMS)):
            alpha["param_perm"] = a.param_perm.tolist()
    else:
        alpha = rel.alpha.ravel().tolist()
    return {
        "schema": SCHEMA,
        "dims": rel.dims.as_dict(),
        "space": rel.space,
        "alpha": alpha,
        "beta": rel.beta.tolist(),
        "meta": rel.meta,
    }


def serialize(rel: AffineRelation) -> bytes:
    # json writes floats via repr, the shortest round-trip representation
    return (json.dumps(to_document(rel), allow_nan=False) + "\n").encode("utf-8")


def _number_list(value, length, location, integer=False):
    if not isinstance(value, list):
        raise FormatError("expected an array", location)
    if len(value) != length:
        raise FormatError(f"expected {length} entries, got {len(value)}", location)
    kinds = (int,) if integer else (int, float)
    for k, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, kinds):
            raise FormatError(f"entry {k} is not a{'n integer' if integer else ' number'}", location)
        if not integer and not math.isfinite(v):
            raise FormatError(f"entry {k} is not finite", location)
    return np.array(value, dtype=np.intp if integer else float)


def from_document(doc) -> AffineRelation:
    if not isinstance(doc, dict):
        raise FormatError("relation document must be a JSON object", "$")
    if doc.get("schema") != SCHEMA:
        raise FormatError(f"unsupported schema {doc.get('schema')!r}, expected {SCHEMA!r}", "schema")
    raw_dims = doc.get("dims")
    if not isinstance(raw_dims, dict) or set(raw_dims) != {"T", "NY", "NX"}:
        raise FormatError("dims must be an object with keys T, NY, NX", "dims")
    try:
        dims = GridDims(raw_dims["T"], raw_dims["NY"], raw_dims["NX"])
    except DimensionError as exc:
        raise FormatError(str(exc), "dims") from None
    D, n = dims.size, dims.n_ssh
    space = doc.get("space")
    if space not in SPACES:
        raise FormatError(f"unknown space {space!r}", "space")
    raw = doc.get("alpha")
    if space == "dense":
        alpha = _number_list(raw, D * D, "alpha").reshape(D, D)
    elif space == "diagonal":
        alpha = _number_list(raw, D, "alpha")
    else:
        if not isinstance(raw, dict):
            raise FormatError("signed-perm-scale alpha must be an object", "alpha")
        unknown = set(raw) - {"ssh_perm", "ssh_scale", "param_scale", "param_perm"}
        if unknown:
            raise FormatError(f"unknown keys {sorted(unknown)}", "alpha")
        perm = _number_list(raw.get("ssh_perm"), n, "alpha.ssh_perm", integer=True)
        if not _is_permutation(perm, n):
            raise FormatError("not a permutation of the ssh indices", "alpha.ssh_perm")
        param_perm = np.arange(N_PARAMS)
        if "param_perm" in raw:
            param_perm = _number_list(raw["param_perm"], N_PARAMS, "alpha.param_perm", integer=True)
            if not _is_permutation(param_perm, N_PARAMS):
                raise FormatError("not a permutation of the parameter indices", "alpha.param_perm")
        param_scale = _number_list(raw.get("param_scale"), N_PARAMS, "alpha.param_scale")
        if np.any(param_scale == 0):
            raise FormatError("entries must be nonzero", "alpha.param_scale")
        alpha = SignedPermScale(perm, _number_list(raw.get("ssh_scale"), n, "alpha.ssh_scale"),
                                param_scale, param_perm)
    beta = _number_list(doc.get("beta"), D, "beta")
    meta = doc.get("meta", {})
    if not isinstance(meta, dict):
        raise FormatError("meta must be an object", "meta")
    return AffineRelation(dims, space, alpha, beta, meta)


def deserialize(data) -> AffineRelation:
    if isinstance(data, (bytes, bytearray)):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"not UTF-8: {exc}", "$") from None
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})", "$") from None
    return from_document(doc)
