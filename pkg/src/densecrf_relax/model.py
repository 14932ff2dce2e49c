"""Dense CRF problem instances, feature construction and rounding."""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np

from .errors import InvalidInput, InvalidParameter, UnsupportedCompat
from .filtering import Backend, GaussianFilter, build_filter

NSD_TOL = 1e-8


@dataclass(frozen=True)
class KernelSpec:
    """One Gaussian kernel of the pixel compatibility mixture.

    ``features`` are pre-scaled so the kernel is exp(-|f_a - f_b|^2 / 2).
    """

    weight: float
    features: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats[:, None]
        if feats.ndim != 2 or feats.shape[1] < 1:
            raise InvalidInput("kernel features must be an (N, d) matrix with d >= 1")
        if not np.all(np.isfinite(feats)):
            raise InvalidInput("kernel features must be finite")
        if not (np.isfinite(self.weight) and self.weight >= 0):
            raise InvalidParameter(f"kernel weight must be >= 0, got {self.weight}")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "weight", float(self.weight))


class Potts:
    """mu(i, j) = [i != j]."""

    def __eq__(self, other):
        return isinstance(other, Potts)

    def __hash__(self):
        return hash("potts")

    def __repr__(self):
        return "Potts()"

    def matrix(self, n_labels):
        return 1.0 - np.eye(n_labels)


@dataclass(frozen=True, eq=False)
class MatrixCompat:
    """Dense symmetric label compatibility with zero diagonal."""

    mu: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=np.float64)
        if mu.ndim != 2 or mu.shape[0] != mu.shape[1]:
            raise InvalidInput("compatibility matrix must be square")
        if not np.all(np.isfinite(mu)):
            raise InvalidInput("compatibility matrix must be finite")
        if not np.allclose(mu, mu.T, rtol=0, atol=1e-12):
            raise InvalidInput("compatibility matrix must be symmetric")
        if np.any(np.diag(mu) != 0):
            raise InvalidInput("compatibility matrix must have a zero diagonal")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    def matrix(self, n_labels):
        if self.mu.shape[0] != n_labels:
            raise InvalidInput(f"compatibility is {self.mu.shape[0]}x{self.mu.shape[0]}, expected {n_labels} labels")
        return np.array(self.mu)


@dataclass(frozen=True)
class TreeCompat:
    """Label compatibility given by an r-HST tree metric (LP path only)."""

    tree: "object"

    def matrix(self, n_labels):
        # the r-HST LP counts every ordered pair with a factor 1/2
        return 0.5 * self.tree.metric()


LabelCompatibility = Union[Potts, MatrixCompat, TreeCompat]


@dataclass(frozen=True)
class ShiftedCompat:
    """Result of :func:`canonicalize_compat`: mu = shifted + offset_coeff * ones."""

    shifted: np.ndarray
    offset_coeff: float
    is_nsd: bool


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Immutable dense CRF: unary costs, Gaussian kernels and label compatibility.

    The Gaussian filter used by solvers is built lazily with ``backend``.
    """

    unary: np.ndarray
    kernels: Sequence[KernelSpec]
    compat: LabelCompatibility = field(default_factory=Potts)
    backend: Backend = Backend.EXACT
    filter_options: Optional[dict] = None

    def __post_init__(self):
        unary = np.array(self.unary, dtype=np.float64)
        if unary.ndim != 2:
            raise InvalidInput("unary must be an N x M matrix")
        n, m = unary.shape
        if n < 1 or m < 1:
            raise InvalidInput(f"unary must be non-empty, got shape {unary.shape}")
        if not np.all(np.isfinite(unary)):
            raise InvalidInput("unary costs must be finite")
        kernels = tuple(self.kernels)
        if not kernels:
            raise InvalidInput("at least one kernel is required")
        for k in kernels:
            if k.features.shape[0] != n:
                raise InvalidInput(
                    f"kernel features have {k.features.shape[0]} rows, unary has {n}"
                )
        if isinstance(self.compat, MatrixCompat) and self.compat.mu.shape[0] != m:
            raise InvalidInput(
                f"compatibility matrix is {self.compat.mu.shape[0]}x{self.compat.mu.shape[0]}, unary has {m} labels"
            )
        if isinstance(self.compat, TreeCompat) and self.compat.tree.n_labels != m:
            raise InvalidInput(f"tree has {self.compat.tree.n_labels} leaves, unary has {m} labels")
        unary.setflags(write=False)
        object.__setattr__(self, "unary", unary)
        object.__setattr__(self, "kernels", kernels)
        object.__setattr__(self, "backend", Backend(self.backend))

    @property
    def n_vars(self):
        return self.unary.shape[0]

    @property
    def n_labels(self):
        return self.unary.shape[1]

    @cached_property
    def filter(self) -> GaussianFilter:
        return build_filter(self.kernels, self.backend, **(self.filter_options or {}))

    @cached_property
    def mu(self):
        """Dense M x M label compatibility matrix."""
        mu = self.compat.matrix(self.n_labels)
        mu.setflags(write=False)
        return mu

    def with_backend(self, backend, **filter_options):
        return ProblemInstance(self.unary, self.kernels, self.compat, Backend(backend), filter_options or None)

    def with_unary(self, unary):
        """Same pairwise model with a different unary matrix; shares the built filter."""
        other = ProblemInstance(unary, self.kernels, self.compat, self.backend, self.filter_options)
        if "filter" in self.__dict__:
            other.__dict__["filter"] = self.filter
        return other


def build_features(image, w1, sigma1, w2, sigma_spc, sigma_col):
    """Two-kernel pixel compatibility features for an H x W x 3 raster.

    Kernel 1 is a spatial smoothness kernel on (column, row) / sigma1; kernel 2
    is the bilateral appearance kernel on (column, row) / sigma_spc and
    (r, g, b) / sigma_col. Pixels are enumerated in row-major order.
    """
    image = np.asarray(image)
    if image.ndim == 2:
        image = image[:, :, None]
    if image.ndim != 3 or image.shape[2] != 3:
        raise InvalidInput(f"expected an H x W x 3 raster, got shape {image.shape}")
    h, w = image.shape[:2]
    if h == 0 or w == 0:
        raise InvalidInput("image has no pixels")
    for name, s in (("sigma1", sigma1), ("sigma_spc", sigma_spc), ("sigma_col", sigma_col)):
        if not s > 0:
            raise InvalidParameter(f"{name} must be positive, got {s}")
    for name, wt in (("w1", w1), ("w2", w2)):
        if not wt >= 0:
            raise InvalidParameter(f"{name} must be nonnegative, got {wt}")

    rows, cols = np.mgrid[0:h, 0:w]
    pos = np.column_stack([cols.ravel(), rows.ravel()]).astype(np.float64)
    rgb = image.reshape(-1, 3).astype(np.float64)
    return [
        KernelSpec(w1, pos / sigma1),
        KernelSpec(w2, np.column_stack([pos / sigma_spc, rgb / sigma_col])),
    ]


def _max_eig(a):
    return float(np.linalg.eigvalsh(a)[-1])


def canonicalize_compat(compat, n_labels):
    """Split mu into a negative semi-definite part plus a multiple of all-ones.

    On the feasible set the all-ones part only contributes the constant
    ``offset_coeff * sum_{a != b} K_ab``, so solvers can work with ``shifted``.
    Potts is resolved analytically (shifted = -I, offset 1). For a dense matrix
    the offset starts at max(mu, 0) and grows only if that is not yet enough.
    """
    if isinstance(compat, TreeCompat):
        raise UnsupportedCompat("tree compatibilities are only handled by the r-HST LP path")
    if isinstance(compat, Potts):
        return ShiftedCompat(-np.eye(n_labels), 1.0, True)

    mu = compat.matrix(n_labels)
    ones = np.ones_like(mu)
    c = max(float(mu.max()), 0.0)
    if _max_eig(mu - c * ones) <= NSD_TOL:
        return ShiftedCompat(mu - c * ones, c, True)

    # mu - c 11^T can only become NSD if mu is NSD on the complement of 1
    basis = np.linalg.qr(np.column_stack([np.ones(n_labels), np.eye(n_labels)[:, : n_labels - 1]]))[0][:, 1:]
    if n_labels > 1 and _max_eig(basis.T @ mu @ basis) > NSD_TOL:
        return ShiftedCompat(mu - c * ones, c, False)
    hi = max(c, 1.0)
    while _max_eig(mu - hi * ones) > NSD_TOL:
        hi *= 2.0
    lo = c
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _max_eig(mu - mid * ones) > NSD_TOL:
            lo = mid
        else:
            hi = mid
    return ShiftedCompat(mu - hi * ones, hi, True)


def round_argmax(y):
    """Row-wise argmax; ties go to the smallest label index."""
    y = np.asarray(y)
    return np.argmax(y, axis=1)


def one_hot(labels, n_labels):
    labels = np.asarray(labels)
    out = np.zeros((labels.shape[0], n_labels))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def check_labeling(labels, n_vars, n_labels):
    labels = np.asarray(labels)
    if labels.shape != (n_vars,):
        raise InvalidInput(f"labeling must have length {n_vars}, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise InvalidInput("labels must be integers")
    if labels.size and (labels.min() < 0 or labels.max() >= n_labels):
        raise InvalidInput(f"labels must lie in [0, {n_labels})")
    return labels


def check_feasible(y, n_vars, n_labels, tol=1e-9):
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (n_vars, n_labels):
        raise InvalidInput(f"assignment must be {n_vars} x {n_labels}, got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise InvalidInput("assignment has non-finite entries")
    if y.min() < -tol or y.max() > 1 + tol:
        raise InvalidInput("assignment entries must lie in [0, 1]")
    if np.abs(y.sum(axis=1) - 1.0).max() > tol:
        raise InvalidInput("assignment rows must sum to 1")
    return y


def uniform_assignment(n_vars, n_labels):
    return np.full((n_vars, n_labels), 1.0 / n_labels)
