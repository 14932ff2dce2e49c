"""Gaussian kernel summation over a fixed feature set.

Two backends share one interface:

* ``Backend.EXACT`` evaluates sum_b K_ab v_b literally. The dense N x N matrix
  is kept when N <= dense_cap and streamed in row blocks otherwise.
* ``Backend.LATTICE`` uses one permutohedral lattice per kernel, scaled by a
  per-kernel calibration factor: the ratio of exact to lattice sums on the
  all-ones vector, so magnitudes match the exact sums on average.

Triangular sums t_c = sum_{a > c} K_ac (upper) and sum_{a < c} K_ac (lower) in
a permuted order are computed by recursive halving: the two diagonal blocks
recurse, the off-diagonal block is one two-column masked apply, and blocks of
at most ``base`` points are summed exactly.
"""

import enum

import numpy as np

from ..errors import InvalidInput, InvalidParameter
from .lattice import PermutohedralLattice

DENSE_CAP = 4096
TRI_BASE = 64
CALIBRATION_ROWS = 512
_BLOCK_ENTRIES = 1 << 22


class Backend(str, enum.Enum):
    EXACT = "exact"
    LATTICE = "lattice"


class TriangularSide(str, enum.Enum):
    UPPER = "upper"
    LOWER = "lower"


def _sq_dists(fa, fb):
    # per-coordinate differences, no cancellation from the |x|^2 expansion
    sq = np.zeros((fa.shape[0], fb.shape[0]))
    for k in range(fa.shape[1]):
        diff = fa[:, k, None] - fb[None, :, k]
        sq += diff * diff
    return sq


def _neumaier_add(total, comp, x):
    t = total + x
    comp += np.where(np.abs(total) >= np.abs(x), (total - t) + x, (x - t) + total)
    return t, comp


class GaussianFilter:
    """Prepared operator v -> K v with K_ab = sum_m w_m exp(-|f_a - f_b|^2 / 2).

    ``n_applies`` counts calls to :meth:`apply` (instrumentation only).
    """

    def __init__(self, features, weights, backend=Backend.EXACT, dense_cap=DENSE_CAP,
                 base=TRI_BASE, dilate=1, tri_dilate=0):
        self.backend = Backend(backend)
        self.features = [np.ascontiguousarray(f, dtype=np.float64) for f in features]
        self.weights = np.asarray(weights, dtype=np.float64)
        if not self.features:
            raise InvalidInput("at least one kernel is required")
        self.n = self.features[0].shape[0]
        if any(f.shape[0] != self.n for f in self.features):
            raise InvalidInput("all kernels must have the same number of feature rows")
        if base < 1:
            raise InvalidParameter(f"base must be >= 1, got {base}")
        self.w_total = float(self.weights.sum())
        self.dense_cap = dense_cap
        self.base = base
        self.dilate = dilate
        self.tri_dilate = tri_dilate
        self.n_applies = 0
        self.last_tri_stats = None
        self._row_sums = None
        self._dense = None
        self._lattices = None
        self.calibration = np.ones(len(self.features))
        self.tri_calibration = np.ones(len(self.features))

        if self.backend is Backend.EXACT:
            if self.n <= dense_cap:
                self._dense = self.kernel_block(np.arange(self.n), np.arange(self.n))
        else:
            self._lattices = [PermutohedralLattice(f, dilate=dilate) for f in self.features]
            self.calibration = np.array([self._calibrate(lat, m) for m, lat in enumerate(self._lattices)])
            # triangular sums use cheaper lattices, calibrated on their own
            self.tri_calibration = np.array([
                c if tri_dilate == dilate else self._calibrate(PermutohedralLattice(f, dilate=tri_dilate), m)
                for m, (f, c) in enumerate(zip(self.features, self.calibration))
            ])

    # exact primitives

    def kernel_block(self, rows, cols, kernels=None):
        """Dense K[rows][:, cols] computed from the features."""
        out = np.zeros((len(rows), len(cols)))
        for m in kernels if kernels is not None else range(len(self.features)):
            f = self.features[m]
            out += self.weights[m] * np.exp(-0.5 * _sq_dists(f[rows], f[cols]))
        return out

    def _exact_product(self, rows, cols, values, kernels=None):
        """K[rows][:, cols] @ values, streamed in row blocks."""
        step = max(1, _BLOCK_ENTRIES // max(len(cols), 1))
        out = np.empty((len(rows), values.shape[1]))
        for s in range(0, len(rows), step):
            out[s:s + step] = self.kernel_block(rows[s:s + step], cols, kernels) @ values
        return out

    def _calibrate(self, lattice, m):
        """Ratio of exact to lattice row sums of kernel m on a fixed row sample."""
        approx = lattice.apply(np.ones(self.n))
        if self.n <= CALIBRATION_ROWS:
            rows = np.arange(self.n)
        else:
            rows = np.sort(np.random.default_rng(0).choice(self.n, CALIBRATION_ROWS, replace=False))
        if self.weights[m] == 0:
            return 1.0
        exact = self._exact_product(rows, np.arange(self.n), np.ones((self.n, 1)), kernels=[m])[:, 0]
        return float(exact.sum() / self.weights[m] / approx[rows].sum())

    def dense_matrix(self):
        """Full K with exact values regardless of backend (read-only); only sensible for small N."""
        if self._dense is None:
            idx = np.arange(self.n)
            dense = self.kernel_block(idx, idx)
            if self.n > self.dense_cap:
                return dense
            dense.setflags(write=False)
            self._dense = dense
        return self._dense

    # public operations

    def apply(self, values, include_self=True):
        """v'_a = sum_b K_ab v_b column-wise; without the self term when include_self is False."""
        values = np.asarray(values, dtype=np.float64)
        squeeze = values.ndim == 1
        v = values[:, None] if squeeze else values
        if v.ndim != 2 or v.shape[0] != self.n:
            raise InvalidInput(f"values must have {self.n} rows, got shape {values.shape}")
        self.n_applies += 1
        if self.backend is Backend.EXACT:
            if self._dense is not None:
                out = self._dense @ v
            else:
                idx = np.arange(self.n)
                out = self._exact_product(idx, idx, v)
        else:
            out = np.zeros_like(v)
            for m, lat in enumerate(self._lattices):
                out += (self.weights[m] * self.calibration[m]) * lat.apply(v)
        if not include_self:
            out = out - self.w_total * v
        return out[:, 0] if squeeze else out

    def row_sums_excluding_self(self):
        """sum_{b != a} K_ab for every a (cached)."""
        if self._row_sums is None:
            self._row_sums = self.apply(np.ones(self.n), include_self=False)
            self._row_sums.setflags(write=False)
        return self._row_sums

    def triangular_sum(self, order, side):
        """t_c = sum over a after (Upper) or before (Lower) c in ``order`` of K_ac.

        The result is indexed by position in ``order``.
        """
        upper, lower = self.triangular_sums(order)
        return upper if TriangularSide(side) is TriangularSide.UPPER else lower

    def triangular_sums(self, order):
        """Both triangular sums in one recursion, indexed by position in ``order``."""
        order = np.asarray(order)
        if (order.shape != (self.n,) or not np.issubdtype(order.dtype, np.integer)
                or not np.array_equal(np.sort(order), np.arange(self.n))):
            raise InvalidInput(f"order must be a permutation of range({self.n})")
        upper = np.zeros(self.n)
        lower = np.zeros(self.n)
        cu = np.zeros(self.n)
        cl = np.zeros(self.n)

        nodes = [(0, self.n)]
        applies = levels = 0
        while nodes:
            leaves = [(lo, hi) for lo, hi in nodes if hi - lo <= self.base]
            split = [(lo, hi) for lo, hi in nodes if hi - lo > self.base]
            for lo, hi in leaves:
                idx = order[lo:hi]
                blk = self.kernel_block(idx, idx)
                upper[lo:hi], cu[lo:hi] = _neumaier_add(upper[lo:hi], cu[lo:hi], np.triu(blk, 1).sum(axis=1))
                lower[lo:hi], cl[lo:hi] = _neumaier_add(lower[lo:hi], cl[lo:hi], np.tril(blk, -1).sum(axis=1))
            if not split:
                break
            levels += 1
            applies += len(split)
            up_part, low_part = self._cross_sums(order, split)
            for (lo, hi), a, b in zip(split, up_part, low_part):
                mid = lo + (hi - lo + 1) // 2
                upper[lo:mid], cu[lo:mid] = _neumaier_add(upper[lo:mid], cu[lo:mid], a)
                lower[mid:hi], cl[mid:hi] = _neumaier_add(lower[mid:hi], cl[mid:hi], b)
            nodes = []
            for lo, hi in split:
                mid = lo + (hi - lo + 1) // 2
                nodes += [(lo, mid), (mid, hi)]
        self.last_tri_stats = {"applies": applies, "levels": levels}
        return upper + cu, lower + cl

    def _cross_sums(self, order, nodes):
        """Off-diagonal block sums for each node (lo, hi), split at ceil.

        Returns per node the sums over the right half for left-half points and
        the sums over the left half for right-half points.
        """
        if self.backend is Backend.EXACT:
            ups, lows = [], []
            for lo, hi in nodes:
                mid = lo + (hi - lo + 1) // 2
                left, right = order[lo:mid], order[mid:hi]
                ups.append(self._exact_product(left, right, np.ones((len(right), 1)))[:, 0])
                lows.append(self._exact_product(right, left, np.ones((len(left), 1)))[:, 0])
            return ups, lows

        # one grouped lattice per level: node id keeps blocks apart
        pos = np.concatenate([np.arange(lo, hi) for lo, hi in nodes])
        groups = np.concatenate([np.full(hi - lo, g) for g, (lo, hi) in enumerate(nodes)])
        right = np.concatenate([np.arange(hi - lo) >= (hi - lo + 1) // 2 for lo, hi in nodes])
        masks = np.column_stack([right, ~right]).astype(np.float64)
        out = np.zeros((len(pos), 2))
        for m, f in enumerate(self.features):
            lat = PermutohedralLattice(f[order[pos]], groups=groups, dilate=self.tri_dilate)
            out += (self.weights[m] * self.tri_calibration[m]) * lat.apply(masks)
        ups, lows = [], []
        start = 0
        for lo, hi in nodes:
            mid_off = (hi - lo + 1) // 2
            seg = out[start:start + hi - lo]
            ups.append(seg[:mid_off, 0])
            lows.append(seg[mid_off:, 1])
            start += hi - lo
        return ups, lows


def build_filter(kernels, backend=Backend.EXACT, **options):
    """Prepare a :class:`GaussianFilter` from a list of KernelSpec."""
    kernels = list(kernels)
    if not kernels:
        raise InvalidInput("at least one kernel is required")
    n = kernels[0].features.shape[0]
    for k in kernels:
        if k.features.shape[0] != n:
            raise InvalidInput(f"kernel feature row counts differ: {k.features.shape[0]} vs {n}")
    return GaussianFilter([k.features for k in kernels], [k.weight for k in kernels], backend, **options)
