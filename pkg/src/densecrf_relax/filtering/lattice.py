"""Permutohedral lattice for approximate high-dimensional Gaussian filtering.

Splat / blur / slice, vectorized with numpy. The operator computed is
approximately proportional to

    out_a = sum_b exp(-|f_a - f_b|^2 / 2) v_b

No per-point normalization is applied; callers that need magnitudes
comparable to the exact sum multiply by a global calibration factor.

Two additions to the textbook construction, both optional:

* ``dilate`` adds rings of lattice neighbours around occupied vertices before
  blurring. Blurring only across vertices that received a splat drops mass
  whenever a blur path leaves the occupied set, and for image features (a 2-D
  sheet in 5-D) how much is dropped depends on local geometry.
* ``groups`` keys vertices by (group, coordinates), so points of different
  groups never interact and many small filtering problems share one pass.
"""

import numpy as np
import scipy.sparse as sp

_CODE_LIMIT = 1 << 62


def _elevate(features):
    n, d = features.shape
    i = np.arange(d, dtype=np.float64)
    # splat + blur + slice has variance 2/3 (d+1)^2 per axis in lattice units
    scale = np.sqrt(2.0 / 3.0) * (d + 1) / np.sqrt((i + 1) * (i + 2))
    cf = features * scale
    suffix = np.zeros((n, d + 1))
    suffix[:, :d] = np.cumsum(cf[:, ::-1], axis=1)[:, ::-1]
    elevated = np.empty((n, d + 1))
    elevated[:, 0] = suffix[:, 0]
    elevated[:, 1:] = suffix[:, 1:] - np.arange(1, d + 1) * cf
    return elevated


def _simplex_vertices(elevated):
    """Enclosing simplex keys (n, d+1, d) and barycentric weights (n, d+1)."""
    n, dp1 = elevated.shape
    d = dp1 - 1
    v = elevated / dp1
    up = np.ceil(v) * dp1
    down = np.floor(v) * dp1
    rem0 = np.where(up - elevated < elevated - down, up, down).astype(np.int64)
    total = rem0.sum(axis=1) // dp1

    diff = elevated - rem0
    # rank[i] = #{j > i: diff_j > diff_i} + #{j < i: diff_j >= diff_i}
    gt = diff[:, None, :] > diff[:, :, None]
    ge = diff[:, None, :] >= diff[:, :, None]
    upper = np.triu(np.ones((dp1, dp1), dtype=bool), 1)
    rank = (gt & upper).sum(axis=2) + (ge & upper.T).sum(axis=2)

    rank = rank + total[:, None]
    low = rank < 0
    high = rank > d
    rank = np.where(low, rank + dp1, np.where(high, rank - dp1, rank))
    rem0 = np.where(low, rem0 + dp1, np.where(high, rem0 - dp1, rem0))

    bary = np.zeros((n, d + 2))
    w = (elevated - rem0) / dp1
    rows = np.arange(n)[:, None]
    bary[rows, d - rank] += w
    bary[rows, d - rank + 1] -= w
    bary[:, 0] += 1.0 + bary[:, d + 1]

    r = np.arange(dp1)[:, None, None]
    canonical = np.where(rank[None, :, :d] <= d - r, r, r - dp1)
    keys = rem0[None, :, :d] + canonical
    return np.transpose(keys, (1, 0, 2)), bary[:, :dp1]


def _blur_steps(d, width):
    """Key offsets of the d+1 blur directions, left-padded with zeros to ``width``."""
    steps = np.zeros((d + 1, width), dtype=np.int64)
    steps[:, width - d:] = -1
    for j in range(d):
        steps[j, width - d + j] = d
    return steps


def _radix(keys, margin):
    """Multipliers of a mixed-radix int64 code for ``keys`` (None on overflow)."""
    lo = keys.min(axis=0) - margin
    span = keys.max(axis=0) + margin - lo + 1
    total = 1
    for s in span:
        total *= int(s)
    if total >= _CODE_LIMIT:
        return None, None
    mult = np.ones(len(span), dtype=np.int64)
    for c in range(len(span) - 2, -1, -1):
        mult[c] = mult[c + 1] * span[c + 1]
    return lo, mult


def _lookup_rows(table, queries):
    """Index of each query row in the row-unique ``table``; -1 where absent."""
    n = len(table)
    _, inv = np.unique(np.vstack([table, queries]), axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    where = np.full(inv.max() + 1, -1, dtype=np.int64)
    where[inv[:n]] = np.arange(n)
    return where[inv[n:]]


class PermutohedralLattice:
    """Splat-blur-slice operator prepared for a fixed point set.

    Parameters
    ----------
    features : (N, d) array
        Point positions, already divided by the kernel bandwidth.
    groups : (N,) int array, optional
        Points with different group labels are filtered independently.
    dilate : int
        Rings of unoccupied neighbour vertices added before blurring.
    shift : (d,) array, optional
        Translation of the point set relative to the lattice.
    """

    def __init__(self, features, groups=None, dilate=1, shift=None):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] < 1 or features.shape[0] < 1:
            raise ValueError("features must be a non-empty (N, d) array with d >= 1")
        n, d = features.shape
        self.n, self.d = n, d
        self.alpha = 1.0 / (1.0 + 2.0 ** (-d))

        pts = features - features.min(axis=0)
        if shift is not None:
            pts = pts + np.asarray(shift, dtype=np.float64)
        keys, bary = _simplex_vertices(_elevate(pts))
        keys = keys.reshape(n * (d + 1), d)
        if groups is not None:
            g = np.repeat(np.asarray(groups, dtype=np.int64), d + 1)
            keys = np.column_stack([g, keys])
        steps = _blur_steps(d, keys.shape[1])

        lo, mult = _radix(keys, (dilate + 1) * (d + 1))
        if mult is not None:
            # the code is linear in the key, so lattice steps become fixed offsets
            codes = (keys - lo) @ mult
            deltas = steps @ mult
            table = np.unique(codes)
            for _ in range(dilate):
                ring = [table] + [table + s * dl for dl in deltas for s in (1, -1)]
                table = np.unique(np.concatenate(ring))
            vertex = np.searchsorted(table, codes)
            m = len(table)

            def find(q):
                pos = np.minimum(np.searchsorted(table, q), m - 1)
                return np.where(table[pos] == q, pos, -1)

            neighbours = [(find(table + dl), find(table - dl)) for dl in deltas]
        else:
            table = np.unique(keys, axis=0)
            for _ in range(dilate):
                ring = [table] + [table + s * st for st in steps for s in (1, -1)]
                table = np.unique(np.vstack(ring), axis=0)
            vertex = _lookup_rows(table, keys)
            m = len(table)
            neighbours = [(_lookup_rows(table, table + st), _lookup_rows(table, table - st)) for st in steps]

        self.n_vertices = m
        self._splat = sp.csr_matrix(
            (bary.reshape(-1), (vertex, np.repeat(np.arange(n), d + 1))), shape=(m, n)
        )
        self._slice = (self._splat.T * self.alpha).tocsr()
        # absent neighbours read the zero row at index m
        self._neighbours = [
            (np.append(np.where(a < 0, m, a), m), np.append(np.where(b < 0, m, b), m))
            for a, b in neighbours
        ]

    def apply(self, values):
        """Filter ``values`` of shape (N,) or (N, C)."""
        values = np.asarray(values, dtype=np.float64)
        squeeze = values.ndim == 1
        if squeeze:
            values = values[:, None]
        grid = np.zeros((self.n_vertices + 1, values.shape[1]))
        grid[:-1] = self._splat @ values
        for n1, n2 in self._neighbours:
            grid = grid + 0.5 * (grid[n1] + grid[n2])
        out = self._slice @ grid[:-1]
        return out[:, 0] if squeeze else out
