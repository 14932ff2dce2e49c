"""LP relaxation for Potts and r-HST metrics by projected subgradient descent.

For one label column sorted in descending order, the pairwise LP term is
sum_{a < b} K_ab (y_a - y_b) = sum_c y_c (U_c - L_c), where U_c sums K over
variables sorted after c and L_c over those before. Away from ties this is
linear in y, so U - L is also the (sub)gradient of the pairwise part; at ties
the two tie orders are averaged.
"""

from dataclasses import dataclass, field

import numpy as np

from .energy import label_pair_terms, rounded_energy, sorted_pair_terms
from .errors import InvalidInput, InvalidParameter, ParseError, UnsupportedCompat
from .model import Potts, TreeCompat, check_feasible, round_argmax
from .trace import EnergyTrace, SolverResult

RESTRICT_THRESHOLD = 1e-3


def project_rows_to_simplex(v):
    """Euclidean projection of every row onto the probability simplex.

    Sort-based threshold: tau solves sum_i max(v_i - tau, 0) = 1. Entries
    equal to -inf are allowed and always project to 0.
    """
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    v = np.atleast_2d(v)
    n, m = v.shape
    u = -np.sort(-v, axis=1)
    css = np.cumsum(np.where(np.isfinite(u), u, 0.0), axis=1) - 1.0
    k = np.arange(1, m + 1)
    cond = u - css / k > 0
    rho = m - 1 - np.argmax(cond[:, ::-1], axis=1)
    tau = css[np.arange(n), rho] / (rho + 1)
    out = np.maximum(v - tau[:, None], 0.0)
    return out[0] if single else out


def _check_potts(problem):
    if not isinstance(problem.compat, Potts):
        raise UnsupportedCompat("lp_subgradient handles Potts only; use rhst_subgradient for tree metrics")


def lp_subgradient(problem, y):
    """phi + (U - L) per label, from two triangular sums after a descending sort."""
    _check_potts(problem)
    return problem.unary + label_pair_terms(problem, np.asarray(y, dtype=np.float64))


@dataclass
class LPOptions:
    max_iters: int = 5
    beta0: float = 1.0
    restricted_labels: np.ndarray = None

    def __post_init__(self):
        if self.max_iters < 0:
            raise InvalidParameter(f"max_iters must be >= 0, got {self.max_iters}")
        if not self.beta0 > 0:
            raise InvalidParameter(f"beta0 must be positive, got {self.beta0}")

    def step(self, t):
        return self.beta0 / (1.0 + t)


def restrict_labels(y0, threshold=RESTRICT_THRESHOLD):
    """Labels whose largest warm-start probability exceeds ``threshold``."""
    keep = np.asarray(y0).max(axis=0) > threshold
    return np.flatnonzero(keep)


def run_lp(problem, y0, opts=None, integer_trace=True, stage="lp", tree=None):
    """Projected subgradient descent with steps beta0 / (1 + t); returns the best iterate.

    With ``tree`` (an RHSTree) the r-HST objective and subgradient are used,
    otherwise the compatibility must be Potts.
    """
    opts = opts or LPOptions()
    n, m = problem.unary.shape
    if tree is None and isinstance(problem.compat, TreeCompat):
        tree = problem.compat.tree
    if tree is None:
        _check_potts(problem)
    y = np.array(check_feasible(y0, n, m))
    mask = None
    if opts.restricted_labels is not None:
        allowed = np.zeros(m, dtype=bool)
        allowed[np.asarray(opts.restricted_labels, dtype=int)] = True
        if not allowed.any():
            raise InvalidParameter("restricted label set is empty")
        mask = ~allowed
        y[:, mask] = 0.0
        y = project_rows_to_simplex(np.where(mask, -np.inf, y))

    def evaluate(y):
        if tree is None:
            pair = label_pair_terms(problem, y)
            return float(np.sum(problem.unary * y) + np.sum(y * pair)), problem.unary + pair
        return rhst_terms(problem, tree, y)

    trace = EnergyTrace(stage)
    obj, g = evaluate(y)
    trace.record(0, obj, rounded_energy(problem, y, integer_trace))
    best_y, best_obj = y, obj
    for t in range(opts.max_iters):
        raw = y - opts.step(t) * g
        if mask is not None:
            raw = np.where(mask, -np.inf, raw)
        y = project_rows_to_simplex(raw)
        obj, g = evaluate(y)
        trace.record(t + 1, obj, rounded_energy(problem, y, integer_trace))
        if obj < best_obj:
            best_y, best_obj = y, obj
    return SolverResult(best_y, trace, {"objective": best_obj, "last_y": y})


def kt_round_samples(y, n_samples, seed, max_passes=None):
    """Independent Kleinberg-Tardos roundings of y, shape (n_samples, N).

    Each pass draws a label i and a threshold theta in (0, 1] per sample and
    assigns every still-unlabelled variable with y_a(i) >= theta to i. After
    ``max_passes`` (default 64 M) the remaining variables take their argmax.
    """
    y = np.asarray(y, dtype=np.float64)
    n, m = y.shape
    rng = np.random.default_rng(seed)
    max_passes = 64 * m if max_passes is None else max_passes
    labels = np.full((n_samples, n), -1, dtype=np.int64)
    for _ in range(max_passes):
        free = labels < 0
        if not free.any():
            break
        i = rng.integers(0, m, size=n_samples)
        theta = 1.0 - rng.random(n_samples)
        hit = free & (y[:, i].T >= theta[:, None])
        labels = np.where(hit, i[:, None], labels)
    rest = labels < 0
    if rest.any():
        labels = np.where(rest, round_argmax(y)[None, :], labels)
    return labels


def kt_round(y, seed):
    """One Kleinberg-Tardos rounding; deterministic under ``seed``."""
    return kt_round_samples(y, 1, seed)[0]


# r-HST trees


@dataclass
class RHSTree:
    """Rooted tree with edge lengths; leaf ``labels`` map node -> label.

    ``parent[root] == -1``. ``length[v]`` is the edge from v to its parent
    (0 for the root) and doubles as the subtree weight c_T of v's subtree.
    """

    parent: np.ndarray
    length: np.ndarray
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.parent = np.asarray(self.parent, dtype=np.int64)
        self.length = np.asarray(self.length, dtype=np.float64)
        self.validate()

    @property
    def n_labels(self):
        return len(self.labels)

    def children(self):
        kids = [[] for _ in range(len(self.parent))]
        for v, p in enumerate(self.parent):
            if p >= 0:
                kids[p].append(v)
        return kids

    def validate(self, r=None):
        n = len(self.parent)
        if self.length.shape != (n,):
            raise InvalidInput("one edge length per node is required")
        roots = np.flatnonzero(self.parent < 0)
        if len(roots) != 1:
            raise InvalidInput(f"tree must have exactly one root, found {len(roots)}")
        if np.any(self.parent >= n):
            raise InvalidInput("parent index out of range")
        if np.any(self.length < 0) or not np.all(np.isfinite(self.length)):
            raise InvalidInput("edge lengths must be finite and nonnegative")
        self.root = int(roots[0])
        self.depth = np.full(n, -1)
        self.depth[self.root] = 0
        order = [self.root]
        kids = self.children()
        for v in order:
            for c in kids[v]:
                self.depth[c] = self.depth[v] + 1
                order.append(c)
        if len(order) != n:
            raise InvalidInput("parent pointers contain a cycle or unreachable nodes")
        self.topo = np.array(order)
        leaves = {v for v in range(n) if not kids[v]}
        if set(self.labels) != leaves:
            raise InvalidInput("every leaf, and only leaves, must carry a label")
        if sorted(self.labels.values()) != list(range(len(leaves))):
            raise InvalidInput(f"leaf labels must be a bijection onto 0..{len(leaves) - 1}")
        if r is not None:
            if not r > 1:
                raise InvalidParameter(f"r must exceed 1, got {r}")
            for v in range(n):
                p = self.parent[v]
                if p >= 0 and p != self.root and self.length[v] * r > self.length[p] * (1 + 1e-12):
                    raise InvalidInput(f"edge of node {v} does not shrink by factor {r} from its parent's")
        return self

    def leaf_sets(self):
        """Labels below each node."""
        sets = [[] for _ in range(len(self.parent))]
        for v in self.topo[::-1]:
            if v in self.labels:
                sets[v].append(self.labels[v])
            p = self.parent[v]
            if p >= 0:
                sets[p].extend(sets[v])
        return [np.array(sorted(s), dtype=np.int64) for s in sets]

    def metric(self):
        """d(i, j): sum of edge lengths on the path between leaves i and j."""
        m = self.n_labels
        sets = self.leaf_sets()
        member = np.zeros((len(self.parent), m), dtype=bool)
        for v, s in enumerate(sets):
            member[v, s] = True
        # an edge lies on the path iff exactly one endpoint is below it
        cut = member[:, :, None] != member[:, None, :]
        return np.einsum("v,vij->ij", self.length, cut.astype(np.float64))


def parse_tree(text, path=None):
    """Parse ``node_id parent_id edge_length [label=k]`` lines; root parent is -1."""
    rows = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (3, 4):
            raise ParseError("expected 'node_id parent_id edge_length [label=k]'", path, lineno)
        try:
            node, parent, length = int(parts[0]), int(parts[1]), float(parts[2])
            label = None
            if len(parts) == 4:
                key, _, val = parts[3].partition("=")
                if key != "label":
                    raise ValueError(parts[3])
                label = int(val)
        except ValueError as exc:
            raise ParseError(f"malformed field: {exc}", path, lineno) from None
        if node in rows:
            raise ParseError(f"duplicate node id {node}", path, lineno)
        rows[node] = (parent, length, label, lineno)
    if not rows:
        raise ParseError("tree file has no nodes", path)
    ids = sorted(rows)
    index = {v: i for i, v in enumerate(ids)}
    parent, length, labels = [], [], {}
    for v in ids:
        p, ln, lab, lineno = rows[v]
        if p != -1 and p not in index:
            raise ParseError(f"unknown parent id {p}", path, lineno)
        parent.append(-1 if p == -1 else index[p])
        length.append(0.0 if p == -1 else ln)
        if lab is not None:
            labels[index[v]] = lab
    try:
        return RHSTree(parent, length, labels)
    except InvalidInput as exc:
        raise ParseError(str(exc), path) from None


def load_tree(path):
    with open(path) as fh:
        return parse_tree(fh.read(), path)


def _subtrees(tree):
    sets = tree.leaf_sets()
    return [(tree.length[v], sets[v]) for v in range(len(tree.parent)) if v != tree.root and tree.length[v] > 0]


def rhst_terms(problem, tree, y):
    """r-HST LP objective and subgradient at y, sharing the triangular sums."""
    y = np.asarray(y, dtype=np.float64)
    n, m = problem.unary.shape
    if tree.n_labels != m:
        raise InvalidInput(f"tree has {tree.n_labels} leaves, problem has {m} labels")
    total = float(np.sum(problem.unary * y))
    g = np.array(problem.unary)
    filt = problem.filter
    for c, labels in _subtrees(tree):
        yt = y[:, labels].sum(axis=1)
        gt = c * sorted_pair_terms(filt, yt)
        total += float(np.sum(yt * gt))
        g[:, labels] += gt[:, None]
    return total, g


def rhst_objective(problem, tree, y):
    """sum phi y + sum_{a != b} sum_T K_ab c_T |y_a(T) - y_b(T)| / 2."""
    return rhst_terms(problem, tree, y)[0]


def rhst_subgradient(problem, tree, y):
    """phi plus, for every subtree T, c_T (U - L) of the sorted y(T) added to the labels in T."""
    return rhst_terms(problem, tree, y)[1]
