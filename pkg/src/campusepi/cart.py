"""CART regression trees: greedy SSE splits, weakest-link pruning, K-fold CV.

Trees are stored as a preorder list of :class:`Node`; each node's subtree
occupies the contiguous slice ``nodes[node.id : node.end]``. Pruned subtrees
are never copied during model selection. A node is internal in step ``k`` of
a :class:`PruneSequence` iff ``collapse_step[node.id] > k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FIXED_SIZES = (10, 25, 50, 100, 200)


@dataclass(frozen=True)
class TreeControl:
    min_node_rows: int = 20
    min_leaf_rows: int = 7
    min_improvement_fraction: float = 1e-6


@dataclass(frozen=True)
class AnalysisDataset:
    X: np.ndarray
    y: np.ndarray
    names: tuple[str, ...]
    phi: float | None = None

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X must be (n, p) with n matching y")
        if self.X.shape[1] != len(self.names):
            raise ValueError("one name per predictor column required")
        if not (np.isfinite(self.X).all() and np.isfinite(self.y).all()):
            raise ValueError("dataset contains missing or non-finite values")

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, rows) -> "AnalysisDataset":
        return AnalysisDataset(self.X[rows], self.y[rows], self.names, self.phi)


@dataclass
class Node:
    id: int
    n: int
    mean: float
    sse: float
    depth: int = 0
    var: int | None = None
    value: float | None = None
    improvement: float = 0.0
    left: "Node | None" = None
    right: "Node | None" = None
    end: int = 0  # one past the last preorder index in this subtree

    @property
    def is_leaf(self) -> bool:
        return self.var is None


@dataclass(frozen=True)
class SplitCandidate:
    var: int
    value: float
    improvement: float


def candidate_splits(x: np.ndarray, y: np.ndarray, min_leaf: int) -> list[SplitCandidate]:
    """Every midpoint cut of every column, with its SSE reduction."""
    out = []
    yc = y - y.mean()
    n = len(y)
    for j in range(x.shape[1]):
        levels, inv = np.unique(x[:, j], return_inverse=True)
        if len(levels) < 2:
            continue
        cnt = np.bincount(inv, minlength=len(levels))
        tot = np.bincount(inv, weights=yc, minlength=len(levels))
        n_left = np.cumsum(cnt)[:-1]
        s_left = np.cumsum(tot)[:-1]
        n_right = n - n_left
        # with centred y the parent mean is zero, so gain = s_L^2 * n / (n_L * n_R)
        gain = s_left**2 * n / (n_left * n_right)
        for i in range(len(levels) - 1):
            if n_left[i] >= min_leaf and n_right[i] >= min_leaf:
                out.append(SplitCandidate(j, 0.5 * (levels[i] + levels[i + 1]), float(gain[i])))
    return out


def best_split(
    x: np.ndarray, y: np.ndarray, min_leaf: int, tol: float = 0.0
) -> SplitCandidate | None:
    """Largest improvement; near-ties (within ``tol``) keep the lower variable, then value."""
    best = None
    for cand in candidate_splits(x, y, min_leaf):
        if best is None or cand.improvement > best.improvement + tol:
            best = cand
    return best


class RegressionTree:
    def __init__(self, nodes: list[Node], names: Sequence[str]):
        self.nodes = nodes
        self.names = tuple(names)

    @property
    def root(self) -> Node:
        return self.nodes[0]

    @property
    def n_splits(self) -> int:
        return sum(not nd.is_leaf for nd in self.nodes)

    def internal(self) -> list[Node]:
        return [nd for nd in self.nodes if not nd.is_leaf]

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([self.predict_one(x) for x in X])

    def predict_one(self, x) -> float:
        nd = self.root
        while not nd.is_leaf:
            nd = nd.left if x[nd.var] <= nd.value else nd.right
        return nd.mean

    def leaf_paths(self, X: np.ndarray) -> np.ndarray:
        """(n_rows, max_depth + 1) node ids along each row's root-to-leaf path.

        Rows that reach their leaf early are padded by repeating the leaf id.
        """
        depth = max(nd.depth for nd in self.nodes)
        out = np.zeros((len(X), depth + 1), dtype=np.int64)
        cur = np.zeros(len(X), dtype=np.int64)
        var = np.array([-1 if nd.is_leaf else nd.var for nd in self.nodes])
        val = np.array([0.0 if nd.is_leaf else nd.value for nd in self.nodes])
        left = np.array([nd.left.id if nd.left else nd.id for nd in self.nodes])
        right = np.array([nd.right.id if nd.right else nd.id for nd in self.nodes])
        rows = np.arange(len(X))
        for d in range(depth + 1):
            out[:, d] = cur
            v = var[cur]
            split = v >= 0
            go_left = np.zeros(len(X), dtype=bool)
            go_left[split] = X[rows[split], v[split]] <= val[cur[split]]
            cur = np.where(split, np.where(go_left, left[cur], right[cur]), cur)
        return out

    def collapse(self, keep_internal: set[int] | frozenset[int]) -> "RegressionTree":
        """Copy of the tree where internal nodes not in ``keep_internal`` become leaves."""
        nodes: list[Node] = []

        def rec(nd: Node, depth: int) -> Node:
            new = Node(len(nodes), nd.n, nd.mean, nd.sse, depth)
            nodes.append(new)
            if not nd.is_leaf and nd.id in keep_internal:
                new.var, new.value, new.improvement = nd.var, nd.value, nd.improvement
                new.left = rec(nd.left, depth + 1)
                new.right = rec(nd.right, depth + 1)
            new.end = len(nodes)
            return new

        rec(self.root, 0)
        return RegressionTree(nodes, self.names)

    def listing(self, digits: int = 4) -> str:
        """Indented text, one line per node."""
        lines = []

        def rec(nd: Node, indent: int) -> None:
            pad = "  " * indent
            stats = f"n={nd.n} mean={nd.mean:.{digits}g}"
            if nd.is_leaf:
                lines.append(f"{pad}leaf | {stats}")
                return
            lines.append(
                f"{pad}{self.names[nd.var]} <= {nd.value:.{digits}g} | {stats} "
                f"improvement={nd.improvement:.{digits}g}"
            )
            rec(nd.left, indent + 1)
            rec(nd.right, indent + 1)

        rec(self.root, 0)
        return "\n".join(lines) + "\n"


def fit_tree(data: AnalysisDataset, control: TreeControl = TreeControl()) -> RegressionTree:
    X, y = np.asarray(data.X, dtype=float), np.asarray(data.y, dtype=float)
    root_sse = float(((y - y.mean()) ** 2).sum()) if len(y) else 0.0
    min_gain = control.min_improvement_fraction * root_sse
    tie_tol = 1e-12 * max(root_sse, 1e-300)
    nodes: list[Node] = []

    def grow(rows: np.ndarray, depth: int) -> Node:
        yy = y[rows]
        mean = float(yy.mean()) if len(rows) else 0.0
        nd = Node(len(nodes), len(rows), mean, float(((yy - mean) ** 2).sum()), depth)
        nodes.append(nd)
        if len(rows) >= control.min_node_rows and len(rows) >= 2 and np.ptp(yy) > 0:
            split = best_split(X[rows], yy, control.min_leaf_rows, tie_tol)
            if split is not None and split.improvement > 0 and split.improvement >= min_gain:
                go_left = X[rows, split.var] <= split.value
                nd.var, nd.value, nd.improvement = split.var, split.value, split.improvement
                nd.left = grow(rows[go_left], depth + 1)
                nd.right = grow(rows[~go_left], depth + 1)
        nd.end = len(nodes)
        return nd

    grow(np.arange(len(y)), 0)
    return RegressionTree(nodes, data.names)


@dataclass(frozen=True)
class PruneSequence:
    tree: RegressionTree
    alphas: np.ndarray
    n_splits: np.ndarray
    collapse_step: np.ndarray  # per node: first step index where it is no longer internal

    def __len__(self) -> int:
        return len(self.alphas)

    def internal_at(self, k: int) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.collapse_step > k).tolist())

    def subtree(self, k: int) -> RegressionTree:
        return self.tree.collapse(self.internal_at(k))

    def step_for_alpha(self, alpha: float) -> int:
        """Index of the subtree that is optimal at complexity ``alpha``."""
        return int(np.searchsorted(self.alphas, alpha, side="right") - 1)


def prune_sequence(tree: RegressionTree) -> PruneSequence:
    """Weakest-link pruning from the full tree down to the root.

    Each step collapses every internal node whose per-split gain
    ``(R(t) - R(T_t)) / (leaves(T_t) - 1)`` equals the current minimum.
    """
    nodes = tree.nodes
    m = len(nodes)
    sse = np.array([nd.sse for nd in nodes])
    end = np.array([nd.end for nd in nodes])
    alive = np.ones(m, dtype=bool)
    internal = np.array([not nd.is_leaf for nd in nodes])
    collapse_step = np.zeros(m, dtype=np.int64)
    tol = 1e-10 * max(float(sse[0]), 1e-300)

    alphas: list[float] = []
    sizes: list[int] = []
    current_alpha = 0.0
    while True:
        idx = np.flatnonzero(internal)
        if idx.size:
            leaf = alive & ~internal
            c_sse = np.concatenate(([0.0], np.cumsum(np.where(leaf, sse, 0.0))))
            c_cnt = np.concatenate(([0], np.cumsum(leaf)))
            sub_sse = c_sse[end[idx]] - c_sse[idx]
            sub_leaves = c_cnt[end[idx]] - c_cnt[idx]
            g = (sse[idx] - sub_sse) / (sub_leaves - 1)
            if g.min() <= current_alpha + tol:
                step = len(alphas)
                for t in idx[g <= current_alpha + tol]:
                    if not internal[t]:
                        continue
                    below = slice(t + 1, end[t])
                    collapse_step[below][internal[below]] = step
                    alive[below] = False
                    internal[below] = False
                    internal[t] = False
                    collapse_step[t] = step
                continue
        alphas.append(current_alpha)
        sizes.append(int(internal.sum()))
        if not idx.size:
            break
        current_alpha = float(g.min())
    return PruneSequence(tree, np.array(alphas), np.array(sizes), collapse_step)


def prune_to_size(seq: PruneSequence, target_splits: int) -> RegressionTree:
    """Largest subtree in the sequence with at most ``target_splits`` splits."""
    return seq.subtree(size_step(seq, target_splits))


def size_step(seq: PruneSequence, target_splits: int) -> int:
    return int(np.flatnonzero(seq.n_splits <= target_splits)[0])


def _path_predictions(
    paths: np.ndarray, collapse_step: np.ndarray, means: np.ndarray, k: int
) -> np.ndarray:
    # the first node on the path that is not internal at step k is where the row stops
    stop = collapse_step[paths] <= k
    first = np.argmax(stop, axis=1)
    return means[paths[np.arange(len(paths)), first]]


@dataclass(frozen=True)
class CvResult:
    sequence: PruneSequence
    betas: np.ndarray
    cv_mean: np.ndarray  # per master step: mean over folds of held-out MSE
    cv_se: np.ndarray  # per master step: standard error of that mean
    min_step: int
    one_se_step: int
    folds: int
    seed: int
    fold_of_row: np.ndarray = field(repr=False)

    @property
    def cv_rmse(self) -> np.ndarray:
        return np.sqrt(self.cv_mean)

    @property
    def cv_min(self) -> RegressionTree:
        return self.sequence.subtree(self.min_step)

    @property
    def cv_1se(self) -> RegressionTree:
        return self.sequence.subtree(self.one_se_step)


def cross_validate(
    data: AnalysisDataset, control: TreeControl = TreeControl(), K: int = 10, seed: int = 0
) -> CvResult:
    """K-fold CV over the master tree's prune sequence.

    Each master step ``k`` is scored at the geometric midpoint of its
    complexity interval; fold trees use their own subtree optimal at that
    complexity.
    """
    n = len(data)
    if K < 2:
        raise ValueError("need at least 2 folds")
    if n < K:
        raise ValueError(f"{n} rows cannot be split into {K} folds")
    seq = prune_sequence(fit_tree(data, control))
    a = seq.alphas
    betas = np.empty(len(a))
    betas[:-1] = np.sqrt(a[:-1] * a[1:])
    betas[-1] = a[-1]

    rng = np.random.default_rng(seed)
    fold_of_row = np.empty(n, dtype=np.int64)
    fold_of_row[rng.permutation(n)] = np.arange(n) % K

    errors = np.empty((K, len(a)))
    for f in range(K):
        test = fold_of_row == f
        fseq = prune_sequence(fit_tree(data.subset(~test), control))
        ftree = fseq.tree
        paths = ftree.leaf_paths(data.X[test])
        means = np.array([nd.mean for nd in ftree.nodes])
        y_test = data.y[test]
        cache: dict[int, float] = {}
        for k, beta in enumerate(betas):
            j = fseq.step_for_alpha(beta)
            if j not in cache:
                pred = _path_predictions(paths, fseq.collapse_step, means, j)
                cache[j] = float(np.mean((y_test - pred) ** 2))
            errors[f, k] = cache[j]

    cv_mean = errors.mean(axis=0)
    cv_se = errors.std(axis=0, ddof=1) / np.sqrt(K)
    # ties in the minimum go to the smaller tree
    min_step = int(len(cv_mean) - 1 - np.argmin(cv_mean[::-1]))
    bound = cv_mean[min_step] + cv_se[min_step]
    one_se_step = int(np.flatnonzero(cv_mean <= bound + 1e-15 * abs(bound)).max())
    return CvResult(seq, betas, cv_mean, cv_se, min_step, one_se_step, K, seed, fold_of_row)


def variable_importance(tree: RegressionTree) -> dict[str, float]:
    """Summed split improvement per variable, rescaled to sum to one.

    Variables never used for a split are absent.
    """
    totals: dict[int, float] = {}
    for nd in tree.internal():
        totals[nd.var] = totals.get(nd.var, 0.0) + nd.improvement
    grand = sum(totals.values())
    if grand <= 0:
        return {}
    return {tree.names[v]: s / grand for v, s in sorted(totals.items())}


def predict(tree: RegressionTree, x) -> float:
    return tree.predict_one(np.asarray(x, dtype=float))


def outlier_report(data: AnalysisDataset, threshold_sd: float = 4.0) -> list[int]:
    """Rows far from their parameter combination's replicate mean.

    Deviations are measured in units of the pooled within-combination
    standard deviation. Rows are only reported, never removed here.
    """
    if len(data) == 0:
        return []
    _, group = np.unique(data.X, axis=0, return_inverse=True)
    group = group.ravel()
    n_groups = group.max() + 1
    sums = np.bincount(group, weights=data.y, minlength=n_groups)
    counts = np.bincount(group, minlength=n_groups)
    resid = data.y - (sums / counts)[group]
    dof = len(data) - n_groups
    if dof <= 0:
        return []
    pooled_sd = np.sqrt((resid**2).sum() / dof)
    if pooled_sd == 0:
        return []
    return np.flatnonzero(np.abs(resid) > threshold_sd * pooled_sd).tolist()
