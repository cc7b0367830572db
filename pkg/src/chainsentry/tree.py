"""CART decision tree with Gini impurity and introspectable structure.

Written in-house rather than wrapped because downstream consumers need the
exact node layout: impurity-decrease feature importances for the selection
loop, and root-to-leaf predicate chains to render cluster explanations.
Tie-breaking among equal-gain splits follows a seeded feature permutation,
so different seeds explore genuinely different trees on tied data.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import ParamsMixin, as_float_matrix, as_label_vector, check_is_fitted


@dataclass(slots=True)
class _Node:
    feature: int = -1          # -1 marks a leaf
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    n: int = 0
    impurity: float = 0.0
    counts: np.ndarray | None = None


def _gini(counts: np.ndarray, total: float) -> float:
    if total <= 0:
        return 0.0
    p = counts / total
    return 1.0 - float(np.sum(p * p))


class DecisionTreeClassifier(ParamsMixin):
    """Greedy binary-split CART classifier (multiclass, Gini)."""

    def __init__(self, max_depth: int = 8, min_samples_leaf: int = 5,
                 random_state: int | None = None):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.random_state = random_state
        self.nodes_: list[_Node] | None = None

    def fit(self, X, y):
        X = as_float_matrix(X)
        y = as_label_vector(y, X.shape[0])
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        n, d = X.shape
        k = self.classes_.size
        rng = np.random.default_rng(self.random_state)
        feature_order = rng.permutation(d)
        onehot = np.zeros((n, k))
        onehot[np.arange(n), y_enc] = 1.0

        self.nodes_ = []
        self._importance_raw = np.zeros(d)
        stack = [(np.arange(n), 0, -1, False)]
        while stack:
            idx, depth, parent, is_right = stack.pop()
            counts = onehot[idx].sum(axis=0)
            total = idx.size
            impurity = _gini(counts, total)
            node_id = len(self.nodes_)
            node = _Node(n=total, impurity=impurity, counts=counts)
            self.nodes_.append(node)
            if parent >= 0:
                if is_right:
                    self.nodes_[parent].right = node_id
                else:
                    self.nodes_[parent].left = node_id
            if (depth >= self.max_depth or total < 2 * self.min_samples_leaf
                    or impurity <= 0.0):
                continue
            best = self._best_split(X, onehot, idx, counts, impurity, feature_order)
            if best is None:
                continue
            feature, threshold, gain = best
            node.feature = feature
            node.threshold = threshold
            self._importance_raw[feature] += total * gain / n
            mask = X[idx, feature] <= threshold
            stack.append((idx[~mask], depth + 1, node_id, True))
            stack.append((idx[mask], depth + 1, node_id, False))

        raw = self._importance_raw
        s = raw.sum()
        self.feature_importances_ = raw / s if s > 0 else raw.copy()
        self.n_features_ = d
        return self

    def _best_split(self, X, onehot, idx, counts, impurity, feature_order):
        total = idx.size
        best_gain = 0.0
        best = None
        min_leaf = self.min_samples_leaf
        for f in feature_order:
            vals = X[idx, f]
            order = np.argsort(vals, kind="stable")
            v = vals[order]
            if v[0] == v[-1]:
                continue
            left_counts = np.cumsum(onehot[idx[order]], axis=0)[:-1]
            n_left = np.arange(1, total)
            n_right = total - n_left
            # Valid cut positions: value changes and both children big enough.
            valid = (v[1:] != v[:-1]) & (n_left >= min_leaf) & (n_right >= min_leaf)
            if not valid.any():
                continue
            right_counts = counts[None, :] - left_counts
            gl = 1.0 - np.sum((left_counts / n_left[:, None]) ** 2, axis=1)
            gr = 1.0 - np.sum((right_counts / n_right[:, None]) ** 2, axis=1)
            gain = impurity - (n_left * gl + n_right * gr) / total
            gain[~valid] = -np.inf
            pos = int(np.argmax(gain))
            if gain[pos] > best_gain + 1e-15:
                best_gain = float(gain[pos])
                best = (int(f), float((v[pos] + v[pos + 1]) / 2.0), best_gain)
        return best

    # -- inference ----------------------------------------------------------

    def _leaf_ids(self, X) -> np.ndarray:
        X = as_float_matrix(X)
        out = np.zeros(X.shape[0], dtype=np.int64)
        todo = [(np.arange(X.shape[0]), 0)]
        while todo:
            idx, node_id = todo.pop()
            node = self.nodes_[node_id]
            if node.feature < 0:
                out[idx] = node_id
                continue
            mask = X[idx, node.feature] <= node.threshold
            todo.append((idx[mask], node.left))
            todo.append((idx[~mask], node.right))
        return out

    def apply(self, X) -> np.ndarray:
        check_is_fitted(self, "nodes_")
        return self._leaf_ids(X)

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "nodes_")
        leaves = self._leaf_ids(X)
        out = np.empty((leaves.size, self.classes_.size))
        for i, leaf in enumerate(leaves):
            counts = self.nodes_[leaf].counts
            out[i] = counts / counts.sum()
        return out

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    @property
    def n_leaves_(self) -> int:
        check_is_fitted(self, "nodes_")
        return sum(1 for nd in self.nodes_ if nd.feature < 0)

    @property
    def depth_(self) -> int:
        check_is_fitted(self, "nodes_")

        def walk(node_id, depth):
            node = self.nodes_[node_id]
            if node.feature < 0:
                return depth
            return max(walk(node.left, depth + 1), walk(node.right, depth + 1))

        return walk(0, 0)

    # -- introspection -------------------------------------------------------

    def leaf_predicates(self, leaf_id: int) -> list[tuple[int, str, float]]:
        """Root-to-leaf chain of (feature, '<=' or '>', threshold)."""
        check_is_fitted(self, "nodes_")
        parent = {}
        todo = [0]
        while todo:
            nid = todo.pop()
            node = self.nodes_[nid]
            if node.feature < 0:
                continue
            parent[node.left] = (nid, "<=")
            parent[node.right] = (nid, ">")
            todo.extend((node.left, node.right))
        chain = []
        nid = leaf_id
        while nid in parent:
            pid, op = parent[nid]
            pnode = self.nodes_[pid]
            chain.append((pnode.feature, op, pnode.threshold))
            nid = pid
        chain.reverse()
        return chain

    def leaves_for_class(self, class_value) -> list[tuple[int, float]]:
        """Leaves predicting ``class_value`` with their member counts."""
        check_is_fitted(self, "nodes_")
        cls_pos = int(np.flatnonzero(self.classes_ == class_value)[0])
        out = []
        for nid, node in enumerate(self.nodes_):
            if node.feature < 0 and int(np.argmax(node.counts)) == cls_pos:
                out.append((nid, float(node.counts[cls_pos])))
        return out
