"""Binary partition trees over the covariate space and their prior.

Trees are immutable.  A node is addressed by its *path*, the tuple of
branch choices from the root (0 = left, 1 = right); the root's path is ``()``.
Every edit returns a new tree sharing unchanged subtrees with the old one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np

from .data import CATEGORICAL, CONTINUOUS
from .errors import DataError, InvalidTreeError

Path = tuple


@dataclass(frozen=True)
class ContinuousRule:
    """Send a row left iff ``x[variable] <= threshold``."""

    variable: int
    threshold: float

    def goes_left(self, col):
        return col <= self.threshold


@dataclass(frozen=True)
class CategoricalRule:
    """Send a row left iff its label code for ``variable`` is in ``labels``."""

    variable: int
    labels: frozenset

    def goes_left(self, col):
        return np.isin(col, tuple(self.labels))


SplitRule = Union[ContinuousRule, CategoricalRule]


@dataclass(frozen=True)
class Node:
    rule: SplitRule | None = None
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.rule is None

    def child(self, side: int) -> "Node":
        return self.left if side == 0 else self.right


LEAF = Node()


def split_node(rule: SplitRule, left: Node = LEAF, right: Node = LEAF) -> Node:
    return Node(rule, left, right)


@dataclass(frozen=True)
class Tree:
    root: Node = LEAF

    def walk(self) -> Iterator[tuple[Path, Node]]:
        """Preorder traversal yielding ``(path, node)``."""
        stack = [((), self.root)]
        while stack:
            path, node = stack.pop()
            yield path, node
            if not node.is_leaf:
                stack.append((path + (1,), node.right))
                stack.append((path + (0,), node.left))

    def get(self, path: Path) -> Node:
        node = self.root
        for side in path:
            node = node.child(side)
        return node

    def replace(self, path: Path, new: Node) -> "Tree":
        def rec(node, i):
            if i == len(path):
                return new
            if path[i] == 0:
                return Node(node.rule, rec(node.left, i + 1), node.right)
            return Node(node.rule, node.left, rec(node.right, i + 1))
        return Tree(rec(self.root, 0))

    def leaves(self) -> list[Path]:
        return [p for p, nd in self.walk() if nd.is_leaf]

    def internal(self) -> list[Path]:
        return [p for p, nd in self.walk() if not nd.is_leaf]

    @property
    def n_leaves(self) -> int:
        return len(self.leaves())

    def route(self, row) -> int:
        """Index (in preorder) of the leaf reached by one encoded covariate row."""
        path = self.route_path(row)
        return self.leaves().index(path)

    def route_path(self, row) -> Path:
        row = np.asarray(row, dtype=float)
        node, path = self.root, ()
        while not node.is_leaf:
            rule = node.rule
            if rule.variable >= row.shape[0]:
                raise DataError(f"row has no value for variable {rule.variable}")
            side = 0 if bool(rule.goes_left(row[rule.variable])) else 1
            node, path = node.child(side), path + (side,)
        return path

    def variables_used(self) -> set[int]:
        return {nd.rule.variable for _, nd in self.walk() if not nd.is_leaf}


def partition(tree: Tree, X: np.ndarray, idx: np.ndarray | None = None) -> dict[Path, np.ndarray]:
    """Row indices reaching every node of ``tree``."""
    if idx is None:
        idx = np.arange(X.shape[0])
    out = {}

    def rec(node, path, rows):
        out[path] = rows
        if node.is_leaf:
            return
        mask = node.rule.goes_left(X[rows, node.rule.variable])
        rec(node.left, path + (0,), rows[mask])
        rec(node.right, path + (1,), rows[~mask])

    rec(tree.root, (), idx)
    return out


def leaf_assignment(tree: Tree, X: np.ndarray) -> np.ndarray:
    """Preorder leaf index of every row of ``X``."""
    parts = partition(tree, X)
    out = np.full(X.shape[0], -1, dtype=np.int64)
    for i, path in enumerate(tree.leaves()):
        out[parts[path]] = i
    return out


# -- rule enumeration ---------------------------------------------------------

def _continuous_thresholds(col: np.ndarray, min_node_size: int) -> np.ndarray:
    if col.shape[0] == 0:
        return np.empty(0)
    u, c = np.unique(col, return_counts=True)
    cum = np.cumsum(c)
    ok = (cum >= min_node_size) & (col.shape[0] - cum >= min_node_size)
    return u[ok]


def _categorical_subsets(col: np.ndarray, min_node_size: int) -> tuple:
    u, c = np.unique(col, return_counts=True)
    q = u.shape[0]
    if q < 2:
        return ()
    n = col.shape[0]
    out = []
    # Subsets always contain the first local label, so {S, complement} appears once.
    for mask in range(2 ** (q - 1) - 1):
        left = int(c[0])
        members = [int(u[0])]
        for i in range(q - 1):
            if mask >> i & 1:
                left += int(c[i + 1])
                members.append(int(u[i + 1]))
        if left >= min_node_size and n - left >= min_node_size:
            out.append(frozenset(members))
    return tuple(out)


def available_rules(values, variable: int, kind: str, min_node_size: int) -> list[SplitRule]:
    """All split rules on one variable that leave >= ``min_node_size`` rows per child."""
    col = np.asarray(values, dtype=float)
    if kind == CONTINUOUS:
        return [ContinuousRule(variable, float(r)) for r in _continuous_thresholds(col, min_node_size)]
    if kind == CATEGORICAL:
        return [CategoricalRule(variable, s) for s in _categorical_subsets(col, min_node_size)]
    raise ValueError(f"unknown kind {kind!r}")


class NodeRules:
    """The split rules available at one node, grouped by variable."""

    __slots__ = ("kinds", "options", "variables")

    def __init__(self, kinds, options):
        self.kinds = kinds
        self.options = options
        self.variables = tuple(v for v, o in enumerate(options) if len(o) > 0)

    @classmethod
    def from_rows(cls, Xnode: np.ndarray, kinds, min_node_size: int) -> "NodeRules":
        opts = []
        for v, kind in enumerate(kinds):
            col = Xnode[:, v]
            if kind == CONTINUOUS:
                opts.append(_continuous_thresholds(col, min_node_size))
            else:
                opts.append(_categorical_subsets(col, min_node_size))
        return cls(tuple(kinds), tuple(opts))

    @property
    def m(self) -> int:
        return len(self.variables)

    def count(self, v: int) -> int:
        return len(self.options[v])

    def rule(self, v: int, i: int) -> SplitRule:
        if self.kinds[v] == CONTINUOUS:
            return ContinuousRule(v, float(self.options[v][i]))
        return CategoricalRule(v, self.options[v][i])

    def index(self, rule: SplitRule) -> int:
        """Position of ``rule`` among its variable's options, -1 if unavailable."""
        v = rule.variable
        if v >= len(self.options):
            return -1
        opts = self.options[v]
        if isinstance(rule, ContinuousRule):
            if self.kinds[v] != CONTINUOUS or len(opts) == 0:
                return -1
            i = int(np.searchsorted(opts, rule.threshold))
            return i if i < len(opts) and opts[i] == rule.threshold else -1
        if self.kinds[v] != CATEGORICAL:
            return -1
        try:
            return opts.index(rule.labels)
        except ValueError:
            return -1

    def contains(self, rule: SplitRule) -> bool:
        return self.index(rule) >= 0

    def log_prob(self, rule: SplitRule) -> float:
        """Log probability of drawing ``rule`` from the node's rule prior."""
        if not self.contains(rule):
            return -math.inf
        return -math.log(self.m) - math.log(self.count(rule.variable))

    def draw(self, rng: np.random.Generator) -> SplitRule:
        v = self.variables[rng.integers(self.m)]
        return self.rule(v, int(rng.integers(self.count(v))))

    def neighbors(self, rule: ContinuousRule) -> list[SplitRule]:
        """Adjacent thresholds of a continuous rule; the rule itself if it is the only one."""
        i = self.index(rule)
        if i < 0:
            return []
        k = self.count(rule.variable)
        if k == 1:
            return [rule]
        return [self.rule(rule.variable, j) for j in (i - 1, i + 1) if 0 <= j < k]

    def all_rules(self) -> list[SplitRule]:
        return [self.rule(v, i) for v in self.variables for i in range(self.count(v))]


# -- prior --------------------------------------------------------------------

@dataclass(frozen=True)
class TreePriorParams:
    gamma: float = 0.95
    theta: float = 2.0
    min_node_size: int = 25

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not self.theta >= 0.0:
            raise ValueError("theta must be >= 0")
        if int(self.min_node_size) != self.min_node_size or self.min_node_size < 1:
            raise ValueError("min_node_size must be a positive integer")

    def split_prob(self, depth: int) -> float:
        return self.gamma * (1.0 + depth) ** (-self.theta)


def node_log_prior(node: Node, depth: int, rules: NodeRules, params: TreePriorParams) -> float:
    """Contribution of one node to log pi(T); ``-inf`` for an unavailable rule."""
    if node.is_leaf:
        return 0.0 if rules.m == 0 else math.log1p(-params.split_prob(depth))
    if rules.m == 0:
        return -math.inf
    psplit = params.split_prob(depth)
    return math.log(psplit) + rules.log_prob(node.rule) if psplit > 0 else -math.inf


def _covariates(data):
    inner = getattr(data, "dataset", data)
    return inner.X, inner.kinds


def log_prior(tree: Tree, data, params: TreePriorParams) -> float:
    """log pi(T): split/no-split probabilities of every node times the rule priors.

    Raises
    ------
    InvalidTreeError
        If a rule is not available at its node, which includes any split
        leaving a child with fewer than ``min_node_size`` rows.
    """
    X, kinds = _covariates(data)
    parts = partition(tree, X)
    total = 0.0
    for path, node in tree.walk():
        rules = NodeRules.from_rows(X[parts[path]], kinds, params.min_node_size)
        if not node.is_leaf and not rules.contains(node.rule):
            raise InvalidTreeError(f"rule {node.rule} is not available at node {path}")
        total += node_log_prior(node, len(path), rules, params)
    return total


# -- serialization ------------------------------------------------------------

def to_records(tree: Tree, names, kinds, labels) -> list[dict]:
    """Flat preorder node list with ids, parent ids and human-readable rules."""
    records = []
    ids = {}
    for path, node in tree.walk():
        ids[path] = len(ids)
        rec = {"id": ids[path], "parent": ids[path[:-1]] if path else None,
               "side": (None if not path else ("left" if path[-1] == 0 else "right")),
               "leaf": node.is_leaf}
        if not node.is_leaf:
            rule = node.rule
            rec["variable"] = names[rule.variable]
            if isinstance(rule, ContinuousRule):
                rec["kind"] = CONTINUOUS
                rec["threshold"] = rule.threshold
            else:
                rec["kind"] = CATEGORICAL
                rec["labels"] = [labels[rule.variable][c] for c in sorted(rule.labels)]
        records.append(rec)
    return records


def from_records(records: list[dict], names, kinds, labels) -> Tree:
    by_id = {r["id"]: r for r in records}
    children = {}
    root_id = None
    for r in records:
        if r["parent"] is None:
            root_id = r["id"]
        else:
            children.setdefault(r["parent"], {})[0 if r["side"] == "left" else 1] = r["id"]
    if root_id is None:
        raise InvalidTreeError("tree records have no root")

    def build(i):
        r = by_id[i]
        if r["leaf"]:
            return LEAF
        v = list(names).index(r["variable"])
        if r["kind"] == CONTINUOUS:
            rule = ContinuousRule(v, float(r["threshold"]))
        else:
            rule = CategoricalRule(v, frozenset(labels[v].index(l) for l in r["labels"]))
        kids = children.get(i, {})
        if 0 not in kids or 1 not in kids:
            raise InvalidTreeError(f"internal node {i} lacks two children")
        return Node(rule, build(kids[0]), build(kids[1]))

    return Tree(build(root_id))


def describe(tree: Tree, names, labels) -> str:
    """Indented text rendering, one node per line."""
    lines = []
    for path, node in tree.walk():
        pad = "  " * len(path)
        tag = "" if not path else ("L " if path[-1] == 0 else "R ")
        if node.is_leaf:
            lines.append(f"{pad}{tag}leaf")
        elif isinstance(node.rule, ContinuousRule):
            lines.append(f"{pad}{tag}{names[node.rule.variable]} <= {node.rule.threshold:g}")
        else:
            labs = ",".join(labels[node.rule.variable][c] for c in sorted(node.rule.labels))
            lines.append(f"{pad}{tag}{names[node.rule.variable]} in {{{labs}}}")
    return "\n".join(lines)
