"""Closed-form velocity coefficients through the memoized index tower.

A coefficient ``u^alpha_{omega,p,q,r}`` unfolds into a binary tree of depth
``omega``: every internal node is one term of the flat sum of
:mod:`nsseries.compaction`, its two children being the factors of that term.
The literal formula enumerates a single flat index ``i`` over all complete
trees; the tower functions below decode ``i`` into the per-node term indices
(``theta``, ``node_index``), the node arguments (``node_args``, ``rho``) and the
leaf arguments (``aleph``).  Heap numbering is used throughout: node ``m`` has
children ``2m+1`` (first factor) and ``2m+2`` (second factor).

Every tower function takes the tree depth explicitly.  The top-level formula
uses ``depth = omega``; the split relations evaluate a subtree with
``depth = omega - 1`` rooted at a child whose own time order may be lower.

All tower tables are data independent and live in a :class:`MemoCache` that can
be saved and reloaded.  Data-dependent sums are memoized per evaluator only.
"""

from __future__ import annotations

import bisect
import hashlib
import json
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Hashable, Iterator, Optional, Tuple

from . import compaction as cp
from .compaction import CoefficientSource, Node, branch_parity, parity_weight, tree_depth
from .series import EXACT

CACHE_FORMAT = "nsseries-memo-cache"
CACHE_VERSION = 1


class BudgetExceeded(RuntimeError):
    """Raised when an evaluation crosses a :class:`TowerBudget` limit."""

    def __init__(self, reason: str, expansions: int, elapsed: float):
        super().__init__(f"tower budget exceeded: {reason} "
                         f"(expansions={expansions}, elapsed={elapsed:.2f}s)")
        self.reason = reason
        self.expansions = expansions
        self.elapsed = elapsed


class CacheIntegrityError(ValueError):
    """A persisted cache failed its header or checksum validation."""


class LeafPropertyError(AssertionError):
    """A leaf lookup addressed an interior coefficient."""


class IndexRangeError(ValueError):
    """A flat index lies outside the range of its sum."""


def is_terminal(node) -> bool:
    """Negative sentinel or a boundary/initial coefficient: the tower stops here."""
    return cp.has_negative(node[0], node[1], node[2], node[3]) or cp.on_slab(node[0], node[1], node[2], node[3])


# ---------------------------------------------------------------------------
# Cache and budget


def _tuplify(obj):
    if isinstance(obj, list):
        return tuple(_tuplify(x) for x in obj)
    return obj


def _encode_weight(w):
    return None if w is None else f"{w.numerator}/{w.denominator}"


def _decode_weight(s):
    return None if s is None else Fraction(s)


_NODE_TABLES = {"t_child", "z_child", "node_args", "rho", "aleph"}
_WEIGHT_TABLES = {"static_weight"}
_TUPLE_TABLES = {"eta_prefix"}


@dataclass
class MemoCache:
    """Per-function memo tables with hit/miss counters.

    Keys are flat tuples of ints; values are ints, :class:`Node` tuples, prefix
    tuples or rational weights depending on the table.
    """

    tables: Dict[str, Dict[Tuple[int, ...], object]] = field(default_factory=dict)
    hits: Dict[str, int] = field(default_factory=dict)
    misses: Dict[str, int] = field(default_factory=dict)

    def table(self, name: str) -> Dict[Tuple[int, ...], object]:
        return self.tables.setdefault(name, {})

    @property
    def total_hits(self) -> int:
        return sum(self.hits.values())

    @property
    def total_misses(self) -> int:
        return sum(self.misses.values())

    @property
    def hit_rate(self) -> float:
        total = self.total_hits + self.total_misses
        return self.total_hits / total if total else 0.0

    def reset_counters(self):
        self.hits.clear()
        self.misses.clear()

    def size(self) -> int:
        return sum(len(t) for t in self.tables.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, MemoCache):
            return NotImplemented
        mine = {k: v for k, v in self.tables.items() if v}
        theirs = {k: v for k, v in other.tables.items() if v}
        return mine == theirs

    # persistence -----------------------------------------------------------

    def _payload(self) -> str:
        out = {}
        for name in sorted(self.tables):
            rows = []
            for key, value in self.tables[name].items():
                if name in _WEIGHT_TABLES:
                    value = _encode_weight(value)
                elif name in _NODE_TABLES or name in _TUPLE_TABLES:
                    value = list(value)
                rows.append([list(key), value])
            rows.sort(key=lambda row: json.dumps(row[0]))
            out[name] = rows
        return json.dumps({"tables": out}, sort_keys=True, separators=(",", ":"))

    def save(self, path) -> None:
        payload = self._payload()
        digest = hashlib.sha256(payload.encode()).hexdigest()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{CACHE_FORMAT} {CACHE_VERSION} sha256={digest}\n")
            fh.write(payload)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "MemoCache":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            payload = fh.read().rstrip("\n")
        parts = header.split(" ")
        if len(parts) != 3 or parts[0] != CACHE_FORMAT or not parts[2].startswith("sha256="):
            raise CacheIntegrityError(f"{path}: not a memo cache file")
        if parts[1] != str(CACHE_VERSION):
            raise CacheIntegrityError(f"{path}: unsupported cache version {parts[1]}")
        if hashlib.sha256(payload.encode()).hexdigest() != parts[2][len("sha256="):]:
            raise CacheIntegrityError(f"{path}: checksum mismatch")
        try:
            data = json.loads(payload)["tables"]
        except (ValueError, KeyError) as exc:
            raise CacheIntegrityError(f"{path}: unreadable payload") from exc
        cache = cls()
        for name, rows in data.items():
            table = cache.table(name)
            for key, value in rows:
                if name in _WEIGHT_TABLES:
                    value = _decode_weight(value)
                elif name in _NODE_TABLES:
                    value = Node(*value)
                elif name in _TUPLE_TABLES:
                    value = tuple(value)
                table[_tuplify(key)] = value
        return cache


def cache_persist(cache: MemoCache, path) -> None:
    cache.save(path)


def cache_load(path) -> MemoCache:
    return MemoCache.load(path)


@dataclass
class TowerBudget:
    """Limits on one tower: highest time order, fresh expansions, wall time."""

    max_omega: int = 3
    max_expansions: int = 10 ** 7
    time_limit: Optional[float] = None


# ---------------------------------------------------------------------------
# The tower


class Tower:
    """Memoized literal evaluation of the index tower.

    ``expansions`` counts fresh (uncached) evaluations of tower entries made
    through this object.  The budget limits expansions and wall time since the
    last :meth:`begin`, which every top-level evaluation calls.
    """

    def __init__(self, cache: Optional[MemoCache] = None, budget: Optional[TowerBudget] = None):
        self.cache = cache if cache is not None else MemoCache()
        self.budget = budget if budget is not None else TowerBudget()
        self.expansions = 0
        self._baseline = 0
        self._started = time.monotonic()

    def begin(self):
        self._baseline = self.expansions
        self._started = time.monotonic()

    def _memo(self, name: str, key: Tuple[int, ...], compute: Callable[[], object]):
        table = self.cache.table(name)
        try:
            value = table[key]
        except KeyError:
            pass
        else:
            self.cache.hits[name] = self.cache.hits.get(name, 0) + 1
            return value
        self.cache.misses[name] = self.cache.misses.get(name, 0) + 1
        self.expansions += 1
        if self.expansions - self._baseline > self.budget.max_expansions:
            raise BudgetExceeded("expansion count", self.expansions - self._baseline,
                                 time.monotonic() - self._started)
        if self.budget.time_limit is not None and self.expansions % 256 == 0:
            elapsed = time.monotonic() - self._started
            if elapsed > self.budget.time_limit:
                raise BudgetExceeded("wall time", self.expansions - self._baseline, elapsed)
        value = compute()
        table[key] = value
        return value

    def check_omega(self, omega: int):
        if omega > self.budget.max_omega:
            raise BudgetExceeded(f"omega={omega} above max_omega={self.budget.max_omega}", 0, 0.0)

    # data-independent flat-sum structure ---------------------------------------

    def term_count(self, node) -> int:
        w, p, q, r, a = node
        return self._memo("term_count", (w, p, q, r, a), lambda: cp.term_count(p, q, r, a, w))

    def first_child(self, node, k: int) -> Node:
        return self._memo("t_child", (*node, k), lambda: cp.t_child(*node, k))

    def second_child(self, node, k: int) -> Node:
        return self._memo("z_child", (*node, k), lambda: cp.z_child(*node, k))

    def static_weight(self, node, k: int) -> Optional[Fraction]:
        return self._memo("static_weight", (*node, k), lambda: cp.static_weight(*node, k))

    # term counts ------------------------------------------------------------

    def eta(self, p: int, q: int, r: int, alpha: int, omega: int, ind: int) -> int:
        """Largest flat index of the sum over trees of height ``ind + 1``."""
        return self._eta(Node(omega, p, q, r, alpha), ind)

    def _eta(self, node, ind: int) -> int:
        if ind < 0:
            raise IndexRangeError(f"eta needs ind >= 0, got {ind}")
        if is_terminal(node):
            return 0
        if node[4] == 0 and node[2] == 2:
            return 1
        if ind == 0:
            return self.term_count(node)
        return self._prefix(node, ind - 1)[-1] - 1

    def _eta_tilde(self, child, ind: int) -> int:
        return self.term_count(child) if ind == 0 else self._eta(child, ind)

    def eta_tilde1(self, p, q, r, alpha, omega, k: int, ind: int) -> int:
        return self._eta_tilde(self.first_child(Node(omega, p, q, r, alpha), k), ind)

    def eta_tilde2(self, p, q, r, alpha, omega, k: int, ind: int) -> int:
        return self._eta_tilde(self.second_child(Node(omega, p, q, r, alpha), k), ind)

    def _prefix(self, node, ind: int) -> Tuple[int, ...]:
        """Cumulative block sizes ``S(0), S(1), ..., S(F+1)`` at level ``ind``."""
        def compute():
            sums = [0]
            for k in range(self.term_count(node) + 1):
                t = self._eta_tilde(self.first_child(node, k), ind)
                z = self._eta_tilde(self.second_child(node, k), ind)
                sums.append(sums[-1] + (t + 1) * (z + 1))
            return tuple(sums)
        return self._memo("eta_prefix", (*node, ind), compute)

    def s_eta_tilde(self, j: int, p, q, r, alpha, omega, ind: int) -> int:
        prefix = self._prefix(Node(omega, p, q, r, alpha), ind)
        if not 0 <= j < len(prefix):
            raise IndexRangeError(f"block {j} outside [0, {len(prefix) - 1}]")
        return prefix[j]

    # decoding of a flat index ----------------------------------------------------

    def theta(self, i: int, p, q, r, alpha, omega, n: int, ind: int) -> int:
        """Own term index (``n=0``) or first/second subtree flat index (``n=1, 2``)."""
        return self._theta(i, Node(omega, p, q, r, alpha), n, ind)

    def _theta(self, i: int, node, n: int, ind: int) -> int:
        return self._memo("theta", (i, *node, n, ind), lambda: self._theta_compute(i, node, n, ind))

    def _theta_compute(self, i, node, n, ind):
        if is_terminal(node):
            return 0
        if ind == 0:
            return i
        prefix = self._prefix(node, ind - 1)
        if not 0 <= i < prefix[-1]:
            raise IndexRangeError(f"flat index {i} outside [0, {prefix[-1] - 1}] at {tuple(node)}")
        # half-open blocks [S(j), S(j+1))
        j = bisect.bisect_right(prefix, i) - 1
        if n == 0:
            return j
        width = self._eta_tilde(self.second_child(node, j), ind - 1) + 1
        offset = i - prefix[j]
        return offset // width if n == 1 else offset - width * (offset // width)

    def node_index(self, m: int, i: int, root, depth: int, h: int = 0) -> int:
        """Theta: flat index at heap node ``m`` for tree level offset ``h``."""
        return self._memo("node_index", (m, i, *root, depth, h),
                          lambda: self._node_index_compute(m, i, root, depth, h))

    def _node_index_compute(self, m, i, root, depth, h):
        level = tree_depth(m)
        if h == level:
            return self._theta(i, root, branch_parity(h, m), depth - 1)
        return self._theta(self.node_index(m, i, root, depth, h + 1),
                           self.node_args(m, h, 0, i, root, depth),
                           branch_parity(h, m), depth - 1 + h - level)

    def node_args(self, m: int, h: int, l: int, i: int, root, depth: int) -> Node:
        """C: arguments of the ancestor of node ``m`` lying ``h`` levels above it."""
        return self._memo("node_args", (m, h, l, i, *root, depth),
                          lambda: self._node_args_compute(m, h, l, i, root, depth))

    def _node_args_compute(self, m, h, l, i, root, depth):
        level = tree_depth(m)
        if level - h < 1 or l > level - 1 - h:
            return Node(*root)
        parent = self.node_args(m, h, l + 1, i, root, depth)
        branch = parity_weight(cp.floor_div(Fraction(m + 1 - 2 ** (l + h), 2 ** (l + h))))
        k = self.node_index(cp.floor_div(Fraction(m + 1 - 2 ** (l + 1 + h), 2 ** (l + 1 + h))), i, root, depth, 0)
        return self.first_child(parent, k) if branch == 1 else self.second_child(parent, k)

    def rho(self, i: int, l: int, k: int, j: int, root, depth: int) -> Node:
        """Arguments of internal node ``k`` on tree level ``j - 1``."""
        return self._memo("rho", (i, l, k, j, *root, depth),
                          lambda: self._rho_compute(i, l, k, j, root, depth))

    def _rho_compute(self, i, l, k, j, root, depth):
        if j < 2:
            return Node(*root)
        branch = parity_weight(cp.floor_div(Fraction(k - 1 + 2 ** (j - 1), 2 ** (l - 1)) - 1))
        term = self.node_index(cp.floor_div(Fraction(k - 1 + 2 ** (j - 1) - 2 ** l, 2 ** l)), i, root, depth, 0)
        parent = self.rho(i, l + 1, k, j, root, depth) if l < j - 1 else Node(*root)
        return self.first_child(parent, term) if branch == 1 else self.second_child(parent, term)

    def aleph(self, i: int, l: int, k: int, root, depth: int) -> Node:
        """Arguments of leaf ``k`` (1-based, left to right)."""
        return self._memo("aleph", (i, l, k, *root, depth),
                          lambda: self._aleph_compute(i, l, k, root, depth))

    def _aleph_compute(self, i, l, k, root, depth):
        branch = parity_weight(cp.floor_div(Fraction(k - 1, 2 ** (l - 1))) + 1)
        term = self.node_index(cp.floor_div(Fraction(k - 1, 2 ** l)) - 1 + 2 ** (depth - l), i, root, depth, 0)
        parent = self.aleph(i, l + 1, k, root, depth) if l < depth else Node(*root)
        return self.first_child(parent, term) if branch == 1 else self.second_child(parent, term)

    # flat terms ---------------------------------------------------------------

    def flat_count(self, root, depth: int) -> int:
        """Number of terms of the literal sum."""
        return self._eta(Node(*root), depth - 1) + 1

    def weight_nodes(self, i: int, root, depth: int) -> Iterator[Tuple[Node, int]]:
        """``(node args, term index)`` for each internal node of flat term ``i``."""
        for j in range(1, depth + 1):
            for k in range(1, 2 ** (j - 1) + 1):
                yield self.rho(i, 1, k, j, root, depth), self.node_index(k - 2 + 2 ** (j - 1), i, root, depth, 0)

    def leaves(self, i: int, root, depth: int) -> Iterator[Node]:
        for k in range(1, 2 ** depth + 1):
            yield self.aleph(i, 1, k, root, depth)


# ---------------------------------------------------------------------------
# Evaluation


def slab_source(solution, mode: Optional[str] = None) -> CoefficientSource:
    """Leaf lookups restricted to boundary and initial coefficients of ``solution``.

    Any request for an interior velocity coefficient raises
    :class:`LeafPropertyError`, which enforces that the closed form depends on
    boundary and initial data only.
    """
    src = CoefficientSource.from_solution(solution)
    inner = src.velocity

    def velocity(a, w, p, q, r):
        if not cp.on_slab(w, p, q, r):
            raise LeafPropertyError(f"interior coefficient u^{a}_{(w, p, q, r)} requested as a leaf")
        return inner(a, w, p, q, r)

    return CoefficientSource(velocity, src.forcing, src.nu, src.mode if mode is None else mode)


def _weight(tower: Tower, src: CoefficientSource, node, k: int):
    w = tower.static_weight(node, k)
    if w is not None:
        return w if src.mode == EXACT else float(w)
    return cp.term_weight(src, *node, k)


def _leaf_value(src: CoefficientSource, node):
    if not is_terminal(node):
        raise LeafPropertyError(f"leaf {tuple(node)} is an interior coefficient")
    return src.u(node.alpha, node.omega, node.p, node.q, node.r)


def literal_term(tower: Tower, src: CoefficientSource, i: int, root, depth: int):
    """One term of the literal sum: product of node weights times product of leaves."""
    total = 1 if src.mode == EXACT else 1.0
    for node, k in tower.weight_nodes(i, root, depth):
        total *= _weight(tower, src, node, k)
        if not total:
            return total
    for leaf in tower.leaves(i, root, depth):
        total *= _leaf_value(src, leaf)
        if not total:
            return total
    return total


class NestedEvaluator:
    """Factored evaluation of the same sum, one tree level at a time.

    Summing the literal terms over the flat index equals, by the block
    structure of ``theta``, summing each node's weighted children products
    recursively.  Values are memoized per ``(node, level)`` for one data set.
    """

    def __init__(self, tower: Tower, src: CoefficientSource):
        self.tower = tower
        self.src = src
        self._values: Dict[Hashable, object] = {}
        self._leaves: Dict[Hashable, object] = {}

    def leaf(self, node):
        hit = self._leaves.get(node)
        if hit is None:
            hit = self._leaves[node] = _leaf_value(self.src, node)
        return hit

    def value(self, node, ind: int):
        if ind < 0 or is_terminal(node):
            return self.leaf(node)
        key = (node, ind)
        hit = self._values.get(key)
        if hit is not None:
            return hit
        total = 0 if self.src.mode == EXACT else 0.0
        for k in range(self.tower.term_count(node) + 1):
            w = _weight(self.tower, self.src, node, k)
            if not w:
                continue
            first = self.value(self.tower.first_child(node, k), ind - 1)
            if not first:
                continue
            total += w * first * self.value(self.tower.second_child(node, k), ind - 1)
        self._values[key] = total
        return total


def closed_form_coeff(omega: int, p: int, q: int, r: int, alpha: int, source: CoefficientSource,
                      cache: Optional[MemoCache] = None, method: str = "nested",
                      budget: Optional[TowerBudget] = None, tower: Optional[Tower] = None,
                      evaluator: Optional[NestedEvaluator] = None):
    """Velocity coefficient from boundary and initial data alone.

    ``method="literal"`` sums the flat index term by term; ``"nested"``
    evaluates the factored form.  Pass ``tower`` (and ``evaluator`` for the
    nested method) to share memo tables across calls.
    """
    if tower is None:
        tower = Tower(cache, budget)
    root = Node(omega, p, q, r, alpha)
    if omega <= 0:
        return _leaf_value(source, root)
    tower.check_omega(omega)
    tower.begin()
    if method == "literal":
        total = 0 if source.mode == EXACT else 0.0
        for i in range(tower.flat_count(root, omega)):
            total += literal_term(tower, source, i, root, omega)
        return total
    if method == "nested":
        if evaluator is None or evaluator.tower is not tower or evaluator.src is not source:
            evaluator = NestedEvaluator(tower, source)
        return evaluator.value(root, omega - 1)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# Split relations: a tree of depth d is its root term plus two subtrees of depth d-1


def _subtrees(tower: Tower, n: int, root, depth: int):
    ind = depth - 1
    own = tower._theta(n, root, 0, ind)
    first_flat = tower._theta(n, root, 1, ind)
    second_flat = tower._theta(n, root, 2, ind)
    return (tower.first_child(root, own), first_flat), (tower.second_child(root, own), second_flat)


def split_relation_violations(tower: Tower, root, depth: int, flat_indices=None):
    """Check the leaf, node and term-index split relations for flat indices of ``root``.

    Returns a list of ``(relation, n, position, lhs, rhs)`` witnesses; empty
    when every relation holds.
    """
    root = Node(*root)
    if depth < 2:
        raise ValueError("split relations need depth >= 2")
    if flat_indices is None:
        flat_indices = range(tower.flat_count(root, depth))
    half_leaves = 2 ** (depth - 1)
    bad = []
    for n in flat_indices:
        (first, i1), (second, i2) = _subtrees(tower, n, root, depth)
        for k in range(1, 2 ** depth + 1):
            lhs = tower.aleph(n, 1, k, root, depth)
            rhs = (tower.aleph(i1, 1, k, first, depth - 1) if k <= half_leaves
                   else tower.aleph(i2, 1, k - half_leaves, second, depth - 1))
            if lhs != rhs:
                bad.append(("aleph", n, k, lhs, rhs))
        for j in range(2, depth + 1):
            split = 2 ** (j - 2)
            for k in range(1, 2 ** (j - 1) + 1):
                lhs = tower.rho(n, 1, k, j, root, depth)
                rhs = (tower.rho(i1, 1, k, j - 1, first, depth - 1) if k <= split
                       else tower.rho(i2, 1, k - split, j - 1, second, depth - 1))
                if lhs != rhs:
                    bad.append(("rho", n, (k, j), lhs, rhs))
        for level in range(1, depth):
            for k in range(1, 2 ** depth + 1):
                lhs = tower.node_index(cp.floor_div(Fraction(k - 1, 2 ** level)) - 1 + 2 ** (depth - level),
                                       n, root, depth)
                if k <= half_leaves:
                    rhs = tower.node_index(cp.floor_div(Fraction(k - 1, 2 ** level)) - 1
                                           + 2 ** (depth - level - 1), i1, first, depth - 1)
                else:
                    rhs = tower.node_index(cp.floor_div(Fraction(k - half_leaves - 1, 2 ** level)) - 1
                                           + 2 ** (depth - level - 1), i2, second, depth - 1)
                if lhs != rhs:
                    bad.append(("node_index", n, (k, level), lhs, rhs))
    return bad
