"""Recursive convolutional scoring of dependency trees.

Every node's unit convolves the head word with each child's phrase vector and
the (clipped) relative-distance embedding through a POS-pair-specific matrix,
max-pools the hidden vectors row-wise into the node's phrase vector, and adds
one dot product per child to the tree score. The artificial root (node 0)
participates like any other head.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .params import ParamSet, ROOT_FORM, ROOT_POS
from .treebank import DependencyTree

ROOT_NODE = 0


@dataclass
class TreePlan:
    """Flat index arrays describing one tree, ready for the kernels.

    Nodes are 0 (artificial root) and the 1-based token indices. Arcs are
    grouped per head node (CSR layout via arc_start) with children in sentence
    order. The *loc arrays compact the touched word rows, distance rows and
    POS-pair slots for gradient accumulation.
    """

    tree: DependencyTree
    order: np.ndarray        # post-order over nodes
    arc_start: np.ndarray    # (num_nodes + 1,) arc offsets per node
    arc_child: np.ndarray    # child node per arc
    node_word: np.ndarray    # word-embedding row per node
    arc_dist: np.ndarray     # distance-embedding row per arc
    arc_pair: np.ndarray     # POS-pair slot per arc
    wloc: np.ndarray         # node -> compact word slot
    word_rows: np.ndarray    # compact word slot -> embedding row
    dloc: np.ndarray         # arc -> compact distance slot
    dist_rows: np.ndarray
    ploc: np.ndarray         # arc -> compact pair slot
    pair_slots: np.ndarray

    @property
    def num_nodes(self) -> int:
        return len(self.order)

    @property
    def num_arcs(self) -> int:
        return len(self.arc_child)


def build_plan(params: ParamSet, tree: DependencyTree, create_pairs: bool = False) -> TreePlan:
    """Index a tree against the parameter tables.

    With create_pairs (training), unseen POS pairs get fresh parameters;
    otherwise they map to the fallback slot.
    """
    if not len(tree):
        raise ValueError("cannot score an empty sentence")
    n = len(tree)
    children: list[list[int]] = [[] for _ in range(n + 1)]
    for tok in tree.tokens:
        children[tok.head].append(tok.index)

    order: list[int] = []
    stack: list[tuple[int, int]] = [(ROOT_NODE, 0)]
    while stack:
        node, next_child = stack[-1]
        if next_child < len(children[node]):
            stack[-1] = (node, next_child + 1)
            stack.append((children[node][next_child], 0))
        else:
            order.append(node)
            stack.pop()

    forms = [ROOT_FORM] + [t.form for t in tree.tokens]
    tags = [ROOT_POS] + [t.pos for t in tree.tokens]
    node_word = [params.word_row(f) for f in forms]

    arc_start = [0]
    arc_child: list[int] = []
    arc_dist: list[int] = []
    arc_pair: list[int] = []
    for head in range(n + 1):
        for child in children[head]:
            arc_child.append(child)
            arc_dist.append(params.distance_row(child - head))
            arc_pair.append(params.pos_pairs.slot(tags[head], tags[child], create=create_pairs))
        arc_start.append(len(arc_child))

    def compact(ids):
        local: dict[int, int] = {}
        loc = [local.setdefault(i, len(local)) for i in ids]
        return np.asarray(loc, dtype=np.int64), np.asarray(list(local), dtype=np.int64)

    wloc, word_rows = compact(node_word)
    dloc, dist_rows = compact(arc_dist)
    ploc, pair_slots = compact(arc_pair)
    as_i64 = lambda xs: np.asarray(xs, dtype=np.int64)
    return TreePlan(tree, as_i64(order), as_i64(arc_start), as_i64(arc_child),
                    as_i64(node_word), as_i64(arc_dist), as_i64(arc_pair),
                    wloc, word_rows, dloc, dist_rows, ploc, pair_slots)


@dataclass
class NodeTrace:
    """Cached activations of one unit; leaves carry only their phrase vector."""

    node: int
    children: tuple[int, ...]
    p: np.ndarray            # (L, n) concatenated inputs
    a: np.ndarray            # (L, m) pre-activations W p
    z: np.ndarray            # (L, m) tanh(a)
    pool_argmax: np.ndarray  # (m,) local child attaining each row max
    x: np.ndarray            # (m,) pooled phrase vector (word embedding for leaves)
    unit_score: float

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class TreeForwardTrace:
    """Everything the backward pass needs, plus the total score."""

    plan: TreePlan
    x: np.ndarray
    p: np.ndarray
    a: np.ndarray
    z: np.ndarray
    pool_argmax: np.ndarray  # (num_nodes, m) global arc ids, -1 on leaf rows
    unit_scores: np.ndarray  # (num_nodes,)
    total_score: float

    def node_trace(self, node: int) -> NodeTrace:
        s0, s1 = self.plan.arc_start[node], self.plan.arc_start[node + 1]
        kids = tuple(int(c) for c in self.plan.arc_child[s0:s1])
        if s0 == s1:
            empty = np.empty((0, 0))
            return NodeTrace(node, kids, empty, empty, empty,
                             np.empty(0, dtype=np.int64), self.x[node], 0.0)
        return NodeTrace(node, kids, self.p[s0:s1], self.a[s0:s1], self.z[s0:s1],
                         self.pool_argmax[node] - s0, self.x[node],
                         float(self.unit_scores[node]))

    @property
    def nodes(self) -> list[NodeTrace]:
        """Node traces in post-order."""
        return [self.node_trace(int(i)) for i in self.plan.order]


@dataclass
class Gradients:
    """Sparse accumulators keyed by embedding row / pair slot."""

    words: dict[int, np.ndarray] = field(default_factory=dict)
    dists: dict[int, np.ndarray] = field(default_factory=dict)
    pair_W: dict[int, np.ndarray] = field(default_factory=dict)
    pair_v: dict[int, np.ndarray] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not (self.words or self.dists or self.pair_W or self.pair_v)

    def accumulate(self, other: "Gradients", scale: float = 1.0) -> "Gradients":
        for mine, theirs in ((self.words, other.words), (self.dists, other.dists),
                             (self.pair_W, other.pair_W), (self.pair_v, other.pair_v)):
            for key, grad in theirs.items():
                if key in mine:
                    mine[key] += scale * grad
                else:
                    mine[key] = scale * grad
        return self

    def max_abs(self) -> float:
        out = 0.0
        for group in (self.words, self.dists, self.pair_W, self.pair_v):
            for grad in group.values():
                if grad.size:
                    out = max(out, float(np.abs(grad).max()))
        return out


def compose_pair(params: ParamSet, head_word_vec: np.ndarray, child_phrase_vec: np.ndarray,
                 delta: int, pair: tuple[np.ndarray, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """One head-child convolution: concatenated input p and hidden vector tanh(W p)."""
    hyper = params.hyper
    W, _ = pair
    if head_word_vec.shape != (hyper.m,) or child_phrase_vec.shape != (hyper.m,):
        raise ValueError("head/child vectors do not match the word embedding size")
    if W.shape != (hyper.m, hyper.n):
        raise ValueError(f"composition matrix shape {W.shape} != ({hyper.m}, {hyper.n})")
    p = np.concatenate([head_word_vec, child_phrase_vec, params.lookup_distance(delta)])
    return p, np.tanh(W @ p)


def forward_unit(params: ParamSet, tree: DependencyTree, node: int,
                 child_phrase_vecs: Mapping[int, np.ndarray],
                 order: Sequence[int] | None = None) -> NodeTrace:
    """Run one unit. `node` is a 1-based token index or 0 for the artificial root.

    `order` overrides the child enumeration order (pooling and the score are
    order-invariant; only pool_argmax depends on it).
    """
    kids = tree.children(node)
    if order is not None:
        if sorted(order) != sorted(kids):
            raise ValueError(f"order {order!r} is not a permutation of children {kids!r}")
        kids = list(order)
    if node == ROOT_NODE:
        head_form, head_pos = ROOT_FORM, ROOT_POS
    else:
        tok = tree.tokens[node - 1]
        head_form, head_pos = tok.form, tok.pos
    head_vec = params.lookup_word(head_form)
    if not kids:
        return NodeTrace(node, (), np.empty((0, params.hyper.n)),
                         np.empty((0, params.hyper.m)), np.empty((0, params.hyper.m)),
                         np.empty(0, dtype=np.int64), head_vec, 0.0)
    hyper = params.hyper
    p = np.zeros((len(kids), hyper.n))
    a = np.zeros((len(kids), hyper.m))
    z = np.zeros((len(kids), hyper.m))
    score = 0.0
    for j, child in enumerate(kids):
        try:
            child_vec = child_phrase_vecs[child]
        except KeyError:
            raise ValueError(f"missing phrase vector for child {child}") from None
        pair = params.get_pair(head_pos, tree.tokens[child - 1].pos)
        p[j], z[j] = compose_pair(params, head_vec, child_vec, child - node, pair)
        a[j] = pair[0] @ p[j]
        score += float(np.dot(pair[1], z[j]))
    pool_argmax = z.argmax(axis=0)
    x = z[pool_argmax, np.arange(hyper.m)]
    return NodeTrace(node, tuple(kids), p, a, z, pool_argmax, x, score)


def score_plan(params: ParamSet, plan: TreePlan) -> TreeForwardTrace:
    x, p, a, z, amax, unit, total = kernels.tree_forward(
        plan.order, plan.arc_start, plan.arc_child, plan.node_word, plan.arc_dist,
        plan.arc_pair, params.words.vectors, params.distances.vectors,
        params.pos_pairs.W, params.pos_pairs.v)
    return TreeForwardTrace(plan, x, p, a, z, amax, unit, float(total))


def score_tree(params: ParamSet, tree: DependencyTree,
               create_pairs: bool = False) -> TreeForwardTrace:
    """Score a tree, caching per-node activations for a later backward pass."""
    return score_plan(params, build_plan(params, tree, create_pairs))


def backward_tree(params: ParamSet, trace: TreeForwardTrace, upstream: float = 1.0) -> Gradients:
    """Gradients of upstream * total_score w.r.t. every touched parameter.

    Pooled rows route gradient only to the child that won the max; the trace
    must have been produced with the current parameter values.
    """
    plan = trace.plan
    d_word, d_dist, d_W, d_v = kernels.tree_backward(
        plan.order, plan.arc_start, plan.arc_child, plan.node_word, plan.arc_dist,
        plan.arc_pair, plan.wloc, plan.dloc, plan.ploc,
        len(plan.word_rows), len(plan.dist_rows), len(plan.pair_slots),
        trace.p, trace.z, trace.pool_argmax,
        params.pos_pairs.W, params.pos_pairs.v, upstream)
    grads = Gradients()
    for local, row in enumerate(plan.word_rows):
        grads.words[int(row)] = d_word[local]
    for local, row in enumerate(plan.dist_rows):
        grads.dists[int(row)] = d_dist[local]
    for local, slot in enumerate(plan.pair_slots):
        grads.pair_W[int(slot)] = d_W[local]
        grads.pair_v[int(slot)] = d_v[local]
    return grads
