"""Ultrametric trees, single-linkage clustering, and Newick serialization.

A tree over N taxa is an ordered sequence of N-1 coalescent events. Event n
merges two disjoint clades at a positive time t_n (backwards time, expected
mutations per site) with t_1 <= ... <= t_{N-1}. Clades are stored as Python
int bitmasks over taxon ids, so merge and membership are O(1) word
operations at any N.

Single-linkage clustering maps a strictly positive pairwise matrix to such
a tree: repeatedly coalesce the clades containing the globally closest
not-yet-coalesced taxon pair. Two implementations are provided: a naive
scan that follows the textbook argmin loop (the test oracle, O(N^3)) and a
row-minimum caching variant in O(N^2) used by default.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class TreeError(ValueError):
    """Raised for invalid trees, pair matrices, or Newick text."""


def pair_count(n_taxa: int) -> int:
    return n_taxa * (n_taxa - 1) // 2


def pair_index(u: int, v: int, n_taxa: int) -> int:
    """Flat index of unordered pair {u, v} among all C(N,2) pairs.

    Pairs are ordered lexicographically: (0,1), (0,2), ..., (0,N-1), (1,2), ...
    """
    if u == v:
        raise TreeError("pair requires two distinct taxa")
    if u > v:
        u, v = v, u
    if u < 0 or v >= n_taxa:
        raise TreeError(f"taxon id out of range for N={n_taxa}: ({u}, {v})")
    return u * n_taxa - u * (u + 1) // 2 + (v - u - 1)


def pair_of_index(k: int, n_taxa: int) -> tuple[int, int]:
    """Inverse of pair_index."""
    u = 0
    row = n_taxa - 1
    while k >= row:
        k -= row
        u += 1
        row -= 1
    return u, u + 1 + k


def all_pairs(n_taxa: int) -> np.ndarray:
    """(C(N,2), 2) array of taxon id pairs in flat-index order."""
    u, v = np.triu_indices(n_taxa, k=1)
    return np.column_stack([u, v])


@dataclass(frozen=True)
class PairMatrix:
    """Condensed symmetric matrix of strictly positive pairwise values."""

    n_taxa: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.shape != (pair_count(self.n_taxa),):
            raise TreeError(
                f"expected {pair_count(self.n_taxa)} values for N={self.n_taxa}, "
                f"got shape {vals.shape}"
            )
        if not np.isfinite(vals).all() or (vals <= 0).any():
            raise TreeError("pair values must be finite and > 0")

    def get(self, u: int, v: int) -> float:
        return float(self.values[pair_index(u, v, self.n_taxa)])

    def dense(self) -> np.ndarray:
        """Full symmetric N x N matrix with +inf on the diagonal."""
        n = self.n_taxa
        d = np.full((n, n), np.inf)
        iu, iv = np.triu_indices(n, k=1)
        d[iu, iv] = self.values
        d[iv, iu] = self.values
        return d


@dataclass(frozen=True)
class Event:
    """One coalescent event: two disjoint clades (bitmasks) merging at a time."""

    clade_a: int
    clade_b: int
    time: float

    @property
    def union(self) -> int:
        return self.clade_a | self.clade_b


def _bits(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


@dataclass(frozen=True)
class UltrametricTree:
    """Rooted binary ultrametric tree as an ordered event sequence."""

    taxa: tuple[str, ...]
    events: tuple[Event, ...]
    _id_of: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_id_of", {t: i for i, t in enumerate(self.taxa)})

    @property
    def n_taxa(self) -> int:
        return len(self.taxa)

    @property
    def times(self) -> np.ndarray:
        return np.array([e.time for e in self.events])

    def taxon_id(self, taxon) -> int:
        if isinstance(taxon, str):
            try:
                return self._id_of[taxon]
            except KeyError:
                raise TreeError(f"unknown taxon {taxon!r}") from None
        i = int(taxon)
        if not 0 <= i < self.n_taxa:
            raise TreeError(f"taxon id {i} out of range")
        return i

    def validate(self) -> None:
        """Check all structural invariants; raises TreeError on violation."""
        n = self.n_taxa
        if len(self.events) != n - 1:
            raise TreeError(f"need {n - 1} events for N={n}, got {len(self.events)}")
        full = (1 << n) - 1
        seen_clades = {1 << i for i in range(n)}
        prev_t = 0.0
        covered = 0
        for k, ev in enumerate(self.events):
            if ev.clade_a & ev.clade_b:
                raise TreeError(f"event {k}: clades overlap")
            if ev.clade_a not in seen_clades or ev.clade_b not in seen_clades:
                raise TreeError(f"event {k}: clade is not a previously formed clade")
            if not (ev.time > 0) or not np.isfinite(ev.time):
                raise TreeError(f"event {k}: time must be positive and finite")
            if ev.time < prev_t:
                raise TreeError(f"event {k}: times must be nondecreasing")
            prev_t = ev.time
            seen_clades.discard(ev.clade_a)
            seen_clades.discard(ev.clade_b)
            seen_clades.add(ev.union)
            covered += bin(ev.clade_a & ev.clade_b).count("1")
        if self.events and self.events[-1].union != full:
            raise TreeError("root event must cover the full taxa set")

    def coalescent_event_of_pair(self, u, v) -> int:
        """Index of the event at which taxa u and v coalesce."""
        ui, vi = self.taxon_id(u), self.taxon_id(v)
        if ui == vi:
            raise TreeError("pair requires two distinct taxa")
        bu, bv = 1 << ui, 1 << vi
        for k, ev in enumerate(self.events):
            if (bu & ev.clade_a and bv & ev.clade_b) or (
                bv & ev.clade_a and bu & ev.clade_b
            ):
                return k
        raise TreeError(f"pair ({u}, {v}) never coalesces; tree is malformed")

    def coalescent_time_of_pair(self, u, v) -> float:
        return self.events[self.coalescent_event_of_pair(u, v)].time

    def pair_time_matrix(self) -> PairMatrix:
        """All pairwise coalescent times; single_linkage of this reconstructs the tree."""
        n = self.n_taxa
        vals = np.empty(pair_count(n))
        for ev in self.events:
            for u in _bits(ev.clade_a):
                for v in _bits(ev.clade_b):
                    vals[pair_index(u, v, n)] = ev.time
        return PairMatrix(n, vals)


def coalescent_time_of_pair(tree: UltrametricTree, u, v) -> float:
    return tree.coalescent_time_of_pair(u, v)


def tree_length(tree: UltrametricTree) -> float:
    """Sum of all branch lengths (parent time minus child time, leaves at 0)."""
    formed_at = {}
    total = 0.0
    for ev in tree.events:
        for clade in (ev.clade_a, ev.clade_b):
            total += ev.time - formed_at.get(clade, 0.0)
        formed_at[ev.union] = ev.time
    return total


def single_linkage_naive(t: PairMatrix) -> UltrametricTree:
    """Textbook single-linkage: per step scan every not-yet-coalesced pair.

    O(N^3); kept as the oracle for the fast variant. Ties in the argmin are
    broken by lowest flat pair index.
    """
    n = t.n_taxa
    vals = t.values
    cluster_of = list(range(n))  # taxon -> cluster representative
    members = {i: 1 << i for i in range(n)}
    pairs = all_pairs(n)
    events = []
    for _ in range(n - 1):
        best = -1
        best_val = np.inf
        for k in range(len(vals)):
            u, v = pairs[k]
            if cluster_of[u] != cluster_of[v] and vals[k] < best_val:
                best_val = vals[k]
                best = k
        u, v = pairs[best]
        cu, cv = cluster_of[u], cluster_of[v]
        events.append(Event(members[cu], members[cv], float(best_val)))
        merged = members[cu] | members[cv]
        keep, drop = min(cu, cv), max(cu, cv)
        members[keep] = merged
        del members[drop]
        for i in range(n):
            if cluster_of[i] == drop:
                cluster_of[i] = keep
    tree = UltrametricTree(tuple(f"t{i}" for i in range(n)), tuple(events))
    return tree


def single_linkage(t: PairMatrix, taxa=None) -> UltrametricTree:
    """Single-linkage clustering of a pairwise time matrix into a tree.

    Row-minimum caching variant: merging clusters A and B replaces their
    rows by the elementwise minimum, so each of the N-1 steps costs O(N).
    Produces the same tree as single_linkage_naive whenever the argmin is
    unique at every step (almost surely for continuous inputs).
    """
    n = t.n_taxa
    if taxa is None:
        taxa = tuple(f"t{i}" for i in range(n))
    else:
        taxa = tuple(taxa)
        if len(taxa) != n:
            raise TreeError("taxa list does not match matrix size")
    if n == 2:
        return UltrametricTree(taxa, (Event(1, 2, float(t.values[0])),))
    d = t.dense()
    active = np.ones(n, dtype=bool)
    members = [1 << i for i in range(n)]
    # cached minimum of each active row over active columns
    row_min = d.min(axis=1)
    row_arg = d.argmin(axis=1)
    events = []
    for _ in range(n - 1):
        best = -1
        best_val = np.inf
        for i in range(n):
            if active[i] and row_min[i] < best_val:
                best_val = row_min[i]
                best = i
        a, b = best, int(row_arg[best])
        a, b = min(a, b), max(a, b)
        events.append(Event(members[a], members[b], float(best_val)))
        members[a] = members[a] | members[b]
        active[b] = False
        # fold row b into row a; distances to the merged cluster are minima
        np.minimum(d[a], d[b], out=d[a])
        d[:, a] = d[a]
        d[a, a] = np.inf
        d[b, :] = np.inf
        d[:, b] = np.inf
        if active.sum() < 2:
            break
        idx = np.flatnonzero(active)
        sub = d[a, idx]
        k = int(np.argmin(sub))
        row_min[a] = sub[k]
        row_arg[a] = idx[k]
        for i in idx:
            if i == a:
                continue
            if row_arg[i] == b:
                row_arg[i] = a
            if d[i, a] <= row_min[i]:
                row_min[i] = d[i, a]
                row_arg[i] = a
    return UltrametricTree(taxa, tuple(events))


def _format_length(b: float) -> str:
    return f"{b:.12g}"


def to_newick(tree: UltrametricTree) -> str:
    """Rooted Newick with branch lengths; children ordered by smallest taxon id."""
    formed_at = {}
    label = {}
    for i, name in enumerate(tree.taxa):
        label[1 << i] = name
        formed_at[1 << i] = 0.0
    for ev in tree.events:
        a, b = ev.clade_a, ev.clade_b
        if _min_bit(a) > _min_bit(b):
            a, b = b, a
        sa = f"{label[a]}:{_format_length(ev.time - formed_at[a])}"
        sb = f"{label[b]}:{_format_length(ev.time - formed_at[b])}"
        label[ev.union] = f"({sa},{sb})"
        formed_at[ev.union] = ev.time
    return label[tree.events[-1].union] + ";"


def _min_bit(mask: int) -> int:
    return (mask & -mask).bit_length() - 1


class _NewickParser:
    def __init__(self, text: str):
        self.text = text.strip()
        self.pos = 0

    def error(self, msg: str):
        raise TreeError(f"Newick parse error at position {self.pos}: {msg}")

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def parse(self):
        node = self.parse_node()
        if self.peek() == ";":
            self.pos += 1
        if self.pos != len(self.text):
            self.error("trailing characters after ';'")
        return node

    def parse_node(self):
        # returns (children, name, branch_length)
        children = []
        name = ""
        if self.peek() == "(":
            self.pos += 1
            children.append(self.parse_node())
            while self.peek() == ",":
                self.pos += 1
                children.append(self.parse_node())
            if self.peek() != ")":
                self.error("expected ')'")
            self.pos += 1
        start = self.pos
        while self.peek() not in ("", ":", ",", ")", ";", "("):
            self.pos += 1
        name = self.text[start : self.pos].strip()
        length = None
        if self.peek() == ":":
            self.pos += 1
            start = self.pos
            while self.peek() not in ("", ",", ")", ";"):
                self.pos += 1
            try:
                length = float(self.text[start : self.pos])
            except ValueError:
                self.error("bad branch length")
        return (children, name, length)


def from_newick(text: str, depth_tol: float = 1e-6) -> UltrametricTree:
    """Parse rooted binary Newick into an UltrametricTree.

    Leaf depths must agree within depth_tol (relative to the root-to-leaf
    depth) for the tree to be ultrametric; internal node times are the
    common leaf depth minus the node depth.
    """
    root = _NewickParser(text).parse()
    leaves: list[tuple[str, float]] = []
    internals: list[tuple[float, list[str], list[str]]] = []

    def walk(node, depth: float) -> list[str]:
        children, name, _ = node
        if not children:
            if not name:
                raise TreeError("leaf without a name")
            leaves.append((name, depth))
            return [name]
        if len(children) != 2:
            raise TreeError(f"non-binary node with {len(children)} children")
        sides = []
        for child in children:
            length = child[2]
            if length is None:
                raise TreeError("internal edge without a branch length")
            if length < 0:
                raise TreeError("negative branch length")
            sides.append(walk(child, depth + length))
        internals.append((depth, sides[0], sides[1]))
        return sides[0] + sides[1]

    walk(root, 0.0)
    names = [n for n, _ in leaves]
    if len(set(names)) != len(names):
        raise TreeError("duplicate taxon names in Newick input")
    if len(names) < 2:
        raise TreeError("tree needs at least 2 leaves")
    depths = np.array([d for _, d in leaves])
    span = depths.max() - depths.min()
    scale = max(1.0, depths.max())
    if span > depth_tol * scale:
        raise TreeError(f"tree is not ultrametric: leaf depth spread {span:g}")
    taxa = tuple(sorted(names))
    ids = {t: i for i, t in enumerate(taxa)}
    height = float(depths.mean())

    def mask(members: list[str]) -> int:
        m = 0
        for name in members:
            m |= 1 << ids[name]
        return m

    events = [
        Event(mask(a), mask(b), max(height - depth, 0.0))
        for depth, a, b in internals
    ]
    # children always sort before parents: equal times break on clade size
    events.sort(key=lambda e: (e.time, bin(e.union).count("1")))
    tree = UltrametricTree(taxa, tuple(events))
    tree.validate()
    return tree


def root_bipartition(tree: UltrametricTree) -> frozenset:
    """The root split as an unordered pair of taxon-name frozensets."""
    ev = tree.events[-1]
    side = lambda m: frozenset(tree.taxa[i] for i in _bits(m))
    return frozenset((side(ev.clade_a), side(ev.clade_b)))
