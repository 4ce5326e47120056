"""
List Decision Diagrams: canonical, hash-consed sets of equal-length vectors of value indices.

A node is (value, down, right): down continues the vector at the next position, right is the next
alternative value at the same position. Refs are plain integers into the store; FALSE (empty set) and
TRUE (the set holding only the empty vector) are 0 and 1. Right chains are walked iteratively, the
recursion only follows down edges so its depth is bounded by the vector length.
"""
__author__ = "Thorin Schiffer"

import logging
from dataclasses import dataclass, replace
from itertools import groupby
from operator import itemgetter
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from django_reach import settings
from django_reach.exceptions import ConfigurationError, LddError, LimitExceeded

logger = logging.getLogger(__name__)

FALSE = 0
TRUE = 1

NodeRef = int
Vector = Tuple[int, ...]

# position kinds of a group inside the interleaved step relation
_COPY, _READ, _WRITE, _READ_WRITE = 0, 1, 2, 3


@dataclass(frozen=True)
class PartialRelation:
    """
    The relation learned so far for one transition group.

    rel holds read projected sources concatenated with write projected targets, step holds the same pairs
    interleaved position by position and is what next() walks.
    """

    group: int
    read_mask: Tuple[int, ...]
    write_mask: Tuple[int, ...]
    rel: NodeRef = FALSE
    step: NodeRef = FALSE
    visited_sources: NodeRef = FALSE

    @property
    def kinds(self) -> Tuple[int, ...]:
        return tuple(r + 2 * w for r, w in zip(self.read_mask, self.write_mask))

    @property
    def read_count(self) -> int:
        return sum(self.read_mask)

    @property
    def write_count(self) -> int:
        return sum(self.write_mask)

    def interleave(self, src: Vector, dst: Vector) -> Vector:
        """
        Merges a projected source and target into the step encoding
        """
        out = []
        si = di = 0
        for kind in self.kinds:
            if kind & _READ:
                out.append(src[si])
                si += 1
            if kind & _WRITE:
                out.append(dst[di])
                di += 1
        return tuple(out)


def partial_relation(group: int, read_mask: Sequence, write_mask: Sequence) -> PartialRelation:
    return PartialRelation(group, tuple(int(b) for b in read_mask), tuple(int(b) for b in write_mask))


class LddStore:
    """
    Owner of all nodes and of the operation cache. Not thread safe, one store per run.
    """

    def __init__(self, node_table_size: Optional[int] = None, cache_size: Optional[int] = None, cache=True):
        self.node_table_size = settings.NODE_TABLE_SIZE if node_table_size is None else node_table_size
        self.cache_size = settings.CACHE_SIZE if cache_size is None else cache_size
        for label, size in (("node table", self.node_table_size), ("operation cache", self.cache_size)):
            if not settings.MIN_TABLE_SIZE <= size <= settings.MAX_TABLE_SIZE:
                raise ConfigurationError(
                    f"{label} size {size} outside [{settings.MIN_TABLE_SIZE}, {settings.MAX_TABLE_SIZE}]"
                )
        self.use_cache = cache
        # slots 0 and 1 are the terminals
        self._value: List[int] = [-1, -1]
        self._down: List[NodeRef] = [FALSE, FALSE]
        self._right: List[NodeRef] = [FALSE, FALSE]
        self._depth: List[int] = [-1, 0]
        self._unique: Dict[Tuple[int, NodeRef, NodeRef], NodeRef] = {}
        self._cache: Dict = {}
        self.cache_hits = 0
        self.cache_misses = 0

    # node level

    def mk(self, value: int, down: NodeRef, right: NodeRef = FALSE) -> NodeRef:
        """
        Returns the unique node (value, down, right), allocating it when it does not exist yet
        """
        key = (value, down, right)
        ref = self._unique.get(key)
        if ref is not None:
            return ref
        if down == FALSE:
            raise LddError(f"node with value {value} has an empty down edge")
        if value < 0:
            raise LddError(f"negative value {value}")
        if right != FALSE:
            if value >= self._value[right]:
                raise LddError(f"right chain out of order: {value} before {self._value[right]}")
            if self._depth[right] != self._depth[down] + 1:
                raise LddError("right chain mixes vector lengths")
        if len(self._value) >= self.node_table_size:
            raise LimitExceeded(f"LDD node table exhausted ({self.node_table_size} nodes)")
        ref = len(self._value)
        self._value.append(value)
        self._down.append(down)
        self._right.append(right)
        self._depth.append(self._depth[down] + 1)
        self._unique[key] = ref
        return ref

    def value(self, ref: NodeRef) -> int:
        return self._value[ref]

    def down(self, ref: NodeRef) -> NodeRef:
        return self._down[ref]

    def right(self, ref: NodeRef) -> NodeRef:
        return self._right[ref]

    def depth(self, ref: NodeRef) -> Optional[int]:
        """
        Vector length of a set, None for the empty set which fits every length
        """
        return None if ref == FALSE else self._depth[ref]

    def _chain(self, ref: NodeRef) -> Iterator[Tuple[int, NodeRef]]:
        while ref > TRUE:
            yield self._value[ref], self._down[ref]
            ref = self._right[ref]

    def _build(self, items, tail: NodeRef = FALSE) -> NodeRef:
        for value, down in reversed(items):
            tail = self.mk(value, down, tail)
        return tail

    def _cached(self, key):
        if not self.use_cache:
            return None
        ref = self._cache.get(key)
        if ref is None:
            self.cache_misses += 1
        else:
            self.cache_hits += 1
        return ref

    def _remember(self, key, ref):
        if self.use_cache:
            if len(self._cache) >= self.cache_size:
                self._cache.clear()
            self._cache[key] = ref
        return ref

    def clear_cache(self):
        self._cache.clear()

    def _same_length(self, *refs):
        depths = {self._depth[r] for r in refs if r != FALSE}
        if len(depths) > 1:
            raise LddError(f"operands hold vectors of different lengths {sorted(depths)}")

    # construction

    def from_vector(self, vector: Sequence[int]) -> NodeRef:
        ref = TRUE
        for value in reversed(vector):
            ref = self.mk(value, ref, FALSE)
        return ref

    def from_vectors(self, vectors: Iterable[Sequence[int]]) -> NodeRef:
        """
        Builds the set of the given vectors in one pass
        """
        vectors = sorted({tuple(v) for v in vectors})
        if not vectors:
            return FALSE
        if len({len(v) for v in vectors}) > 1:
            raise LddError("vectors of different lengths")
        return self._from_sorted(vectors, 0)

    def _from_sorted(self, vectors: List[Vector], k: int) -> NodeRef:
        if k == len(vectors[0]):
            return TRUE
        items = [(value, self._from_sorted(list(rows), k + 1)) for value, rows in groupby(vectors, key=itemgetter(k))]
        return self._build(items)

    # set algebra

    def union(self, a: NodeRef, b: NodeRef) -> NodeRef:
        self._same_length(a, b)
        return self._union(a, b)

    def _union(self, a: NodeRef, b: NodeRef) -> NodeRef:
        if a == b or b == FALSE:
            return a
        if a == FALSE:
            return b
        if a > b:
            a, b = b, a
        key = ("u", a, b)
        cached = self._cached(key)
        if cached is not None:
            return cached
        items = []
        x, y = a, b
        while x != FALSE and y != FALSE:
            vx, vy = self._value[x], self._value[y]
            if vx < vy:
                items.append((vx, self._down[x]))
                x = self._right[x]
            elif vy < vx:
                items.append((vy, self._down[y]))
                y = self._right[y]
            else:
                items.append((vx, self._union(self._down[x], self._down[y])))
                x, y = self._right[x], self._right[y]
        return self._remember(key, self._build(items, x if x != FALSE else y))

    def minus(self, a: NodeRef, b: NodeRef) -> NodeRef:
        self._same_length(a, b)
        return self._minus(a, b)

    def _minus(self, a: NodeRef, b: NodeRef) -> NodeRef:
        if a == b or a == FALSE:
            return FALSE
        if b == FALSE:
            return a
        key = ("m", a, b)
        cached = self._cached(key)
        if cached is not None:
            return cached
        items = []
        x, y = a, b
        while x != FALSE and y != FALSE:
            vx, vy = self._value[x], self._value[y]
            if vx < vy:
                items.append((vx, self._down[x]))
                x = self._right[x]
            elif vy < vx:
                y = self._right[y]
            else:
                d = self._minus(self._down[x], self._down[y])
                if d != FALSE:
                    items.append((vx, d))
                x, y = self._right[x], self._right[y]
        return self._remember(key, self._build(items, x))

    def intersect(self, a: NodeRef, b: NodeRef) -> NodeRef:
        self._same_length(a, b)
        return self._intersect(a, b)

    def _intersect(self, a: NodeRef, b: NodeRef) -> NodeRef:
        if a == b:
            return a
        if a == FALSE or b == FALSE:
            return FALSE
        if a > b:
            a, b = b, a
        key = ("i", a, b)
        cached = self._cached(key)
        if cached is not None:
            return cached
        items = []
        x, y = a, b
        while x != FALSE and y != FALSE:
            vx, vy = self._value[x], self._value[y]
            if vx < vy:
                x = self._right[x]
            elif vy < vx:
                y = self._right[y]
            else:
                d = self._intersect(self._down[x], self._down[y])
                if d != FALSE:
                    items.append((vx, d))
                x, y = self._right[x], self._right[y]
        return self._remember(key, self._build(items))

    def insert(self, s: NodeRef, vector: Sequence[int]) -> NodeRef:
        return self.union(s, self.from_vector(vector))

    def member(self, s: NodeRef, vector: Sequence[int]) -> bool:
        if s != FALSE and self._depth[s] != len(vector):
            raise LddError(f"vector of length {len(vector)} tested against a set of length {self._depth[s]}")
        ref = s
        for value in vector:
            while ref > TRUE and self._value[ref] < value:
                ref = self._right[ref]
            if ref <= TRUE or self._value[ref] != value:
                return False
            ref = self._down[ref]
        return ref == TRUE

    def sat_count(self, s: NodeRef) -> int:
        if s <= TRUE:
            return s
        key = ("#", s)
        cached = self._cached(key)
        if cached is not None:
            return cached
        return self._remember(key, sum(self.sat_count(down) for _, down in self._chain(s)))

    def enumerate(self, s: NodeRef) -> Iterator[Vector]:
        """
        Yields the vectors of a set in lexicographic order
        """
        if s == FALSE:
            return
        if s == TRUE:
            yield ()
            return
        for value, down in self._chain(s):
            for rest in self.enumerate(down):
                yield (value,) + rest

    # projections and relations

    def project(self, s: NodeRef, mask: Sequence) -> NodeRef:
        """
        Restricts every vector of s to the positions set in mask
        """
        mask = tuple(int(b) for b in mask)
        if s != FALSE and self._depth[s] != len(mask):
            raise LddError(f"mask of length {len(mask)} applied to vectors of length {self._depth[s]}")
        return self._project(s, mask, 0)

    def _project(self, s: NodeRef, mask: Tuple[int, ...], k: int) -> NodeRef:
        if s <= TRUE:
            return s
        if not any(mask[k:]):
            return TRUE
        key = ("p", s, mask, k)
        cached = self._cached(key)
        if cached is not None:
            return cached
        if mask[k]:
            result = self._build([(value, self._project(down, mask, k + 1)) for value, down in self._chain(s)])
        else:
            result = FALSE
            for _, down in self._chain(s):
                result = self._union(result, self._project(down, mask, k + 1))
        return self._remember(key, result)

    def match(self, s: NodeRef, projected: NodeRef, mask: Sequence) -> NodeRef:
        """
        The vectors of s whose restriction to mask lies in projected
        """
        mask = tuple(int(b) for b in mask)
        if s != FALSE and self._depth[s] != len(mask):
            raise LddError(f"mask of length {len(mask)} applied to vectors of length {self._depth[s]}")
        if projected != FALSE and self._depth[projected] != sum(mask):
            raise LddError("projected set does not fit the mask")
        return self._match(s, projected, mask, 0)

    def _match(self, s: NodeRef, p: NodeRef, mask: Tuple[int, ...], k: int) -> NodeRef:
        if s == FALSE or p == FALSE:
            return FALSE
        if p == TRUE:
            return s
        key = ("x", s, p, mask, k)
        cached = self._cached(key)
        if cached is not None:
            return cached
        items = []
        if mask[k]:
            x, y = s, p
            while x != FALSE and y != FALSE:
                vx, vy = self._value[x], self._value[y]
                if vx < vy:
                    x = self._right[x]
                elif vy < vx:
                    y = self._right[y]
                else:
                    d = self._match(self._down[x], self._down[y], mask, k + 1)
                    if d != FALSE:
                        items.append((vx, d))
                    x, y = self._right[x], self._right[y]
        else:
            for value, down in self._chain(s):
                d = self._match(down, p, mask, k + 1)
                if d != FALSE:
                    items.append((value, d))
        return self._remember(key, self._build(items))

    def rel_insert(self, pr: PartialRelation, src: Sequence[int], dsts: Iterable[Sequence[int]]) -> PartialRelation:
        """
        Adds the pairs (src, dst) for every dst to the learned relation; visited sources are left to the caller
        """
        return self.rel_extend(pr, [(tuple(src), tuple(dst)) for dst in dsts])

    def rel_extend(self, pr: PartialRelation, pairs: Sequence[Tuple[Vector, Vector]]) -> PartialRelation:
        """
        Batch form of rel_insert, the relation is rebuilt once per batch
        """
        k, w = pr.read_count, pr.write_count
        for src, dst in pairs:
            if len(src) != k or len(dst) != w:
                raise LddError(
                    f"group {pr.group}: pair of lengths ({len(src)}, {len(dst)}) does not fit masks ({k}, {w})"
                )
        if not pairs:
            return pr
        rel = self.union(pr.rel, self.from_vectors(src + dst for src, dst in pairs))
        step = self.union(pr.step, self.from_vectors(pr.interleave(src, dst) for src, dst in pairs))
        return replace(pr, rel=rel, step=step)

    def enabled_sources(self, pr: PartialRelation) -> NodeRef:
        """
        Projected sources with at least one learned successor
        """
        if pr.rel == FALSE:
            return FALSE
        return self.project(pr.rel, (1,) * pr.read_count + (0,) * pr.write_count)

    def next(self, s: NodeRef, pr: PartialRelation) -> NodeRef:
        """
        Successors of the states in s under the learned relation; positions the group does not write are
        copied from the source state
        """
        kinds = pr.kinds
        if s != FALSE and self._depth[s] != len(kinds):
            raise LddError(f"states of length {self._depth[s]} for a group over {len(kinds)} variables")
        return self._next(s, pr.step, kinds, 0)

    def _next(self, s: NodeRef, r: NodeRef, kinds: Tuple[int, ...], k: int) -> NodeRef:
        if s == FALSE or r == FALSE:
            return FALSE
        if r == TRUE:
            # no dependent position left, the rest of the state is copied
            return s
        key = ("n", s, r, kinds, k)
        cached = self._cached(key)
        if cached is not None:
            return cached
        kind = kinds[k]
        if kind == _COPY:
            items = []
            for value, down in self._chain(s):
                d = self._next(down, r, kinds, k + 1)
                if d != FALSE:
                    items.append((value, d))
            result = self._build(items)
        elif kind == _READ:
            items = []
            for value, ds, dr in self._matching(s, r):
                d = self._next(ds, dr, kinds, k + 1)
                if d != FALSE:
                    items.append((value, d))
            result = self._build(items)
        elif kind == _WRITE:
            # the old value is overwritten, so all source branches merge
            rest = FALSE
            for _, ds in self._chain(s):
                rest = self._union(rest, ds)
            items = []
            for target, dr in self._chain(r):
                d = self._next(rest, dr, kinds, k + 1)
                if d != FALSE:
                    items.append((target, d))
            result = self._build(items)
        else:
            targets = {}
            for _, ds, dr in self._matching(s, r):
                for target, drr in self._chain(dr):
                    targets[target] = self._union(targets.get(target, FALSE), self._next(ds, drr, kinds, k + 1))
            result = self._build([(t, d) for t, d in sorted(targets.items()) if d != FALSE])
        return self._remember(key, result)

    def _matching(self, a: NodeRef, b: NodeRef) -> Iterator[Tuple[int, NodeRef, NodeRef]]:
        x, y = a, b
        while x > TRUE and y > TRUE:
            vx, vy = self._value[x], self._value[y]
            if vx < vy:
                x = self._right[x]
            elif vy < vx:
                y = self._right[y]
            else:
                yield vx, self._down[x], self._down[y]
                x, y = self._right[x], self._right[y]

    # inspection

    def node_count(self, s: NodeRef) -> int:
        """
        Number of distinct internal nodes reachable from s
        """
        seen = set()
        stack = [s]
        while stack:
            ref = stack.pop()
            if ref <= TRUE or ref in seen:
                continue
            seen.add(ref)
            stack.append(self._down[ref])
            stack.append(self._right[ref])
        return len(seen)

    def stats(self) -> Dict[str, int]:
        return {
            "nodes": len(self._value) - 2,
            "cache_entries": len(self._cache),
            "cache_hits": self.cache_hits,
            "cache_misses": self.cache_misses,
        }

    def to_dot(self, s: NodeRef, name: str = "ldd") -> str:
        """
        Graphviz rendering: value boxes, solid down edges, dashed right edges
        """
        lines = [f"digraph {name} {{", "  node [shape=box];", '  T [label="{ε}"];']
        seen = set()
        stack = [s]
        while stack:
            ref = stack.pop()
            if ref <= TRUE or ref in seen:
                continue
            seen.add(ref)
            lines.append(f'  n{ref} [label="{self._value[ref]}"];')
            down, right = self._down[ref], self._right[ref]
            lines.append(f"  n{ref} -> {'T' if down == TRUE else f'n{down}'};")
            if right != FALSE:
                lines.append(f"  n{ref} -> n{right} [style=dashed];")
            stack.extend((right, down))
        if s == FALSE:
            lines.append('  F [label="∅"];')
        lines.append("}")
        return "\n".join(lines) + "\n"
