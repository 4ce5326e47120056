"""
Symbolic reachability over a next-state provider: transition relations are learned on the fly, one
projected source at a time, and applied to whole sets of states held in an LDD store.
"""
__author__ = "Thorin Schiffer"

import abc
import logging
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

from django_reach import semantics, settings
from django_reach.depmatrix import build_matrices
from django_reach.exceptions import LimitExceeded, ProviderError, ReachError
from django_reach.ldd import FALSE, LddStore, NodeRef, PartialRelation, partial_relation
from django_reach.utils import positions, restrict

logger = logging.getLogger(__name__)

BFS = "bfs"
CHAINING = "chaining"


@dataclass(frozen=True)
class ModelInfo:
    """
    What a provider announces once per run: variables with their value labels, groups, matrices and the
    initial states
    """

    variables: Tuple[str, ...]
    domains: Tuple[Tuple[str, ...], ...]
    groups: Tuple[str, ...]
    rm: Tuple[Tuple[int, ...], ...]
    wm: Tuple[Tuple[int, ...], ...]
    initial: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        for label, matrix in (("read", self.rm), ("write", self.wm)):
            if len(matrix) != len(self.groups) or any(len(row) != len(self.variables) for row in matrix):
                raise ReachError(
                    f"{label} matrix does not match {len(self.groups)} groups x {len(self.variables)} variables"
                )

    @property
    def N(self) -> int:
        return len(self.variables)

    @property
    def M(self) -> int:
        return len(self.groups)

    def render(self, state) -> str:
        return "<" + ",".join(domain[i] for domain, i in zip(self.domains, state)) + ">"


def model_info(em, dm=None) -> ModelInfo:
    dm = dm or build_matrices(em)
    return ModelInfo(
        variables=em.variables,
        domains=tuple(tuple(d.label(i) for i in range(len(d))) for d in em.domains),
        groups=em.group_names,
        rm=dm.rm,
        wm=dm.wm,
        initial=em.initial_states,
    )


class NextStateProvider(abc.ABC):
    """
    Answers NextState calls: for a group and a read projected state, the write projected successors
    """

    def __init__(self):
        self.calls = Counter()

    @abc.abstractmethod
    def init(self) -> ModelInfo:
        pass

    @abc.abstractmethod
    def _next_state(self, group: int, src: Tuple[int, ...]) -> List[Tuple[int, ...]]:
        pass

    def next_state(self, group: int, src: Sequence[int]) -> List[Tuple[int, ...]]:
        self.calls[group] += 1
        return self._next_state(group, tuple(src))

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class LocalProvider(NextStateProvider):
    """
    In-process provider evaluating the machine directly. Read independent positions get value index 0,
    the matrices guarantee the result does not depend on them.
    """

    def __init__(self, em, dm=None):
        super().__init__()
        self.em = em
        self.dm = dm or build_matrices(em)
        self._reads = [positions(row) for row in self.dm.rm]

    def init(self) -> ModelInfo:
        return model_info(self.em, self.dm)

    def _next_state(self, group, src):
        if group >= self.em.M:
            raise ProviderError(f"unknown group {group}", group, src)
        state = [0] * self.em.N
        for j, value in zip(self._reads[group], src):
            state[j] = value
        targets = semantics.successors(self.em, group, tuple(state))
        mask = self.dm.wm[group]
        return sorted({restrict(t, mask) for t in targets})


def local_provider(em, dm=None) -> LocalProvider:
    return LocalProvider(em, dm)


@dataclass
class ReachReport:
    store: LddStore
    info: ModelInfo
    strategy: str
    reachable: NodeRef
    levels: List[int]
    relations: List[PartialRelation]
    calls: Tuple[int, ...]
    iterations: int
    wall_time: float
    deadlocks: Optional[NodeRef] = None
    violations: Optional[List[Tuple[int, ...]]] = field(default=None)

    @property
    def state_count(self) -> int:
        return self.store.sat_count(self.reachable)

    @property
    def total_calls(self) -> int:
        return sum(self.calls)

    @property
    def deadlock_count(self) -> Optional[int]:
        return None if self.deadlocks is None else self.store.sat_count(self.deadlocks)


def learn_trans(store: LddStore, provider: NextStateProvider, L: NodeRef, relations) -> List[PartialRelation]:
    """
    Extends every partial relation by the projected states of L not seen before. Each new (group, source)
    pair costs exactly one provider call, disabled sources are remembered as visited too.
    @param store: LDD store holding L and the relations
    @param provider: the next-state provider
    @param L: set of full state vectors
    @param relations: one partial relation per group
    @return: the extended relations
    """
    updated = []
    for pr in relations:
        projected = store.project(L, pr.read_mask)
        fresh = store.minus(projected, pr.visited_sources)
        pairs = []
        for src in store.enumerate(fresh):
            try:
                targets = provider.next_state(pr.group, src)
            except ProviderError:
                raise
            except ReachError as e:
                raise ProviderError(f"NextState of group {pr.group} at {src} failed: {e}", pr.group, src) from e
            pairs.extend((src, tuple(t)) for t in targets)
        pr = store.rel_extend(pr, pairs)
        updated.append(replace(pr, visited_sources=store.union(pr.visited_sources, projected)))
    return updated


def _start(provider: NextStateProvider, store: Optional[LddStore]):
    info = provider.init()
    store = store or LddStore()
    relations = [partial_relation(i, info.rm[i], info.wm[i]) for i in range(info.M)]
    # counters of a provider reused for several runs keep growing, reports count their own calls
    baseline = Counter(provider.calls)
    return info, store, relations, store.from_vectors(info.initial), baseline


def _report(provider, baseline, store, info, strategy, R, levels, relations, iterations, started) -> ReachReport:
    calls = tuple(provider.calls[i] - baseline[i] for i in range(info.M))
    report = ReachReport(
        store=store,
        info=info,
        strategy=strategy,
        reachable=R,
        levels=levels,
        relations=relations,
        calls=calls,
        iterations=iterations,
        wall_time=time.perf_counter() - started,
    )
    logger.info(
        "%s: %d states in %d iterations, %d NextState calls", strategy, report.state_count, iterations, sum(calls)
    )
    return report


def reach_bfs(provider: NextStateProvider, store: Optional[LddStore] = None) -> ReachReport:
    """
    Breadth first symbolic reachability: every level first learns the relations for the whole frontier,
    then applies all of them
    @param provider: the next-state provider
    @param store: LDD store, a fresh default sized one when omitted
    @return: the report holding the reachable set
    """
    started = time.perf_counter()
    info, store, relations, R, baseline = _start(provider, store)
    L = R
    levels = [store.sat_count(L)]
    iterations = 0
    while L != FALSE:
        iterations += 1
        relations = learn_trans(store, provider, L, relations)
        N = FALSE
        for pr in relations:
            N = store.union(N, store.next(L, pr))
        L = store.minus(N, R)
        R = store.union(R, N)
        if L != FALSE:
            levels.append(store.sat_count(L))
        logger.debug("bfs iteration %d: frontier %d", iterations, store.sat_count(L))
    return _report(provider, baseline, store, info, BFS, R, levels, relations, iterations, started)


def reach_chaining(provider: NextStateProvider, store: Optional[LddStore] = None) -> ReachReport:
    """
    Chaining: groups are applied one after the other and each sees the states the previous ones produced
    """
    started = time.perf_counter()
    info, store, relations, R, baseline = _start(provider, store)
    L = R
    levels = [store.sat_count(L)]
    iterations = 0
    while L != FALSE:
        iterations += 1
        accumulated = L
        for i, pr in enumerate(relations):
            pr = learn_trans(store, provider, accumulated, [pr])[0]
            relations[i] = pr
            accumulated = store.union(accumulated, store.next(accumulated, pr))
        L = store.minus(accumulated, R)
        R = store.union(R, accumulated)
        if L != FALSE:
            levels.append(store.sat_count(L))
        logger.debug("chaining iteration %d: frontier %d", iterations, store.sat_count(L))
    return _report(provider, baseline, store, info, CHAINING, R, levels, relations, iterations, started)


def reach(provider: NextStateProvider, strategy: str = BFS, store: Optional[LddStore] = None) -> ReachReport:
    if strategy == BFS:
        return reach_bfs(provider, store)
    if strategy == CHAINING:
        return reach_chaining(provider, store)
    raise ReachError(f"unknown strategy {strategy}")


def symbolic_deadlocks(report: ReachReport, provider: NextStateProvider) -> NodeRef:
    """
    Reachable states without a successor in any group. The relations are completed for the reachable set
    first, after a full exploration this makes no new calls.
    """
    store = report.store
    R = report.reachable
    before = Counter(provider.calls)
    report.relations = learn_trans(store, provider, R, report.relations)
    report.calls = tuple(n + provider.calls[i] - before[i] for i, n in enumerate(report.calls))
    enabled = FALSE
    for pr in report.relations:
        enabled = store.union(enabled, store.match(R, store.enabled_sources(pr), pr.read_mask))
    report.deadlocks = store.minus(R, enabled)
    logger.info("%d deadlock states", store.sat_count(report.deadlocks))
    return report.deadlocks


def invariant_violations(report: ReachReport, em, limit: Optional[int] = None) -> List[Tuple[int, ...]]:
    """
    Reachable states falsifying the invariant, found by enumerating the reachable set
    @param report: finished reachability report
    @param em: the elaborated machine, in the variable order the report was computed with
    @param limit: enumeration cap, defaults to REACH_ENUMERATION_LIMIT
    @return: violating states in lexicographic order
    """
    limit = limit or settings.ENUMERATION_LIMIT
    if not em.invariant:
        report.violations = []
        return report.violations
    count = report.state_count
    if count > limit:
        raise LimitExceeded(f"invariant check would enumerate {count} states, limit {limit}")
    report.violations = semantics.check_invariant(em, report.store.enumerate(report.reachable))
    logger.info("%d invariant violations", len(report.violations))
    return report.violations
