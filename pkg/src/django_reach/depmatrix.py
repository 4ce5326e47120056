"""
Syntactic read/write dependency analysis of transition groups and the read and write matrices built from it.
"""
__author__ = "Thorin Schiffer"

from dataclasses import dataclass
from typing import FrozenSet, Iterable, Optional, Tuple

from django_reach import syntax
from django_reach.utils import bits

READ_DEP = "READ_DEP"
READ_COPY_INDEP = "READ_COPY_INDEP"
READ_OVERWRITE_INDEP = "READ_OVERWRITE_INDEP"
WRITE_DEP = "WRITE_DEP"
WRITE_INDEP = "WRITE_INDEP"

Matrix = Tuple[Tuple[int, ...], ...]


@dataclass(frozen=True)
class RWSets:
    guard_reads: FrozenSet[str]
    action_reads: FrozenSet[str]
    must_write: FrozenSet[str]
    may_write: FrozenSet[str]

    @property
    def reads(self) -> FrozenSet[str]:
        return self.guard_reads | self.action_reads | self.may_write

    @property
    def writes(self) -> FrozenSet[str]:
        return self.must_write | self.may_write


@dataclass(frozen=True)
class DependencyMatrices:
    variables: Tuple[str, ...]
    groups: Tuple[str, ...]
    rm: Matrix
    wm: Matrix
    rw: Tuple[RWSets, ...] = ()

    @property
    def N(self) -> int:
        return len(self.variables)

    @property
    def M(self) -> int:
        return len(self.groups)

    def read_mask(self, i: int) -> Tuple[int, ...]:
        return self.rm[i]

    def write_mask(self, i: int) -> Tuple[int, ...]:
        return self.wm[i]

    @property
    def classification(self):
        return tuple(tuple(classify(self, i, j) for j in range(self.N)) for i in range(self.M))


def _free(expr, bound) -> FrozenSet[str]:
    return frozenset(syntax.names(expr)) - bound


def _action(stmt, bound: FrozenSet[str]) -> Tuple[FrozenSet[str], FrozenSet[str], FrozenSet[str]]:
    """
    Returns (reads, must, may) of a statement; names bound by an enclosing ANY are not reads
    """
    if isinstance(stmt, syntax.Assign):
        return _free(stmt.expr, bound), frozenset([stmt.target]), frozenset()
    if isinstance(stmt, syntax.Skip):
        return frozenset(), frozenset(), frozenset()
    if isinstance(stmt, syntax.Parallel):
        reads, must, may = frozenset(), frozenset(), frozenset()
        for item in stmt.items:
            r, m, y = _action(item, bound)
            reads, must, may = reads | r, must | m, may | y
        return reads, must, may - must
    if isinstance(stmt, syntax.If):
        r1, m1, y1 = _action(stmt.then, bound)
        r2, m2, y2 = _action(stmt.orelse, bound) if stmt.orelse is not None else (frozenset(),) * 3
        must = m1 & m2
        return _free(stmt.cond, bound) | r1 | r2, must, (m1 | y1 | m2 | y2) - must
    inner = bound | {name for name, _ in stmt.params}
    reads = _free(stmt.where, inner)
    for _, typing in stmt.params:
        reads |= _free(typing, inner)
    r, must, may = _action(stmt.body, inner)
    return reads | r, must, may


def rw_sets(nop, variables: Optional[Iterable[str]] = None) -> RWSets:
    """
    Computes which variables a normalized operation reads in its guard and action and which it writes
    on every or only on some execution paths
    @param nop: normalized operation
    @param variables: machine variables; when given, constants and labels are filtered out
    @return: the read and write sets
    """
    guard = frozenset(syntax.names(nop.guard))
    reads, must, may = _action(nop.body, frozenset())
    if variables is not None:
        keep = frozenset(variables)
        guard, reads, must, may = guard & keep, reads & keep, must & keep, may & keep
    return RWSets(guard_reads=guard, action_reads=reads, must_write=must, may_write=may)


def build_matrices(em) -> DependencyMatrices:
    """
    Builds the M x N read and write matrices of an elaborated machine. May-written variables are marked
    dependent in both matrices, a conditional write has to copy the old value on the paths that skip it.
    @param em: elaborated machine
    @return: the dependency matrices
    """
    sets = tuple(rw_sets(g.operation, em.variables) for g in em.groups)
    rm = tuple(tuple(int(v in s.reads) for v in em.variables) for s in sets)
    wm = tuple(tuple(int(v in s.writes) for v in em.variables) for s in sets)
    return DependencyMatrices(variables=em.variables, groups=em.group_names, rm=rm, wm=wm, rw=sets)


def classify(dm: DependencyMatrices, i: int, j: int) -> Tuple[str, str]:
    """
    Classifies cell (i, j) as (read class, write class)
    """
    write = WRITE_DEP if dm.wm[i][j] else WRITE_INDEP
    if dm.rm[i][j]:
        return READ_DEP, write
    return (READ_OVERWRITE_INDEP if dm.wm[i][j] else READ_COPY_INDEP), write


def permute_matrices(dm: DependencyMatrices, perm) -> DependencyMatrices:
    """
    Reorders the matrix columns, perm maps new position to old position
    """
    return DependencyMatrices(
        variables=tuple(dm.variables[k] for k in perm),
        groups=dm.groups,
        rm=tuple(tuple(row[k] for k in perm) for row in dm.rm),
        wm=tuple(tuple(row[k] for k in perm) for row in dm.wm),
        rw=dm.rw,
    )


def format_matrices(dm: DependencyMatrices) -> str:
    width = max((len(g) for g in dm.groups), default=0)
    lines = [" ".join(dm.variables)]
    lines.extend(
        f"{name}:{' ' * (width - len(name))} r={bits(r)} w={bits(w)}" for name, r, w in zip(dm.groups, dm.rm, dm.wm)
    )
    return "\n".join(lines) + "\n"
