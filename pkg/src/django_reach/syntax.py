"""
Abstract syntax of B-lite, the guarded-command language the analyzer reads.

Nodes are frozen dataclasses so machines compare structurally, which the printer round trip relies on.
Predicates and integer expressions share one node family; the type checker in elaborate.py tells them apart.
"""
__author__ = "Thorin Schiffer"

from dataclasses import dataclass
from typing import Iterator, Optional, Tuple, Union


# set expressions, used for typing and membership


@dataclass(frozen=True)
class BoolSet:
    pass


@dataclass(frozen=True)
class IntervalSet:
    lo: "Expr"
    hi: "Expr"


@dataclass(frozen=True)
class EnumerationSet:
    items: Tuple["Expr", ...]


@dataclass(frozen=True)
class NamedSet:
    name: str


@dataclass(frozen=True)
class UnboundedSet:
    name: str


SetExpr = Union[BoolSet, IntervalSet, EnumerationSet, NamedSet, UnboundedSet]


# expressions


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Not:
    operand: "Expr"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: Tuple["Expr", ...]


@dataclass(frozen=True)
class Member:
    element: "Expr"
    set: SetExpr
    negated: bool = False


Expr = Union[IntLit, BoolLit, Ref, BinOp, Not, Neg, Call, Member]

TRUE = BoolLit(True)

LOGICAL_OPS = ("&", "or", "=>")
COMPARISON_OPS = ("=", "/=", "<", "<=", ">", ">=")
ARITHMETIC_OPS = ("+", "-", "*")
FUNCTIONS = ("min", "max")


# statements


@dataclass(frozen=True)
class Assign:
    target: str
    expr: Expr


@dataclass(frozen=True)
class Parallel:
    items: Tuple["Stmt", ...]


@dataclass(frozen=True)
class If:
    cond: Expr
    then: "Stmt"
    orelse: Optional["Stmt"] = None


@dataclass(frozen=True)
class Any:
    params: Tuple[Tuple[str, SetExpr], ...]
    where: Expr
    body: "Stmt"


@dataclass(frozen=True)
class Skip:
    pass


Stmt = Union[Assign, Parallel, If, Any, Skip]


# declarations


@dataclass(frozen=True)
class SetDecl:
    name: str
    labels: Tuple[str, ...]


@dataclass(frozen=True)
class VariableDecl:
    name: str
    domain: SetExpr


@dataclass(frozen=True)
class OperationDecl:
    name: str
    params: Tuple[Tuple[str, SetExpr], ...]
    guard: Expr
    body: Stmt


@dataclass(frozen=True)
class Machine:
    name: str
    constants: Tuple[Tuple[str, Optional[int]], ...]
    sets: Tuple[SetDecl, ...]
    variables: Tuple[VariableDecl, ...]
    invariant: Tuple[Expr, ...]
    initialisation: Stmt
    operations: Tuple[OperationDecl, ...]


def conjuncts(expr: Expr) -> Iterator[Expr]:
    """
    Splits a predicate into its top level conjuncts
    """
    if isinstance(expr, BinOp) and expr.op == "&":
        yield from conjuncts(expr.left)
        yield from conjuncts(expr.right)
    elif expr != TRUE:
        yield expr


def conjunction(parts) -> Expr:
    """
    Left-nested conjunction of the parts, TRUE for none
    """
    result = None
    for part in parts:
        result = part if result is None else BinOp("&", result, part)
    return TRUE if result is None else result


def names(expr) -> Iterator[str]:
    """
    All identifiers referenced by an expression or set expression, including set names
    """
    if isinstance(expr, Ref):
        yield expr.name
    elif isinstance(expr, BinOp):
        yield from names(expr.left)
        yield from names(expr.right)
    elif isinstance(expr, (Not, Neg)):
        yield from names(expr.operand)
    elif isinstance(expr, Call):
        for arg in expr.args:
            yield from names(arg)
    elif isinstance(expr, Member):
        yield from names(expr.element)
        yield from names(expr.set)
    elif isinstance(expr, IntervalSet):
        yield from names(expr.lo)
        yield from names(expr.hi)
    elif isinstance(expr, EnumerationSet):
        for item in expr.items:
            yield from names(item)
    elif isinstance(expr, NamedSet):
        yield expr.name
