"""
Elaboration turns a parsed machine into the finite partitioned transition system the engines explore:
constants are bound, every variable gets a finite domain, operations are normalized into transition groups
and the initial states are materialized as vectors of value indices.
"""
__author__ = "Thorin Schiffer"

import itertools
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, Optional, Tuple

from django_reach import semantics, settings, syntax
from django_reach.exceptions import LimitExceeded, ModelError

logger = logging.getLogger(__name__)

BOOL = "BOOL"
INTEGER = "INTEGER"

StateVector = Tuple[int, ...]


@dataclass(frozen=True)
class Domain:
    """
    Finite ordered value list; LDDs and state vectors store indices into it
    """

    kind: str
    values: Tuple
    name: Optional[str] = None
    _index: Dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.values:
            raise ModelError(f"Empty domain {self.describe()}")
        object.__setattr__(self, "_index", {v: i for i, v in enumerate(self.values)})

    @classmethod
    def boolean(cls):
        return cls("BOOL", (False, True))

    @classmethod
    def interval(cls, lo: int, hi: int):
        if lo > hi:
            raise ModelError(f"Empty domain {lo}..{hi}")
        return cls("INT_RANGE", tuple(range(lo, hi + 1)))

    @classmethod
    def enum(cls, name: str, labels):
        return cls("ENUM", tuple(labels), name)

    @classmethod
    def finite(cls, values, name=None):
        """
        Explicit finite enumeration, used for parameters typed with {…}; name is the set of enumerated labels
        """
        return cls("VALUES", tuple(sorted(set(values))), name)

    @property
    def type(self) -> str:
        if self.kind == "BOOL":
            return BOOL
        if self.name is not None:
            return self.name
        if isinstance(self.values[0], bool):
            return BOOL
        return INTEGER

    @property
    def lo(self):
        return self.values[0]

    @property
    def hi(self):
        return self.values[-1]

    def __len__(self):
        return len(self.values)

    def index(self, value) -> Optional[int]:
        return self._index.get(value)

    def label(self, index: int) -> str:
        return render_value(self.values[index])

    def describe(self) -> str:
        if self.kind == "BOOL":
            return "BOOL"
        if self.kind == "INT_RANGE" and self.values:
            return f"{self.lo}..{self.hi}"
        if self.kind == "ENUM":
            return self.name
        return "{" + ", ".join(render_value(v) for v in self.values) + "}"


def render_value(value) -> str:
    if isinstance(value, bool):
        return "TRUE" if value else "FALSE"
    return str(value)


@dataclass(frozen=True)
class Scope:
    """
    Static names of a machine: bound constants, enumerated set labels and the sets themselves
    """

    constants: Tuple[Tuple[str, int], ...]
    sets: Tuple[Tuple[str, Domain], ...]

    @property
    def constant_values(self) -> Dict[str, int]:
        return dict(self.constants)

    @property
    def set_domains(self) -> Dict[str, Domain]:
        return dict(self.sets)

    @property
    def labels(self) -> Dict[str, str]:
        return {label: name for name, domain in self.sets for label in domain.values}


@dataclass(frozen=True)
class NormalizedOperation:
    name: str
    guard: syntax.Expr
    body: syntax.Stmt


@dataclass(frozen=True)
class Group:
    """
    One transition group; guard and effects are the compiled closures of the normalized operation
    """

    name: str
    operation: NormalizedOperation
    guard: object = field(compare=False, repr=False, default=None)
    effects: object = field(compare=False, repr=False, default=None)


@dataclass(frozen=True)
class ElaboratedMachine:
    name: str
    variables: Tuple[str, ...]
    domains: Tuple[Domain, ...]
    groups: Tuple[Group, ...]
    initial_states: Tuple[StateVector, ...]
    invariant: Tuple[syntax.Expr, ...]
    scope: Scope

    @property
    def N(self) -> int:
        return len(self.variables)

    @property
    def M(self) -> int:
        return len(self.groups)

    @property
    def group_names(self) -> Tuple[str, ...]:
        return tuple(g.name for g in self.groups)

    @cached_property
    def positions(self) -> Dict[str, int]:
        return {name: j for j, name in enumerate(self.variables)}

    def position(self, variable: str) -> int:
        return self.positions[variable]

    def environment(self, state: StateVector) -> Dict:
        """
        Decodes a state vector into a name to value mapping
        """
        return {name: domain.values[i] for name, domain, i in zip(self.variables, self.domains, state)}

    def encode(self, values: Dict, context: str) -> StateVector:
        """
        Encodes a name to value mapping into a state vector, checking every value against its domain
        @param values: value of every variable
        @param context: names the operation in error messages
        """
        vector = []
        for name, domain in zip(self.variables, self.domains):
            index = domain.index(values[name])
            if index is None or type(values[name]) is not type(domain.values[0]):
                raise ModelError(
                    f"{context}: value {render_value(values[name])} of {name} is outside its domain {domain.describe()}"
                )
            vector.append(index)
        return tuple(vector)

    def render(self, state: StateVector) -> str:
        return "<" + ",".join(d.label(i) for d, i in zip(self.domains, state)) + ">"


def normalize(op: syntax.OperationDecl) -> NormalizedOperation:
    """
    Moves every guard conjunct mentioning a parameter into an ANY around the body, so the remaining guard is
    parameter free and the successor sets stay the same
    @param op: type checked operation
    @return: the normalized operation
    """
    if not op.params:
        return NormalizedOperation(op.name, op.guard, op.body)
    params = {name for name, _ in op.params}
    moved, kept = [], []
    for c in syntax.conjuncts(op.guard):
        (moved if params & set(syntax.names(c)) else kept).append(c)
    body = syntax.Any(op.params, syntax.conjunction(moved), op.body)
    return NormalizedOperation(op.name, syntax.conjunction(kept), body)


def constant_value(expr, constants: Dict[str, int], context: str) -> int:
    """
    Evaluates an integer expression over constants only
    """
    if isinstance(expr, syntax.IntLit):
        return expr.value
    if isinstance(expr, syntax.Ref) and expr.name in constants:
        return constants[expr.name]
    if isinstance(expr, syntax.Neg):
        return -constant_value(expr.operand, constants, context)
    if isinstance(expr, syntax.BinOp) and expr.op in syntax.ARITHMETIC_OPS:
        a = constant_value(expr.left, constants, context)
        b = constant_value(expr.right, constants, context)
        return {"+": a + b, "-": a - b, "*": a * b}[expr.op]
    if isinstance(expr, syntax.Call):
        args = [constant_value(a, constants, context) for a in expr.args]
        return min(args) if expr.func == "min" else max(args)
    raise ModelError(f"{context}: bound must be a constant integer expression")


class _TypeChecker:
    def __init__(self, scope: Scope):
        self.scope = scope
        self.constants = scope.constant_values
        self.sets = scope.set_domains
        self.labels = scope.labels

    def domain(self, s, context: str, variable=False) -> Domain:
        """
        Resolves a typing set into a finite domain
        """
        if isinstance(s, syntax.BoolSet):
            return Domain.boolean()
        if isinstance(s, syntax.IntervalSet):
            return Domain.interval(
                constant_value(s.lo, self.constants, context), constant_value(s.hi, self.constants, context)
            )
        if isinstance(s, syntax.NamedSet):
            if s.name not in self.sets:
                raise ModelError(f"{context}: {s.name} is not a set")
            return self.sets[s.name]
        if isinstance(s, syntax.UnboundedSet):
            raise ModelError(f"{context}: unbounded domain {s.name}, use an interval lo..hi")
        if variable:
            raise ModelError(f"{context}: variable domains must be BOOL, an interval or a declared set")
        values = []
        for item in s.items:
            if isinstance(item, syntax.Ref) and item.name in self.labels:
                values.append(item.name)
            elif isinstance(item, syntax.BoolLit):
                values.append(item.value)
            else:
                values.append(constant_value(item, self.constants, context))
        if len({type(v) for v in values}) > 1:
            raise ModelError(f"{context}: mixed types in enumeration")
        if not isinstance(values[0], str):
            return Domain.finite(values)
        owners = {self.labels[v] for v in values}
        if len(owners) > 1:
            raise ModelError(f"{context}: enumeration mixes labels of different sets")
        return Domain.finite(values, owners.pop())

    def expr(self, e, env: Dict[str, str], context: str) -> str:
        if isinstance(e, syntax.IntLit):
            return INTEGER
        if isinstance(e, syntax.BoolLit):
            return BOOL
        if isinstance(e, syntax.Ref):
            if e.name in env:
                return env[e.name]
            if e.name in self.constants:
                return INTEGER
            if e.name in self.labels:
                return self.labels[e.name]
            if e.name in self.sets:
                raise ModelError(f"type error in {context}: {e.name} is a set, not a value")
            raise ModelError(f"type error in {context}: {e.name} cannot be read here")
        if isinstance(e, syntax.Not):
            self.expect(e.operand, BOOL, env, context)
            return BOOL
        if isinstance(e, syntax.Neg):
            self.expect(e.operand, INTEGER, env, context)
            return INTEGER
        if isinstance(e, syntax.Call):
            for arg in e.args:
                self.expect(arg, INTEGER, env, context)
            return INTEGER
        if isinstance(e, syntax.Member):
            return self.member(e, env, context)
        if e.op in syntax.LOGICAL_OPS:
            self.expect(e.left, BOOL, env, context)
            self.expect(e.right, BOOL, env, context)
            return BOOL
        if e.op in syntax.ARITHMETIC_OPS:
            self.expect(e.left, INTEGER, env, context)
            self.expect(e.right, INTEGER, env, context)
            return INTEGER
        if e.op in ("=", "/="):
            left = self.expr(e.left, env, context)
            self.expect(e.right, left, env, context)
            return BOOL
        self.expect(e.left, INTEGER, env, context)
        self.expect(e.right, INTEGER, env, context)
        return BOOL

    def member(self, e: syntax.Member, env, context) -> str:
        t = self.expr(e.element, env, context)
        s = e.set
        if isinstance(s, syntax.BoolSet):
            expected = BOOL
        elif isinstance(s, (syntax.IntervalSet, syntax.UnboundedSet)):
            expected = INTEGER
            if isinstance(s, syntax.IntervalSet):
                self.expect(s.lo, INTEGER, env, context)
                self.expect(s.hi, INTEGER, env, context)
        elif isinstance(s, syntax.NamedSet):
            if s.name not in self.sets:
                raise ModelError(f"type error in {context}: {s.name} is not a set")
            expected = s.name
        else:
            expected = t
            for item in s.items:
                self.expect(item, t, env, context)
        if t != expected:
            raise ModelError(f"type error in {context}: {t} value tested for membership in a {expected} set")
        return BOOL

    def expect(self, e, expected: str, env, context):
        actual = self.expr(e, env, context)
        if actual != expected:
            raise ModelError(f"type error in {context}: expected {expected}, got {actual}")

    def stmt(self, s, env: Dict[str, str], variables: Dict[str, str], context: str) -> frozenset:
        """
        Type checks a statement and returns the variables it may write
        """
        if isinstance(s, syntax.Assign):
            self.expect(s.expr, variables[s.target], env, context)
            return frozenset([s.target])
        if isinstance(s, syntax.Skip):
            return frozenset()
        if isinstance(s, syntax.Parallel):
            written = frozenset()
            for item in s.items:
                w = self.stmt(item, env, variables, context)
                if written & w:
                    raise ModelError(f"{context}: {', '.join(sorted(written & w))} assigned twice in parallel")
                written |= w
            return written
        if isinstance(s, syntax.If):
            self.expect(s.cond, BOOL, env, context)
            written = self.stmt(s.then, env, variables, context)
            if s.orelse is not None:
                written |= self.stmt(s.orelse, env, variables, context)
            return written
        inner = dict(env)
        for name, typing in s.params:
            inner[name] = self.domain(typing, context).type
        self.expect(s.where, BOOL, inner, context)
        return self.stmt(s.body, inner, variables, context)


def elaborate(
    machine: syntax.Machine,
    constant_overrides: Optional[Dict[str, int]] = None,
    init_limit: Optional[int] = None,
    any_limit: Optional[int] = None,
) -> ElaboratedMachine:
    """
    Binds constants, computes finite domains, type checks and normalizes the operations and materializes
    the initial states
    @param machine: parsed machine
    @param constant_overrides: constant values that replace the defaults of the CONSTANTS clause
    @param init_limit: maximal number of initial states, defaults to REACH_INIT_LIMIT
    @param any_limit: maximal number of ANY candidates per evaluation, defaults to REACH_ANY_LIMIT
    @return: the elaborated machine
    """
    overrides = dict(constant_overrides or {})
    declared = [name for name, _ in machine.constants]
    unknown = sorted(set(overrides) - set(declared))
    if unknown:
        raise ModelError(f"Unknown constant {', '.join(unknown)}")
    constants = []
    for name, default in machine.constants:
        value = overrides.get(name, default)
        if value is None:
            raise ModelError(f"Constant {name} has no value, pass {name}=<integer>")
        constants.append((name, value))
    scope = Scope(
        constants=tuple(constants),
        sets=tuple((s.name, Domain.enum(s.name, s.labels)) for s in machine.sets),
    )
    checker = _TypeChecker(scope)

    domains = tuple(checker.domain(v.domain, f"typing of {v.name}", variable=True) for v in machine.variables)
    variables = tuple(v.name for v in machine.variables)
    var_types = {name: d.type for name, d in zip(variables, domains)}
    for c in machine.invariant:
        checker.expect(c, BOOL, var_types, "INVARIANT")

    any_limit = any_limit or settings.ANY_LIMIT
    groups = []
    for op in machine.operations:
        env = dict(var_types)
        for name, typing in op.params:
            env[name] = checker.domain(typing, op.name).type
        checker.expect(op.guard, BOOL, env, op.name)
        checker.stmt(op.body, env, var_types, op.name)
        nop = normalize(op)
        groups.append(
            Group(
                name=op.name,
                operation=nop,
                guard=semantics.compile_expr(nop.guard, scope, variables),
                effects=semantics.compile_stmt(nop.body, scope, variables, checker.domain, any_limit, op.name),
            )
        )

    written = checker.stmt(machine.initialisation, {}, var_types, "INITIALISATION")
    missing = [v for v in variables if v not in written]
    if missing:
        raise ModelError(f"INITIALISATION does not assign {', '.join(missing)}")
    init_effects = semantics.compile_stmt(
        machine.initialisation,
        scope,
        (),
        checker.domain,
        any_limit,
        "INITIALISATION",
    )
    em = ElaboratedMachine(
        name=machine.name,
        variables=variables,
        domains=domains,
        groups=tuple(groups),
        initial_states=(),
        invariant=machine.invariant,
        scope=scope,
    )
    init_limit = init_limit or settings.INIT_LIMIT
    initial = set()
    for effect in itertools.islice(init_effects({}), init_limit + 1):
        if len(effect) != len(variables):
            missing = [v for v in variables if v not in effect]
            raise ModelError(f"INITIALISATION does not assign {', '.join(missing)} on every path")
        initial.add(em.encode(effect, "INITIALISATION"))
        if len(initial) > init_limit:
            raise LimitExceeded(f"INITIALISATION yields more than {init_limit} initial states")
    if not initial:
        raise ModelError("INITIALISATION yields no initial state")
    logger.info(
        "elaborated %s: N=%d M=%d, %d initial states", machine.name, len(variables), len(groups), len(initial)
    )
    return replace(em, initial_states=tuple(sorted(initial)))
