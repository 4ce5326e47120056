"""
Reference interpreter: expressions and statements are compiled once into closures over an environment dict
(variable and parameter name -> value); the explicit search uses them as the oracle and the local provider
uses them to answer NextState calls.
"""
__author__ = "Thorin Schiffer"

import itertools
import logging
import operator
import time
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Iterable, Iterator, List, Optional, Tuple

from django_reach import settings, syntax
from django_reach.exceptions import LimitExceeded, ModelError

logger = logging.getLogger(__name__)

StateVector = Tuple[int, ...]
Effects = Callable[[Dict], Iterator[Dict]]

_BINARY = {
    "=": operator.eq,
    "/=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
}


def _const(value):
    return lambda env: value


def _compile_set(s, bound, constants, labels) -> Callable:
    """
    Compiles a membership test, returns f(value, env) -> bool
    """
    if isinstance(s, syntax.IntervalSet):
        lo = _compile(s.lo, bound, constants, labels)
        hi = _compile(s.hi, bound, constants, labels)
        return lambda v, env: lo(env) <= v <= hi(env)
    if isinstance(s, syntax.EnumerationSet):
        items = [_compile(i, bound, constants, labels) for i in s.items]
        return lambda v, env: any(v == item(env) for item in items)
    if isinstance(s, syntax.UnboundedSet) and s.name in ("NAT", "NATURAL"):
        return lambda v, env: v >= 0
    # BOOL, declared sets and INT/INTEGER contain every well-typed value
    return lambda v, env: True


def _compile(e, bound, constants, labels) -> Callable[[Dict], object]:
    if isinstance(e, (syntax.IntLit, syntax.BoolLit)):
        return _const(e.value)
    if isinstance(e, syntax.Ref):
        name = e.name
        if name in bound:
            return lambda env: env[name]
        if name in constants:
            return _const(constants[name])
        if name in labels:
            return _const(name)
        raise ModelError(f"unknown identifier {name}")
    if isinstance(e, syntax.Not):
        a = _compile(e.operand, bound, constants, labels)
        return lambda env: not a(env)
    if isinstance(e, syntax.Neg):
        a = _compile(e.operand, bound, constants, labels)
        return lambda env: -a(env)
    if isinstance(e, syntax.Call):
        a, b = (_compile(arg, bound, constants, labels) for arg in e.args)
        f = min if e.func == "min" else max
        return lambda env: f(a(env), b(env))
    if isinstance(e, syntax.Member):
        element = _compile(e.element, bound, constants, labels)
        test = _compile_set(e.set, bound, constants, labels)
        if e.negated:
            return lambda env: not test(element(env), env)
        return lambda env: test(element(env), env)
    a = _compile(e.left, bound, constants, labels)
    b = _compile(e.right, bound, constants, labels)
    if e.op == "&":
        return lambda env: a(env) and b(env)
    if e.op == "or":
        return lambda env: a(env) or b(env)
    if e.op == "=>":
        return lambda env: (not a(env)) or b(env)
    f = _BINARY[e.op]
    return lambda env: f(a(env), b(env))


def compile_expr(expr, scope, bound: Iterable[str]) -> Callable[[Dict], object]:
    """
    Compiles an expression into a closure over an environment
    @param expr: type checked expression
    @param scope: constants and labels of the machine
    @param bound: names looked up in the environment (variables and parameters)
    @return: f(env) -> value
    """
    return _compile(expr, frozenset(bound), scope.constant_values, scope.labels)


def compile_stmt(stmt, scope, bound: Iterable[str], resolve, any_limit: int, context: str) -> Effects:
    """
    Compiles a statement into a generator of effects, one dict of assignments per execution path
    @param stmt: type checked statement
    @param scope: constants and labels of the machine
    @param bound: names readable from the environment
    @param resolve: maps a typing set expression to its finite Domain
    @param any_limit: maximal number of candidate tuples an ANY may enumerate
    @param context: operation name for error messages
    """
    bound = frozenset(bound)
    if isinstance(stmt, syntax.Assign):
        target = stmt.target
        expr = compile_expr(stmt.expr, scope, bound)

        def assign(env):
            yield {target: expr(env)}

        return assign

    if isinstance(stmt, syntax.Skip):

        def skip(env):
            yield {}

        return skip

    if isinstance(stmt, syntax.Parallel):
        parts = [compile_stmt(s, scope, bound, resolve, any_limit, context) for s in stmt.items]

        def parallel(env):
            for combination in itertools.product(*(list(part(env)) for part in parts)):
                merged = {}
                for effect in combination:
                    merged.update(effect)
                yield merged

        return parallel

    if isinstance(stmt, syntax.If):
        cond = compile_expr(stmt.cond, scope, bound)
        then = compile_stmt(stmt.then, scope, bound, resolve, any_limit, context)
        orelse = (
            compile_stmt(stmt.orelse, scope, bound, resolve, any_limit, context)
            if stmt.orelse is not None
            else compile_stmt(syntax.Skip(), scope, bound, resolve, any_limit, context)
        )

        def conditional(env):
            yield from (then if cond(env) else orelse)(env)

        return conditional

    names = tuple(name for name, _ in stmt.params)
    values = [resolve(s, context).values for _, s in stmt.params]
    candidates = 1
    for v in values:
        candidates *= len(v)
    inner = bound | set(names)
    where = compile_expr(stmt.where, scope, inner)
    body = compile_stmt(stmt.body, scope, inner, resolve, any_limit, context)

    def choose(env):
        if candidates > any_limit:
            raise LimitExceeded(
                f"{context}: ANY {', '.join(names)} enumerates {candidates} candidates, limit {any_limit}"
            )
        for combination in itertools.product(*values):
            local = dict(env)
            local.update(zip(names, combination))
            if where(local):
                yield from body(local)

    return choose


def eval_pred(em, pred, state: StateVector, bindings: Optional[Dict] = None) -> bool:
    """
    Evaluates a predicate in a state
    @param em: elaborated machine
    @param pred: predicate over the machine variables and the bound names
    @param state: state vector of value indices
    @param bindings: values of parameters, by name
    @return: truth value of the predicate
    """
    bindings = bindings or {}
    env = em.environment(state)
    env.update(bindings)
    return bool(compile_expr(pred, em.scope, tuple(env))(env))


def successors(em, group_index: int, state: StateVector) -> FrozenSet[StateVector]:
    """
    All t with state ->_i t, empty iff the group is disabled in state
    """
    group = em.groups[group_index]
    env = em.environment(state)
    if not group.guard(env):
        return frozenset()
    result = set()
    for effect in group.effects(env):
        target = list(state)
        for name, value in effect.items():
            j = em.positions[name]
            domain = em.domains[j]
            index = domain.index(value)
            if index is None or type(value) is not type(domain.values[0]):
                raise ModelError(
                    f"{group.name}: value {value!r} assigned to {name} is outside its domain {domain.describe()}"
                )
            target[j] = index
        result.add(tuple(target))
    return frozenset(result)


@dataclass(frozen=True)
class ExplicitReachResult:
    states: FrozenSet[StateVector]
    order: Tuple[StateVector, ...]
    transitions: Tuple[Tuple[StateVector, int, StateVector], ...]
    nextstate_calls: int
    deadlocks: FrozenSet[StateVector]
    levels: int
    wall_time: float


def explicit_reach(em, state_limit: Optional[int] = None) -> ExplicitReachResult:
    """
    Breadth first search that asks every group in every reached state, the classical explicit algorithm
    @param em: elaborated machine
    @param state_limit: maximal number of states, defaults to REACH_STATE_LIMIT
    @return: the reachable states, transitions and deadlocks
    """
    state_limit = state_limit or settings.STATE_LIMIT
    started = time.perf_counter()
    index = {}
    for s in em.initial_states:
        index.setdefault(s, len(index))
    transitions = []
    deadlocks = set()
    calls = 0
    levels = 0
    level = sorted(index)
    while level:
        levels += 1
        fresh = set()
        for s in level:
            enabled = False
            for i in range(em.M):
                calls += 1
                for t in sorted(successors(em, i, s)):
                    enabled = True
                    transitions.append((s, i, t))
                    if t not in index:
                        index[t] = len(index)
                        if len(index) > state_limit:
                            raise LimitExceeded(f"explicit search exceeded {state_limit} states")
                        fresh.add(t)
            if not enabled:
                deadlocks.add(s)
        logger.debug("explicit level %d: %d new states", levels, len(fresh))
        level = sorted(fresh)
    result = ExplicitReachResult(
        states=frozenset(index),
        order=tuple(index),
        transitions=tuple(transitions),
        nextstate_calls=calls,
        deadlocks=frozenset(deadlocks),
        levels=levels,
        wall_time=time.perf_counter() - started,
    )
    logger.info("explicit search: %d states, %d calls, %d deadlocks", len(index), calls, len(deadlocks))
    return result


def format_graph(result: ExplicitReachResult, em) -> str:
    """
    Transition graph dump: a state table followed by one 'srcIdx groupName dstIdx' line per edge
    """
    index = {s: i for i, s in enumerate(result.order)}
    lines = [f"{i} {em.render(s)}" for i, s in enumerate(result.order)]
    edges = sorted((index[s], g, index[t]) for s, g, t in result.transitions)
    lines.extend(f"{s} {em.groups[g].name} {t}" for s, g, t in edges)
    return "\n".join(lines) + "\n"


def check_invariant(em, states: Iterable[StateVector]) -> List[StateVector]:
    """
    States falsifying the non-typing INVARIANT conjuncts, in the order given
    """
    if not em.invariant:
        return []
    check = compile_expr(syntax.conjunction(em.invariant), em.scope, em.variables)
    return [s for s in states if not check(em.environment(s))]
