__author__ = "Thorin Schiffer"

import logging
from typing import Dict, Iterable, List, Set, Tuple

from lark import Lark, Transformer, v_args
from lark.exceptions import UnexpectedCharacters, UnexpectedEOF, UnexpectedInput, VisitError

from django_reach import syntax
from django_reach.exceptions import BliteSyntaxError, ModelError

logger = logging.getLogger(__name__)

GRAMMAR = r"""
    start:          _header "INITIALISATION" stmt "OPERATIONS" operations "END"
    _header:        "MACHINE" NAME [constants] [sets] "VARIABLES" name_list "INVARIANT" pred

    constants:      "CONSTANTS" constant ("," constant)*
    constant:       NAME ["=" constant_value]
    !constant_value: ["-"] NUMBER
    sets:           "SETS" set_decl (";" set_decl)*
    set_decl:       NAME "=" "{" name_list "}"
    name_list:      NAME ("," NAME)*

    operations:     (operation (";" operation)*)?
    operation:      NAME ["(" name_list ")"] "=" op_body
    ?op_body:       "BEGIN" stmt "END"                          -> begin_body
                  | "SELECT" pred "THEN" stmt "END"             -> select_body
                  | "PRE" pred "THEN" stmt "END"                -> pre_body

    ?stmt:          simple_stmt
                  | simple_stmt ("||" simple_stmt)+             -> parallel
    ?simple_stmt:   NAME ":=" pred                              -> assign
                  | "skip"                                      -> skip
                  | "IF" pred "THEN" stmt ["ELSE" stmt] "END"   -> if_stmt
                  | "ANY" name_list "WHERE" pred "THEN" stmt "END" -> any_stmt
                  | "BEGIN" stmt "END"

    ?pred:          implication
    ?implication:   disjunction
                  | disjunction "=>" implication                -> implies
    ?disjunction:   conjunction
                  | disjunction "or" conjunction                -> or_
    ?conjunction:   negation
                  | conjunction "&" negation                    -> and_
    ?negation:      comparison
                  | "not" "(" pred ")"                          -> not_
    ?comparison:    sum
                  | sum "=" sum                                 -> eq
                  | sum "/=" sum                                -> ne
                  | sum "<" sum                                 -> lt
                  | sum "<=" sum                                -> le
                  | sum ">" sum                                 -> gt
                  | sum ">=" sum                                -> ge
                  | sum ":" set_expr                            -> member
                  | sum "/:" set_expr                           -> not_member
    ?sum:           product
                  | sum "+" product                             -> add
                  | sum "-" product                             -> sub
    ?product:       unary
                  | product "*" unary                           -> mul
    ?unary:         atom
                  | "-" unary                                   -> neg
    ?atom:          NUMBER                                      -> number
                  | "TRUE"                                      -> true
                  | "FALSE"                                     -> false
                  | NAME                                        -> ref
                  | "min" "(" pred "," pred ")"                 -> min_
                  | "max" "(" pred "," pred ")"                 -> max_
                  | "(" pred ")"

    ?set_expr:      "{" pred ("," pred)* "}"                    -> enumeration
                  | "BOOL"                                      -> bool_set
                  | unbounded_set
                  | sum [".." sum]                              -> range_or_named
    !unbounded_set: "NATURAL" | "NAT" | "INTEGER" | "INT"

    NAME:           /[A-Za-z_][A-Za-z0-9_]*/
    NUMBER:         /[0-9]+/
    COMMENT:        /\/\*(.|\n)*?\*\// | /\/\/[^\n]*/

    %import common.WS
    %ignore WS
    %ignore COMMENT
"""

_parser = Lark(GRAMMAR, parser="lalr", maybe_placeholders=True)


@v_args(inline=True)
class _ToSyntax(Transformer):
    """
    Turns the lark parse tree into syntax nodes; typing conjuncts stay in place and are lifted later
    """

    def start(self, name, constants, sets, variables, invariant, init, operations):
        return (
            str(name),
            constants or (),
            sets or (),
            variables,
            invariant,
            init,
            operations,
        )

    def constants(self, *items):
        return tuple(items)

    def constant(self, name, value):
        return str(name), value

    def constant_value(self, *tokens):
        return int("".join(str(t) for t in tokens if t is not None))

    def sets(self, *items):
        return tuple(items)

    def set_decl(self, name, labels):
        return syntax.SetDecl(str(name), labels)

    def name_list(self, *names):
        return tuple(str(n) for n in names)

    def operations(self, *items):
        return tuple(items)

    def operation(self, name, params, body):
        guard, stmt = body
        return str(name), params or (), guard, stmt

    def begin_body(self, stmt):
        return syntax.TRUE, stmt

    def select_body(self, guard, stmt):
        return guard, stmt

    def pre_body(self, guard, stmt):
        raise ModelError("PRE substitutions are not supported, use SELECT")

    def parallel(self, *items):
        return syntax.Parallel(tuple(items))

    def assign(self, target, expr):
        return syntax.Assign(str(target), expr)

    def skip(self):
        return syntax.Skip()

    def if_stmt(self, cond, then, orelse):
        return syntax.If(cond, then, orelse)

    def any_stmt(self, names, where, body):
        # the typing conjuncts of WHERE are lifted in _lift_any
        return syntax.Any(tuple((n, None) for n in names), where, body)

    def implies(self, a, b):
        return syntax.BinOp("=>", a, b)

    def or_(self, a, b):
        return syntax.BinOp("or", a, b)

    def and_(self, a, b):
        return syntax.BinOp("&", a, b)

    def not_(self, a):
        return syntax.Not(a)

    def eq(self, a, b):
        return syntax.BinOp("=", a, b)

    def ne(self, a, b):
        return syntax.BinOp("/=", a, b)

    def lt(self, a, b):
        return syntax.BinOp("<", a, b)

    def le(self, a, b):
        return syntax.BinOp("<=", a, b)

    def gt(self, a, b):
        return syntax.BinOp(">", a, b)

    def ge(self, a, b):
        return syntax.BinOp(">=", a, b)

    def member(self, a, s):
        return syntax.Member(a, s)

    def not_member(self, a, s):
        return syntax.Member(a, s, negated=True)

    def add(self, a, b):
        return syntax.BinOp("+", a, b)

    def sub(self, a, b):
        return syntax.BinOp("-", a, b)

    def mul(self, a, b):
        return syntax.BinOp("*", a, b)

    def neg(self, a):
        return syntax.Neg(a)

    def number(self, token):
        return syntax.IntLit(int(token))

    def true(self):
        return syntax.BoolLit(True)

    def false(self):
        return syntax.BoolLit(False)

    def ref(self, token):
        return syntax.Ref(str(token))

    def min_(self, a, b):
        return syntax.Call("min", (a, b))

    def max_(self, a, b):
        return syntax.Call("max", (a, b))

    def enumeration(self, *items):
        return syntax.EnumerationSet(tuple(items))

    def bool_set(self):
        return syntax.BoolSet()

    def unbounded_set(self, token):
        return syntax.UnboundedSet(str(token))

    def range_or_named(self, lo, hi):
        if hi is not None:
            return syntax.IntervalSet(lo, hi)
        if isinstance(lo, syntax.Ref):
            return syntax.NamedSet(lo.name)
        raise ModelError("Membership needs a set: {…}, lo..hi, BOOL or a declared set name")


def _typing(name: str, expr) -> bool:
    return (
        isinstance(expr, syntax.Member)
        and not expr.negated
        and isinstance(expr.element, syntax.Ref)
        and expr.element.name == name
    )


def _lift_typing(names: Iterable[str], predicate, context: str) -> Tuple[Tuple, List]:
    """
    Takes the first typing conjunct `name : S` of every name out of the predicate
    @param names: identifiers that need a type
    @param predicate: conjunction holding the typing conjuncts
    @param context: used in the error message
    @return: tuple of (name, set expression) pairs and the remaining conjuncts
    """
    rest = list(syntax.conjuncts(predicate))
    typed = []
    for name in names:
        found = next((c for c in rest if _typing(name, c)), None)
        if found is None:
            raise ModelError(f"{context}: {name} has no typing conjunct '{name} : …'")
        rest.remove(found)
        typed.append((name, found.set))
    return tuple(typed), rest


def _lift_any(stmt):
    if isinstance(stmt, syntax.Any):
        names = [n for n, _ in stmt.params]
        dup = _duplicates(names)
        if dup:
            raise ModelError(f"ANY: duplicate identifier {', '.join(dup)}")
        params, rest = _lift_typing(names, stmt.where, "ANY")
        return syntax.Any(params, syntax.conjunction(rest), _lift_any(stmt.body))
    if isinstance(stmt, syntax.Parallel):
        return syntax.Parallel(tuple(_lift_any(s) for s in stmt.items))
    if isinstance(stmt, syntax.If):
        return syntax.If(
            stmt.cond,
            _lift_any(stmt.then),
            None if stmt.orelse is None else _lift_any(stmt.orelse),
        )
    return stmt


def _duplicates(names: Iterable[str]) -> List[str]:
    seen, dup = set(), []
    for name in names:
        if name in seen and name not in dup:
            dup.append(name)
        seen.add(name)
    return dup


class _NameChecker:
    """
    Checks that every identifier resolves and that bound names are fresh
    """

    def __init__(self, machine: syntax.Machine):
        self.machine = machine
        self.variables = {v.name for v in machine.variables}
        self.constants = {name for name, _ in machine.constants}
        self.set_names = {s.name for s in machine.sets}
        self.labels = {label for s in machine.sets for label in s.labels}
        taken = (
            [v.name for v in machine.variables]
            + [name for name, _ in machine.constants]
            + [s.name for s in machine.sets]
            + [label for s in machine.sets for label in s.labels]
        )
        dup = _duplicates(taken)
        if dup:
            raise ModelError(f"Duplicate name: {', '.join(dup)}")
        dup = _duplicates(op.name for op in machine.operations)
        if dup:
            raise ModelError(f"Duplicate operation: {', '.join(dup)}")

    def check(self):
        m = self.machine
        for v in m.variables:
            self.expr(v.domain, set(), f"typing of {v.name}")
        for c in m.invariant:
            self.expr(c, set(), "INVARIANT")
        self.stmt(m.initialisation, set(), "INITIALISATION")
        for op in m.operations:
            bound = set()
            self.bind(op.params, bound, op.name)
            for _, s in op.params:
                self.expr(s, bound, op.name)
            self.expr(op.guard, bound, op.name)
            self.stmt(op.body, bound, op.name)

    def bind(self, params, bound: Set[str], context: str):
        names = [n for n, _ in params]
        dup = _duplicates(names)
        if dup:
            raise ModelError(f"{context}: duplicate parameter {', '.join(dup)}")
        for name in names:
            if name in self.variables:
                raise ModelError(f"{context}: parameter {name} clashes with a machine variable")
            if name in bound or name in self.constants or name in self.labels or name in self.set_names:
                raise ModelError(f"{context}: {name} is not a fresh identifier")
        bound.update(names)

    def expr(self, expr, bound: Set[str], context: str):
        for name in syntax.names(expr):
            if name not in bound and name not in self.variables and name not in self.constants \
                    and name not in self.labels and name not in self.set_names:
                raise ModelError(f"{context}: unknown identifier {name}")

    def stmt(self, stmt, bound: Set[str], context: str):
        if isinstance(stmt, syntax.Assign):
            if stmt.target not in self.variables:
                raise ModelError(f"{context}: cannot assign to {stmt.target}, it is not a machine variable")
            self.expr(stmt.expr, bound, context)
        elif isinstance(stmt, syntax.Parallel):
            for item in stmt.items:
                self.stmt(item, bound, context)
        elif isinstance(stmt, syntax.If):
            self.expr(stmt.cond, bound, context)
            self.stmt(stmt.then, bound, context)
            if stmt.orelse is not None:
                self.stmt(stmt.orelse, bound, context)
        elif isinstance(stmt, syntax.Any):
            inner = set(bound)
            self.bind(stmt.params, inner, context)
            for _, s in stmt.params:
                self.expr(s, inner, context)
            self.expr(stmt.where, inner, context)
            self.stmt(stmt.body, inner, context)


def parse_machine(source: str) -> syntax.Machine:
    """
    Parses B-lite source text into a machine
    @param source: the model text
    @return: the machine, typing conjuncts lifted into the variable and parameter declarations
    """
    try:
        tree = _parser.parse(source)
        name, constants, sets, variables, invariant, init, operations = _ToSyntax().transform(tree)
    except UnexpectedEOF:
        raise BliteSyntaxError("Unexpected end of input", *_eof_position(source))
    except UnexpectedCharacters as e:
        raise BliteSyntaxError(f"Unexpected character {getattr(e, 'char', '?')!r}", e.line, e.column)
    except UnexpectedInput as e:
        token = getattr(e, "token", None)
        raise BliteSyntaxError(f"Unexpected token {str(token)!r}", e.line, e.column)
    except VisitError as e:
        if isinstance(e.orig_exc, ModelError):
            raise e.orig_exc
        raise

    dup = _duplicates(variables)
    if dup:
        raise ModelError(f"Duplicate name: {', '.join(dup)}")
    typed, rest = _lift_typing(variables, invariant, "INVARIANT")
    ops = []
    for op_name, params, guard, body in operations:
        dup = _duplicates(params)
        if dup:
            raise ModelError(f"{op_name}: duplicate parameter {', '.join(dup)}")
        params, guard_rest = _lift_typing(params, guard, op_name)
        ops.append(syntax.OperationDecl(op_name, params, syntax.conjunction(guard_rest), _lift_any(body)))
    machine = syntax.Machine(
        name=name,
        constants=constants,
        sets=sets,
        variables=tuple(syntax.VariableDecl(n, s) for n, s in typed),
        invariant=tuple(rest),
        initialisation=_lift_any(init),
        operations=tuple(ops),
    )
    _NameChecker(machine).check()
    logger.debug("parsed machine %s: %d variables, %d operations", name, len(typed), len(ops))
    return machine


def _eof_position(source: str) -> Tuple[int, int]:
    lines = source.split("\n")
    return len(lines), len(lines[-1]) + 1


def parse_file(path) -> syntax.Machine:
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ModelError(f"cannot read {path}: {e.strerror}")
    except UnicodeDecodeError as e:
        raise ModelError(f"cannot read {path}: not UTF-8 text at byte {e.start}")
    return parse_machine(text)


def constant_defaults(machine: syntax.Machine) -> Dict[str, int]:
    return {name: value for name, value in machine.constants if value is not None}
