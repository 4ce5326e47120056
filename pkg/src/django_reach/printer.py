__author__ = "Thorin Schiffer"

from django_reach import syntax

# binding strength, higher binds tighter
_PRECEDENCE = {
    "=>": 1,
    "or": 2,
    "&": 3,
    "=": 5,
    "/=": 5,
    "<": 5,
    "<=": 5,
    ">": 5,
    ">=": 5,
    "+": 6,
    "-": 6,
    "*": 7,
}
_NOT, _MEMBER, _SUM, _UNARY, _ATOM = 4, 5, 6, 8, 9


def _precedence(expr) -> int:
    if isinstance(expr, syntax.BinOp):
        return _PRECEDENCE[expr.op]
    if isinstance(expr, syntax.Not):
        return _NOT
    if isinstance(expr, syntax.Member):
        return _MEMBER
    if isinstance(expr, syntax.Neg):
        return _UNARY
    return _ATOM


def _wrap(expr, minimum: int) -> str:
    text = print_expr(expr)
    return f"({text})" if _precedence(expr) < minimum else text


def print_set(s) -> str:
    if isinstance(s, syntax.BoolSet):
        return "BOOL"
    if isinstance(s, syntax.IntervalSet):
        return f"{_wrap(s.lo, _SUM)}..{_wrap(s.hi, _SUM)}"
    if isinstance(s, syntax.EnumerationSet):
        return "{" + ", ".join(print_expr(i) for i in s.items) + "}"
    return s.name


def print_expr(expr) -> str:
    if isinstance(expr, syntax.IntLit):
        return str(expr.value)
    if isinstance(expr, syntax.BoolLit):
        return "TRUE" if expr.value else "FALSE"
    if isinstance(expr, syntax.Ref):
        return expr.name
    if isinstance(expr, syntax.Not):
        return f"not({print_expr(expr.operand)})"
    if isinstance(expr, syntax.Neg):
        return f"-{_wrap(expr.operand, _UNARY)}"
    if isinstance(expr, syntax.Call):
        return f"{expr.func}({', '.join(print_expr(a) for a in expr.args)})"
    if isinstance(expr, syntax.Member):
        op = "/:" if expr.negated else ":"
        return f"{_wrap(expr.element, _SUM)} {op} {print_set(expr.set)}"
    p = _PRECEDENCE[expr.op]
    if expr.op == "=>":
        left, right = p + 1, p
    elif p == 5:
        left = right = _SUM
    else:
        left, right = p, p + 1
    return f"{_wrap(expr.left, left)} {expr.op} {_wrap(expr.right, right)}"


def _typed(params, rest) -> str:
    parts = [f"{name} : {print_set(s)}" for name, s in params]
    parts.extend(_wrap(c, _PRECEDENCE["&"] + 1) for c in syntax.conjuncts(rest))
    return " & ".join(parts) if parts else "TRUE"


def print_stmt(stmt) -> str:
    if isinstance(stmt, syntax.Assign):
        return f"{stmt.target} := {print_expr(stmt.expr)}"
    if isinstance(stmt, syntax.Skip):
        return "skip"
    if isinstance(stmt, syntax.Parallel):
        return " || ".join(
            f"BEGIN {print_stmt(s)} END" if isinstance(s, syntax.Parallel) else print_stmt(s)
            for s in stmt.items
        )
    if isinstance(stmt, syntax.If):
        orelse = "" if stmt.orelse is None else f" ELSE {print_stmt(stmt.orelse)}"
        return f"IF {print_expr(stmt.cond)} THEN {print_stmt(stmt.then)}{orelse} END"
    names = ", ".join(name for name, _ in stmt.params)
    return f"ANY {names} WHERE {_typed(stmt.params, stmt.where)} THEN {print_stmt(stmt.body)} END"


def print_operation(op: syntax.OperationDecl) -> str:
    head = op.name + (f"({', '.join(n for n, _ in op.params)})" if op.params else "")
    if not op.params and op.guard == syntax.TRUE:
        return f"{head} = BEGIN {print_stmt(op.body)} END"
    return f"{head} = SELECT {_typed(op.params, op.guard)} THEN {print_stmt(op.body)} END"


def print_machine(machine: syntax.Machine) -> str:
    """
    Canonical, byte-stable rendering of a machine; parse_machine(print_machine(m)) == m
    @param machine: the machine to print
    @return: B-lite source text
    """
    lines = [f"MACHINE {machine.name}"]
    if machine.constants:
        lines.append(
            "CONSTANTS "
            + ", ".join(name if value is None else f"{name} = {value}" for name, value in machine.constants)
        )
    if machine.sets:
        lines.append("SETS " + "; ".join(f"{s.name} = {{{', '.join(s.labels)}}}" for s in machine.sets))
    lines.append("VARIABLES " + ", ".join(v.name for v in machine.variables))
    typing = [(v.name, v.domain) for v in machine.variables]
    lines.append("INVARIANT " + _typed(typing, syntax.conjunction(machine.invariant)))
    lines.append("INITIALISATION " + print_stmt(machine.initialisation))
    lines.append("OPERATIONS")
    ops = [print_operation(op) for op in machine.operations]
    lines.extend(f"  {text};" for text in ops[:-1])
    lines.extend(f"  {text}" for text in ops[-1:])
    lines.append("END")
    return "\n".join(lines) + "\n"
