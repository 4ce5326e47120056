from pytest import mark, raises

from django_reach import syntax
from django_reach.elaborate import elaborate, normalize
from django_reach.exceptions import LimitExceeded, ModelError
from django_reach.parser import parse_file, parse_machine
from django_reach.semantics import check_invariant, eval_pred, explicit_reach, format_graph, successors
from tests.conftest import MODELS, load, machine

INITIAL = (0, 1, 0)  # <FALSE,1,0>


def group(em, name):
    return em.group_names.index(name)


def test_eval_pred(mutex):
    enter = mutex.groups[group(mutex, "Enter")].operation.guard
    restart = mutex.groups[group(mutex, "Restart")].operation.guard
    assert eval_pred(mutex, enter, INITIAL)
    assert not eval_pred(mutex, restart, INITIAL)
    assert eval_pred(mutex, syntax.TRUE, INITIAL)
    assert eval_pred(mutex, syntax.TRUE, (1, 0, 1))


def test_eval_pred_with_bindings(mutex):
    pred = syntax.BinOp("=", syntax.Ref("wait"), syntax.Ref("p"))
    assert eval_pred(mutex, pred, INITIAL, {"p": 1})
    assert not eval_pred(mutex, pred, INITIAL, {"p": 0})


def test_eval_pred_unbounded_intermediates(mutex):
    # wait - 5 leaves the domain, only assigned values are range checked
    pred = syntax.BinOp("<", syntax.BinOp("-", syntax.Ref("wait"), syntax.IntLit(5)), syntax.IntLit(0))
    assert eval_pred(mutex, pred, INITIAL)


def test_successors(mutex):
    assert successors(mutex, group(mutex, "Enter"), INITIAL) == {(1, 0, 0)}
    assert successors(mutex, group(mutex, "Exit"), INITIAL) == frozenset()
    leave = group(mutex, "Leave")
    for state in [(0, 1, 0), (1, 0, 0), (1, 1, 1), (0, 0, 1)]:
        assert successors(mutex, leave, state) == {(0,) + state[1:]}


def test_successors_out_of_domain():
    em = machine(
        "MACHINE Overflow VARIABLES x INVARIANT x : 0..1 INITIALISATION x := 1 "
        "OPERATIONS Inc = BEGIN x := x + 1 END END"
    )
    with raises(ModelError, match="Inc: value 2 assigned to x is outside its domain 0..1"):
        successors(em, 0, (1,))


def test_explicit_mutex(mutex):
    result = explicit_reach(mutex)
    assert result.states == {(0, 1, 0), (1, 0, 0), (0, 0, 1), (0, 0, 0)}
    assert result.nextstate_calls == 20
    assert result.deadlocks == frozenset()
    assert result.levels == 3


def test_explicit_without_operations():
    em = machine(
        "MACHINE Idle VARIABLES x INVARIANT x : 0..2 "
        "INITIALISATION ANY v WHERE v : 0..2 & v /= 1 THEN x := v END OPERATIONS END"
    )
    result = explicit_reach(em)
    assert result.states == {(0,), (2,)}
    assert result.nextstate_calls == 0
    assert result.deadlocks == result.states


def test_explicit_state_limit():
    with raises(LimitExceeded):
        explicit_reach(load("mutex.blite", MAXINT=5), state_limit=10)


def test_explicit_philosophers(philosophers):
    result = explicit_reach(philosophers)
    # everybody hungry, holding the left fork
    assert result.deadlocks == {(1,) * 10}


@mark.parametrize("name", ["mutex.blite", "philosophers5.blite", "counters3.blite"])
def test_explicit_closed_and_minimal(name):
    em = load(name)
    result = explicit_reach(em)
    for s in result.states:
        for i in range(em.M):
            assert successors(em, i, s) <= result.states
    targets = {t for _, _, t in result.transitions}
    assert result.states == targets | set(em.initial_states)
    assert all(s in result.states and t in result.states for s, _, t in result.transitions)


def test_elaborate_constants():
    assert load("mutex.blite", MAXINT=1).initial_states == ((0, 1, 0),)
    zero = load("mutex.blite", MAXINT=0)
    assert zero.initial_states == ((0, 0, 0),)
    assert zero.render(zero.initial_states[0]) == "<FALSE,0,0>"
    big = load("mutex.blite", MAXINT=500)
    assert [d.describe() for d in big.domains] == ["BOOL", "0..500", "0..500"]
    assert big.render(big.initial_states[0]) == "<FALSE,500,0>"


def test_elaborate_is_deterministic(mutex):
    assert load("mutex.blite", MAXINT=1) == mutex


def test_elaborate_enumerated_sets(philosophers):
    assert philosophers.domains[0].values == ("thinking", "hungry", "eating")
    assert philosophers.domains[5].values == (False, True)


def test_elaborate_nondeterministic_initialisation(counters):
    assert counters.initial_states == ((0, 0, 0), (0, 1, 0))


def test_elaborate_unknown_constant():
    with raises(ModelError, match="Unknown constant"):
        load("mutex.blite", LIMIT=3)


def test_elaborate_constant_without_value():
    with raises(ModelError, match="has no value"):
        machine(
            "MACHINE Open CONSTANTS K VARIABLES x INVARIANT x : 0..K INITIALISATION x := 0 OPERATIONS END"
        )


def test_elaborate_empty_domain():
    with raises(ModelError, match="Empty domain"):
        load("mutex.blite", MAXINT=-1)


def test_elaborate_type_error():
    with raises(ModelError, match="type error"):
        machine("MACHINE Bad VARIABLES x INVARIANT x : 0..1 INITIALISATION x := TRUE OPERATIONS END")


def test_elaborate_incomplete_initialisation():
    with raises(ModelError, match="does not assign y"):
        machine("MACHINE Bad VARIABLES x, y INVARIANT x : BOOL & y : BOOL INITIALISATION x := TRUE OPERATIONS END")


def test_elaborate_parallel_writes_twice():
    with raises(ModelError, match="assigned twice"):
        machine(
            "MACHINE Bad VARIABLES x INVARIANT x : 0..1 INITIALISATION x := 0 "
            "OPERATIONS Op = BEGIN x := 0 || x := 1 END END"
        )


def test_init_limit():
    text = (
        "MACHINE Wide VARIABLES x INVARIANT x : 0..9 "
        "INITIALISATION ANY v WHERE v : 0..9 THEN x := v END OPERATIONS END"
    )
    assert len(machine(text).initial_states) == 10
    with raises(LimitExceeded):
        elaborate(parse_machine(text), init_limit=3)


def test_any_limit():
    text = (
        "MACHINE Wide VARIABLES x INVARIANT x : 0..9 INITIALISATION x := 0 "
        "OPERATIONS Pick = BEGIN ANY v WHERE v : 0..9 THEN x := v END END END"
    )
    em = elaborate(parse_machine(text), any_limit=5)
    with raises(LimitExceeded, match="Pick"):
        successors(em, 0, (0,))
    assert len(successors(machine(text), 0, (0,))) == 10


def test_normalize_parameterless():
    decl = parse_file(MODELS / "mutex.blite").operations[0]
    nop = normalize(decl)
    assert (nop.guard, nop.body) == (decl.guard, decl.body)


def test_normalize_moves_parameter_conjuncts():
    text = (
        "MACHINE Sched VARIABLES pc, active INVARIANT pc : 0..1 & active : 0..2 "
        "INITIALISATION pc := 1 || active := 0 "
        "OPERATIONS Activate(p) = SELECT p : 0..2 & pc = 1 & p /= 0 THEN active := p END END"
    )
    decl = parse_machine(text).operations[0]
    nop = normalize(decl)
    assert nop.guard == syntax.BinOp("=", syntax.Ref("pc"), syntax.IntLit(1))
    assert isinstance(nop.body, syntax.Any)
    assert [name for name, _ in nop.body.params] == ["p"]
    assert nop.body.where == syntax.BinOp("/=", syntax.Ref("p"), syntax.IntLit(0))
    em = machine(text)
    assert successors(em, 0, (1, 0)) == {(1, 1), (1, 2)}
    assert successors(em, 0, (0, 0)) == frozenset()


def test_normalize_keeps_successors():
    text = (
        "MACHINE One VARIABLES x INVARIANT x : 0..1 INITIALISATION x := 0 "
        "OPERATIONS Set(p) = SELECT p : 0..1 & p = 1 THEN x := p END; "
        "Direct = BEGIN x := 1 END END"
    )
    nop = normalize(parse_machine(text).operations[0])
    assert nop.guard == syntax.TRUE
    assert nop.body.where == syntax.BinOp("=", syntax.Ref("p"), syntax.IntLit(1))
    em = machine(text)
    for state in [(0,), (1,)]:
        assert successors(em, 0, state) == successors(em, 1, state) == {(1,)}


def test_any_without_candidate_disables():
    em = machine(
        "MACHINE Stuck VARIABLES x INVARIANT x : 0..1 INITIALISATION x := 0 "
        "OPERATIONS Op = BEGIN ANY v WHERE v : 0..1 & v > x + 5 THEN x := v END END END"
    )
    assert successors(em, 0, (0,)) == frozenset()
    assert explicit_reach(em).deadlocks == {(0,)}


def test_counters_operations(counters):
    carry = group(counters, "Carry")
    assert successors(counters, carry, (3, 1, 0)) == {(0, 2, 0)}
    assert successors(counters, carry, (3, 3, 2)) == {(0, 3, 3)}
    assert successors(counters, carry, (3, 3, 3)) == {(0, 3, 3)}
    assert successors(counters, group(counters, "Jump"), (0, 0, 1)) == {(0, 0, 2), (0, 0, 3)}
    assert successors(counters, group(counters, "Shuffle"), (0, 2, 0)) == {(0, 2, 0), (1, 1, 0), (2, 0, 0)}
    reset = group(counters, "MayReset")
    assert successors(counters, reset, (2, 0, 3)) == {(0, 0, 3)}
    assert successors(counters, reset, (2, 0, 1)) == {(2, 0, 1)}


def test_format_graph(mutex):
    assert format_graph(explicit_reach(mutex), mutex) == (
        "0 <FALSE,1,0>\n"
        "1 <TRUE,0,0>\n"
        "2 <FALSE,0,1>\n"
        "3 <FALSE,0,0>\n"
        "0 Enter 1\n"
        "0 Leave 0\n"
        "1 Exit 2\n"
        "1 Leave 3\n"
        "1 CS_Active 1\n"
        "2 Leave 2\n"
        "2 Restart 0\n"
        "3 Leave 3\n"
    )


def test_check_invariant(mutex):
    states = sorted(explicit_reach(mutex).states)
    assert check_invariant(mutex, states) == []
    # cs = TRUE & wait = MAXINT is excluded
    assert check_invariant(mutex, [(1, 1, 0)]) == [(1, 1, 0)]
