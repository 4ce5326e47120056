import json
import select
import socket
import threading
from dataclasses import replace

from hypothesis import given, settings
from hypothesis import strategies as st
from pytest import mark, raises

from django_reach.bridge import (
    INIT_REQ,
    INIT_RESP,
    NEXT_REQ,
    NEXT_RESP,
    PROTOCOL,
    TERM,
    ConnectionClosed,
    ErrorMessage,
    InitRequest,
    InitResponse,
    NextRequest,
    NextResponse,
    RemoteProvider,
    Terminate,
    Variable,
    chunk,
    chunk_value,
    connect,
    decode,
    encode,
    endpoint_of,
    info_from_response,
    init_response,
    parse_endpoint,
    read_frame,
    serve,
    write_frame,
)
from django_reach.engine import local_provider, model_info, reach_bfs, reach_chaining, symbolic_deadlocks
from django_reach.exceptions import ConfigurationError, ProtocolError, ProviderError
from django_reach.report import format_machine, summarize_symbolic
from tests.conftest import raw_connection, serving


def endpoints(tmp_path):
    return {"ipc": f"ipc:{tmp_path / 'model.sock'}", "tcp": "tcp:127.0.0.1:0"}


def request(sock, msg):
    sock.sendall(encode(msg))
    return read_frame(sock)


def raw_frame(data):
    body = json.dumps(data).encode()
    return len(body).to_bytes(4, "big") + body


labels = st.text(min_size=1, max_size=6)
indices = st.integers(0, 2 ** 20)


@st.composite
def init_responses(draw):
    domains = draw(st.lists(st.lists(labels, min_size=1, max_size=4), max_size=4))
    n = len(domains)
    groups = draw(st.lists(labels, max_size=4))
    rows = st.lists(st.lists(st.integers(0, 1), min_size=n, max_size=n), min_size=len(groups), max_size=len(groups))
    states = st.tuples(*[st.integers(0, len(d) - 1) for d in domains]).map(list)
    return InitResponse(
        variables=[Variable(name=f"v{j}", domain=d) for j, d in enumerate(domains)],
        groups=groups,
        rm=draw(rows),
        wm=draw(rows),
        initial=draw(st.lists(states, max_size=3)),
    )


messages = st.one_of(
    st.just(InitRequest()),
    init_responses(),
    st.builds(NextRequest, group=st.integers(-5, 2 ** 31), state=st.lists(st.none() | indices, max_size=8)),
    st.builds(NextResponse, successors=st.lists(st.lists(indices, max_size=8), max_size=5)),
    st.just(Terminate()),
    st.builds(ErrorMessage, message=st.text(max_size=30)),
)


@mark.parametrize("index, data", [(0, b""), (1, b"\x01"), (255, b"\xff"), (256, b"\x01\x00"), (65536, b"\x01\x00\x00")])
def test_chunk(index, data):
    assert chunk(index) == data
    assert chunk_value(data) == index


def test_states_travel_as_chunks():
    msg = NextRequest(group=0, state=[0, 1, 256, None])
    assert msg.state == [b"", b"\x01", b"\x01\x00", None]
    assert json.loads(encode(msg)[4:])["state"] == [0, 1, 256, None]
    assert NextResponse(successors=[[2, 0]]).successors == [[b"\x02", b""]]


@settings(max_examples=1000, deadline=None)
@given(messages)
def test_codec_round_trip(msg):
    frame = encode(msg)
    assert int.from_bytes(frame[:4], "big") == len(frame) - 4
    assert decode(frame[4:]) == msg
    # sorted keys make the encoding canonical
    assert encode(decode(frame[4:])) == frame


def test_encoding_is_sorted_json():
    frame = encode(NextRequest(group=0, state=[0, 1, None]))
    assert frame[4:] == b'{"group":0,"kind":"NEXT_REQ","protocol":1,"state":[0,1,null]}'


@mark.parametrize(
    "data, error",
    [
        ([1, 2], "unknown kind None"),
        ({"kind": "HELLO", "protocol": 1}, "unknown kind HELLO"),
        ({"kind": ["TERM"], "protocol": 1}, "unknown kind"),
        ({"kind": "TERM", "protocol": 2}, "protocol version 2 not supported"),
        ({"kind": "TERM", "protocol": True}, "protocol version True not supported"),
        ({"kind": "TERM"}, "protocol version None"),
        ({"kind": "TERM", "protocol": 1, "bye": 1}, "malformed TERM frame: bye"),
        ({"kind": "NEXT_REQ", "protocol": 1, "group": 0}, "malformed NEXT_REQ frame: missing state"),
        ({"kind": "NEXT_REQ", "protocol": 1, "group": True, "state": []}, "malformed NEXT_REQ frame: group"),
        ({"kind": "NEXT_REQ", "protocol": 1, "group": 0, "state": [0, -1]}, "malformed NEXT_REQ frame: state.1"),
        ({"kind": "NEXT_REQ", "protocol": 1, "group": 0, "state": ["01"]}, "malformed NEXT_REQ frame: state.0"),
        ({"kind": "NEXT_RESP", "protocol": 1, "successors": [5]}, "malformed NEXT_RESP frame: successors.0"),
        ({"kind": "ERROR", "protocol": 1}, "malformed ERROR frame: missing message"),
    ],
)
def test_decode_rejects(data, error):
    with raises(ProtocolError, match=error):
        decode(json.dumps(data).encode())


@mark.parametrize("body", [b"{not json", b"\xff\xfe"])
def test_decode_rejects_malformed_bodies(body):
    with raises(ProtocolError, match="malformed frame"):
        decode(body)


def test_parse_endpoint():
    assert parse_endpoint("ipc:/tmp/model.sock") == (socket.AF_UNIX, "/tmp/model.sock")
    assert parse_endpoint("tcp:localhost:7000") == (socket.AF_INET, ("localhost", 7000))
    assert parse_endpoint("tcp:127.0.0.1:0") == (socket.AF_INET, ("127.0.0.1", 0))


@mark.parametrize("endpoint", ["", "ipc:", "udp:host:1", "tcp:host", "tcp::80", "tcp:host:port", None])
def test_parse_endpoint_rejects(endpoint):
    with raises(ConfigurationError, match="invalid endpoint"):
        parse_endpoint(endpoint)


def test_init_response(mutex):
    info = model_info(mutex)
    msg = init_response(info)
    assert (msg.kind, msg.protocol) == (INIT_RESP, PROTOCOL)
    assert msg.variables[0] == Variable(name="cs", domain=["FALSE", "TRUE"])
    assert msg.groups == ["Enter", "Exit", "Leave", "CS_Active", "Restart"]
    assert msg.rm[0] == [1, 1, 0]
    assert msg.initial == [[b"", b"\x01", b""]]
    assert msg.model_dump()["initial"] == [[0, 1, 0]]
    assert info_from_response(decode(encode(msg)[4:])) == info


@mark.parametrize(
    "field, value, error",
    [
        ("rm", lambda rm: rm[:2], "rm is not 5 groups x 3 variables"),
        ("wm", lambda wm: [row[:2] for row in wm], "wm is not 5 groups x 3 variables"),
        ("rm", lambda rm: [[2, 0, 0]] + rm[1:], "rm.0.0"),
        ("initial", lambda initial: [[0, 2, 0]], "initial value 2 outside the domain of wait"),
        ("initial", lambda initial: [[0, 1]], "initial state of 2 values for 3 variables"),
    ],
)
def test_malformed_init_response(mutex, field, value, error):
    data = init_response(model_info(mutex)).model_dump()
    data[field] = value(data[field])
    with raises(ProtocolError, match=f"malformed INIT_RESP frame: .*{error}"):
        decode(json.dumps(data).encode())


@mark.parametrize("transport", ["ipc", "tcp"])
def test_remote_report_equals_local(mutex, tmp_path, transport):
    local = local_provider(mutex)
    expected = reach_bfs(local)
    symbolic_deadlocks(expected, local)
    with serving(mutex, endpoints(tmp_path)[transport]) as server:
        with connect(endpoint_of(server)) as provider:
            report = reach_bfs(provider)
            symbolic_deadlocks(report, provider)
    assert server.done
    assert server.frames[NEXT_REQ] == 12
    assert server.frames[INIT_REQ] == 1
    assert report.calls == expected.calls == (3, 3, 1, 2, 3)
    summaries = [replace(summarize_symbolic(r, "MutexSimple"), wall_ms=0) for r in (expected, report)]
    assert format_machine(summaries[0]) == format_machine(summaries[1])


def relay(listener, server, kinds):
    """
    Forwards frames between one engine and the model server, noting each kind and any request the engine
    sends before the answer to its previous one
    """
    engine_side, _ = listener.accept()
    engine_side.settimeout(5)
    with engine_side, raw_connection(server) as model_side:
        while True:
            try:
                msg = read_frame(engine_side)
            except ConnectionClosed:
                return
            kinds.append(msg.kind)
            write_frame(model_side, msg)
            if msg.kind == TERM:
                return
            answer = read_frame(model_side)
            if select.select([engine_side], [], [], 0)[0]:
                kinds.append("pipelined")
            kinds.append(answer.kind)
            write_frame(engine_side, answer)


def test_requests_alternate_with_answers(mutex, tmp_path):
    kinds = []
    with serving(mutex, endpoints(tmp_path)["ipc"]) as server:
        with socket.create_server(("127.0.0.1", 0)) as listener:
            thread = threading.Thread(target=relay, args=(listener, server, kinds), daemon=True)
            thread.start()
            host, port = listener.getsockname()[:2]
            with connect(f"tcp:{host}:{port}") as provider:
                report = reach_bfs(provider)
            thread.join(timeout=10)
    assert report.state_count == 4
    assert kinds == [INIT_REQ, INIT_RESP] + [NEXT_REQ, NEXT_RESP] * 12 + [TERM]


def test_remote_chaining_over_ipc(philosophers, tmp_path):
    with serving(philosophers, endpoints(tmp_path)["ipc"]) as server:
        with connect(endpoint_of(server)) as provider:
            report = reach_chaining(provider)
            deadlocks = symbolic_deadlocks(report, provider)
    assert list(report.store.enumerate(deadlocks)) == [(1,) * 10]
    assert server.frames[NEXT_REQ] == report.total_calls


def test_init_twice(mutex, tmp_path):
    with serving(mutex, endpoints(tmp_path)["tcp"]) as server:
        with connect(endpoint_of(server)) as provider:
            assert provider.init() == provider.init() == model_info(mutex)
    assert server.frames[INIT_REQ] == 2


def test_raw_next_requests(mutex, tmp_path):
    with serving(mutex, endpoints(tmp_path)["ipc"]) as server:
        with raw_connection(server) as sock:
            answer = request(sock, NextRequest(group=0, state=[0, 1, None]))
            assert answer == NextResponse(successors=[[1, 0, 0]])
            answer = request(sock, NextRequest(group=3, state=[0, None, None]))
            assert answer.successors == []
            answer = request(sock, NextRequest(group=9, state=[0, 1, None]))
            assert isinstance(answer, ErrorMessage)
            assert "unknown group 9" in answer.message
            # the connection survives a refused request
            answer = request(sock, NextRequest(group=1, state=[0, None, 1]))
            assert answer == NextResponse(successors=[])
            answer = request(sock, NextRequest(group=2, state=[None, None, None]))
            assert answer == NextResponse(successors=[[0, 0, 0]])
            sock.sendall(encode(Terminate()))
    assert server.frames[NEXT_REQ] == 5


def test_null_at_read_position(mutex, tmp_path):
    with serving(mutex, endpoints(tmp_path)["tcp"]) as server:
        with raw_connection(server) as sock:
            answer = request(sock, NextRequest(group=0, state=[0, None, 0]))
            assert isinstance(answer, ErrorMessage)
            assert "Enter reads wait" in answer.message
            answer = request(sock, NextRequest(group=0, state=[0, 7, 0]))
            assert "outside the domain of wait" in answer.message
            answer = request(sock, NextRequest(group=-1, state=[0, 1, 0]))
            assert "unknown group -1" in answer.message


@mark.parametrize("frame", [b"garbage", json.dumps({"kind": NEXT_REQ, "protocol": 1, "group": 0, "state": [-1]})])
def test_malformed_frame_closes_connection(mutex, tmp_path, frame):
    body = frame if isinstance(frame, bytes) else frame.encode()
    with serving(mutex, endpoints(tmp_path)["ipc"]) as server:
        with raw_connection(server) as sock:
            sock.sendall(len(body).to_bytes(4, "big") + body)
            answer = read_frame(sock)
            assert isinstance(answer, ErrorMessage)
            with raises(ConnectionClosed):
                read_frame(sock)


def test_server_killed_mid_run(mutex):
    engine_side, model_side = socket.socketpair()
    model_side.sendall(encode(init_response(model_info(mutex))))
    provider = RemoteProvider(engine_side, "socketpair")
    provider.init()
    model_side.close()
    with raises(ProviderError, match="lost during NextState of Enter") as e:
        provider.next_state(0, (0, 1))
    assert (e.value.group, e.value.state) == ("Enter", (0, 1))
    provider.close()


@mark.parametrize(
    "successors, error",
    [
        ([5], "successors.0"),
        ([["01", 0, 0]], "successors.0.0"),
        ([[1, 0]], r"successor \[1, 0\]"),
        ([[1, 0, 7]], r"successor \[1, 0, 7\]"),
    ],
)
def test_bad_answer_is_a_provider_error(mutex, successors, error):
    engine_side, model_side = socket.socketpair()
    model_side.sendall(
        encode(init_response(model_info(mutex)))
        + raw_frame({"kind": NEXT_RESP, "protocol": PROTOCOL, "successors": successors})
    )
    provider = RemoteProvider(engine_side, "socketpair")
    provider.init()
    with raises(ProviderError, match=rf"bad answer to NextState of Enter at \(0, 1\): .*{error}") as e:
        provider.next_state(0, (0, 1))
    assert (e.value.group, e.value.state) == ("Enter", (0, 1))
    provider.close()
    model_side.close()


def test_next_state_before_init(mutex):
    engine_side, model_side = socket.socketpair()
    provider = RemoteProvider(engine_side, "socketpair")
    with raises(ProtocolError, match="before INIT"):
        provider.next_state(0, (0, 1))
    provider.close()
    model_side.close()


def test_server_refuses_init(mutex):
    engine_side, model_side = socket.socketpair()
    model_side.sendall(encode(ErrorMessage(message="busy")))
    provider = RemoteProvider(engine_side, "socketpair")
    with raises(ProtocolError, match="busy"):
        provider.init()
    provider.close()
    model_side.close()


def test_connect_failure(tmp_path):
    with raises(ProtocolError, match="cannot connect"):
        connect(f"ipc:{tmp_path / 'missing.sock'}", timeout=1)


def test_connect_needs_endpoint(monkeypatch):
    monkeypatch.setattr("django_reach.settings.ENDPOINT", None)
    with raises(ConfigurationError, match="REACH_ENDPOINT"):
        connect()


def test_serve_needs_endpoint(mutex, monkeypatch):
    monkeypatch.setattr("django_reach.settings.ENDPOINT", None)
    with raises(ConfigurationError, match="REACH_ENDPOINT"):
        serve(mutex)


def test_ipc_socket_removed_after_serving(mutex, tmp_path):
    path = tmp_path / "model.sock"
    with serving(mutex, f"ipc:{path}"):
        assert path.exists()
    assert not path.exists()
