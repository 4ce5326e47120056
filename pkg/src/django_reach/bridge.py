"""
Next-state protocol between the symbolic engine and a model process.

Frames are a 4 byte big-endian length followed by a UTF-8 JSON object carrying "kind" and "protocol".
The engine side always asks, the model side only answers, one request in flight at a time.
Every frame body is validated by the message model of its kind. Variable values travel as chunks, the
canonical bytes of a value index, written on the wire as that index with null where the group does not
read the variable.
"""
__author__ = "Thorin Schiffer"

import json
import logging
import os
import socket
import socketserver
import struct
from collections import Counter
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Type

from pydantic import (
    BaseModel,
    ConfigDict,
    StrictBytes,
    StrictInt,
    ValidationError,
    conint,
    field_serializer,
    field_validator,
    model_validator,
)

from django_reach import semantics, settings
from django_reach.depmatrix import build_matrices
from django_reach.engine import ModelInfo, NextStateProvider, model_info
from django_reach.exceptions import ConfigurationError, ProtocolError, ProviderError, ReachError
from django_reach.utils import positions, restrict

logger = logging.getLogger(__name__)

PROTOCOL = 1

INIT_REQ = "INIT_REQ"
INIT_RESP = "INIT_RESP"
NEXT_REQ = "NEXT_REQ"
NEXT_RESP = "NEXT_RESP"
TERM = "TERM"
ERROR = "ERROR"


class ConnectionClosed(ProtocolError):
    pass


_HEADER = struct.Struct(">I")
MAX_FRAME = 2 ** 30

Bit = conint(strict=True, ge=0, le=1)


def chunk(index: int) -> bytes:
    """
    Canonical chunk of a value index: minimal big-endian unsigned bytes, empty for 0
    """
    return index.to_bytes((index.bit_length() + 7) // 8, "big")


def chunk_value(data: bytes) -> int:
    return int.from_bytes(data, "big")


def to_chunks(vector):
    """
    Wire indices to chunks; anything that is not a non-negative integer is left for validation to reject
    """
    if not isinstance(vector, list):
        return vector
    return [chunk(v) if type(v) is int and v >= 0 else v for v in vector]


def from_chunks(vector: Sequence[Optional[bytes]]) -> List[Optional[int]]:
    return [None if c is None else chunk_value(c) for c in vector]


class Message(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    protocol: StrictInt = PROTOCOL


class InitRequest(Message):
    kind: Literal["INIT_REQ"] = INIT_REQ


class Variable(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    domain: List[str]


class InitResponse(Message):
    kind: Literal["INIT_RESP"] = INIT_RESP
    variables: List[Variable]
    groups: List[str]
    rm: List[List[Bit]]
    wm: List[List[Bit]]
    initial: List[List[StrictBytes]]

    @field_validator("initial", mode="before")
    @classmethod
    def chunk_initial(cls, states):
        return [to_chunks(s) for s in states] if isinstance(states, list) else states

    @field_serializer("initial")
    def index_initial(self, states):
        return [from_chunks(s) for s in states]

    @model_validator(mode="after")
    def check_shape(self):
        n, m = len(self.variables), len(self.groups)
        for label, matrix in (("rm", self.rm), ("wm", self.wm)):
            if len(matrix) != m or any(len(row) != n for row in matrix):
                raise ValueError(f"{label} is not {m} groups x {n} variables")
        for state in self.initial:
            if len(state) != n:
                raise ValueError(f"initial state of {len(state)} values for {n} variables")
            for variable, c in zip(self.variables, state):
                if chunk_value(c) >= len(variable.domain):
                    raise ValueError(f"initial value {chunk_value(c)} outside the domain of {variable.name}")
        return self


class NextRequest(Message):
    kind: Literal["NEXT_REQ"] = NEXT_REQ
    group: StrictInt
    state: List[Optional[StrictBytes]]

    @field_validator("state", mode="before")
    @classmethod
    def chunk_state(cls, state):
        return to_chunks(state)

    @field_serializer("state")
    def index_state(self, state):
        return from_chunks(state)


class NextResponse(Message):
    kind: Literal["NEXT_RESP"] = NEXT_RESP
    successors: List[List[StrictBytes]]

    @field_validator("successors", mode="before")
    @classmethod
    def chunk_successors(cls, successors):
        return [to_chunks(t) for t in successors] if isinstance(successors, list) else successors

    @field_serializer("successors")
    def index_successors(self, successors):
        return [from_chunks(t) for t in successors]


class Terminate(Message):
    kind: Literal["TERM"] = TERM


class ErrorMessage(Message):
    kind: Literal["ERROR"] = ERROR
    message: str


MESSAGES: Dict[str, Type[Message]] = {
    INIT_REQ: InitRequest,
    INIT_RESP: InitResponse,
    NEXT_REQ: NextRequest,
    NEXT_RESP: NextResponse,
    TERM: Terminate,
    ERROR: ErrorMessage,
}


def encode(msg: Message) -> bytes:
    body = json.dumps(msg.model_dump(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _HEADER.pack(len(body)) + body


def _describe(error: ValidationError) -> str:
    problems = []
    for detail in error.errors():
        where = ".".join(str(part) for part in detail["loc"])
        if detail["type"] == "missing":
            problems.append(f"missing {where}")
        else:
            problems.append(f"{where}: {detail['msg']}" if where else detail["msg"])
    return "; ".join(problems)


def decode(body: bytes) -> Message:
    """
    Parses and validates a frame body
    @param body: frame body without the length prefix
    @return: the message
    """
    try:
        data = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as e:
        raise ProtocolError(f"malformed frame: {e}")
    kind = data.get("kind") if isinstance(data, dict) else None
    if not isinstance(kind, str) or kind not in MESSAGES:
        raise ProtocolError(f"malformed frame: unknown kind {kind}")
    version = data.get("protocol")
    if isinstance(version, bool) or version != PROTOCOL:
        raise ProtocolError(f"protocol version {version} not supported, expected {PROTOCOL}")
    try:
        return MESSAGES[kind].model_validate(data)
    except ValidationError as e:
        raise ProtocolError(f"malformed {kind} frame: {_describe(e)}")


def _recv_exact(sock: socket.socket, size: int) -> bytes:
    data = bytearray()
    while len(data) < size:
        part = sock.recv(size - len(data))
        if not part:
            raise ConnectionClosed("connection closed by peer")
        data.extend(part)
    return bytes(data)


def read_frame(sock: socket.socket) -> Message:
    (size,) = _HEADER.unpack(_recv_exact(sock, _HEADER.size))
    if size > MAX_FRAME:
        raise ProtocolError(f"frame of {size} bytes exceeds the limit")
    return decode(_recv_exact(sock, size))


def write_frame(sock: socket.socket, msg: Message):
    sock.sendall(encode(msg))


def parse_endpoint(endpoint: str) -> Tuple[int, object]:
    """
    Translates "ipc:<path>" and "tcp:<host>:<port>" into a socket family and address
    """
    scheme, _, rest = (endpoint or "").partition(":")
    if scheme == "ipc" and rest:
        return socket.AF_UNIX, rest
    if scheme == "tcp":
        host, _, port = rest.rpartition(":")
        if host and port.isdigit():
            return socket.AF_INET, (host, int(port))
    raise ConfigurationError(f"invalid endpoint '{endpoint}', use ipc:<path> or tcp:<host>:<port>")


def init_response(info: ModelInfo) -> InitResponse:
    return InitResponse(
        variables=[Variable(name=name, domain=list(domain)) for name, domain in zip(info.variables, info.domains)],
        groups=list(info.groups),
        rm=[list(row) for row in info.rm],
        wm=[list(row) for row in info.wm],
        initial=[list(s) for s in info.initial],
    )


def info_from_response(msg: InitResponse) -> ModelInfo:
    try:
        return ModelInfo(
            variables=tuple(v.name for v in msg.variables),
            domains=tuple(tuple(v.domain) for v in msg.variables),
            groups=tuple(msg.groups),
            rm=tuple(tuple(row) for row in msg.rm),
            wm=tuple(tuple(row) for row in msg.wm),
            initial=tuple(tuple(from_chunks(s)) for s in msg.initial),
        )
    except ReachError as e:
        raise ProtocolError(f"malformed INIT_RESP: {e}")


class _ModelHandler(socketserver.BaseRequestHandler):
    def handle(self):
        server = self.server
        while True:
            try:
                msg = read_frame(self.request)
            except ConnectionClosed:
                return
            except ProtocolError as e:
                logger.warning("closing connection: %s", e)
                self._send(ErrorMessage(message=str(e)))
                return
            server.frames[msg.kind] += 1
            if isinstance(msg, Terminate):
                logger.info("TERM received, shutting down")
                server.done = True
                return
            if isinstance(msg, InitRequest):
                self._send(init_response(server.info))
            elif isinstance(msg, NextRequest):
                try:
                    successors = server.answer(msg.group, from_chunks(msg.state))
                except ReachError as e:
                    self._send(ErrorMessage(message=str(e)))
                    continue
                self._send(NextResponse(successors=successors))
            else:
                self._send(ErrorMessage(message=f"unexpected {msg.kind} frame"))
                return

    def _send(self, msg: Message):
        try:
            write_frame(self.request, msg)
        except OSError as e:
            logger.warning("cannot answer: %s", e)


class _ModelServerMixin:
    def setup_model(self, em, dm):
        self.em = em
        self.info = model_info(em, dm or build_matrices(em))
        self.frames = Counter()
        self.done = False

    def answer(self, group: int, state: List[Optional[int]]) -> List[List[int]]:
        em = self.em
        if not 0 <= group < em.M:
            raise ProtocolError(f"unknown group {group}")
        if len(state) != em.N:
            raise ProtocolError(f"state must be a list of {em.N} entries")
        reads = positions(self.info.rm[group])
        vector = []
        for j, value in enumerate(state):
            if value is None:
                if j in reads:
                    raise ProtocolError(f"{em.groups[group].name} reads {em.variables[j]}, got null")
                value = 0
            if value >= len(em.domains[j]):
                raise ProtocolError(f"value {value} outside the domain of {em.variables[j]}")
            vector.append(value)
        return [list(t) for t in sorted(semantics.successors(em, group, tuple(vector)))]


class UnixModelServer(_ModelServerMixin, socketserver.UnixStreamServer):
    def server_close(self):
        super().server_close()
        if os.path.exists(self.server_address):
            os.unlink(self.server_address)


class TCPModelServer(_ModelServerMixin, socketserver.TCPServer):
    allow_reuse_address = True


def make_server(em, endpoint: str, dm=None):
    """
    Binds a model server to the endpoint without serving yet; tcp port 0 picks a free port
    """
    family, address = parse_endpoint(endpoint)
    cls = UnixModelServer if family == socket.AF_UNIX else TCPModelServer
    if family == socket.AF_UNIX and os.path.exists(address):
        os.unlink(address)
    server = cls(address, _ModelHandler)
    server.setup_model(em, dm)
    return server


def endpoint_of(server) -> str:
    if isinstance(server, UnixModelServer):
        return f"ipc:{server.server_address}"
    host, port = server.server_address[:2]
    return f"tcp:{host}:{port}"


def run_server(server):
    """
    Answers clients one after the other until one of them sends TERM
    """
    logger.info("serving %s on %s", server.em.name, endpoint_of(server))
    with server:
        while not server.done:
            server.handle_request()
    logger.info("server stopped after %d NEXT_REQ frames", server.frames[NEXT_REQ])
    return server.frames


def serve(em, endpoint: Optional[str] = None, dm=None) -> Counter:
    """
    Exposes the machine as a next-state provider on the endpoint until TERM
    @param em: elaborated machine
    @param endpoint: ipc:<path> or tcp:<host>:<port>, defaults to REACH_ENDPOINT
    @param dm: dependency matrices, computed when omitted
    @return: received frame counts by kind
    """
    endpoint = endpoint or settings.ENDPOINT
    if not endpoint:
        raise ConfigurationError("no endpoint given and REACH_ENDPOINT is not set")
    return run_server(make_server(em, endpoint, dm))


class RemoteProvider(NextStateProvider):
    """
    Provider talking to a model server. Read independent positions are sent as null and the full length
    answers are write projected here.
    """

    def __init__(self, sock: socket.socket, endpoint: str):
        super().__init__()
        self.sock = sock
        self.endpoint = endpoint
        self.info: Optional[ModelInfo] = None
        self._reads: List[Tuple[int, ...]] = []

    def _request(self, msg: Message) -> Message:
        write_frame(self.sock, msg)
        return read_frame(self.sock)

    def init(self) -> ModelInfo:
        try:
            answer = self._request(InitRequest())
        except (OSError, ProtocolError) as e:
            raise ProtocolError(f"handshake with {self.endpoint} failed: {e}")
        if isinstance(answer, ErrorMessage):
            raise ProtocolError(f"server refused INIT_REQ: {answer.message}")
        if not isinstance(answer, InitResponse):
            raise ProtocolError(f"expected INIT_RESP, got {answer.kind}")
        self.info = info_from_response(answer)
        self._reads = [positions(row) for row in self.info.rm]
        logger.info("connected to %s: %d variables, %d groups", self.endpoint, self.info.N, self.info.M)
        return self.info

    def _next_state(self, group, src):
        if self.info is None:
            raise ProtocolError("NextState before INIT")
        state = [None] * self.info.N
        for j, value in zip(self._reads[group], src):
            state[j] = value
        name = self.info.groups[group]
        try:
            answer = self._request(NextRequest(group=group, state=state))
        except (OSError, ConnectionClosed) as e:
            raise ProviderError(
                f"connection to {self.endpoint} lost during NextState of {name} at {src}: {e}", name, src
            )
        except ProtocolError as e:
            raise ProviderError(f"bad answer to NextState of {name} at {src}: {e}", name, src)
        if isinstance(answer, ErrorMessage):
            raise ProviderError(f"server failed NextState of {name} at {src}: {answer.message}", name, src)
        if not isinstance(answer, NextResponse):
            raise ProviderError(f"expected NEXT_RESP for {name}, got {answer.kind}", name, src)
        targets = [tuple(from_chunks(t)) for t in answer.successors]
        for t in targets:
            if len(t) != self.info.N or any(v >= len(d) for v, d in zip(t, self.info.domains)):
                raise ProviderError(f"bad answer to NextState of {name} at {src}: successor {list(t)}", name, src)
        mask = self.info.wm[group]
        return sorted({restrict(t, mask) for t in targets})

    def close(self):
        try:
            write_frame(self.sock, Terminate())
        except OSError:
            pass
        self.sock.close()


def connect(endpoint: Optional[str] = None, timeout: Optional[float] = None) -> RemoteProvider:
    """
    Opens a connection to a model server
    @param endpoint: ipc:<path> or tcp:<host>:<port>, defaults to REACH_ENDPOINT
    @param timeout: connect and receive timeout in seconds, defaults to REACH_CONNECT_TIMEOUT
    @return: provider bound to the connection
    """
    endpoint = endpoint or settings.ENDPOINT
    if not endpoint:
        raise ConfigurationError("no endpoint given and REACH_ENDPOINT is not set")
    family, address = parse_endpoint(endpoint)
    sock = socket.socket(family, socket.SOCK_STREAM)
    sock.settimeout(timeout or settings.CONNECT_TIMEOUT)
    try:
        sock.connect(address)
    except OSError as e:
        sock.close()
        raise ProtocolError(f"cannot connect to {endpoint}: {e}")
    return RemoteProvider(sock, endpoint)
