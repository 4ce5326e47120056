import socket
import threading
from contextlib import contextmanager
from pathlib import Path

from pytest import fixture

from django_reach.bridge import Terminate, encode, endpoint_of, make_server, parse_endpoint, run_server
from django_reach.elaborate import elaborate
from django_reach.parser import parse_file, parse_machine

MODELS = Path(__file__).resolve().parent.parent / "models"


def load(name, **constants):
    return elaborate(parse_file(MODELS / name), constants)


def machine(source, **constants):
    return elaborate(parse_machine(source), constants)


@contextmanager
def raw_connection(server):
    family, address = parse_endpoint(endpoint_of(server))
    sock = socket.socket(family, socket.SOCK_STREAM)
    sock.settimeout(5)
    sock.connect(address)
    try:
        yield sock
    finally:
        sock.close()


@contextmanager
def serving(em, endpoint):
    """
    Runs a model server on a background thread for the duration of the block
    """
    server = make_server(em, endpoint)
    thread = threading.Thread(target=run_server, args=(server,), daemon=True)
    thread.start()
    try:
        yield server
    finally:
        if thread.is_alive() and not server.done:
            try:
                with raw_connection(server) as sock:
                    sock.sendall(encode(Terminate()))
            except OSError:
                pass
        thread.join(timeout=10)


@fixture
def models_dir():
    return MODELS


@fixture
def mutex_path():
    return str(MODELS / "mutex.blite")


@fixture
def mutex():
    return load("mutex.blite", MAXINT=1)


@fixture
def philosophers():
    return load("philosophers5.blite")


@fixture
def counters():
    return load("counters3.blite")


@fixture(params=["mutex.blite", "philosophers5.blite", "counters3.blite"])
def corpus(request):
    return load(request.param)
