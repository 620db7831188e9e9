import json
import os
import socket
import socketserver
import threading

import numpy as np
import pytest

from nswatermark.corpus import make_prompts, synthetic_corpus
from nswatermark.lm import train_ngram

ACCEPTANCE: dict[str, tuple[bool, str]] = {}

TOY_KEY = 0xDEADBEEF
JOBS = max(1, min(8, os.cpu_count() or 1))


@pytest.fixture(scope="session")
def toy_corpus():
    return synthetic_corpus()


@pytest.fixture(scope="session")
def toy_model(toy_corpus):
    return train_ngram(toy_corpus, order=2, smoothing_alpha=0.001)


@pytest.fixture(scope="session")
def toy_prompts(toy_corpus, toy_model):
    return [toy_model.vocabulary.encode(p) for p in make_prompts(toy_corpus, 500, seed=1)]


class DenseBigram:
    """Bigram provider from an explicit ``V x V`` log-probability table."""

    context_size = 1

    def __init__(self, table):
        self.table = np.asarray(table, dtype=np.float64)
        self.vocab_size = self.table.shape[0]

    def logits(self, prompt, prefix):
        seq = list(prompt) + list(prefix)
        return self.table[seq[-1]]


def random_bigram(rng, V, concentration=1.0):
    p = rng.dirichlet(np.full(V, concentration), size=V)
    return DenseBigram(np.log(p))


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for raw in self.rfile:
            req = json.loads(raw)
            reply = self.server.respond(req)
            self.wfile.write((reply if isinstance(reply, str) else json.dumps(reply)).encode() + b"\n")


class LogitServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, model):
        super().__init__(("127.0.0.1", 0), _Handler)
        self.model = model
        self.override = None
        self.requests = 0

    def respond(self, req):
        self.requests += 1
        if self.override is not None:
            return self.override
        return {"logits": self.model.logits(req["prompt"], req["prefix"]).tolist()}

    @property
    def endpoint(self):
        host, port = self.server_address
        return f"{host}:{port}"


@pytest.fixture
def logit_server(toy_model):
    server = LogitServer(toy_model)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    server.server_close()


@pytest.fixture
def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture
def acceptance():
    def record(name, ok, detail=""):
        ACCEPTANCE[name] = (bool(ok), detail)
        print(f"{name}: {'PASS' if ok else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda n: int(n.split()[1].rstrip(":"))):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'}  {detail}")
