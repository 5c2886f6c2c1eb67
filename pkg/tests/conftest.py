"""Shared fixtures: SQuAD-format corpus builders and a stub reader server."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from viqa.corpus import DocumentStore


def squad_json(articles) -> dict:
    """articles: list of (title, [(context, [(qid, question, [(text, start)])])])."""
    data = []
    for title, paragraphs in articles:
        para_objs = []
        for context, qas in paragraphs:
            qa_objs = []
            for qid, question, answers in qas:
                qa_objs.append(
                    {
                        "id": qid,
                        "question": question,
                        "answers": [
                            {"text": text, "answer_start": start} for text, start in answers
                        ],
                    }
                )
            para_objs.append({"context": context, "qas": qa_objs})
        data.append({"title": title, "paragraphs": para_objs})
    return {"data": data}


def write_squad(path, articles) -> None:
    path.write_text(json.dumps(squad_json(articles), ensure_ascii=False), encoding="utf-8")


def keyword_passage(i: int) -> str:
    """Synthetic passage whose planted answer token is pinned by construction.

    The two unique keywords sit exactly three tokens on either side of the
    answer token, so only the answer token sees both within the baseline
    reader's +/-3 window.
    """
    return (
        f"f{i}a f{i}b f{i}c mkey{i}a g{i}a g{i}b đáp{i} "
        f"h{i}a h{i}b mkey{i}b z{i}a và"
    )


def keyword_question(i: int, shared: bool = False) -> str:
    extra = " và" if shared else ""
    return f"mkey{i}a mkey{i}b{extra} là gì?"


def keyword_articles(n_passages: int, n_questions: int, shared: bool = False):
    """One article per 10 passages; question j targets passage j."""
    articles = []
    for i in range(n_passages):
        context = keyword_passage(i)
        qas = []
        if i < n_questions:
            answer = f"đáp{i}"
            qas.append(
                (f"q{i}", keyword_question(i, shared), [(answer, context.index(answer))])
            )
        articles.append((f"art{i // 10}", i, context, qas))
    grouped: dict[str, list] = {}
    for title, _, context, qas in articles:
        grouped.setdefault(title, []).append((context, qas))
    return list(grouped.items())


@pytest.fixture
def small_store(tmp_path) -> DocumentStore:
    """Twelve keyword passages, eight test questions."""
    path = tmp_path / "fixture.json"
    write_squad(path, keyword_articles(12, 8))
    store = DocumentStore(tmp_path / "data")
    store.ingest_squad_json(path, "test")
    return store


# ------------------------------------------------------- stub reader server


@dataclass
class StubReaderState:
    requests: list = field(default_factory=list)
    behavior: object = None  # callable(body) -> (status, payload)
    delay: float = 0.0


def echo_first_token(body: dict):
    """Default behavior: answer with the first whitespace token of each passage."""
    candidates = []
    for passage in body["passages"]:
        text = passage["text"]
        token = text.split()[0] if text.split() else text
        start = text.index(token)
        candidates.append(
            {
                "passage_id": passage["id"],
                "answer": token,
                "start_char": start,
                "end_char": start + len(token),
                "score": 0.5,
            }
        )
    return 200, {"candidates": candidates}


def _make_handler(state: StubReaderState):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _send(self, status: int, payload: dict):
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path == "/health":
                self._send(200, {"status": "ok", "model": "stub"})
            else:
                self._send(404, {"error": "not found"})

        def do_POST(self):
            if self.path != "/read":
                self._send(404, {"error": "not found"})
                return
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length))
            state.requests.append(body)
            if state.delay:
                import time

                time.sleep(state.delay)
            status, payload = state.behavior(body)
            self._send(status, payload)

    return Handler


@pytest.fixture
def stub_reader():
    state = StubReaderState(behavior=echo_first_token)
    server = ThreadingHTTPServer(("127.0.0.1", 0), _make_handler(state))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}", state
    server.shutdown()
    thread.join(timeout=5)
