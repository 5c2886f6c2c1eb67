"""Live-socket integration: the viqa remote reader client drives a real
uvicorn instance of this service over HTTP.
"""

import threading
import time
from dataclasses import dataclass

import pytest
import uvicorn

from reader_service import create_app
from viqa.reader import check_reader_health, remote_read


@dataclass(frozen=True)
class SentPassage:
    id: str
    text: str


@pytest.fixture(scope="module")
def live_endpoint(service_config):
    app = create_app(service_config)
    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 30
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("server did not start")
        time.sleep(0.05)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=10)


def test_health_over_the_wire(live_endpoint):
    payload = check_reader_health(live_endpoint)
    assert payload["status"] == "ok"


def test_remote_read_round_trip(live_endpoint):
    passages = [
        SentPassage("p0", "hà nội là thủ đô của việt nam"),
        SentPassage("p1", "sông hồng chảy qua hà nội"),
        SentPassage("p2", "việt nam nằm ở đông nam á"),
    ]
    results = remote_read("thủ đô là gì?", passages, live_endpoint, max_parallel=2)
    assert [r.passage_id for r in results] == ["p0", "p1", "p2"]
    for result, passage in zip(results, passages):
        assert result.ok
        cand = result.candidate
        assert passage.text[cand.start_char : cand.end_char] == cand.answer_text
        assert 0.0 <= cand.reader_score <= 1.0
