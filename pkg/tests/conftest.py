import csv
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from icdrr.corpus import load_table, parse_csv
from icdrr.llm import ChatClient, ClientConfig
from icdrr.retrieval import build_index

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"
FIXTURES = Path(__file__).resolve().parent / "fixtures"
FULL_CORPUS = DATA / "icd10cm_order.txt.gz"
FIXTURE_CORPUS = DATA / "icd10cm_fixture.csv"

TOY_CSV = b"""code,description
A00.0,"Cholera due to Vibrio cholerae 01, biovar cholerae"
J45.909,"Unspecified asthma, uncomplicated"
J45.20,"Mild intermittent asthma, uncomplicated"
"""


def load_reference_cases():
    with open(FIXTURES / "reference_cases.csv", newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="session")
def reference_rows():
    return load_reference_cases()


@pytest.fixture(scope="session")
def toy_table():
    return parse_csv(TOY_CSV)


@pytest.fixture(scope="session")
def toy_index(toy_table):
    return build_index(toy_table)


@pytest.fixture(scope="session")
def fixture_table():
    return load_table(FIXTURE_CORPUS)


@pytest.fixture(scope="session")
def fixture_index(fixture_table):
    return build_index(fixture_table)


@pytest.fixture(scope="session")
def full_table():
    return load_table(FULL_CORPUS)


@pytest.fixture(scope="session")
def full_index(full_table):
    return build_index(full_table)


class MockChat:
    """Scripted chat-completion endpoint.

    ``script`` is called with the decoded request payload and returns either
    ``(status, content)`` or just ``content`` (status 200).
    """

    def __init__(self):
        self.requests = []
        self.headers = []
        self.script = lambda payload: "T39011A"
        self._lock = threading.Lock()
        mock = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length))
                with mock._lock:
                    mock.requests.append(payload)
                    mock.headers.append(dict(self.headers))
                out = mock.script(payload)
                status, content = out if isinstance(out, tuple) else (200, out)
                body = json.dumps({"choices": [{"message": {"role": "assistant", "content": content}}]})
                if status != 200:
                    body = json.dumps({"error": "scripted failure"})
                data = body.encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/v1"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def client(self, **overrides) -> ChatClient:
        cfg = ClientConfig(base_url=self.url, api_key="test-key", backoff_base=0.01, timeout=5.0)
        for key, value in overrides.items():
            setattr(cfg, key, value)
        return ChatClient(cfg)

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def mock_chat():
    mock = MockChat()
    yield mock
    mock.close()
