"""Shared test fixtures: frozen prompt/response texts and a tiny HTTP fixture server."""
from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

# Abstract prefixes as shown in the reference prompt example (truncated with
# a literal trailing " ...").
BOSENTAN_TEXT = (
    "Impact of bosentan therapy on stress-induced pulmonary hypertension in patients "
    "with systemic sclerosis. AIM To describe hemodynamic and clinical changes in "
    "patients with elevated mean pulmonary artery pressure (MPAP) ..."
)
STEM_CELL_TEXT = (
    "The authors present the material of their study of the morphological and "
    "molecular biological features of damage to the stem cell ..."
)
HERNIA_TEXT = (
    "Endoprosthetic replacement with lifting of abdominal wall in treatment of "
    "umbilical and postoperative ventral hernias. The results of ..."
)

ANATOMY_RESPONSE = (
    "abdominal wall defect; abdomen ptosis; polypropylene prosthesis; main flap; "
    "roundish edges; additional flap; super lightweight; hypogastric area; "
    "musculoaponeurotic tissues lifting; physical health component; "
    "psychic health component; standard; original"
)

ANATOMY_PROMPT = (
    'Instruction: Return phrases or entities that comprise organs, body part, cells '
    'and cell components, body substances in TEXT, in the ANATOMY concatenated by ";"'
    "\n\n"
    f"[TEXT]: {BOSENTAN_TEXT}\n"
    "[ANATOMY]: pulmonary; artery; pulmonary artery; lung;heart; left heart; atrial; "
    "right atrial; cardiac; arterial; vascular; pulmonary arterial; pulmonary vascular\n"
    "###\n"
    f"[TEXT]: {STEM_CELL_TEXT}\n"
    "[ANATOMY]: lung biopsies; respiratory acinus; lung tissue; mesenchymal cell; "
    "myofibroblast; mesenchymal stem cell; SCN; stem cell; cell; lung;pulmonary; "
    "acinus; stem cell niches; tissue;mesenchymal; SCN areas; respiratory acini; "
    "biopsies; sections; acini; cells\n"
    "###\n"
    f"[TEXT]: {HERNIA_TEXT}\n"
    "[ANATOMY]:"
)


class JsonFixtureHandler(BaseHTTPRequestHandler):
    """Serves canned JSON responses from the server's `routes` callable."""

    def _respond(self, body: bytes, status: int = 200) -> None:
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:  # noqa: N802 (http.server API)
        self._handle("GET", None)

    def do_POST(self) -> None:  # noqa: N802
        length = int(self.headers.get("Content-Length", "0"))
        payload = json.loads(self.rfile.read(length)) if length else None
        self._handle("POST", payload)

    def _handle(self, method: str, payload) -> None:
        self.server.request_log.append((method, self.path, payload))
        result = self.server.routes(method, self.path, payload)
        if result is None:
            self._respond(b"{}", status=404)
            return
        status, body = result
        self._respond(json.dumps(body).encode("utf-8"), status=status)

    def log_message(self, *args) -> None:  # silence default stderr logging
        pass


class FixtureServer:
    """Threaded HTTP server for client tests; `routes(method, path, payload)`
    returns (status, json_body) or None for 404."""

    def __init__(self, routes) -> None:
        self.httpd = HTTPServer(("127.0.0.1", 0), JsonFixtureHandler)
        self.httpd.routes = routes
        self.httpd.request_log = []
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address
        return f"http://{host}:{port}"

    @property
    def request_log(self):
        return self.httpd.request_log

    def __enter__(self) -> "FixtureServer":
        self.thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def fixture_server():
    def start(routes) -> FixtureServer:
        server = FixtureServer(routes)
        server.thread.start()
        started.append(server)
        return server

    started: list[FixtureServer] = []
    yield start
    for server in started:
        server.httpd.shutdown()
        server.httpd.server_close()
