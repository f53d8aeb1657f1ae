"""Topic name registry and its line protocol.

Requests, one per line::

    REGISTER <topic> <host:port>    -> OK
    UNREGISTER <topic> <host:port>  -> OK
    LOOKUP <topic>                  -> OK <n> <ep1> ... <epn>
    LIST                            -> OK <n> <topic1> ... <topicn>

Anything else gets ``ERR <reason>``.
"""

from __future__ import annotations

import logging
import os
import re
import socket
import socketserver
import threading

log = logging.getLogger(__name__)

DEFAULT_REGISTRY = "127.0.0.1:11411"
REGISTRY_ENV = "STREAMLABEL_REGISTRY"

_TOPIC_RE = re.compile(r"[a-z0-9_/]+")


class InvalidTopicName(ValueError):
    pass


class RegistryUnavailable(ConnectionError):
    pass


def validate_topic(name: str) -> str:
    if (
        not isinstance(name, str)
        or not _TOPIC_RE.fullmatch(name)
        or name.startswith("/")
        or name.endswith("/")
    ):
        raise InvalidTopicName(f"invalid topic name {name!r}")
    return name


def parse_endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host or not port.isdigit() or not 0 < int(port) < 65536:
        raise ValueError(f"bad endpoint {text!r}; expected host:port")
    return host, int(port)


def registry_address() -> tuple[str, int]:
    return parse_endpoint(os.environ.get(REGISTRY_ENV, DEFAULT_REGISTRY))


class Registry:
    """Thread-safe topic -> endpoint list table."""

    def __init__(self):
        self._lock = threading.Lock()
        self._topics: dict[str, list[str]] = {}

    def register(self, topic: str, endpoint: str) -> None:
        validate_topic(topic)
        with self._lock:
            eps = self._topics.setdefault(topic, [])
            if endpoint not in eps:
                eps.append(endpoint)

    def unregister(self, topic: str, endpoint: str) -> None:
        with self._lock:
            eps = self._topics.get(topic)
            if eps and endpoint in eps:
                eps.remove(endpoint)
                if not eps:
                    del self._topics[topic]

    def lookup(self, topic: str) -> list[str]:
        with self._lock:
            return list(self._topics.get(topic, ()))

    def topics(self) -> list[str]:
        with self._lock:
            return sorted(self._topics)


def handle_line(registry: Registry, line: str) -> str:
    """Apply one protocol request; returns the reply line without newline."""
    parts = line.split()
    if not parts:
        return "ERR empty request"
    cmd, args = parts[0], parts[1:]
    try:
        if cmd in ("REGISTER", "UNREGISTER"):
            if len(args) != 2:
                return f"ERR {cmd} takes <topic> <host:port>"
            topic, endpoint = args
            validate_topic(topic)
            parse_endpoint(endpoint)
            if cmd == "REGISTER":
                registry.register(topic, endpoint)
            else:
                registry.unregister(topic, endpoint)
            return "OK"
        if cmd == "LOOKUP":
            if len(args) != 1:
                return "ERR LOOKUP takes <topic>"
            eps = registry.lookup(validate_topic(args[0]))
            return " ".join(["OK", str(len(eps)), *eps])
        if cmd == "LIST":
            if args:
                return "ERR LIST takes no arguments"
            topics = registry.topics()
            return " ".join(["OK", str(len(topics)), *topics])
    except ValueError as exc:
        return f"ERR {exc}"
    return f"ERR unknown command {cmd!r}"


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for raw in self.rfile:
            try:
                line = raw.decode("ascii").strip()
            except UnicodeDecodeError:
                reply = "ERR non-ascii request"
            else:
                reply = handle_line(self.server.registry, line)
            self.wfile.write(reply.encode("ascii") + b"\n")


class RegistryServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, host: str = "127.0.0.1", port: int = 0, registry: Registry | None = None):
        self.registry = registry or Registry()
        super().__init__((host, port), _Handler)

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> "RegistryServer":
        """Serve from a daemon thread."""
        t = threading.Thread(target=self.serve_forever, name="registry", daemon=True)
        t.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()


class RegistryClient:
    def __init__(self, address: tuple[str, int] | str | None = None, timeout: float = 2.0):
        if address is None:
            address = registry_address()
        elif isinstance(address, str):
            address = parse_endpoint(address)
        self.address = address
        self.timeout = timeout

    def request(self, line: str) -> str:
        try:
            with socket.create_connection(self.address, timeout=self.timeout) as sock:
                sock.sendall(line.encode("ascii") + b"\n")
                buf = b""
                while not buf.endswith(b"\n"):
                    chunk = sock.recv(4096)
                    if not chunk:
                        break
                    buf += chunk
        except OSError as exc:
            host, port = self.address
            raise RegistryUnavailable(f"registry {host}:{port} unreachable: {exc}") from exc
        reply = buf.decode("ascii").strip()
        if not reply.startswith("OK"):
            raise RuntimeError(f"registry replied {reply!r} to {line!r}")
        return reply

    def register(self, topic: str, endpoint: str) -> None:
        self.request(f"REGISTER {topic} {endpoint}")

    def unregister(self, topic: str, endpoint: str) -> None:
        self.request(f"UNREGISTER {topic} {endpoint}")

    def lookup(self, topic: str) -> list[str]:
        return self.request(f"LOOKUP {topic}").split()[2:]

    def topics(self) -> list[str]:
        return self.request("LIST").split()[2:]
