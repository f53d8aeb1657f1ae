"""Publish/subscribe transports.

Nodes only ever name topics; they never learn who is on the other side.
Two interchangeable transports carry the same encoded bytes:

* :class:`LocalBus` fans out inside one process.
* :class:`TcpBus` gives every publisher its own listening socket, registered
  with the name registry. Subscribers look publishers up (and keep polling
  for new ones), connect, and receive length-prefixed messages.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from collections import deque

from .codec import LENGTH_PREFIX, FrameMessage, decode_message, encode_message, frame
from .registry import Registry, RegistryClient, validate_topic

log = logging.getLogger(__name__)

DEFAULT_POLL_INTERVAL = 0.5


class Subscription:
    """Bounded delivery queue; when full the oldest message is dropped."""

    def __init__(self, topic: str, queue_capacity: int = 10):
        if queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")
        self.topic = validate_topic(topic)
        self.queue_capacity = queue_capacity
        self.dropped = 0
        self.delivered = 0
        self._q: deque[bytes] = deque()
        self._cond = threading.Condition()
        self._closed = False
        self._on_close = []

    def __len__(self):
        with self._cond:
            return len(self._q)

    def _deliver(self, payload: bytes) -> None:
        with self._cond:
            if self._closed:
                return
            if len(self._q) >= self.queue_capacity:
                self._q.popleft()
                self.dropped += 1
            self._q.append(payload)
            self.delivered += 1
            self._cond.notify()

    def take_raw(self, timeout: float | None = 0) -> bytes | None:
        """Pop the oldest payload; ``None`` if nothing arrives within
        ``timeout`` seconds (``None`` waits forever)."""
        with self._cond:
            if timeout is None:
                while not self._q and not self._closed:
                    self._cond.wait()
            elif timeout > 0 and not self._q:
                deadline = time.monotonic() + timeout
                while not self._q and not self._closed:
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        break
                    self._cond.wait(remaining)
            return self._q.popleft() if self._q else None

    def take(self, timeout: float | None = 0) -> FrameMessage | None:
        """Like :meth:`take_raw` but decoded. A malformed payload is consumed
        and raises :class:`~.codec.CodecError`."""
        raw = self.take_raw(timeout)
        return None if raw is None else decode_message(raw)

    def close(self) -> None:
        with self._cond:
            if self._closed:
                return
            self._closed = True
            self._cond.notify_all()
        for fn in self._on_close:
            fn()


class Publisher:
    def __init__(self, topic: str, send, close=None, count=None):
        self.topic = topic
        self._send = send
        self._close = close
        self._count = count
        self.published = 0

    @property
    def subscriber_count(self) -> int:
        return self._count() if self._count else 0

    def wait_for_subscribers(self, n: int, timeout: float = 5.0) -> bool:
        deadline = time.monotonic() + timeout
        while self.subscriber_count < n:
            if time.monotonic() >= deadline:
                return False
            time.sleep(0.005)
        return True

    def publish(self, msg: FrameMessage) -> int:
        """Encode and deliver; returns the number of subscriptions reached."""
        return self.publish_raw(encode_message(msg))

    def publish_raw(self, payload: bytes) -> int:
        self.published += 1
        return self._send(payload)

    def close(self) -> None:
        if self._close:
            self._close()


class LocalBus:
    """In-process transport."""

    def __init__(self):
        self.registry = Registry()
        self._lock = threading.Lock()
        self._subs: dict[str, list[Subscription]] = {}
        self._pubs: dict[tuple[str, str], Publisher] = {}

    def advertise(self, node: str, topic: str) -> Publisher:
        validate_topic(topic)
        key = (node, topic)
        with self._lock:
            pub = self._pubs.get(key)
            if pub is None:
                endpoint = f"inproc:{node}"
                self.registry.register(topic, endpoint)

                def close(topic=topic, endpoint=endpoint, key=key):
                    self.registry.unregister(topic, endpoint)
                    with self._lock:
                        self._pubs.pop(key, None)

                pub = self._pubs[key] = Publisher(
                    topic,
                    lambda payload, t=topic: self._fanout(t, payload),
                    close,
                    lambda t=topic: len(self._subs.get(t, ())),
                )
            return pub

    def subscribe(self, node: str, topic: str, queue_capacity: int = 10) -> Subscription:
        sub = Subscription(topic, queue_capacity)
        with self._lock:
            self._subs.setdefault(topic, []).append(sub)
        sub._on_close.append(lambda: self._detach(sub))
        return sub

    def _detach(self, sub: Subscription) -> None:
        with self._lock:
            subs = self._subs.get(sub.topic, [])
            if sub in subs:
                subs.remove(sub)

    def _fanout(self, topic: str, payload: bytes) -> int:
        with self._lock:
            targets = list(self._subs.get(topic, ()))
        for sub in targets:
            sub._deliver(payload)
        return len(targets)

    def close(self) -> None:
        pass


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return bytes(buf)


def _recv_line(sock: socket.socket, limit: int = 512) -> bytes | None:
    buf = bytearray()
    while not buf.endswith(b"\n"):
        chunk = sock.recv(1)
        if not chunk or len(buf) > limit:
            return None
        buf += chunk
    return bytes(buf)


class _TcpPublisherEndpoint:
    """Listening socket for one (node, topic) publisher."""

    def __init__(self, topic: str, host: str):
        self.topic = topic
        self._lock = threading.Lock()
        self._conns: list[socket.socket] = []
        self._closed = False
        self.sock = socket.create_server((host, 0))
        self.endpoint = f"{host}:{self.sock.getsockname()[1]}"
        self._thread = threading.Thread(target=self._accept_loop, name=f"pub:{topic}", daemon=True)
        self._thread.start()

    def _accept_loop(self):
        while not self._closed:
            try:
                conn, _ = self.sock.accept()
            except OSError:
                return
            threading.Thread(target=self._handshake, args=(conn,), daemon=True).start()

    def _handshake(self, conn: socket.socket) -> None:
        try:
            conn.settimeout(5)
            line = _recv_line(conn)
            if line is None or line.decode("ascii", "replace").split() != ["SUB", self.topic]:
                conn.sendall(b"ERR wrong topic\n")
                conn.close()
                return
            conn.settimeout(None)
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            with self._lock:
                if self._closed:
                    conn.close()
                    return
                self._conns.append(conn)
            conn.sendall(b"OK\n")
        except OSError:
            conn.close()

    @property
    def connection_count(self) -> int:
        with self._lock:
            return len(self._conns)

    def send(self, payload: bytes) -> int:
        data = frame(payload)
        sent = 0
        with self._lock:
            for conn in list(self._conns):
                try:
                    conn.sendall(data)
                    sent += 1
                except OSError:
                    log.warning("subscriber on %s went away; dropping it", self.topic)
                    self._conns.remove(conn)
                    conn.close()
        return sent

    def close(self) -> None:
        with self._lock:
            self._closed = True
            conns, self._conns = self._conns, []
        for conn in conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            conn.close()
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class _TcpSubscriber:
    """Keeps one Subscription connected to every publisher of its topic."""

    def __init__(self, sub: Subscription, client: RegistryClient, poll_interval: float):
        self.sub = sub
        self.client = client
        self.poll_interval = poll_interval
        self._connected: dict[str, socket.socket] = {}
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self.poll()  # first lookup is synchronous so registry errors surface here
        self._thread = threading.Thread(target=self._poll_loop, name=f"sub:{sub.topic}", daemon=True)
        self._thread.start()
        sub._on_close.append(self.close)

    def poll(self) -> None:
        for ep in self.client.lookup(self.sub.topic):
            with self._lock:
                if ep in self._connected or self._stop.is_set():
                    continue
            self._connect(ep)

    def _connect(self, ep: str) -> None:
        host, _, port = ep.rpartition(":")
        try:
            conn = socket.create_connection((host, int(port)), timeout=5)
            conn.sendall(f"SUB {self.sub.topic}\n".encode("ascii"))
            if _recv_line(conn) != b"OK\n":
                conn.close()
                return
            conn.settimeout(None)
        except (OSError, ValueError) as exc:
            log.debug("could not reach publisher %s: %s", ep, exc)
            return
        with self._lock:
            self._connected[ep] = conn
        threading.Thread(target=self._reader, args=(ep, conn), daemon=True).start()

    def _reader(self, ep: str, conn: socket.socket) -> None:
        try:
            while True:
                head = _recv_exact(conn, LENGTH_PREFIX.size)
                if head is None:
                    break
                (n,) = LENGTH_PREFIX.unpack(head)
                payload = _recv_exact(conn, n)
                if payload is None:
                    break
                self.sub._deliver(payload)
        except OSError:
            pass
        finally:
            conn.close()
            with self._lock:
                if self._connected.get(ep) is conn:
                    del self._connected[ep]

    def _poll_loop(self):
        while not self._stop.wait(self.poll_interval):
            try:
                self.poll()
            except ConnectionError as exc:
                log.warning("registry poll failed: %s", exc)

    def close(self):
        self._stop.set()
        with self._lock:
            conns = list(self._connected.values())
            self._connected.clear()
        for conn in conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            conn.close()


class TcpBus:
    """Socket transport; publishers are found through the registry."""

    def __init__(self, registry=None, host: str = "127.0.0.1", poll_interval: float = DEFAULT_POLL_INTERVAL):
        self.client = registry if isinstance(registry, RegistryClient) else RegistryClient(registry)
        self.host = host
        self.poll_interval = poll_interval
        self._lock = threading.Lock()
        self._pubs: dict[tuple[str, str], tuple[Publisher, _TcpPublisherEndpoint]] = {}
        self._subs: list[Subscription] = []

    def advertise(self, node: str, topic: str) -> Publisher:
        validate_topic(topic)
        key = (node, topic)
        with self._lock:
            if key in self._pubs:
                return self._pubs[key][0]
        ep = _TcpPublisherEndpoint(topic, self.host)
        try:
            self.client.register(topic, ep.endpoint)
        except Exception:
            ep.close()
            raise

        def close():
            with self._lock:
                self._pubs.pop(key, None)
            try:
                self.client.unregister(topic, ep.endpoint)
            except ConnectionError:
                pass
            ep.close()

        pub = Publisher(topic, ep.send, close, lambda: ep.connection_count)
        with self._lock:
            self._pubs[key] = (pub, ep)
        return pub

    def subscribe(self, node: str, topic: str, queue_capacity: int = 10) -> Subscription:
        sub = Subscription(topic, queue_capacity)
        _TcpSubscriber(sub, self.client, self.poll_interval)
        with self._lock:
            self._subs.append(sub)
        return sub

    def close(self) -> None:
        with self._lock:
            pubs = [p for p, _ in self._pubs.values()]
            subs, self._subs = self._subs, []
        for pub in pubs:
            pub.close()
        for sub in subs:
            sub.close()


class Node:
    """A named participant on a bus."""

    def __init__(self, name: str, bus):
        self.name = name
        self.bus = bus

    def advertise(self, topic: str) -> Publisher:
        return self.bus.advertise(self.name, topic)

    def subscribe(self, topic: str, queue_capacity: int = 10) -> Subscription:
        return self.bus.subscribe(self.name, topic, queue_capacity)
