"""Socket server: one simulation session per connection.

Two client framings share the listen port, sniffed from the first bytes:
HTTP requests ("GET ...") either upgrade to a WebSocket (JSON per text
message) or fetch static UI files; anything else is treated as the raw
length-prefixed TCP framing. The per-connection loop owns all session
state; a reader thread only feeds a queue, so no lock guards the session.
"""
from __future__ import annotations

import base64
import hashlib
import logging
import queue
import socket
import struct
import threading
import time
from pathlib import Path
from typing import Optional

from .protocol import FrameDecoder, ProtocolError, dumps, encode
from .replay import Recorder
from .scenario import Scenario
from .session import Session, SessionConfig
from ..world import DT

log = logging.getLogger(__name__)

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
_MIME = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
    ".map": "application/json",
}


class _Transport:
    """Read/write JSON frames over one of the two framings."""

    def __init__(self, sock: socket.socket):
        self.sock = sock

    def recv_frames(self) -> list[dict]:
        raise NotImplementedError

    def send_frame(self, frame: dict) -> None:
        raise NotImplementedError

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class _RawTransport(_Transport):
    def __init__(self, sock: socket.socket, preread: bytes = b""):
        super().__init__(sock)
        self._decoder = FrameDecoder()
        self._pending = list(self._decoder.feed(preread))

    def recv_frames(self) -> list[dict]:
        if self._pending:
            out, self._pending = self._pending, []
            return out
        data = self.sock.recv(65536)
        if not data:
            raise ConnectionError("peer closed")
        return list(self._decoder.feed(data))

    def send_frame(self, frame: dict) -> None:
        self.sock.sendall(encode(frame))


class _WsTransport(_Transport):
    """RFC 6455 server side: masked client frames in, unmasked text out."""

    def __init__(self, sock: socket.socket):
        super().__init__(sock)
        self._buf = bytearray()
        self._fragments: list[bytes] = []

    def _read_exact(self, n: int) -> bytes:
        while len(self._buf) < n:
            data = self.sock.recv(65536)
            if not data:
                raise ConnectionError("peer closed")
            self._buf.extend(data)
        out = bytes(self._buf[:n])
        del self._buf[:n]
        return out

    def _read_message(self) -> Optional[str]:
        """One complete text message, handling control frames inline."""
        while True:
            b1, b2 = self._read_exact(2)
            fin = b1 & 0x80
            opcode = b1 & 0x0F
            masked = b2 & 0x80
            length = b2 & 0x7F
            if length == 126:
                (length,) = struct.unpack(">H", self._read_exact(2))
            elif length == 127:
                (length,) = struct.unpack(">Q", self._read_exact(8))
            key = self._read_exact(4) if masked else b""
            payload = self._read_exact(length)
            if masked:
                payload = bytes(c ^ key[i % 4] for i, c in enumerate(payload))
            if opcode == 0x8:  # close
                self._send_raw(0x8, b"")
                raise ConnectionError("close frame")
            if opcode == 0x9:  # ping
                self._send_raw(0xA, payload)
                continue
            if opcode == 0xA:  # pong
                continue
            if opcode in (0x1, 0x2, 0x0):
                self._fragments.append(payload)
                if fin:
                    msg = b"".join(self._fragments)
                    self._fragments = []
                    return msg.decode("utf-8")
                continue
            raise ProtocolError("bad_ws_frame", f"opcode {opcode}")

    def recv_frames(self) -> list[dict]:
        import json

        msg = self._read_message()
        if msg is None:
            return []
        try:
            return [json.loads(msg)]
        except ValueError as exc:
            raise ProtocolError("bad_json", str(exc)) from exc

    def _send_raw(self, opcode: int, payload: bytes) -> None:
        header = bytearray([0x80 | opcode])
        n = len(payload)
        if n < 126:
            header.append(n)
        elif n < 1 << 16:
            header.append(126)
            header.extend(struct.pack(">H", n))
        else:
            header.append(127)
            header.extend(struct.pack(">Q", n))
        self.sock.sendall(bytes(header) + payload)

    def send_frame(self, frame: dict) -> None:
        self._send_raw(0x1, dumps(frame).encode("utf-8"))


def _ws_accept_key(key: str) -> str:
    digest = hashlib.sha1((key + WS_GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def _read_http_request(sock: socket.socket, preread: bytes) -> tuple[str, dict, bytes]:
    buf = bytearray(preread)
    while b"\r\n\r\n" not in buf:
        data = sock.recv(65536)
        if not data:
            raise ConnectionError("peer closed during HTTP request")
        buf.extend(data)
        if len(buf) > 64 * 1024:
            raise ProtocolError("bad_http", "request headers too large")
    head, rest = bytes(buf).split(b"\r\n\r\n", 1)
    lines = head.decode("latin-1").split("\r\n")
    request_line = lines[0]
    headers = {}
    for line in lines[1:]:
        if ":" in line:
            k, v = line.split(":", 1)
            headers[k.strip().lower()] = v.strip()
    return request_line, headers, rest


def _http_response(sock: socket.socket, status: str, body: bytes = b"",
                   content_type: str = "text/plain; charset=utf-8",
                   extra: str = "") -> None:
    head = (
        f"HTTP/1.1 {status}\r\n"
        f"Content-Type: {content_type}\r\n"
        f"Content-Length: {len(body)}\r\n"
        "Connection: close\r\n"
        f"{extra}\r\n"
    )
    sock.sendall(head.encode("latin-1") + body)


class SessionServer:
    def __init__(
        self,
        scenario: Scenario,
        policy=None,
        config: SessionConfig = SessionConfig(),
        host: str = "127.0.0.1",
        port: int = 8765,
        realtime: bool = False,
        static_dir: Optional[str | Path] = None,
        log_path: Optional[str | Path] = None,
        checkpoint: Optional[str] = None,
    ):
        self.scenario = scenario
        self.policy = policy
        self.config = config
        self.host = host
        self.port = port
        self.realtime = realtime
        self.static_dir = Path(static_dir).resolve() if static_dir else None
        self.log_path = Path(log_path) if log_path else None
        self.checkpoint = checkpoint
        self._listener: Optional[socket.socket] = None
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._conn_count = 0

    # --- lifecycle -----------------------------------------------------------

    def start(self) -> int:
        """Bind and start accepting; returns the bound port."""
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((self.host, self.port))
        self._listener.listen(8)
        self.port = self._listener.getsockname()[1]
        t = threading.Thread(target=self._accept_loop, daemon=True, name="accept")
        t.start()
        self._threads.append(t)
        log.info("listening on %s:%d", self.host, self.port)
        return self.port

    def stop(self) -> None:
        self._stop.set()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass

    def serve_forever(self) -> None:
        if self._listener is None:
            self.start()
        try:
            while not self._stop.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    # --- connection handling ---------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                sock, addr = self._listener.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._conn_count += 1
            t = threading.Thread(
                target=self._handle_conn,
                args=(sock, addr, self._conn_count),
                daemon=True,
                name=f"conn-{self._conn_count}",
            )
            t.start()
            self._threads.append(t)

    def _handle_conn(self, sock: socket.socket, addr, conn_id: int) -> None:
        try:
            first = sock.recv(4, socket.MSG_PEEK)
            if not first:
                sock.close()
                return
            if first.startswith(b"GET") or first.startswith(b"HEAD") or first.startswith(b"POST"):
                self._handle_http(sock, conn_id)
            else:
                self._run_session(_RawTransport(sock), conn_id)
        except (ConnectionError, OSError, ProtocolError) as exc:
            log.debug("conn %d closed: %s", conn_id, exc)
        finally:
            try:
                sock.close()
            except OSError:
                pass

    def _handle_http(self, sock: socket.socket, conn_id: int) -> None:
        request_line, headers, _ = _read_http_request(sock, b"")
        parts = request_line.split()
        if len(parts) < 2:
            _http_response(sock, "400 Bad Request")
            return
        method, path = parts[0], parts[1]
        if headers.get("upgrade", "").lower() == "websocket":
            key = headers.get("sec-websocket-key")
            if not key:
                _http_response(sock, "400 Bad Request", b"missing Sec-WebSocket-Key")
                return
            resp = (
                "HTTP/1.1 101 Switching Protocols\r\n"
                "Upgrade: websocket\r\n"
                "Connection: Upgrade\r\n"
                f"Sec-WebSocket-Accept: {_ws_accept_key(key)}\r\n"
                "\r\n"
            )
            sock.sendall(resp.encode("latin-1"))
            self._run_session(_WsTransport(sock), conn_id)
            return
        if method not in ("GET", "HEAD"):
            _http_response(sock, "405 Method Not Allowed")
            return
        self._serve_static(sock, path, head_only=(method == "HEAD"))

    def _serve_static(self, sock: socket.socket, path: str, head_only: bool) -> None:
        if self.static_dir is None:
            _http_response(sock, "404 Not Found", b"no static files configured")
            return
        rel = path.split("?", 1)[0].lstrip("/") or "index.html"
        target = (self.static_dir / rel).resolve()
        if not target.is_relative_to(self.static_dir) or not target.is_file():
            _http_response(sock, "404 Not Found", b"not found")
            return
        body = b"" if head_only else target.read_bytes()
        ctype = _MIME.get(target.suffix.lower(), "application/octet-stream")
        _http_response(sock, "200 OK", body, content_type=ctype)

    # --- per-connection session loop --------------------------------------------

    def _log_file(self, conn_id: int) -> Optional[Path]:
        if self.log_path is None:
            return None
        if conn_id == 1:
            return self.log_path
        return self.log_path.with_name(f"{self.log_path.stem}-{conn_id}{self.log_path.suffix}")

    def _run_session(self, transport: _Transport, conn_id: int) -> None:
        session = Session(self.scenario, policy=self.policy, config=self.config)
        inbox: queue.Queue = queue.Queue()
        dead = threading.Event()

        def reader():
            try:
                while not dead.is_set():
                    for frame in transport.recv_frames():
                        inbox.put(frame)
            except (ConnectionError, OSError, ProtocolError):
                dead.set()
                inbox.put(None)  # wake the loop

        rt = threading.Thread(target=reader, daemon=True, name=f"reader-{conn_id}")
        rt.start()

        recorder = None
        log_file = self._log_file(conn_id)
        log_fh = None
        if log_file is not None:
            log_file.parent.mkdir(parents=True, exist_ok=True)
            log_fh = open(log_file, "w")
            recorder = Recorder(log_fh, self.scenario, self.config, checkpoint=self.checkpoint)

        def emit(frames) -> None:
            if recorder is not None:
                recorder.record_out(frames)
            for f in frames:
                transport.send_frame(f)

        try:
            # greeting is connection plumbing: send it, never record it
            for f in session.hello():
                transport.send_frame(f)
            next_tick = time.monotonic()
            while not dead.is_set() and not self._stop.is_set():
                # drain inbox: acks must precede the tick that reflects them
                drained = False
                while True:
                    try:
                        timeout = None if not session.running else 0.0
                        msg = inbox.get(timeout=0.05 if timeout is None else timeout)
                    except queue.Empty:
                        break
                    if msg is None:
                        return
                    drained = True
                    if recorder is not None:
                        recorder.record_in(msg)
                    emit(session.handle_message(msg))
                if not session.running:
                    if drained:
                        next_tick = time.monotonic()
                    continue
                if self.realtime:
                    now = time.monotonic()
                    if now < next_tick:
                        time.sleep(next_tick - now)
                    next_tick += DT
                    if next_tick < time.monotonic() - 0.5:
                        next_tick = time.monotonic()  # stalled; resync, don't burst
                if recorder is not None:
                    recorder.record_tick()
                emit(session.tick())
        except (ConnectionError, OSError):
            pass
        finally:
            dead.set()
            if log_fh is not None:
                log_fh.close()
            transport.close()
