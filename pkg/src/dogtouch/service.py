"""Bidirectional streaming service around the pipeline.

Clients connect over TCP (length-prefixed records) or WebSocket (one
record per binary message, identical bytes minus the length prefix) and
exchange typed messages: they upload encoded board frames and control
requests; the server broadcasts gesture/action/rejection/state messages
to every client. Ingest never blocks on inference: a bounded queue
drops the oldest canvases under pressure, and slow clients are
disconnected rather than stalling the loop. Message layout is
documented in docs/protocol.md.
"""
from __future__ import annotations

import base64
import hashlib
import itertools
import json
import logging
import socket
import struct
import threading
import time
from dataclasses import dataclass
from http import HTTPStatus
from pathlib import Path
from queue import Empty, Full, Queue

from .action_engine import ActionTable
from .frames import (
    BOARD_COUNT,
    FrameCodecError,
    TactileCanvas,
    assemble_canvas,
    decode_frame,
)
from .pipeline import Pipeline, SegmentationConfig
from .taxonomy import Taxonomy

MSG_FRAME = 0x01
MSG_CONTROL = 0x02
MSG_GESTURE = 0x10
MSG_ACTION = 0x11
MSG_REJECTION = 0x12
MSG_STATE = 0x13
MSG_TAXONOMY = 0x14
MSG_ERROR = 0x1F

_RECORD_TO_MSG = {"gesture": MSG_GESTURE, "action": MSG_ACTION, "rejection": MSG_REJECTION}

logger = logging.getLogger("dogtouch.service")

PROTOCOL_VERSION = 1
MAX_MESSAGE_SIZE = 1 << 20
_LEN = struct.Struct("<I")


def pack_message(msg_type: int, payload: bytes) -> bytes:
    """TCP framing: u32 length prefix over (type byte + payload)."""
    return _LEN.pack(1 + len(payload)) + bytes([msg_type]) + payload


def pack_json(msg_type: int, obj: dict) -> bytes:
    # canonical compact form, byte-identical to JSON.stringify on sorted keys
    return pack_message(
        msg_type, json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    )


def read_message(sock_file) -> tuple[int, bytes] | None:
    """Read one framed message from a blocking file-like socket wrapper."""
    head = sock_file.read(_LEN.size)
    if len(head) < _LEN.size:
        return None
    (size,) = _LEN.unpack(head)
    if size < 1 or size > MAX_MESSAGE_SIZE:
        raise FrameCodecError(f"message size {size} outside (0, {MAX_MESSAGE_SIZE}]")
    body = sock_file.read(size)
    if len(body) < size:
        return None
    return body[0], body[1:]


class FrameAssembler:
    """Collects per-tick board frames until all 8 arrive.

    Ticks are dropped once more than `horizon` newer ticks exist, so a
    client that never completes a tick cannot leak memory.
    """

    def __init__(self, horizon: int = 16):
        self.horizon = horizon
        self._pending: dict[int, dict[int, object]] = {}

    def add(self, frame) -> TactileCanvas | None:
        boards = self._pending.setdefault(frame.tick, {})
        boards[frame.board_id] = frame
        if len(boards) == BOARD_COUNT:
            del self._pending[frame.tick]
            return assemble_canvas(boards.values())
        newest = max(self._pending)
        stale = [t for t in self._pending if t < newest - self.horizon]
        for t in stale:
            del self._pending[t]
        return None


@dataclass
class ServiceStats:
    frames_in: int = 0
    canvases: int = 0
    dropped_canvases: int = 0
    bad_messages: int = 0
    disconnected_slow: int = 0


class _Client:
    _ids = itertools.count(1)  # next() is atomic under the GIL

    def __init__(self, transport, outbox_size: int = 256):
        self.id = next(_Client._ids)
        self.transport = transport  # object with send_bytes(record_bytes) and close()
        self.outbox: Queue = Queue(maxsize=outbox_size)
        self.alive = True

    def enqueue(self, record: bytes) -> bool:
        try:
            self.outbox.put_nowait(record)
            return True
        except Full:
            return False


class PipelineServer:
    """Threaded server: socket ingest, single inference thread, fan-out."""

    def __init__(self, pipeline: Pipeline, host: str = "127.0.0.1", port: int = 0,
                 ingest_capacity: int = 64, ui_dir: str | None = None,
                 state_every: int = 1, outbox_size: int = 256):
        self.pipeline = pipeline
        self.stats = ServiceStats()
        self.outbox_size = outbox_size
        self._ingest: Queue = Queue(maxsize=ingest_capacity)
        self._clients: dict[int, _Client] = {}
        self._clients_lock = threading.Lock()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self.state_every = max(1, state_every)
        self._listener = socket.create_server((host, port))
        self.host, self.port = self._listener.getsockname()[:2]

    # -- lifecycle -------------------------------------------------------------

    def start(self):
        self._spawn(self._accept_loop, "accept")
        self._spawn(self._inference_loop, "inference")
        return self

    def _spawn(self, fn, name):
        t = threading.Thread(target=fn, name=f"dogtouch-{name}", daemon=True)
        t.start()
        self._threads.append(t)

    def close(self):
        self._stop.set()
        try:
            self._listener.close()
        except OSError:
            pass
        with self._clients_lock:
            clients = list(self._clients.values())
        for c in clients:
            self._drop_client(c)
        for t in self._threads:
            t.join(timeout=2.0)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- ingest ------------------------------------------------------------------

    def submit_canvas(self, canvas: TactileCanvas):
        """Queue a canvas for inference, dropping the oldest under pressure."""
        while True:
            try:
                self._ingest.put_nowait(canvas)
                return
            except Full:
                try:
                    self._ingest.get_nowait()
                    self.stats.dropped_canvases += 1
                    self.pipeline.log.dropped_frames += 1
                    if self.stats.dropped_canvases % 100 == 1:
                        logger.warning("ingest backpressure: %d canvases dropped",
                                       self.stats.dropped_canvases)
                except Empty:
                    pass

    def _accept_loop(self):
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            conn.settimeout(30.0)
            self._spawn(lambda c=conn: self._serve_connection(c), "client")

    def _serve_connection(self, conn: socket.socket):
        """Sniff the first bytes: HTTP (UI assets / WebSocket upgrade) or
        the raw framed protocol."""
        try:
            conn.settimeout(5.0)
            first = b""
            for _ in range(20):
                first = conn.recv(4, socket.MSG_PEEK)
                if len(first) >= 3 or not first:
                    break
                time.sleep(0.01)
        except OSError:
            conn.close()
            return
        if first[:3] in (b"GET", b"POS", b"HEA"):
            self._serve_http(conn)
        else:
            self._serve_tcp_client(conn)

    # -- raw TCP protocol ----------------------------------------------------------

    def _serve_tcp_client(self, conn: socket.socket):
        conn.settimeout(None)
        fh = conn.makefile("rb")

        class TcpTransport:
            @staticmethod
            def send_bytes(record: bytes):
                conn.sendall(record)

            @staticmethod
            def close():
                try:
                    conn.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
                conn.close()

        client = _Client(TcpTransport(), outbox_size=self.outbox_size)
        self._register(client)
        try:
            while not self._stop.is_set():
                try:
                    msg = read_message(fh)
                except (FrameCodecError, OSError):
                    break
                if msg is None:
                    break
                self._handle_message(client, *msg)
        finally:
            self._drop_client(client)

    def _register(self, client: _Client):
        with self._clients_lock:
            self._clients[client.id] = client
        self._spawn(lambda: self._writer_loop(client), f"writer-{client.id}")
        client.enqueue(pack_json(MSG_TAXONOMY, self._taxonomy_message()))

    def _drop_client(self, client: _Client):
        with self._clients_lock:
            self._clients.pop(client.id, None)
        if client.alive:
            client.alive = False
            client.transport.close()

    def _writer_loop(self, client: _Client):
        while client.alive and not self._stop.is_set():
            try:
                record = client.outbox.get(timeout=0.2)
            except Empty:
                continue
            try:
                client.transport.send_bytes(record)
            except OSError:
                self._drop_client(client)
                return

    def _taxonomy_message(self) -> dict:
        tax = self.pipeline.taxonomy
        return {
            "protocol_version": PROTOCOL_VERSION,
            "schema_version": tax.schema_version,
            "parts": tax.part_geometry(),
            "gesture_kinds": [k.name for k in tax.kinds],
            "geometry_checksum": tax.geometry_checksum(),
            "postures": ["standing", "sitting", "lying", "crouching"],
        }

    def _handle_message(self, client: _Client, msg_type: int, payload: bytes):
        if msg_type == MSG_FRAME:
            try:
                frame = decode_frame(payload)
            except FrameCodecError as err:
                # corrupt frame: report, drop it, keep the stream alive
                self.stats.bad_messages += 1
                logger.warning("client %d sent a corrupt frame: %s", client.id, err)
                client.enqueue(pack_json(MSG_ERROR, {
                    "reason": "bad_frame", "detail": str(err),
                }))
                return
            self.stats.frames_in += 1
            canvas = self._assembler_for(client).add(frame)
            if canvas is not None:
                self.submit_canvas(canvas)
        elif msg_type == MSG_CONTROL:
            try:
                request = json.loads(payload.decode("utf-8"))
                op = request["op"]
            except (UnicodeDecodeError, json.JSONDecodeError, KeyError):
                self.stats.bad_messages += 1
                client.enqueue(pack_json(MSG_ERROR, {"reason": "bad_control"}))
                return
            if op == "hello":
                pass  # greeting already queued at registration
            elif op == "state":
                client.enqueue(pack_json(MSG_STATE, self.pipeline.state_snapshot()))
            elif op == "taxonomy":
                client.enqueue(pack_json(MSG_TAXONOMY, self._taxonomy_message()))
            elif op == "ping":
                client.enqueue(pack_json(MSG_STATE, self.pipeline.state_snapshot()))
            else:
                client.enqueue(pack_json(MSG_ERROR, {"reason": "unknown_op", "op": op}))
        else:
            self.stats.bad_messages += 1
            client.enqueue(pack_json(MSG_ERROR, {
                "reason": "unknown_type", "type": msg_type,
            }))

    def _assembler_for(self, client: _Client) -> FrameAssembler:
        if not hasattr(client, "assembler"):
            client.assembler = FrameAssembler()
        return client.assembler

    # -- inference + broadcast --------------------------------------------------------

    def _inference_loop(self):
        while not self._stop.is_set():
            try:
                canvas = self._ingest.get(timeout=0.2)
            except Empty:
                continue
            records = self.pipeline.feed(canvas)
            self.stats.canvases += 1
            for record in records:
                if record.kind == "frame":
                    continue
                self._broadcast(pack_json(_RECORD_TO_MSG[record.kind], record.payload))
            if self.stats.canvases % self.state_every == 0:
                self._broadcast(pack_json(MSG_STATE, self.pipeline.state_snapshot()))

    def _broadcast(self, record: bytes):
        with self._clients_lock:
            clients = list(self._clients.values())
        for client in clients:
            if not client.enqueue(record):
                # bounded outbox overflowed: the client is too slow to live
                self.stats.disconnected_slow += 1
                logger.warning("disconnecting slow client %d", client.id)
                self._drop_client(client)

    # -- HTTP / WebSocket ---------------------------------------------------------------

    def _serve_http(self, conn: socket.socket):
        fh = conn.makefile("rb")
        line = fh.readline(2048).decode("latin-1").strip()
        headers = {}
        while True:
            raw = fh.readline(2048)
            if raw in (b"\r\n", b"\n", b""):
                break
            if b":" in raw:
                k, v = raw.decode("latin-1").split(":", 1)
                headers[k.strip().lower()] = v.strip()
        parts = line.split()
        if len(parts) != 3 or parts[0] != "GET":
            self._http_simple(conn, HTTPStatus.BAD_REQUEST, b"bad request")
            conn.close()
            return
        path = parts[1].split("?", 1)[0]
        if path == "/ws" and headers.get("upgrade", "").lower() == "websocket":
            self._serve_websocket(conn, fh, headers)
            return
        self._serve_static(conn, path)
        conn.close()

    def _http_simple(self, conn, status: HTTPStatus, body: bytes,
                     content_type: str = "text/plain"):
        head = (
            f"HTTP/1.1 {status.value} {status.phrase}\r\n"
            f"Content-Type: {content_type}\r\nContent-Length: {len(body)}\r\n"
            "Connection: close\r\n\r\n"
        )
        try:
            conn.sendall(head.encode("latin-1") + body)
        except OSError:
            pass

    _MIME = {".html": "text/html", ".js": "text/javascript", ".css": "text/css",
             ".map": "application/json", ".json": "application/json",
             ".svg": "image/svg+xml", ".png": "image/png"}

    def _serve_static(self, conn, path: str):
        if self.ui_dir is None:
            self._http_simple(conn, HTTPStatus.NOT_FOUND, b"no ui assets configured")
            return
        rel = path.lstrip("/") or "index.html"
        target = (self.ui_dir / rel).resolve()
        if not str(target).startswith(str(self.ui_dir.resolve())) or not target.is_file():
            self._http_simple(conn, HTTPStatus.NOT_FOUND, b"not found")
            return
        mime = self._MIME.get(target.suffix, "application/octet-stream")
        self._http_simple(conn, HTTPStatus.OK, target.read_bytes(), mime)

    _WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

    def _serve_websocket(self, conn: socket.socket, fh, headers: dict):
        key = headers.get("sec-websocket-key")
        if not key:
            self._http_simple(conn, HTTPStatus.BAD_REQUEST, b"missing websocket key")
            conn.close()
            return
        accept = base64.b64encode(
            hashlib.sha1((key + self._WS_GUID).encode("latin-1")).digest()
        ).decode("latin-1")
        conn.sendall(
            ("HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\n"
             f"Connection: Upgrade\r\nSec-WebSocket-Accept: {accept}\r\n\r\n").encode("latin-1")
        )
        conn.settimeout(None)
        send_lock = threading.Lock()

        class WsTransport:
            @staticmethod
            def send_bytes(record: bytes):
                # one protocol record per binary WS frame, length prefix included
                with send_lock:
                    conn.sendall(_ws_encode_frame(record))

            @staticmethod
            def close():
                try:
                    with send_lock:
                        conn.sendall(_ws_encode_frame(b"", opcode=0x8))
                    conn.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
                conn.close()

        client = _Client(WsTransport(), outbox_size=self.outbox_size)
        self._register(client)
        try:
            while not self._stop.is_set():
                frame = _ws_read_frame(fh)
                if frame is None:
                    break
                opcode, data = frame
                if opcode == 0x8:  # close
                    break
                if opcode == 0x9:  # ping -> pong
                    with send_lock:
                        conn.sendall(_ws_encode_frame(data, opcode=0xA))
                    continue
                if opcode not in (0x1, 0x2):
                    continue
                try:
                    msg = read_message(_Buffer(data))
                except FrameCodecError:
                    msg = None
                if msg is None:
                    self.stats.bad_messages += 1
                    client.enqueue(pack_json(MSG_ERROR, {"reason": "bad_framing"}))
                    continue
                self._handle_message(client, *msg)
        except OSError:
            pass
        finally:
            self._drop_client(client)


class _Buffer:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def read(self, n: int) -> bytes:
        out = self._data[self._pos : self._pos + n]
        self._pos += len(out)
        return out


def _ws_encode_frame(payload: bytes, opcode: int = 0x2) -> bytes:
    head = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head += bytes([n])
    elif n < (1 << 16):
        head += bytes([126]) + struct.pack(">H", n)
    else:
        head += bytes([127]) + struct.pack(">Q", n)
    return head + payload


def _ws_read_frame(fh) -> tuple[int, bytes] | None:
    head = fh.read(2)
    if len(head) < 2:
        return None
    opcode = head[0] & 0x0F
    masked = bool(head[1] & 0x80)
    length = head[1] & 0x7F
    if length == 126:
        ext = fh.read(2)
        if len(ext) < 2:
            return None
        (length,) = struct.unpack(">H", ext)
    elif length == 127:
        ext = fh.read(8)
        if len(ext) < 8:
            return None
        (length,) = struct.unpack(">Q", ext)
    if length > MAX_MESSAGE_SIZE:
        return None
    mask = fh.read(4) if masked else b""
    data = fh.read(length)
    if len(data) < length:
        return None
    if masked:
        data = bytes(b ^ mask[i % 4] for i, b in enumerate(data))
    return opcode, data


def serve(classifier, translator, taxonomy: Taxonomy, action_table: ActionTable,
          host: str = "127.0.0.1", port: int = 0,
          segmentation: SegmentationConfig | None = None,
          ui_dir: str | None = None, record_frames: bool = True) -> PipelineServer:
    """Build a pipeline and start serving it; returns the running server."""
    pipeline = Pipeline(classifier, translator, taxonomy, action_table,
                        segmentation=segmentation, record_frames=record_frames)
    return PipelineServer(pipeline, host=host, port=port, ui_dir=ui_dir).start()
