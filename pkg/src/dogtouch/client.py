"""Python protocol client: used by the replay/demo tools and tests."""
from __future__ import annotations

import json
import socket
import threading
from queue import Empty, Queue

from .frames import BoardFrame, TactileCanvas, disassemble_canvas, encode_frame
from .service import (
    MSG_CONTROL,
    MSG_FRAME,
    pack_json,
    pack_message,
    read_message,
)


class PipelineClient:
    """Blocking TCP client over the framed message protocol.

    A reader thread parses incoming messages into a queue; send_* calls
    write framed records directly.
    """

    def __init__(self, host: str, port: int, connect_timeout: float = 5.0):
        self._sock = socket.create_connection((host, port), timeout=connect_timeout)
        self._sock.settimeout(None)
        self._fh = self._sock.makefile("rb")
        self.inbox: Queue = Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        # the shared port sniffs HTTP vs raw protocol, so clients speak first
        self.send_control({"op": "hello"})

    def _read_loop(self):
        try:
            while True:
                msg = read_message(self._fh)
                if msg is None:
                    break
                msg_type, payload = msg
                try:
                    decoded = json.loads(payload.decode("utf-8"))
                except (UnicodeDecodeError, json.JSONDecodeError):
                    decoded = payload
                self.inbox.put((msg_type, decoded))
        except (OSError, ValueError):
            pass
        finally:
            self.inbox.put(None)  # EOF marker

    def send_board_frame(self, frame: BoardFrame):
        self._sock.sendall(pack_message(MSG_FRAME, encode_frame(frame)))

    def send_canvas(self, canvas: TactileCanvas):
        """Ship a full canvas as its 8 board frames."""
        for board in disassemble_canvas(canvas):
            self.send_board_frame(board)

    def send_control(self, obj: dict):
        self._sock.sendall(pack_json(MSG_CONTROL, obj))

    def send_raw(self, data: bytes):
        self._sock.sendall(data)

    def recv(self, timeout: float = 5.0):
        """Next (type, payload) or None on EOF; raises Empty on timeout."""
        return self.inbox.get(timeout=timeout)

    def recv_type(self, msg_type: int, timeout: float = 5.0):
        """Skip messages until one of the wanted type arrives."""
        import time

        deadline = time.monotonic() + timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise Empty(f"no message of type 0x{msg_type:02x} within {timeout}s")
            msg = self.inbox.get(timeout=remaining)
            if msg is None:
                raise ConnectionError("server closed the connection")
            if msg[0] == msg_type:
                return msg[1]

    def close(self):
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
