"""Remote repository protocol: the data mover API over a TCP socket.

Request:  [1-byte opcode][2-byte name length][name][opcode-specific body]
  opcode 1 = push   body: [4-byte reserved zero][8-byte content length][content]
  opcode 2 = pull   body: [4-byte version, 0 = latest]
  opcode 3 = latest body: empty
Response: [1-byte status][body]
  status 0 = ok, 1 = unknown-file, 2 = unknown-version, 3 = corrupt,
  4 = malformed
  push/latest ok body: 68-byte FileVersion record
  pull ok body: [8-byte content length][content]
All integers big-endian.
"""

from __future__ import annotations

import socket
import socketserver
import struct
import threading

from .data_mover import (
    ChecksumMismatchError,
    DataMoverError,
    FileRepository,
    FileVersion,
    UnknownFileError,
    UnknownVersionError,
    VERSION_RECORD,
)

OP_PUSH = 1
OP_PULL = 2
OP_LATEST = 3

STATUS_OK = 0
STATUS_UNKNOWN_FILE = 1
STATUS_UNKNOWN_VERSION = 2
STATUS_CORRUPT = 3
STATUS_MALFORMED = 4

STATUS_NAMES = {
    STATUS_OK: "ok",
    STATUS_UNKNOWN_FILE: "unknown-file",
    STATUS_UNKNOWN_VERSION: "unknown-version",
    STATUS_CORRUPT: "corrupt",
    STATUS_MALFORMED: "malformed",
}

MAX_NAME_BYTES = 255
MAX_CONTENT_BYTES = 1 << 32  # hard server-side sanity cap


class RemoteProtocolError(DataMoverError):
    def __init__(self, status: int, message: str = ""):
        self.status = status
        label = STATUS_NAMES.get(status, str(status))
        super().__init__(message or f"remote repository error: {label}")


def _recv_exact(sock_file, n: int) -> bytes:
    data = sock_file.read(n)
    if data is None or len(data) != n:
        raise ConnectionError("connection closed mid-message")
    return data


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        repo: FileRepository = self.server.repo  # type: ignore[attr-defined]
        while True:
            head = self.rfile.read(3)
            if not head:
                return  # clean close between requests
            if len(head) != 3:
                self._respond(STATUS_MALFORMED, b"")
                return
            opcode = head[0]
            (name_len,) = struct.unpack(">H", head[1:3])
            if name_len == 0 or name_len > MAX_NAME_BYTES:
                self._respond(STATUS_MALFORMED, b"")
                return
            try:
                name = _recv_exact(self.rfile, name_len).decode("utf-8")
            except (ConnectionError, UnicodeDecodeError):
                self._respond(STATUS_MALFORMED, b"")
                return
            try:
                if opcode == OP_PUSH:
                    self._handle_push(repo, name)
                elif opcode == OP_PULL:
                    self._handle_pull(repo, name)
                elif opcode == OP_LATEST:
                    self._handle_latest(repo, name)
                else:
                    self._respond(STATUS_MALFORMED, b"")
                    return
            except ConnectionError:
                return
            except UnknownFileError:
                self._respond(STATUS_UNKNOWN_FILE, b"")
            except UnknownVersionError:
                self._respond(STATUS_UNKNOWN_VERSION, b"")
            except ChecksumMismatchError:
                self._respond(STATUS_CORRUPT, b"")
            except (DataMoverError, ValueError):
                self._respond(STATUS_MALFORMED, b"")

    def _handle_push(self, repo: FileRepository, name: str) -> None:
        header = _recv_exact(self.rfile, 12)
        reserved, length = struct.unpack(">IQ", header)
        if reserved != 0 or length > MAX_CONTENT_BYTES:
            self._respond(STATUS_MALFORMED, b"")
            raise ConnectionError("malformed push")
        content = _recv_exact(self.rfile, length)
        record = repo.push_file(name, content)
        self._respond(STATUS_OK, record.encode())

    def _handle_pull(self, repo: FileRepository, name: str) -> None:
        (version,) = struct.unpack(">I", _recv_exact(self.rfile, 4))
        content = repo.pull_file(name, version or None)
        self._respond(STATUS_OK, struct.pack(">Q", len(content)) + content)

    def _handle_latest(self, repo: FileRepository, name: str) -> None:
        record = repo.latest_version(name)
        self._respond(STATUS_OK, record.encode())

    def _respond(self, status: int, body: bytes) -> None:
        try:
            self.wfile.write(bytes([status]) + body)
            self.wfile.flush()
        except OSError:
            pass


class RepositoryServer:
    """Serves one FileRepository to remote pushers/pullers."""

    def __init__(self, repo: FileRepository, host: str = "127.0.0.1", port: int = 0):
        self.repo = repo
        self._server = socketserver.ThreadingTCPServer((host, port), _Handler)
        self._server.daemon_threads = True
        self._server.allow_reuse_address = True
        self._server.repo = repo  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join()


class RemoteRepository:
    """Client-side FileRepository API over the wire protocol."""

    def __init__(self, host: str, port: int, timeout_s: float = 30.0):
        self.host = host
        self.port = port
        self.timeout_s = timeout_s
        self._sock: socket.socket | None = None
        self._file = None
        self._lock = threading.Lock()

    def _connect(self):
        if self._sock is None:
            self._sock = socket.create_connection(
                (self.host, self.port), timeout=self.timeout_s
            )
            self._file = self._sock.makefile("rwb")
        return self._file

    def _request(self, opcode: int, name: str, body: bytes) -> bytes:
        encoded = name.encode("utf-8")
        if not encoded or len(encoded) > MAX_NAME_BYTES:
            raise ValueError(f"invalid file name {name!r}")
        message = bytes([opcode]) + struct.pack(">H", len(encoded)) + encoded + body
        with self._lock:
            f = self._connect()
            f.write(message)
            f.flush()
            status = _recv_exact(f, 1)[0]
            if status != STATUS_OK:
                raise RemoteProtocolError(status)
            return self._read_ok_body(opcode, f)

    @staticmethod
    def _read_ok_body(opcode: int, f) -> bytes:
        if opcode in (OP_PUSH, OP_LATEST):
            return _recv_exact(f, VERSION_RECORD.size)
        (length,) = struct.unpack(">Q", _recv_exact(f, 8))
        return _recv_exact(f, length)

    def push_file(self, name: str, content: bytes) -> FileVersion:
        body = struct.pack(">IQ", 0, len(content)) + content
        return FileVersion.decode(name, self._request(OP_PUSH, name, body))

    def pull_file(self, name: str, version: int | None = None) -> bytes:
        return self._request(OP_PULL, name, struct.pack(">I", version or 0))

    def latest_version(self, name: str) -> FileVersion:
        return FileVersion.decode(name, self._request(OP_LATEST, name, b""))

    def distribute_software(self, package_name: str, content: bytes) -> FileVersion:
        return self.push_file("sw/" + package_name, content)

    def close(self) -> None:
        with self._lock:
            if self._sock is not None:
                try:
                    self._file.close()
                    self._sock.close()
                finally:
                    self._sock = None
                    self._file = None

    def __enter__(self) -> "RemoteRepository":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
