"""Durable append-only log, partitioned by topic.

Each topic is a directory holding two files:

  data   -- 8-byte header, then raw payload bytes back to back
  index  -- 8-byte header, then one fixed 24-byte record per entry:
            offset u64, length u32, crc32 u32, append_time i64 (ms)

Both headers are a 4-byte magic plus a u32 format version. Sequence
numbers are implicit: record k of the index file is seqno k (1-based),
which gives O(1) seek by seqno and makes gaps structurally impossible.

An append is acknowledged only after the data bytes and the index record
have both been flushed; the index record goes last, so a crash can leave
orphan data bytes but never an index record pointing past the data file.
Recovery truncates a torn trailing index record and drops any record
whose extent exceeds the data file.
"""

from __future__ import annotations

import os
import struct
import threading
import zlib
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import quote, unquote

from .clock import WallClock

MAGIC = b"RBFL"
FORMAT_VERSION = 1
HEADER = MAGIC + struct.pack(">I", FORMAT_VERSION)
HEADER_SIZE = len(HEADER)

INDEX_RECORD = struct.Struct(">QIIq")  # offset, length, crc32, append_time_ms

DEFAULT_MAX_BLOCK_SIZE = 64 * 1024


class LogError(Exception):
    pass


class UnknownTopicError(LogError):
    pass


class NotFoundError(LogError):
    pass


class InvalidRangeError(LogError):
    pass


class PayloadTooLargeError(LogError):
    pass


class StorageError(LogError):
    pass


def validate_topic_name(name: str) -> str:
    """Topic names are non-empty, at most 255 bytes of UTF-8, and may use
    '/' only as a logical namespace separator (no empty, '.' or '..'
    segments, no backslash, no NUL)."""
    if not name:
        raise ValueError("topic name must be non-empty")
    if len(name.encode("utf-8")) > 255:
        raise ValueError("topic name exceeds 255 bytes")
    if "\\" in name or "\x00" in name:
        raise ValueError("topic name contains forbidden characters")
    for segment in name.split("/"):
        if segment in ("", ".", ".."):
            raise ValueError(f"invalid topic name segment in {name!r}")
    return name


@dataclass(frozen=True)
class LogEntry:
    topic: str
    seqno: int
    payload: bytes
    append_time_ms: int


class _Topic:
    def __init__(self, directory: Path):
        self.directory = directory
        self.lock = threading.Lock()
        self.data_path = directory / "data"
        self.index_path = directory / "index"
        self._open_and_recover()

    def _open_and_recover(self) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        fresh = not self.index_path.exists()
        if fresh:
            self.data_path.write_bytes(HEADER)
            self.index_path.write_bytes(HEADER)

        self._check_header(self.index_path)
        self._check_header(self.data_path)

        index_size = self.index_path.stat().st_size
        data_size = self.data_path.stat().st_size

        # Drop a torn trailing index record, then drop records that point
        # past the end of the data file (data flushed but index not, or a
        # partial data write).
        body = index_size - HEADER_SIZE
        count = body // INDEX_RECORD.size
        if body % INDEX_RECORD.size:
            index_size = HEADER_SIZE + count * INDEX_RECORD.size

        if count:
            with open(self.index_path, "rb") as f:
                f.seek(HEADER_SIZE)
                records = f.read(count * INDEX_RECORD.size)
            while count:
                offset, length, _, _ = INDEX_RECORD.unpack_from(
                    records, (count - 1) * INDEX_RECORD.size
                )
                if offset + length <= data_size:
                    break
                count -= 1
            index_size = HEADER_SIZE + count * INDEX_RECORD.size

        if index_size != self.index_path.stat().st_size:
            with open(self.index_path, "r+b") as f:
                f.truncate(index_size)

        # Trim orphan data bytes so the next append starts right after the
        # last committed record.
        if count:
            offset, length, _, _ = INDEX_RECORD.unpack_from(
                records, (count - 1) * INDEX_RECORD.size
            )
            data_end = offset + length
        else:
            data_end = HEADER_SIZE
        if data_end != data_size:
            with open(self.data_path, "r+b") as f:
                f.truncate(data_end)

        self.latest_seqno = count
        self.data_end = data_end
        self._data_file = open(self.data_path, "r+b")
        self._index_file = open(self.index_path, "r+b")
        self._data_fd = self._data_file.fileno()
        self._index_fd = self._index_file.fileno()

    @staticmethod
    def _check_header(path: Path) -> None:
        with open(path, "rb") as f:
            header = f.read(HEADER_SIZE)
        if len(header) < HEADER_SIZE or header[:4] != MAGIC:
            raise StorageError(f"bad log file header: {path}")
        (version,) = struct.unpack(">I", header[4:8])
        if version != FORMAT_VERSION:
            raise StorageError(f"unsupported log format version {version}: {path}")

    def _read_index_record(self, seqno: int) -> tuple[int, int, int, int]:
        pos = HEADER_SIZE + (seqno - 1) * INDEX_RECORD.size
        raw = os.pread(self._index_fd, INDEX_RECORD.size, pos)
        if len(raw) != INDEX_RECORD.size:
            raise StorageError(f"short index read at seqno {seqno}")
        return INDEX_RECORD.unpack(raw)

    def append(self, payload: bytes, append_time_ms: int, fsync: bool) -> int:
        with self.lock:
            offset = self.data_end
            self._data_file.seek(offset)
            self._data_file.write(payload)
            self._data_file.flush()
            if fsync:
                os.fsync(self._data_fd)

            record = INDEX_RECORD.pack(
                offset, len(payload), zlib.crc32(payload), append_time_ms
            )
            self._index_file.seek(HEADER_SIZE + self.latest_seqno * INDEX_RECORD.size)
            self._index_file.write(record)
            self._index_file.flush()
            if fsync:
                os.fsync(self._index_fd)

            self.data_end = offset + len(payload)
            self.latest_seqno += 1
            return self.latest_seqno

    def read(self, name: str, seqno: int) -> LogEntry:
        if seqno < 1 or seqno > self.latest_seqno:
            raise NotFoundError(f"seqno {seqno} out of range for topic {name!r}")
        offset, length, crc, ts = self._read_index_record(seqno)
        payload = os.pread(self._data_fd, length, offset)
        if len(payload) != length:
            raise StorageError(f"short data read at seqno {seqno}")
        if zlib.crc32(payload) != crc:
            raise StorageError(f"CRC mismatch at {name!r}#{seqno}")
        return LogEntry(name, seqno, payload, ts)

    def close(self) -> None:
        self._data_file.close()
        self._index_file.close()


class LogStore:
    """A set of topics rooted at one directory.

    Single writer per topic, any number of concurrent readers; appends to
    distinct topics are independent. Topics are created implicitly on
    first append.
    """

    def __init__(
        self,
        root: str | Path,
        max_block_size: int = DEFAULT_MAX_BLOCK_SIZE,
        clock=None,
        fsync: bool = False,
    ):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.max_block_size = max_block_size
        self.clock = clock if clock is not None else WallClock()
        self.fsync = fsync
        self._topics: dict[str, _Topic] = {}
        self._topics_lock = threading.Lock()

    def _topic_dir(self, name: str) -> Path:
        # Percent-encode so namespaced topic names ("file/x/data") map to
        # flat directory names.
        return self.root / quote(name, safe="")

    def _get_topic(self, name: str, create: bool) -> _Topic | None:
        validate_topic_name(name)
        with self._topics_lock:
            topic = self._topics.get(name)
            if topic is not None:
                return topic
            directory = self._topic_dir(name)
            if not directory.exists() and not create:
                return None
            topic = _Topic(directory)
            self._topics[name] = topic
            return topic

    def topics(self) -> list[str]:
        on_disk = {unquote(p.name) for p in self.root.iterdir() if p.is_dir()}
        return sorted(on_disk | set(self._topics))

    def append(self, topic: str, payload: bytes) -> int:
        if len(payload) > self.max_block_size:
            raise PayloadTooLargeError(
                f"payload of {len(payload)} bytes exceeds max block size "
                f"{self.max_block_size}"
            )
        t = self._get_topic(topic, create=True)
        return t.append(bytes(payload), self.clock.now_ms(), self.fsync)

    def read(self, topic: str, seqno: int) -> LogEntry:
        t = self._get_topic(topic, create=False)
        if t is None:
            raise UnknownTopicError(f"unknown topic {topic!r}")
        return t.read(topic, seqno)

    def latest_seqno(self, topic: str) -> int:
        validate_topic_name(topic)
        t = self._get_topic(topic, create=False)
        return 0 if t is None else t.latest_seqno

    def read_range(self, topic: str, from_seq: int, to_seq: int) -> list[LogEntry]:
        t = self._get_topic(topic, create=False)
        if t is None:
            raise UnknownTopicError(f"unknown topic {topic!r}")
        if from_seq < 1 or from_seq > to_seq or to_seq > t.latest_seqno:
            raise InvalidRangeError(
                f"invalid range [{from_seq}, {to_seq}] for topic {topic!r} "
                f"(latest {t.latest_seqno})"
            )
        return [t.read(topic, s) for s in range(from_seq, to_seq + 1)]

    def poll_since(self, topic: str, after: int) -> list[LogEntry]:
        t = self._get_topic(topic, create=False)
        if t is None:
            raise UnknownTopicError(f"unknown topic {topic!r}")
        latest = t.latest_seqno
        if after >= latest:
            return []
        return [t.read(topic, s) for s in range(after + 1, latest + 1)]

    def close(self) -> None:
        with self._topics_lock:
            for t in self._topics.values():
                t.close()
            self._topics.clear()

    def __enter__(self) -> "LogStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
