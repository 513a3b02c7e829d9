"""Versioned file push/pull layered on the append-only log.

A file named N uses two topics: "file/N/data" holds the content split
into max-block-size chunks, and "file/N/idx" holds one fixed-size version
record per push. The index record is appended only after every data block
is durable, so a version is visible exactly when its index record exists;
interrupted pushes leave only harmless orphan blocks.

Version numbers are the index topic's sequence numbers, so they are dense
1..n by construction. New-version notification is poll-based: readers
re-query the latest version on an interval, there is no push-side
callback.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

from .clock import WallClock
from .event_log import LogStore, UnknownTopicError, validate_topic_name

SOFTWARE_PREFIX = "sw/"

# version u32, start_seq u64, end_seq u64, byte_length u64,
# checksum 32 bytes, push_time i64 ms -- big-endian, 68 bytes.
VERSION_RECORD = struct.Struct(">IQQQ32sq")


class DataMoverError(Exception):
    pass


class UnknownFileError(DataMoverError):
    pass


class UnknownVersionError(DataMoverError):
    pass


class ChecksumMismatchError(DataMoverError):
    pass


class PollTimeoutError(DataMoverError):
    pass


@dataclass(frozen=True)
class FileVersion:
    file_name: str
    version: int
    start_seq: int
    end_seq: int
    byte_length: int
    checksum: bytes
    push_time_ms: int

    def encode(self) -> bytes:
        return VERSION_RECORD.pack(
            self.version,
            self.start_seq,
            self.end_seq,
            self.byte_length,
            self.checksum,
            self.push_time_ms,
        )

    @classmethod
    def decode(cls, file_name: str, raw: bytes) -> "FileVersion":
        version, start, end, length, checksum, push_time = VERSION_RECORD.unpack(raw)
        return cls(file_name, version, start, end, length, checksum, push_time)


def content_checksum(content: bytes) -> bytes:
    return hashlib.sha256(content).digest()


def data_topic(name: str) -> str:
    return f"file/{name}/data"


def index_topic(name: str) -> str:
    return f"file/{name}/idx"


class FileRepository:
    """Local repository: a LogStore plus the file-versioning protocol."""

    def __init__(self, root: str | Path | LogStore, clock=None):
        if isinstance(root, LogStore):
            self.store = root
        else:
            self.store = LogStore(root, clock=clock)
        self.clock = clock if clock is not None else self.store.clock

    def _validate_name(self, name: str) -> str:
        # A file name must itself be a valid (namespaceable) topic segment
        # sequence; the derived topic names get validated again downstream.
        validate_topic_name(name)
        return name

    def push_file(self, name: str, content: bytes) -> FileVersion:
        self._validate_name(name)
        block = self.store.max_block_size
        chunks = [content[i : i + block] for i in range(0, len(content), block)]
        if not chunks:
            # Zero-length sentinel block keeps start/end seqnos defined.
            chunks = [b""]

        topic = data_topic(name)
        start_seq = end_seq = 0
        for chunk in chunks:
            seq = self.store.append(topic, chunk)
            if start_seq == 0:
                start_seq = seq
            end_seq = seq

        previous = self._latest_or_none(name)
        record = FileVersion(
            file_name=name,
            version=(previous.version + 1) if previous else 1,
            start_seq=start_seq,
            end_seq=end_seq,
            byte_length=len(content),
            checksum=content_checksum(content),
            push_time_ms=self.clock.now_ms(),
        )
        self.store.append(index_topic(name), record.encode())
        return record

    def _latest_or_none(self, name: str) -> FileVersion | None:
        try:
            latest = self.store.latest_seqno(index_topic(name))
        except UnknownTopicError:
            return None
        if latest == 0:
            return None
        return self._version_record(name, latest)

    def _version_record(self, name: str, version: int) -> FileVersion:
        entry = self.store.read(index_topic(name), version)
        record = FileVersion.decode(name, entry.payload)
        if record.version != version:
            raise DataMoverError(
                f"index corruption: record #{version} claims version {record.version}"
            )
        return record

    def latest_version(self, name: str) -> FileVersion:
        self._validate_name(name)
        record = self._latest_or_none(name)
        if record is None:
            raise UnknownFileError(f"unknown file {name!r}")
        return record

    def pull_file(self, name: str, version: int | None = None) -> bytes:
        self._validate_name(name)
        if version is None:
            record = self.latest_version(name)
        else:
            latest = self._latest_or_none(name)
            if latest is None:
                raise UnknownFileError(f"unknown file {name!r}")
            if version < 1 or version > latest.version:
                raise UnknownVersionError(f"{name!r} has no version {version}")
            record = self._version_record(name, version)

        entries = self.store.read_range(data_topic(name), record.start_seq, record.end_seq)
        content = b"".join(e.payload for e in entries)
        if len(content) != record.byte_length:
            raise ChecksumMismatchError(
                f"{name!r} v{record.version}: reassembled {len(content)} bytes, "
                f"expected {record.byte_length}"
            )
        if content_checksum(content) != record.checksum:
            raise ChecksumMismatchError(f"{name!r} v{record.version}: checksum mismatch")
        return content

    def wait_for_new_version(
        self,
        name: str,
        after: int,
        poll_interval_ms: int,
        deadline_ms: int | None = None,
    ) -> FileVersion:
        """Poll until a version newer than `after` appears.

        A missing file simply means "no version yet". Raises
        PollTimeoutError once the deadline passes with no newer version.
        """
        if poll_interval_ms <= 0:
            raise ValueError("poll_interval_ms must be positive")
        while True:
            record = self._latest_or_none(name)
            if record is not None and record.version > after:
                return record
            now = self.clock.now_ms()
            if deadline_ms is not None and now + poll_interval_ms > deadline_ms:
                raise PollTimeoutError(
                    f"no version of {name!r} newer than {after} by t={deadline_ms}"
                )
            self.clock.sleep_ms(poll_interval_ms)

    def distribute_software(self, package_name: str, content: bytes) -> FileVersion:
        """Software updates ride the same versioned-push path under `sw/`."""
        return self.push_file(SOFTWARE_PREFIX + package_name, content)

    def close(self) -> None:
        self.store.close()

    def __enter__(self) -> "FileRepository":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
