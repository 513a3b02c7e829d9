"""Event log tests: shadow-list oracle, durability, crash recovery."""

import os
import random
import struct
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbf.clock import VirtualClock
from rbf.event_log import (
    HEADER,
    HEADER_SIZE,
    INDEX_RECORD,
    InvalidRangeError,
    LogStore,
    NotFoundError,
    PayloadTooLargeError,
    StorageError,
    UnknownTopicError,
    validate_topic_name,
)


def test_append_read_shadow_oracle(tmp_path):
    # Oracle: a plain in-memory list per topic must agree with the store
    # on every read, in any interleaving of appends across topics.
    rng = random.Random(7)
    topics = ["alpha", "beta/gamma", "metrics/cpu"]
    shadow = {t: [] for t in topics}
    with LogStore(tmp_path) as store:
        for _ in range(300):
            topic = rng.choice(topics)
            payload = rng.randbytes(rng.randint(0, 200))
            seq = store.append(topic, payload)
            shadow[topic].append(payload)
            assert seq == len(shadow[topic])
        for topic in topics:
            assert store.latest_seqno(topic) == len(shadow[topic])
            for i, expected in enumerate(shadow[topic], start=1):
                entry = store.read(topic, i)
                assert entry.payload == expected
                assert entry.seqno == i
                assert entry.topic == topic


def test_seqnos_dense_from_one(tmp_path):
    with LogStore(tmp_path) as store:
        seqs = [store.append("t", bytes([i])) for i in range(50)]
    assert seqs == list(range(1, 51))


def test_durability_across_reopen(tmp_path):
    payloads = [os.urandom(n) for n in (0, 1, 100, 65536)]
    with LogStore(tmp_path) as store:
        for p in payloads:
            store.append("t", p)
    with LogStore(tmp_path) as store:
        assert store.latest_seqno("t") == len(payloads)
        for i, p in enumerate(payloads, start=1):
            assert store.read("t", i).payload == p
        # Appends continue from the persisted seqno.
        assert store.append("t", b"more") == len(payloads) + 1


def test_read_range_and_poll_since(tmp_path):
    with LogStore(tmp_path) as store:
        for i in range(10):
            store.append("t", f"p{i}".encode())
        entries = store.read_range("t", 3, 7)
        assert [e.payload for e in entries] == [b"p2", b"p3", b"p4", b"p5", b"p6"]
        assert [e.seqno for e in entries] == [3, 4, 5, 6, 7]

        assert store.poll_since("t", 10) == []
        assert store.poll_since("t", 12) == []
        new = store.poll_since("t", 8)
        assert [e.seqno for e in new] == [9, 10]
        assert [e.payload for e in new] == [b"p8", b"p9"]


def test_poll_since_sees_interleaved_appends(tmp_path):
    with LogStore(tmp_path) as store:
        cursor = 0
        seen = []
        for i in range(20):
            store.append("t", bytes([i]))
            if i % 3 == 0:
                for e in store.poll_since("t", cursor):
                    seen.append(e.payload)
                    cursor = e.seqno
        for e in store.poll_since("t", cursor):
            seen.append(e.payload)
        assert seen == [bytes([i]) for i in range(20)]


def test_errors(tmp_path):
    with LogStore(tmp_path, max_block_size=64) as store:
        store.append("t", b"x")
        with pytest.raises(NotFoundError):
            store.read("t", 2)
        with pytest.raises(NotFoundError):
            store.read("t", 0)
        with pytest.raises(UnknownTopicError):
            store.read("nope", 1)
        assert store.latest_seqno("nope") == 0
        with pytest.raises(InvalidRangeError):
            store.read_range("t", 1, 2)
        with pytest.raises(InvalidRangeError):
            store.read_range("t", 0, 1)
        with pytest.raises(PayloadTooLargeError):
            store.append("t", b"y" * 65)
        # Max-size payload is fine.
        store.append("t", b"y" * 64)


def test_topic_name_validation():
    for good in ("a", "file/x/data", "sw/pkg", "a" * 255):
        assert validate_topic_name(good) == good
    for bad in ("", "a//b", "/a", "a/", ".", "..", "a/../b", "a\\b", "a\x00b", "å" * 200):
        with pytest.raises(ValueError):
            validate_topic_name(bad)


def test_topics_listing(tmp_path):
    with LogStore(tmp_path) as store:
        store.append("b", b"")
        store.append("a/x", b"")
    with LogStore(tmp_path) as store:
        assert store.topics() == ["a/x", "b"]


def test_recovery_truncates_torn_index_record(tmp_path):
    with LogStore(tmp_path) as store:
        store.append("t", b"one")
        store.append("t", b"two")
    index = tmp_path / next(p.name for p in tmp_path.iterdir()) / "index"
    # Simulate a crash mid-write of a third index record.
    with open(index, "ab") as f:
        f.write(b"\x00" * (INDEX_RECORD.size - 5))
    with LogStore(tmp_path) as store:
        assert store.latest_seqno("t") == 2
        assert store.read("t", 2).payload == b"two"
        assert store.append("t", b"three") == 3
        assert store.read("t", 3).payload == b"three"


def test_recovery_drops_index_record_past_data(tmp_path):
    with LogStore(tmp_path) as store:
        store.append("t", b"one")
    topic_dir = next(p for p in tmp_path.iterdir())
    # A full index record whose data bytes never made it to disk.
    with open(topic_dir / "index", "ab") as f:
        f.write(INDEX_RECORD.pack(10_000, 50, 0, 0))
    with LogStore(tmp_path) as store:
        assert store.latest_seqno("t") == 1
        assert store.read("t", 1).payload == b"one"


def test_recovery_trims_orphan_data(tmp_path):
    with LogStore(tmp_path) as store:
        store.append("t", b"one")
    topic_dir = next(p for p in tmp_path.iterdir())
    with open(topic_dir / "data", "ab") as f:
        f.write(b"orphan bytes from an interrupted append")
    with LogStore(tmp_path) as store:
        assert store.read("t", 1).payload == b"one"
        assert store.append("t", b"two") == 2
        assert store.read("t", 2).payload == b"two"


def test_recovery_of_empty_topic_with_orphans(tmp_path):
    with LogStore(tmp_path) as store:
        store.append("t", b"x")
    topic_dir = next(p for p in tmp_path.iterdir())
    # Crash before the very first index record: data written, index empty.
    (topic_dir / "index").write_bytes(HEADER)
    with LogStore(tmp_path) as store:
        assert store.latest_seqno("t") == 0
        assert store.append("t", b"fresh") == 1
        assert store.read("t", 1).payload == b"fresh"


def test_bad_header_rejected(tmp_path):
    with LogStore(tmp_path) as store:
        store.append("t", b"x")
    topic_dir = next(p for p in tmp_path.iterdir())
    raw = (topic_dir / "index").read_bytes()
    (topic_dir / "index").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(StorageError):
        LogStore(tmp_path).read("t", 1)


def test_crc_detects_bit_rot(tmp_path):
    with LogStore(tmp_path) as store:
        store.append("t", b"hello world")
    topic_dir = next(p for p in tmp_path.iterdir())
    data = bytearray((topic_dir / "data").read_bytes())
    data[HEADER_SIZE] ^= 0xFF
    (topic_dir / "data").write_bytes(bytes(data))
    with LogStore(tmp_path) as store:
        with pytest.raises(StorageError):
            store.read("t", 1)


def test_append_timestamps_from_clock(tmp_path):
    clock = VirtualClock(1_000)
    with LogStore(tmp_path, clock=clock) as store:
        store.append("t", b"a")
        clock.advance_to(5_000)
        store.append("t", b"b")
        assert store.read("t", 1).append_time_ms == 1_000
        assert store.read("t", 2).append_time_ms == 5_000


def test_concurrent_readers_during_appends(tmp_path):
    with LogStore(tmp_path) as store:
        for i in range(200):
            store.append("t", struct.pack(">I", i))
        errors = []

        def reader():
            try:
                rng = random.Random()
                for _ in range(500):
                    seq = rng.randint(1, 200)
                    entry = store.read("t", seq)
                    assert struct.unpack(">I", entry.payload)[0] == seq - 1
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=reader) for _ in range(4)]
        for t in threads:
            t.start()
        for i in range(200, 400):
            store.append("t", struct.pack(">I", i))
        for t in threads:
            t.join()
        assert not errors


@settings(max_examples=40, deadline=None)
@given(
    st.lists(
        st.tuples(st.sampled_from(["a", "b", "c"]), st.binary(max_size=128)),
        max_size=40,
    )
)
def test_property_store_matches_shadow(tmp_path_factory, ops):
    root = tmp_path_factory.mktemp("log")
    shadow = {}
    with LogStore(root) as store:
        for topic, payload in ops:
            store.append(topic, payload)
            shadow.setdefault(topic, []).append(payload)
    with LogStore(root) as store:
        for topic, payloads in shadow.items():
            assert store.latest_seqno(topic) == len(payloads)
            got = store.read_range(topic, 1, len(payloads)) if payloads else []
            assert [e.payload for e in got] == payloads
