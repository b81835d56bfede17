"""Click-stream ingestion, train/test splitting and session-parallel batching.

The on-disk format is UTF-8 CSV with header ``SessionId,ItemId,Time`` where
``Time`` is integer milliseconds since the epoch (ISO-8601 accepted behind a
flag). Sessions of length one and sessions longer than a configurable bot
threshold are dropped at ingestion.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Iterator, Sequence, TextIO

import numpy as np

__all__ = [
    "Event",
    "ItemVocab",
    "SessionStore",
    "MiniBatch",
    "SessionBatcher",
    "DataFormatError",
    "ingest_events",
    "read_events_csv",
    "write_sessions_csv",
    "split_train_test",
]

CSV_HEADER = ("SessionId", "ItemId", "Time")

DEFAULT_MAX_SESSION_LEN = 200


class DataFormatError(ValueError):
    """Raised for malformed input records; carries the offending line number."""


@dataclass(frozen=True)
class Event:
    session_id: str
    item_id: str
    timestamp: int  # milliseconds since epoch

    def __post_init__(self):
        if not self.session_id or not self.item_id:
            raise ValueError("session_id and item_id must be non-empty")
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp: {self.timestamp}")


class ItemVocab:
    """Bijection between item ids and dense indices, with popularity counts.

    Popularity is the number of training events per item; it sums to the
    total event count of the store it was built from.
    """

    def __init__(self, items: Sequence[str], popularity: Sequence[int]):
        if len(items) != len(popularity):
            raise ValueError("items and popularity length mismatch")
        self.items: list[str] = list(items)
        self.index: dict[str, int] = {it: i for i, it in enumerate(self.items)}
        if len(self.index) != len(self.items):
            raise ValueError("duplicate item ids in vocabulary")
        self.popularity = np.asarray(popularity, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self.index


@dataclass
class Session:
    session_id: str
    items: np.ndarray  # item indices, int64
    times: np.ndarray  # per-event timestamps, int64

    @property
    def start_time(self) -> int:
        return int(self.times[0])

    def __len__(self) -> int:
        return len(self.items)


class SessionStore:
    """Time-ordered sessions of item indices (relative to some ItemVocab)."""

    def __init__(self, sessions: Sequence[Session]):
        self.sessions: list[Session] = list(sessions)

    def __len__(self) -> int:
        return len(self.sessions)

    def __iter__(self) -> Iterator[Session]:
        return iter(self.sessions)

    @property
    def n_events(self) -> int:
        return sum(len(s) for s in self.sessions)

    @property
    def n_pairs(self) -> int:
        return sum(len(s) - 1 for s in self.sessions)

    def ordered(self) -> list[Session]:
        """Sessions in iteration order: start time ascending, id as tiebreak."""
        return sorted(self.sessions, key=lambda s: (s.start_time, s.session_id))


@dataclass
class MiniBatch:
    """One step of session-parallel iteration.

    ``prev_lanes[k]`` names the lane of the previous batch whose hidden row
    lane ``k`` continues; rows flagged in ``reset_mask`` are zeroed before
    stepping, so their mapping is immaterial.
    """

    inputs: np.ndarray  # item indices, shape (B,)
    targets: np.ndarray  # item indices, shape (B,)
    reset_mask: np.ndarray  # bool, shape (B,)
    prev_lanes: np.ndarray  # int, shape (B,)

    @property
    def width(self) -> int:
        return len(self.inputs)


def _parse_time(text: str, iso: bool, line_no: int) -> int:
    try:
        if iso:
            dt = datetime.fromisoformat(text)
            if dt.tzinfo is None:
                dt = dt.replace(tzinfo=timezone.utc)
            return int(dt.timestamp() * 1000)
        return int(text)
    except ValueError as exc:
        raise DataFormatError(f"line {line_no}: bad timestamp {text!r}") from exc


def read_events_csv(source: TextIO | str, iso_time: bool = False) -> list[Event]:
    """Parse the CSV schema into events; malformed rows name their line."""
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    events: list[Event] = []
    header = next(reader, None)
    if header is None:
        return events
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise DataFormatError(f"line 1: expected header {','.join(CSV_HEADER)}")
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise DataFormatError(f"line {line_no}: expected 3 fields, got {len(row)}")
        sid, item, t = (f.strip() for f in row)
        if not sid or not item:
            raise DataFormatError(f"line {line_no}: empty session or item id")
        events.append(Event(sid, item, _parse_time(t, iso_time, line_no)))
    return events


def ingest_events(
    events: Iterable[Event],
    max_session_len: int = DEFAULT_MAX_SESSION_LEN,
) -> tuple[SessionStore, ItemVocab]:
    """Group events into sessions and build the item vocabulary.

    Events are sorted by timestamp within each session (stable on ties).
    Sessions of length one are dropped, as are sessions longer than
    ``max_session_len`` (a bot filter). The vocabulary covers the surviving
    events only, with indices assigned by first appearance in session order.
    """
    by_session: dict[str, list[Event]] = {}
    for ev in events:
        by_session.setdefault(ev.session_id, []).append(ev)

    kept: list[tuple[str, list[Event]]] = []
    for sid, evs in by_session.items():
        evs.sort(key=lambda e: e.timestamp)  # stable: ties keep input order
        if 2 <= len(evs) <= max_session_len:
            kept.append((sid, evs))
    kept.sort(key=lambda se: (se[1][0].timestamp, se[0]))

    items: list[str] = []
    index: dict[str, int] = {}
    counts: list[int] = []
    sessions: list[Session] = []
    for sid, evs in kept:
        idx = np.empty(len(evs), dtype=np.int64)
        times = np.empty(len(evs), dtype=np.int64)
        for k, ev in enumerate(evs):
            i = index.get(ev.item_id)
            if i is None:
                i = len(items)
                index[ev.item_id] = i
                items.append(ev.item_id)
                counts.append(0)
            counts[i] += 1
            idx[k] = i
            times[k] = ev.timestamp
        sessions.append(Session(sid, idx, times))
    return SessionStore(sessions), ItemVocab(items, counts)


def write_sessions_csv(store: SessionStore, vocab: ItemVocab, out: TextIO) -> None:
    """Serialize a store in canonical form: sessions in iteration order."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for sess in store.ordered():
        for item_idx, t in zip(sess.items, sess.times):
            writer.writerow([sess.session_id, vocab.items[item_idx], int(t)])


def split_train_test(
    store: SessionStore,
    vocab: ItemVocab,
    boundary: int,
) -> tuple[SessionStore, ItemVocab, SessionStore]:
    """Split whole sessions at a time boundary and re-index on the train vocab.

    Sessions starting before ``boundary`` go to train, the rest to test.
    Test events whose item never occurs in train are removed; test sessions
    left shorter than two events are dropped.
    """
    train_raw = [s for s in store.sessions if s.start_time < boundary]
    test_raw = [s for s in store.sessions if s.start_time >= boundary]

    # Rebuild the vocabulary over train events only.
    items: list[str] = []
    index: dict[str, int] = {}
    counts: list[int] = []
    train_sessions: list[Session] = []
    for sess in sorted(train_raw, key=lambda s: (s.start_time, s.session_id)):
        idx = np.empty(len(sess), dtype=np.int64)
        for k, old_i in enumerate(sess.items):
            item_id = vocab.items[old_i]
            i = index.get(item_id)
            if i is None:
                i = len(items)
                index[item_id] = i
                items.append(item_id)
                counts.append(0)
            counts[i] += 1
            idx[k] = i
        train_sessions.append(Session(sess.session_id, idx, sess.times.copy()))
    train_vocab = ItemVocab(items, counts)

    test_sessions: list[Session] = []
    for sess in test_raw:
        keep_idx: list[int] = []
        keep_t: list[int] = []
        for old_i, t in zip(sess.items, sess.times):
            i = index.get(vocab.items[old_i])
            if i is not None:
                keep_idx.append(i)
                keep_t.append(int(t))
        if len(keep_idx) >= 2:
            test_sessions.append(
                Session(
                    sess.session_id,
                    np.asarray(keep_idx, dtype=np.int64),
                    np.asarray(keep_t, dtype=np.int64),
                )
            )
    return SessionStore(train_sessions), train_vocab, SessionStore(test_sessions)


class SessionBatcher:
    """Session-parallel mini-batch iterator.

    Lanes carry independent sessions, advanced one event per call. When a
    lane's session runs out of (input, target) pairs, the next unconsumed
    session takes its place (reset flagged); when no session is available
    the batch width shrinks. Lanes filled at the very start are flagged for
    reset as well, so "zero the state before this lane's first step" holds
    uniformly.
    """

    def __init__(self, store: SessionStore, batch_width: int):
        if batch_width < 1:
            raise ValueError(f"batch width must be >= 1, got {batch_width}")
        self._order = [s for s in store.ordered() if len(s) >= 2]
        self._next_session = 0
        self._lanes: list[Session] = []
        self._pos: list[int] = []  # index of the current input event per lane
        self._fresh: list[bool] = []
        while len(self._lanes) < batch_width and self._next_session < len(self._order):
            self._lanes.append(self._order[self._next_session])
            self._pos.append(0)
            self._fresh.append(True)
            self._next_session += 1

    def __iter__(self) -> Iterator[MiniBatch]:
        return self

    def __next__(self) -> MiniBatch:
        # Replace or drop lanes whose session has no remaining pair.
        lanes: list[Session] = []
        pos: list[int] = []
        fresh: list[bool] = []
        prev_lanes: list[int] = []
        for k, sess in enumerate(self._lanes):
            if self._pos[k] + 1 < len(sess):
                lanes.append(sess)
                pos.append(self._pos[k])
                fresh.append(self._fresh[k])
                prev_lanes.append(k)
            elif self._next_session < len(self._order):
                lanes.append(self._order[self._next_session])
                self._next_session += 1
                pos.append(0)
                fresh.append(True)
                prev_lanes.append(k)
        if not lanes:
            raise StopIteration
        self._lanes, self._pos = lanes, pos

        inputs = np.array([s.items[p] for s, p in zip(lanes, pos)], dtype=np.int64)
        targets = np.array([s.items[p + 1] for s, p in zip(lanes, pos)], dtype=np.int64)
        batch = MiniBatch(
            inputs=inputs,
            targets=targets,
            reset_mask=np.array(fresh, dtype=bool),
            prev_lanes=np.array(prev_lanes, dtype=np.int64),
        )
        self._pos = [p + 1 for p in self._pos]
        self._fresh = [False] * len(lanes)
        return batch
