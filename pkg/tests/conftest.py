import numpy as np
import pytest

from sessrec.data import ItemVocab, Session, SessionStore


def store_from_lists(session_items, n_items=None):
    """Build a store + vocab from plain lists of item indices."""
    sessions = []
    t = 0
    if n_items is None:
        n_items = max(max(s) for s in session_items) + 1
    counts = np.zeros(n_items, dtype=np.int64)
    for k, items in enumerate(session_items):
        items = np.asarray(items, dtype=np.int64)
        times = np.arange(t, t + len(items), dtype=np.int64)
        sessions.append(Session(f"s{k:05d}", items, times))
        t += len(items) + 10
        for i in items:
            counts[i] += 1
    vocab = ItemVocab([f"item{i}" for i in range(n_items)], counts)
    return SessionStore(sessions), vocab


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
