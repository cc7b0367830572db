import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from chainsentry.chain import TransactionRecord, TxInput, TxOutput, TxStore

HOUR = 3600
T0 = 1_600_000_000


def tx(tx_id, t, inputs, outputs):
    return TransactionRecord(
        tx_id, t,
        tuple(TxInput(s, a, o) for s, a, o in inputs),
        tuple(TxOutput(a, v) for a, v in outputs),
    )


@pytest.fixture
def chain_store():
    """Three-level chain: coinbase -> mid -> deposit to 'alice'."""
    records = [
        tx("cb", T0 - 5 * HOUR, [], [("miner", 1000)]),
        tx("mid", T0 - 2 * HOUR, [("cb", 1000, "miner")], [("bob", 900), ("carol", 100)]),
        tx("dep", T0, [("mid", 900, "bob")], [("alice", 900)]),
    ]
    return TxStore.from_records(records, labels={"alice": 1})


@pytest.fixture
def case_study_store():
    """A 71-input creation deposit, a tiny transfer at hour 13, and a full
    sweep at hour 16 (relative to the deposit)."""
    records = []
    feeders = []
    for k in range(71):
        cb = tx(f"cb{k:02d}", T0 - 20 * HOUR + k, [], [(f"root{k}", 783_100_000)])
        feed = tx(f"fd{k:02d}", T0 - 10 * HOUR + k,
                  [(f"cb{k:02d}", 783_100_000, f"root{k}")],
                  [(f"feeder{k}", 783_100_000)])
        records.extend([cb, feed])
        feeders.append((f"fd{k:02d}", f"feeder{k}"))
    deposit_inputs = [(txid, 783_100_000, owner) for txid, owner in feeders]
    records.append(tx("dep", T0, deposit_inputs, [("hack", 71 * 783_100_000)]))
    records.append(tx("sigcb", T0 - 40 * HOUR, [], [("sigsrc", 8631)]))
    records.append(tx("sig", T0 + 13 * HOUR - 600, [("sigcb", 8631, "sigsrc")],
                      [("hack", 8631)]))
    total = 71 * 783_100_000 + 8631
    records.append(tx("swp", T0 + 16 * HOUR - 600,
                      [("dep", 71 * 783_100_000, "hack"), ("sig", 8631, "hack")],
                      [("dest", total)]))
    records.append(tx("peel", T0 + 17 * HOUR, [("swp", total, "dest")],
                      [("far", int(total * 0.95)), ("dest", total - int(total * 0.95))]))
    return TxStore.from_records(records, labels={"hack": 1})


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
