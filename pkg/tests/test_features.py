import numpy as np

from chainsentry.chain import TxStore
from chainsentry.features import (ADDRESS_FEATURES, FULL_SCHEMA, SEED_SCHEMA,
                                  SCHEMA_HASH, _AddressEvents, address_features,
                                  aggregate_path_set, feature_timeline,
                                  feature_timeline_rebuilt, path_features,
                                  read_feature_csv, write_feature_csv)
from chainsentry.paths import PathConfig, backward_paths
from conftest import HOUR, T0, tx
from oracles import naive_aggregate

DAY = 86400


def test_schema_arity():
    assert len(FULL_SCHEMA) == 212
    assert len(SEED_SCHEMA) == 68
    assert len(ADDRESS_FEATURES) == 16
    assert len(set(FULL_SCHEMA)) == 212
    assert set(SEED_SCHEMA) <= set(FULL_SCHEMA)


def feature(vec, name, schema=ADDRESS_FEATURES):
    return vec[schema.index(name)]


def test_address_features_fresh_address():
    store = TxStore.from_records([tx("r", T0, [], [("a", 500)])])
    ev = _AddressEvents.collect(store, "a")
    vec = address_features(ev, T0)
    assert feature(vec, "addr__balance") == 500
    assert feature(vec, "addr__receive_count_total") == 1
    assert feature(vec, "addr__spend_count_total") == 0
    assert feature(vec, "addr__spend_receive_ratio_total") == 0.0
    assert feature(vec, "addr__active_hour_count") == 1
    assert feature(vec, "addr__active_hour_rate") == 1.0


def test_address_features_case_study_hour14(case_study_store):
    ev = _AddressEvents.collect(case_study_store, "hack")
    vec = address_features(ev, T0 + 14 * HOUR)
    assert feature(vec, "addr__receive_count_total") == 2
    assert feature(vec, "addr__spend_count_total") == 0
    assert feature(vec, "addr__balance") == 71 * 783_100_000 + 8631


def test_address_features_match_naive_recompute(rng):
    # Random schedule vs a per-event brute-force recount.
    events = []
    t = T0
    for _ in range(40):
        t += int(rng.integers(60, 5000))
        events.append((t, int(rng.integers(0, 3 * HOUR)), int(rng.integers(0, 100))))
    records = [tx("seed", T0 - HOUR, [], [("a", 10**9)])]
    recv, spend = [], []
    for k, (ts, _, amount) in enumerate(events):
        if k % 3 == 0 and recv:
            records.append(tx(f"s{k}", ts, [(records[0].tx_id, amount, "a")],
                              [("sink", amount)]))
            spend.append((ts, amount))
        else:
            records.append(tx(f"r{k}", ts, [], [("a", amount)]))
            recv.append((ts, amount))
    store = TxStore.from_records(records)
    ev = _AddressEvents.collect(store, "a")
    t_now = events[-1][0]
    vec = address_features(ev, t_now)
    # naive recount
    assert feature(vec, "addr__receive_count_total") == len([1 for s, _ in recv if s <= t_now]) + 1
    assert feature(vec, "addr__spend_count_total") == len(spend)
    naive_recent_spend = len([1 for s, _ in spend if t_now - HOUR < s <= t_now])
    assert feature(vec, "addr__spend_count_recent_hour") == naive_recent_spend
    buckets = set(s // HOUR for s, _ in recv + spend) | {(T0 - HOUR) // HOUR}
    assert feature(vec, "addr__active_hour_count") == len(buckets)
    balance = 10**9 + sum(a for _, a in recv) - sum(a for _, a in spend)
    assert feature(vec, "addr__balance") == balance


def test_path_features_trivial_and_empty(chain_store):
    rows, empty = path_features(chain_store, [])
    assert empty and rows.shape == (0, 12)
    agg = aggregate_path_set(rows)
    assert agg.shape == (49,) and not agg.any()

    ps = backward_paths(chain_store, "cb", PathConfig("BK", "LT", 0.5, 7 * DAY))
    rows, empty = path_features(chain_store, ps.paths)
    assert not empty
    vec = dict(zip(["hop_length", "height_length", "max_input_amount",
                    "min_input_amount", "max_output_amount", "min_output_amount",
                    "max_input_tx_count", "min_input_tx_count",
                    "max_output_tx_count", "min_output_tx_count",
                    "max_activation_score", "min_activation_score"], rows[0]))
    assert vec["hop_length"] == 0
    assert vec["max_activation_score"] == vec["min_activation_score"] == 1.0


def test_path_features_three_hop_hand_table(chain_store):
    ps = backward_paths(chain_store, "dep", PathConfig("BK", "LT", 0.5, 7 * DAY))
    longest = max(ps.paths, key=lambda p: p.hop_length)
    row = path_features(chain_store, [longest])[0][0]
    # dep(in=900,out=900,|I|=1,|J|=1) <- mid(in=1000,out=1000,1in,2out) <- cb(0 in).
    want = [2, 3, 1000, 0, 1000, 900, 1, 0, 2, 1, 1.0, 1.0]
    assert row.tolist() == want


def test_aggregate_single_and_duplicates(rng):
    row = rng.uniform(0, 5, size=12)
    one = aggregate_path_set(row[None, :])
    assert one[0] == 1
    stats = one[1:].reshape(12, 4)
    assert np.allclose(stats[:, 0], row) and np.allclose(stats[:, 1], row)
    assert np.allclose(stats[:, 2], row) and np.allclose(stats[:, 3], 0.0)
    two = aggregate_path_set(np.vstack([row, row]))
    assert two[0] == 2
    assert np.allclose(two[1:], one[1:])


def test_aggregate_matches_two_pass_oracle(rng):
    rows = rng.uniform(-3, 9, size=(37, 12))
    got = aggregate_path_set(rows)
    want = naive_aggregate(rows)
    assert np.allclose(got, want, atol=1e-12)
    stats = got[1:].reshape(12, 4)
    assert (stats[:, 1] >= stats[:, 0]).all()  # max >= avg
    assert (stats[:, 0] >= stats[:, 2]).all()  # avg >= min
    assert (stats[:, 3] >= 0).all()


def test_timeline_dormant_address():
    store = TxStore.from_records([tx("r", T0, [], [("a", 500)])],
                                 labels={"a": 0})
    tl = feature_timeline(store, "a")
    assert tl.matrix.shape == (24, 212)
    recent = FULL_SCHEMA.index("addr__receive_count_recent_hour")
    assert tl.matrix[0, recent] == 1
    assert (tl.matrix[1:, recent] == 0).all()
    total = FULL_SCHEMA.index("addr__receive_count_total")
    assert (tl.matrix[:, total] == 1).all()


def test_timeline_case_study_fr_first_nonzero_at_16(case_study_store):
    tl = feature_timeline(case_study_store, "hack")
    col = FULL_SCHEMA.index("st_fr__path_count")
    nonzero_rows = np.flatnonzero(tl.matrix[:, col])
    assert nonzero_rows.size and nonzero_rows[0] == 15  # row 16, 0-based 15
    bk_col = FULL_SCHEMA.index("st_bk__path_count")
    assert tl.matrix[0, bk_col] == 143
    sig_col = tl.matrix[:, bk_col]
    assert sig_col[13 - 1] == 144  # signal adds its trivial path at row 13


def test_timeline_incremental_equals_rebuild(case_study_store):
    fast = feature_timeline(case_study_store, "hack")
    slow = feature_timeline_rebuilt(case_study_store, "hack")
    assert np.array_equal(fast.matrix, slow.matrix)


def test_timeline_no_lookahead(case_study_store):
    """Rows before a perturbation hour are bit-identical after it."""
    base = feature_timeline(case_study_store, "hack").matrix
    later = [r for r in case_study_store._txs.values()]
    extra = tx("late", T0 + 20 * HOUR + 10, [], [("hack", 777)])
    store2 = TxStore.from_records(later + [extra], labels={"hack": 1})
    pert = feature_timeline(store2, "hack").matrix
    assert np.array_equal(base[:20], pert[:20])
    assert not np.array_equal(base[20:], pert[20:])


def test_feature_csv_roundtrip(tmp_path, case_study_store):
    tl = feature_timeline(case_study_store, "hack")
    path = tmp_path / "features.csv"
    write_feature_csv(path, [tl])
    first = path.read_text().splitlines()[0]
    assert first == f"# schema_sha256={SCHEMA_HASH}"
    back = read_feature_csv(path)
    assert len(back) == 1
    assert back[0].address == "hack" and back[0].label == 1
    assert np.array_equal(back[0].matrix, tl.matrix)
