"""Transaction universe: parsing, validation, indexing, pair expansion.

The on-disk format is line-delimited JSON, one transaction per line::

    {"txid": "...", "time": 1600000000,
     "inputs":  [{"src": "<earlier txid>", "amount": 123, "owner": "addr"}],
     "outputs": [{"addr": "addr", "amount": 120}]}

``owner`` is optional ingestion metadata naming the address that spends the
referenced output; when absent the owner is recovered from the source
transaction's outputs by exact amount match.  Coinbase transactions carry an
empty input list.  Amounts are integer base units.

Labels live in a separate CSV with header ``address,label`` and label values
0 (regular) or 1 (malicious).
"""
from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, field

from .errors import DataError, NotFoundError

HOUR = 3600

_INPUT_KEYS = {"src", "amount", "owner"}
_OUTPUT_KEYS = {"addr", "amount"}
_RECORD_KEYS = {"txid", "time", "inputs", "outputs"}


@dataclass(frozen=True, slots=True)
class TxInput:
    src: str
    amount: int
    owner: str | None = None


@dataclass(frozen=True, slots=True)
class TxOutput:
    addr: str
    amount: int


@dataclass(frozen=True, slots=True)
class TransactionRecord:
    """One on-chain transaction.  ``inputs`` empty means coinbase."""

    tx_id: str
    timestamp: int
    inputs: tuple[TxInput, ...]
    outputs: tuple[TxOutput, ...]

    @property
    def is_coinbase(self) -> bool:
        return not self.inputs

    @property
    def total_input(self) -> int:
        return sum(i.amount for i in self.inputs)

    @property
    def total_output(self) -> int:
        return sum(o.amount for o in self.outputs)


@dataclass(frozen=True, slots=True)
class TransactionPair:
    """One edge of a transaction's bipartite input/output expansion.

    ``src``/``dst`` are a source transaction id and an output address for
    input-side (influence) pairs, and swap roles for output-side (trust)
    pairs at the transaction-graph level.
    """

    tx_id: str
    src: str
    dst: str
    proportion: float
    allocated_amount: int
    degenerate: bool = False


@dataclass(frozen=True, slots=True)
class AddressHistory:
    """Receive/spend view of one address at a query time (no lookahead)."""

    address: str
    label: int | None
    creation_time: int
    receive_txs: tuple[str, ...]
    spend_txs: tuple[str, ...]
    receive_pair_count: int
    spend_pair_count: int


@dataclass(slots=True)
class ParseReport:
    n_lines: int = 0
    n_accepted: int = 0
    line_errors: list[tuple[int, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    boundary_inputs: int = 0


def _parse_line(line: str, line_no: int) -> TransactionRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise DataError("record is not an object")
    unknown = set(obj) - _RECORD_KEYS
    if unknown:
        raise DataError(f"unknown keys {sorted(unknown)}")
    missing = _RECORD_KEYS - set(obj)
    if missing:
        raise DataError(f"missing keys {sorted(missing)}")
    txid = obj["txid"]
    if not isinstance(txid, str) or not txid:
        raise DataError("txid must be a non-empty string")
    ts = obj["time"]
    if not isinstance(ts, int) or ts < 0:
        raise DataError("time must be a non-negative integer")
    if not isinstance(obj["inputs"], list) or not isinstance(obj["outputs"], list):
        raise DataError("inputs/outputs must be lists")
    inputs = []
    for item in obj["inputs"]:
        if not isinstance(item, dict) or set(item) - _INPUT_KEYS or "src" not in item or "amount" not in item:
            raise DataError("malformed input entry")
        if not isinstance(item["src"], str) or not item["src"]:
            raise DataError("input src must be a non-empty string")
        if not isinstance(item["amount"], int) or item["amount"] < 0:
            raise DataError("input amount must be a non-negative integer")
        owner = item.get("owner")
        if owner is not None and (not isinstance(owner, str) or not owner):
            raise DataError("input owner must be a non-empty string")
        inputs.append(TxInput(item["src"], item["amount"], owner))
    outputs = []
    for item in obj["outputs"]:
        if not isinstance(item, dict) or set(item) != _OUTPUT_KEYS:
            raise DataError("malformed output entry")
        if not isinstance(item["addr"], str) or not item["addr"]:
            raise DataError("output addr must be a non-empty string")
        if not isinstance(item["amount"], int) or item["amount"] < 0:
            raise DataError("output amount must be a non-negative integer")
        outputs.append(TxOutput(item["addr"], item["amount"]))
    if not outputs:
        raise DataError("outputs must be non-empty")
    record = TransactionRecord(txid, ts, tuple(inputs), tuple(outputs))
    if not record.is_coinbase and record.total_output > record.total_input:
        raise DataError("output total exceeds input total on a non-coinbase tx")
    return record


class TxStore:
    """Immutable indexed view of a transaction universe.

    Construction is single-writer (via :func:`parse_transactions` or
    :meth:`from_records`); afterwards the store is read-only and safe to share
    across workers.
    """

    def __init__(self, records: list[TransactionRecord], report: ParseReport,
                 labels: dict[str, int] | None = None):
        self._txs: dict[str, TransactionRecord] = {}
        self.report = report
        self.labels: dict[str, int] = dict(labels or {})
        for rec in records:
            if rec.tx_id in self._txs:
                report.warnings.append(f"duplicate txid {rec.tx_id} dropped")
                continue
            self._txs[rec.tx_id] = rec
        self._build_indexes()

    # -- construction -----------------------------------------------------

    def _build_indexes(self) -> None:
        txs = self._txs
        # Aggregated forms: inputs grouped by source tx, outputs by address.
        self._agg_in: dict[str, tuple[tuple[str, int], ...]] = {}
        self._agg_out: dict[str, tuple[tuple[str, int], ...]] = {}
        self._owners: dict[str, tuple[str | None, ...]] = {}
        self._children: dict[str, list[tuple[str, int]]] = {}
        recv: dict[str, list[str]] = {}
        spend: dict[str, list[str]] = {}
        hour_index: dict[int, list[str]] = {}

        def order_key(tx_id: str):
            return (txs[tx_id].timestamp, tx_id)

        for tx_id in sorted(txs, key=order_key):
            rec = txs[tx_id]
            in_agg: dict[str, int] = {}
            for inp in rec.inputs:
                in_agg[inp.src] = in_agg.get(inp.src, 0) + inp.amount
            out_agg: dict[str, int] = {}
            for out in rec.outputs:
                out_agg[out.addr] = out_agg.get(out.addr, 0) + out.amount
            self._agg_in[tx_id] = tuple(in_agg.items())
            self._agg_out[tx_id] = tuple(out_agg.items())
            hour_index.setdefault(rec.timestamp // HOUR, []).append(tx_id)
            for addr in out_agg:
                recv.setdefault(addr, []).append(tx_id)

        for tx_id in sorted(txs, key=order_key):
            rec = txs[tx_id]
            owners: list[str | None] = []
            for src, amount in self._agg_in[tx_id]:
                src_rec = txs.get(src)
                if src_rec is None or src_rec.timestamp > rec.timestamp:
                    # Dangling or time-violating reference: external boundary.
                    self.report.boundary_inputs += 1
                    if src_rec is not None:
                        self.report.warnings.append(
                            f"{tx_id}: input {src} is later than spender; treated as boundary"
                        )
                    owners.append(self._explicit_owner(rec, src))
                    continue
                self._children.setdefault(src, []).append((tx_id, amount))
                owner = self._explicit_owner(rec, src)
                if owner is None:
                    owner = self._match_owner(src_rec, amount)
                owners.append(owner)
            self._owners[tx_id] = tuple(owners)
            for owner in set(o for o in owners if o is not None):
                spend.setdefault(owner, []).append(tx_id)

        self._addr_receive = {a: tuple(v) for a, v in recv.items()}
        self._addr_spend = {a: tuple(v) for a, v in spend.items()}
        self._hour_index = {h: tuple(v) for h, v in hour_index.items()}

    def _explicit_owner(self, rec: TransactionRecord, src: str) -> str | None:
        for inp in rec.inputs:
            if inp.src == src and inp.owner is not None:
                return inp.owner
        return None

    @staticmethod
    def _match_owner(src_rec: TransactionRecord, amount: int) -> str | None:
        for out in src_rec.outputs:
            if out.amount == amount:
                return out.addr
        return None

    @classmethod
    def from_records(cls, records, labels=None) -> "TxStore":
        report = ParseReport(n_lines=len(records), n_accepted=len(records))
        return cls(list(records), report, labels)

    # -- queries -----------------------------------------------------------

    def __len__(self) -> int:
        return len(self._txs)

    def __contains__(self, tx_id: str) -> bool:
        return tx_id in self._txs

    def tx(self, tx_id: str) -> TransactionRecord:
        try:
            return self._txs[tx_id]
        except KeyError:
            raise NotFoundError(f"unknown transaction {tx_id!r}") from None

    def maybe_tx(self, tx_id: str) -> TransactionRecord | None:
        return self._txs.get(tx_id)

    def tx_ids(self):
        return self._txs.keys()

    def agg_inputs(self, tx_id: str) -> tuple[tuple[str, int], ...]:
        return self._agg_in[tx_id]

    def agg_outputs(self, tx_id: str) -> tuple[tuple[str, int], ...]:
        return self._agg_out[tx_id]

    def input_owners(self, tx_id: str) -> tuple[str | None, ...]:
        return self._owners[tx_id]

    def children(self, tx_id: str) -> list[tuple[str, int]]:
        """Transactions spending ``tx_id``'s outputs, with drawn amounts."""
        return self._children.get(tx_id, [])

    def txs_in_hour(self, hour_bucket: int) -> tuple[str, ...]:
        return self._hour_index.get(hour_bucket, ())

    def addresses(self):
        return self._addr_receive.keys()

    def receive_txs(self, address: str) -> tuple[str, ...]:
        return self._addr_receive.get(address, ())

    def spend_txs(self, address: str) -> tuple[str, ...]:
        return self._addr_spend.get(address, ())

    def owned_input_amount(self, tx_id: str, address: str) -> int:
        total = 0
        for (src, amount), owner in zip(self._agg_in[tx_id], self._owners[tx_id]):
            if owner == address:
                total += amount
        return total

    def received_amount(self, tx_id: str, address: str) -> int:
        for addr, amount in self._agg_out[tx_id]:
            if addr == address:
                return amount
        return 0


def parse_transactions(lines, labels: dict[str, int] | None = None,
                       max_error_fraction: float = 0.5) -> TxStore:
    """Parse line-delimited records into an indexed store.

    Malformed lines are rejected individually and reported; first occurrence
    wins on duplicate txids.  If more than ``max_error_fraction`` of a
    non-trivial stream is malformed the schema is considered unresolvable and
    the whole parse fails.
    """
    report = ParseReport()
    records: list[TransactionRecord] = []
    for line_no, line in enumerate(lines, start=1):
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        line = line.strip()
        if not line:
            continue
        report.n_lines += 1
        try:
            records.append(_parse_line(line, line_no))
            report.n_accepted += 1
        except DataError as exc:
            report.line_errors.append((line_no, str(exc)))
    if report.n_lines >= 10 and report.line_errors:
        if len(report.line_errors) / report.n_lines > max_error_fraction:
            raise DataError(
                f"unresolvable schema: {len(report.line_errors)} of "
                f"{report.n_lines} lines malformed"
            )
    return TxStore(records, report, labels)


def parse_transactions_file(path, labels=None) -> TxStore:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_transactions(fh, labels)


def serialize_transaction(rec: TransactionRecord) -> str:
    obj = {
        "txid": rec.tx_id,
        "time": rec.timestamp,
        "inputs": [
            {"src": i.src, "amount": i.amount, **({"owner": i.owner} if i.owner else {})}
            for i in rec.inputs
        ],
        "outputs": [{"addr": o.addr, "amount": o.amount} for o in rec.outputs],
    }
    return json.dumps(obj, separators=(",", ":"))


def serialize_transactions(store: TxStore):
    """Canonical (timestamp, txid)-ordered line stream; parse round-trips."""
    for tx_id in sorted(store.tx_ids(), key=lambda t: (store.tx(t).timestamp, t)):
        yield serialize_transaction(store.tx(tx_id))


def load_labels(path) -> dict[str, int]:
    labels: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "address,label":
            raise DataError(f"labels file must start with 'address,label', got {header!r}")
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2 or parts[1] not in ("0", "1"):
                raise DataError(f"labels line {line_no}: expected 'address,0|1', got {line!r}")
            labels[parts[0]] = int(parts[1])
    return labels


def write_labels(labels: dict[str, int], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("address,label\n")
        for addr in sorted(labels):
            fh.write(f"{addr},{labels[addr]}\n")


def address_history(store: TxStore, address: str, t_now: int) -> AddressHistory:
    """History of ``address`` restricted to timestamps <= ``t_now``.

    Raises :class:`NotFoundError` when the address has no activity at or
    before ``t_now`` (no lookahead).
    """
    recv_all = store.receive_txs(address)
    spend_all = store.spend_txs(address)
    if not recv_all and not spend_all:
        raise NotFoundError(f"unknown address {address!r}")

    def visible(tx_ids):
        times = [store.tx(t).timestamp for t in tx_ids]
        cut = bisect_right(times, t_now)
        return tx_ids[:cut]

    recv = visible(recv_all)
    spend = visible(spend_all)
    if not recv and not spend:
        raise NotFoundError(f"address {address!r} does not exist at t={t_now}")
    first_times = [store.tx(t).timestamp for t in (recv[:1] + spend[:1])]
    creation = min(first_times)
    recv_pairs = sum(max(1, len(store.agg_inputs(t))) for t in recv)
    spend_pairs = sum(
        len(store.agg_outputs(t))
        * sum(1 for o in store.input_owners(t) if o == address)
        for t in spend
    )
    return AddressHistory(
        address=address,
        label=store.labels.get(address),
        creation_time=creation,
        receive_txs=tuple(recv),
        spend_txs=tuple(spend),
        receive_pair_count=recv_pairs,
        spend_pair_count=spend_pairs,
    )


def expand_pairs(tx: TransactionRecord) -> list[TransactionPair]:
    """Bipartite |I| x |J| expansion with input-share proportions.

    Inputs are aggregated by source transaction and outputs by address, so
    |I| and |J| count distinct counterparties.  Proportions are the input's
    share of the total input amount (identical for every output); allocated
    amounts conserve the total input exactly per output, with any rounding
    residue assigned to the largest pair.
    """
    if tx.is_coinbase:
        raise DataError(f"cannot expand coinbase transaction {tx.tx_id}")
    in_agg: dict[str, int] = {}
    for inp in tx.inputs:
        in_agg[inp.src] = in_agg.get(inp.src, 0) + inp.amount
    out_agg: dict[str, int] = {}
    for out in tx.outputs:
        out_agg[out.addr] = out_agg.get(out.addr, 0) + out.amount
    total_in = sum(in_agg.values())
    degenerate = total_in == 0
    srcs = list(in_agg.items())
    if degenerate:
        proportions = [1.0 / len(srcs)] * len(srcs)
    else:
        proportions = [amount / total_in for _, amount in srcs]
    pairs: list[TransactionPair] = []
    for addr in out_agg:
        allocs = [round(p * total_in) for p in proportions]
        residue = total_in - sum(allocs)
        if residue:
            largest = max(range(len(srcs)), key=lambda k: (proportions[k], -k))
            allocs[largest] += residue
        for (src, _), prop, alloc in zip(srcs, proportions, allocs):
            pairs.append(TransactionPair(tx.tx_id, src, addr, prop, alloc, degenerate))
    return pairs
