"""Asset-transfer paths: influence/trust pairs and BK/FR path construction.

A path is a chain of (previous tx, cumulative activation score, tx) hops
anchored at one of an address's receive transactions (backward tracing, BK)
or spend transactions (forward tracing, FR).  Expansion is a breadth-first
frontier walk: a hop survives only while the running product of per-hop
amount proportions stays at or above the activation threshold and the hop's
timestamp stays within the configured span of the anchor.  Every frontier
state is retained, so the returned set is closed under prefixes.

Long-term (LT) tracing uses a high threshold over a wide window to find the
dominant source or destination of funds; short-term (ST) tracing uses a low
threshold over a narrow window to expose local transfer structure.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .chain import TransactionPair, TransactionRecord, TxStore
from .errors import DataError

DAY = 86400.0

LT_THRESHOLD = 0.5
LT_SPAN = 7 * DAY
ST_THRESHOLD = 0.01
ST_SPAN = 1 * DAY

DIRECTIONS = ("BK", "FR")
HORIZONS = ("LT", "ST")
SET_NAMES = ("lt_bk", "st_bk", "lt_fr", "st_fr")


@dataclass(frozen=True, slots=True)
class PathConfig:
    direction: str
    horizon: str
    threshold: float
    max_span: float
    max_paths_per_set: int = 10_000

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise DataError(f"direction must be BK or FR, got {self.direction!r}")
        if self.horizon not in HORIZONS:
            raise DataError(f"horizon must be LT or ST, got {self.horizon!r}")
        if not 0.0 < self.threshold <= 1.0:
            raise DataError(f"threshold must be in (0, 1], got {self.threshold}")
        if self.max_span <= 0:
            raise DataError("max_span must be positive")
        if self.max_paths_per_set < 1:
            raise DataError("max_paths_per_set must be >= 1")

    @classmethod
    def long_term(cls, direction: str, threshold: float = LT_THRESHOLD,
                  max_span: float = LT_SPAN, max_paths_per_set: int = 10_000):
        return cls(direction, "LT", threshold, max_span, max_paths_per_set)

    @classmethod
    def short_term(cls, direction: str, threshold: float = ST_THRESHOLD,
                   max_span: float = ST_SPAN, max_paths_per_set: int = 10_000):
        return cls(direction, "ST", threshold, max_span, max_paths_per_set)


@dataclass(frozen=True, slots=True)
class AssetTransferPath:
    """Hops are (prev tx or None, cumulative score, tx); hops[0] is the anchor."""

    hops: tuple[tuple[str | None, float, str], ...]
    direction: str
    horizon: str

    @property
    def anchor_tx(self) -> str:
        return self.hops[0][2]

    @property
    def tip_tx(self) -> str:
        return self.hops[-1][2]

    @property
    def score(self) -> float:
        return self.hops[-1][1]

    @property
    def hop_length(self) -> int:
        return len(self.hops) - 1

    @property
    def key(self) -> tuple[str, ...]:
        return tuple(h[2] for h in self.hops)

    def extended(self, score: float, tx: str) -> "AssetTransferPath":
        return AssetTransferPath(
            self.hops + ((self.tip_tx, score, tx),), self.direction, self.horizon
        )


@dataclass(slots=True)
class PathSet:
    paths: list[AssetTransferPath]
    direction: str
    horizon: str
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.paths)

    def keys(self):
        return {p.key for p in self.paths}


def influence_pairs(tx: TransactionRecord, threshold: float) -> list[TransactionPair]:
    """Input-side pairs contributing at least ``threshold`` of the input total."""
    from .chain import expand_pairs

    return [p for p in expand_pairs(tx) if p.proportion >= threshold]


def trust_pairs(tx: TransactionRecord, threshold: float) -> list[TransactionPair]:
    """Output-side pairs receiving at least ``threshold`` of the output total."""
    if tx.is_coinbase:
        raise DataError(f"cannot expand coinbase transaction {tx.tx_id}")
    in_agg: dict[str, int] = {}
    for inp in tx.inputs:
        in_agg[inp.src] = in_agg.get(inp.src, 0) + inp.amount
    out_agg: dict[str, int] = {}
    for out in tx.outputs:
        out_agg[out.addr] = out_agg.get(out.addr, 0) + out.amount
    total_out = sum(out_agg.values())
    degenerate = total_out == 0
    outs = list(out_agg.items())
    if degenerate:
        proportions = [1.0 / len(outs)] * len(outs)
    else:
        proportions = [amount / total_out for _, amount in outs]
    allocs = [round(p * total_out) for p in proportions]
    residue = total_out - sum(allocs)
    if residue:
        largest = max(range(len(outs)), key=lambda k: (proportions[k], -k))
        allocs[largest] += residue
    pairs = []
    for src in in_agg:
        for (addr, _), prop, alloc in zip(outs, proportions, allocs):
            if prop >= threshold:
                pairs.append(TransactionPair(tx.tx_id, src, addr, prop, alloc, degenerate))
    return pairs


def _backward_expansions(store: TxStore, path: AssetTransferPath, config: PathConfig,
                         anchor_time: int):
    tip = path.tip_tx
    agg = store.agg_inputs(tip)
    if not agg:
        return
    total_in = sum(a for _, a in agg)
    n = len(agg)
    tip_time = store.tx(tip).timestamp
    for src, amount in agg:
        rec = store.maybe_tx(src)
        if rec is None or rec.timestamp > tip_time:
            continue  # external boundary: tracing stops here
        prop = (amount / total_in) if total_in else (1.0 / n)
        score = path.score * prop
        if score >= config.threshold and anchor_time - rec.timestamp <= config.max_span:
            yield score, src


def _forward_expansions(store: TxStore, path: AssetTransferPath, config: PathConfig,
                        anchor_time: int, t_now: int):
    tip = path.tip_tx
    total_out = store.tx(tip).total_output
    children = store.children(tip)
    n = max(1, len(children))
    for child, amount in children:
        child_time = store.tx(child).timestamp
        if child_time > t_now:
            continue
        prop = (amount / total_out) if total_out else (1.0 / n)
        score = path.score * prop
        if score >= config.threshold and child_time - anchor_time <= config.max_span:
            yield score, child


def _prune_frontier(frontier: list[AssetTransferPath], cap: int):
    if len(frontier) <= cap:
        return frontier, False
    frontier.sort(key=lambda p: (-p.score, p.key))
    return frontier[:cap], True


def backward_paths(store: TxStore, seed_tx: str, config: PathConfig) -> PathSet:
    """Frontier walk over influence pairs from a receive transaction.

    Returns all frontier states (the seed plus every accepted prefix),
    deduplicated by hop sequence.  Frontiers larger than the configured cap
    are pruned deterministically (highest score first, ties by hop sequence)
    and the result is flagged truncated.
    """
    if config.direction != "BK":
        raise DataError("backward_paths requires a BK config")
    anchor_time = store.tx(seed_tx).timestamp
    seed = AssetTransferPath(((None, 1.0, seed_tx),), config.direction, config.horizon)
    paths = [seed]
    seen = {seed.key}
    frontier = [seed]
    truncated = False
    while frontier:
        nxt: list[AssetTransferPath] = []
        for path in frontier:
            for score, src in _backward_expansions(store, path, config, anchor_time):
                ext = path.extended(score, src)
                if ext.key not in seen:
                    seen.add(ext.key)
                    nxt.append(ext)
        nxt, cut = _prune_frontier(nxt, config.max_paths_per_set)
        truncated = truncated or cut
        paths.extend(nxt)
        frontier = nxt
    return PathSet(paths, config.direction, config.horizon, truncated)


def forward_paths(store: TxStore, seed_tx: str, config: PathConfig, t_now: int) -> PathSet:
    """Forward mirror of :func:`backward_paths` over trust pairs.

    The effective span is the smaller of the configured span and the time
    elapsed since the seed (future data cannot be observed).
    """
    if config.direction != "FR":
        raise DataError("forward_paths requires an FR config")
    trace = ForwardTrace.build(store, seed_tx, config, t_now)
    return trace.pathset()


@dataclass(slots=True)
class ForwardTrace:
    """Incremental forward-path state for one anchor.

    ``extend`` brings the trace up to a later observation time and returns
    the newly added paths; the accumulated set always equals a fresh build
    at the current time.
    """

    anchor_tx: str
    config: PathConfig
    t_seen: int
    paths: list[AssetTransferPath] = field(default_factory=list)
    truncated: bool = False
    _keys: set = field(default_factory=set)

    @classmethod
    def build(cls, store: TxStore, seed_tx: str, config: PathConfig, t_now: int):
        if config.direction != "FR":
            raise DataError("ForwardTrace requires an FR config")
        anchor_time = store.tx(seed_tx).timestamp
        seed = AssetTransferPath(((None, 1.0, seed_tx),), config.direction, config.horizon)
        trace = cls(seed_tx, config, anchor_time - 1)
        trace.paths.append(seed)
        trace._keys.add(seed.key)
        trace.extend(store, t_now)
        return trace

    def extend(self, store: TxStore, t_now: int) -> list[AssetTransferPath]:
        if t_now < self.t_seen:
            raise DataError("observation time may not move backwards")
        anchor_time = store.tx(self.anchor_tx).timestamp
        t_prev = self.t_seen
        added: list[AssetTransferPath] = []
        # Old paths can only grow through hops that became visible after
        # t_prev; new paths (added this call) are expanded in full.
        frontier = list(self.paths)
        fresh = False
        while frontier:
            nxt: list[AssetTransferPath] = []
            for path in frontier:
                for score, child in _forward_expansions(
                    store, path, self.config, anchor_time, t_now
                ):
                    if not fresh and store.tx(child).timestamp <= t_prev:
                        continue  # already explored from this path
                    ext = path.extended(score, child)
                    if ext.key not in self._keys:
                        self._keys.add(ext.key)
                        nxt.append(ext)
            nxt, cut = _prune_frontier(nxt, self.config.max_paths_per_set)
            self.truncated = self.truncated or cut
            self.paths.extend(nxt)
            added.extend(nxt)
            frontier = nxt
            fresh = True
        self.t_seen = t_now
        return added

    def pathset(self) -> PathSet:
        return PathSet(list(self.paths), self.config.direction, self.config.horizon,
                       self.truncated)


@dataclass(frozen=True, slots=True)
class PathParams:
    """Thresholds and spans for the four per-address path sets."""

    lt_threshold: float = LT_THRESHOLD
    lt_span: float = LT_SPAN
    st_threshold: float = ST_THRESHOLD
    st_span: float = ST_SPAN
    max_paths_per_set: int = 10_000

    def config(self, horizon: str, direction: str) -> PathConfig:
        if horizon == "LT":
            return PathConfig(direction, "LT", self.lt_threshold, self.lt_span,
                              self.max_paths_per_set)
        return PathConfig(direction, "ST", self.st_threshold, self.st_span,
                          self.max_paths_per_set)


def path_sets_for_address(store: TxStore, address: str, t_now: int,
                          params: PathParams | None = None) -> dict[str, PathSet]:
    """The four merged path sets (lt_bk, st_bk, lt_fr, st_fr) at ``t_now``.

    Backward sets anchor every visible receive transaction; forward sets
    anchor every visible spend transaction.  Per-anchor results are merged
    and deduplicated by hop sequence.
    """
    params = params or PathParams()
    receives = [t for t in store.receive_txs(address) if store.tx(t).timestamp <= t_now]
    spends = [t for t in store.spend_txs(address) if store.tx(t).timestamp <= t_now]
    if not receives and not spends:
        raise DataError(f"address {address!r} has no activity at t={t_now}")
    out: dict[str, PathSet] = {}
    for horizon in HORIZONS:
        merged: list[AssetTransferPath] = []
        seen: set = set()
        truncated = False
        cfg = params.config(horizon, "BK")
        for anchor in receives:
            ps = backward_paths(store, anchor, cfg)
            truncated = truncated or ps.truncated
            for p in ps.paths:
                if p.key not in seen:
                    seen.add(p.key)
                    merged.append(p)
        out[f"{horizon.lower()}_bk"] = PathSet(merged, "BK", horizon, truncated)
    for horizon in HORIZONS:
        merged = []
        seen = set()
        truncated = False
        cfg = params.config(horizon, "FR")
        for anchor in spends:
            ps = forward_paths(store, anchor, cfg, t_now)
            truncated = truncated or ps.truncated
            for p in ps.paths:
                if p.key not in seen:
                    seen.add(p.key)
                    merged.append(p)
        out[f"{horizon.lower()}_fr"] = PathSet(merged, "FR", horizon, truncated)
    return out
