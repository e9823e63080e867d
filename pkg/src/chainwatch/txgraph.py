"""UTXO transaction graph: parsing, indexing, and pro-rata value splitting.

Transactions arrive as line-delimited JSON. Amounts are integers in the
smallest ledger unit throughout; shares are the only floats this module
produces. Inputs reference their funding transaction by id; references
to transactions outside the dump are kept as external sources rather
than treated as errors, so partial dumps still load.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import DataError


@dataclass(frozen=True)
class InputRef:
    source_tx: str
    address: str
    amount: int


@dataclass(frozen=True)
class OutputRef:
    address: str
    amount: int


@dataclass(frozen=True)
class Transaction:
    id: str
    timestamp: int
    inputs: tuple[InputRef, ...]
    outputs: tuple[OutputRef, ...]

    @property
    def is_coinbase(self) -> bool:
        return len(self.inputs) == 0

    @property
    def total_input(self) -> int:
        return sum(ref.amount for ref in self.inputs)

    @property
    def total_output(self) -> int:
        return sum(ref.amount for ref in self.outputs)


@dataclass(frozen=True)
class TransactionPair:
    """One (input, output) cell of a transaction's pro-rata value split."""

    tx_id: str
    input_index: int
    output_index: int
    amount: int
    input_share: float
    output_share: float


@dataclass
class PairSplit:
    pairs: list[TransactionPair]
    fee: int
    degenerate: bool


class TransactionGraph:
    """All transactions of a dump plus the indexes path tracing needs."""

    def __init__(self, transactions: list[Transaction]):
        self.transactions: dict[str, Transaction] = {}
        for tx in transactions:
            if tx.id in self.transactions:
                raise DataError(f"duplicate transaction id {tx.id!r}")
            self.transactions[tx.id] = tx

        self.external_sources: set[str] = set()
        # spenders[source_tx] -> {spending_tx: summed input amount}
        self.spenders: dict[str, dict[str, int]] = {}
        for tx in transactions:
            for ref in tx.inputs:
                if ref.source_tx not in self.transactions:
                    self.external_sources.add(ref.source_tx)
                    continue
                source = self.transactions[ref.source_tx]
                if source.timestamp > tx.timestamp:
                    raise DataError(
                        f"transaction {tx.id!r} at {tx.timestamp} spends "
                        f"{source.id!r} dated later ({source.timestamp})"
                    )
                per_spender = self.spenders.setdefault(ref.source_tx, {})
                per_spender[tx.id] = per_spender.get(tx.id, 0) + ref.amount

    def __len__(self) -> int:
        return len(self.transactions)

    def __contains__(self, tx_id: str) -> bool:
        return tx_id in self.transactions

    def tx(self, tx_id: str) -> Transaction:
        try:
            return self.transactions[tx_id]
        except KeyError:
            raise DataError(f"unknown transaction id {tx_id!r}") from None

    def sorted_ids(self) -> list[str]:
        """Transaction ids ordered by (timestamp, id); deterministic."""
        return sorted(self.transactions, key=lambda i: (self.transactions[i].timestamp, i))

    def spending_txs(self, tx_id: str) -> list[tuple[str, int]]:
        """Transactions that consume outputs of tx_id, with summed amounts.

        Ordered by (timestamp, id) of the spender.
        """
        per_spender = self.spenders.get(tx_id, {})
        return sorted(
            per_spender.items(),
            key=lambda kv: (self.transactions[kv[0]].timestamp, kv[0]),
        )

    def source_txs(self, tx_id: str) -> list[tuple[str, int]]:
        """In-graph funding transactions of tx_id, with summed amounts."""
        tx = self.tx(tx_id)
        per_source: dict[str, int] = {}
        for ref in tx.inputs:
            if ref.source_tx in self.transactions:
                per_source[ref.source_tx] = per_source.get(ref.source_tx, 0) + ref.amount
        return sorted(
            per_source.items(),
            key=lambda kv: (self.transactions[kv[0]].timestamp, kv[0]),
        )


class AddressIndex:
    """Per-address transaction lists, time-ordered (ties by tx id)."""

    def __init__(self, receive_txs: dict[str, list[str]], spend_txs: dict[str, list[str]],
                 activation: dict[str, int]):
        self.receive_txs = receive_txs
        self.spend_txs = spend_txs
        self._activation = activation

    def addresses(self) -> list[str]:
        return sorted(set(self.receive_txs) | set(self.spend_txs))

    def receives(self, address: str) -> list[str]:
        return self.receive_txs.get(address, [])

    def spends(self, address: str) -> list[str]:
        return self.spend_txs.get(address, [])

    def activation(self, address: str) -> int | None:
        """Timestamp of the address's first on-chain appearance, if any."""
        return self._activation.get(address)


def _require(cond: bool, line_no: int, message: str) -> None:
    if not cond:
        raise DataError(f"line {line_no}: {message}")


def _as_amount(value: object, line_no: int, what: str) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool), line_no,
             f"{what} amount must be an integer, got {value!r}")
    _require(value >= 0, line_no, f"{what} amount must be non-negative, got {value}")
    return value


def parse_transaction(obj: dict, line_no: int = 0) -> Transaction:
    _require(isinstance(obj, dict), line_no, "transaction must be a JSON object")
    for key in ("id", "timestamp", "inputs", "outputs"):
        _require(key in obj, line_no, f"missing field {key!r}")
    _require(isinstance(obj["id"], str) and obj["id"] != "", line_no, "id must be a non-empty string")
    ts = obj["timestamp"]
    _require(isinstance(ts, int) and not isinstance(ts, bool), line_no, "timestamp must be an integer")
    _require(isinstance(obj["inputs"], list), line_no, "inputs must be a list")
    _require(isinstance(obj["outputs"], list), line_no, "outputs must be a list")
    _require(len(obj["outputs"]) > 0, line_no, "outputs must be non-empty")

    inputs = []
    for ref in obj["inputs"]:
        _require(isinstance(ref, dict), line_no, "input must be an object")
        for key in ("source_tx", "address", "amount"):
            _require(key in ref, line_no, f"input missing field {key!r}")
        _require(isinstance(ref["source_tx"], str) and ref["source_tx"] != "", line_no,
                 "input source_tx must be a non-empty string")
        _require(isinstance(ref["address"], str) and ref["address"] != "", line_no,
                 "input address must be a non-empty string")
        inputs.append(InputRef(ref["source_tx"], ref["address"], _as_amount(ref["amount"], line_no, "input")))

    outputs = []
    for ref in obj["outputs"]:
        _require(isinstance(ref, dict), line_no, "output must be an object")
        for key in ("address", "amount"):
            _require(key in ref, line_no, f"output missing field {key!r}")
        _require(isinstance(ref["address"], str) and ref["address"] != "", line_no,
                 "output address must be a non-empty string")
        outputs.append(OutputRef(ref["address"], _as_amount(ref["amount"], line_no, "output")))

    return Transaction(obj["id"], ts, tuple(inputs), tuple(outputs))


def load_transactions(path: str) -> TransactionGraph:
    """Parse a line-delimited JSON dump into a TransactionGraph.

    Raises DataError with a line number on the first malformed record.
    Duplicate ids and inputs dated before their funding transaction are
    rejected; dangling input references become external sources.
    """
    transactions = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {line_no}: invalid JSON ({exc.msg})") from None
            transactions.append(parse_transaction(obj, line_no))
    return TransactionGraph(transactions)


def build_address_index(graph: TransactionGraph) -> AddressIndex:
    receive: dict[str, set[str]] = {}
    spend: dict[str, set[str]] = {}
    for tx in graph.transactions.values():
        for ref in tx.outputs:
            receive.setdefault(ref.address, set()).add(tx.id)
        for ref in tx.inputs:
            spend.setdefault(ref.address, set()).add(tx.id)

    def ordered(ids: set[str]) -> list[str]:
        return sorted(ids, key=lambda i: (graph.transactions[i].timestamp, i))

    receive_txs = {addr: ordered(ids) for addr, ids in receive.items()}
    spend_txs = {addr: ordered(ids) for addr, ids in spend.items()}

    activation: dict[str, int] = {}
    for addr in set(receive_txs) | set(spend_txs):
        first = min(
            graph.transactions[i].timestamp
            for i in receive_txs.get(addr, []) + spend_txs.get(addr, [])
        )
        activation[addr] = first
    return AddressIndex(receive_txs, spend_txs, activation)


def _largest_remainder(quotas: list[tuple[int, int]], total: int) -> list[int]:
    """Turn (floor, remainder) quotas into integers summing to total.

    Leftover units go to the largest remainders, ties to the lowest index.
    """
    base = [q[0] for q in quotas]
    leftover = total - sum(base)
    if leftover > 0:
        order = sorted(range(len(quotas)), key=lambda i: (-quotas[i][1], i))
        for i in order[:leftover]:
            base[i] += 1
    return base


def split_pairs(tx: Transaction) -> PairSplit:
    """Pro-rata split of a transaction's value across (input, output) pairs.

    The transferable total T = min(sum inputs, sum outputs) is first
    divided across inputs by their share, then each input's quota across
    outputs by output share, both with largest-remainder rounding. All
    arithmetic is integer-exact: pair amounts sum to T, and each input's
    row sums to its quota. The fee (sum inputs - sum outputs, when
    positive) is recorded and excluded from the pairs.
    """
    total_in = tx.total_input
    total_out = tx.total_output
    fee = max(total_in - total_out, 0)
    if not tx.inputs or total_in == 0 or total_out == 0:
        return PairSplit(pairs=[], fee=fee, degenerate=True)

    transfer = min(total_in, total_out)
    in_quota = _largest_remainder(
        [(ref.amount * transfer // total_in, (ref.amount * transfer) % total_in) for ref in tx.inputs],
        transfer,
    )

    pairs: list[TransactionPair] = []
    for i, in_ref in enumerate(tx.inputs):
        row = _largest_remainder(
            [(in_quota[i] * out.amount // total_out, (in_quota[i] * out.amount) % total_out)
             for out in tx.outputs],
            in_quota[i],
        )
        in_share = in_ref.amount / total_in
        for j, out_ref in enumerate(tx.outputs):
            pairs.append(TransactionPair(
                tx_id=tx.id,
                input_index=i,
                output_index=j,
                amount=row[j],
                input_share=in_share,
                output_share=out_ref.amount / total_out,
            ))
    return PairSplit(pairs=pairs, fee=fee, degenerate=False)


def transaction_pairs(tx: Transaction) -> list[TransactionPair]:
    """Pair list of split_pairs; empty (with the split marked degenerate)
    when either side's total is zero."""
    return split_pairs(tx).pairs
