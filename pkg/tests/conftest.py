import json

import pytest

from chainwatch.txgraph import InputRef, OutputRef, Transaction, TransactionGraph


def make_tx(tx_id, ts, inputs=(), outputs=()):
    """Shorthand: inputs as (source_tx, address, amount), outputs as (address, amount)."""
    return Transaction(
        id=tx_id,
        timestamp=ts,
        inputs=tuple(InputRef(*ref) for ref in inputs),
        outputs=tuple(OutputRef(*ref) for ref in outputs),
    )


def graph_of(*txs):
    return TransactionGraph(list(txs))


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


@pytest.fixture
def tx_factory():
    return make_tx
