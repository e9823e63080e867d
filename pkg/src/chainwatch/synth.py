"""Synthetic UTXO activity generator.

Six address archetypes with distinct structural signatures:

  hack       one huge many-input deposit at activation, dormant, then a
             bulk spend within a day
  ransomware brisk stream of small victim payments, then one
             consolidation spend of every received output
  darknet    steady small inflow around the clock with periodic sweeps
  exchange   high-volume balanced in/out platform flow from hour one
  merchant   sparse small receives with occasional batched spends
  background mostly-idle wallets, a handful of transfers

The first three are labeled malicious. Every malicious address has a
scripted bulk-transfer hour recorded in the label file so earliness can
be scored against it. All draws come from one seeded generator; a given
spec always produces byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

DEFAULT_EPOCH = 1609459200  # 2021-01-01 00:00:00 UTC
HOUR = 3600

MALICIOUS_ARCHETYPES = ("hack", "ransomware", "darknet")
REGULAR_ARCHETYPES = ("exchange", "merchant", "background")
ARCHETYPES = MALICIOUS_ARCHETYPES + REGULAR_ARCHETYPES


@dataclass
class SynthSpec:
    hack: int = 0
    ransomware: int = 0
    darknet: int = 0
    exchange: int = 0
    merchant: int = 0
    background: int = 0
    seed: int = 0
    epoch: int = DEFAULT_EPOCH
    horizon_hours: int = 200
    activation_window_hours: int = 48

    def counts(self) -> dict[str, int]:
        return {name: getattr(self, name) for name in ARCHETYPES}

    def validate(self):
        for name, n in self.counts().items():
            if n < 0:
                raise DataError(f"negative count for archetype {name!r}")
        if self.horizon_hours < 1:
            raise DataError("horizon must be at least one hour")

    def to_json(self) -> dict:
        return {
            **self.counts(),
            "seed": self.seed,
            "epoch": self.epoch,
            "horizon_hours": self.horizon_hours,
            "activation_window_hours": self.activation_window_hours,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SynthSpec":
        try:
            return cls(**{k: int(v) for k, v in obj.items()})
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed synth spec: {exc}") from None


@dataclass(frozen=True)
class LabelRow:
    address: str
    label: int
    archetype: str
    bulk_hour: int  # -1 when the archetype has no scripted transfer


@dataclass
class SynthResult:
    transactions: list[dict] = field(default_factory=list)
    labels: list[LabelRow] = field(default_factory=list)


class _Mint:
    """Sequential ids for transactions and throwaway counterparties."""

    def __init__(self):
        self.tx_n = 0
        self.ext_n = 0

    def tx(self) -> str:
        self.tx_n += 1
        return f"t{self.tx_n:07d}"

    def ext(self) -> str:
        self.ext_n += 1
        return f"ext{self.ext_n:06d}"


def _split_total(rng, total: int, n: int) -> list[int]:
    """Split total into n positive integers. Totals run into the billions,
    so cut points are sampled directly instead of through a choice array."""
    n = max(1, min(n, total))
    cuts: set[int] = set()
    while len(cuts) < n - 1:
        cuts.update(int(c) for c in rng.integers(1, total, size=n - 1 - len(cuts)))
    bounds = np.concatenate([[0], np.sort(np.fromiter(cuts, dtype=np.int64, count=n - 1)), [total]])
    return [int(a) for a in np.diff(bounds)]


def _external_inputs(mint: _Mint, rng, total: int, n: int) -> list[dict]:
    """n dangling input refs summing exactly to total."""
    return [{"source_tx": f"s{mint.ext()}", "address": mint.ext(),
             "amount": a} for a in _split_total(rng, total, n)]


def _emit(result: SynthResult, mint: _Mint, timestamp: int, inputs: list[dict],
          outputs: list[dict]) -> str:
    tx_id = mint.tx()
    result.transactions.append({
        "id": tx_id,
        "timestamp": int(timestamp),
        "inputs": inputs,
        "outputs": outputs,
    })
    return tx_id


def _fund(result, mint, rng, address: str, amount: int, ts: int,
          n_inputs: int = 1, with_change: bool = False) -> str:
    """One payment of `amount` to `address` funded by external sources."""
    change = int(rng.integers(amount // 10, amount // 2)) if with_change else 0
    inputs = _external_inputs(mint, rng, amount + change, n_inputs)
    outputs = [{"address": address, "amount": int(amount)}]
    if change:
        outputs.append({"address": mint.ext(), "amount": change})
    return _emit(result, mint, ts, inputs, outputs)


def _chained_payment(result, mint, rng, address: str, amount: int, ts: int) -> str:
    """Victim-wallet chain: external funds a wallet, the wallet pays in."""
    wallet = mint.ext()
    held = amount + int(rng.integers(amount // 20, amount // 3))
    wallet_tx = _emit(result, mint, ts - int(rng.integers(600, 7200)),
                      _external_inputs(mint, rng, held, int(rng.integers(1, 4))),
                      [{"address": wallet, "amount": held}])
    outputs = [{"address": address, "amount": int(amount)},
               {"address": mint.ext(), "amount": held - amount}]
    return _emit(result, mint, ts,
                 [{"source_tx": wallet_tx, "address": wallet, "amount": held}],
                 outputs)


def _spend_all(result, mint, rng, address: str, utxos: list[tuple[str, int]],
               ts: int, n_outputs: int = 1) -> str:
    total = sum(a for _, a in utxos)
    inputs = [{"source_tx": tx, "address": address, "amount": int(a)}
              for tx, a in utxos]
    if n_outputs <= 1 or total < 2 * n_outputs:
        outputs = [{"address": mint.ext(), "amount": int(total)}]
    else:
        outputs = [{"address": mint.ext(), "amount": a}
                   for a in _split_total(rng, total, n_outputs)]
    return _emit(result, mint, ts, inputs, outputs)


# ------------------------------------------------------------- archetypes

def _gen_hack(result, mint, rng, address: str, t0: int) -> int:
    total = int(rng.integers(2_000_000_000, 8_000_000_000))
    n_inputs = int(rng.integers(40, 72))
    deposit = _fund(result, mint, rng, address, total, t0, n_inputs=n_inputs)
    bulk_hour = int(rng.integers(12, 24))
    _spend_all(result, mint, rng, address, [(deposit, total)],
               t0 + bulk_hour * HOUR + int(rng.integers(0, 1800)),
               n_outputs=int(rng.integers(3, 7)))
    return bulk_hour


def _gen_ransomware(result, mint, rng, address: str, t0: int) -> int:
    bulk_hour = int(rng.integers(30, 90))
    n_payments = int(rng.integers(25, 46))
    last_pay = bulk_hour - int(rng.integers(3, 8))
    hours = np.sort(rng.uniform(0, last_pay, size=n_payments))
    # one demanded amount per campaign; victims pay within a few percent
    demand = int(rng.integers(3_000_000, 30_000_000))
    utxos = []
    for i, h in enumerate(hours):
        amount = int(demand * rng.uniform(0.95, 1.05))
        # first payment exactly at t0 so labeled hours share the
        # activation-relative clock the feature rows use
        ts = t0 if i == 0 else t0 + int(h * HOUR) + int(rng.integers(0, 900))
        utxos.append((_chained_payment(result, mint, rng, address, amount, ts),
                      amount))
    _spend_all(result, mint, rng, address, utxos,
               t0 + bulk_hour * HOUR + int(rng.integers(0, 1800)))
    return bulk_hour


def _gen_darknet(result, mint, rng, address: str, t0: int, horizon: int) -> int:
    first_sweep = int(rng.integers(18, 31))
    rate = rng.uniform(0.35, 0.7)  # payments per hour
    # anchor receive pins activation to t0
    first_amount = int(rng.integers(100_000, 5_000_000))
    utxos = [(_chained_payment(result, mint, rng, address, first_amount, t0),
              first_amount, t0)]
    sweep_at = first_sweep
    hour = 0.0
    while True:
        hour += rng.exponential(1.0 / rate)
        if hour >= horizon:
            break
        while hour >= sweep_at:
            if utxos:
                ts = t0 + sweep_at * HOUR + int(rng.integers(0, 1200))
                ts = max(ts, max(u[2] for u in utxos) + 60)
                _spend_all(result, mint, rng, address,
                           [(tx, a) for tx, a, _ in utxos], ts)
                utxos = []
            sweep_at += int(rng.integers(20, 31))
        amount = int(rng.integers(100_000, 5_000_000))
        ts = t0 + int(hour * HOUR) + int(rng.integers(0, 600))
        # buyers pay out of throwaway wallets, never straight from source
        utxos.append((_chained_payment(result, mint, rng, address, amount, ts),
                      amount, ts))
    return first_sweep


def _gen_exchange(result, mint, rng, address: str, t0: int, horizon: int):
    n_recv = int(rng.integers(50, 90))
    # onboarding is busier than steady state, so deposits lean early
    recv_hours = np.sort((horizon - 1) * rng.uniform(0, 1, size=n_recv) ** 1.5)
    recv_hours[0] = 0.0
    # a minority onboard through wallet-chained retail deposits for the
    # first few hours before the usual batch flow takes over
    flash_until = rng.uniform(5.0, 9.0) if rng.random() < 0.09 else -1.0
    if flash_until > 0:
        burst = rng.uniform(0, flash_until, size=int(rng.integers(4, 9)))
        recv_hours = np.sort(np.concatenate([recv_hours, burst]))
    utxos = []
    next_spend = rng.uniform(1.0, 3.0)
    for h in recv_hours:
        ts = t0 + int(h * HOUR) + int(rng.integers(0, 600))
        if h < flash_until:
            amount = int(rng.integers(100_000, 5_000_000))
            tx = _chained_payment(result, mint, rng, address, amount, ts)
        else:
            amount = int(rng.integers(1_000_000, 900_000_000))
            # customer deposits arrive through shared batch transactions
            batch_extra = int(rng.integers(500_000, 50_000_000))
            inputs = _external_inputs(mint, rng, amount + batch_extra,
                                      int(rng.integers(1, 4)))
            tx = _emit(result, mint, ts, inputs,
                       [{"address": address, "amount": amount},
                        {"address": mint.ext(), "amount": batch_extra}])
        utxos.append((tx, amount, ts))
        while len(utxos) >= 2 and h >= next_spend:
            take = [u for u in utxos[:int(rng.integers(1, 3))]]
            utxos = utxos[len(take):]
            spend_ts = t0 + int(next_spend * HOUR) + int(rng.integers(0, 600))
            spend_ts = max(spend_ts, max(u[2] for u in take) + 60)
            _spend_all(result, mint, rng, address,
                       [(tx, a) for tx, a, _ in take], spend_ts,
                       n_outputs=int(rng.integers(1, 3)))
            next_spend += rng.uniform(1.5, 5.0)


def _gen_merchant(result, mint, rng, address: str, t0: int, horizon: int):
    n_recv = int(rng.integers(15, 46))
    recv_hours = np.sort(rng.uniform(0, horizon - 1, size=n_recv))
    recv_hours[0] = 0.0
    utxos = []
    settle_at = rng.uniform(60, 90)
    for h in recv_hours:
        amount = int(rng.integers(50_000, 2_000_000))
        ts = t0 + int(h * HOUR) + int(rng.integers(0, 1800))
        utxos.append((_fund(result, mint, rng, address, amount, ts,
                            with_change=True), amount, ts))
        if h >= settle_at and len(utxos) >= 3:
            spend_ts = t0 + int(settle_at * HOUR) + int(rng.integers(0, 3600))
            spend_ts = max(spend_ts, max(u[2] for u in utxos) + 60)
            _spend_all(result, mint, rng, address,
                       [(tx, a) for tx, a, _ in utxos], spend_ts)
            utxos = []
            settle_at += rng.uniform(50, 90)


def _gen_background(result, mint, rng, address: str, t0: int, horizon: int):
    n_recv = int(rng.integers(1, 5))
    hours = np.sort(rng.uniform(0, horizon - 1, size=n_recv))
    hours[0] = 0.0
    utxos = []
    for h in hours:
        amount = int(rng.integers(20_000, 5_000_000))
        ts = t0 + int(h * HOUR) + int(rng.integers(0, 1800))
        utxos.append((_fund(result, mint, rng, address, amount, ts), amount, ts))
    if rng.random() < 0.5 and utxos:
        last_ts = max(u[2] for u in utxos)
        spend_ts = last_ts + int(rng.integers(HOUR, 40 * HOUR))
        _spend_all(result, mint, rng, address,
                   [(tx, a) for tx, a, _ in utxos], spend_ts)


# ------------------------------------------------------------- entry point

def generate(spec: SynthSpec) -> SynthResult:
    spec.validate()
    rng = np.random.default_rng([spec.seed, 0x5eed])
    mint = _Mint()
    result = SynthResult()

    for archetype in ARCHETYPES:
        for i in range(spec.counts()[archetype]):
            address = f"{archetype}_{i:04d}"
            t0 = spec.epoch + int(rng.integers(0, spec.activation_window_hours * HOUR))
            bulk_hour = -1
            if archetype == "hack":
                bulk_hour = _gen_hack(result, mint, rng, address, t0)
            elif archetype == "ransomware":
                bulk_hour = _gen_ransomware(result, mint, rng, address, t0)
            elif archetype == "darknet":
                bulk_hour = _gen_darknet(result, mint, rng, address, t0,
                                         spec.horizon_hours)
            elif archetype == "exchange":
                _gen_exchange(result, mint, rng, address, t0, spec.horizon_hours)
            elif archetype == "merchant":
                _gen_merchant(result, mint, rng, address, t0, spec.horizon_hours)
            else:
                _gen_background(result, mint, rng, address, t0, spec.horizon_hours)
            label = 1 if archetype in MALICIOUS_ARCHETYPES else 0
            result.labels.append(LabelRow(address, label, archetype, bulk_hour))

    result.transactions.sort(key=lambda tx: (tx["timestamp"], tx["id"]))
    return result


def write_transactions_jsonl(transactions: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tx in transactions:
            fh.write(json.dumps(tx, sort_keys=True) + "\n")


def write_labels_csv(labels: list[LabelRow], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("address,label,archetype,bulk_hour\n")
        for row in labels:
            fh.write(f"{row.address},{row.label},{row.archetype},{row.bulk_hour}\n")


def load_labels_csv(path) -> list[LabelRow]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "address,label,archetype,bulk_hour":
            raise DataError(f"label file {str(path)!r} has unexpected columns")
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise DataError(f"label file line {line_no}: expected 4 fields")
            try:
                rows.append(LabelRow(parts[0], int(parts[1]), parts[2],
                                     int(parts[3])))
            except ValueError as exc:
                raise DataError(f"label file line {line_no}: {exc}") from None
    return rows


def write_synth(spec: SynthSpec, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    generated = generate(spec)
    tx_path = out / "transactions.jsonl"
    label_path = out / "labels.csv"
    write_transactions_jsonl(generated.transactions, tx_path)
    write_labels_csv(generated.labels, label_path)
    return tx_path, label_path
