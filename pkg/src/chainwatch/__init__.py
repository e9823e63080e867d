"""Early warning for malicious addresses on UTXO-style ledgers.

The package turns a raw transaction dump into hourly behaviour features,
asset-transfer-path statistics, a segmented status timeline per address,
and a survival-gated attention model that commits to a verdict as early
as the evidence allows.
"""

__version__ = "0.1.0"
