"""Human-readable run summary plus status n-gram contrasts.

An address's "intention sequence" is its status-id sequence truncated at
the segment where the survival stream died; addresses whose survival
never collapsed keep the full sequence. The n-gram tables contrast how
often short status motifs occur in malicious versus regular sequences,
using per-class frequencies so unequal class sizes do not drown the
smaller side.
"""

from __future__ import annotations

from collections import Counter

from .synth import LabelRow

NGRAM_SIZES = (1, 2, 3)
TOP_K = 10


def intention_sequence(status_ids: list[int], rows: list[tuple[int, int, float, float]],
                       t_die: int | None) -> list[int]:
    """Truncate at the segment whose score hour matches the death hour."""
    if t_die is None:
        return list(status_ids)
    kept = [sid for sid, row in zip(status_ids, rows) if row[1] <= t_die]
    return kept if kept else list(status_ids[:1])


def ngram_frequencies(sequences: list[list[int]], n: int) -> dict[tuple, float]:
    counts: Counter = Counter()
    for seq in sequences:
        for i in range(len(seq) - n + 1):
            counts[tuple(seq[i:i + n])] += 1
    total = sum(counts.values())
    if total == 0:
        return {}
    return {gram: c / total for gram, c in counts.items()}


def ngram_diffs(malicious: list[list[int]], regular: list[list[int]],
                n: int, top_k: int = TOP_K) -> list[tuple[tuple, float, float, float]]:
    """(gram, malicious freq, regular freq, diff), largest |diff| first.

    Ties break on the gram itself so output order is reproducible.
    """
    freq_mal = ngram_frequencies(malicious, n)
    freq_reg = ngram_frequencies(regular, n)
    rows = []
    for gram in set(freq_mal) | set(freq_reg):
        m = freq_mal.get(gram, 0.0)
        r = freq_reg.get(gram, 0.0)
        rows.append((gram, m, r, m - r))
    rows.sort(key=lambda row: (-abs(row[3]), row[0]))
    return rows[:top_k]


def _gram_text(gram: tuple) -> str:
    return "-".join(str(g) for g in gram)


def render_report(predictions: dict, stream: dict, statuses: dict,
                  labels: list[LabelRow]) -> str:
    lines = ["Early malicious address report",
             "==============================", ""]
    if not predictions:
        lines.append("no predictions to report")
        lines.append("")
        return "\n".join(lines)

    rows = [r for r in labels if r.address in predictions]
    n_malicious = sum(r.label for r in rows)
    n_flagged = sum(1 for r in rows if stream[r.address]["verdict"] == 1)
    lines.append(f"addresses: {len(rows)}  malicious: {n_malicious}  "
                 f"flagged: {n_flagged}")
    lines.append("")

    lines.append(f"{'address':<24} {'label':>5} {'verdict':>7} {'final_y':>8} "
                 f"{'t_die':>6} {'t_fc':>5}  intention")
    intentions = {}
    for r in rows:
        s = stream[r.address]
        seq = intention_sequence(statuses.get(r.address, []),
                                 predictions[r.address], s["t_die"])
        intentions[r.address] = seq
        t_die = "-" if s["t_die"] is None else str(s["t_die"])
        lines.append(f"{r.address:<24} {r.label:>5} {s['verdict']:>7} "
                     f"{s['final_y']:>8.4f} {t_die:>6} {s['t_fc']:>5}  "
                     f"{_gram_text(tuple(seq))}")
    lines.append("")

    malicious = [intentions[r.address] for r in rows if r.label == 1]
    regular = [intentions[r.address] for r in rows if r.label == 0]
    for n in NGRAM_SIZES:
        lines.append(f"{n}-gram frequency diff (malicious - regular), "
                     f"top {TOP_K} by size")
        table = ngram_diffs(malicious, regular, n)
        if not table:
            lines.append("  (no sequences long enough)")
        else:
            lines.append(f"  {'motif':<16} {'malicious':>10} {'regular':>10} "
                         f"{'diff':>10}")
            for gram, m, r, diff in table:
                lines.append(f"  {_gram_text(gram):<16} {m:>10.4f} {r:>10.4f} "
                             f"{diff:>+10.4f}")
        lines.append("")
    return "\n".join(lines)
