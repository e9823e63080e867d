"""Asset-transfer path extraction.

Paths follow value through the transaction graph, backward to funding
transactions or forward to spending transactions. A hop from a parent
with cumulative score s to a neighbour carrying proportion p survives
when p * s clears the hop threshold and the neighbour lies within the
time span measured from the origin. Long-term tracing uses a constant
0.5 threshold over a one-year span; short-term tracing uses a per-hop
schedule over a one-day span.

Expansion is a tree: the same transaction may appear on different
branches with different scores, but never twice on one branch. Only
maximal root-to-leaf chains are reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .txgraph import AddressIndex, Transaction, TransactionGraph

DAY_SECONDS = 86_400
LT_THETA = 0.5
LT_SPAN = 365 * DAY_SECONDS
ST_SPAN = DAY_SECONDS
ST_FLOOR = 0.1
DEFAULT_BRANCH_CAP = 64

BACKWARD = "backward"
FORWARD = "forward"

PATH_SET_KINDS = ("LT-BK", "ST-BK", "LT-FR", "ST-FR")


def influence_pairs(tx: Transaction, theta: float) -> list[tuple[int, float]]:
    """Input positions whose share of total input value reaches theta."""
    total = tx.total_input
    if total == 0:
        return []
    return [(i, ref.amount / total) for i, ref in enumerate(tx.inputs)
            if ref.amount / total >= theta]


def trust_pairs(tx: Transaction, theta: float) -> list[tuple[int, float]]:
    """Output positions whose share of total output value reaches theta."""
    total = tx.total_output
    if total == 0:
        return []
    return [(j, ref.amount / total) for j, ref in enumerate(tx.outputs)
            if ref.amount / total >= theta]


def st_threshold_literal(h: int) -> float:
    """Unfloored short-term hop threshold: min(floor(h/2), 0.9)."""
    return min(float(h // 2), 0.9)


def st_threshold(h: int, floor: float = ST_FLOOR) -> float:
    """Short-term hop threshold with the working floor applied.

    The literal schedule starts at zero, which would admit every hop
    regardless of carried value; the floor keeps early hops selective
    while preserving the 0.9 plateau from h = 2 on.
    """
    return max(floor, st_threshold_literal(h))


@dataclass(frozen=True)
class PathHop:
    predecessor_tx: str | None
    score: float
    tx: str


@dataclass(frozen=True)
class TransferPath:
    origin: str
    direction: str
    hops: tuple[PathHop, ...]
    height: int
    truncated: bool

    @property
    def hop_count(self) -> int:
        return len(self.hops)

    @property
    def tx_ids(self) -> tuple[str, ...]:
        return tuple(h.tx for h in self.hops)


@dataclass
class PathSet:
    address: str
    kind: str
    as_of: int
    paths: list[TransferPath]
    truncated: bool


@dataclass
class PathConfig:
    lt_theta: float = LT_THETA
    lt_span: int = LT_SPAN
    st_span: int = ST_SPAN
    st_floor: float = ST_FLOOR
    branch_cap: int = DEFAULT_BRANCH_CAP


@dataclass
class _Node:
    tx: str
    score: float
    ts: int
    depth: int
    parent: int | None
    children: list[int] = field(default_factory=list)


class ExpansionTree:
    """Materialised trace from one origin; chains can be re-cut at any as_of.

    Node timestamps run backward in time for backward traces and forward
    for forward traces, so cutting at a timestamp removes whole subtrees
    and the remaining maximal chains match a direct bounded trace.
    """

    def __init__(self, origin: str, direction: str, nodes: list[_Node], truncated: bool):
        self.origin = origin
        self.direction = direction
        self.nodes = nodes
        self.truncated = truncated

    def node_count_at(self, as_of: int | None) -> int:
        if as_of is None:
            return len(self.nodes)
        # the origin is the caller's anchor; as_of bounds only the expansion
        return 1 + sum(1 for n in self.nodes[1:] if n.ts <= as_of)

    def paths(self, as_of: int | None = None) -> list[TransferPath]:
        if as_of is not None and self.direction == FORWARD:
            keep = [True] + [n.ts <= as_of for n in self.nodes[1:]]
        else:
            keep = [True] * len(self.nodes)

        height = 0
        live_leaf = list(keep)
        for idx, node in enumerate(self.nodes):
            if not keep[idx]:
                continue
            height = max(height, node.depth)
            if node.parent is not None:
                live_leaf[node.parent] = False

        paths = []
        for idx, node in enumerate(self.nodes):
            if not (keep[idx] and live_leaf[idx]):
                continue
            chain = []
            walk: int | None = idx
            while walk is not None:
                chain.append(self.nodes[walk])
                walk = self.nodes[walk].parent
            chain.reverse()
            hops = tuple(
                PathHop(
                    predecessor_tx=None if n.parent is None else self.nodes[n.parent].tx,
                    score=n.score,
                    tx=n.tx,
                )
                for n in chain
            )
            paths.append(TransferPath(
                origin=self.origin,
                direction=self.direction,
                hops=hops,
                height=height,
                truncated=self.truncated,
            ))
        return paths


def _as_theta_fn(theta):
    if callable(theta):
        return theta
    return lambda h: theta


def build_expansion_tree(
    graph: TransactionGraph,
    origin: str,
    direction: str,
    theta,
    span: int,
    as_of: int | None = None,
    branch_cap: int = DEFAULT_BRANCH_CAP,
) -> ExpansionTree:
    """Frontier expansion from one origin transaction.

    Round h expands every frontier node (all at depth h) through its
    neighbours; a candidate with cumulative score p * parent_score is
    kept when the score reaches theta(h), is positive, lies within span
    of the origin, and its transaction is not already on the branch.
    A round producing more than branch_cap candidates keeps the
    highest-scoring ones (ties to lowest tx id) and marks the tree
    truncated.
    """
    theta_fn = _as_theta_fn(theta)
    origin_tx = graph.tx(origin)
    nodes = [_Node(origin, 1.0, origin_tx.timestamp, 0, None)]
    frontier = [0]
    truncated = False
    h = 0
    while frontier:
        candidates = []  # (score, tx_id, parent_idx, ts)
        theta_h = theta_fn(h)
        for parent_idx in frontier:
            parent = nodes[parent_idx]
            if direction == BACKWARD:
                neighbours = graph.source_txs(parent.tx)
                denom = graph.tx(parent.tx).total_input
            else:
                neighbours = graph.spending_txs(parent.tx)
                denom = graph.tx(parent.tx).total_output
            if denom == 0:
                continue
            for nbr_id, amount in neighbours:
                nbr_ts = graph.tx(nbr_id).timestamp
                if direction == BACKWARD:
                    if origin_tx.timestamp - nbr_ts > span:
                        continue
                else:
                    if nbr_ts - origin_tx.timestamp > span:
                        continue
                    if as_of is not None and nbr_ts > as_of:
                        continue
                score = (amount / denom) * parent.score
                if score <= 0.0 or score < theta_h:
                    continue
                walk: int | None = parent_idx
                on_branch = False
                while walk is not None:
                    if nodes[walk].tx == nbr_id:
                        on_branch = True
                        break
                    walk = nodes[walk].parent
                if on_branch:
                    continue
                candidates.append((score, nbr_id, parent_idx, nbr_ts))

        if len(candidates) > branch_cap:
            truncated = True
            candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
            candidates = candidates[:branch_cap]
            candidates.sort(key=lambda c: (c[2], c[1]))

        frontier = []
        for score, nbr_id, parent_idx, nbr_ts in candidates:
            nodes.append(_Node(nbr_id, score, nbr_ts, nodes[parent_idx].depth + 1, parent_idx))
            nodes[parent_idx].children.append(len(nodes) - 1)
            frontier.append(len(nodes) - 1)
        h += 1
    return ExpansionTree(origin, direction, nodes, truncated)


def backward_paths(graph, origin, theta, span, as_of=None, branch_cap=DEFAULT_BRANCH_CAP):
    """Maximal funding chains ending at the origin transaction."""
    return build_expansion_tree(graph, origin, BACKWARD, theta, span, as_of, branch_cap).paths()


def forward_paths(graph, origin, theta, span, as_of=None, branch_cap=DEFAULT_BRANCH_CAP):
    """Maximal spending chains starting at the origin transaction."""
    tree = build_expansion_tree(graph, origin, FORWARD, theta, span, as_of, branch_cap)
    return tree.paths(as_of)


def extract_path_sets(
    graph: TransactionGraph,
    index: AddressIndex,
    address: str,
    as_of: int,
    cfg: PathConfig | None = None,
) -> dict[str, PathSet]:
    """The four path sets of an address at a point in time.

    Backward sets originate from every receive transaction up to as_of,
    forward sets from every spend transaction up to as_of; forward
    tracing never looks past as_of.
    """
    cfg = cfg or PathConfig()
    st_fn = lambda h: st_threshold(h, cfg.st_floor)  # noqa: E731

    def origins(tx_ids):
        return [t for t in tx_ids if graph.tx(t).timestamp <= as_of]

    specs = {
        "LT-BK": (origins(index.receives(address)), BACKWARD, cfg.lt_theta, cfg.lt_span),
        "ST-BK": (origins(index.receives(address)), BACKWARD, st_fn, cfg.st_span),
        "LT-FR": (origins(index.spends(address)), FORWARD, cfg.lt_theta, cfg.lt_span),
        "ST-FR": (origins(index.spends(address)), FORWARD, st_fn, cfg.st_span),
    }
    result = {}
    for kind, (origin_ids, direction, theta, span) in specs.items():
        paths: list[TransferPath] = []
        truncated = False
        for origin in origin_ids:
            tree = build_expansion_tree(graph, origin, direction, theta, span,
                                        as_of=as_of, branch_cap=cfg.branch_cap)
            paths.extend(tree.paths(as_of))
            truncated = truncated or tree.truncated
        result[kind] = PathSet(address=address, kind=kind, as_of=as_of,
                               paths=paths, truncated=truncated)
    return result


def write_paths_csv(path_sets: dict[str, dict[str, PathSet]], out_path: str) -> None:
    """One row per hop: address, kind, path_index, hop_index, tx_id, score, truncated."""
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("address,kind,path_index,hop_index,tx_id,score,truncated\n")
        for address in sorted(path_sets):
            sets = path_sets[address]
            for kind in PATH_SET_KINDS:
                if kind not in sets:
                    continue
                for p_idx, path in enumerate(sets[kind].paths):
                    for h_idx, hop in enumerate(path.hops):
                        fh.write(f"{address},{kind},{p_idx},{h_idx},{hop.tx},"
                                 f"{hop.score!r},{int(path.truncated)}\n")


def export_dot(path_set: PathSet) -> str:
    """Graphviz rendering of one path set; edges labelled with hop scores."""
    lines = [f'digraph "{path_set.kind}_{path_set.address}" {{']
    seen = set()
    for path in path_set.paths:
        for hop in path.hops:
            if hop.predecessor_tx is None:
                continue
            if path.direction == BACKWARD:
                edge = (hop.tx, hop.predecessor_tx)
            else:
                edge = (hop.predecessor_tx, hop.tx)
            key = (edge, round(hop.score, 12))
            if key in seen:
                continue
            seen.add(key)
            lines.append(f'  "{edge[0]}" -> "{edge[1]}" [label="{hop.score:.4f}"];')
    lines.append("}")
    return "\n".join(lines)
