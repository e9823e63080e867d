import numpy as np
import pytest

from chainwatch.pathtrace import (
    PathConfig,
    backward_paths,
    build_expansion_tree,
    export_dot,
    extract_path_sets,
    forward_paths,
    influence_pairs,
    st_threshold,
    st_threshold_literal,
    trust_pairs,
    write_paths_csv,
)
from chainwatch.txgraph import build_address_index

from conftest import graph_of, make_tx
from oracles import chains_of, enumerate_transfer_chains, random_ledger

YEAR = 365 * 86400


def test_influence_and_trust_pairs():
    tx = make_tx(
        "t", 1,
        inputs=[("s1", "i1", 500), ("s2", "i2", 7000), ("s3", "i3", 2500)],
        outputs=[("o1", 2000), ("o2", 7000), ("o3", 1000)],
    )
    assert influence_pairs(tx, 0.5) == [(1, 0.7)]
    assert trust_pairs(tx, 0.5) == [(1, 0.7)]
    assert influence_pairs(tx, 0.25) == [(1, 0.7), (2, 0.25)]
    assert trust_pairs(tx, 0.05) == [(0, 0.2), (1, 0.7), (2, 0.1)]
    coinbase = make_tx("cb", 1, outputs=[("a", 5)])
    assert influence_pairs(coinbase, 0.0) == []


def test_st_threshold_schedule():
    assert st_threshold_literal(0) == 0.0
    assert st_threshold_literal(1) == 0.0
    assert st_threshold_literal(2) == 0.9
    assert st_threshold_literal(7) == 0.9
    assert st_threshold(0) == 0.1
    assert st_threshold(1) == 0.1
    assert st_threshold(2) == 0.9
    assert st_threshold(7) == 0.9
    assert st_threshold(0, floor=0.2) == 0.2


def chain_graph():
    """cb -> t1 -> t2 -> t3, full value forwarded each step."""
    return graph_of(
        make_tx("cb", 100, outputs=[("a", 100)]),
        make_tx("t1", 200, inputs=[("cb", "a", 100)], outputs=[("b", 100)]),
        make_tx("t2", 300, inputs=[("t1", "b", 100)], outputs=[("c", 100)]),
        make_tx("t3", 400, inputs=[("t2", "c", 100)], outputs=[("d", 100)]),
    )


def test_backward_returns_only_maximal_chain():
    graph = chain_graph()
    paths = backward_paths(graph, "t3", 0.5, YEAR)
    assert len(paths) == 1
    path = paths[0]
    assert path.tx_ids == ("t3", "t2", "t1", "cb")
    assert [h.score for h in path.hops] == [1.0, 1.0, 1.0, 1.0]
    assert path.hops[0].predecessor_tx is None
    assert path.hops[1].predecessor_tx == "t3"
    assert path.height == 3


def test_forward_mirrors_backward():
    graph = chain_graph()
    paths = forward_paths(graph, "cb", 0.5, YEAR)
    assert len(paths) == 1
    assert paths[0].tx_ids == ("cb", "t1", "t2", "t3")

    clipped = forward_paths(graph, "cb", 0.5, YEAR, as_of=300)
    assert clipped[0].tx_ids == ("cb", "t1", "t2")


def test_cumulative_score_prunes_weak_branches():
    graph = graph_of(
        make_tx("m5", 10, outputs=[("x", 90)]),
        make_tx("m6", 11, outputs=[("x", 10)]),
        make_tx("m3", 20, inputs=[("m5", "x", 90), ("m6", "x", 10)], outputs=[("y", 100)]),
        make_tx("m4", 21, outputs=[("y", 25)]),
        make_tx("m1", 30, inputs=[("m3", "y", 80), ("m4", "y", 20)], outputs=[("z", 100)]),
        make_tx("m2", 31, outputs=[("z", 12)]),
        make_tx("o", 40, inputs=[("m1", "z", 90), ("m2", "z", 10)], outputs=[("w", 100)]),
    )
    paths = backward_paths(graph, "o", 0.5, YEAR)
    assert len(paths) == 1
    scores = [h.score for h in paths[0].hops]
    assert scores == pytest.approx([1.0, 0.9, 0.72, 0.648])
    assert paths[0].tx_ids == ("o", "m1", "m3", "m5")


def test_span_boundary_inclusive_relative_to_origin():
    graph = graph_of(
        make_tx("far", 0, outputs=[("a", 10)]),
        make_tx("o", 1000, inputs=[("far", "a", 10)], outputs=[("b", 10)]),
    )
    assert len(backward_paths(graph, "o", 0.5, span=1000)[0].hops) == 2
    assert len(backward_paths(graph, "o", 0.5, span=999)[0].hops) == 1


def test_coinbase_origin_single_hop():
    graph = graph_of(make_tx("cb", 5, outputs=[("a", 1)]))
    paths = backward_paths(graph, "cb", 0.5, YEAR)
    assert len(paths) == 1
    assert paths[0].tx_ids == ("cb",)
    assert paths[0].height == 0


def test_equal_timestamp_cycle_terminates():
    graph = graph_of(
        make_tx("a", 10, inputs=[("b", "x", 5)], outputs=[("y", 5)]),
        make_tx("b", 10, inputs=[("a", "y", 5)], outputs=[("x", 5)]),
    )
    paths = backward_paths(graph, "a", 0.5, YEAR)
    assert len(paths) == 1
    assert paths[0].tx_ids == ("a", "b")


def test_external_sources_never_expand():
    graph = graph_of(
        make_tx("o", 10, inputs=[("ghost", "a", 60), ("real", "b", 40)], outputs=[("c", 100)]),
        make_tx("real", 5, outputs=[("b", 40)]),
    )
    paths = backward_paths(graph, "o", 0.3, YEAR)
    assert chains_of(paths) == {(("o", 1.0), ("real", 0.4))}


def test_branch_cap_truncates_deterministically():
    graph = graph_of(
        make_tx("s1", 1, outputs=[("a", 50)]),
        make_tx("s2", 2, outputs=[("a", 30)]),
        make_tx("s3", 3, outputs=[("a", 20)]),
        make_tx("o", 10, inputs=[("s1", "a", 50), ("s2", "a", 30), ("s3", "a", 20)],
                outputs=[("b", 100)]),
    )
    full = backward_paths(graph, "o", 0.1, YEAR, branch_cap=64)
    assert len(full) == 3
    assert not full[0].truncated

    capped = backward_paths(graph, "o", 0.1, YEAR, branch_cap=2)
    assert len(capped) == 2
    assert all(p.truncated for p in capped)
    kept = {p.tx_ids[-1] for p in capped}
    assert kept == {"s1", "s2"}


def test_lt_branching_is_at_most_two():
    rng = np.random.default_rng(7)
    for _ in range(30):
        graph = random_ledger(rng, max_tx=40)
        for origin in graph.sorted_ids():
            tree = build_expansion_tree(graph, origin, "backward", 0.5, YEAR)
            for node in tree.nodes:
                assert len(node.children) <= 2


@pytest.mark.parametrize("direction", ["backward", "forward"])
def test_matches_exhaustive_enumeration(direction):
    rng = np.random.default_rng(2024)
    thetas = [0.12, 0.3, 0.5, st_threshold]
    for trial in range(60):
        graph = random_ledger(rng)
        theta = thetas[trial % len(thetas)]
        span = int(rng.integers(1, 800))
        as_of = int(rng.integers(0, 700)) if (direction == "forward" and trial % 2) else None
        theta_fn = theta if callable(theta) else (lambda h, t=theta: t)
        for origin in graph.sorted_ids():
            if direction == "backward":
                got = backward_paths(graph, origin, theta, span, branch_cap=10**9)
            else:
                got = forward_paths(graph, origin, theta, span, as_of=as_of, branch_cap=10**9)
            want = enumerate_transfer_chains(graph, origin, direction, theta_fn, span,
                                             as_of=as_of if direction == "forward" else None)
            assert chains_of(got) == want


def test_scores_non_increasing_along_paths():
    rng = np.random.default_rng(99)
    for _ in range(20):
        graph = random_ledger(rng)
        for origin in graph.sorted_ids()[:10]:
            for path in backward_paths(graph, origin, 0.2, YEAR):
                scores = [h.score for h in path.hops]
                assert scores[0] == 1.0
                assert all(a >= b for a, b in zip(scores, scores[1:]))
                assert all(0.0 < s <= 1.0 for s in scores)


def fixture_for_sets():
    graph = graph_of(
        make_tx("fund", 0, outputs=[("payer", 100)]),
        make_tx("r1", 3600, inputs=[("fund", "payer", 100)], outputs=[("addr", 100)]),
        make_tx("sp1", 7200, inputs=[("r1", "addr", 100)], outputs=[("sink", 100)]),
        make_tx("hop", 10800, inputs=[("sp1", "sink", 100)], outputs=[("sink2", 100)]),
    )
    return graph, build_address_index(graph)


def test_extract_path_sets_shapes_and_as_of():
    graph, index = fixture_for_sets()
    sets = extract_path_sets(graph, index, "addr", as_of=20000)
    assert set(sets) == {"LT-BK", "ST-BK", "LT-FR", "ST-FR"}
    assert len(sets["LT-BK"].paths) == 1
    assert sets["LT-BK"].paths[0].tx_ids == ("r1", "fund")
    assert sets["LT-FR"].paths[0].tx_ids == ("sp1", "hop")

    early = extract_path_sets(graph, index, "addr", as_of=3600)
    assert len(early["LT-BK"].paths) == 1          # r1 received already
    assert len(early["LT-FR"].paths) == 0          # sp1 not yet seen
    mid = extract_path_sets(graph, index, "addr", as_of=7200)
    assert mid["LT-FR"].paths[0].tx_ids == ("sp1",)  # hop still in the future


def test_extract_path_sets_deterministic():
    graph, index = fixture_for_sets()
    a = extract_path_sets(graph, index, "addr", as_of=20000)
    b = extract_path_sets(graph, index, "addr", as_of=20000)
    assert {k: [p.tx_ids for p in v.paths] for k, v in a.items()} == \
           {k: [p.tx_ids for p in v.paths] for k, v in b.items()}


def test_tree_recut_matches_direct_trace():
    rng = np.random.default_rng(5)
    for _ in range(25):
        graph = random_ledger(rng, max_tx=35)
        for origin in graph.sorted_ids()[:8]:
            tree = build_expansion_tree(graph, origin, "forward", 0.25, 400, branch_cap=10**9)
            for as_of in (graph.tx(origin).timestamp + off for off in (0, 50, 200, 400)):
                direct = forward_paths(graph, origin, 0.25, 400, as_of=as_of, branch_cap=10**9)
                assert chains_of(tree.paths(as_of)) == chains_of(direct)


def test_csv_and_dot_exports(tmp_path):
    graph, index = fixture_for_sets()
    sets = extract_path_sets(graph, index, "addr", as_of=20000)
    out = tmp_path / "paths.csv"
    write_paths_csv({"addr": sets}, str(out))
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "address,kind,path_index,hop_index,tx_id,score,truncated"
    row = lines[1].split(",")
    assert row[0] == "addr" and row[1] == "LT-BK"
    assert float(row[5]) == 1.0

    dot = export_dot(sets["LT-BK"])
    assert dot.startswith("digraph")
    assert '"fund" -> "r1"' in dot
