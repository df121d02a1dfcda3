import numpy as np
import pytest

from hyperfanout._constants._constants import ReportKeys
from hyperfanout.graph import BipartiteGraph, PartitionState
from hyperfanout.metrics import evaluate


def test_three_queries_report(three_queries: BipartiteGraph, three_queries_state: PartitionState) -> None:
    report = evaluate(three_queries, three_queries_state, p=0.5)
    assert report.k == 2
    assert (report.num_queries, report.num_data, report.num_edges) == (3, 6, 10)
    assert report.average_fanout == pytest.approx(5 / 3)
    assert report.p_fanout == pytest.approx(3.5 / 3)
    assert report.soed == 7
    assert report.weighted_edge_cut == 5
    assert report.hyperedge_cut == 2
    assert report.max_imbalance == 0.0
    assert report.bucket_sizes == (3, 3)


@pytest.mark.parametrize(
    "assignment,k,fanout,soed,cut",
    [
        ([0] * 6, 1, 1.0, 3, 0),
        (list(range(6)), 6, 10 / 3, 13, 12),
    ],
)
def test_extreme_partitions(
    three_queries: BipartiteGraph, assignment: list[int], k: int, fanout: float, soed: int, cut: int
) -> None:
    report = evaluate(three_queries, PartitionState.from_assignment(assignment, k))
    assert report.average_fanout == pytest.approx(fanout)
    assert report.soed == soed
    assert report.weighted_edge_cut == cut
    assert report.max_imbalance == pytest.approx(0.0)


def test_p_one_is_average_fanout(three_queries: BipartiteGraph) -> None:
    state = PartitionState.from_assignment([0, 1, 2, 0, 1, 2], 3)
    report = evaluate(three_queries, state, p=1.0)
    assert report.p_fanout == report.average_fanout


def test_relabeling_buckets_changes_nothing(three_queries: BipartiteGraph) -> None:
    state = PartitionState.from_assignment([0, 0, 1, 2, 2, 1], 3)
    relabeled = PartitionState.from_assignment(np.array([2, 0, 1])[state.bucket_of], 3)
    first, second = evaluate(three_queries, state).to_dict(), evaluate(three_queries, relabeled).to_dict()
    sizes = ReportKeys.BUCKET_SIZES.v
    assert sorted(first.pop(sizes)) == sorted(second.pop(sizes))
    assert first == second


def test_imbalance(three_queries: BipartiteGraph) -> None:
    report = evaluate(three_queries, PartitionState.from_assignment([0, 0, 0, 0, 1, 1], 2))
    assert report.max_imbalance == pytest.approx(4 / 3 - 1)


def test_report_keys(three_queries: BipartiteGraph, three_queries_state: PartitionState) -> None:
    report = evaluate(three_queries, three_queries_state).to_dict()
    assert list(report) == ReportKeys.values()
    assert report[ReportKeys.BUCKET_SIZES.v] == [3, 3]


def test_mismatched_partition(three_queries: BipartiteGraph) -> None:
    with pytest.raises(ValueError, match="partition covers"):
        evaluate(three_queries, PartitionState.from_assignment([0, 1], 2))
