import pytest

from src.models.plan_models import get_plan
from src.services.evaluation_service import evaluate_plans, plan_report
from src.services.container import compress
from src.utils.output_handler import OutputEventType, create_custom_output_handler


def test_order1_beats_order0_on_markov_source(markov_dataset):
    report = evaluate_plans(markov_dataset, [get_plan("order0"), get_plan("order1")], seed=0, threads=1)

    assert [row.plan for row in report.rows] == ["order0", "order1"]
    assert report.best == "order1"
    assert [row.selected for row in report.rows] == [False, True]
    assert report.rows[1].total_bpv < report.rows[0].total_bpv
    assert report.symbols == markov_dataset.total_symbols


def test_missing_qualities_are_skipped(markov_dataset):
    report = evaluate_plans(markov_dataset, [get_plan("default")], seed=0, threads=1)

    row = report.rows[0]
    assert row.bases_bpv is not None
    assert row.qualities_bpv is None
    assert row.selected


def test_plan_report_parts_add_up(fastq_dataset):
    archive = compress(fastq_dataset, get_plan("order1"), seed=0, threads=1)
    row = plan_report(archive, fastq_dataset.total_symbols)
    parts = row.bases_bpv + row.qualities_bpv + row.selector_bpv + row.header_bpv

    assert row.total_bytes == len(archive.to_bytes())
    assert parts == pytest.approx(row.total_bpv)
    assert row.header_bpv > 0


def test_no_plans():
    with pytest.raises(ValueError):
        evaluate_plans(None, [])


def test_progress_events(markov_dataset):
    events = []
    handler = create_custom_output_handler(lambda message, event_type, metadata: events.append(event_type))
    evaluate_plans(markov_dataset, [get_plan("order0")], seed=0, threads=1, output_handler=handler)

    assert events == [OutputEventType.PROGRESS, OutputEventType.RESULT]
