import csv

import pytest

from src.cli.commands import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from src.core.seqio import to_fasta_bytes, to_fastq_bytes
from src.utils.output_handler import OutputEventType, create_custom_output_handler


@pytest.fixture
def events():
    return []


@pytest.fixture
def handler(events):
    return create_custom_output_handler(lambda message, event_type, metadata: events.append((message, event_type)))


@pytest.fixture
def fastq_file(tmp_path, fastq_dataset):
    path = tmp_path / "reads.fastq"
    path.write_bytes(to_fastq_bytes(fastq_dataset))
    return path


def run(handler, *argv):
    return main([*argv, "--threads", "1"], output_handler=handler)


@pytest.mark.parametrize("plan", ["order1", "default"])
def test_compress_decompress_restores_file(tmp_path, fastq_file, handler, plan):
    archive = tmp_path / "reads.cgc"
    restored = tmp_path / "restored.fastq"

    assert run(handler, "compress", str(fastq_file), str(archive), "--plan", plan) == EXIT_OK
    assert run(handler, "decompress", str(archive), str(restored)) == EXIT_OK
    assert restored.read_bytes() == fastq_file.read_bytes()


def test_fasta_input_codes_bases_only(tmp_path, markov_dataset, handler, events):
    source = tmp_path / "reads.fa"
    source.write_bytes(to_fasta_bytes(markov_dataset))
    archive = tmp_path / "reads.cgc"
    restored = tmp_path / "restored.fa"

    assert run(handler, "compress", str(source), str(archive), "--plan", "order1") == EXIT_OK
    assert any(event_type == OutputEventType.WARNING for _, event_type in events)
    assert run(handler, "decompress", str(archive), str(restored)) == EXIT_OK
    assert restored.read_bytes() == source.read_bytes()
    assert run(handler, "decompress", str(archive), str(restored), "--format", "fastq") == EXIT_USAGE


def test_bad_archive(tmp_path, handler, events):
    archive = tmp_path / "junk.cgc"
    archive.write_bytes(b"XXXXjunk")

    assert run(handler, "decompress", str(archive), str(tmp_path / "out.fastq")) == EXIT_DATA
    assert events[-1][1] == OutputEventType.ERROR


def test_missing_input(tmp_path, handler):
    assert run(handler, "compress", str(tmp_path / "missing.fastq"), str(tmp_path / "out.cgc")) == EXIT_DATA


def test_unknown_plan(tmp_path, fastq_file, handler):
    assert run(handler, "compress", str(fastq_file), str(tmp_path / "out.cgc"), "--plan", "nope") == EXIT_USAGE
    assert run(handler, "eval", str(fastq_file), "--plans", "order0,nope") == EXIT_USAGE


def test_bad_arguments_exit_with_usage_code(handler):
    with pytest.raises(SystemExit) as exc:
        main(["bin", "in.fastq", "--bins", "4", "--penalty", "0.1"], output_handler=handler)
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"], output_handler=handler)
    assert exc.value.code == EXIT_USAGE


def test_analyze_empty_file(tmp_path, handler):
    source = tmp_path / "empty.fastq"
    source.write_bytes(b"")
    out = tmp_path / "reports"

    assert run(handler, "analyze", str(source), "--out", str(out)) == EXIT_OK
    assert (out / "summary.json").exists()


def test_adapt_scan_csv(tmp_path, fastq_file, handler):
    out = tmp_path / "scan.csv"

    assert run(handler, "adapt-scan", str(fastq_file), "--block-size", "1000", "--out", str(out)) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "blockIndex,etaBest,halfLife,bpvBest,flat"
    assert len(lines) == 3


def test_eval_csv(tmp_path, fastq_file, handler):
    out = tmp_path / "eval.csv"

    assert run(handler, "eval", str(fastq_file), "--plans", "order0,order1", "--out", str(out)) == EXIT_OK
    rows = list(csv.DictReader(out.read_text().splitlines()))
    assert [row["plan"] for row in rows] == ["order0", "order1"]
    assert sum(row["selected"] == "True" for row in rows) == 1
    assert all(row["fallback"] == "" for row in rows)


def test_bin_and_cluster_outputs(tmp_path, fastq_file, handler, events):
    table = tmp_path / "bins.cbn"
    models = tmp_path / "models.cms"

    assert run(handler, "bin", str(fastq_file), "--bins", "4", "--out", str(table),
               "--tree-csv", str(tmp_path / "tree.csv")) == EXIT_OK
    assert table.read_bytes()[:4] == b"CBN1"
    assert run(handler, "cluster", str(fastq_file), "-k", "2", "--order", "0", "--out", str(models)) == EXIT_OK
    assert models.read_bytes()[:4] == b"CMS1"
    assert any(message.startswith("bins: ") for message, _ in events)


def test_hscm_command(tmp_path, fastq_file, handler):
    out = tmp_path / "model.hsc"
    assert run(handler, "hscm", str(fastq_file), "--field", "bases", "--levels", "4,2", "--out", str(out)) == EXIT_OK
    assert out.read_bytes()[:4] == b"HSC1"
