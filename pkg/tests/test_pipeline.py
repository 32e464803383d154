import json
import logging

import pytest
from factories import make_page, raw_page, synthetic_raw_corpus, write_jsonl

from layoutcot.cli import EXIT_FATAL, EXIT_OK, EXIT_VIOLATIONS, main
from layoutcot.config import CONFIG_ENV_VAR, PipelineConfig
from layoutcot.document import serialize_page
from layoutcot.exceptions import NoValidPagesError, PipelineIOError
from layoutcot.models import TaskKind
from layoutcot.pipeline import (
    PageIndex,
    cmd_anneal_plan,
    cmd_generate,
    cmd_ingest,
    cmd_length_report,
    cmd_stats,
    cmd_validate,
)


@pytest.fixture(autouse=True)
def no_config_env(monkeypatch):
    monkeypatch.delenv(CONFIG_ENV_VAR, raising=False)


@pytest.fixture
def pages_file(raw_corpus_file, tmp_path):
    path = tmp_path / "pages.jsonl"
    cmd_ingest(raw_corpus_file, path)
    return path


@pytest.fixture
def busy_config() -> PipelineConfig:
    return PipelineConfig(records_per_page=4, seed=11)


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]


def single_page_file(tmp_path):
    page = make_page(
        [("Total", (0, 0, 100, 20)), ("12.50", (300, 0, 400, 20)), ("Due", (0, 100, 80, 120))],
        page_id="single",
    )
    return write_jsonl(tmp_path / "single.jsonl", [serialize_page(page)])


def test_ingest_normalizes_and_sorts(tmp_path):
    raws = [
        raw_page([("below", (0, 300, 50, 320)), ("above", (0, 10, 50, 30))], "a", 500, 500),
        raw_page([("only", (10, 10, 20, 20))], "b"),
        raw_page([], "c"),
    ]
    output = tmp_path / "pages.jsonl"
    assert cmd_ingest(write_jsonl(tmp_path / "raw.jsonl", raws), output) == 3

    pages = read_jsonl(output)
    assert [page["page_id"] for page in pages] == ["a", "b", "c"]
    assert pages[0]["segments"] == [
        {"text": "above", "box": [0, 20, 100, 60]},
        {"text": "below", "box": [0, 600, 100, 640]},
    ]
    assert all(page["normalized"] for page in pages)


def test_ingest_skips_bad_lines(tmp_path, caplog):
    path = tmp_path / "raw.jsonl"
    first = json.dumps(raw_page([("ok", (0, 0, 10, 10))], "p1"))
    second = json.dumps(raw_page([("ok", (0, 0, 10, 10))], "p2"))
    path.write_text(f"{first}\n\n{{not json\n{second}\n", encoding="utf-8")

    with caplog.at_level(logging.ERROR, logger="layoutcot.pipeline"):
        assert cmd_ingest(path, tmp_path / "pages.jsonl") == 2
    assert "line 3" in caplog.text


@pytest.mark.parametrize(
    "bad",
    [
        raw_page([("nan", (float("nan"), 0, 10, 10))], "bad"),
        raw_page([("wide", (0, 0, 10, 10))], "bad", width=float("nan")),
        raw_page([("tall", (0, 0, 10, 10))], "bad", height=float("inf")),
    ],
)
def test_ingest_skips_non_finite_numbers(tmp_path, caplog, bad):
    good = raw_page([("ok", (0, 0, 10, 10))], "good")
    path = write_jsonl(tmp_path / "raw.jsonl", [good, bad])

    with caplog.at_level(logging.ERROR, logger="layoutcot.pipeline"):
        assert cmd_ingest(path, tmp_path / "pages.jsonl") == 1
    assert "line 2" in caplog.text
    assert [page["page_id"] for page in read_jsonl(tmp_path / "pages.jsonl")] == ["good"]


def test_ingest_drops_repeated_page_ids(tmp_path, caplog):
    raws = [
        raw_page([("Total", (50, 50, 90, 60)), ("Due", (300, 50, 340, 60))], "dup"),
        raw_page([("Name", (600, 700, 700, 720)), ("Tea", (100, 900, 150, 920))], "dup"),
        raw_page([("Date", (10, 10, 60, 30)), ("Amount", (500, 10, 600, 30))], "other"),
    ]
    pages = tmp_path / "pages.jsonl"
    with caplog.at_level(logging.ERROR, logger="layoutcot.pipeline"):
        assert cmd_ingest(write_jsonl(tmp_path / "raw.jsonl", raws), pages) == 2
    assert "duplicate page_id 'dup'" in caplog.text
    assert read_jsonl(pages)[0]["segments"][0]["text"] == "Total"

    records = tmp_path / "records.jsonl"
    config = PipelineConfig(records_per_page=2, task_mix={TaskKind.GEOMETRIC_ANALYSIS: 1.0})
    cmd_generate(pages, config, records)
    assert cmd_validate(records, pages).passed


def test_generate_and_validate_skip_repeated_page_ids(tmp_path, caplog):
    first = make_page([("Total", (50, 50, 90, 60)), ("Due", (300, 50, 340, 60))], page_id="dup")
    second = make_page([("Name", (600, 700, 700, 720)), ("Tea", (100, 900, 150, 920))], page_id="dup")
    pages = write_jsonl(tmp_path / "pages.jsonl", [serialize_page(first), serialize_page(second)])
    records = tmp_path / "records.jsonl"
    config = PipelineConfig(records_per_page=2, task_mix={TaskKind.GEOMETRIC_ANALYSIS: 1.0})

    with caplog.at_level(logging.ERROR, logger="layoutcot.pipeline"):
        assert cmd_generate(pages, config, records) == 4
        index = PageIndex(pages)
    assert caplog.text.count("duplicate page_id 'dup'") == 2
    assert len(index) == 1

    ids = [line["record_id"] for line in read_jsonl(records)]
    assert len(ids) == len(set(ids))
    assert cmd_validate(records, pages).passed


def test_ingest_without_valid_pages(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("", encoding="utf-8")
    with pytest.raises(NoValidPagesError):
        cmd_ingest(empty, tmp_path / "pages.jsonl")
    assert main(["ingest", "--input", str(empty), "--output", str(tmp_path / "o.jsonl")]) == EXIT_FATAL


def test_missing_input_is_fatal(tmp_path):
    with pytest.raises(PipelineIOError):
        cmd_ingest(tmp_path / "nope.jsonl", tmp_path / "pages.jsonl")
    assert main(["stats", "--input", str(tmp_path / "nope.jsonl")]) == EXIT_FATAL


def test_cot_records_are_written_in_both_modes(tmp_path):
    config = PipelineConfig(task_mix={TaskKind.GEOMETRIC_ANALYSIS: 1.0})
    output = tmp_path / "records.jsonl"
    assert cmd_generate(single_page_file(tmp_path), config, output) == 2

    cot, direct = read_jsonl(output)
    assert (cot["mode"], direct["mode"]) == ("cot", "direct")
    assert cot["record_id"] == "single/0"
    assert direct["record_id"] == "single/0#direct"
    assert cot["question"] == direct["question"]
    assert cot["response"].endswith("\nAnswer: " + direct["response"])
    assert cot["metadata"]["prompt_tokens"] > 196
    assert direct["metadata"]["derived_direct"] is True


def test_plain_records_are_written_once(tmp_path):
    config = PipelineConfig(task_mix={TaskKind.MASKED_LANGUAGE: 1.0})
    output = tmp_path / "records.jsonl"
    assert cmd_generate(single_page_file(tmp_path), config, output) == 1
    assert read_jsonl(output)[0]["mode"] == "direct"


def test_generation_errors_are_skipped(tmp_path, caplog):
    config = PipelineConfig(task_mix={TaskKind.TABLE_ANALYSIS: 1.0})
    output = tmp_path / "records.jsonl"
    with caplog.at_level(logging.ERROR, logger="layoutcot.pipeline"):
        assert cmd_generate(single_page_file(tmp_path), config, output) == 0
    assert "single/0" in caplog.text


def test_truncation_is_recorded(tmp_path):
    config = PipelineConfig(
        task_mix={TaskKind.DOCUMENT_DESCRIPTION: 1.0}, max_length=200, truncate=True
    )
    output = tmp_path / "records.jsonl"
    cmd_generate(single_page_file(tmp_path), config, output)
    metadata = read_jsonl(output)[0]["metadata"]
    assert metadata["dropped_segments"]
    assert metadata["prompt_tokens"] > 200


def test_generate_is_byte_deterministic(pages_file, busy_config, tmp_path):
    first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    cmd_generate(pages_file, busy_config, first)
    cmd_generate(pages_file, busy_config, second)
    assert first.read_bytes() == second.read_bytes()

    reseeded = tmp_path / "c.jsonl"
    cmd_generate(pages_file, busy_config.model_copy(update={"seed": 12}), reseeded)
    assert reseeded.read_bytes() != first.read_bytes()


def test_generate_output_does_not_depend_on_workers(pages_file, busy_config, tmp_path):
    serial, parallel = tmp_path / "serial.jsonl", tmp_path / "parallel.jsonl"
    cmd_generate(pages_file, busy_config, serial, workers=1)
    cmd_generate(pages_file, busy_config, parallel, workers=2)
    assert serial.read_bytes() == parallel.read_bytes()


def test_generated_corpus_validates(pages_file, busy_config, tmp_path):
    records = tmp_path / "records.jsonl"
    n_lines = cmd_generate(pages_file, busy_config, records)

    report = cmd_validate(records, pages_file)
    assert report.passed, str(report)
    assert report.n_records == n_lines

    counts = cmd_stats(records)
    assert sum(counts.values()) == n_lines
    assert counts["geometric_analysis", "cot"] == counts["geometric_analysis", "direct"]


def test_validate_through_the_cli(pages_file, busy_config, tmp_path, capsys):
    records = tmp_path / "records.jsonl"
    cmd_generate(pages_file, busy_config, records)
    argv = ["validate", "--input", str(records), "--pages", str(pages_file)]
    assert main(argv) == EXIT_OK
    assert "0 violations" in capsys.readouterr().out

    lines = read_jsonl(records)
    target = next(i for i, line in enumerate(lines) if line["mode"] == "cot")
    bound = lines[target]["metadata"]["cot_bindings"][0]["bound_values"]
    bound[sorted(bound)[0]] = "tampered"
    write_jsonl(records, lines)

    assert main(argv) == EXIT_VIOLATIONS
    out = capsys.readouterr().out
    assert lines[target]["record_id"] in out
    assert "1 violations" in out


def test_validate_flags_schema_errors_duplicates_and_missing_pages(pages_file, tmp_path):
    records = tmp_path / "records.jsonl"
    cmd_generate(pages_file, PipelineConfig(seed=3), records)
    lines = read_jsonl(records)
    orphan = {**lines[0], "record_id": "orphan/0", "page_id": "missing"}
    path = write_jsonl(tmp_path / "mixed.jsonl", [lines[0], lines[0], {"record_id": "x"}, orphan])

    report = cmd_validate(path, pages_file)
    messages = [str(v) for v in report.violations]
    assert report.n_records == 4
    assert any("duplicate record_id" in m for m in messages)
    assert any(m.startswith("line 3: schema") for m in messages)
    assert any("orphan/0: source page not found" in m for m in messages)


def test_page_index(pages_file):
    index = PageIndex(pages_file)
    assert len(index) == 24
    page = index.get("doc00005")
    assert page.page_id == "doc00005"
    assert index.get("doc00005") is page
    assert index.get("unknown") is None


def test_anneal_plan(tmp_path, capsys):
    output = tmp_path / "plan.jsonl"
    assert main(["anneal-plan", "--output", str(output), "--seed", "4"]) == EXIT_OK
    steps = read_jsonl(output)
    assert len(steps) == 1000
    assert steps[0] == {"step": 0, "n_cot": 64, "n_direct": 0}
    assert steps[-1] == {"step": 999, "n_cot": 0, "n_direct": 64}
    assert "1000 steps" in capsys.readouterr().out

    plan = cmd_anneal_plan(PipelineConfig(seed=4), tmp_path / "again.jsonl")
    assert (tmp_path / "again.jsonl").read_bytes() == output.read_bytes()
    assert len(plan.audit()) == 20


def test_invalid_schedule_is_fatal(tmp_path):
    config = tmp_path / "run.env"
    config.write_text("schedule.total_steps=0\n", encoding="utf-8")
    argv = ["anneal-plan", "--config", str(config), "--output", str(tmp_path / "plan.jsonl")]
    assert main(argv) == EXIT_FATAL


def test_config_from_environment(tmp_path, monkeypatch):
    config = tmp_path / "run.env"
    config.write_text("schedule.total_steps=10\nschedule.batch_size=4\n", encoding="utf-8")
    monkeypatch.setenv(CONFIG_ENV_VAR, str(config))
    output = tmp_path / "plan.jsonl"
    assert main(["anneal-plan", "--output", str(output)]) == EXIT_OK
    assert len(read_jsonl(output)) == 10


def test_length_report(pages_file, tmp_path, capsys):
    output = tmp_path / "lengths.csv"
    argv = ["length-report", "--input", str(pages_file), "--output", str(output)]
    assert main(argv) == EXIT_OK

    rows = output.read_text(encoding="utf-8").splitlines()
    assert rows[0] == "page_id,n_segments,len_mode_I,len_mode_II"
    assert len(rows) == 1 + 24 + 1
    assert rows[-1].startswith("mean,")
    assert "ratio" in capsys.readouterr().out

    report = cmd_length_report(pages_file, PipelineConfig(), tmp_path / "again.csv")
    assert report.ratio > 1


def test_length_report_without_ocr_content(tmp_path):
    pages = write_jsonl(
        tmp_path / "pages.jsonl",
        [serialize_page(make_page([], page_id=f"blank{i}")) for i in range(3)],
    )
    with pytest.raises(NoValidPagesError):
        cmd_length_report(pages, PipelineConfig(), tmp_path / "lengths.csv")


def test_stats(tmp_path, capsys):
    records = write_jsonl(
        tmp_path / "records.jsonl",
        [
            {"task": "geometric_analysis", "mode": "cot"},
            {"task": "geometric_analysis", "mode": "direct"},
            {"task": "masked_language", "mode": "direct"},
            {"oops": True},
        ],
    )
    assert main(["stats", "--input", str(records)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "geometric_analysis\tcot\t1" in out
    assert "total\t\t3" in out


def test_cli_argument_errors(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["validate", "--input", str(tmp_path / "records.jsonl")])
    assert err.value.code == 2
    assert main(["generate", "--output", str(tmp_path / "o.jsonl")]) == EXIT_FATAL


def test_synthetic_corpus_end_to_end(tmp_path):
    raw = write_jsonl(tmp_path / "raw.jsonl", synthetic_raw_corpus(12, seed=99))
    pages, records = tmp_path / "pages.jsonl", tmp_path / "records.jsonl"
    assert main(["ingest", "--input", str(raw), "--output", str(pages)]) == EXIT_OK
    assert main(["generate", "--input", str(pages), "--output", str(records), "--seed", "5"]) == EXIT_OK
    assert main(["validate", "--input", str(records), "--pages", str(pages)]) == EXIT_OK
