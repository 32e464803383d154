import logging

import numpy as np
import pytest
from factories import grid_table_page, make_page, random_page

from layoutcot.document import LayoutType
from layoutcot.exceptions import GenerationError, RenderError, TableRangeError
from layoutcot.generators import (
    BOX_PLACEHOLDER,
    GenerationSettings,
    gen_document_description,
    gen_geometric_analysis,
    gen_layout_analysis,
    gen_layout_location,
    gen_masked_language,
    gen_masked_position,
    gen_table_analysis,
    gen_text_box_reconstruction,
    generate_task,
    reasoning_for,
    render,
    restore_masked_boxes,
    restore_masked_text,
    to_example,
)
from layoutcot.geometry import BBox
from layoutcot.models import COT_TASKS, GeometricQuery, RenderMode, TaskKind
from layoutcot.utils import number_tokens, value_tokens


def test_geometric_distance_on_a_corner_pair(two_boxes):
    record = gen_geometric_analysis(two_boxes, 0, 1, GeometricQuery.DISTANCE)

    assert record.final_answer == "5.00"
    assert len(record.cot_steps) == 4
    step_2, step_4 = record.cot_steps[1], record.cot_steps[3]
    assert step_2.bound_values["horizontal"] == "gap"
    assert step_2.bound_values["horizontal_value"] == 3
    assert step_2.bound_values["vertical_value"] == 4
    assert step_4.bound_values["case"] == "corner"
    assert step_4.bound_values["distance"] == 5.0
    assert "square root of 3 squared plus 4 squared, which is 5.00" in step_4.narration


def test_geometric_direction_answer(two_boxes):
    record = gen_geometric_analysis(two_boxes, 0, 1, GeometricQuery.DIRECTION)
    assert record.final_answer == "below-right"
    assert record.cot_steps[2].bound_values["direction"] == "below-right"
    assert "(16.5, 17)" in record.cot_steps[2].narration


def test_geometric_analysis_rejects_bad_indices(two_boxes):
    with pytest.raises(GenerationError, match="must differ"):
        gen_geometric_analysis(two_boxes, 0, 0, GeometricQuery.DISTANCE)
    with pytest.raises(GenerationError, match="no segment 5"):
        gen_geometric_analysis(two_boxes, 0, 5, GeometricQuery.DISTANCE)


def test_geometric_labels_tell_duplicate_texts_apart():
    page = make_page([("Total", (0, 0, 10, 10)), ("Total", (0, 50, 10, 60))])
    record = gen_geometric_analysis(page, 0, 1, GeometricQuery.DISTANCE)
    assert '"Total" (#1)' in record.question
    assert '"Total" (#2)' in record.question
    assert record.cot_steps[0].bound_values["ordinal_b"] == 2
    assert record.final_answer == "40.00"


def test_layout_analysis_reasons_from_region_and_neighbours(layout_page):
    title = layout_page.layout_annotations[0]
    record = gen_layout_analysis(layout_page, title.bbox, k_neighbors=2)

    assert record.final_answer == "Title"
    step_1, step_2, step_3 = record.cot_steps
    assert step_1.bound_values["region"] == "top-left"
    assert step_1.bound_values["texts"] == ("Annual Report",)
    assert step_2.bound_values["neighbor_types"] == ("Paragraph", "Footer")
    assert step_2.bound_values["neighbor_distances"][0] == 20.0
    assert step_3.bound_values["layout_type"] == "Title"
    assert "Title" in step_3.narration
    assert record.metadata["variant"] == "analyze"


def test_layout_analysis_needs_an_intersecting_annotation(layout_page):
    with pytest.raises(GenerationError, match="intersects no annotated element"):
        gen_layout_analysis(layout_page, BBox(700, 400, 800, 500))

    bare = make_page([("x", (0, 0, 10, 10))])
    with pytest.raises(GenerationError, match="no layout annotations"):
        gen_layout_analysis(bare, BBox(0, 0, 10, 10))


def test_layout_location_lists_boxes(layout_page):
    record = gen_layout_location(layout_page, LayoutType.FOOTER)
    assert record.final_answer == "[440, 940, 560, 990]"
    assert record.cot_steps is None
    assert record.metadata["variant"] == "locate"

    with pytest.raises(GenerationError, match="no Figure element"):
        gen_layout_location(layout_page, LayoutType.FIGURE)


def test_table_analysis_on_the_2x2_grid(grid_2x2):
    record = gen_table_analysis(grid_2x2, 1, 2)
    assert record.final_answer == "4.50"

    step_1, step_2, step_3 = record.cot_steps
    assert step_1.bound_values["header_texts"] == ("Name", "Price")
    assert step_2.bound_values["column_texts"] == ("4.50",)
    assert step_3.bound_values == {"row_i": 1, "col_j": 2, "answer": "4.50"}
    assert record.metadata["structure_provenance"] == "xycut"


def test_table_analysis_single_cell_table():
    page = make_page([("Header", (0, 0, 100, 20)), ("Only", (0, 50, 100, 70))])
    record = gen_table_analysis(page, 1, 1)
    assert record.final_answer == "Only"
    assert [step.step_no for step in record.cot_steps] == [1, 2, 3]


def test_table_analysis_out_of_range(grid_2x2):
    with pytest.raises(TableRangeError):
        gen_table_analysis(grid_2x2, 2, 1)


def test_table_analysis_uses_the_annotation(rng):
    page, truth = grid_table_page(rng, 4, 3)
    record = gen_table_analysis(page, 2, 3)
    assert truth[record.final_answer] == (2, 2)
    assert record.metadata["structure_provenance"] == "annotation"


def test_table_task_needs_an_annotation_unless_recovering(rng):
    page, truth = grid_table_page(rng, 4, 3, annotate=False)
    with pytest.raises(GenerationError, match="no table annotation"):
        generate_task(TaskKind.TABLE_ANALYSIS, page, rng, GenerationSettings())

    record = generate_task(
        TaskKind.TABLE_ANALYSIS, page, rng, GenerationSettings(recover_tables=True)
    )
    assert record.metadata["structure_provenance"] == "xycut"
    row_i, col_j = record.metadata["params"]["row_i"], record.metadata["params"]["col_j"]
    assert truth[record.final_answer] == (row_i, col_j - 1)


def test_document_description(layout_page):
    record = gen_document_description(layout_page)
    assert record.final_answer == (
        "The document contains 4 text segments. "
        "Text occupies the top-left and bottom-center regions of the page. "
        "It contains 1 title region, 1 paragraph region and 1 footer region."
    )


def test_text_box_reconstruction(rng):
    page = random_page(rng, 12)
    record = gen_text_box_reconstruction(page, rng, sample_k=5)

    sample = record.metadata["params"]["sample"]
    assert len(sample) == 5
    assert sample == sorted(sample)
    expected = [f"{page.segment(i).text}, {page.segment(i).bbox}" for i in sample]
    assert record.final_answer.splitlines() == expected
    _, body = record.question.split("\n\n")
    assert body.splitlines() == [page.segment(i).text for i in sample]


def test_text_box_reconstruction_shrinks_on_duplicate_texts(rng, caplog):
    page = make_page([("A", (0, 0, 10, 10)), ("A", (0, 20, 10, 30)), ("B", (0, 40, 10, 50))])
    with caplog.at_level(logging.WARNING, logger="layoutcot.generators"):
        record = gen_text_box_reconstruction(page, rng, sample_k=3)
    assert len(record.final_answer.splitlines()) == 2
    assert "only 2 distinct texts" in caplog.text


def test_text_box_reconstruction_rejects_identical_texts(rng):
    page = make_page([("A", (0, 0, 10, 10)), ("A", (0, 20, 10, 30))])
    with pytest.raises(GenerationError, match="identical"):
        gen_text_box_reconstruction(page, rng, sample_k=1)


def test_masked_language_round_trips(rng):
    for trial in range(1000):
        page = random_page(rng, int(rng.integers(1, 15)), page_id=f"m{trial}", with_layout=False)
        record = gen_masked_language(page, rng, mask_rate=float(rng.uniform(0.05, 0.5)))

        original = " ".join(" ".join(s.text for s in page.segments).split())
        assert restore_masked_text(record.question, record.final_answer) == original
        assert "[MASK_1]" in record.question


def test_masked_position_round_trips(rng):
    for trial in range(1000):
        page = random_page(rng, int(rng.integers(2, 15)), page_id=f"b{trial}", with_layout=False)
        record = gen_masked_position(page, rng, mask_rate=float(rng.uniform(0.05, 0.5)))

        body = record.question.split("\n\n", 1)[1]
        hidden = body.count(BOX_PLACEHOLDER)
        assert 1 <= hidden < page.n_segments
        original = "\n".join(f"{s.text}, {s.bbox}" for s in page.segments)
        assert restore_masked_boxes(record.question, record.final_answer) == original


@pytest.mark.parametrize("mask_rate", [0.0, 0.6])
def test_mask_rate_bounds(rng, layout_page, mask_rate):
    with pytest.raises(GenerationError, match="mask_rate"):
        gen_masked_language(layout_page, rng, mask_rate)
    with pytest.raises(GenerationError, match="mask_rate"):
        gen_masked_position(layout_page, rng, mask_rate)


@pytest.mark.parametrize("task", list(TaskKind))
def test_every_generator_rejects_empty_pages(rng, task):
    with pytest.raises(GenerationError):
        generate_task(task, make_page([]), rng, GenerationSettings())


def test_generation_is_deterministic():
    page, _ = grid_table_page(np.random.default_rng(5), 4, 3)
    for task in TaskKind:
        first = generate_task(task, page, np.random.default_rng(11), GenerationSettings())
        second = generate_task(task, page, np.random.default_rng(11), GenerationSettings())
        assert first == second


def test_narrated_numbers_come_from_bound_values(rng):
    settings = GenerationSettings(recover_tables=True)
    n_checked = 0
    for trial in range(300):
        if trial % 3 == 0:
            page, _ = grid_table_page(rng, 3, 3, page_id=f"t{trial}")
        else:
            page = random_page(rng, 15, page_id=f"r{trial}")
        for task in COT_TASKS:
            try:
                record = generate_task(task, page, rng, settings)
            except GenerationError:
                # Recovered tables on scattered text may have no body cells
                continue
            for step in record.cot_steps or ():
                allowed = set().union(*(value_tokens(v) for v in step.bound_values.values()))
                assert set(number_tokens(step.narration)) <= allowed, step.narration
                n_checked += 1
    assert n_checked > 0


def test_reasoning_can_be_rebuilt_from_params(rng):
    page, _ = grid_table_page(rng, 5, 4)
    for task in COT_TASKS:
        for _ in range(20):
            record = generate_task(task, page, rng, GenerationSettings())
            if record.cot_steps is None:
                continue
            steps, answer = reasoning_for(task, page, record.metadata["params"])
            assert steps == record.cot_steps
            assert answer == record.final_answer


def test_reasoning_for_rejects_plain_tasks(layout_page):
    with pytest.raises(GenerationError, match="no reasoning steps"):
        reasoning_for(TaskKind.MASKED_LANGUAGE, layout_page, {})


def test_render_modes(two_boxes):
    record = gen_geometric_analysis(two_boxes, 0, 1, GeometricQuery.DISTANCE)

    direct = render(record, RenderMode.DIRECT_ANSWER)
    assert direct == {"question": record.question, "response": "5.00"}

    cot = render(record, RenderMode.WITH_COT)
    lines = cot["response"].splitlines()
    assert [line.split(". ", 1)[0] for line in lines[:4]] == ["1", "2", "3", "4"]
    assert lines[-1] == "Answer: 5.00"


def test_render_without_steps_fails(layout_page):
    record = gen_document_description(layout_page)
    with pytest.raises(RenderError) as err:
        render(record, RenderMode.WITH_COT)
    assert err.value.record_id == record.record_id


def test_to_example_carries_bindings(two_boxes):
    record = gen_geometric_analysis(two_boxes, 0, 1, GeometricQuery.DISTANCE, record_id="corner/0")

    example = to_example(record, RenderMode.WITH_COT)
    assert example.mode is RenderMode.WITH_COT
    bindings = example.metadata["cot_bindings"]
    assert [item["step_no"] for item in bindings] == [1, 2, 3, 4]
    assert bindings[0]["bound_values"]["box_a"] == [0, 0, 10, 10]

    direct = to_example(record, RenderMode.DIRECT_ANSWER)
    assert "cot_bindings" not in direct.metadata
    assert direct.response == "5.00"
