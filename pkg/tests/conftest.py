import pathlib

import numpy as np
import pytest
from factories import make_page, synthetic_raw_corpus, write_jsonl

from layoutcot.document import DocumentPage


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def grid_2x2() -> DocumentPage:
    """Two header cells above two body cells"""
    return make_page(
        [
            ("Name", (0, 0, 100, 50)),
            ("Price", (200, 0, 300, 50)),
            ("Tea", (0, 100, 100, 150)),
            ("4.50", (200, 100, 300, 150)),
        ],
        page_id="grid",
    )


@pytest.fixture
def two_boxes() -> DocumentPage:
    """Two segments whose nearest corners are 5 units apart"""
    return make_page(
        [("Total", (0, 0, 10, 10)), ("12.50", (13, 14, 20, 20))],
        page_id="corner",
    )


@pytest.fixture
def layout_page() -> DocumentPage:
    return make_page(
        [
            ("Annual Report", (100, 20, 400, 60)),
            ("Revenue grew", (100, 100, 500, 130)),
            ("in every region", (100, 140, 500, 170)),
            ("Page 1", (450, 950, 550, 980)),
        ],
        page_id="layout",
        layout=[
            ((90, 10, 410, 70), "Title"),
            ((90, 90, 510, 180), "Paragraph"),
            ((440, 940, 560, 990), "Footer"),
        ],
    )


@pytest.fixture
def raw_corpus_file(tmp_path: pathlib.Path) -> pathlib.Path:
    return write_jsonl(tmp_path / "raw.jsonl", synthetic_raw_corpus(24, seed=7))
