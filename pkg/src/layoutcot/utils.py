import hashlib
import json
import re
from typing import Any

import numpy as np

from .geometry import BBox, Point

_QUOTED = re.compile(r'"(?:[^"\\]|\\.)*"')
_NUMBER = re.compile(r"\d+(?:\.\d+)?")


def quote(text: str) -> str:
    """Quote OCR text for narration; numbers inside quotes are not reasoning values"""
    return json.dumps(text, ensure_ascii=False)


def one_line(text: str) -> str:
    """OCR text escaped for line-oriented answers"""
    return text.replace("\\", "\\\\").replace("\r", "\\r").replace("\n", "\\n")


def strip_quoted(text: str) -> str:
    """Remove quoted spans from text"""
    return _QUOTED.sub("", text)


def number_tokens(text: str) -> list[str]:
    """Unsigned numerals appearing outside quoted spans"""
    return _NUMBER.findall(strip_quoted(text))


def format_distance(value: float) -> str:
    return f"{value:.2f}"


def value_tokens(value: Any) -> set[str]:
    """Every surface form a bound value may take in a narration"""
    match value:
        case bool() | str():
            return set()
        case int():
            return {str(value)}
        case float():
            tokens = {f"{value:.2f}", f"{value:g}"}
            if value.is_integer():
                tokens.add(str(int(value)))
            return tokens
        case BBox():
            return {str(v) for v in value.to_list()}
        case Point():
            return value_tokens(value.x) | value_tokens(value.y)
        case tuple() | list():
            return set().union(*(value_tokens(item) for item in value))
        case _:
            return set()


def to_jsonable(value: Any) -> Any:
    """Plain JSON form of a bound value"""
    match value:
        case BBox():
            return value.to_list()
        case Point():
            return [value.x, value.y]
        case tuple() | list():
            return [to_jsonable(item) for item in value]
        case dict():
            return {key: to_jsonable(item) for key, item in value.items()}
        case _:
            return value


def page_seed(seed: int, page_id: str) -> int:
    """Stable per-page seed so sharding or reordering a corpus changes nothing"""
    digest = hashlib.blake2b(f"{seed}:{page_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def page_rng(seed: int, page_id: str) -> np.random.Generator:
    return np.random.default_rng(page_seed(seed, page_id))
