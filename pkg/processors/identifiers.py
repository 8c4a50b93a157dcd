import re
from typing import Iterable

_ID_PATTERN = re.compile(r"^([A-Za-z-]*?)(\d+)$")


def natural_key(record_id: str) -> tuple:
    """Sort key that orders 'TC2' before 'TC10' and 'h9' before 'h10'."""
    match = _ID_PATTERN.match(record_id)
    if not match:
        return (record_id, -1)
    return (match.group(1), int(match.group(2)))


def sorted_ids(ids: Iterable[str]) -> list[str]:
    return sorted(ids, key=natural_key)
