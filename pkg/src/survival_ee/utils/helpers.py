"""
Small shared helpers for parsing CLI values and timing runs
"""

import re
import statistics
import time
from typing import Callable, List, Tuple, TypeVar

T = TypeVar('T')

_BUDGET_UNITS = {
    '': 1,
    'b': 1,
    'kb': 1000, 'mb': 1000 ** 2, 'gb': 1000 ** 3,
    'kib': 1024, 'mib': 1024 ** 2, 'gib': 1024 ** 3,
}


def parse_number_list(text: str, cast: Callable[[str], T] = float) -> List[T]:
    """
    Parse a comma separated list of numbers.

    Args:
        text: e.g. "10,20,30"
        cast: Conversion applied to every entry

    Returns:
        List of converted values (empty for blank input)
    """
    if text is None or not str(text).strip():
        return []
    return [cast(part.strip()) for part in str(text).split(',') if part.strip()]


def parse_memory_budget(text) -> int:
    """Parse a memory budget such as '2GiB', '500MB' or a raw byte count"""
    if isinstance(text, (int, float)):
        return int(text)
    match = re.fullmatch(r'\s*([0-9]*\.?[0-9]+)\s*([a-zA-Z]*)\s*', str(text))
    if not match or match.group(2).lower() not in _BUDGET_UNITS:
        raise ValueError(f"Invalid memory budget: {text}")
    return int(float(match.group(1)) * _BUDGET_UNITS[match.group(2).lower()])


def timed(func: Callable[[], T], repeat: int = 1) -> Tuple[T, float]:
    """
    Run func `repeat` times and report the median wall-clock.

    Returns:
        Tuple of (result of the last run, median seconds)
    """
    durations = []
    result = None
    for _ in range(max(1, repeat)):
        start = time.perf_counter()
        result = func()
        durations.append(time.perf_counter() - start)
    return result, statistics.median(durations)
