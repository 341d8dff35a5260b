"""Shared sweep plumbing: result tables, coefficient sources and the ordered worker pool.

Thread count defaults to $VARPROP_THREADS. Results come back in input order,
so sweep output does not depend on how many threads ran it.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from ._compat import StrEnum
from typing import Any, Callable, Dict, List, Sequence, TypeVar

import numpy as np
from tqdm import tqdm

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV_VAR = "VARPROP_THREADS"


class CoefficientSource(StrEnum):
    SINC = "sinc"
    ODE = "ode"


@dataclass
class SweepResult:
    """One abscissa column plus equally long per-method value columns."""

    abscissa_name: str
    abscissa: np.ndarray
    columns: Dict[str, np.ndarray]
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.abscissa = np.asarray(self.abscissa, dtype=float)
        for name, values in self.columns.items():
            values = np.asarray(values)
            if len(values) != len(self.abscissa):
                raise ValueError(
                    f"Column {name!r} has {len(values)} values, expected {len(self.abscissa)}"
                )
            self.columns[name] = values


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV_VAR, "1")))
    except ValueError:
        return 1


def run_indexed(
    fn: Callable[[T], R],
    items: Sequence[T],
    threads: int = 1,
    desc: str = "Working",
    progress: bool = True,
) -> List[R]:
    """Map fn over items, results ordered by item index whatever the thread count."""
    with tqdm(
        total=len(items), desc=desc, unit="task", ncols=100, disable=not progress
    ) as progress_bar:
        if threads <= 1:
            results = []
            for item in items:
                results.append(fn(item))
                progress_bar.update(1)
            return results

        results: List[R] = [None] * len(items)  # type: ignore[list-item]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(fn, item): i for i, item in enumerate(items)}
            for future in futures:
                results[futures[future]] = future.result()
                progress_bar.update(1)
        return results
