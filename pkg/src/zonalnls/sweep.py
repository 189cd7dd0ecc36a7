import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, List, Optional, Sequence, TypeVar

from tqdm import tqdm

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(
    fn: Callable[[T], R],
    items: Sequence[T],
    threads: int = 1,
    desc: Optional[str] = None,
) -> List[R]:
    """
    Apply fn to every item, optionally on a thread pool, and return the
    results in input order so that reductions do not depend on completion
    order. torch kernels release the GIL, so threads give real parallelism
    for the tensor-heavy work done here.

    Args:
        fn (Callable): pure function evaluated once per item.
        items (Sequence): work items.
        threads (int, optional): worker count; 1 runs inline. Default: 1.
        desc (str, optional): progress bar label; no bar when None.
    """
    items = list(items)
    progress = tqdm(total=len(items), desc=desc, disable=desc is None, leave=False)

    if threads <= 1 or len(items) <= 1:
        results = []
        for item in items:
            results.append(fn(item))
            progress.update(1)
        progress.close()
        return results

    results = [None] * len(items)
    with ThreadPoolExecutor(max_workers=threads) as executor:
        futures = {executor.submit(fn, item): idx for idx, item in enumerate(items)}
        try:
            for future in as_completed(futures):
                idx = futures[future]
                try:
                    results[idx] = future.result()
                except Exception as e:
                    logger.warning(f"({idx + 1}/{len(items)}): work item failed with error: {e}")
                    raise
                progress.update(1)
        finally:
            progress.close()
    return results
