"""Run independent jobs (geometry points, sweep grid points) on a thread pool with a progress bar.
Results always come back in input order."""
import logging
from concurrent.futures import ThreadPoolExecutor

import tqdm

logger = logging.getLogger(__name__)


def resolve_threads(threads):
    if threads is None:
        return 1
    threads = int(threads)
    if threads < 1:
        raise ValueError(f"Thread count must be positive, got {threads}")
    return threads


def run_batch(function, items, threads=1, description=None, progress_bar=True):
    """Apply function to every item. With more than one thread the items run concurrently; numpy
    and scipy release the GIL inside their kernels, which is where the time goes."""
    items = list(items)
    threads = resolve_threads(threads)
    results = [None] * len(items)
    bar = tqdm.tqdm(total=len(items), desc=description, disable=not progress_bar)
    with bar:
        if threads == 1 or len(items) < 2:
            for i, item in enumerate(items):
                results[i] = function(item)
                bar.update(1)
        else:
            with ThreadPoolExecutor(max_workers=threads) as executor:
                futures = [executor.submit(function, item) for item in items]
                # Collected in submission order, so rows never depend on completion order.
                for i, future in enumerate(futures):
                    results[i] = future.result()
                    bar.update(1)
    logger.debug("Finished %d job(s) on %d thread(s)", len(items), threads)
    return results


def write_progress(message):
    tqdm.tqdm.write(message)
