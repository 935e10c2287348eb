import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

logger = logging.getLogger(__name__)

Unit = TypeVar('Unit')
Result = TypeVar('Result')


class MatchingPool:
    """
    Fans matching work out over a thread pool and returns results in
    submission order
    """

    def __init__(self, max_workers: int = 8, progress_every: int = 500):
        """
        Initialize the pool

        Args:
            max_workers: Worker threads (the gateway bounds in-flight requests separately)
            progress_every: Log progress after this many completed units
        """
        if max_workers < 1:
            raise ValueError('max_workers must be positive')
        self.max_workers = max_workers
        self.progress_every = progress_every
        self.is_running = False

    def run(self, units: Sequence[Unit], worker: Callable[[Unit], Result]) -> List[Result]:
        """
        Apply worker to every unit

        The first exception raised by a worker cancels the units not yet
        started and is re-raised.

        Args:
            units: Work items
            worker: Function run on each item

        Returns:
            list of results, one per unit, in unit order
        """
        if not units:
            return []

        self.is_running = True
        logger.info(f"Matching {len(units)} units on {self.max_workers} workers")
        try:
            with ThreadPoolExecutor(max_workers=self.max_workers, thread_name_prefix='match') as executor:
                futures = [executor.submit(worker, unit) for unit in units]
                results = []
                try:
                    for done, future in enumerate(futures, start=1):
                        results.append(future.result())
                        if self.progress_every and done % self.progress_every == 0:
                            logger.info(f"Matched {done}/{len(units)} units")
                except BaseException:
                    for future in futures:
                        future.cancel()
                    raise
            return results
        finally:
            self.is_running = False
