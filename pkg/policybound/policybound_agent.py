"""
    policybound_agent.py

    Worker pool for independent units of work (Monte Carlo replications,
    robustness specifications). Workers pull indices from a queue and file
    results by index, so the outcome never depends on which thread ran what.
"""
# This source file is part of the policybound open source project
#
# Copyright 2026 the policybound project authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#

import collections
import logging
import queue
import threading

from .config import resolve_workers

logger = logging.getLogger(__name__)

STOP = None


class ReplicationAgent:
    """
    Runs `work(index)` for every index handed to `run` on a pool of threads.

    If the result carries a `status` attribute it is tallied in `counts`
    (the simulation uses accepted / rejected / failed). The first exception
    raised by any worker cancels the remaining work and is re-raised in the
    calling thread.
    """

    def __init__(self, work, workers=None):
        self.work = work
        self.workers = resolve_workers(workers)
        self.counts = collections.Counter()
        self._lock = threading.Lock()
        self._m_cancelled = False  # protected by lock
        self._error = None  # owned by workers until joined

    def cancel(self):
        with self._lock:
            self._m_cancelled = True

    def _cancelled(self):
        with self._lock:
            return self._m_cancelled

    def _worker(self, job_queue, results):
        while True:
            index = job_queue.get()
            if index is STOP:
                job_queue.task_done()
                return
            try:
                if self._cancelled():
                    continue
                result = self.work(index)
                with self._lock:
                    results[index] = result
                    self.counts[getattr(result, "status", "done")] += 1
            except BaseException as e:
                logger.debug("work item {} raised {!r}".format(index, e))
                with self._lock:
                    if self._error is None:
                        self._error = e
                    self._m_cancelled = True
            finally:
                job_queue.task_done()

    def run(self, indices):
        indices = list(indices)
        results = {}
        if not indices:
            return results
        job_queue = queue.Queue()
        for index in indices:
            job_queue.put(index)
        n_threads = min(self.workers, len(indices))
        for _ in range(n_threads):
            job_queue.put(STOP)

        if n_threads == 1:
            self._worker(job_queue, results)
        else:
            threads = [
                threading.Thread(target=self._worker, args=(job_queue, results), daemon=True)
                for _ in range(n_threads)
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()

        if self._error is not None:
            error, self._error = self._error, None
            with self._lock:
                self._m_cancelled = False
            raise error
        logger.debug(
            "ran {} items on {} threads: {}".format(len(indices), n_threads, dict(self.counts))
        )
        return results
