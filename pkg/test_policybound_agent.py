import threading
from collections import namedtuple

import pytest

import policybound.config as config
from policybound.errors import ConfigError
from policybound.policybound_agent import ReplicationAgent

Result = namedtuple("Result", ["value", "status"])


#################### Fixtures ####################
# https://docs.pytest.org/en/stable/fixture.html


@pytest.fixture
def no_thread_cap(monkeypatch):
    monkeypatch.delenv(config.THREADS_ENV, raising=False)


@pytest.mark.parametrize("workers", [1, 3, 8])
def test_results_keyed_by_index(no_thread_cap, workers):
    agent = ReplicationAgent(lambda i: i * i, workers=workers)
    results = agent.run(range(20))
    assert results == {i: i * i for i in range(20)}
    assert agent.counts == {"done": 20}


def test_runs_on_several_threads(no_thread_cap):
    seen = set()
    barrier = threading.Barrier(3, timeout=10)

    def work(i):
        seen.add(threading.get_ident())
        if i < 3:
            barrier.wait()
        return i

    ReplicationAgent(work, workers=3).run(range(6))
    assert len(seen) == 3


def test_status_counts(no_thread_cap):
    agent = ReplicationAgent(lambda i: Result(i, "rejected" if i % 3 == 0 else "accepted"), workers=2)
    agent.run(range(9))
    assert agent.counts == {"rejected": 3, "accepted": 6}


def test_empty_run(no_thread_cap):
    assert ReplicationAgent(lambda i: i, workers=2).run([]) == {}


@pytest.mark.parametrize("workers", [1, 4])
def test_first_error_is_reraised(no_thread_cap, workers):
    def work(i):
        if i == 5:
            raise KeyError(i)
        return i

    agent = ReplicationAgent(work, workers=workers)
    with pytest.raises(KeyError):
        agent.run(range(10))
    # The agent is usable again after a failed run.
    assert agent.run(range(3)) == {0: 0, 1: 1, 2: 2}


def test_thread_cap(monkeypatch):
    monkeypatch.setenv(config.THREADS_ENV, "2")
    assert ReplicationAgent(lambda i: i, workers=16).workers == 2
    monkeypatch.setenv(config.THREADS_ENV, "many")
    with pytest.raises(ConfigError):
        config.resolve_workers(4)


def test_default_workers(no_thread_cap):
    assert config.resolve_workers() >= 1
    with pytest.raises(ConfigError):
        config.resolve_workers(0)
