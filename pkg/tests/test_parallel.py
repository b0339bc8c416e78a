import threading

import pytest

from oddeven_kalman.parallel import ForkJoinPool, available_cores


@pytest.mark.parametrize("threads,chunk", [(1, 10), (2, 1), (4, 3), (8, 100)])
def test_every_index_once(threads, chunk):
    hits = [0] * 57
    with ForkJoinPool(threads, chunk) as pool:
        pool.parallel_for(len(hits), lambda i: hits.__setitem__(i, hits[i] + 1))
    assert hits == [1] * 57


def test_sequential_runs_inline_in_order():
    seen = []
    with ForkJoinPool(1) as pool:
        pool.parallel_for(5, lambda i: seen.append((i, threading.get_ident())))
    assert [i for i, _ in seen] == list(range(5))
    assert {t for _, t in seen} == {threading.get_ident()}


def test_lowest_chunk_error_wins():
    def body(i):
        if i in (3, 40):
            raise RuntimeError(str(i))

    with ForkJoinPool(4, chunk=2) as pool:
        with pytest.raises(RuntimeError, match="^3$"):
            pool.parallel_for(50, body)


def test_bad_arguments():
    with pytest.raises(ValueError):
        ForkJoinPool(0)
    with pytest.raises(ValueError):
        ForkJoinPool(2, chunk=0)


def test_available_cores():
    assert available_cores() >= 1
