import itertools

import numpy as np
import pytest

from ampsizer.errors import DimensionMismatch
from ampsizer.opt import ParetoArchive, crowding_distance, dominates, nondominated_sort


def brute_fronts(F):
    """Peel fronts by checking every pair directly."""
    left = list(range(len(F)))
    fronts = []
    while left:
        front = [i for i in left
                 if not any(all(F[j] >= F[i]) and any(F[j] > F[i]) for j in left if j != i)]
        fronts.append(front)
        left = [i for i in left if i not in front]
    return fronts


def random_instance(rng):
    n = int(rng.integers(1, 51))
    m = int(rng.integers(1, 8))
    if rng.random() < 0.3:          # coarse grid: many ties and duplicates
        return rng.integers(0, 4, size=(n, m)).astype(float)
    return rng.random((n, m))


def test_sort_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(200):
        F = random_instance(rng)
        assert nondominated_sort(F) == brute_fronts(F)


def test_dominates_cases():
    assert dominates((2, 2), (1, 2))
    assert not dominates((1, 2), (1, 2))
    assert not dominates((2, 1), (1, 2))
    with pytest.raises(DimensionMismatch):
        dominates((1, 2), (1, 2, 3))


def test_sort_rejects_empty():
    with pytest.raises(ValueError):
        nondominated_sort([])


def test_crowding_boundaries_infinite():
    F = [(0.0, 3.0), (1.0, 2.0), (2.0, 1.0), (3.0, 0.0)]
    cd = crowding_distance(F)
    assert np.isinf(cd[0]) and np.isinf(cd[3])
    # interior: (2 - 0)/3 + (3 - 1)/3 for both objectives
    assert cd[1] == pytest.approx(4 / 3) and cd[2] == pytest.approx(4 / 3)


def test_crowding_small_sets():
    assert np.isinf(crowding_distance([(1.0, 2.0), (2.0, 1.0)])).all()


def test_archive_keeps_only_nondominated():
    rng = np.random.default_rng(3)
    pts = rng.random((300, 3))
    arc = ParetoArchive()
    for k, p in enumerate(pts):
        arc.add(p, k)
    front = set(brute_fronts(pts)[0])
    assert {payload for _, payload in arc} == front
    for a, b in itertools.permutations(arc.objectives, 2):
        assert not dominates(a, b)


def test_archive_rejects_duplicates_and_dominated():
    arc = ParetoArchive()
    assert arc.add((1.0, 1.0))
    assert not arc.add((1.0, 1.0))
    assert not arc.add((0.5, 0.5))
    assert arc.add((2.0, 2.0))
    assert len(arc) == 1


def test_archive_capacity_drops_crowded():
    arc = ParetoArchive(capacity=3)
    for p in [(0.0, 4.0), (4.0, 0.0), (2.0, 2.0), (2.1, 1.9)]:
        arc.add(p)
    assert len(arc) == 3
    assert (0.0, 4.0) in arc.objectives and (4.0, 0.0) in arc.objectives
