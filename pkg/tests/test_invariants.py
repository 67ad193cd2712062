import pytest

from critlat.invariants import exhaustive_window_check


@pytest.mark.parametrize("L", [0, 1, 4, 8])
def test_exhaustive_counts(L):
    walks, failures = exhaustive_window_check(L)
    assert walks == 1 + sum(4 ** (k - 1) for k in range(1, L + 1))
    assert failures == 0


def test_range_validation():
    with pytest.raises(ValueError):
        exhaustive_window_check(15)
