import numpy as np
import pytest

from gymlab.space import Interval, PointCloud, check_same_space, point_cloud


def test_interval_weights_and_edges():
    X = Interval(-1.0, 1.0, 4)
    np.testing.assert_array_equal(X.weights, [0.5] * 4)
    assert X.edges[0] == -1.0 and X.edges[-1] == 1.0
    assert X.total_mass == 2.0


def test_cell_of_boundaries():
    X = Interval(0.0, 1.0, 4)
    assert X.cell_of(0.0) == 0
    assert X.cell_of(0.5) == 2
    assert X.cell_of(1.0) == 3


@pytest.mark.parametrize("args", [(1.0, 0.0, 3), (0.0, 1.0, 0), (0.0, np.inf, 2), (0.0, 1.0, 1.5)])
def test_interval_rejects(args):
    with pytest.raises(ValueError):
        Interval(*args)


def test_point_cloud_validation():
    pc = point_cloud(["a", "b"], [1.0, 2.0], [[0, 1], [1, 0]])
    assert pc.ncells == 2 and pc.total_mass == 3.0
    with pytest.raises(ValueError):
        point_cloud(["a", "b"], [1.0, 0.0], [[0, 1], [1, 0]])
    with pytest.raises(ValueError):
        point_cloud(["a", "b", "c"], [1, 1, 1], [[0, 1, 5], [1, 0, 1], [5, 1, 0]])


def test_same_space():
    check_same_space(Interval(0, 1, 3), Interval(0, 1, 3))
    with pytest.raises(ValueError):
        check_same_space(Interval(0, 1, 3), Interval(0, 1, 4))
    assert not PointCloud(("a",), np.ones(1), np.zeros((1, 1))).same_as(Interval(0, 1, 1))
