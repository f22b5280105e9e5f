# scripts/test_roc.py
import numpy as np
import pytest

from cgap_errors import ValidationError
from roc import auc, auroc, roc_curve


def test_curve_collapses_ties():
    fpr, tpr, thresholds = roc_curve([0.9, 0.8, 0.8, 0.1], [1, 1, 0, 0])
    assert fpr.tolist() == [0.0, 0.0, 0.5, 1.0]
    assert tpr.tolist() == [0.0, 0.5, 1.0, 1.0]
    assert np.isinf(thresholds[0])
    assert thresholds[1:].tolist() == [0.9, 0.8, 0.1]
    assert auc(fpr, tpr) == pytest.approx(0.875)


@pytest.mark.parametrize("scores, expected", [
    ([0.9, 0.7, 0.3, 0.1], 1.0),
    ([0.1, 0.3, 0.7, 0.9], 0.0),
    ([0.5, 0.5, 0.5, 0.5], 0.5),
])
def test_auroc_extremes(scores, expected):
    assert auroc(scores, [1, 1, 0, 0]) == pytest.approx(expected)


def test_roc_needs_both_classes():
    with pytest.raises(ValidationError):
        auroc([0.1, 0.2], [1, 1])
    with pytest.raises(ValidationError):
        auroc([0.1, 0.2, 0.3], [1, 0])
