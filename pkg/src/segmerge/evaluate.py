"""Prediction error metrics against ground truth and against labels."""

from __future__ import annotations

import numpy as np

from .model import Dataset, FittedModel, RankRect


class MissingTruthError(ValueError):
    pass


def _truth(dataset: Dataset) -> np.ndarray:
    if dataset.truth is None:
        raise MissingTruthError("dataset has no noiseless truth vector")
    return dataset.truth


def predict(model, X):
    """Predictions of any fitted model (merging or baseline) at the rows of ``X``."""
    return model.predict(X)


def oracle_mse(model, dataset: Dataset) -> float:
    """Mean squared gap between predictions and the noiseless function values."""
    truth = _truth(dataset)
    diff = model.predict(dataset.features) - truth
    return float(np.mean(diff * diff))


def empirical_risk(model, dataset: Dataset) -> float:
    """Mean squared gap between predictions and the observed labels."""
    diff = model.predict(dataset.features) - dataset.labels
    return float(np.mean(diff * diff))


def per_rect_err(model: FittedModel, dataset: Dataset, rect: RankRect) -> float:
    """Sum of squared prediction-truth gaps over samples whose rank cell lies in ``rect``."""
    truth = _truth(dataset)
    inside = rect.contains(model.query_cells(dataset.features))
    if not np.any(inside):
        return 0.0
    diff = model.predict(dataset.features[inside]) - truth[inside]
    return float(diff @ diff)
