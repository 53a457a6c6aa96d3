"""Estimator plumbing and input validation helpers.

The estimator classes in this package follow the scikit-learn convention
(``fit`` returns ``self``, hyperparameters live on the instance, fitted
attributes carry a trailing underscore) so they compose with pipelines and
grid searches without depending on scikit-learn itself.
"""

import inspect

import numpy as np


class ParamsMixin:
    """get_params/set_params over the keyword arguments of ``__init__``."""

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [n for n in sig.parameters if n != "self"]

    def get_params(self, deep=True):
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(f"unknown parameter {name!r} for {type(self).__name__}")
            setattr(self, name, value)
        return self


def as_float_matrix(X, name="X"):
    """Coerce to a finite 2-d float64 array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def as_binary_labels(y, n=None, name="y"):
    """Coerce to a 0/1 int array, optionally checking its length."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-d, got shape {y.shape}")
    if n is not None and y.shape[0] != n:
        raise ValueError(f"{name} has {y.shape[0]} rows, expected {n}")
    vals = np.unique(y)
    if not np.all(np.isin(vals, (0, 1))):
        raise ValueError(f"{name} must contain only 0/1 labels, got values {vals}")
    return y.astype(np.int64)


def as_prob_vector(p, name="p"):
    """Coerce to a 1-d probability vector with at least two entries."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"{name} must be 1-d, got shape {p.shape}")
    if p.shape[0] < 2:
        raise ValueError(f"{name} needs at least 2 classes, got {p.shape[0]}")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name} contains non-finite values")
    return p
