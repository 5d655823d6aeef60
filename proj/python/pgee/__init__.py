"""Penalized GEE for clustered and longitudinal data.

Thin Python layer over the C++ core.  Structured results (CV surfaces,
paths, simulation reports) come back as plain dictionaries.
"""

import json

import numpy as np

from ._core import (
    DataError,
    Dataset,
    Fit,
    NumericalError,
    Scaling,
    bootstrap_se,
    design_presets,
    fit,
    implied_beta,
    load_csv,
    parse_csv,
    simulate,
    standardize,
    true_beta,
)
from . import _core

__all__ = [
    "DataError",
    "Dataset",
    "Fit",
    "NumericalError",
    "Scaling",
    "bootstrap_se",
    "cross_validate",
    "design_presets",
    "fit",
    "from_long",
    "implied_beta",
    "load_csv",
    "parse_csv",
    "path",
    "simulate",
    "standardize",
    "study",
    "true_beta",
]


def from_long(subject, time, y, X, names=None):
    """Build a Dataset from long-format arrays in any row order.

    Subjects keep their first-appearance order; rows are sorted by time
    within each subject.
    """
    subject = np.asarray(subject).astype(str)
    time = np.asarray(time, dtype=float)
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if not (len(subject) == len(time) == len(y) == X.shape[0]):
        raise ValueError("subject, time, y and X must have the same number of rows")
    ids, first = np.unique(subject, return_index=True)
    order_of_id = {sid: rank for rank, sid in enumerate(ids[np.argsort(first)])}
    rank = np.array([order_of_id[s] for s in subject])
    rows = np.lexsort((time, rank))
    sizes = np.bincount(rank, minlength=len(order_of_id)).tolist()
    subject_ids = sorted(order_of_id, key=order_of_id.get)
    if names is None:
        names = [f"x{j + 1}" for j in range(X.shape[1])]
    return Dataset(subject_ids, sizes, time[rows].tolist(), y[rows], X[rows], list(names))


def cross_validate(data, penalty, lambdas=(), alphas=(), n_lambda=30, family="gaussian",
                   working="independence", threads=1):
    """Leave-one-subject-out CV surface with the `min` and `one_se` choices."""
    return json.loads(_core.cv_json(data, penalty, list(lambdas), list(alphas), n_lambda, family,
                                    working, threads))


def path(data, penalty, alpha=1.0, lambdas=(), n_lambda=30, family="gaussian",
         working="independence"):
    return json.loads(_core.path_json(data, penalty, alpha, list(lambdas), n_lambda, family, working))


def study(design, penalties, replicates, seed, n_lambda=10, threads=1):
    """Monte-Carlo study on a preset design; see design_presets()."""
    return json.loads(_core.study_json(design, list(penalties), replicates, seed, n_lambda, threads))
