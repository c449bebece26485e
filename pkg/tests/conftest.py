import numpy as np
import pytest

from aok.core import (
    Column,
    ColumnKind,
    FeatureMatrix,
    OcclusionLabel,
    Provenance,
)


def make_matrix(values, y, kinds=None, missing=None, names=None):
    """Build a FeatureMatrix straight from arrays, for learner tests.

    Categorical columns get their categories from the distinct codes
    present, stringified, which is enough for schema checks.
    """
    values = np.asarray(values, dtype=float)
    n, d = values.shape
    if kinds is None:
        kinds = [ColumnKind.NUMERIC] * d
    if missing is None:
        missing = np.zeros((n, d), dtype=bool)
    else:
        missing = np.asarray(missing, dtype=bool)
    cols = []
    for j, kind in enumerate(kinds):
        cats = ()
        if kind is ColumnKind.CATEGORICAL:
            cats = tuple(
                str(int(v)) for v in sorted(set(values[~missing[:, j], j]))
            )
        name = names[j] if names else f"x{j}"
        cols.append(
            Column(name=name, kind=kind, provenance=Provenance.CLINICAL,
                   categories=cats)
        )
    labels = tuple(
        OcclusionLabel.COMPLETE_OCCLUSION if int(t) == 1
        else OcclusionLabel.PARTIAL_OCCLUSION
        for t in y
    )
    case_ids = tuple(f"T{i:04d}" for i in range(n))
    return FeatureMatrix(
        columns=tuple(cols),
        values=values,
        missing=missing,
        labels=labels,
        case_ids=case_ids,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)
