import numpy as np
import pytest

from nephroscope import synth
from nephroscope.data import Dataset
from nephroscope.pipeline import run_training
from nephroscope.schema import ckd_schema

# Reduced grids so the full pipeline stays fast in tests; structure is the
# same as the shipped defaults.
FAST_CONFIG = {
    "cv_folds": 3,
    "grids": {
        "logistic": {"l2_penalty": [0.01]},
        "tree": {"max_depth": [6], "min_samples_leaf": [2]},
        "forest": {
            "n_trees": [120],
            "max_depth": [8],
            "min_samples_leaf": [4],
            "max_features": [5],
        },
        "boosted": {
            "n_rounds": [80],
            "learning_rate": [0.1],
            "max_depth": [3],
            "min_samples_leaf": [1],
        },
    },
}

TINY_CONFIG = {
    "cv_folds": 2,
    "kinds": ["logistic", "forest"],
    "grids": {
        "logistic": {"l2_penalty": [0.01]},
        "forest": {
            "n_trees": [30],
            "max_depth": [6],
            "min_samples_leaf": [4],
            "max_features": [5],
        },
    },
}


@pytest.fixture(scope="session")
def schema():
    return ckd_schema()


@pytest.fixture(scope="session")
def cohort() -> Dataset:
    return synth.generate(n=1500, seed=7)


@pytest.fixture(scope="session")
def small_cohort() -> Dataset:
    return synth.generate(n=491, seed=7)


@pytest.fixture(scope="session")
def trained(cohort):
    """Full pipeline result on the synthetic cohort, shared across tests."""

    return run_training(cohort, FAST_CONFIG)


@pytest.fixture(scope="session")
def artifacts_dir(tmp_path_factory, trained, small_cohort):
    """Saved model file plus a raw pool CSV, as the CLI would emit them."""

    from nephroscope.models import save_model

    d = tmp_path_factory.mktemp("artifacts")
    save_model(d / "model.json", trained.bundle)
    synth.write_csv(d / "pool.csv", small_cohort)
    return d


def toy_scaled_dataset(X, y=None, schema_override=None):
    """Small helper for synthetic fixed-feature datasets in model space."""

    from nephroscope.schema import NUMERIC, FeatureSchema, FeatureSpec

    X = np.asarray(X, dtype=float)
    if schema_override is None:
        specs = tuple(FeatureSpec(f"f{i}", NUMERIC) for i in range(X.shape[1]))
        schema_override = FeatureSchema(specs=specs)
    return Dataset(
        schema=schema_override,
        X=X,
        y=None if y is None else np.asarray(y, dtype=np.int8),
        provenance="scaled",
    )
