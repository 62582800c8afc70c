"""
Pytest configuration and shared fixtures
"""

import pytest
import sys
from pathlib import Path

import numpy as np
import pandas as pd

# Add project root to path for imports
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.api.models import AbConfig, BootstrapConfig, SimSpec  # noqa: E402
from src.data_processing.dataset import Dataset  # noqa: E402
from src.models.resampling import derive_substream  # noqa: E402
from src.simulation.generators import generate  # noqa: E402


@pytest.fixture(scope="session")
def project_paths():
    """Project directory paths"""
    root = Path(__file__).parent.parent
    return {
        "root": root,
        "src": root / "src",
        "configs": root / "configs",
        "tests": root / "tests",
    }


@pytest.fixture
def small_config():
    """Adaptive test settings small enough for unit tests"""
    return AbConfig(lam=2.0, bootstrap=BootstrapConfig(b=99, seed=11, workers=1))


@pytest.fixture(scope="session")
def hand_dataset():
    """Four rows with hand-computable regressions: S=(0,0,1,1), M=(1,2,3,5)"""
    return Dataset.from_arrays(
        exposure=[0, 0, 1, 1],
        mediators=[1, 2, 3, 5],
        outcome=[1, 3, 2, 6],
    )


@pytest.fixture(scope="session")
def six_row_dataset():
    """Six rows with one covariate, used against normal-equations oracles"""
    return Dataset.from_arrays(
        exposure=[0, 0, 0, 1, 1, 1],
        mediators=[1, 2, 2, 3, 5, 4],
        outcome=[2, 1, 4, 3, 6, 5],
        covariates=[0, 1, 2, 0, 1, 3],
        covariate_names=("X1",),
    )


@pytest.fixture(scope="session")
def simulate():
    """
    Factory for simulated datasets

    simulate(scenario, n, alpha_s, beta_m, seed, **spec_fields) -> Dataset
    """
    def make(scenario="linear", n=200, alpha_s=0.0, beta_m=0.0, seed=1, **fields):
        spec = SimSpec(scenario=scenario, n=n, alpha_s=alpha_s, beta_m=beta_m, **fields)
        return generate(spec, derive_substream(seed, 0))
    return make


@pytest.fixture
def write_csv(tmp_path):
    """Write a Dataset's role columns (intercept excluded) to a CSV file"""
    def write(dataset, name="data.csv"):
        frame = dataset.to_frame().drop(columns=["intercept"])
        path = tmp_path / name
        frame.to_csv(path, index=False)
        return path
    return write


def ols_oracle(design, response):
    """Least-squares coefficients and residuals via numpy, independent of the package"""
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    coef, *_ = np.linalg.lstsq(design, response, rcond=None)
    return coef, response - design @ coef


@pytest.fixture(scope="session")
def oracle():
    return ols_oracle


@pytest.fixture(scope="session")
def frame_of():
    """DataFrame helper for CSV fixtures"""
    def build(**columns):
        return pd.DataFrame(columns)
    return build
