import numpy as np
import pytest

from magiciv import Dataset, ScenarioConfig, gen_dataset

try:  # small-matrix workloads: one BLAS thread is fastest and keeps CI quiet
    from threadpoolctl import threadpool_limits

    _BLAS_LIMIT = threadpool_limits(limits=1)
except ImportError:  # pragma: no cover
    _BLAS_LIMIT = None


def make_sim_dataset(
    p=4, n=400, c=8.0, seed=0, scenario="I", beta_true=0.0, rep=0, **kw
) -> Dataset:
    """Simulated dataset with strong-ish interactions, for unit fixtures."""
    cfg = ScenarioConfig(p=p, n=n, c=c, seed=seed, scenario=scenario, beta_true=beta_true, **kw)
    ds, _ = gen_dataset(cfg, rep)
    return ds


def make_binary_dataset(n=24, p=3, seed=1, y=None, d=None) -> Dataset:
    """Deterministic binary instrument matrix with optional custom y/d."""
    rng = np.random.default_rng(seed)
    z = (rng.random((n, p)) < 0.5).astype(float)
    # guarantee variation in every column
    for j in range(p):
        z[0, j], z[1, j] = 0.0, 1.0
    if d is None:
        d = z[:, 0] * z[:, 1] + 0.1 * rng.standard_normal(n)
    if y is None:
        y = 0.5 * d + 0.3 * z[:, 0] + 0.1 * rng.standard_normal(n)
    return Dataset(y=np.asarray(y, dtype=float), d=np.asarray(d, dtype=float), z=z)


@pytest.fixture
def sim_dataset():
    return make_sim_dataset()
