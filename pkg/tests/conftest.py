import math

import numpy as np
import pytest

from optolqg import DissipationModel, PhysicalParams


@pytest.fixture(scope="session")
def room_temp_params():
    """Measurement-cooling benchmark point (membrane-in-cavity scale)."""
    return PhysicalParams(
        omega_m=2 * math.pi * 1.139e6,
        q_m=1.03e9,
        kappa=2 * math.pi * 15.9e6,
        g=3.1e5,
        eta=0.77,
        theta=math.pi / 2,
        temperature=300.0,
        model=DissipationModel.NON_RWA,
    )


def random_params(rng, index, *, q_m_range=(1.5, 5.0), kappa_ratio=(-0.5, 2.0),
                  g_ratio=(-2.0, 0.5), temperature=300.0):
    """Log-uniform parameter draws spanning weak to strong coupling."""
    omega_m = 10 ** rng.uniform(4, 8)
    g = omega_m * 10 ** rng.uniform(*g_ratio)
    g = min(max(g, 1e3), 1e7)
    return PhysicalParams(
        omega_m=omega_m,
        q_m=10 ** rng.uniform(*q_m_range),
        kappa=omega_m * 10 ** rng.uniform(*kappa_ratio),
        g=g,
        eta=rng.uniform(0.3, 1.0),
        theta=rng.uniform(0.1, 0.9) * math.pi,
        temperature=temperature,
        model=(DissipationModel.RWA if index % 2 else DissipationModel.NON_RWA),
    )


def assert_close(actual, expected, rtol, label=""):
    actual, expected = np.asarray(actual), np.asarray(expected)
    err = np.linalg.norm(actual - expected) / max(1e-300, np.linalg.norm(expected))
    assert err <= rtol, f"{label} relative error {err:.3e} > {rtol:.1e}"
