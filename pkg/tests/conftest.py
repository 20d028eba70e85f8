import numpy as np
import pytest

import specshape as ss


@pytest.fixture
def rng():
    return np.random.default_rng(20240915)


@pytest.fixture
def tiny_axis():
    return np.array([900.0, 905.0, 910.0])


@pytest.fixture
def fx17_axis():
    return np.linspace(900.0, 1700.0, 229)


def make_cube(values, wavelengths=None, **kwargs) -> ss.SpectralCube:
    data = np.asarray(values, dtype=np.float32)
    if wavelengths is None:
        wavelengths = 900.0 + 5.0 * np.arange(data.shape[2])
    return ss.SpectralCube(wavelengths=wavelengths, data=data, **kwargs)


@pytest.fixture
def warm_kernel():
    """Compile the classify kernel once on a trivial cube (cached afterwards)."""
    import synthgen

    cube, _ = synthgen.block_cube(2, 7, noise=0.0, seed=0)
    crs = ss.bind(ss.parse_rules(synthgen.author_rules()), synthgen.WAVELENGTHS)
    ss.classify_cube(cube, crs)
    return True
